//! Runs a tag for twenty minutes, reads its log as if it had been recovered,
//! and prints the pressure series with altitude.

use wildtag::pipeline::{extract_series, ExtractOptions, ItemStore, STANDARD_PRESSURE_PA};
use wildtag::sim::{run, Scenario, TagSpec};
use wildtag::tagdef::{parse_tagdef, SensorKind, SAMPLE_DEFINITION};

fn main() {
    let mut sc = Scenario::new(9, 1200);
    sc.tags.push(TagSpec::new(parse_tagdef(SAMPLE_DEFINITION).unwrap()));
    let mut out = run(&sc).unwrap();
    let tag = &mut out.tags[0];
    tag.flush_log().unwrap();

    let mut store = ItemStore::new();
    let rep = store.ingest_image(tag.log().media()).unwrap();
    println!("ingested {} items", rep.inserted);

    let series = extract_series(&store, 42, SensorKind::PressureTemperature, &ExtractOptions::default())
        .unwrap()
        .with_altitude(STANDARD_PRESSURE_PA)
        .unwrap();
    let text = series.to_text();
    for line in text.lines().step_by(25) {
        println!("{line}");
    }
    let (lo, hi) = series.points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
        (lo.min(p.values[2]), hi.max(p.values[2]))
    });
    println!("{} points, altitude {lo:.1} .. {hi:.1} m", series.points.len());
}
