//! Battery-life estimates for pingers and for the sample definition.

use wildtag::lifespan::{
    battery, estimate_lifespan, pinger_definition, EnergyParams, BATTERIES,
};
use wildtag::tagdef::{parse_tagdef, SAMPLE_DEFINITION};

fn main() {
    let p = EnergyParams::default();
    println!("{:<8} {:>9} {:>12} {:>12}", "battery", "mAh", "1/8 Hz days", "1/6 Hz days");
    for b in BATTERIES {
        let slow = estimate_lifespan(&pinger_definition(8000), b, &p).unwrap();
        let fast = estimate_lifespan(&pinger_definition(6000), b, &p).unwrap();
        println!(
            "{:<8} {:>9.1} {:>12.1} {:>12.1}",
            b.name, b.capacity_mah, slow.days, fast.days
        );
    }
    let def = parse_tagdef(SAMPLE_DEFINITION).unwrap();
    let cr = battery("CR2032").unwrap();
    let e = estimate_lifespan(&def, &cr, &p).unwrap();
    println!(
        "\nsample definition on {}: {:.1} uA average, {:.1} days",
        cr.name, e.average_current_ua, e.days
    );
}
