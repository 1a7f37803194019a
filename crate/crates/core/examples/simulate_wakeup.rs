//! One tag beside one logging base station for a minute: the station wakes the
//! tag into its upload configuration, corrects its clock and collects items.

use wildtag::sim::{parse_scenario, run};

const SCENARIO: &str = "
[scenario]
seed = 1
duration_s = 60

[tag 42]
def = builtin:sample
clock_offset_s = 5

[station 1]
position = 10, 0
intent = adjust-clock
intent = acknowledge
intent = wakeup 42 -> 1
";

fn main() {
    let sc = parse_scenario(SCENARIO, None).unwrap();
    let out = run(&sc).unwrap();
    for line in out.trace.iter().filter(|l| !l.contains("ping") && !l.contains("detect")) {
        println!("{line}");
    }
    let tag = out.tag(42).unwrap();
    let c = tag.log().cursor();
    println!(
        "\nconfig {} clock error {} us, log {} bytes, acked to {}",
        tag.config(),
        tag.clock_error_us(),
        c.write_addr,
        c.ack_cursor
    );
    println!("station holds {} records", out.station(1).unwrap().store().len());
    if let Some(dir) = std::env::args().nth(1) {
        out.save(std::path::Path::new(&dir)).unwrap();
        println!("artifacts written to {dir}");
    }
}
