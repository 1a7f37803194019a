//! A tag with a backlog of 500 items uploads over a channel that loses 30% of
//! packets in each direction and loses power part way. Every item arrives and
//! the re-sent duplicates stay within one flash sector.

use std::collections::BTreeMap;

use wildtag::log::item_type;
use wildtag::sim::{run, Mobility, Scenario, StationSpec, TagSpec};
use wildtag::station::Intent;
use wildtag::tagdef::{parse_tagdef, UPLOADER_DEFINITION};
use wildtag::wire::WakeupTarget;

fn main() {
    let mut sc = Scenario::new(5, 3600);
    sc.channels.short.loss = 0.3;
    let mut tag = TagSpec::new(parse_tagdef(UPLOADER_DEFINITION).unwrap());
    tag.prefill = 500;
    tag.prefill_bytes = 32;
    tag.reboots_us = vec![300_000_000];
    sc.tags.push(tag);
    let mut st = StationSpec::new(1);
    st.mobility = Mobility::fixed(5.0, 0.0);
    st.intents = vec![
        Intent::AcknowledgeLogItems,
        Intent::Wakeup {
            tag: None,
            target: WakeupTarget::Highest,
        },
    ];
    sc.stations.push(st);

    let out = run(&sc).unwrap();
    let records = out.station(1).unwrap().store().records().unwrap();
    let reboot_us = 300_000_000;
    let before: BTreeMap<u32, usize> = records
        .iter()
        .filter(|r| r.rx_time_us < reboot_us)
        .map(|r| (r.address, 2 + r.payload.len()))
        .collect();
    let resent: Vec<(u32, usize)> = records
        .iter()
        .filter(|r| r.rx_time_us >= reboot_us && before.contains_key(&r.address))
        .map(|r| (r.address, 2 + r.payload.len()))
        .collect();
    let span = match (resent.iter().map(|r| r.0).min(), resent.iter().map(|r| r.0 + r.1 as u32).max()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0,
    };
    let distinct: std::collections::BTreeSet<u32> = records.iter().map(|r| r.address).collect();
    let backlog = records.iter().filter(|r| r.item_type == item_type::OPAQUE).map(|r| r.address);
    let backlog: std::collections::BTreeSet<u32> = backlog.collect();
    println!(
        "records received {}, distinct items {}, backlog items {}",
        records.len(),
        distinct.len(),
        backlog.len()
    );
    println!("items re-sent after the reboot: {}, spanning {span} bytes", resent.len());
    let tag = out.tag(7).unwrap();
    println!(
        "tag boots {}, ack cursor {} of {}",
        tag.boot_count(),
        tag.log().cursor().ack_cursor,
        tag.log().cursor().write_addr
    );
}
