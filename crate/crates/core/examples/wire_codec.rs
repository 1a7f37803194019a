//! Builds a tag uplink and a base reply, prints the bytes and parses them back.

use wildtag::wire::{
    decode_header, encode_header, parse_packet, DataItem, LogItemCarrier, LogState, Packet, Source,
    TagState, WakeupTarget,
};

fn dump(label: &str, bytes: &[u8]) {
    let hex: Vec<String> = bytes.iter().map(|b| format!("{b:02x}")).collect();
    println!("{label} ({} bytes): {}", bytes.len(), hex.join(" "));
}

fn main() {
    for (t, len) in [(0u32, 1usize), (6, 40), (40, 3), (300, 200)] {
        let h = encode_header(t, len).unwrap();
        let (t2, len2, used) = decode_header(&h).unwrap();
        println!("header type={t} len={len} -> {h:02x?} -> ({t2}, {len2}, {used})");
    }

    let uplink = Packet::build(
        Source::Tag,
        &[
            DataItem::TagState(TagState {
                will_listen: true,
                has_data: false,
                config_index: 1,
            }),
            DataItem::TagId(42),
            DataItem::LogState(LogState {
                write_addr: 4096,
                ack_cursor: 1024,
                creation_time: 1_600_000_000,
            }),
            DataItem::LogItem(LogItemCarrier {
                creation_time: 1_600_000_000,
                address: 1024,
                item_type: 0x10,
                payload: vec![0xAB; 12],
            }),
        ],
    )
    .unwrap();
    dump("uplink", &uplink.payload);
    for item in uplink.items().unwrap() {
        println!("  {item:?}");
    }

    let minimal = Packet::build(
        Source::Tag,
        &[
            DataItem::TagState(TagState {
                will_listen: false,
                has_data: false,
                config_index: 0,
            }),
            DataItem::TagId(42),
        ],
    )
    .unwrap();
    dump("minimal", &minimal.payload);

    let reply = Packet::build(
        Source::Base,
        &[
            DataItem::AddressedTo(42),
            DataItem::Clock(1_600_000_123),
            DataItem::Ack(1024),
            DataItem::Wakeup(WakeupTarget::Highest),
        ],
    )
    .unwrap();
    dump("reply", &reply.payload);
    println!("  {:?}", parse_packet(&reply.payload).unwrap());
}
