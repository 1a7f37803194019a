use wildtag::log::{format_log, BootMarker};
use wildtag::media::{Media, MediaGeometry};
use wildtag::tagdef::{compile_config_block, decompile_config_block, parse_tagdef, SAMPLE_DEFINITION};
use wildtag::wire::{build_packet, parse_packet, DataItem, TagState};

fn unhex(s: &str) -> Vec<u8> {
    s.split_whitespace().map(|b| u8::from_str_radix(b, 16).unwrap()).collect()
}

#[test]
fn minimal_tag_packet() {
    let items = vec![
        DataItem::TagState(TagState {
            will_listen: true,
            has_data: false,
            config_index: 1,
        }),
        DataItem::TagId(42),
    ];
    let bytes = unhex("01 81 18 2a 00 00 00 00 00 00 00");
    assert_eq!(build_packet(&items).unwrap(), bytes);
    assert_eq!(parse_packet(&bytes).unwrap(), items);
}

#[test]
fn fresh_log_image() {
    let mut log = format_log(Media::new(MediaGeometry::nor(2)), 0x2A, 0x5F5E_1000, 0).unwrap();
    log.log_boot(BootMarker { boot_count: 1, firmware_id: 0x0102 }, &[]).unwrap();
    log.flush().unwrap();
    let want = unhex(
        "01 16 54 4c 4f 47 01 00 2a 00 00 00 00 00 00 00
         00 10 5e 5f 00 00 00 00 03 04 01 00 02 01",
    );
    let img = log.media().image();
    assert_eq!(&img[..want.len()], &want[..]);
    assert!(img[want.len()..].iter().all(|&b| b == 0xFF));
}

#[test]
fn sample_block_is_stable() {
    let def = parse_tagdef(SAMPLE_DEFINITION).unwrap();
    let block = compile_config_block(&def);
    assert_eq!(block.len(), 183);
    assert_eq!(decompile_config_block(&block).unwrap(), def);
}
