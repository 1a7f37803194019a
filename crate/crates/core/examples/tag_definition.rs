//! Parses a tag definition, checks it, compiles it into a config block and
//! decompiles the block again. Pass a file path to use your own definition.

use wildtag::tagdef::{
    compile_config_block, decompile_config_block, parse_tagdef, slot_action, SlotAction,
    SAMPLE_DEFINITION,
};

fn main() {
    let text = match std::env::args().nth(1) {
        Some(p) => std::fs::read_to_string(p).expect("readable definition"),
        None => SAMPLE_DEFINITION.to_string(),
    };
    let def = match parse_tagdef(&text) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("definition error at {e}");
            std::process::exit(1);
        }
    };
    println!("tag {} period {} ms", def.tag_id, def.period_ms);
    for c in &def.configurations {
        let row: String = (0..c.cycle_length)
            .map(|s| match slot_action(c, s as u64) {
                SlotAction::Idle => '.',
                SlotAction::Tx { setup, .. } => setup.chars().next().unwrap_or('?'),
            })
            .collect();
        println!("config {} [{row}]", c.index);
    }
    let block = compile_config_block(&def);
    println!("config block: {} bytes", block.len());
    let back = decompile_config_block(&block).unwrap();
    assert_eq!(back, def);
    assert_eq!(parse_tagdef(&back.to_text()).unwrap(), def);
    println!("decompiled definition matches\n\n{}", back.to_text());

    let broken = text.replace("every 16 from 15", "every 2 from 0");
    if let Err(e) = parse_tagdef(&broken) {
        println!("a conflicting schedule is rejected: {e}");
    }
}
