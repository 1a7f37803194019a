use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn wildtag(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wildtag"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "fixtures", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn compile_and_decompile_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = wildtag(&["compile", &fixture("sample.tagdef"), "-o", "s.blk"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let o = wildtag(&["decompile", "s.blk", "-o", "s.tagdef"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let o = wildtag(&["compile", "s.tagdef", "-o", "t.blk"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let a = std::fs::read(dir.path().join("s.blk")).unwrap();
    let b = std::fs::read(dir.path().join("t.blk")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulate_ingest_extract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = wildtag(&["simulate", &fixture("wakeup.scenario"), "-o", "out"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace.txt", "tag-42.img", "station-1.rec"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }

    let o = wildtag(&["decode-log", "out/tag-42.img"], d);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("log tag=42 "));

    let o = wildtag(&["ingest", "items.wis", "out/station-1.rec", "out/tag-42.img"], d);
    assert_eq!(o.status.code(), Some(0));
    // a second ingestion adds nothing
    let o = wildtag(&["ingest", "items.wis", "out/tag-42.img"], d);
    assert!(stdout(&o).contains("inserted=0 "), "{}", stdout(&o));

    let o = wildtag(&["extract", "items.wis", "--tag", "42"], d);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("boot 1"));

    let o = wildtag(&["extract", "items.wis", "--tag", "42", "--sensor", "acceleration"], d);
    assert_eq!(o.status.code(), Some(0));
    let rows = stdout(&o).lines().filter(|l| !l.starts_with('#')).count();
    assert!(rows > 100, "{rows} rows");
}

#[test]
fn lifespan_of_a_pinger() {
    let dir = tempfile::tempdir().unwrap();
    let o = wildtag(&["lifespan", "--pinger-ms", "8000", "--battery", "CR1620"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("CR1620 81.0 mAh:"), "{}", stdout(&o));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.tagdef"), "[tag]\nid = 1\nperiod_ms = zero\n").unwrap();
    std::fs::write(d.join("bad.blk"), b"not a config block").unwrap();
    std::fs::write(d.join("bad.img"), vec![0xAB; 4096]).unwrap();

    let code = |args: &[&str]| wildtag(args, d).status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["no-such-command"]), Some(1));
    assert_eq!(code(&["compile", "bad.tagdef", "-o", "x.blk"]), Some(1));
    assert_eq!(code(&["lifespan", "--battery", "AA"]), Some(1));
    assert_eq!(code(&["compile", "missing.tagdef", "-o", "x.blk"]), Some(2));
    assert_eq!(code(&["extract", "missing.wis", "--tag", "1"]), Some(2));
    assert_eq!(code(&["decompile", "bad.blk"]), Some(3));
    assert_eq!(code(&["decode-log", "bad.img"]), Some(3));
    assert_eq!(code(&["ingest", "s.wis", "bad.img"]), Some(3));
}
