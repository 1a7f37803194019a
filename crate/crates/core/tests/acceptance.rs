//! Acceptance criteria, one line each. Runs without the libtest harness so the
//! lines always reach the output; exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wildtag::lifespan::{self, EnergyParams};
use wildtag::error::{LogError, WireError};
use wildtag::log::{
    format_log, item_type, iterate_items, parse_ack_checkpoint, recover, BootMarker,
    SectorHeader, ITEM_HEADER_LEN, LOG_HEADER_LEN, MAX_PAYLOAD, SECTOR_HEADER_LEN,
};
use wildtag::media::{FaultPlan, Media, MediaGeometry, ERASED};
use wildtag::pipeline::{extract_series, pressure_to_altitude, ExtractOptions, GapReason, ItemStore};
use wildtag::sensors::SensorSim;
use wildtag::sim::{parse_scenario, run, Mobility, Scenario, SimOutcome, StationSpec, TagSpec};
use wildtag::station::Intent;
use wildtag::tagdef::{
    compile_config_block, decompile_config_block, parse_tagdef, SensorKind,
    SAMPLE_DEFINITION, UPLOADER_DEFINITION,
};
use wildtag::wire::{decode_header, encode_header, WakeupTarget};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- 1

const SECTOR: usize = 4096;

fn overhead_accounting() -> Outcome {
    let g = MediaGeometry::nor(4);
    let mut log = format_log(Media::new(g), 1, 0, 0).map_err(|e| e.to_string())?;
    let payload = [0x5Au8; 64];
    loop {
        match log.append_item(item_type::OPAQUE, &payload) {
            Ok(_) => {}
            Err(LogError::Full) => break,
            Err(e) => return Err(e.to_string()),
        }
    }
    log.flush().map_err(|e| e.to_string())?;
    let (_, listing) = iterate_items(log.media()).map_err(|e| e.to_string())?;

    // independent arithmetic: whole 66-byte items after the per-sector prefix
    let item = ITEM_HEADER_LEN + 64;
    let first_prefix = 24;
    let prefix = 9;
    let per_first = (SECTOR - first_prefix) / item;
    let per_other = (SECTOR - prefix) / item;
    let gap_first = SECTOR - first_prefix - per_first * item;
    let gap_other = SECTOR - prefix - per_other * item;

    for s in 0..4 {
        let lo = (s * SECTOR) as u32;
        let hi = lo + SECTOR as u32;
        let in_sector: Vec<_> = listing.entries.iter().filter(|e| e.addr >= lo && e.addr < hi).collect();
        let headers = in_sector.iter().filter(|e| e.item_type == item_type::SECTOR_HEADER).count();
        let items: Vec<_> = in_sector.iter().filter(|e| e.item_type == item_type::OPAQUE).collect();
        let expect_items = if s == 0 { per_first } else { per_other };
        check(items.len() == expect_items, format!("sector {s}: {} items, expected {expect_items}", items.len()))?;
        check(headers == (s > 0) as usize, format!("sector {s}: {headers} sector headers"))?;
        if s > 0 {
            let h = in_sector[0];
            check(
                h.addr == lo && ITEM_HEADER_LEN + h.payload.len() == 9,
                "sector header is not 9 bytes at the sector start",
            )?;
        }
        for w in items.windows(2) {
            check(w[1].addr - w[0].addr == item as u32, "items are not packed with 2-byte headers")?;
        }
        let used_end = items.last().map(|e| e.addr as usize + item).unwrap();
        let gap = hi as usize - used_end;
        let expect_gap = if s == 0 { gap_first } else { gap_other };
        check(gap == expect_gap, format!("sector {s}: end gap {gap}, expected {expect_gap}"))?;
    }

    // worst case: 225 bytes left when a maximal 226-byte item arrives
    let mut log = format_log(Media::new(g), 1, 0, 0).map_err(|e| e.to_string())?;
    while (log.cursor().write_addr as usize) < SECTOR {
        log.append_item(item_type::OPAQUE, &[1; 100]).map_err(|e| e.to_string())?;
    }
    let big = [2u8; MAX_PAYLOAD];
    let target_free = MAX_PAYLOAD + ITEM_HEADER_LEN - 1;
    loop {
        let free = 2 * SECTOR - log.cursor().write_addr as usize;
        let fill = free - target_free;
        if fill == 0 {
            break;
        }
        let take = fill.min(MAX_PAYLOAD + ITEM_HEADER_LEN);
        let take = if fill - take > 0 && fill - take < ITEM_HEADER_LEN { take - ITEM_HEADER_LEN } else { take };
        log.append_item(item_type::OPAQUE, &vec![3; take - ITEM_HEADER_LEN])
            .map_err(|e| e.to_string())?;
    }
    let before = log.cursor().write_addr as usize;
    let at = log.append_item(item_type::OPAQUE, &big).map_err(|e| e.to_string())? as usize;
    let gap = 2 * SECTOR - before;
    check(gap == 225, format!("worst-case gap {gap}"))?;
    check(at == 2 * SECTOR + SECTOR_HEADER_LEN, "big item did not move to the next sector")?;
    let pct = 100.0 * gap as f64 / SECTOR as f64;
    check((pct - 5.5).abs() < 0.05, format!("worst-case gap {pct:.2}%"))?;
    Ok(format!(
        "64-byte items: {per_first}/{per_other} per sector, gaps {gap_first}/{gap_other} B; worst gap 225 B = {pct:.2}%"
    ))
}

// ---------------------------------------------------------------- 2

/// Full linear scan of an image, written from the layout description only.
fn oracle_scan(img: &[u8], page: usize, sector: usize) -> (u32, u32) {
    let cap = img.len();
    let mut items: Vec<(usize, u8, usize)> = Vec::new();
    let mut pos = 0;
    while pos + ITEM_HEADER_LEN <= cap {
        let t = img[pos];
        let next_page = (pos / page + 1) * page;
        if t == ERASED {
            pos = next_page;
            continue;
        }
        let len = img[pos + 1] as usize;
        let end = pos + ITEM_HEADER_LEN + len;
        let sector_end = (pos / sector + 1) * sector;
        if t == 0 || len > MAX_PAYLOAD || end > sector_end {
            pos = next_page;
            continue;
        }
        items.push((pos, t, len));
        pos = end;
    }
    let chain_end = items.last().map(|&(a, _, l)| a + ITEM_HEADER_LEN + l).unwrap_or(0);
    let last_written = img.iter().rposition(|&b| b != ERASED).map(|i| i + 1).unwrap_or(0);
    let write = if last_written <= chain_end {
        chain_end
    } else {
        last_written.div_ceil(page) * page
    };

    let mut ack = LOG_HEADER_LEN as u32;
    for (i, &(a, t, l)) in items.iter().enumerate() {
        let p = &img[a + ITEM_HEADER_LEN..a + ITEM_HEADER_LEN + l];
        let candidate = match t {
            item_type::SECTOR_HEADER if a > 0 && a % sector == 0 => {
                let trusted = items.get(i + 1).is_some_and(|n| n.1 != item_type::BOOT_MARKER);
                SectorHeader::from_payload(p).filter(|_| trusted).map(|h| h.ack_cursor)
            }
            item_type::ACK_CHECKPOINT => parse_ack_checkpoint(p),
            _ => None,
        };
        if let Some(c) = candidate {
            if c as usize <= a && c as usize >= LOG_HEADER_LEN {
                ack = c;
            }
        }
    }
    (write as u32, ack)
}

fn random_run(rng: &mut ChaCha8Rng, g: MediaGeometry, fault: Option<u64>) -> Media {
    let mut log = format_log(Media::new(g), 9, 1000, 0).unwrap();
    if let Some(k) = fault {
        let base = log.media().write_count();
        log.media_mut().set_fault_plan(Some(FaultPlan {
            fail_at_write: base + k,
            seed: rng.gen(),
        }));
    }
    let mut addrs: Vec<u32> = Vec::new();
    let steps = rng.gen_range(1..400);
    let mut boots = 1u16;
    let _ = log.log_boot(BootMarker { boot_count: boots, firmware_id: 1 }, &[]);
    for _ in 0..steps {
        let r: f64 = rng.gen();
        let res: Result<(), LogError> = if r < 0.8 {
            let len = if rng.gen_bool(0.1) { rng.gen_range(150..=MAX_PAYLOAD) } else { rng.gen_range(0..80) };
            let t = [item_type::OPAQUE, item_type::PRESSURE_TEMPERATURE, item_type::ACCEL_FRAGMENT][rng.gen_range(0..3)];
            let payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            log.append_item(t, &payload).map(|a| addrs.push(a))
        } else if r < 0.9 {
            let durable = log.durable_addr();
            let ack = log.cursor().ack_cursor;
            let choices: Vec<u32> = addrs.iter().copied().filter(|&a| a >= ack && a <= durable).collect();
            if choices.is_empty() {
                Ok(())
            } else {
                let a = choices[rng.gen_range(0..choices.len())];
                log.set_ack_cursor(a).map(|_| ()).and_then(|_| log.checkpoint_ack().map(|_| ()))
            }
        } else if r < 0.97 {
            log.flush()
        } else {
            // clean reboot
            match log.flush() {
                Ok(()) => {
                    let media = log.into_media();
                    let (l, _) = recover(media).unwrap();
                    log = l;
                    boots += 1;
                    addrs.retain(|&a| a < log.cursor().write_addr);
                    log.log_boot(BootMarker { boot_count: boots, firmware_id: 1 }, &[]).map(|_| ())
                }
                Err(e) => Err(e),
            }
        };
        match res {
            Ok(()) => {}
            Err(LogError::Full) => break,
            Err(_) => break,
        }
    }
    if fault.is_none() {
        let _ = log.flush();
    }
    let mut media = log.into_media();
    media.power_cycle();
    media
}

fn recovery_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0002);
    let n = 1200;
    let mut resynced = 0;
    let mut checkpointed = 0;
    for i in 0..n {
        let sectors = rng.gen_range(2..10);
        let g = MediaGeometry::new(256, 1024, sectors).unwrap();
        let fault = if rng.gen_bool(0.8) { Some(rng.gen_range(1..200)) } else { None };
        let media = random_run(&mut rng, g, fault);
        let expect = oracle_scan(media.image(), 256, 1024);
        let (log, report) = recover(media).map_err(|e| format!("image {i}: {e}"))?;
        let got = (log.cursor().write_addr, log.cursor().ack_cursor);
        check(got == expect, format!("image {i}: recover {got:?}, oracle {expect:?}"))?;
        resynced += report.resynchronized as usize;
        checkpointed += report
            .ack_source
            .is_some_and(|a| log.media().image()[a as usize] == item_type::ACK_CHECKPOINT) as usize;
    }
    let secs = start.elapsed();
    check(secs < Duration::from_secs(30), format!("took {secs:?}"))?;
    Ok(format!("{n} images agree ({resynced} resynchronized, {checkpointed} acks from checkpoints) in {:.2}s", secs.as_secs_f64()))
}

// ---------------------------------------------------------------- 3

fn power_loss_fuzz() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
    let g = MediaGeometry::new(256, 1024, 3).unwrap();
    let points = 10_000;
    let (mut corrupt, mut excess_loss, mut lost_items) = (0usize, 0usize, 0usize);
    for _ in 0..points {
        let mut log = format_log(Media::new(g), 3, 0, 0).unwrap();
        log.log_boot(BootMarker { boot_count: 1, firmware_id: 1 }, &[]).unwrap();
        log.flush().unwrap();
        let base = log.media().write_count();
        let cut = rng.gen_range(1..40);
        log.media_mut().set_fault_plan(Some(FaultPlan {
            fail_at_write: base + cut,
            seed: rng.gen(),
        }));
        let mut written: BTreeMap<u32, (u8, Vec<u8>)> = BTreeMap::new();
        loop {
            let len = rng.gen_range(0..120);
            let payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            match log.append_item(item_type::OPAQUE, &payload) {
                Ok(a) => {
                    written.insert(a, (item_type::OPAQUE, payload));
                }
                Err(_) => break,
            }
        }
        let durable = log.durable_addr();
        let pre_crash = written.clone();
        let mut media = log.into_media();
        media.power_cycle();
        let (mut log, _) = recover(media).map_err(|e| e.to_string())?;
        let marker = BootMarker { boot_count: 2, firmware_id: 1 };
        let m_addr = log.log_boot(marker, &[]).map_err(|e| e.to_string())?;
        written.insert(m_addr, (item_type::BOOT_MARKER, marker.payload().to_vec()));
        let tail: Vec<u8> = (0..16).map(|_| rng.gen()).collect();
        if let Ok(a) = log.append_item(item_type::OPAQUE, &tail) {
            written.insert(a, (item_type::OPAQUE, tail));
        }
        log.flush().map_err(|e| e.to_string())?;

        let (_, listing) = iterate_items(log.media()).map_err(|e| e.to_string())?;
        for e in listing.valid() {
            let structural = e.addr == 0 || e.item_type == item_type::SECTOR_HEADER || (e.addr == 24 && e.item_type == item_type::BOOT_MARKER);
            if structural {
                continue;
            }
            match written.get(&e.addr) {
                Some((t, p)) if *t == e.item_type && *p == e.payload => {}
                _ => corrupt += 1,
            }
        }
        // pre-crash items that did not survive as valid, identical items
        let survivors: BTreeMap<u32, &Vec<u8>> = listing
            .valid()
            .filter(|e| e.item_type == item_type::OPAQUE)
            .map(|e| (e.addr, &e.payload))
            .collect();
        let lost: Vec<(u32, usize)> = pre_crash
            .iter()
            .filter(|(a, (_, p))| survivors.get(a) != Some(&p))
            .map(|(a, (_, p))| (*a, p.len()))
            .collect();
        lost_items += lost.len();
        let durable_lost: Vec<_> = lost.iter().filter(|(a, l)| a + 2 + *l as u32 <= durable).collect();
        let buffered_lost: Vec<_> = lost.iter().filter(|(a, l)| a + 2 + *l as u32 > durable).collect();
        let last_durable = pre_crash
            .iter()
            .filter(|(a, (_, p))| *a + 2 + p.len() as u32 <= durable)
            .map(|(a, _)| *a)
            .last();
        let durable_ok = durable_lost.len() <= 1 && durable_lost.iter().all(|(a, _)| Some(*a) == last_durable);
        let buffered_ok = match (buffered_lost.first(), buffered_lost.last()) {
            (Some(f), Some(l)) => f.0 >= durable.saturating_sub(0) && l.0 - f.0 < 256,
            _ => true,
        };
        if !(durable_ok && buffered_ok) {
            excess_loss += 1;
        }
    }
    let secs = start.elapsed();
    check(corrupt == 0, format!("{corrupt} valid items with wrong bytes"))?;
    check(excess_loss == 0, format!("{excess_loss} crashes lost more than the last item plus one page"))?;
    check(secs < Duration::from_secs(120), format!("took {secs:?}"))?;
    Ok(format!(
        "{points} power cuts: 0 corrupt valid items, {lost_items} items lost within bounds, {:.1}s",
        secs.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 4

const WAKE_AND_LEAVE: &str = "
[scenario]
seed = 11
duration_s = 60

[tag 42]
def = builtin:sample

[station 1]
path = 0:10,0; 30:10,0; 31:800,0
intent = acknowledge
intent = wakeup 42 -> 1
";

fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.split_whitespace().find_map(|w| w.strip_prefix(key))
}

fn time_of(line: &str) -> u64 {
    line[..12].parse().unwrap()
}

fn schedule_trace() -> Outcome {
    let out = run(&parse_scenario(WAKE_AND_LEAVE, None).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let period_us = 500_000u64;
    // (every, from) per setup and configuration, read off the definition text
    let expect = |config: u8, setup: &str| match (config, setup) {
        (0, "ATLAS_433_92") => (2, 0),
        (0, _) => (16, 15),
        (_, "ATLAS_433_92") => (4, 0),
        (_, _) => (8, 7),
    };
    let mut config = 0u8;
    let (mut slots, mut in_c1, mut wakeups) = (0, 0, 0);
    let mut last_rx = None;
    let mut silence = None;
    for line in &out.trace {
        if !line.contains("tag=42") {
            continue;
        }
        let t = time_of(line);
        if line.contains(" tx slot=") {
            let slot: u64 = field(line, "slot=").unwrap().parse().unwrap();
            let setup = field(line, "setup=").unwrap();
            let (every, from) = expect(config, setup);
            check(slot % every == from, format!("config {config}: {setup} in slot {slot}"))?;
            check(t == slot * period_us, format!("slot {slot} at {t} us"))?;
            slots += 1;
            in_c1 += (config == 1) as usize;
        } else if line.contains(" rx station=") {
            last_rx = Some(t);
        } else if line.contains(" transition ") {
            let to: u8 = field(line, "to=").unwrap().parse().unwrap();
            if line.contains("cause=wakeup") {
                check(to == 1, "wakeup went elsewhere than config 1")?;
                wakeups += 1;
            }
            if line.contains("cause=silence") {
                silence = Some((t, last_rx));
            }
            config = to;
        }
    }
    check(wakeups == 1, format!("{wakeups} wakeup transitions"))?;
    let (t, rx) = silence.ok_or("no silence transition")?;
    let rx = rx.ok_or("silence without any reception")?;
    check(t - rx == 10_000_000, format!("silence fired {} us after the last reception", t - rx))?;
    check(config == 0, "tag did not return to config 0")?;
    Ok(format!(
        "{slots} slots on schedule ({in_c1} in config 1); wakeup at contact, silence exactly 10 s after last rx at {:.1} s",
        rx as f64 / 1e6
    ))
}

// ---------------------------------------------------------------- 5

fn upload_scenario() -> Scenario {
    let mut sc = Scenario::new(5, 3600);
    sc.channels.short.loss = 0.3;
    let mut tag = TagSpec::new(parse_tagdef(UPLOADER_DEFINITION).unwrap());
    tag.prefill = 500;
    tag.prefill_bytes = 32;
    tag.reboots_us = vec![REBOOT_US];
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
    sc
}

const REBOOT_US: u64 = 300_000_000;

fn reliable_upload() -> Outcome {
    let out = run(&upload_scenario()).map_err(|e| e.to_string())?;
    let tag = out.tag(7).ok_or("no tag")?;
    let records = out.station(1).ok_or("no station")?.store().records().map_err(|e| e.to_string())?;
    let cursor = tag.log().cursor();
    check(cursor.ack_cursor == cursor.write_addr, format!("ack {} of {}", cursor.ack_cursor, cursor.write_addr))?;

    let (_, listing) = iterate_items(tag.log().media()).map_err(|e| e.to_string())?;
    let on_tag: BTreeMap<u32, (u8, &Vec<u8>)> = listing
        .entries
        .iter()
        .filter(|e| e.addr > 0)
        .map(|e| (e.addr, (e.item_type, &e.payload)))
        .collect();
    let received: BTreeMap<u32, (u8, &Vec<u8>)> =
        records.iter().map(|r| (r.address, (r.item_type, &r.payload))).collect();
    let missing: Vec<_> = on_tag.keys().filter(|a| !received.contains_key(a)).collect();
    check(missing.is_empty(), format!("{} items never arrived, first {:?}", missing.len(), missing.first()))?;
    let extra = received.keys().filter(|a| !on_tag.contains_key(a)).count();
    check(extra == 0, format!("{extra} received items not on the tag"))?;
    for e in listing.valid().filter(|e| on_tag.contains_key(&e.addr)) {
        check(received[&e.addr] == (e.item_type, &e.payload), format!("item {} differs", e.addr))?;
    }

    let before: BTreeSet<u32> = records.iter().filter(|r| r.rx_time_us < REBOOT_US).map(|r| r.address).collect();
    let resent: Vec<_> = records
        .iter()
        .filter(|r| r.rx_time_us >= REBOOT_US && before.contains(&r.address))
        .collect();
    let lo = resent.iter().map(|r| r.address).min().unwrap_or(0);
    let hi = resent.iter().map(|r| r.address + 2 + r.payload.len() as u32).max().unwrap_or(0);
    let span = hi.saturating_sub(lo);
    check(tag.boot_count() == 2, "tag did not reboot")?;
    check(span <= SECTOR as u32, format!("re-sent span {span} bytes"))?;

    let mut once = ItemStore::new();
    once.ingest(records.clone());
    let mut twice = ItemStore::new();
    twice.ingest(records.iter().rev().cloned());
    let again = twice.ingest(records.clone());
    check(again.inserted == 0, "second ingestion inserted items")?;
    check(once.to_bytes() == twice.to_bytes(), "ingestion order changed the store")?;
    check(once.len() == on_tag.len(), "store size differs from the log")?;
    Ok(format!(
        "{} records, {} distinct = all {} log items; {} re-sent after reboot spanning {span} B",
        records.len(),
        received.len(),
        on_tag.len(),
        resent.len()
    ))
}

// ---------------------------------------------------------------- 6

fn clock_run(offset_s: i64) -> Result<SimOutcome, String> {
    let text = format!(
        "[scenario]\nseed = 3\nduration_s = 40\n[tag 42]\ndef = builtin:sample\nclock_offset_s = {offset_s}\n\
         [station 1]\nposition = 10, 0\nintent = adjust-clock\nintent = acknowledge\n"
    );
    run(&parse_scenario(&text, None).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn clock_correction() -> Outcome {
    let off = clock_run(5)?;
    let first_rx = off.trace.iter().position(|l| l.contains("tag=42 rx ")).ok_or("no reply received")?;
    let set = off.trace.iter().position(|l| l.contains("tag=42 clockset")).ok_or("clock never set")?;
    check(
        set == first_rx + 1 && time_of(&off.trace[set]) == time_of(&off.trace[first_rx]),
        "clock not set on the first received reply",
    )?;
    let err = off.tag(42).unwrap().clock_error_us();
    check(err.abs() < 1_000_000, format!("residual error {err} us"))?;
    let sets = off.trace.iter().filter(|l| l.contains("clockset")).count();
    check(sets == 1, format!("{sets} clock sets"))?;

    let near = clock_run(2)?;
    let clock_replies = near.trace.iter().filter(|l| l.contains(" reply ") && l.contains("clock(")).count();
    check(clock_replies == 0, format!("{clock_replies} replies carried a clock at 2 s offset"))?;
    check(!near.trace.iter().any(|l| l.contains("clockset")), "clock set at 2 s offset")?;
    Ok(format!("5 s offset corrected on first reply to {err} us; 2 s offset left alone"))
}

// ---------------------------------------------------------------- 7

fn oracle_header(t: u16, l: u8) -> Vec<u8> {
    if t < 8 && l < 16 {
        vec![(t as u8) << 4 | l]
    } else if t < 64 {
        vec![0b1000_0000 | t as u8, l]
    } else {
        vec![0b1100_0000, l, (t >> 8) as u8, t as u8]
    }
}

fn codec_fixpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0007);
    let mut types: Vec<u16> = (0..64).collect();
    types.extend((0..200).map(|_| rng.gen_range(64..=u16::MAX)));
    types.push(u16::MAX);
    let mut n = 0;
    for &t in &types {
        for l in 0..=255u8 {
            let enc = encode_header(t as u32, l as usize).map_err(|e| e.to_string())?;
            check(enc == oracle_header(t, l), format!("type {t} len {l}: {enc:02x?}"))?;
            let mut buf = enc.clone();
            buf.extend_from_slice(&[0xAA, 0x55]);
            let got = decode_header(&buf).map_err(|e| format!("type {t} len {l}: {e}"))?;
            check(got == (t, l, enc.len()), format!("type {t} len {l} decoded {got:?}"))?;
            n += 1;
        }
    }
    let non_canonical: [&[u8]; 4] = [&[0x80, 0x00], &[0x87, 0x0F], &[0xC0, 0x00, 0x00, 0x07], &[0xC0, 0x20, 0x00, 0x3F]];
    for b in non_canonical {
        check(matches!(decode_header(b), Err(WireError::NonCanonical(_))), format!("{b:02x?} accepted"))?;
    }
    for lead in 0xC1..=0xFFu8 {
        check(decode_header(&[lead, 0, 0, 0]).is_err(), format!("reserved lead {lead:#x} accepted"))?;
    }

    let mut corpus = vec![
        parse_tagdef(SAMPLE_DEFINITION).map_err(|e| e.to_string())?,
        parse_tagdef(UPLOADER_DEFINITION).map_err(|e| e.to_string())?,
        lifespan::pinger_definition(8000),
        lifespan::pinger_definition(6000),
    ];
    let mut variant = corpus[0].clone();
    variant.tag_id = 0xDEAD_BEEF_0042;
    variant.upload_threshold = 1;
    variant.sensors.reverse();
    corpus.push(variant);
    for def in &corpus {
        let text = def.to_text();
        let reparsed = parse_tagdef(&text).map_err(|e| format!("{e}\n{text}"))?;
        check(reparsed.to_text() == text, format!("text is not a fixpoint for tag {}", def.tag_id))?;
        let block = compile_config_block(&reparsed);
        let back = decompile_config_block(&block).map_err(|e| e.to_string())?;
        check(compile_config_block(&back) == block, format!("block is not a fixpoint for tag {}", def.tag_id))?;
        check(back.to_text() == text, format!("decompiled text differs for tag {}", def.tag_id))?;
    }
    Ok(format!("{n} headers round-trip, 4 non-canonical and 63 reserved forms rejected, {} definitions at fixpoint", corpus.len()))
}

// ---------------------------------------------------------------- 8

// (name, capacity mAh, reported days, ping period s)
const ROWS: [(&str, f64, f64, f64); 6] = [
    ("SO337", 8.3, 10.4, 8.0),
    ("SO317", 11.5, 13.1, 8.0),
    ("CR1025", 30.0, 32.0, 8.0),
    ("CR1620", 81.0, 79.0, 8.0),
    ("CR2032", 235.0, 226.0, 6.0),
    ("CR2477", 1000.0, 431.0, 8.0),
];

fn lifespan_model() -> Outcome {
    let p = EnergyParams::default();
    for (name, _, days, period) in ROWS.iter().filter(|r| ["CR1025", "CR1620", "CR2032"].contains(&r.0)) {
        let b = lifespan::battery(name).ok_or("unknown battery")?;
        let def = lifespan::pinger_definition((*period * 1000.0) as u32);
        let est = lifespan::estimate_lifespan(&def, &b, &p).ok_or("no estimate")?;
        let rel = (est.days - days) / days;
        check(rel.abs() <= 0.25, format!("{name}: {:.1} d vs {days} d", est.days))?;
    }
    let currents: Vec<(f64, f64)> = ROWS.iter().map(|r| (1.0 / r.3, r.1 * 1000.0 / (r.2 * 24.0))).collect();
    for (i, &(_, ua)) in currents.iter().enumerate().take(5) {
        check((30.0..=50.0).contains(&ua), format!("{}: back-computed {ua:.1} uA", ROWS[i].0))?;
    }
    check(currents[5].1 > 50.0, "CR2477 row is not an outlier")?;

    // I - sleep = leak + q * f over the consistent rows
    let pts: Vec<(f64, f64)> = currents[..5].iter().map(|&(f, i)| (f, i - 1.0)).collect();
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let sxx: f64 = pts.iter().map(|&(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|&(x, y)| x * y).sum();
    let q = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let leak = (sy - q * sx) / n;
    check((leak - p.leakage_ua).abs() < 0.01, format!("fit leak {leak:.3} vs {}", p.leakage_ua))?;
    check((q - p.atlas_ping_uc).abs() < 0.1, format!("fit ping {q:.2} vs {}", p.atlas_ping_uc))?;
    Ok(format!(
        "anchors within 25%; fit leak {leak:.3} uA, ping {q:.2} uC; CR2477 at {:.1} uA flagged",
        currents[5].1
    ))
}

// ---------------------------------------------------------------- 9

fn pipeline_fidelity() -> Outcome {
    let mut sc = Scenario::new(21, 300);
    let mut spec = TagSpec::new(parse_tagdef(SAMPLE_DEFINITION).unwrap());
    spec.clock_offset_s = Some(0);
    sc.tags.push(spec);
    let mut st = StationSpec::new(1);
    st.mobility = Mobility::fixed(10.0, 0.0);
    st.intents = vec![
        Intent::AcknowledgeLogItems,
        Intent::Wakeup {
            tag: Some(42),
            target: WakeupTarget::Config(1),
        },
    ];
    sc.stations.push(st);
    let mut out = run(&sc).map_err(|e| e.to_string())?;
    let records = out.stations[0].store().records().map_err(|e| e.to_string())?;
    let tag = &mut out.tags[0];
    tag.flush_log().map_err(|e| e.to_string())?;
    let def = tag.definition().clone();
    let mut store = ItemStore::new();
    store.ingest(records);
    store.ingest_image(tag.log().media()).map_err(|e| e.to_string())?;

    let sim = SensorSim::new(sc.seed ^ 42u64.rotate_left(17));
    let mut counts = Vec::new();
    for kind in [SensorKind::PressureTemperature, SensorKind::Acceleration] {
        let config = &def.sensor(kind).unwrap().config;
        let series = extract_series(&store, 42, kind, &ExtractOptions::default()).map_err(|e| e.to_string())?;
        check(series.points.len() > 50, format!("{kind:?}: only {} points", series.points.len()))?;
        for p in &series.points {
            let want = sim.sample(kind, p.t_us).physical(config);
            check(p.values[..want.len()] == want[..], format!("{kind:?} at {}: {:?} vs {want:?}", p.t_us, p.values))?;
        }
        counts.push(series.points.len());
    }

    // drop the second fragment of one burst
    let victim = store
        .iter()
        .find(|(_, v)| v.item_type == item_type::ACCEL_FRAGMENT && v.payload[4] == 1 && !v.suspect)
        .map(|(k, v)| (*k, u32::from_le_bytes(v.payload[..4].try_into().unwrap())))
        .ok_or("no second fragment")?;
    let kept: Vec<_> = store.iter().filter(|(k, _)| **k != victim.0).map(|(_, v)| v.clone()).collect();
    let mut damaged = ItemStore::new();
    damaged.ingest(
        store
            .iter()
            .filter(|(k, _)| **k != victim.0)
            .map(|(k, v)| wildtag::station::ReceivedRecord {
                tag_id: k.0,
                creation_time: k.1,
                address: k.2,
                item_type: v.item_type,
                payload: v.payload.clone(),
                rx_time_us: v.rx_time_us,
                station_id: v.station_id,
            }),
    );
    check(damaged.len() + 1 == store.len() && kept.len() == damaged.len(), "store copy differs")?;
    let series = extract_series(&damaged, 42, SensorKind::Acceleration, &ExtractOptions::default())
        .map_err(|e| e.to_string())?;
    let start_us = victim.1 as i64 * 1_000_000;
    let survivors = series.points.iter().filter(|p| p.t_us >= start_us && p.t_us < start_us + 2_000_000).count();
    let gaps = series
        .gaps
        .iter()
        .filter(|g| matches!(g.reason, GapReason::MissingFragment { start_s, index: 1 } if start_s == victim.1))
        .count();
    check(survivors == 25, format!("{survivors} samples survive the dropped fragment"))?;
    check(gaps == 1, format!("{gaps} missing-fragment gaps"))?;

    let alt = pressure_to_altitude(89_874.6, 101_325.0).map_err(|e| e.to_string())?;
    check((alt - 1000.0).abs() <= 1.0, format!("altitude {alt:.2} m"))?;
    Ok(format!(
        "{} pressure and {} acceleration points match the sensor model; dropped fragment leaves 25 + 1 gap; 89874.6 Pa = {alt:.1} m",
        counts[0], counts[1]
    ))
}

// ---------------------------------------------------------------- 10

fn artifacts(dir: &std::path::Path) -> Result<(BTreeMap<String, Vec<u8>>, Vec<u8>), String> {
    let sc = parse_scenario(&std::fs::read_to_string(fixture("wakeup.scenario")).map_err(|e| e.to_string())?, Some(&fixture("")))
        .map_err(|e| e.to_string())?;
    let out = run(&sc).map_err(|e| e.to_string())?;
    out.save(dir).map_err(|e| e.to_string())?;
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        files.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    let mut store = ItemStore::new();
    for st in &out.stations {
        store.ingest(st.store().records().map_err(|e| e.to_string())?);
    }
    for t in &out.tags {
        store.ingest_image(t.log().media()).map_err(|e| e.to_string())?;
    }
    Ok((files, store.to_bytes()))
}

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (fa, sa) = artifacts(a.path())?;
    let (fb, sb) = artifacts(b.path())?;
    check(fa.len() >= 3, format!("only {} artifacts", fa.len()))?;
    check(fa.keys().eq(fb.keys()), "artifact sets differ")?;
    for (name, bytes) in &fa {
        check(fb[name] == *bytes, format!("{name} differs between runs"))?;
    }
    check(sa == sb, "pipeline stores differ")?;
    let total: usize = fa.values().map(Vec::len).sum();
    Ok(format!("{} artifacts ({total} B) and {} B pipeline store identical across runs", fa.len(), sa.len()))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("log overhead", overhead_accounting),
        ("recovery matches full scan", recovery_oracle),
        ("power-loss durability", power_loss_fuzz),
        ("schedule and transitions", schedule_trace),
        ("upload under loss and reboot", reliable_upload),
        ("clock correction", clock_correction),
        ("codec and definition fixpoints", codec_fixpoints),
        ("lifespan model", lifespan_model),
        ("pipeline fidelity", pipeline_fidelity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
