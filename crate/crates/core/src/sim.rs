//! Discrete-event simulation of tags, base stations and a lossy channel.
//!
//! Scenario files use the same section format as tag definitions:
//!
//! ```text
//! [scenario]
//! seed = 7
//! duration_s = 60
//! utc_start = 1600000000
//!
//! [channel short]            # short | long | atlas
//! range_m = 50
//! loss = 0.3
//!
//! [tag 42]
//! def = builtin:sample       # builtin:uploader, or a path relative to the scenario file
//! position = 0, 0            # or: path = 0:0,0; 60:100,0
//! clock = set                # set | unset
//! clock_offset_s = 5
//! sectors = 64
//! prefill = 500              # opaque items logged before the run
//! prefill_bytes = 64
//! stall_probability = 0.01
//! stall_tau_s = 3
//! reboot_at_s = 30
//!
//! [station 1]
//! position = 10, 0
//! clock = valid
//! store = tethered           # tethered | sd
//! capacity = 1000
//! intent = adjust-clock
//! intent = acknowledge
//! intent = wakeup 42 -> 1    # wakeup all -> highest
//! ```
//!
//! Events run in (time, tag id, sequence) order and every transmission,
//! delivery, drop, stall, transition and ack becomes one trace line.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::battery::StallParams;
use crate::error::{DefError, SimError};
use crate::media::{Media, MediaGeometry};
use crate::sections::{parse_f64, parse_sections, parse_u64, Entry, Section};
use crate::station::{BaseStation, Intent, RecordStore, StationNote};
use crate::tag::{SlotOutcome, Tag, TagNote, TagOptions};
use crate::tagdef::{parse_tagdef, SetupKind, TagDefinition, SAMPLE_DEFINITION, UPLOADER_DEFINITION};
use crate::wire::{DataItem, WakeupTarget};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub range_m: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub short: Channel,
    pub long: Channel,
    pub atlas: Channel,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            short: Channel {
                range_m: 50.0,
                loss: 0.0,
            },
            long: Channel {
                range_m: 5000.0,
                loss: 0.0,
            },
            atlas: Channel {
                range_m: 5000.0,
                loss: 0.0,
            },
        }
    }
}

impl ChannelModel {
    pub fn for_kind(&self, kind: SetupKind) -> &Channel {
        match kind {
            SetupKind::AtlasPing => &self.atlas,
            SetupKind::DataShortRange => &self.short,
            SetupKind::DataLongRange => &self.long,
        }
    }
}

/// One packet crossing the channel: lost beyond range, else lost with the
/// channel's probability.
pub fn deliver(channel: &Channel, distance_m: f64, rng: &mut impl Rng) -> bool {
    if distance_m > channel.range_m {
        return false;
    }
    channel.loss <= 0.0 || !rng.gen_bool(channel.loss.min(1.0))
}

/// A fixed point or a piecewise-linear path of (time s, x, y) waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Mobility {
    pub waypoints: Vec<(f64, f64, f64)>,
}

impl Mobility {
    pub fn fixed(x: f64, y: f64) -> Self {
        Mobility {
            waypoints: vec![(0.0, x, y)],
        }
    }

    pub fn at(&self, t_s: f64) -> (f64, f64) {
        let w = &self.waypoints;
        if t_s <= w[0].0 || w.len() == 1 {
            return (w[0].1, w[0].2);
        }
        for pair in w.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if t_s <= b.0 {
                let f = if b.0 > a.0 { (t_s - a.0) / (b.0 - a.0) } else { 1.0 };
                return (a.1 + f * (b.1 - a.1), a.2 + f * (b.2 - a.2));
            }
        }
        let last = w[w.len() - 1];
        (last.1, last.2)
    }
}

#[derive(Debug, Clone)]
pub struct TagSpec {
    pub id: u64,
    pub def: TagDefinition,
    pub mobility: Mobility,
    pub sectors: usize,
    pub clock_offset_s: Option<i64>,
    pub prefill: usize,
    pub prefill_bytes: usize,
    pub battery_voltage: f64,
    pub stall: StallParams,
    pub reboots_us: Vec<u64>,
    /// Starts from this medium instead of a blank one.
    pub media: Option<Media>,
}

impl TagSpec {
    pub fn new(def: TagDefinition) -> Self {
        TagSpec {
            id: def.tag_id,
            def,
            mobility: Mobility::fixed(0.0, 0.0),
            sectors: 64,
            clock_offset_s: Some(0),
            prefill: 0,
            prefill_bytes: 64,
            battery_voltage: 3.0,
            stall: StallParams::default(),
            reboots_us: Vec::new(),
            media: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreKind {
    Tethered,
    Sd { sectors: usize },
}

#[derive(Debug, Clone)]
pub struct StationSpec {
    pub id: u16,
    pub mobility: Mobility,
    pub clock_valid: bool,
    pub store: StoreKind,
    pub capacity: Option<usize>,
    pub intents: Vec<Intent>,
}

impl StationSpec {
    pub fn new(id: u16) -> Self {
        StationSpec {
            id,
            mobility: Mobility::fixed(0.0, 0.0),
            clock_valid: true,
            store: StoreKind::Tethered,
            capacity: None,
            intents: vec![Intent::AdjustClock, Intent::AcknowledgeLogItems],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub duration_us: u64,
    pub utc_start_s: u64,
    pub channels: ChannelModel,
    pub tags: Vec<TagSpec>,
    pub stations: Vec<StationSpec>,
}

impl Scenario {
    pub fn new(seed: u64, duration_s: u64) -> Self {
        Scenario {
            seed,
            duration_us: duration_s * 1_000_000,
            utc_start_s: 1_600_000_000,
            channels: ChannelModel::default(),
            tags: Vec::new(),
            stations: Vec::new(),
        }
    }

    /// Problems that make the scenario unrunnable, one message each.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut ids: Vec<u64> = self.tags.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            errs.push("duplicate tag id".to_string());
        }
        let mut sids: Vec<u16> = self.stations.iter().map(|s| s.id).collect();
        sids.sort_unstable();
        if sids.windows(2).any(|w| w[0] == w[1]) {
            errs.push("duplicate station id".to_string());
        }
        for (name, c) in [
            ("short", self.channels.short),
            ("long", self.channels.long),
            ("atlas", self.channels.atlas),
        ] {
            if !(0.0..=1.0).contains(&c.loss) {
                errs.push(format!("channel {name}: loss {} outside 0..=1", c.loss));
            }
            if c.range_m < 0.0 {
                errs.push(format!("channel {name}: negative range"));
            }
        }
        for t in &self.tags {
            if t.sectors < 2 {
                errs.push(format!("tag {}: needs at least 2 sectors", t.id));
            }
            if t.prefill_bytes > crate::log::MAX_PAYLOAD {
                errs.push(format!("tag {}: prefill_bytes above 224", t.id));
            }
        }
        for s in &self.stations {
            for i in &s.intents {
                if let Intent::Wakeup { tag: Some(id), .. } = i {
                    if !ids.contains(id) {
                        errs.push(format!("station {}: wakeup intent for unknown tag {id}", s.id));
                    }
                }
            }
        }
        errs
    }
}

fn parse_point(e: &Entry, s: &str) -> Result<(f64, f64), DefError> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| e.err("expected `x, y`"))?;
    Ok((parse_f64(e, x)?, parse_f64(e, y)?))
}

fn parse_mobility(sec: &Section) -> Result<Mobility, DefError> {
    if let Some(e) = sec.get("path") {
        let mut waypoints = Vec::new();
        for part in e.value.split(';') {
            let (t, xy) = part
                .split_once(':')
                .ok_or_else(|| e.err("expected `t:x,y; ...`"))?;
            let (x, y) = parse_point(e, xy)?;
            waypoints.push((parse_f64(e, t)?, x, y));
        }
        if waypoints.windows(2).any(|w| w[1].0 < w[0].0) || waypoints.is_empty() {
            return Err(e.err("path times must increase"));
        }
        return Ok(Mobility { waypoints });
    }
    let (x, y) = match sec.get("position") {
        Some(e) => parse_point(e, &e.value)?,
        None => (0.0, 0.0),
    };
    Ok(Mobility::fixed(x, y))
}

fn parse_intent(e: &Entry) -> Result<Intent, DefError> {
    let words: Vec<&str> = e.value.split_whitespace().collect();
    Ok(match words.as_slice() {
        ["adjust-clock"] => Intent::AdjustClock,
        ["acknowledge"] => Intent::AcknowledgeLogItems,
        ["wakeup", who, "->", target] => {
            let tag = match *who {
                "all" => None,
                id => Some(parse_u64(e, id)?),
            };
            let target = match *target {
                "highest" => WakeupTarget::Highest,
                k => {
                    let k = parse_u64(e, k)?;
                    if k > 15 {
                        return Err(e.err("wakeup target must be 0..=15 or highest"));
                    }
                    WakeupTarget::Config(k as u8)
                }
            };
            Intent::Wakeup { tag, target }
        }
        _ => return Err(e.err(format!("unknown intent `{}`", e.value))),
    })
}

/// Parses a scenario; tag definition paths are resolved against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario, SimError> {
    let sections = parse_sections(text)?;
    let head = sections
        .iter()
        .find(|s| s.kind == "scenario")
        .ok_or_else(|| DefError::at(1, 1, "missing [scenario] section"))?;
    head.check_keys(&["seed", "duration_s", "utc_start"])?;
    let num = |sec: &Section, key: &str, default: u64| -> Result<u64, DefError> {
        match sec.get(key) {
            Some(e) => parse_u64(e, &e.value),
            None => Ok(default),
        }
    };
    let float = |sec: &Section, key: &str, default: f64| -> Result<f64, DefError> {
        match sec.get(key) {
            Some(e) => parse_f64(e, &e.value),
            None => Ok(default),
        }
    };
    let d = head.require("duration_s")?;
    let mut sc = Scenario::new(num(head, "seed", 0)?, parse_u64(d, &d.value)?);
    sc.utc_start_s = num(head, "utc_start", sc.utc_start_s)?;

    for sec in &sections {
        match sec.kind.as_str() {
            "scenario" => {}
            "channel" => {
                sec.check_keys(&["range_m", "loss"])?;
                let ch = match sec.arg.as_deref() {
                    Some("short") => &mut sc.channels.short,
                    Some("long") => &mut sc.channels.long,
                    Some("atlas") => &mut sc.channels.atlas,
                    other => {
                        return Err(sec
                            .err(format!("unknown channel `{}`", other.unwrap_or("")))
                            .into())
                    }
                };
                ch.range_m = float(sec, "range_m", ch.range_m)?;
                ch.loss = float(sec, "loss", ch.loss)?;
            }
            "tag" => {
                sec.check_keys(&[
                    "def",
                    "position",
                    "path",
                    "clock",
                    "clock_offset_s",
                    "sectors",
                    "prefill",
                    "prefill_bytes",
                    "battery_v",
                    "stall_probability",
                    "stall_tau_s",
                    "reboot_at_s",
                ])?;
                let arg = sec.arg.as_deref().ok_or_else(|| sec.err("[tag] needs an id"))?;
                let id: u64 = arg
                    .parse()
                    .map_err(|_| sec.err(format!("bad tag id `{arg}`")))?;
                let def_entry = sec.require("def")?;
                let text = match def_entry.value.strip_prefix("builtin:") {
                    Some("sample") => SAMPLE_DEFINITION.to_string(),
                    Some("uploader") => UPLOADER_DEFINITION.to_string(),
                    Some(other) => {
                        return Err(def_entry
                            .err(format!("unknown builtin definition `{other}`"))
                            .into())
                    }
                    None => {
                        let p = base_dir
                            .map(|b| b.join(&def_entry.value))
                            .unwrap_or_else(|| PathBuf::from(&def_entry.value));
                        std::fs::read_to_string(&p)?
                    }
                };
                let mut def = parse_tagdef(&text).map_err(|e| {
                    SimError::Validation(vec![format!("tag {id}: definition {e}")])
                })?;
                def.tag_id = id;
                let mut spec = TagSpec::new(def);
                spec.mobility = parse_mobility(sec)?;
                spec.clock_offset_s = match sec.get("clock").map(|e| e.value.as_str()) {
                    None | Some("set") => Some(match sec.get("clock_offset_s") {
                        Some(e) => e
                            .value
                            .parse()
                            .map_err(|_| e.err("expected whole seconds"))?,
                        None => 0,
                    }),
                    Some("unset") => None,
                    Some(v) => {
                        return Err(sec
                            .get("clock")
                            .unwrap()
                            .err(format!("clock must be set or unset, not `{v}`"))
                            .into())
                    }
                };
                spec.sectors = num(sec, "sectors", spec.sectors as u64)? as usize;
                spec.prefill = num(sec, "prefill", 0)? as usize;
                spec.prefill_bytes = num(sec, "prefill_bytes", spec.prefill_bytes as u64)? as usize;
                spec.battery_voltage = float(sec, "battery_v", spec.battery_voltage)?;
                spec.stall.probability = float(sec, "stall_probability", 0.0)?;
                spec.stall.recovery_tau_s = float(sec, "stall_tau_s", spec.stall.recovery_tau_s)?;
                for e in sec.all("reboot_at_s") {
                    spec.reboots_us.push((parse_f64(e, &e.value)? * 1e6) as u64);
                }
                spec.reboots_us.sort_unstable();
                sc.tags.push(spec);
            }
            "station" => {
                sec.check_keys(&["position", "path", "clock", "store", "capacity", "intent"])?;
                let arg = sec.arg.as_deref().ok_or_else(|| sec.err("[station] needs an id"))?;
                let id: u16 = arg
                    .parse()
                    .map_err(|_| sec.err(format!("bad station id `{arg}`")))?;
                let mut spec = StationSpec::new(id);
                spec.mobility = parse_mobility(sec)?;
                spec.clock_valid = match sec.get("clock").map(|e| e.value.as_str()) {
                    None | Some("valid") => true,
                    Some("invalid") => false,
                    Some(v) => {
                        return Err(sec
                            .get("clock")
                            .unwrap()
                            .err(format!("clock must be valid or invalid, not `{v}`"))
                            .into())
                    }
                };
                spec.store = match sec.get("store").map(|e| e.value.as_str()) {
                    None | Some("tethered") => StoreKind::Tethered,
                    Some("sd") => StoreKind::Sd { sectors: 64 },
                    Some(v) => {
                        return Err(sec.get("store").unwrap().err(format!("unknown store `{v}`")).into())
                    }
                };
                spec.capacity = sec
                    .get("capacity")
                    .map(|e| parse_u64(e, &e.value).map(|v| v as usize))
                    .transpose()?;
                if sec.get("intent").is_some() {
                    spec.intents = sec.all("intent").map(parse_intent).collect::<Result<_, _>>()?;
                }
                sc.stations.push(spec);
            }
            other => return Err(sec.err(format!("unknown section [{other}]")).into()),
        }
    }
    Ok(sc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Reboot = 0,
    Stall = 1,
    Silence = 2,
    Tick = 3,
    Slot = 4,
}

const KINDS: [EventKind; 5] = [
    EventKind::Reboot,
    EventKind::Stall,
    EventKind::Silence,
    EventKind::Tick,
    EventKind::Slot,
];

/// Result of a run: the trace and the final entities.
#[derive(Debug)]
pub struct SimOutcome {
    pub trace: Vec<String>,
    pub tags: Vec<Tag>,
    pub stations: Vec<BaseStation>,
}

impl SimOutcome {
    pub fn trace_text(&self) -> String {
        let mut s = self.trace.join("\n");
        s.push('\n');
        s
    }

    pub fn tag(&self, id: u64) -> Option<&Tag> {
        self.tags.iter().find(|t| t.tag_id() == id)
    }

    pub fn station(&self, id: u16) -> Option<&BaseStation> {
        self.stations.iter().find(|s| s.id == id)
    }

    /// Writes `trace.txt`, `tag-<id>.img` and `station-<id>.rec` / `.sd`.
    pub fn save(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trace.txt"), self.trace_text())?;
        for t in &self.tags {
            t.log()
                .media()
                .save(&dir.join(format!("tag-{}.img", t.tag_id())))
                .map_err(crate::error::LogError::from)?;
        }
        for s in &self.stations {
            let ext = match s.store() {
                RecordStore::Tethered { .. } => "rec",
                RecordStore::Sd { .. } => "sd",
            };
            s.store().save(&dir.join(format!("station-{}.{ext}", s.id)))?;
        }
        Ok(())
    }
}

fn fmt_items(items: &[DataItem]) -> String {
    items
        .iter()
        .map(|i| match i {
            DataItem::TagState(s) => format!(
                "state(c{}{}{})",
                s.config_index,
                if s.will_listen { ",listen" } else { "" },
                if s.has_data { ",data" } else { "" }
            ),
            DataItem::TagId(id) => format!("id({id})"),
            DataItem::Ack(a) => format!("ack({a})"),
            DataItem::Clock(c) => format!("clock({c})"),
            DataItem::Wakeup(WakeupTarget::Config(k)) => format!("wakeup({k})"),
            DataItem::Wakeup(WakeupTarget::Highest) => "wakeup(highest)".to_string(),
            DataItem::AddressedTo(id) => format!("to({id})"),
            DataItem::LogItem(c) => format!("item({}@{})", c.item_type, c.address),
            DataItem::LogState(s) => format!("logstate({},{})", s.write_addr, s.ack_cursor),
            DataItem::Opaque { type_code, .. } => format!("opaque({type_code})"),
        })
        .collect::<Vec<_>>()
        .join(",")
}

struct Engine<'a> {
    sc: &'a Scenario,
    tags: Vec<Tag>,
    stations: Vec<BaseStation>,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Reverse<(u64, u64, u64, EventKind, usize)>>,
    scheduled: Vec<[Option<u64>; 5]>,
    reboot_idx: Vec<usize>,
    seq: u64,
    trace: Vec<String>,
}

impl Engine<'_> {
    fn log(&mut self, t: u64, who: String, what: String) {
        self.trace.push(format!("{t:012} {who} {what}"));
    }

    fn desired(&self, i: usize, kind: EventKind) -> Option<u64> {
        let tag = &self.tags[i];
        match kind {
            EventKind::Slot => tag.next_slot_time(),
            EventKind::Tick => Some(tag.next_tick_time()),
            EventKind::Silence => tag.silence_deadline(),
            EventKind::Stall => tag.stall_check_time(),
            EventKind::Reboot => self.sc.tags[i].reboots_us.get(self.reboot_idx[i]).copied(),
        }
    }

    fn reschedule(&mut self, i: usize) {
        for kind in KINDS {
            let want = self.desired(i, kind);
            if want != self.scheduled[i][kind as usize] {
                self.scheduled[i][kind as usize] = want;
                if let Some(t) = want {
                    self.seq += 1;
                    let id = self.tags[i].tag_id();
                    self.heap.push(Reverse((t, id, self.seq, kind, i)));
                }
            }
        }
    }

    fn drain_tag_notes(&mut self, i: usize, now: u64) {
        let who = format!("tag={}", self.tags[i].tag_id());
        for n in self.tags[i].drain_notes() {
            let what = match n {
                TagNote::Boot {
                    boot_count,
                    ack_cursor,
                } => format!("boot count={boot_count} ack={ack_cursor}"),
                TagNote::Transition { from, to, cause } => {
                    format!("transition from={from} to={to} cause={cause}")
                }
                TagNote::Acked { addr, next } => format!("acked addr={addr} next={next}"),
                TagNote::ClockSet { delta_us } => format!("clockset delta_us={delta_us}"),
                TagNote::Stalled => "stall".to_string(),
                TagNote::Resumed => "resume".to_string(),
                TagNote::ActuatorOn => "actuator on".to_string(),
                TagNote::LogFull => "logfull".to_string(),
            };
            self.log(now, who.clone(), what);
        }
    }

    fn drain_station_notes(&mut self, s: usize, now: u64) {
        let who = format!("station={}", self.stations[s].id);
        for n in self.stations[s].drain_notes() {
            let what = match n {
                StationNote::Stored { tag_id, address } => {
                    format!("store tag={tag_id} addr={address}")
                }
                StationNote::StoreFull { tag_id, address } => {
                    format!("storefull tag={tag_id} addr={address}")
                }
                StationNote::Warning(w) => format!("warning {w}"),
            };
            self.log(now, who.clone(), what);
        }
    }

    fn distance(&self, i: usize, s: usize, now: u64) -> f64 {
        let t = now as f64 / 1e6;
        let (x1, y1) = self.sc.tags[i].mobility.at(t);
        let (x2, y2) = self.sc.stations[s].mobility.at(t);
        (x1 - x2).hypot(y1 - y2)
    }

    fn slot(&mut self, i: usize, now: u64) {
        let who = format!("tag={}", self.tags[i].tag_id());
        let slot_index = (now - self.tags[i].schedule_origin_us())
            / (self.tags[i].definition().period_ms as u64 * 1000);
        match self.tags[i].on_slot(now) {
            SlotOutcome::Idle => {}
            SlotOutcome::Stalled => {}
            SlotOutcome::Ping { setup, bits } => {
                self.log(now, who.clone(), format!("tx slot={slot_index} setup={setup} ping bits={bits}"));
                let ch = *self.sc.channels.for_kind(SetupKind::AtlasPing);
                for s in 0..self.stations.len() {
                    let d = self.distance(i, s, now);
                    let sid = self.stations[s].id;
                    if deliver(&ch, d, &mut self.rng) {
                        self.log(now, who.clone(), format!("detect station={sid}"));
                    } else {
                        self.log(now, who.clone(), format!("drop station={sid}"));
                    }
                }
            }
            SlotOutcome::Data {
                setup,
                will_listen,
                items,
                ..
            } => {
                self.log(
                    now,
                    who.clone(),
                    format!("tx slot={slot_index} setup={setup} data {}", fmt_items(&items)),
                );
                let kind = self.tags[i]
                    .definition()
                    .setup(&setup)
                    .map_or(SetupKind::DataShortRange, |s| s.kind);
                let ch = *self.sc.channels.for_kind(kind);
                for s in 0..self.stations.len() {
                    let d = self.distance(i, s, now);
                    let sid = self.stations[s].id;
                    if !deliver(&ch, d, &mut self.rng) {
                        self.log(now, who.clone(), format!("drop station={sid}"));
                        continue;
                    }
                    self.log(now, who.clone(), format!("deliver station={sid}"));
                    let reply = self.stations[s].handle_packet(&items, now);
                    self.drain_station_notes(s, now);
                    let Some(reply) = reply else { continue };
                    let swho = format!("station={sid}");
                    self.log(now, swho.clone(), format!("reply {}", fmt_items(&reply)));
                    if !will_listen {
                        continue;
                    }
                    if deliver(&ch, d, &mut self.rng) {
                        self.log(now, who.clone(), format!("rx station={sid}"));
                        self.tags[i].handle_reply(&reply, now);
                        self.drain_tag_notes(i, now);
                    } else {
                        self.log(now, swho, format!("replydrop tag={}", self.tags[i].tag_id()));
                    }
                }
            }
        }
    }

    fn run(mut self) -> Result<SimOutcome, SimError> {
        for i in 0..self.tags.len() {
            self.drain_tag_notes(i, 0);
            self.reschedule(i);
        }
        for s in 0..self.stations.len() {
            self.drain_station_notes(s, 0);
        }
        while let Some(Reverse((t, _, _, kind, i))) = self.heap.pop() {
            if t > self.sc.duration_us {
                break;
            }
            if self.scheduled[i][kind as usize] != Some(t) {
                continue;
            }
            self.scheduled[i][kind as usize] = None;
            match kind {
                EventKind::Slot => self.slot(i, t),
                EventKind::Tick => {
                    self.tags[i].on_second(t);
                }
                EventKind::Silence => {
                    self.tags[i].on_silence(t);
                }
                EventKind::Stall => {
                    self.tags[i].on_stall_check(t);
                }
                EventKind::Reboot => {
                    self.reboot_idx[i] += 1;
                    let who = format!("tag={}", self.tags[i].tag_id());
                    self.log(t, who, "powerloss".to_string());
                    self.tags[i].reboot(t)?;
                }
            }
            self.drain_tag_notes(i, t);
            self.reschedule(i);
        }
        Ok(SimOutcome {
            trace: self.trace,
            tags: self.tags,
            stations: self.stations,
        })
    }
}

/// Runs a scenario to completion.
pub fn run(sc: &Scenario) -> Result<SimOutcome, SimError> {
    let errs = sc.validate();
    if !errs.is_empty() {
        return Err(SimError::Validation(errs));
    }
    let mut order: Vec<usize> = (0..sc.tags.len()).collect();
    order.sort_by_key(|&i| sc.tags[i].id);
    let sc_sorted = Scenario {
        tags: order.iter().map(|&i| sc.tags[i].clone()).collect(),
        ..sc.clone()
    };
    let sc = &sc_sorted;
    let mut tags = Vec::new();
    for spec in &sc.tags {
        let media = spec
            .media
            .clone()
            .unwrap_or_else(|| Media::new(MediaGeometry::nor(spec.sectors)));
        let opts = TagOptions {
            seed: sc.seed,
            utc_base_s: sc.utc_start_s,
            clock_offset_s: spec.clock_offset_s,
            battery_voltage: spec.battery_voltage,
            stall: spec.stall,
        };
        let mut def = spec.def.clone();
        def.tag_id = spec.id;
        let mut tag = Tag::boot(def, media, opts, 0)?;
        for k in 0..spec.prefill {
            let payload: Vec<u8> = (0..spec.prefill_bytes)
                .map(|j| (k as u8).wrapping_mul(31).wrapping_add(j as u8))
                .collect();
            tag.log_opaque(&payload);
        }
        if spec.prefill > 0 {
            tag.flush_log()?;
        }
        tags.push(tag);
    }
    let mut stations = Vec::new();
    let mut sorted_stations = sc.stations.clone();
    sorted_stations.sort_by_key(|s| s.id);
    for spec in &sorted_stations {
        let store = match spec.store {
            StoreKind::Tethered => RecordStore::tethered(spec.capacity),
            StoreKind::Sd { sectors } => RecordStore::sd(sectors, spec.id, spec.capacity)?,
        };
        let mut st = BaseStation::new(spec.id, spec.clock_valid, sc.utc_start_s, store);
        for i in &spec.intents {
            st.add_intent(*i);
        }
        stations.push(st);
    }
    let sc_final = Scenario {
        stations: sorted_stations,
        ..sc.clone()
    };
    let n = tags.len();
    let engine = Engine {
        sc: &sc_final,
        tags,
        stations,
        rng: ChaCha8Rng::seed_from_u64(sc.seed),
        heap: BinaryHeap::new(),
        scheduled: vec![[None; 5]; n],
        reboot_idx: vec![0; n],
        seq: 0,
        trace: Vec::new(),
    };
    engine.run()
}
