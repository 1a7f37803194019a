//! Tag behavior definitions: radio setups, slot configurations, the
//! configuration state machine, and the 1 Hz sensing schedule.
//!
//! Text form:
//!
//! ```text
//! [tag]
//! id = 42
//! period_ms = 500
//! initial = 0
//!
//! [setup ATLAS_433_92]
//! kind = atlas-ping            # atlas-ping | data-shortrange | data-longrange
//! bitrate = 1000000
//! ping_bits = 8192
//!
//! [config 1]
//! cycle = 8
//! slot ATLAS_433_92 = every 4 from 0, tx
//! slot DATA_433_92 = every 8 from 7, txrx
//!
//! [transitions]
//! from 0 on wakeup 1 -> config 1
//! on silence 10s -> config 0   # without `from`: applies in every other config
//!
//! [sensor acceleration]
//! every = 4
//! mode = burst
//! rate_hz = 25
//! duration_s = 2
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{BlockError, DefError};
use crate::log::MAX_PAYLOAD;
use crate::sections::{parse_hex_bytes, parse_sections, parse_u64, Entry, Section};
use crate::wire::{decode_header, encode_header};

pub const MAX_CONFIGS: usize = 16;
pub const DEFAULT_UPLOAD_THRESHOLD: u32 = 4096;
pub const DEFAULT_SILENCE_WINDOW_S: u32 = 10;
/// Bytes in front of the samples of an accumulation item (start timestamp).
pub const ACCUMULATION_HEADER: usize = 4;
/// Bytes in front of the samples of a burst fragment (timestamp + index).
pub const FRAGMENT_HEADER: usize = 5;

/// The definition shown in the documentation: two configurations, ATLAS pings
/// every 4th slot and a listening data slot every 8th slot in configuration 1.
/// Configuration 0 pings every other slot and opens a data slot every 16th.
pub const SAMPLE_DEFINITION: &str = include_str!("../fixtures/sample.tagdef");
/// Sensor-less logger with a fast upload configuration.
pub const UPLOADER_DEFINITION: &str = include_str!("../fixtures/uploader.tagdef");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SetupKind {
    AtlasPing,
    DataShortRange,
    DataLongRange,
}

impl SetupKind {
    pub fn name(self) -> &'static str {
        match self {
            SetupKind::AtlasPing => "atlas-ping",
            SetupKind::DataShortRange => "data-shortrange",
            SetupKind::DataLongRange => "data-longrange",
        }
    }

    fn code(self) -> u8 {
        match self {
            SetupKind::AtlasPing => 0,
            SetupKind::DataShortRange => 1,
            SetupKind::DataLongRange => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => SetupKind::AtlasPing,
            1 => SetupKind::DataShortRange,
            2 => SetupKind::DataLongRange,
            _ => return None,
        })
    }

    pub fn default_bitrate(self) -> u32 {
        match self {
            SetupKind::AtlasPing => 1_000_000,
            SetupKind::DataShortRange => 500_000,
            SetupKind::DataLongRange => 31_500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadioSetup {
    pub name: String,
    pub kind: SetupKind,
    pub bitrate: u32,
    pub ping_bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotMode {
    TxOnly,
    TxThenRx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotAllocation {
    pub setup: String,
    pub every: u32,
    pub from: u32,
    pub mode: SlotMode,
}

impl SlotAllocation {
    pub fn claims(&self, slot: u64) -> bool {
        slot % self.every as u64 == self.from as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    pub index: u8,
    pub cycle_length: u32,
    pub allocations: Vec<SlotAllocation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Trigger {
    Wakeup(u8),
    Silence { seconds: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Transition {
    pub from: u8,
    pub trigger: Trigger,
    pub to: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorKind {
    PressureTemperature,
    Acceleration,
}

impl SensorKind {
    pub fn name(self) -> &'static str {
        match self {
            SensorKind::PressureTemperature => "pressure-temperature",
            SensorKind::Acceleration => "acceleration",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pressure-temperature" | "pressure" => Some(SensorKind::PressureTemperature),
            "acceleration" | "accel" => Some(SensorKind::Acceleration),
            _ => None,
        }
    }

    /// Bytes per packed sample: pressure u24 (1/8 Pa) + temperature i8 (deg C),
    /// or three i16 acceleration axes.
    pub fn sample_size(self) -> usize {
        match self {
            SensorKind::PressureTemperature => 4,
            SensorKind::Acceleration => 6,
        }
    }

    fn code(self) -> u8 {
        match self {
            SensorKind::PressureTemperature => 0,
            SensorKind::Acceleration => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(SensorKind::PressureTemperature),
            1 => Some(SensorKind::Acceleration),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    OneShot,
    Burst { rate_hz: u32, duration_s: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorSchedule {
    pub kind: SensorKind,
    pub every_s: u32,
    pub mode: SamplingMode,
    /// One-shot samples accumulated per log item.
    pub batch: u32,
    pub config: Vec<u8>,
}

impl SensorSchedule {
    pub fn max_batch(kind: SensorKind) -> u32 {
        ((MAX_PAYLOAD - ACCUMULATION_HEADER) / kind.sample_size()) as u32
    }

    pub fn burst_samples(&self) -> u32 {
        match self.mode {
            SamplingMode::OneShot => 1,
            SamplingMode::Burst {
                rate_hz,
                duration_s,
            } => rate_hz * duration_s,
        }
    }

    /// Samples per burst fragment: the burst is split into the fewest fragments
    /// that fit a log item, with samples spread evenly across them.
    pub fn fragment_layout(&self) -> (u32, u32) {
        let n = self.burst_samples();
        let per_item = ((MAX_PAYLOAD - FRAGMENT_HEADER) / self.kind.sample_size()) as u32;
        let fragments = n.div_ceil(per_item).max(1);
        let per_fragment = n.div_ceil(fragments);
        (fragments, per_fragment)
    }

    /// Encoding used both in the config block and in sensor-configuration log items.
    pub fn encode(&self) -> Vec<u8> {
        let mut p = vec![self.kind.code()];
        p.extend_from_slice(&self.every_s.to_le_bytes());
        match self.mode {
            SamplingMode::OneShot => {
                p.push(0);
                p.extend_from_slice(&[0; 8]);
            }
            SamplingMode::Burst {
                rate_hz,
                duration_s,
            } => {
                p.push(1);
                p.extend_from_slice(&rate_hz.to_le_bytes());
                p.extend_from_slice(&duration_s.to_le_bytes());
            }
        }
        p.extend_from_slice(&(self.batch as u16).to_le_bytes());
        p.extend_from_slice(&self.config);
        p
    }

    pub fn decode(p: &[u8]) -> Option<Self> {
        if p.len() < 16 {
            return None;
        }
        let kind = SensorKind::from_code(p[0])?;
        let every_s = u32::from_le_bytes(p[1..5].try_into().ok()?);
        let rate_hz = u32::from_le_bytes(p[6..10].try_into().ok()?);
        let duration_s = u32::from_le_bytes(p[10..14].try_into().ok()?);
        let mode = match p[5] {
            0 => SamplingMode::OneShot,
            1 => SamplingMode::Burst {
                rate_hz,
                duration_s,
            },
            _ => return None,
        };
        Some(SensorSchedule {
            kind,
            every_s,
            mode,
            batch: u16::from_le_bytes([p[14], p[15]]) as u32,
            config: p[16..].to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagDefinition {
    pub tag_id: u64,
    pub period_ms: u32,
    pub setups: Vec<RadioSetup>,
    /// Sorted by index.
    pub configurations: Vec<Configuration>,
    pub initial_config: u8,
    /// Sorted, with `from` always explicit.
    pub transitions: Vec<Transition>,
    pub sensors: Vec<SensorSchedule>,
    pub upload_threshold: u32,
    pub actuator_config: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotAction<'a> {
    Idle,
    Tx {
        setup: &'a str,
        mode: SlotMode,
    },
}

/// What a configuration does in an absolute slot.
pub fn slot_action(config: &Configuration, slot: u64) -> SlotAction<'_> {
    config
        .allocations
        .iter()
        .find(|a| a.claims(slot))
        .map_or(SlotAction::Idle, |a| SlotAction::Tx {
            setup: &a.setup,
            mode: a.mode,
        })
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Two cyclic allocations collide iff their offsets agree modulo gcd(every).
fn allocations_collide(a: &SlotAllocation, b: &SlotAllocation) -> bool {
    let g = gcd(a.every, b.every);
    a.from % g == b.from % g
}

impl TagDefinition {
    pub fn config(&self, index: u8) -> Option<&Configuration> {
        self.configurations.iter().find(|c| c.index == index)
    }

    pub fn setup(&self, name: &str) -> Option<&RadioSetup> {
        self.setups.iter().find(|s| s.name == name)
    }

    pub fn highest_config(&self) -> u8 {
        self.configurations.iter().map(|c| c.index).max().unwrap_or(0)
    }

    pub fn wakeup_transition(&self, from: u8, arg: u8) -> Option<u8> {
        self.transitions
            .iter()
            .find(|t| t.from == from && t.trigger == Trigger::Wakeup(arg))
            .map(|t| t.to)
    }

    pub fn silence_transition(&self, from: u8) -> Option<(u32, u8)> {
        self.transitions.iter().find_map(|t| match t.trigger {
            Trigger::Silence { seconds } if t.from == from => Some((seconds, t.to)),
            _ => None,
        })
    }

    pub fn sensor(&self, kind: SensorKind) -> Option<&SensorSchedule> {
        self.sensors.iter().find(|s| s.kind == kind)
    }

    /// Checks every structural invariant and brings lists into canonical order.
    pub fn validate(mut self) -> Result<Self, DefError> {
        fn err(m: impl Into<String>) -> DefError {
            DefError::semantic(m)
        }
        if self.period_ms == 0 {
            return Err(err("period must be positive"));
        }
        let mut names = BTreeSet::new();
        for s in &self.setups {
            if !names.insert(s.name.as_str()) {
                return Err(err(format!("setup `{}` defined twice", s.name)));
            }
            if s.bitrate == 0 {
                return Err(err(format!("setup `{}` has zero bitrate", s.name)));
            }
        }
        if self.configurations.is_empty() {
            return Err(err("no configurations defined"));
        }
        if self.configurations.len() > MAX_CONFIGS {
            return Err(err("at most 16 configurations"));
        }
        self.configurations.sort_by_key(|c| c.index);
        for w in self.configurations.windows(2) {
            if w[0].index == w[1].index {
                return Err(err(format!("configuration {} defined twice", w[0].index)));
            }
        }
        for c in &self.configurations {
            if c.index as usize >= MAX_CONFIGS {
                return Err(err(format!("configuration index {} exceeds 15", c.index)));
            }
            if c.cycle_length == 0 {
                return Err(err(format!("configuration {} has zero cycle", c.index)));
            }
            for (i, a) in c.allocations.iter().enumerate() {
                if !names.contains(a.setup.as_str()) {
                    return Err(err(format!(
                        "configuration {} references unknown setup `{}`",
                        c.index, a.setup
                    )));
                }
                if a.every == 0 || a.from >= a.every {
                    return Err(err(format!(
                        "configuration {}: `from {}` must be below `every {}`",
                        c.index, a.from, a.every
                    )));
                }
                if c.cycle_length % a.every != 0 {
                    return Err(err(format!(
                        "configuration {}: cycle {} is not a multiple of every {}",
                        c.index, c.cycle_length, a.every
                    )));
                }
                for b in &c.allocations[..i] {
                    if allocations_collide(a, b) {
                        return Err(err(format!(
                            "configuration {}: slot conflict between `{}` and `{}`",
                            c.index, b.setup, a.setup
                        )));
                    }
                }
            }
        }
        if self.config(self.initial_config).is_none() {
            return Err(err(format!(
                "initial configuration {} is not defined",
                self.initial_config
            )));
        }
        if let Some(a) = self.actuator_config {
            if self.config(a).is_none() {
                return Err(err(format!("actuator configuration {a} is not defined")));
            }
        }
        self.transitions.sort();
        self.transitions.dedup();
        for t in &self.transitions {
            if self.config(t.from).is_none() || self.config(t.to).is_none() {
                return Err(err(format!(
                    "transition {} -> {} names an undefined configuration",
                    t.from, t.to
                )));
            }
        }
        for w in self.transitions.windows(2) {
            let same = match (w[0].trigger, w[1].trigger) {
                (Trigger::Wakeup(a), Trigger::Wakeup(b)) => a == b,
                (Trigger::Silence { .. }, Trigger::Silence { .. }) => true,
                _ => false,
            };
            if w[0].from == w[1].from && same {
                return Err(err(format!(
                    "ambiguous transitions out of configuration {}",
                    w[0].from
                )));
            }
        }
        let mut kinds = BTreeSet::new();
        for s in &self.sensors {
            if !kinds.insert(s.kind) {
                return Err(err(format!("sensor `{}` scheduled twice", s.kind.name())));
            }
            if s.every_s == 0 {
                return Err(err("sensor period must be at least 1 s"));
            }
            if s.batch == 0 || s.batch > SensorSchedule::max_batch(s.kind) {
                return Err(err(format!(
                    "sensor `{}`: batch must be 1..={}",
                    s.kind.name(),
                    SensorSchedule::max_batch(s.kind)
                )));
            }
            if let SamplingMode::Burst {
                rate_hz,
                duration_s,
            } = s.mode
            {
                if rate_hz == 0 || duration_s == 0 {
                    return Err(err("burst rate and duration must be positive"));
                }
                if duration_s > s.every_s {
                    return Err(err("burst lasts longer than its period"));
                }
                if s.fragment_layout().0 > 256 {
                    return Err(err("burst needs more than 256 fragments"));
                }
            }
            if s.config.len() > 200 {
                return Err(err("sensor configuration blob too long"));
            }
        }
        Ok(self)
    }

    /// Emits the text form; `parse_tagdef(d.to_text())` gives back `d`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[tag]");
        let _ = writeln!(out, "id = {}", self.tag_id);
        let _ = writeln!(out, "period_ms = {}", self.period_ms);
        let _ = writeln!(out, "initial = {}", self.initial_config);
        let _ = writeln!(out, "upload_threshold = {}", self.upload_threshold);
        if let Some(a) = self.actuator_config {
            let _ = writeln!(out, "actuator_config = {a}");
        }
        for s in &self.setups {
            let _ = writeln!(out, "\n[setup {}]", s.name);
            let _ = writeln!(out, "kind = {}", s.kind.name());
            let _ = writeln!(out, "bitrate = {}", s.bitrate);
            let _ = writeln!(out, "ping_bits = {}", s.ping_bits);
        }
        for c in &self.configurations {
            let _ = writeln!(out, "\n[config {}]", c.index);
            let _ = writeln!(out, "cycle = {}", c.cycle_length);
            for a in &c.allocations {
                let mode = match a.mode {
                    SlotMode::TxOnly => "tx",
                    SlotMode::TxThenRx => "txrx",
                };
                let _ = writeln!(
                    out,
                    "slot {} = every {} from {}, {mode}",
                    a.setup, a.every, a.from
                );
            }
        }
        if !self.transitions.is_empty() {
            let _ = writeln!(out, "\n[transitions]");
            for t in &self.transitions {
                match t.trigger {
                    Trigger::Wakeup(k) => {
                        let _ = writeln!(out, "from {} on wakeup {k} -> config {}", t.from, t.to);
                    }
                    Trigger::Silence { seconds } => {
                        let _ = writeln!(
                            out,
                            "from {} on silence {seconds}s -> config {}",
                            t.from, t.to
                        );
                    }
                }
            }
        }
        for s in &self.sensors {
            let _ = writeln!(out, "\n[sensor {}]", s.kind.name());
            let _ = writeln!(out, "every = {}", s.every_s);
            match s.mode {
                SamplingMode::OneShot => {
                    let _ = writeln!(out, "mode = one-shot");
                }
                SamplingMode::Burst {
                    rate_hz,
                    duration_s,
                } => {
                    let _ = writeln!(out, "mode = burst");
                    let _ = writeln!(out, "rate_hz = {rate_hz}");
                    let _ = writeln!(out, "duration_s = {duration_s}");
                }
            }
            let _ = writeln!(out, "batch = {}", s.batch);
            if !s.config.is_empty() {
                let hex: String = s.config.iter().map(|b| format!("{b:02x}")).collect();
                let _ = writeln!(out, "config = {hex}");
            }
        }
        out
    }
}

fn parse_seconds(e: &Entry, s: &str) -> Result<u32, DefError> {
    let s = s.trim();
    let num = s.strip_suffix('s').unwrap_or(s);
    if num.contains('.') {
        let v: f64 = num
            .parse()
            .map_err(|_| e.err(format!("expected whole seconds, found `{s}`")))?;
        if v.fract() != 0.0 {
            return Err(e.err(format!("`{s}` is not on the 1 Hz grid")));
        }
        return Ok(v as u32);
    }
    num.parse()
        .map_err(|_| e.err(format!("expected whole seconds, found `{s}`")))
}

fn small<T: TryFrom<u64>>(e: &Entry, v: u64) -> Result<T, DefError> {
    T::try_from(v).map_err(|_| e.err(format!("value {v} out of range")))
}

fn parse_slot(e: &Entry, setup: &str) -> Result<SlotAllocation, DefError> {
    // every E from F, tx|txrx
    let (spec, mode) = e
        .value
        .rsplit_once(',')
        .ok_or_else(|| e.err("expected `every E from F, tx|txrx`"))?;
    let mode = match mode.trim() {
        "tx" => SlotMode::TxOnly,
        "txrx" => SlotMode::TxThenRx,
        m => return Err(e.err(format!("unknown slot mode `{m}`"))),
    };
    let words: Vec<&str> = spec.split_whitespace().collect();
    let [ "every", every, "from", from ] = words.as_slice() else {
        return Err(e.err("expected `every E from F, tx|txrx`"));
    };
    Ok(SlotAllocation {
        setup: setup.to_string(),
        every: small(e, parse_u64(e, every)?)?,
        from: small(e, parse_u64(e, from)?)?,
        mode,
    })
}

fn parse_transition(e: &Entry, config_count: &[u8]) -> Result<Vec<Transition>, DefError> {
    let words: Vec<&str> = e.key.split_whitespace().collect();
    let (from, rest) = match words.as_slice() {
        ["from", f, rest @ ..] => (Some(small::<u8>(e, parse_u64(e, f)?)?), rest),
        rest => (None, rest),
    };
    let bad = || e.err("expected `[from F] on wakeup K|silence Ns -> config M`");
    let (trigger, to) = match rest {
        ["on", "wakeup", k, "->", "config", m] => (
            Trigger::Wakeup(small(e, parse_u64(e, k)?)?),
            small::<u8>(e, parse_u64(e, m)?)?,
        ),
        ["on", "silence", s, "->", "config", m] => (
            Trigger::Silence {
                seconds: parse_seconds(e, s)?,
            },
            small::<u8>(e, parse_u64(e, m)?)?,
        ),
        _ => return Err(bad()),
    };
    if let Trigger::Wakeup(k) = trigger {
        if k > 15 {
            return Err(e.err("wakeup argument must be 0..=15"));
        }
    }
    Ok(match from {
        Some(f) => vec![Transition { from: f, trigger, to }],
        None => config_count
            .iter()
            .filter(|&&c| c != to)
            .map(|&c| Transition {
                from: c,
                trigger,
                to,
            })
            .collect(),
    })
}

fn parse_sensor(sec: &Section) -> Result<SensorSchedule, DefError> {
    sec.check_keys(&["every", "mode", "rate_hz", "duration_s", "batch", "config"])?;
    let arg = sec.arg.as_deref().unwrap_or("");
    let kind = SensorKind::parse(arg).ok_or_else(|| sec.err(format!("unknown sensor `{arg}`")))?;
    let every = sec.require("every")?;
    let every_s = parse_seconds(every, &every.value)?;
    let mode = match sec.get("mode").map(|e| e.value.as_str()) {
        None | Some("one-shot") => SamplingMode::OneShot,
        Some("burst") => {
            let r = sec.require("rate_hz")?;
            let d = sec.require("duration_s")?;
            SamplingMode::Burst {
                rate_hz: small(r, parse_u64(r, &r.value)?)?,
                duration_s: parse_seconds(d, &d.value)?,
            }
        }
        Some(m) => {
            return Err(sec.get("mode").unwrap().err(format!("unknown mode `{m}`")));
        }
    };
    let batch = match sec.get("batch") {
        Some(b) => small(b, parse_u64(b, &b.value)?)?,
        None => SensorSchedule::max_batch(kind),
    };
    let config = match sec.get("config") {
        Some(c) => parse_hex_bytes(c)?,
        None => Vec::new(),
    };
    Ok(SensorSchedule {
        kind,
        every_s,
        mode,
        batch,
        config,
    })
}

pub fn parse_tagdef(text: &str) -> Result<TagDefinition, DefError> {
    let sections = parse_sections(text)?;
    let tag = sections
        .iter()
        .find(|s| s.kind == "tag")
        .ok_or_else(|| DefError::at(1, 1, "missing [tag] section"))?;
    tag.check_keys(&["id", "period_ms", "initial", "upload_threshold", "actuator_config"])?;
    let id = tag.require("id")?;
    let period = tag.require("period_ms")?;
    let mut def = TagDefinition {
        tag_id: parse_u64(id, &id.value)?,
        period_ms: small(period, parse_u64(period, &period.value)?)?,
        setups: Vec::new(),
        configurations: Vec::new(),
        initial_config: 0,
        transitions: Vec::new(),
        sensors: Vec::new(),
        upload_threshold: DEFAULT_UPLOAD_THRESHOLD,
        actuator_config: None,
    };
    if let Some(e) = tag.get("initial") {
        def.initial_config = small(e, parse_u64(e, &e.value)?)?;
    }
    if let Some(e) = tag.get("upload_threshold") {
        def.upload_threshold = small(e, parse_u64(e, &e.value)?)?;
    }
    if let Some(e) = tag.get("actuator_config") {
        def.actuator_config = Some(small(e, parse_u64(e, &e.value)?)?);
    }

    for sec in &sections {
        match sec.kind.as_str() {
            "tag" | "transitions" => {}
            "setup" => {
                sec.check_keys(&["kind", "bitrate", "ping_bits"])?;
                let name = sec
                    .arg
                    .clone()
                    .ok_or_else(|| sec.err("[setup] needs a name"))?;
                let k = sec.require("kind")?;
                let kind = match k.value.as_str() {
                    "atlas-ping" => SetupKind::AtlasPing,
                    "data-shortrange" => SetupKind::DataShortRange,
                    "data-longrange" => SetupKind::DataLongRange,
                    v => return Err(k.err(format!("unknown setup kind `{v}`"))),
                };
                let bitrate = match sec.get("bitrate") {
                    Some(e) => small(e, parse_u64(e, &e.value)?)?,
                    None => kind.default_bitrate(),
                };
                let ping_bits = match sec.get("ping_bits") {
                    Some(e) => small(e, parse_u64(e, &e.value)?)?,
                    None if kind == SetupKind::AtlasPing => 8192,
                    None => 0,
                };
                def.setups.push(RadioSetup {
                    name,
                    kind,
                    bitrate,
                    ping_bits,
                });
            }
            "config" => {
                sec.check_keys(&["cycle", "slot"])?;
                let arg = sec.arg.as_deref().ok_or_else(|| sec.err("[config] needs an index"))?;
                let index: u8 = arg
                    .parse()
                    .map_err(|_| sec.err(format!("bad configuration index `{arg}`")))?;
                let cycle = sec.require("cycle")?;
                let mut allocations = Vec::new();
                for e in sec.entries.iter().filter(|e| e.key.starts_with("slot")) {
                    let setup = e
                        .key
                        .strip_prefix("slot ")
                        .ok_or_else(|| DefError::at(e.line, 1, "expected `slot NAME = ...`"))?;
                    if !def.setups.iter().any(|s| s.name == setup)
                        && !sections.iter().any(|s| s.kind == "setup" && s.arg.as_deref() == Some(setup))
                    {
                        return Err(DefError::at(
                            e.line,
                            6,
                            format!("unknown setup `{setup}`"),
                        ));
                    }
                    let alloc = parse_slot(e, setup)?;
                    if let Some(prev) = allocations
                        .iter()
                        .find(|p: &&SlotAllocation| allocations_collide(p, &alloc))
                    {
                        return Err(e.err(format!(
                            "slot conflict with `{}` (every {} from {})",
                            prev.setup, prev.every, prev.from
                        )));
                    }
                    allocations.push(alloc);
                }
                def.configurations.push(Configuration {
                    index,
                    cycle_length: small(cycle, parse_u64(cycle, &cycle.value)?)?,
                    allocations,
                });
            }
            "sensor" => def.sensors.push(parse_sensor(sec)?),
            other => return Err(sec.err(format!("unknown section [{other}]"))),
        }
    }
    let indices: Vec<u8> = def.configurations.iter().map(|c| c.index).collect();
    for sec in sections.iter().filter(|s| s.kind == "transitions") {
        for e in &sec.entries {
            if !e.value.is_empty() {
                return Err(e.err("transition lines have no `=`"));
            }
            def.transitions.extend(parse_transition(e, &indices)?);
        }
    }
    def.validate()
}

// config block section types (data-item codes, two-byte headers)
const BLOCK_VERSION: u8 = 1;
const SEC_TAG: u32 = 8;
const SEC_SETUP: u32 = 9;
const SEC_CONFIG: u32 = 10;
const SEC_TRANSITION: u32 = 11;
const SEC_SENSOR: u32 = 12;

fn push_section(out: &mut Vec<u8>, t: u32, body: &[u8]) {
    out.extend(encode_header(t, body.len()).expect("section fits a data item"));
    out.extend_from_slice(body);
}

/// Binary behavior block: a version byte, then typed sections using the
/// packet data-item header encoding.
pub fn compile_config_block(def: &TagDefinition) -> Vec<u8> {
    let mut out = vec![BLOCK_VERSION];
    let mut tag = Vec::new();
    tag.extend_from_slice(&def.tag_id.to_le_bytes());
    tag.extend_from_slice(&def.period_ms.to_le_bytes());
    tag.push(def.initial_config);
    tag.extend_from_slice(&def.upload_threshold.to_le_bytes());
    tag.push(def.actuator_config.unwrap_or(0xFF));
    push_section(&mut out, SEC_TAG, &tag);
    for s in &def.setups {
        let mut b = vec![s.kind.code()];
        b.extend_from_slice(&s.bitrate.to_le_bytes());
        b.extend_from_slice(&s.ping_bits.to_le_bytes());
        b.extend_from_slice(s.name.as_bytes());
        push_section(&mut out, SEC_SETUP, &b);
    }
    for c in &def.configurations {
        let mut b = vec![c.index];
        b.extend_from_slice(&c.cycle_length.to_le_bytes());
        for a in &c.allocations {
            let setup_idx = def.setups.iter().position(|s| s.name == a.setup).unwrap_or(0xFF);
            b.push(setup_idx as u8);
            b.extend_from_slice(&a.every.to_le_bytes());
            b.extend_from_slice(&a.from.to_le_bytes());
            b.push(matches!(a.mode, SlotMode::TxThenRx) as u8);
        }
        push_section(&mut out, SEC_CONFIG, &b);
    }
    for t in &def.transitions {
        let (kind, arg) = match t.trigger {
            Trigger::Wakeup(k) => (0u8, k as u32),
            Trigger::Silence { seconds } => (1u8, seconds),
        };
        let mut b = vec![t.from, kind];
        b.extend_from_slice(&arg.to_le_bytes());
        b.push(t.to);
        push_section(&mut out, SEC_TRANSITION, &b);
    }
    for s in &def.sensors {
        push_section(&mut out, SEC_SENSOR, &s.encode());
    }
    out
}

pub fn decompile_config_block(block: &[u8]) -> Result<TagDefinition, BlockError> {
    let (&version, mut rest) = block.split_first().ok_or(BlockError::Truncated)?;
    if version != BLOCK_VERSION {
        return Err(BlockError::Version(version));
    }
    let mut def: Option<TagDefinition> = None;
    let malformed = |m: &str| BlockError::Malformed(m.to_string());
    let u32_at = |b: &[u8], i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
    while !rest.is_empty() {
        let (t, l, n) = decode_header(rest).map_err(|_| BlockError::Truncated)?;
        let end = n + l as usize;
        if rest.len() < end {
            return Err(BlockError::Truncated);
        }
        let body = &rest[n..end];
        rest = &rest[end..];
        if t as u32 == SEC_TAG {
            if body.len() != 18 {
                return Err(malformed("tag section"));
            }
            def = Some(TagDefinition {
                tag_id: u64::from_le_bytes(body[..8].try_into().unwrap()),
                period_ms: u32_at(body, 8),
                setups: Vec::new(),
                configurations: Vec::new(),
                initial_config: body[12],
                transitions: Vec::new(),
                sensors: Vec::new(),
                upload_threshold: u32_at(body, 13),
                actuator_config: (body[17] != 0xFF).then_some(body[17]),
            });
            continue;
        }
        let d = def.as_mut().ok_or_else(|| malformed("tag section must come first"))?;
        match t as u32 {
            SEC_SETUP => {
                if body.len() < 9 {
                    return Err(malformed("setup section"));
                }
                d.setups.push(RadioSetup {
                    kind: SetupKind::from_code(body[0]).ok_or_else(|| malformed("setup kind"))?,
                    bitrate: u32_at(body, 1),
                    ping_bits: u32_at(body, 5),
                    name: String::from_utf8(body[9..].to_vec())
                        .map_err(|_| malformed("setup name"))?,
                });
            }
            SEC_CONFIG => {
                if body.len() < 5 || (body.len() - 5) % 10 != 0 {
                    return Err(malformed("config section"));
                }
                let mut allocations = Vec::new();
                for a in body[5..].chunks(10) {
                    let setup = d
                        .setups
                        .get(a[0] as usize)
                        .ok_or_else(|| malformed("slot setup index"))?;
                    allocations.push(SlotAllocation {
                        setup: setup.name.clone(),
                        every: u32_at(a, 1),
                        from: u32_at(a, 5),
                        mode: if a[9] != 0 {
                            SlotMode::TxThenRx
                        } else {
                            SlotMode::TxOnly
                        },
                    });
                }
                d.configurations.push(Configuration {
                    index: body[0],
                    cycle_length: u32_at(body, 1),
                    allocations,
                });
            }
            SEC_TRANSITION => {
                if body.len() != 7 {
                    return Err(malformed("transition section"));
                }
                let arg = u32_at(body, 2);
                let trigger = match body[1] {
                    0 => Trigger::Wakeup(u8::try_from(arg).map_err(|_| malformed("wakeup"))?),
                    1 => Trigger::Silence { seconds: arg },
                    _ => return Err(malformed("trigger kind")),
                };
                d.transitions.push(Transition {
                    from: body[0],
                    trigger,
                    to: body[6],
                });
            }
            SEC_SENSOR => {
                d.sensors
                    .push(SensorSchedule::decode(body).ok_or_else(|| malformed("sensor section"))?);
            }
            other => return Err(BlockError::Malformed(format!("unknown section type {other}"))),
        }
    }
    let def = def.ok_or(BlockError::Truncated)?;
    Ok(def.validate()?)
}
