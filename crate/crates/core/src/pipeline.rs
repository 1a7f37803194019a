//! Post-retrieval processing: a deduplicating item store, per-boot session
//! reports and sensor time series.
//!
//! Store file layout (little-endian):
//!
//! ```text
//! file   := "WTIS" version:u8 count:u32 entry*
//! entry  := flags:u8 record              flags bit 0 conflict, bit 1 suspect
//! record := len:u16 tag_id:u64 creation:u64 addr:u32 type:u8
//!           rx_time_us:u64 station:u16 payload_len:u8 payload
//! ```
//!
//! Entries are sorted by (tag id, log creation time, address). The first
//! content seen for a key wins; later differing content is counted and flagged.
//! Provenance is the earliest (rx time, station) pair that delivered the item.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{PipelineError, StoreError};
use crate::log::{item_type, iterate_items, BootMarker, Validity, ITEM_HEADER_LEN, SECTOR_HEADER_LEN};
use crate::media::Media;
use crate::sensors::{burst_offset_us, classify_item, parse_accumulation, parse_fragment};
use crate::station::ReceivedRecord;
use crate::tagdef::{SamplingMode, SensorKind, SensorSchedule, TagDefinition};

pub const STORE_MAGIC: [u8; 4] = *b"WTIS";
pub const STORE_VERSION: u8 = 1;
/// Sector size assumed when deciding whether an address jump is a sector change.
pub const DEFAULT_SECTOR_SIZE: u32 = 4096;
/// Sea-level standard pressure, Pa.
pub const STANDARD_PRESSURE_PA: f64 = 101_325.0;

const FLAG_CONFLICT: u8 = 1;
const FLAG_SUSPECT: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredItem {
    pub item_type: u8,
    pub payload: Vec<u8>,
    pub rx_time_us: u64,
    pub station_id: u16,
    pub conflict: bool,
    /// Set when a direct log read classified the item as possibly torn.
    pub suspect: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub inserted: usize,
    pub duplicates: usize,
    pub conflicts: usize,
}

impl std::ops::AddAssign for IngestReport {
    fn add_assign(&mut self, o: Self) {
        self.inserted += o.inserted;
        self.duplicates += o.duplicates;
        self.conflicts += o.conflicts;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemStore {
    items: BTreeMap<(u64, u64, u32), StoredItem>,
}

impl ItemStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, tag_id: u64, creation: u64, addr: u32) -> Option<&StoredItem> {
        self.items.get(&(tag_id, creation, addr))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u64, u64, u32), &StoredItem)> {
        self.items.iter()
    }

    /// Distinct (tag id, creation time) logs in the store.
    pub fn logs(&self) -> Vec<(u64, u64)> {
        let mut v: Vec<(u64, u64)> = self.items.keys().map(|k| (k.0, k.1)).collect();
        v.dedup();
        v
    }

    fn insert(&mut self, r: ReceivedRecord, suspect: bool) -> IngestReport {
        let mut rep = IngestReport::default();
        match self.items.get_mut(&r.key()) {
            None => {
                self.items.insert(
                    r.key(),
                    StoredItem {
                        item_type: r.item_type,
                        payload: r.payload,
                        rx_time_us: r.rx_time_us,
                        station_id: r.station_id,
                        conflict: false,
                        suspect,
                    },
                );
                rep.inserted = 1;
            }
            Some(e) if e.item_type == r.item_type && e.payload == r.payload => {
                if (r.rx_time_us, r.station_id) < (e.rx_time_us, e.station_id) {
                    e.rx_time_us = r.rx_time_us;
                    e.station_id = r.station_id;
                }
                e.suspect &= suspect;
                rep.duplicates = 1;
            }
            Some(e) => {
                e.conflict = true;
                rep.conflicts = 1;
            }
        }
        rep
    }

    pub fn ingest(&mut self, records: impl IntoIterator<Item = ReceivedRecord>) -> IngestReport {
        let mut rep = IngestReport::default();
        for r in records {
            rep += self.insert(r, false);
        }
        rep
    }

    /// Ingests a log read directly off a retrieved tag.
    pub fn ingest_image(&mut self, media: &Media) -> Result<IngestReport, PipelineError> {
        let (header, listing) = iterate_items(media).map_err(StoreError::from)?;
        let mut rep = IngestReport::default();
        for e in listing.entries {
            if e.item_type == item_type::LOG_HEADER {
                continue;
            }
            let r = ReceivedRecord {
                tag_id: header.tag_id,
                creation_time: header.creation_time,
                address: e.addr,
                item_type: e.item_type,
                payload: e.payload,
                rx_time_us: 0,
                station_id: 0,
            };
            rep += self.insert(r, e.validity == Validity::Suspect);
        }
        Ok(rep)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = STORE_MAGIC.to_vec();
        out.push(STORE_VERSION);
        out.extend_from_slice(&(self.items.len() as u32).to_le_bytes());
        for (k, v) in &self.items {
            out.push(if v.conflict { FLAG_CONFLICT } else { 0 } | if v.suspect { FLAG_SUSPECT } else { 0 });
            ReceivedRecord {
                tag_id: k.0,
                creation_time: k.1,
                address: k.2,
                item_type: v.item_type,
                payload: v.payload.clone(),
                rx_time_us: v.rx_time_us,
                station_id: v.station_id,
            }
            .encode(&mut out);
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, StoreError> {
        let bad = |m: &str| StoreError::Format(m.to_string());
        if b.len() < 9 || b[..4] != STORE_MAGIC {
            return Err(bad("not an item store"));
        }
        if b[4] != STORE_VERSION {
            return Err(bad(&format!("unsupported store version {}", b[4])));
        }
        let count = u32::from_le_bytes(b[5..9].try_into().unwrap()) as usize;
        let mut store = ItemStore::new();
        let mut off = 9;
        for _ in 0..count {
            let flags = *b.get(off).ok_or_else(|| bad("truncated entry"))?;
            let (r, n) = ReceivedRecord::decode(&b[off + 1..])?;
            off += 1 + n;
            let key = r.key();
            if store.items.last_key_value().is_some_and(|(k, _)| *k >= key) {
                return Err(bad("entries out of order"));
            }
            store.items.insert(
                key,
                StoredItem {
                    item_type: r.item_type,
                    payload: r.payload,
                    rx_time_us: r.rx_time_us,
                    station_id: r.station_id,
                    conflict: flags & FLAG_CONFLICT != 0,
                    suspect: flags & FLAG_SUSPECT != 0,
                },
            );
        }
        if off != b.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    /// Items of one log in address order, structural sector headers dropped.
    fn log_items(&self, tag_id: u64, creation: u64) -> Vec<(u32, &StoredItem)> {
        self.items
            .range((tag_id, creation, 0)..=(tag_id, creation, u32::MAX))
            .filter(|(_, v)| v.item_type != item_type::SECTOR_HEADER)
            .map(|(k, v)| (k.2, v))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockSetEntry {
    pub addr: u32,
    pub delta_us: i64,
    pub was_set: bool,
    pub utc_s: u64,
}

impl ClockSetEntry {
    fn parse(addr: u32, p: &[u8]) -> Option<Self> {
        if p.len() != 17 {
            return None;
        }
        Some(ClockSetEntry {
            addr,
            delta_us: i64::from_le_bytes(p[..8].try_into().ok()?),
            was_set: p[8] != 0,
            utc_s: u64::from_le_bytes(p[9..17].try_into().ok()?),
        })
    }
}

/// Items between one boot marker and the next.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionInfo {
    pub creation_time: u64,
    pub boot: Option<BootMarker>,
    pub boot_addr: Option<u32>,
    /// Items precede the first boot marker the store holds for this log.
    pub missing_boot_marker: bool,
    pub first_addr: u32,
    pub last_addr: u32,
    pub items: usize,
    pub sensor_configs: Vec<SensorSchedule>,
    pub clock_sets: Vec<ClockSetEntry>,
    pub suspect: Vec<u32>,
    pub conflicts: Vec<u32>,
    /// (end of the previous item, next address seen) for unexplained jumps.
    pub address_gaps: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub tag_id: u64,
    pub sessions: Vec<SessionInfo>,
}

impl SessionReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("tag {}\n", self.tag_id);
        for x in &self.sessions {
            let boot = match x.boot {
                Some(b) => format!("boot {} @{}", b.boot_count, x.boot_addr.unwrap_or(0)),
                None => "boot ? (marker missing)".to_string(),
            };
            let _ = writeln!(
                s,
                "log {} {boot} items={} addr={}..{} configs={} clocksets={} suspect={} conflicts={} gaps={}",
                x.creation_time,
                x.items,
                x.first_addr,
                x.last_addr,
                x.sensor_configs.len(),
                x.clock_sets.len(),
                x.suspect.len(),
                x.conflicts.len(),
                x.address_gaps.len()
            );
            for c in &x.clock_sets {
                let _ = writeln!(
                    s,
                    "  clockset @{} delta_us={} was_set={} utc={}",
                    c.addr, c.delta_us, c.was_set, c.utc_s
                );
            }
            for (a, b) in &x.address_gaps {
                let _ = writeln!(s, "  gap {a}..{b}");
            }
        }
        s
    }
}

/// Whether an item ending at `end` and a next item at `next` are adjacent,
/// allowing for the sector header written when an item moves to a new sector.
fn adjacent(end: u32, next: u32, sector_size: u32) -> bool {
    if next == end {
        return true;
    }
    let sector_start = next - next % sector_size;
    next % sector_size == SECTOR_HEADER_LEN as u32 && end <= sector_start && sector_start - end < sector_size
}

fn split_sessions(
    creation: u64,
    items: &[(u32, &StoredItem)],
    sector_size: u32,
) -> Vec<SessionInfo> {
    let mut out: Vec<SessionInfo> = Vec::new();
    for (i, &(addr, it)) in items.iter().enumerate() {
        let boot = (it.item_type == item_type::BOOT_MARKER)
            .then(|| BootMarker::from_payload(&it.payload))
            .flatten();
        if boot.is_some() || out.is_empty() {
            out.push(SessionInfo {
                creation_time: creation,
                boot,
                boot_addr: boot.map(|_| addr),
                missing_boot_marker: boot.is_none(),
                first_addr: addr,
                last_addr: addr,
                items: 0,
                sensor_configs: Vec::new(),
                clock_sets: Vec::new(),
                suspect: Vec::new(),
                conflicts: Vec::new(),
                address_gaps: Vec::new(),
            });
        }
        let s = out.last_mut().unwrap();
        s.items += 1;
        s.last_addr = addr;
        if it.conflict {
            s.conflicts.push(addr);
        }
        match it.item_type {
            item_type::SENSOR_CONFIG => {
                if let Some(c) = SensorSchedule::decode(&it.payload) {
                    s.sensor_configs.push(c);
                }
            }
            item_type::CLOCK_SET => {
                if let Some(c) = ClockSetEntry::parse(addr, &it.payload) {
                    s.clock_sets.push(c);
                }
            }
            _ => {}
        }
        let next = items.get(i + 1);
        let before_boot = next.is_some_and(|(_, n)| n.item_type == item_type::BOOT_MARKER);
        if it.suspect || before_boot {
            s.suspect.push(addr);
        }
        if let Some(&(naddr, _)) = next {
            let end = addr + (ITEM_HEADER_LEN + it.payload.len()) as u32;
            if !adjacent(end, naddr, sector_size) {
                s.address_gaps.push((end, naddr));
            }
        }
    }
    out
}

/// Splits every log of `tag_id` into boot sessions.
pub fn session_report(store: &ItemStore, tag_id: u64, sector_size: u32) -> SessionReport {
    let mut sessions = Vec::new();
    for (tag, creation) in store.logs() {
        if tag == tag_id {
            sessions.extend(split_sessions(creation, &store.log_items(tag, creation), sector_size));
        }
    }
    SessionReport { tag_id, sessions }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeBase {
    /// Seconds since the session's boot; the tag clock was never set.
    SinceBoot,
    /// Tag clock as logged.
    TagClock,
    /// Rebased or corrected with a later clock-set item.
    Rebased,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub t_us: i64,
    pub base: TimeBase,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapReason {
    MissingFragment { start_s: u32, index: u8 },
    SuspectExcluded { addr: u32 },
    /// Consecutive samples further apart than the schedule allows.
    Interval,
    SessionBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    /// Index into `points` of the first point after the gap.
    pub before_point: usize,
    pub reason: GapReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub tag_id: u64,
    pub sensor: SensorKind,
    pub channels: Vec<String>,
    pub points: Vec<Point>,
    pub gaps: Vec<Gap>,
}

impl Series {
    /// Appends an `altitude_m` channel computed from the pressure channel.
    pub fn with_altitude(mut self, p0: f64) -> Result<Series, PipelineError> {
        if self.sensor != SensorKind::PressureTemperature {
            return Ok(self);
        }
        for p in &mut self.points {
            let a = pressure_to_altitude(p.values[0], p0)?;
            p.values.push(a);
        }
        self.channels.push("altitude_m".to_string());
        Ok(self)
    }

    /// Whitespace-separated text, one point per line, gaps as comment lines.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# tag {} sensor {}\n# t_us base {}\n",
            self.tag_id,
            self.sensor.name(),
            self.channels.join(" ")
        );
        let mut gaps = self.gaps.iter().peekable();
        for (i, p) in self.points.iter().enumerate() {
            while let Some(g) = gaps.next_if(|g| g.before_point == i) {
                let _ = writeln!(s, "# gap {:?}", g.reason);
            }
            let base = match p.base {
                TimeBase::SinceBoot => "boot",
                TimeBase::TagClock => "tag",
                TimeBase::Rebased => "rebased",
            };
            let _ = write!(s, "{} {base}", p.t_us);
            for v in &p.values {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        for g in gaps {
            let _ = writeln!(s, "# gap {:?}", g.reason);
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractOptions<'a> {
    /// Fallback for sessions whose sensor-configuration items are missing.
    pub definition: Option<&'a TagDefinition>,
    /// Shift samples logged under a wrong clock by the delta of the next clock set.
    pub correct_clock_errors: bool,
    pub sector_size: u32,
}

impl Default for ExtractOptions<'_> {
    fn default() -> Self {
        ExtractOptions {
            definition: None,
            correct_clock_errors: true,
            sector_size: DEFAULT_SECTOR_SIZE,
        }
    }
}

fn apply_clock_set(
    c: &ClockSetEntry,
    base: &mut TimeBase,
    segment_start: &mut usize,
    points: &mut [Point],
    opts: &ExtractOptions,
) {
    if *base == TimeBase::SinceBoot || opts.correct_clock_errors {
        for p in &mut points[*segment_start..] {
            p.t_us += c.delta_us;
            p.base = TimeBase::Rebased;
        }
    }
    *segment_start = points.len();
    *base = TimeBase::TagClock;
}

fn session_points(
    store: &ItemStore,
    tag_id: u64,
    s: &SessionInfo,
    sched: &SensorSchedule,
    opts: &ExtractOptions,
    points: &mut Vec<Point>,
    gaps: &mut Vec<Gap>,
) {
    let first_boot = s.boot.is_some_and(|b| b.boot_count == 1);
    // the first boot of a log runs on a set clock; later boots count from zero
    let mut base = if first_boot || s.missing_boot_marker {
        TimeBase::TagClock
    } else {
        TimeBase::SinceBoot
    };
    let mut segment_start = points.len();
    let mut clock_sets = s.clock_sets.iter().peekable();
    // burst start -> (index of its first point, fragment indices seen)
    let mut bursts: BTreeMap<u32, (usize, Vec<u8>)> = BTreeMap::new();
    for (addr, it) in store.log_items(tag_id, s.creation_time) {
        if addr < s.first_addr || addr > s.last_addr {
            continue;
        }
        while let Some(c) = clock_sets.next_if(|c| c.addr < addr) {
            apply_clock_set(c, &mut base, &mut segment_start, points, opts);
        }
        let Some((kind, burst)) = classify_item(it.item_type) else { continue };
        if kind != sched.kind || burst != matches!(sched.mode, SamplingMode::Burst { .. }) {
            continue;
        }
        if s.suspect.contains(&addr) {
            gaps.push(Gap {
                before_point: points.len(),
                reason: GapReason::SuspectExcluded { addr },
            });
            continue;
        }
        let values = |smp: &crate::sensors::Sample| smp.physical(&sched.config);
        if burst {
            let SamplingMode::Burst { rate_hz, .. } = sched.mode else { continue };
            let Some((start, index, samples)) = parse_fragment(kind, &it.payload) else { continue };
            let (_, per) = sched.fragment_layout();
            bursts.entry(start).or_insert((points.len(), Vec::new())).1.push(index);
            for (n, smp) in samples.iter().enumerate() {
                let k = index as u32 * per + n as u32;
                points.push(Point {
                    t_us: start as i64 * 1_000_000 + burst_offset_us(k, rate_hz),
                    base,
                    values: values(smp),
                });
            }
        } else {
            let Some((start, samples)) = parse_accumulation(kind, &it.payload) else { continue };
            for (n, smp) in samples.iter().enumerate() {
                points.push(Point {
                    t_us: (start as i64 + n as i64 * sched.every_s as i64) * 1_000_000,
                    base,
                    values: values(smp),
                });
            }
        }
    }
    for c in clock_sets {
        apply_clock_set(c, &mut base, &mut segment_start, points, opts);
    }
    let (expected, _) = sched.fragment_layout();
    for (start_s, (at, seen)) in bursts {
        for index in (0..expected as u8).filter(|i| !seen.contains(i)) {
            gaps.push(Gap {
                before_point: at,
                reason: GapReason::MissingFragment { start_s, index },
            });
        }
    }
}

/// Reconstructs the time series of one sensor across every log and session.
pub fn extract_series(
    store: &ItemStore,
    tag_id: u64,
    kind: SensorKind,
    opts: &ExtractOptions,
) -> Result<Series, PipelineError> {
    let report = session_report(store, tag_id, opts.sector_size);
    let mut points = Vec::new();
    let mut gaps = Vec::new();
    for (i, s) in report.sessions.iter().enumerate() {
        let sched = s
            .sensor_configs
            .iter()
            .find(|c| c.kind == kind)
            .or_else(|| opts.definition.and_then(|d| d.sensor(kind)));
        let Some(sched) = sched else {
            let has_samples = store
                .log_items(tag_id, s.creation_time)
                .iter()
                .any(|(a, it)| {
                    (s.first_addr..=s.last_addr).contains(a)
                        && classify_item(it.item_type).is_some_and(|(k, _)| k == kind)
                });
            if has_samples {
                return Err(PipelineError::MissingConfig {
                    tag_id,
                    session: s.first_addr,
                    sensor: kind.name().to_string(),
                });
            }
            continue;
        };
        if i > 0 && !points.is_empty() {
            gaps.push(Gap {
                before_point: points.len(),
                reason: GapReason::SessionBoundary,
            });
        }
        let from = points.len();
        session_points(store, tag_id, s, sched, opts, &mut points, &mut gaps);
        let interval = sched.every_s as i64 * 1_000_000;
        for j in from + 1..points.len() {
            if points[j].t_us - points[j - 1].t_us > interval * 3 / 2 {
                gaps.push(Gap {
                    before_point: j,
                    reason: GapReason::Interval,
                });
            }
        }
    }
    gaps.sort_by_key(|g| g.before_point);
    let channels = match kind {
        SensorKind::PressureTemperature => vec!["pressure_pa", "temperature_c"],
        SensorKind::Acceleration => vec!["x_g", "y_g", "z_g"],
    };
    Ok(Series {
        tag_id,
        sensor: kind,
        channels: channels.into_iter().map(String::from).collect(),
        points,
        gaps,
    })
}

/// International barometric formula, metres above the `p0` reference level.
pub fn pressure_to_altitude(p: f64, p0: f64) -> Result<f64, PipelineError> {
    if !(p > 0.0 && p0 > 0.0) || !p.is_finite() || !p0.is_finite() {
        return Err(PipelineError::NonPositivePressure { p, p0 });
    }
    Ok(44_330.0 * (1.0 - (p / p0).powf(1.0 / 5.255)))
}
