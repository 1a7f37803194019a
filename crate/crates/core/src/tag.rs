//! The tag as a deterministic state machine driven by an external clock.
//!
//! Times passed in are simulation microseconds. The tag's own clock is
//! `utc + offset`; before it is first set the offset makes it count seconds
//! since boot. Three periodic activities run independently:
//!
//! * radio slots at `schedule_origin + k * period`, dispatched by the active
//!   configuration,
//! * sensing on the tag's whole-second grid,
//! * battery voltage checks every second while stalled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::battery::{BatteryState, StallParams, VOLTAGE_CHECK_US};
use crate::error::LogError;
use crate::log::{self, item_type, recover, BootMarker, Log, Step, Walker, LOG_HEADER_LEN};
use crate::media::Media;
use crate::sensors::{
    accumulation_payload, burst_fragments, burst_offset_us, item_type_for, Sample, SensorSim,
};
use crate::tagdef::{
    slot_action, SamplingMode, SensorKind, SetupKind, SlotAction, SlotMode, TagDefinition,
    DEFAULT_SILENCE_WINDOW_S,
};
use crate::wire::{build_packet, DataItem, LogItemCarrier, LogState, TagState, WakeupTarget};

pub const FIRMWARE_ID: u16 = 0x0102;
pub const STATE_ITEM_INTERVAL_US: u64 = 60_000_000;

#[derive(Debug, Clone)]
pub struct TagOptions {
    pub seed: u64,
    /// UTC seconds at simulation time 0.
    pub utc_base_s: u64,
    /// Initial clock error in seconds, or `None` for an unset clock.
    pub clock_offset_s: Option<i64>,
    pub battery_voltage: f64,
    pub stall: StallParams,
}

impl Default for TagOptions {
    fn default() -> Self {
        TagOptions {
            seed: 0,
            utc_base_s: 1_600_000_000,
            clock_offset_s: Some(0),
            battery_voltage: 3.0,
            stall: StallParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TagNote {
    Boot { boot_count: u16, ack_cursor: u32 },
    Transition { from: u8, to: u8, cause: &'static str },
    Acked { addr: u32, next: u32 },
    ClockSet { delta_us: i64 },
    Stalled,
    Resumed,
    ActuatorOn,
    LogFull,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotOutcome {
    Idle,
    Stalled,
    Ping {
        setup: String,
        bits: u32,
    },
    Data {
        setup: String,
        will_listen: bool,
        items: Vec<DataItem>,
        payload: Vec<u8>,
    },
}

/// A sample as it went into the log, stamped with the tag's clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthSample {
    pub kind: SensorKind,
    pub timestamp_us: i64,
    pub sample: Sample,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagStats {
    pub pings: u64,
    pub data_packets: u64,
    pub carriers_sent: u64,
    pub items_logged: u64,
    pub items_dropped: u64,
    pub stalls: u32,
}

#[derive(Debug, Clone)]
struct Accumulator {
    start_s: u32,
    samples: Vec<Sample>,
}

#[derive(Debug, Clone)]
pub struct Tag {
    def: TagDefinition,
    log: Log,
    opts: TagOptions,
    sim: SensorSim,
    rng: ChaCha8Rng,
    battery: BatteryState,
    config: u8,
    config_entered_us: u64,
    schedule_origin_us: u64,
    next_slot: u64,
    offset_us: i64,
    clock_set: bool,
    next_tick_local_s: i64,
    last_contact_us: Option<u64>,
    next_state_items_us: u64,
    stall_check_us: Option<u64>,
    boot_count: u16,
    actuator_on: bool,
    accumulators: Vec<(SensorKind, Accumulator)>,
    truth: Vec<TruthSample>,
    pending_truth: Vec<TruthSample>,
    notes: Vec<TagNote>,
    stats: TagStats,
}

fn last_boot_count(log: &Log) -> u16 {
    let mut count = 0;
    let limit = log.durable_addr() as usize;
    for step in Walker::over(log.media(), LOG_HEADER_LEN).limited(limit) {
        if let Step::Item {
            addr,
            item_type: item_type::BOOT_MARKER,
            ..
        } = step
        {
            if let Some(m) = log
                .item_at(addr as u32)
                .and_then(|(_, p)| BootMarker::from_payload(p))
            {
                count = m.boot_count;
            }
        }
    }
    count
}

impl Tag {
    /// Powers the tag up on `media`: formats a blank medium or recovers an
    /// existing log, then logs a boot marker and the sensor configuration.
    pub fn boot(
        def: TagDefinition,
        media: Media,
        opts: TagOptions,
        now_us: u64,
    ) -> Result<Tag, LogError> {
        let utc_now_s = opts.utc_base_s + now_us / 1_000_000;
        let log = if media.is_fully_erased() {
            log::format_log(media, def.tag_id, utc_now_s, 0)?
        } else {
            recover(media)?.0
        };
        let rng = ChaCha8Rng::seed_from_u64(opts.seed ^ def.tag_id);
        let battery = BatteryState::new(opts.battery_voltage, opts.stall);
        let mut tag = Tag {
            sim: SensorSim::new(opts.seed ^ def.tag_id.rotate_left(17)),
            config: def.initial_config,
            def,
            log,
            opts,
            rng,
            battery,
            config_entered_us: now_us,
            schedule_origin_us: now_us,
            next_slot: 0,
            offset_us: 0,
            clock_set: false,
            next_tick_local_s: 0,
            last_contact_us: None,
            next_state_items_us: now_us,
            stall_check_us: None,
            boot_count: 0,
            actuator_on: false,
            accumulators: Vec::new(),
            truth: Vec::new(),
            pending_truth: Vec::new(),
            notes: Vec::new(),
            stats: TagStats::default(),
        };
        tag.start(now_us)?;
        Ok(tag)
    }

    fn start(&mut self, now_us: u64) -> Result<(), LogError> {
        let utc_us = self.utc_us(now_us);
        match self.opts.clock_offset_s {
            Some(off) if self.boot_count == 0 => {
                self.offset_us = off * 1_000_000;
                self.clock_set = true;
            }
            _ => {
                self.offset_us = -utc_us;
                self.clock_set = false;
            }
        }
        self.next_tick_local_s = self.local_us(now_us).div_euclid(1_000_000)
            + i64::from(self.local_us(now_us).rem_euclid(1_000_000) != 0);
        self.boot_count = last_boot_count(&self.log).wrapping_add(1);
        self.config = self.def.initial_config;
        self.config_entered_us = now_us;
        self.schedule_origin_us = now_us;
        self.next_slot = 0;
        self.last_contact_us = None;
        self.next_state_items_us = now_us;
        self.stall_check_us = None;
        self.accumulators.clear();
        self.pending_truth.clear();
        let marker = BootMarker {
            boot_count: self.boot_count,
            firmware_id: FIRMWARE_ID,
        };
        let configs: Vec<(u8, Vec<u8>)> = self
            .def
            .sensors
            .iter()
            .map(|s| (item_type::SENSOR_CONFIG, s.encode()))
            .collect();
        match self.log.log_boot(marker, &configs) {
            Ok(_) => {}
            Err(LogError::Full) => self.notes.push(TagNote::LogFull),
            Err(e) => return Err(e),
        }
        self.notes.push(TagNote::Boot {
            boot_count: self.boot_count,
            ack_cursor: self.log.cursor().ack_cursor,
        });
        if self.def.actuator_config == Some(self.config) {
            self.latch_actuator();
        }
        Ok(())
    }

    /// Power loss followed by a fresh boot: RAM state (buffered log items,
    /// partial sensor batches, the clock) is lost.
    pub fn reboot(&mut self, now_us: u64) -> Result<(), LogError> {
        let mut media = self.log.media().clone();
        media.power_cycle();
        self.log = recover(media)?.0;
        self.start(now_us)
    }

    /// Like [`reboot`](Self::reboot) but on a medium the caller already
    /// power-cycled (for example after an injected fault).
    pub fn reboot_with(&mut self, mut media: Media, now_us: u64) -> Result<(), LogError> {
        media.power_cycle();
        self.log = recover(media)?.0;
        self.start(now_us)
    }

    fn utc_us(&self, now_us: u64) -> i64 {
        (self.opts.utc_base_s * 1_000_000 + now_us) as i64
    }

    /// The tag's clock, microseconds.
    pub fn local_us(&self, now_us: u64) -> i64 {
        self.utc_us(now_us) + self.offset_us
    }

    fn local_to_sim(&self, local_us: i64) -> u64 {
        (local_us - self.offset_us - (self.opts.utc_base_s * 1_000_000) as i64).max(0) as u64
    }

    pub fn definition(&self) -> &TagDefinition {
        &self.def
    }

    pub fn tag_id(&self) -> u64 {
        self.def.tag_id
    }

    pub fn config(&self) -> u8 {
        self.config
    }

    pub fn log(&self) -> &Log {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut Log {
        &mut self.log
    }

    pub fn boot_count(&self) -> u16 {
        self.boot_count
    }

    pub fn actuator_on(&self) -> bool {
        self.actuator_on
    }

    pub fn clock_is_set(&self) -> bool {
        self.clock_set
    }

    /// Tag clock minus true UTC, microseconds.
    pub fn clock_error_us(&self) -> i64 {
        self.offset_us
    }

    pub fn stats(&self) -> &TagStats {
        &self.stats
    }

    pub fn battery(&self) -> &BatteryState {
        &self.battery
    }

    pub fn schedule_origin_us(&self) -> u64 {
        self.schedule_origin_us
    }

    pub fn last_contact_us(&self) -> Option<u64> {
        self.last_contact_us
    }

    /// Every sample that reached the log, in logging order.
    pub fn truth(&self) -> &[TruthSample] {
        &self.truth
    }

    pub fn drain_notes(&mut self) -> Vec<TagNote> {
        std::mem::take(&mut self.notes)
    }

    /// Durable items not yet acknowledged, or buffered bytes waiting.
    pub fn unacked_bytes(&self) -> u32 {
        let c = self.log.cursor();
        c.write_addr - c.ack_cursor
    }

    pub fn next_slot_time(&self) -> Option<u64> {
        if self.battery.is_stalled() {
            return None;
        }
        Some(self.schedule_origin_us + self.next_slot * self.def.period_ms as u64 * 1000)
    }

    pub fn next_tick_time(&self) -> u64 {
        self.local_to_sim(self.next_tick_local_s * 1_000_000)
    }

    pub fn stall_check_time(&self) -> Option<u64> {
        self.stall_check_us
    }

    /// When the current configuration's silence transition fires.
    pub fn silence_deadline(&self) -> Option<u64> {
        let (secs, _) = self.def.silence_transition(self.config)?;
        let since = self
            .last_contact_us
            .map_or(self.config_entered_us, |c| c.max(self.config_entered_us));
        Some(since + secs as u64 * 1_000_000)
    }

    fn silence_window_us(&self) -> u64 {
        let s = self
            .def
            .silence_transition(self.config)
            .map_or(DEFAULT_SILENCE_WINDOW_S, |(s, _)| s);
        s as u64 * 1_000_000
    }

    fn base_recently_heard(&self, now_us: u64) -> bool {
        self.last_contact_us
            .is_some_and(|c| now_us.saturating_sub(c) <= self.silence_window_us())
    }

    fn enter_config(&mut self, to: u8, now_us: u64, cause: &'static str) {
        if to == self.config || self.def.config(to).is_none() {
            return;
        }
        self.notes.push(TagNote::Transition {
            from: self.config,
            to,
            cause,
        });
        self.config = to;
        self.config_entered_us = now_us;
        if self.def.actuator_config == Some(to) {
            self.latch_actuator();
        }
    }

    fn latch_actuator(&mut self) {
        if !self.actuator_on {
            self.actuator_on = true;
            self.notes.push(TagNote::ActuatorOn);
        }
    }

    fn append(&mut self, t: u8, payload: &[u8]) -> bool {
        match self.log.append_item(t, payload) {
            Ok(_) => {
                self.stats.items_logged += 1;
                true
            }
            Err(_) => {
                self.stats.items_dropped += 1;
                if self.stats.items_dropped == 1 {
                    self.notes.push(TagNote::LogFull);
                }
                false
            }
        }
    }

    /// The slot at `now_us` (which must equal [`next_slot_time`](Self::next_slot_time)).
    pub fn on_slot(&mut self, now_us: u64) -> SlotOutcome {
        let slot = self.next_slot;
        self.next_slot += 1;
        let action = {
            let Some(cfg) = self.def.config(self.config) else {
                return SlotOutcome::Idle;
            };
            match slot_action(cfg, slot) {
                SlotAction::Idle => None,
                SlotAction::Tx { setup, mode } => Some((setup.to_string(), mode)),
            }
        };
        let Some((setup_name, mode)) = action else {
            return SlotOutcome::Idle;
        };
        if !self.battery.on_wake(now_us, &mut self.rng) {
            self.stats.stalls += 1;
            self.stall_check_us = Some(now_us + VOLTAGE_CHECK_US);
            self.notes.push(TagNote::Stalled);
            return SlotOutcome::Stalled;
        }
        let setup = self
            .def
            .setup(&setup_name)
            .cloned()
            .expect("validated definition");
        if setup.kind == SetupKind::AtlasPing {
            self.stats.pings += 1;
            return SlotOutcome::Ping {
                setup: setup_name,
                bits: setup.ping_bits,
            };
        }
        let will_listen = mode == SlotMode::TxThenRx;
        let (items, payload) = self.build_data_packet(now_us, will_listen);
        self.stats.data_packets += 1;
        SlotOutcome::Data {
            setup: setup_name,
            will_listen,
            items,
            payload,
        }
    }

    fn carrier(&mut self, now_us: u64) -> Option<LogItemCarrier> {
        if self.config != self.def.highest_config() || !self.base_recently_heard(now_us) {
            return None;
        }
        let c = self.log.cursor();
        if c.ack_cursor >= c.write_addr {
            return None;
        }
        let mut addr = self.log.next_durable_item(c.ack_cursor);
        if addr.is_none() {
            let _ = self.log.flush();
            addr = self.log.next_durable_item(c.ack_cursor);
        }
        let addr = addr?;
        let (t, p) = self.log.item_at(addr)?;
        Some(LogItemCarrier {
            creation_time: self.log.header().creation_time,
            address: addr,
            item_type: t,
            payload: p.to_vec(),
        })
    }

    fn build_data_packet(&mut self, now_us: u64, will_listen: bool) -> (Vec<DataItem>, Vec<u8>) {
        let c = self.log.cursor();
        let state = TagState {
            will_listen,
            has_data: c.write_addr - c.ack_cursor >= self.def.upload_threshold,
            config_index: self.config,
        };
        let mut items = vec![DataItem::TagState(state), DataItem::TagId(self.def.tag_id)];
        let periodic = now_us >= self.next_state_items_us;
        let mut optional = Vec::new();
        if let Some(carrier) = self.carrier(now_us) {
            optional.push(DataItem::LogItem(carrier));
        }
        if periodic {
            optional.push(DataItem::LogState(LogState {
                write_addr: c.write_addr,
                ack_cursor: c.ack_cursor,
                creation_time: self.log.header().creation_time,
            }));
            let local_s = self.local_us(now_us).div_euclid(1_000_000).max(0) as u64;
            optional.push(DataItem::Clock(local_s));
        }
        // drop from the end: Clock, then LogState, then the carrier
        loop {
            let mut all = items.clone();
            all.extend(optional.iter().cloned());
            if let Ok(payload) = build_packet(&all) {
                if all.iter().any(|i| matches!(i, DataItem::LogState(_))) {
                    self.next_state_items_us = now_us + STATE_ITEM_INTERVAL_US;
                }
                if all.iter().any(|i| matches!(i, DataItem::LogItem(_))) {
                    self.stats.carriers_sent += 1;
                }
                items = all;
                return (items, payload);
            }
            if optional.pop().is_none() {
                let payload = build_packet(&items).expect("minimal packet fits");
                return (items, payload);
            }
        }
    }

    /// Items of a reply received in this tag's receive window.
    pub fn handle_reply(&mut self, reply: &[DataItem], now_us: u64) {
        let addressed = reply
            .iter()
            .any(|i| matches!(i, DataItem::AddressedTo(id) if *id == self.def.tag_id));
        if !addressed {
            return;
        }
        self.last_contact_us = Some(now_us);
        for item in reply {
            match item {
                DataItem::Ack(addr) => self.on_ack(*addr),
                DataItem::Clock(s) => self.set_clock(*s, now_us),
                DataItem::Wakeup(WakeupTarget::Highest) => {
                    let to = self.def.highest_config();
                    self.enter_config(to, now_us, "wakeup");
                }
                DataItem::Wakeup(WakeupTarget::Config(k)) => {
                    if let Some(to) = self.def.wakeup_transition(self.config, *k) {
                        self.enter_config(to, now_us, "wakeup");
                    }
                }
                _ => {}
            }
        }
    }

    fn on_ack(&mut self, addr: u32) {
        let c = self.log.cursor();
        if addr < c.ack_cursor {
            return;
        }
        if self.log.next_durable_item(c.ack_cursor) != Some(addr) {
            return;
        }
        let Some((_, p)) = self.log.item_at(addr) else {
            return;
        };
        let end = addr + (log::ITEM_HEADER_LEN + p.len()) as u32;
        let next = self.log.next_durable_item(end).unwrap_or(end);
        let next = next.min(self.log.cursor().write_addr);
        if self.log.set_ack_cursor(next).is_ok() {
            self.notes.push(TagNote::Acked { addr, next });
            if self.log.checkpoint_ack().is_err() {
                self.stats.items_dropped += 1;
            }
        }
    }

    fn set_clock(&mut self, utc_s: u64, now_us: u64) {
        let old_local = self.local_us(now_us);
        let new_local = (utc_s * 1_000_000) as i64;
        let delta = new_local - old_local;
        if delta == 0 && self.clock_set {
            return;
        }
        // samples in RAM carry old-clock timestamps: commit them first
        self.flush_accumulators();
        let was_set = self.clock_set;
        self.offset_us += delta;
        self.clock_set = true;
        let mut p = delta.to_le_bytes().to_vec();
        p.push(was_set as u8);
        p.extend_from_slice(&utc_s.to_le_bytes());
        self.append(item_type::CLOCK_SET, &p);
        self.next_tick_local_s = self.local_us(now_us).div_euclid(1_000_000) + 1;
        self.notes.push(TagNote::ClockSet { delta_us: delta });
    }

    fn flush_accumulators(&mut self) {
        let accs = std::mem::take(&mut self.accumulators);
        for (kind, acc) in accs {
            if acc.samples.is_empty() {
                continue;
            }
            let t = item_type_for(kind, SamplingMode::OneShot);
            let payload = accumulation_payload(acc.start_s, &acc.samples);
            let ok = self.append(t, &payload);
            self.commit_truth(kind, ok);
        }
    }

    fn commit_truth(&mut self, kind: SensorKind, ok: bool) {
        let (mine, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending_truth)
            .into_iter()
            .partition(|t| t.kind == kind);
        self.pending_truth = rest;
        if ok {
            self.truth.extend(mine);
        }
    }

    /// A tick of the whole-second sensing grid. Returns the number of log items written.
    pub fn on_second(&mut self, now_us: u64) -> usize {
        let second = self.next_tick_local_s;
        self.next_tick_local_s += 1;
        let before = self.stats.items_logged;
        let utc_tick = self.utc_us(now_us);
        for i in 0..self.def.sensors.len() {
            let sched = self.def.sensors[i].clone();
            if second.rem_euclid(sched.every_s as i64) != 0 {
                continue;
            }
            let stamp_s = second.max(0) as u32;
            match sched.mode {
                SamplingMode::OneShot => {
                    let sample = self.sim.sample(sched.kind, utc_tick);
                    self.pending_truth.push(TruthSample {
                        kind: sched.kind,
                        timestamp_us: stamp_s as i64 * 1_000_000,
                        sample,
                    });
                    let pos = self.accumulators.iter().position(|(k, _)| *k == sched.kind);
                    let acc = match pos {
                        Some(p) => &mut self.accumulators[p].1,
                        None => {
                            self.accumulators.push((
                                sched.kind,
                                Accumulator {
                                    start_s: stamp_s,
                                    samples: Vec::new(),
                                },
                            ));
                            &mut self.accumulators.last_mut().unwrap().1
                        }
                    };
                    acc.samples.push(sample);
                    if acc.samples.len() as u32 >= sched.batch {
                        let acc = self.accumulators.remove(pos.unwrap_or(self.accumulators.len() - 1)).1;
                        let payload = accumulation_payload(acc.start_s, &acc.samples);
                        let ok = self.append(item_type_for(sched.kind, sched.mode), &payload);
                        self.commit_truth(sched.kind, ok);
                    }
                }
                SamplingMode::Burst { rate_hz, .. } => {
                    let n = sched.burst_samples();
                    let samples: Vec<Sample> = (0..n)
                        .map(|k| self.sim.sample(sched.kind, utc_tick + burst_offset_us(k, rate_hz)))
                        .collect();
                    let (_, per) = sched.fragment_layout();
                    let t = item_type_for(sched.kind, sched.mode);
                    for (f, payload) in burst_fragments(&sched, stamp_s, &samples).iter().enumerate() {
                        if self.append(t, payload) {
                            let first = f as u32 * per;
                            for k in first..(first + per).min(n) {
                                self.truth.push(TruthSample {
                                    kind: sched.kind,
                                    timestamp_us: stamp_s as i64 * 1_000_000
                                        + burst_offset_us(k, rate_hz),
                                    sample: samples[k as usize],
                                });
                            }
                        }
                    }
                }
            }
        }
        (self.stats.items_logged - before) as usize
    }

    /// The silence deadline passed without contact.
    pub fn on_silence(&mut self, now_us: u64) -> bool {
        match (self.silence_deadline(), self.def.silence_transition(self.config)) {
            (Some(deadline), Some((_, to))) if now_us >= deadline => {
                self.enter_config(to, now_us, "silence");
                true
            }
            _ => false,
        }
    }

    /// A battery voltage check while stalled; on recovery the slot schedule
    /// restarts from `now_us`.
    pub fn on_stall_check(&mut self, now_us: u64) -> bool {
        if self.battery.check(now_us) {
            self.stall_check_us = None;
            self.schedule_origin_us = now_us;
            self.next_slot = 0;
            self.notes.push(TagNote::Resumed);
            true
        } else {
            self.stall_check_us = Some(now_us + VOLTAGE_CHECK_US);
            false
        }
    }

    /// Appends an opaque item, for tests and prefilled scenarios.
    pub fn log_opaque(&mut self, payload: &[u8]) -> bool {
        self.append(item_type::OPAQUE, payload)
    }

    pub fn flush_log(&mut self) -> Result<(), LogError> {
        self.log.flush()
    }
}

/// Pseudo-random ATLAS ping payload: a 16-bit Galois LFSR seeded by the tag id.
pub fn atlas_ping_payload(tag_id: u64, bits: u32) -> Vec<u8> {
    let mut state = (tag_id ^ (tag_id >> 16) ^ (tag_id >> 32) ^ (tag_id >> 48)) as u16;
    if state == 0 {
        state = 0xACE1;
    }
    let mut out = vec![0u8; bits.div_ceil(8) as usize];
    for i in 0..bits as usize {
        let bit = state & 1;
        state >>= 1;
        if bit == 1 {
            state ^= 0xB400;
        }
        out[i / 8] |= (bit as u8) << (7 - i % 8);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::MediaGeometry;
    use crate::tagdef::{parse_tagdef, SAMPLE_DEFINITION};

    fn tag() -> Tag {
        let def = parse_tagdef(SAMPLE_DEFINITION).unwrap();
        Tag::boot(def, Media::new(MediaGeometry::nor(16)), TagOptions::default(), 0).unwrap()
    }

    fn reply(tag: &Tag, items: Vec<DataItem>) -> Vec<DataItem> {
        let mut v = vec![DataItem::AddressedTo(tag.tag_id())];
        v.extend(items);
        v
    }

    #[test]
    fn first_boot() {
        let t = tag();
        assert_eq!(t.boot_count(), 1);
        assert_eq!(t.config(), 0);
        assert_eq!(t.next_slot_time(), Some(0));
    }

    #[test]
    fn wakeup_and_silence() {
        let mut t = tag();
        let r = reply(&t, vec![DataItem::Wakeup(WakeupTarget::Config(1))]);
        t.handle_reply(&r, 3_000_000);
        assert_eq!(t.config(), 1);
        assert_eq!(t.silence_deadline(), Some(13_000_000));
        assert!(!t.on_silence(12_999_999));
        assert!(t.on_silence(13_000_000));
        assert_eq!(t.config(), 0);
    }

    #[test]
    fn replies_for_other_tags_ignored() {
        let mut t = tag();
        t.handle_reply(
            &[DataItem::AddressedTo(7), DataItem::Wakeup(WakeupTarget::Highest)],
            0,
        );
        assert_eq!(t.config(), 0);
        assert_eq!(t.last_contact_us(), None);
    }

    #[test]
    fn slot_pattern_in_config_one() {
        let mut t = tag();
        t.handle_reply(&reply(&t, vec![DataItem::Wakeup(WakeupTarget::Config(1))]), 0);
        let mut seen = Vec::new();
        for k in 0..16u64 {
            let now = t.next_slot_time().unwrap();
            assert_eq!(now, k * 500_000);
            match t.on_slot(now) {
                SlotOutcome::Ping { .. } => seen.push((k, 'A')),
                SlotOutcome::Data { will_listen, .. } => {
                    assert!(will_listen);
                    seen.push((k, 'D'))
                }
                SlotOutcome::Idle => {}
                SlotOutcome::Stalled => unreachable!(),
            }
        }
        assert_eq!(
            seen,
            vec![(0, 'A'), (4, 'A'), (7, 'D'), (8, 'A'), (12, 'A'), (15, 'D')]
        );
    }

    #[test]
    fn upload_and_ack() {
        let mut t = tag();
        for i in 0..20u8 {
            t.log_opaque(&[i; 100]);
        }
        t.handle_reply(&reply(&t, vec![DataItem::Wakeup(WakeupTarget::Config(1))]), 0);
        t.next_slot = 7;
        let SlotOutcome::Data { items, .. } = t.on_slot(t.next_slot_time().unwrap()) else {
            panic!()
        };
        let carrier = items
            .iter()
            .find_map(|i| match i {
                DataItem::LogItem(c) => Some(c.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(carrier.address, 24);
        assert_eq!(carrier.item_type, item_type::BOOT_MARKER);
        let before = t.log().cursor().ack_cursor;
        t.handle_reply(&reply(&t, vec![DataItem::Ack(carrier.address)]), 4_000_000);
        let after = t.log().cursor().ack_cursor;
        assert!(after > before);
        // duplicate ack does nothing
        t.handle_reply(&reply(&t, vec![DataItem::Ack(carrier.address)]), 4_100_000);
        assert_eq!(t.log().cursor().ack_cursor, after);
    }

    #[test]
    fn sensing_fills_log() {
        let mut t = tag();
        let mut written = 0;
        for _ in 0..200 {
            let now = t.next_tick_time();
            written += t.on_second(now);
        }
        // 2 fragments every 4 s, one pressure batch of 50 every 100 s
        assert_eq!(written, 50 * 2 + 2);
        assert_eq!(t.truth().len(), 50 * 50 + 100);
    }

    #[test]
    fn clock_correction() {
        let def = parse_tagdef(SAMPLE_DEFINITION).unwrap();
        let opts = TagOptions {
            clock_offset_s: Some(5),
            ..TagOptions::default()
        };
        let mut t = Tag::boot(def, Media::new(MediaGeometry::nor(4)), opts, 0).unwrap();
        assert_eq!(t.clock_error_us(), 5_000_000);
        let utc = 1_600_000_010;
        t.handle_reply(&reply(&t, vec![DataItem::Clock(utc)]), 10_000_000);
        assert_eq!(t.clock_error_us(), 0);
    }

    #[test]
    fn ping_payload_is_stable() {
        let a = atlas_ping_payload(42, 8192);
        assert_eq!(a.len(), 1024);
        assert_eq!(a, atlas_ping_payload(42, 8192));
        assert_ne!(a, atlas_ping_payload(43, 8192));
    }
}
