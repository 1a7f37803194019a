//! Base stations: intent-driven replies and persistence of uploaded items.
//!
//! Received items go to one of two append-only stores. The tethered store is a
//! file of length-prefixed records:
//!
//! ```text
//! record := len:u16 tag_id:u64 creation:u64 address:u32 type:u8 rx_us:u64
//!           station:u16 payload_len:u8 payload
//! ```
//!
//! The SD store keeps the same fields in a log on SD-card geometry, as a
//! `RECORD_META` item followed by a `RECORD_PAYLOAD` item.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{LogError, StoreError};
use crate::log::{self, item_type, iterate_items, Log};
use crate::media::{Media, MediaGeometry};
use crate::wire::{DataItem, LogItemCarrier, TagState, WakeupTarget};

/// A tag's clock must be off by more than this before a station corrects it.
pub const CLOCK_TOLERANCE_S: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceivedRecord {
    pub tag_id: u64,
    pub creation_time: u64,
    pub address: u32,
    pub item_type: u8,
    pub payload: Vec<u8>,
    pub rx_time_us: u64,
    pub station_id: u16,
}

const META_LEN: usize = 8 + 8 + 4 + 1 + 8 + 2;

impl ReceivedRecord {
    pub fn key(&self) -> (u64, u64, u32) {
        (self.tag_id, self.creation_time, self.address)
    }

    fn meta(&self) -> [u8; META_LEN] {
        let mut m = [0u8; META_LEN];
        m[..8].copy_from_slice(&self.tag_id.to_le_bytes());
        m[8..16].copy_from_slice(&self.creation_time.to_le_bytes());
        m[16..20].copy_from_slice(&self.address.to_le_bytes());
        m[20] = self.item_type;
        m[21..29].copy_from_slice(&self.rx_time_us.to_le_bytes());
        m[29..31].copy_from_slice(&self.station_id.to_le_bytes());
        m
    }

    fn from_meta(m: &[u8], payload: Vec<u8>) -> Option<Self> {
        if m.len() != META_LEN {
            return None;
        }
        let u64_at = |i: usize| u64::from_le_bytes(m[i..i + 8].try_into().unwrap());
        Some(ReceivedRecord {
            tag_id: u64_at(0),
            creation_time: u64_at(8),
            address: u32::from_le_bytes(m[16..20].try_into().unwrap()),
            item_type: m[20],
            rx_time_us: u64_at(21),
            station_id: u16::from_le_bytes([m[29], m[30]]),
            payload,
        })
    }

    /// Length-prefixed encoding used by tethered stores and the pipeline store.
    pub fn encode(&self, out: &mut Vec<u8>) {
        let body_len = META_LEN + 1 + self.payload.len();
        out.extend_from_slice(&(body_len as u16).to_le_bytes());
        out.extend_from_slice(&self.meta());
        out.push(self.payload.len() as u8);
        out.extend_from_slice(&self.payload);
    }

    /// Decodes one record; returns it and the bytes consumed.
    pub fn decode(b: &[u8]) -> Result<(Self, usize), StoreError> {
        let bad = |m: &str| StoreError::Format(m.to_string());
        if b.len() < 2 {
            return Err(bad("truncated record length"));
        }
        let body_len = u16::from_le_bytes([b[0], b[1]]) as usize;
        let body = b.get(2..2 + body_len).ok_or_else(|| bad("truncated record"))?;
        if body_len < META_LEN + 1 || body[META_LEN] as usize != body_len - META_LEN - 1 {
            return Err(bad("record length mismatch"));
        }
        let rec = ReceivedRecord::from_meta(&body[..META_LEN], body[META_LEN + 1..].to_vec())
            .ok_or_else(|| bad("record metadata"))?;
        Ok((rec, 2 + body_len))
    }

    pub fn from_carrier(c: &LogItemCarrier, tag_id: u64, rx_time_us: u64, station_id: u16) -> Self {
        ReceivedRecord {
            tag_id,
            creation_time: c.creation_time,
            address: c.address,
            item_type: c.item_type,
            payload: c.payload.clone(),
            rx_time_us,
            station_id,
        }
    }

    /// One line of the plain-text export.
    pub fn to_line(&self) -> String {
        let mut s = format!(
            "{} {} {} 0x{:02x} {} {} ",
            self.tag_id,
            self.creation_time,
            self.address,
            self.item_type,
            self.rx_time_us,
            self.station_id
        );
        for b in &self.payload {
            let _ = write!(s, "{b:02x}");
        }
        s
    }
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<ReceivedRecord>, StoreError> {
    let mut out = Vec::new();
    let mut off = 0;
    while off < bytes.len() {
        let (r, n) = ReceivedRecord::decode(&bytes[off..])?;
        out.push(r);
        off += n;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum RecordStore {
    /// Records appended to a byte file.
    Tethered {
        bytes: Vec<u8>,
        count: usize,
        capacity: Option<usize>,
    },
    /// Records in a log on an SD card.
    Sd { log: Log, capacity: Option<usize>, count: usize },
}

impl RecordStore {
    pub fn tethered(capacity: Option<usize>) -> Self {
        RecordStore::Tethered {
            bytes: Vec::new(),
            count: 0,
            capacity,
        }
    }

    pub fn sd(sectors: usize, station_id: u16, capacity: Option<usize>) -> Result<Self, StoreError> {
        let media = Media::new(MediaGeometry::sd(sectors));
        let log = log::format_log(media, station_id as u64, 0, 0)?;
        Ok(RecordStore::Sd {
            log,
            capacity,
            count: 0,
        })
    }

    pub fn len(&self) -> usize {
        match self {
            RecordStore::Tethered { count, .. } | RecordStore::Sd { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        match self {
            RecordStore::Tethered {
                count, capacity, ..
            }
            | RecordStore::Sd {
                count, capacity, ..
            } => capacity.is_some_and(|c| *count >= c),
        }
    }

    pub fn append(&mut self, rec: &ReceivedRecord) -> Result<(), StoreError> {
        if self.is_full() {
            return Err(StoreError::Full);
        }
        match self {
            RecordStore::Tethered { bytes, count, .. } => {
                rec.encode(bytes);
                *count += 1;
            }
            RecordStore::Sd { log, count, .. } => {
                let r = log
                    .append_item(item_type::RECORD_META, &rec.meta())
                    .and_then(|_| log.append_item(item_type::RECORD_PAYLOAD, &rec.payload));
                match r {
                    Ok(_) => *count += 1,
                    Err(LogError::Full) => return Err(StoreError::Full),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(())
    }

    pub fn records(&self) -> Result<Vec<ReceivedRecord>, StoreError> {
        match self {
            RecordStore::Tethered { bytes, .. } => decode_records(bytes),
            RecordStore::Sd { log, .. } => {
                let mut log = log.clone();
                log.flush()?;
                records_from_sd(log.media())
            }
        }
    }

    /// Writes the store's file: the record file, or the raw SD image.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        match self {
            RecordStore::Tethered { bytes, .. } => std::fs::write(path, bytes)?,
            RecordStore::Sd { log, .. } => {
                let mut log = log.clone();
                log.flush()?;
                log.media().save(path).map_err(LogError::from)?;
            }
        }
        Ok(())
    }
}

/// Reads records back from an SD store image; a metadata item whose payload
/// item is missing is skipped. The final record is kept even though the log
/// rules would call it suspect: the station wrote it and can vouch for it.
pub fn records_from_sd(media: &Media) -> Result<Vec<ReceivedRecord>, StoreError> {
    let (_, listing) = iterate_items(media)?;
    let mut out = Vec::new();
    let mut meta: Option<&[u8]> = None;
    for e in &listing.entries {
        match e.item_type {
            item_type::RECORD_META => meta = Some(&e.payload),
            item_type::RECORD_PAYLOAD => {
                if let Some(m) = meta.take() {
                    if let Some(r) = ReceivedRecord::from_meta(m, e.payload.clone()) {
                        out.push(r);
                    }
                }
            }
            _ => meta = None,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intent {
    AdjustClock,
    AcknowledgeLogItems,
    /// `tag: None` addresses every tag.
    Wakeup { tag: Option<u64>, target: WakeupTarget },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct TagView {
    state: Option<TagState>,
    highest_sent_at: Option<u8>,
    known_highest: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StationNote {
    Stored { tag_id: u64, address: u32 },
    StoreFull { tag_id: u64, address: u32 },
    Warning(String),
}

#[derive(Debug, Clone)]
pub struct BaseStation {
    pub id: u16,
    pub has_valid_clock: bool,
    /// UTC seconds at simulation time 0.
    pub utc_base_s: u64,
    intents: Vec<Intent>,
    store: RecordStore,
    tags: BTreeMap<u64, TagView>,
    notes: Vec<StationNote>,
}

impl BaseStation {
    pub fn new(id: u16, has_valid_clock: bool, utc_base_s: u64, store: RecordStore) -> Self {
        BaseStation {
            id,
            has_valid_clock,
            utc_base_s,
            intents: Vec::new(),
            store,
            tags: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn intents(&self) -> &[Intent] {
        &self.intents
    }

    pub fn store(&self) -> &RecordStore {
        &self.store
    }

    pub fn drain_notes(&mut self) -> Vec<StationNote> {
        std::mem::take(&mut self.notes)
    }

    pub fn is_logging(&self) -> bool {
        self.intents.contains(&Intent::AcknowledgeLogItems)
    }

    /// Adds an intent; adding one that is already present changes nothing.
    pub fn add_intent(&mut self, intent: Intent) {
        if self.intents.contains(&intent) {
            return;
        }
        if let Intent::Wakeup { tag, .. } = intent {
            let clash = self
                .intents
                .iter()
                .any(|i| matches!(i, Intent::Wakeup { tag: t, .. } if *t == tag || t.is_none() || tag.is_none()));
            if clash {
                self.notes.push(StationNote::Warning(format!(
                    "station {}: wakeup intents overlap; the latest one wins",
                    self.id
                )));
            }
        }
        self.intents.push(intent);
    }

    pub fn remove_intent(&mut self, intent: &Intent) {
        self.intents.retain(|i| i != intent);
    }

    fn wakeup_target(&self, tag_id: u64) -> Option<WakeupTarget> {
        self.intents.iter().rev().find_map(|i| match i {
            Intent::Wakeup { tag, target } if tag.is_none_or(|t| t == tag_id) => Some(*target),
            _ => None,
        })
    }

    fn station_clock_s(&self, rx_time_us: u64) -> u64 {
        self.utc_base_s + rx_time_us / 1_000_000
    }

    /// Handles a tag packet; returns the reply items, if any.
    pub fn handle_packet(&mut self, items: &[DataItem], rx_time_us: u64) -> Option<Vec<DataItem>> {
        let mut state = None;
        let mut tag_id = None;
        let mut carrier = None;
        let mut clock = None;
        for i in items {
            match i {
                DataItem::TagState(s) => state = Some(*s),
                DataItem::TagId(id) => tag_id = Some(*id),
                DataItem::LogItem(c) => carrier = Some(c),
                DataItem::Clock(c) => clock = Some(*c),
                _ => {}
            }
        }
        let (state, tag_id) = (state?, tag_id?);

        let mut view = self.tags.get(&tag_id).copied().unwrap_or_default();
        if let Some(sent) = view.highest_sent_at.take() {
            // a changed config after a highest wakeup shows where "highest" is;
            // an unchanged one may just mean the reply was lost
            if state.config_index != sent {
                view.known_highest = Some(state.config_index);
            }
        }
        if carrier.is_some() {
            // tags upload only from their highest configuration
            view.known_highest = Some(state.config_index);
        }
        view.state = Some(state);

        let mut reply = Vec::new();
        if self.intents.contains(&Intent::AdjustClock) && self.has_valid_clock {
            if let Some(adv) = clock {
                let st = self.station_clock_s(rx_time_us);
                if adv.abs_diff(st) > CLOCK_TOLERANCE_S {
                    reply.push(DataItem::Clock(st));
                }
            }
        }
        let mut persisted = false;
        if let Some(c) = carrier {
            if self.is_logging() {
                let rec = ReceivedRecord::from_carrier(c, tag_id, rx_time_us, self.id);
                match self.store.append(&rec) {
                    Ok(()) => {
                        persisted = true;
                        self.notes.push(StationNote::Stored {
                            tag_id,
                            address: c.address,
                        });
                    }
                    Err(_) => self.notes.push(StationNote::StoreFull {
                        tag_id,
                        address: c.address,
                    }),
                }
            }
        }
        if persisted {
            reply.push(DataItem::Ack(carrier.unwrap().address));
        }
        let mut wakeup = match self.wakeup_target(tag_id) {
            Some(WakeupTarget::Config(k)) if k != state.config_index => {
                Some(WakeupTarget::Config(k))
            }
            Some(WakeupTarget::Highest) => Some(WakeupTarget::Highest),
            _ => None,
        };
        if wakeup.is_none() && state.has_data && carrier.is_none() && self.is_logging() {
            wakeup = Some(WakeupTarget::Highest);
        }
        if wakeup == Some(WakeupTarget::Highest) && view.known_highest == Some(state.config_index) {
            wakeup = None;
        }
        if let Some(w) = wakeup {
            if state.will_listen && w == WakeupTarget::Highest {
                view.highest_sent_at = Some(state.config_index);
            }
            reply.push(DataItem::Wakeup(w));
        }
        self.tags.insert(tag_id, view);

        if !state.will_listen || reply.is_empty() {
            return None;
        }
        reply.insert(0, DataItem::AddressedTo(tag_id));
        Some(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: u64 = 1_600_000_000;

    fn packet(config: u8, has_data: bool, clock: Option<u64>) -> Vec<DataItem> {
        let mut v = vec![
            DataItem::TagState(TagState {
                will_listen: true,
                has_data,
                config_index: config,
            }),
            DataItem::TagId(42),
        ];
        if let Some(c) = clock {
            v.push(DataItem::Clock(c));
        }
        v
    }

    fn station() -> BaseStation {
        let mut s = BaseStation::new(1, true, BASE, RecordStore::tethered(None));
        s.add_intent(Intent::AdjustClock);
        s.add_intent(Intent::AcknowledgeLogItems);
        s
    }

    #[test]
    fn clock_threshold_is_strict() {
        let mut s = station();
        let r = s.handle_packet(&packet(0, false, Some(BASE + 3)), 0).unwrap();
        assert_eq!(r, vec![DataItem::AddressedTo(42), DataItem::Clock(BASE)]);
        assert_eq!(s.handle_packet(&packet(0, false, Some(BASE + 2)), 0), None);
        assert_eq!(s.handle_packet(&packet(0, false, Some(BASE + 1)), 0), None);
    }

    #[test]
    fn has_data_triggers_highest_once() {
        let mut s = station();
        let r = s.handle_packet(&packet(0, true, None), 0).unwrap();
        assert_eq!(r[1], DataItem::Wakeup(WakeupTarget::Highest));
        // the tag moved to 1: that is its highest configuration
        assert_eq!(s.handle_packet(&packet(1, true, None), 1), None);
    }

    #[test]
    fn carrier_is_stored_and_acked() {
        let mut s = station();
        let mut p = packet(1, true, None);
        p.push(DataItem::LogItem(LogItemCarrier {
            creation_time: 5,
            address: 24,
            item_type: 3,
            payload: vec![1, 0, 2, 1],
        }));
        let r = s.handle_packet(&p, 7).unwrap();
        assert_eq!(r, vec![DataItem::AddressedTo(42), DataItem::Ack(24)]);
        s.handle_packet(&p, 8).unwrap();
        let recs = s.store().records().unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].key(), (42, 5, 24));
    }

    #[test]
    fn full_store_never_acks() {
        let mut s = BaseStation::new(1, true, BASE, RecordStore::tethered(Some(0)));
        s.add_intent(Intent::AcknowledgeLogItems);
        let mut p = packet(1, false, None);
        p.push(DataItem::LogItem(LogItemCarrier {
            creation_time: 5,
            address: 24,
            item_type: 3,
            payload: vec![],
        }));
        assert_eq!(s.handle_packet(&p, 0), None);
    }

    #[test]
    fn wakeup_intent_lifecycle() {
        let mut s = station();
        let w = Intent::Wakeup {
            tag: Some(42),
            target: WakeupTarget::Config(1),
        };
        s.add_intent(w);
        s.add_intent(w);
        assert_eq!(s.intents().len(), 3);
        let r = s.handle_packet(&packet(0, false, None), 0).unwrap();
        assert_eq!(r[1], DataItem::Wakeup(WakeupTarget::Config(1)));
        assert_eq!(s.handle_packet(&packet(1, false, None), 0), None);
        s.remove_intent(&w);
        assert_eq!(s.handle_packet(&packet(0, false, None), 0), None);
    }

    #[test]
    fn conflicting_wakeups_last_added_wins() {
        let mut s = station();
        s.add_intent(Intent::Wakeup {
            tag: Some(42),
            target: WakeupTarget::Config(1),
        });
        s.add_intent(Intent::Wakeup {
            tag: None,
            target: WakeupTarget::Config(2),
        });
        assert!(matches!(s.drain_notes()[..], [StationNote::Warning(_)]));
        let r = s.handle_packet(&packet(0, false, None), 0).unwrap();
        assert_eq!(r[1], DataItem::Wakeup(WakeupTarget::Config(2)));
    }

    #[test]
    fn sd_store_round_trip() {
        let mut store = RecordStore::sd(4, 9, None).unwrap();
        let rec = ReceivedRecord {
            tag_id: 42,
            creation_time: 1,
            address: 100,
            item_type: 0x10,
            payload: vec![7; 224],
            rx_time_us: 123,
            station_id: 9,
        };
        for _ in 0..3 {
            store.append(&rec).unwrap();
        }
        assert_eq!(store.records().unwrap(), vec![rec.clone(); 3]);
        let mut bytes = Vec::new();
        rec.encode(&mut bytes);
        assert_eq!(decode_records(&bytes).unwrap(), vec![rec]);
    }
}
