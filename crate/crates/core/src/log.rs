//! Append-only log of typed items on page-write media.
//!
//! On-media layout (all multi-byte fields little-endian):
//!
//! ```text
//! item        := type:u8 length:u8 payload[length]          type 1..=254, length 0..=224
//! log header  := item(type 0x01, len 22): magic "TLOG" version:u8 registry:u8
//!                tag_id:u64 creation_time:u64                 at address 0
//! sector hdr  := item(type 0x02, len 7): ack_cursor:u32 sector_seq:u16 flags:u8
//!                                                             first bytes of sectors 1..
//! boot marker := item(type 0x03, len 4): boot_count:u16 firmware_id:u16
//! checkpoint  := item(type 0x06, len 8): ack_cursor:u32 !ack_cursor:u32
//! ```
//!
//! Sector headers carry the ack cursor as it was when the sector was opened. A
//! checkpoint is appended whenever acknowledgments move the cursor into a later
//! sector than the last persisted value, so a reboot loses less than one
//! sector of acknowledgments even while no new sectors are being opened.
//!
//! Items are packed back to back. An item that does not fit in the rest of a
//! logical sector moves to the next sector, behind a fresh sector header. After a
//! reboot, appends resume right after the last parsable item when the remainder
//! of the medium is clean, and at the next page boundary when stray (torn) bytes
//! follow it. Readers skip erased bytes and unparsable headers page by page.
//! Recovery clears the type byte of a torn header at the end of the chain, since
//! a header cut at a page end would otherwise borrow its length byte from
//! whatever is written next.
//!
//! An item is *suspect* when it is the last item on the medium or when the next
//! item, not counting sector headers, is a boot marker; every other item is
//! known to be completely written.
//!
//! Example, a freshly formatted log for tag 0x2A created at t=0x5F5E1000:
//!
//! ```text
//! 0000: 01 16 54 4c 4f 47 01 00 2a 00 00 00 00 00 00 00  ..TLOG..*.......
//! 0010: 00 10 5e 5f 00 00 00 00 ff ff ff ff ff ff ff ff  ..^_............
//! ```
//!
//! followed by a first boot marker (`boot_count = 1`, `firmware_id = 0x0102`):
//!
//! ```text
//! 0018: 03 04 01 00 02 01
//! ```

use crate::error::{LogError, MediaError};
use crate::media::{Media, WriteOutcome, ERASED};

pub const ITEM_HEADER_LEN: usize = 2;
pub const MAX_PAYLOAD: usize = 224;
pub const LOG_MAGIC: [u8; 4] = *b"TLOG";
pub const FORMAT_VERSION: u8 = 1;
pub const LOG_HEADER_PAYLOAD: usize = 22;
pub const LOG_HEADER_LEN: usize = ITEM_HEADER_LEN + LOG_HEADER_PAYLOAD;
pub const SECTOR_HEADER_PAYLOAD: usize = 7;
pub const SECTOR_HEADER_LEN: usize = ITEM_HEADER_LEN + SECTOR_HEADER_PAYLOAD;
pub const BOOT_MARKER_PAYLOAD: usize = 4;

/// Log item type registry (registry id 0).
pub mod item_type {
    pub const LOG_HEADER: u8 = 0x01;
    pub const SECTOR_HEADER: u8 = 0x02;
    pub const BOOT_MARKER: u8 = 0x03;
    pub const SENSOR_CONFIG: u8 = 0x04;
    pub const CLOCK_SET: u8 = 0x05;
    /// Ack cursor persisted between sector headers.
    pub const ACK_CHECKPOINT: u8 = 0x06;
    /// One-shot pressure/temperature samples accumulated under one timestamp.
    pub const PRESSURE_TEMPERATURE: u8 = 0x10;
    /// One slice of an acceleration burst.
    pub const ACCEL_FRAGMENT: u8 = 0x11;
    pub const ACCEL_ACCUMULATION: u8 = 0x12;
    pub const PRESSURE_FRAGMENT: u8 = 0x13;
    pub const OPAQUE: u8 = 0x20;
    /// Base-station record store: metadata of a received item.
    pub const RECORD_META: u8 = 0x30;
    /// Base-station record store: payload of a received item.
    pub const RECORD_PAYLOAD: u8 = 0x31;

    pub fn is_structural(t: u8) -> bool {
        matches!(t, LOG_HEADER | SECTOR_HEADER | BOOT_MARKER)
    }

    pub fn is_valid(t: u8) -> bool {
        t != 0 && t != 0xFF
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogHeader {
    pub format_version: u8,
    pub registry_id: u8,
    pub tag_id: u64,
    pub creation_time: u64,
}

impl LogHeader {
    pub fn encode(&self) -> [u8; LOG_HEADER_LEN] {
        let mut out = [0u8; LOG_HEADER_LEN];
        out[0] = item_type::LOG_HEADER;
        out[1] = LOG_HEADER_PAYLOAD as u8;
        out[2..6].copy_from_slice(&LOG_MAGIC);
        out[6] = self.format_version;
        out[7] = self.registry_id;
        out[8..16].copy_from_slice(&self.tag_id.to_le_bytes());
        out[16..24].copy_from_slice(&self.creation_time.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, LogError> {
        if bytes.len() < LOG_HEADER_LEN
            || bytes[0] != item_type::LOG_HEADER
            || bytes[1] as usize != LOG_HEADER_PAYLOAD
            || bytes[2..6] != LOG_MAGIC
            || bytes[6] != FORMAT_VERSION
        {
            return Err(LogError::BadHeader);
        }
        Ok(LogHeader {
            format_version: bytes[6],
            registry_id: bytes[7],
            tag_id: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            creation_time: u64::from_le_bytes(bytes[16..24].try_into().unwrap()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectorHeader {
    pub ack_cursor: u32,
    pub sector_seq: u16,
    pub flags: u8,
}

impl SectorHeader {
    pub fn payload(&self) -> [u8; SECTOR_HEADER_PAYLOAD] {
        let mut p = [0u8; SECTOR_HEADER_PAYLOAD];
        p[..4].copy_from_slice(&self.ack_cursor.to_le_bytes());
        p[4..6].copy_from_slice(&self.sector_seq.to_le_bytes());
        p[6] = self.flags;
        p
    }

    pub fn from_payload(p: &[u8]) -> Option<Self> {
        if p.len() != SECTOR_HEADER_PAYLOAD {
            return None;
        }
        Some(SectorHeader {
            ack_cursor: u32::from_le_bytes(p[..4].try_into().unwrap()),
            sector_seq: u16::from_le_bytes(p[4..6].try_into().unwrap()),
            flags: p[6],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootMarker {
    pub boot_count: u16,
    pub firmware_id: u16,
}

impl BootMarker {
    pub fn payload(&self) -> [u8; BOOT_MARKER_PAYLOAD] {
        let mut p = [0u8; BOOT_MARKER_PAYLOAD];
        p[..2].copy_from_slice(&self.boot_count.to_le_bytes());
        p[2..].copy_from_slice(&self.firmware_id.to_le_bytes());
        p
    }

    pub fn from_payload(p: &[u8]) -> Option<Self> {
        if p.len() != BOOT_MARKER_PAYLOAD {
            return None;
        }
        Some(BootMarker {
            boot_count: u16::from_le_bytes([p[0], p[1]]),
            firmware_id: u16::from_le_bytes([p[2], p[3]]),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogCursor {
    pub write_addr: u32,
    pub ack_cursor: u32,
}

fn round_up(x: usize, unit: usize) -> usize {
    x.div_ceil(unit) * unit
}

/// One step of a structural walk over a log image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Item { addr: usize, item_type: u8, len: usize },
    /// An unparsable header at `addr`; the walk resumed at the next page.
    Torn { addr: usize },
}

/// Walks item boundaries of a log image starting at any item boundary.
///
/// Erased type bytes and invalid headers make the walk jump to the next page
/// boundary; a header too close to the sector end jumps to the next sector.
#[derive(Debug, Clone)]
pub struct Walker<'a> {
    image: &'a [u8],
    page_size: usize,
    sector_size: usize,
    pos: usize,
    limit: usize,
}

impl<'a> Walker<'a> {
    pub fn new(image: &'a [u8], page_size: usize, sector_size: usize, from: usize) -> Self {
        Walker {
            image,
            page_size,
            sector_size,
            pos: from,
            limit: image.len(),
        }
    }

    pub fn over(media: &'a Media, from: usize) -> Self {
        let g = media.geometry();
        Walker::new(media.image(), g.page_size, g.sector_size, from)
    }

    /// Stops the walk at `limit` (exclusive).
    pub fn limited(mut self, limit: usize) -> Self {
        self.limit = limit.min(self.image.len());
        self
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn skip_to_next_page(&mut self) {
        let mut q = (self.pos / self.page_size + 1) * self.page_size;
        let sector_end = (self.pos / self.sector_size + 1) * self.sector_size;
        while q < sector_end && q < self.limit && self.image[q] == ERASED {
            q += self.page_size;
        }
        self.pos = q;
    }
}

impl Iterator for Walker<'_> {
    type Item = Step;

    fn next(&mut self) -> Option<Step> {
        loop {
            let p = self.pos;
            if p >= self.limit {
                return None;
            }
            let sector_end = (p / self.sector_size + 1) * self.sector_size;
            if sector_end - p < ITEM_HEADER_LEN {
                self.pos = sector_end;
                continue;
            }
            let t = self.image[p];
            if t == ERASED {
                self.skip_to_next_page();
                continue;
            }
            let len = self.image[p + 1] as usize;
            if t == 0 || len > MAX_PAYLOAD || p + ITEM_HEADER_LEN + len > sector_end {
                self.skip_to_next_page();
                return Some(Step::Torn { addr: p });
            }
            self.pos = p + ITEM_HEADER_LEN + len;
            return Some(Step::Item {
                addr: p,
                item_type: t,
                len,
            });
        }
    }
}

/// Address, type and payload length of the first item at or after `from`.
pub fn next_item(media: &Media, from: usize) -> Option<(usize, u8, usize)> {
    Walker::over(media, from).find_map(|s| match s {
        Step::Item {
            addr,
            item_type,
            len,
        } => Some((addr, item_type, len)),
        Step::Torn { .. } => None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Suspect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub addr: u32,
    pub item_type: u8,
    pub payload: Vec<u8>,
    pub validity: Validity,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemListing {
    pub entries: Vec<LogEntry>,
    /// Addresses of unparsable headers that were skipped.
    pub torn: Vec<u32>,
}

impl ItemListing {
    pub fn valid(&self) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter().filter(|e| e.validity == Validity::Valid)
    }
}

/// Lists every item of a log in address order, with integrity classification.
pub fn iterate_items(media: &Media) -> Result<(LogHeader, ItemListing), LogError> {
    let header = LogHeader::decode(media.read(0, LOG_HEADER_LEN)?)?;
    let image = media.image();
    let mut listing = ItemListing::default();
    for step in Walker::over(media, 0) {
        match step {
            Step::Item {
                addr,
                item_type,
                len,
            } => {
                let start = addr + ITEM_HEADER_LEN;
                listing.entries.push(LogEntry {
                    addr: addr as u32,
                    item_type,
                    payload: image[start..start + len].to_vec(),
                    validity: Validity::Valid,
                });
            }
            Step::Torn { addr } => listing.torn.push(addr as u32),
        }
    }
    let n = listing.entries.len();
    // the log header is checked by `LogHeader::decode` and never suspect
    for i in 1..n {
        // a sector header between an item and the boot marker does not vouch for it
        let next = listing.entries[i + 1..]
            .iter()
            .find(|e| e.item_type != item_type::SECTOR_HEADER);
        let suspect = match next {
            None => listing.entries[i].item_type != item_type::SECTOR_HEADER || i + 1 == n,
            Some(e) => e.item_type == item_type::BOOT_MARKER,
        };
        if suspect {
            listing.entries[i].validity = Validity::Suspect;
        }
    }
    Ok((header, listing))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanReport {
    pub first_erased_sector: usize,
    pub sectors_probed: usize,
    /// True when stray bytes followed the last parsable item and the write
    /// address was moved to the next page boundary.
    pub resynchronized: bool,
    pub torn_headers: usize,
    /// Torn header at the end of the chain whose type byte recovery cleared.
    pub sealed: Option<u32>,
    /// Address of the sector header the ack cursor came from, if any.
    pub ack_source: Option<u32>,
}

#[derive(Debug, Clone)]
struct Pending {
    addr: usize,
    bytes: Vec<u8>,
}

/// A log opened for appending.
///
/// Appends go to a RAM buffer covering at most the current page; the buffer is
/// committed when the page fills, before a sector skip, and on [`Log::flush`].
/// Committing writes one page write per buffered item, so an interrupted write
/// can damage only the item being committed.
#[derive(Debug, Clone)]
pub struct Log {
    media: Media,
    header: LogHeader,
    cursor: LogCursor,
    durable_addr: u32,
    pending: Vec<Pending>,
    page_writes: u64,
    persisted_ack: u32,
}

pub fn format_log(
    mut media: Media,
    tag_id: u64,
    creation_time: u64,
    registry_id: u8,
) -> Result<Log, LogError> {
    if !media.is_fully_erased() {
        return Err(LogError::NotErased);
    }
    let header = LogHeader {
        format_version: FORMAT_VERSION,
        registry_id,
        tag_id,
        creation_time,
    };
    let ps = media.geometry().page_size;
    let mut page = vec![ERASED; ps];
    page[..LOG_HEADER_LEN].copy_from_slice(&header.encode());
    match media.page_write(0, &page)? {
        WriteOutcome::Committed => {}
        WriteOutcome::PowerLost { .. } => return Err(MediaError::Failed.into()),
    }
    let end = LOG_HEADER_LEN as u32;
    Ok(Log {
        media,
        header,
        cursor: LogCursor {
            write_addr: end,
            ack_cursor: end,
        },
        durable_addr: end,
        pending: Vec::new(),
        page_writes: 1,
        persisted_ack: end,
    })
}

/// Reopens a log after power-up: binary search for the first erased sector,
/// then a linear scan of the sector before it.
pub fn recover(mut media: Media) -> Result<(Log, ScanReport), LogError> {
    let header = LogHeader::decode(media.read(0, LOG_HEADER_LEN)?)?;
    let g = media.geometry();
    let (ps, ss) = (g.page_size, g.sector_size);
    let mut report = ScanReport::default();

    // sectors fill monotonically, so "erased" is a suffix property
    let (mut lo, mut hi) = (1usize, g.sector_count);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        report.sectors_probed += 1;
        if media.is_sector_erased(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    report.first_erased_sector = lo;
    let last = lo - 1;
    let sector_start = last * ss;
    let sector_end = sector_start + ss;

    let mut chain_end = None;
    let mut tail_torn = None;
    for step in Walker::over(&media, sector_start).limited(sector_end) {
        match step {
            Step::Item { addr, len, .. } => {
                chain_end = Some(addr + ITEM_HEADER_LEN + len);
                tail_torn = None;
            }
            Step::Torn { addr } => {
                report.torn_headers += 1;
                tail_torn.get_or_insert(addr);
            }
        }
    }
    // A torn header may read differently once the next page is written (its
    // length byte can land there), so its type byte is cleared to invalid.
    if let Some(addr) = tail_torn {
        if media.image()[addr] != 0 {
            let page = addr / ps;
            let mut data = media.read(page * ps, ps)?.to_vec();
            data[addr - page * ps] = 0;
            media.page_write(page, &data)?;
            report.sealed = Some(addr as u32);
        }
    }
    let image = media.image();
    let last_written = image[sector_start..sector_end]
        .iter()
        .rposition(|&b| b != ERASED)
        .map(|i| sector_start + i + 1);
    let write_addr = match (chain_end, last_written) {
        (Some(e), Some(w)) if w <= e => e,
        (Some(e), None) => e,
        (_, Some(w)) => {
            report.resynchronized = true;
            round_up(w, ps)
        }
        (None, None) => sector_start,
    };

    let ack = restore_ack(&media, last, write_addr, &mut report);
    let log = Log {
        media,
        header,
        cursor: LogCursor {
            write_addr: write_addr as u32,
            ack_cursor: ack,
        },
        durable_addr: write_addr as u32,
        pending: Vec::new(),
        page_writes: 0,
        persisted_ack: ack,
    };
    Ok((log, report))
}

pub const ACK_CHECKPOINT_PAYLOAD: usize = 8;

pub fn ack_checkpoint_payload(ack: u32) -> [u8; ACK_CHECKPOINT_PAYLOAD] {
    let mut p = [0u8; ACK_CHECKPOINT_PAYLOAD];
    p[..4].copy_from_slice(&ack.to_le_bytes());
    p[4..].copy_from_slice(&(!ack).to_le_bytes());
    p
}

pub fn parse_ack_checkpoint(p: &[u8]) -> Option<u32> {
    if p.len() != ACK_CHECKPOINT_PAYLOAD {
        return None;
    }
    let ack = u32::from_le_bytes(p[..4].try_into().ok()?);
    let check = u32::from_le_bytes(p[4..].try_into().ok()?);
    (check == !ack).then_some(ack)
}

/// Latest trustworthy ack cursor: the last valid checkpoint of the newest
/// sector holding one, or that sector's header when it has none.
fn restore_ack(media: &Media, last_sector: usize, write_addr: usize, report: &mut ScanReport) -> u32 {
    let ss = media.geometry().sector_size;
    let image = media.image();
    for s in (0..=last_sector).rev() {
        let start = s * ss;
        let end = (start + ss).min(write_addr);
        let mut checkpoint = None;
        for step in Walker::over(media, start).limited(end) {
            if let Step::Item {
                addr,
                item_type: item_type::ACK_CHECKPOINT,
                len,
            } = step
            {
                let p = &image[addr + ITEM_HEADER_LEN..addr + ITEM_HEADER_LEN + len];
                if let Some(ack) = parse_ack_checkpoint(p) {
                    if ack as usize <= addr && ack as usize >= LOG_HEADER_LEN {
                        checkpoint = Some((addr, ack));
                    }
                }
            }
        }
        if let Some((addr, ack)) = checkpoint {
            report.ack_source = Some(addr as u32);
            return ack;
        }
        if s == 0 || image[start] != item_type::SECTOR_HEADER || image[start + 1] as usize != SECTOR_HEADER_PAYLOAD {
            continue;
        }
        // a sector header is trusted only if a later non-boot item proves it complete
        match next_item(media, start + SECTOR_HEADER_LEN) {
            Some((_, t, _)) if t != item_type::BOOT_MARKER => {}
            _ => continue,
        }
        let payload = &image[start + ITEM_HEADER_LEN..start + SECTOR_HEADER_LEN];
        if let Some(h) = SectorHeader::from_payload(payload) {
            if (h.ack_cursor as usize) <= start && h.ack_cursor as usize >= LOG_HEADER_LEN {
                report.ack_source = Some(start as u32);
                return h.ack_cursor;
            }
        }
    }
    LOG_HEADER_LEN as u32
}

impl Log {
    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn cursor(&self) -> LogCursor {
        self.cursor
    }

    /// End of the bytes committed to the medium.
    pub fn durable_addr(&self) -> u32 {
        self.durable_addr
    }

    pub fn media(&self) -> &Media {
        &self.media
    }

    pub fn media_mut(&mut self) -> &mut Media {
        &mut self.media
    }

    pub fn into_media(self) -> Media {
        self.media
    }

    pub fn page_writes(&self) -> u64 {
        self.page_writes
    }

    pub fn buffered_bytes(&self) -> usize {
        (self.cursor.write_addr - self.durable_addr) as usize
    }

    pub fn is_buffered(&self, addr: u32) -> bool {
        addr >= self.durable_addr && addr < self.cursor.write_addr
    }

    /// Appends an item and returns its address.
    pub fn append_item(&mut self, item_type: u8, payload: &[u8]) -> Result<u32, LogError> {
        if !item_type::is_valid(item_type) {
            return Err(LogError::InvalidType(item_type));
        }
        if payload.len() > MAX_PAYLOAD {
            return Err(LogError::PayloadTooLong(payload.len()));
        }
        if self.media.is_failed() {
            return Err(MediaError::Failed.into());
        }
        let g = self.media.geometry();
        let ss = g.sector_size;
        let total = ITEM_HEADER_LEN + payload.len();
        let mut p = self.cursor.write_addr as usize;
        let sector_end = (p / ss + 1) * ss;
        if p % ss != 0 && p + total > sector_end {
            self.flush()?;
            p = sector_end;
        }
        if p % ss == 0 {
            if p >= g.capacity() || SECTOR_HEADER_LEN + total > ss {
                return Err(LogError::Full);
            }
            self.flush()?;
            self.durable_addr = p as u32;
            self.cursor.write_addr = p as u32;
            let sh = SectorHeader {
                ack_cursor: self.cursor.ack_cursor,
                sector_seq: (p / ss) as u16,
                flags: 0,
            };
            self.push(item_type::SECTOR_HEADER, &sh.payload())?;
            self.persisted_ack = self.cursor.ack_cursor;
        }
        self.push(item_type, payload)
    }

    fn push(&mut self, item_type: u8, payload: &[u8]) -> Result<u32, LogError> {
        let addr = self.cursor.write_addr as usize;
        let mut bytes = Vec::with_capacity(ITEM_HEADER_LEN + payload.len());
        bytes.push(item_type);
        bytes.push(payload.len() as u8);
        bytes.extend_from_slice(payload);
        let end = addr + bytes.len();
        self.pending.push(Pending { addr, bytes });
        self.cursor.write_addr = end as u32;
        let ps = self.media.geometry().page_size;
        let first_page_end = (self.pending[0].addr / ps + 1) * ps;
        if end >= first_page_end {
            self.flush()?;
        }
        Ok(addr as u32)
    }

    /// Commits every buffered item to the medium.
    pub fn flush(&mut self) -> Result<(), LogError> {
        let ps = self.media.geometry().page_size;
        let pending = std::mem::take(&mut self.pending);
        for item in &pending {
            let end = item.addr + item.bytes.len();
            let mut page = item.addr / ps;
            while page * ps < end {
                let page_start = page * ps;
                let mut data = self.media.read(page_start, ps)?.to_vec();
                let lo = item.addr.max(page_start);
                let hi = end.min(page_start + ps);
                data[lo - page_start..hi - page_start]
                    .copy_from_slice(&item.bytes[lo - item.addr..hi - item.addr]);
                self.page_writes += 1;
                match self.media.page_write(page, &data)? {
                    WriteOutcome::Committed => {}
                    WriteOutcome::PowerLost { .. } => return Err(MediaError::Failed.into()),
                }
                page += 1;
            }
            self.durable_addr = end as u32;
        }
        Ok(())
    }

    /// Writes a boot marker followed by the caller's sensor-configuration items.
    pub fn log_boot(
        &mut self,
        marker: BootMarker,
        config_items: &[(u8, Vec<u8>)],
    ) -> Result<u32, LogError> {
        let addr = self.append_item(item_type::BOOT_MARKER, &marker.payload())?;
        for (t, p) in config_items {
            self.append_item(*t, p)?;
        }
        Ok(addr)
    }

    /// Moves the in-RAM ack cursor; it reaches the medium with the next sector header.
    pub fn set_ack_cursor(&mut self, addr: u32) -> Result<LogCursor, LogError> {
        if addr < self.cursor.ack_cursor {
            return Err(LogError::AckRegression {
                from: self.cursor.ack_cursor,
                to: addr,
            });
        }
        if addr > self.cursor.write_addr {
            return Err(LogError::AckBeyondEnd(addr));
        }
        self.cursor.ack_cursor = addr;
        Ok(self.cursor)
    }

    /// Appends and commits an ack checkpoint if the ack cursor has moved into a
    /// later sector than the last persisted one. Returns whether it wrote one.
    pub fn checkpoint_ack(&mut self) -> Result<bool, LogError> {
        let ss = self.media.geometry().sector_size as u32;
        let ack = self.cursor.ack_cursor;
        if ack / ss <= self.persisted_ack / ss {
            return Ok(false);
        }
        self.append_item(item_type::ACK_CHECKPOINT, &ack_checkpoint_payload(ack))?;
        self.flush()?;
        self.persisted_ack = ack;
        Ok(true)
    }

    /// Ack cursor value that survives a reboot once everything is flushed.
    pub fn persisted_ack(&self) -> u32 {
        self.persisted_ack
    }

    /// Payload of the durable item at `addr`.
    pub fn item_at(&self, addr: u32) -> Option<(u8, &[u8])> {
        let a = addr as usize;
        if a + ITEM_HEADER_LEN > self.durable_addr as usize {
            return None;
        }
        let img = self.media.image();
        let len = img[a + 1] as usize;
        Some((img[a], &img[a + ITEM_HEADER_LEN..a + ITEM_HEADER_LEN + len]))
    }

    /// First durable item at or after `addr`.
    pub fn next_durable_item(&self, addr: u32) -> Option<u32> {
        let limit = self.durable_addr as usize;
        Walker::over(&self.media, addr as usize)
            .limited(limit)
            .find_map(|s| match s {
                Step::Item { addr, .. } => Some(addr as u32),
                Step::Torn { .. } => None,
            })
    }
}
