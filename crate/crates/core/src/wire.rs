//! Radio packet payloads: sequences of typed data items.
//!
//! Each data item starts with a compressed header carrying a 16-bit type and an
//! 8-bit length, in the shortest of three forms:
//!
//! ```text
//! form A  0TTTLLLL                         type <= 7, length <= 15
//! form B  10TTTTTT LLLLLLLL                type <= 63
//! form C  11000000 LLLLLLLL TTTTTTTT TTTTTTTT   (type big-endian)
//! ```
//!
//! Any other `11xxxxxx` lead byte is reserved. Decoders reject an item encoded
//! in a longer form than needed, so each (type, length) has one encoding.
//!
//! Item payload fields are little-endian. A minimal tag packet for tag 42 in
//! configuration 1, listening, with no data pending:
//!
//! ```text
//! 01 81 18 2a 00 00 00 00 00 00 00
//! ^^ ^^                               TagState header (type 0, len 1), flags
//!       ^^ ^^^^^^^^^^^^^^^^^^^^^^^    TagId header (type 1, len 8), id
//! ```

use crate::error::WireError;

pub const MAX_PACKET: usize = 255;

/// Registry of data-item types. Protocol-critical items use 0..=7 so their
/// headers usually fit in one byte.
pub mod data_type {
    pub const TAG_STATE: u16 = 0;
    pub const TAG_ID: u16 = 1;
    pub const ACK: u16 = 2;
    pub const CLOCK: u16 = 3;
    pub const WAKEUP: u16 = 4;
    pub const ADDRESSED_TO: u16 = 5;
    pub const LOG_ITEM: u16 = 6;
    pub const LOG_STATE: u16 = 7;
}

pub fn encode_header(type_code: u32, length: usize) -> Result<Vec<u8>, WireError> {
    if type_code > u16::MAX as u32 {
        return Err(WireError::TypeRange(type_code));
    }
    if length > 255 {
        return Err(WireError::LengthRange(length));
    }
    let (t, l) = (type_code as u16, length as u8);
    Ok(if t <= 7 && l <= 15 {
        vec![((t as u8) << 4) | l]
    } else if t <= 63 {
        vec![0x80 | t as u8, l]
    } else {
        let [hi, lo] = t.to_be_bytes();
        vec![0xC0, l, hi, lo]
    })
}

pub fn header_len(type_code: u16, length: u8) -> usize {
    if type_code <= 7 && length <= 15 {
        1
    } else if type_code <= 63 {
        2
    } else {
        4
    }
}

/// Decodes the header at the start of `bytes`: `(type, length, consumed)`.
pub fn decode_header(bytes: &[u8]) -> Result<(u16, u8, usize), WireError> {
    decode_header_at(bytes, 0)
}

fn decode_header_at(bytes: &[u8], offset: usize) -> Result<(u16, u8, usize), WireError> {
    let b = *bytes.get(offset).ok_or(WireError::Truncated(offset))?;
    if b & 0x80 == 0 {
        return Ok(((b >> 4) as u16, b & 0x0F, 1));
    }
    if b & 0xC0 == 0x80 {
        let l = *bytes.get(offset + 1).ok_or(WireError::Truncated(offset))?;
        let t = (b & 0x3F) as u16;
        if t <= 7 && l <= 15 {
            return Err(WireError::NonCanonical(offset));
        }
        return Ok((t, l, 2));
    }
    if b != 0xC0 {
        return Err(WireError::ReservedPrefix { offset, byte: b });
    }
    if bytes.len() < offset + 4 {
        return Err(WireError::Truncated(offset));
    }
    let l = bytes[offset + 1];
    let t = u16::from_be_bytes([bytes[offset + 2], bytes[offset + 3]]);
    if t <= 63 {
        return Err(WireError::NonCanonical(offset));
    }
    Ok((t, l, 4))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagState {
    pub will_listen: bool,
    pub has_data: bool,
    pub config_index: u8,
}

impl TagState {
    pub fn to_byte(self) -> u8 {
        ((self.will_listen as u8) << 7) | ((self.has_data as u8) << 6) | (self.config_index & 0x0F)
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        if b & 0x30 != 0 {
            return None;
        }
        Some(TagState {
            will_listen: b & 0x80 != 0,
            has_data: b & 0x40 != 0,
            config_index: b & 0x0F,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogState {
    pub write_addr: u32,
    pub ack_cursor: u32,
    pub creation_time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WakeupTarget {
    Config(u8),
    Highest,
}

/// A log item in transit, with the identity fields that make it globally unique
/// (the tag id travels in the packet's `TagId` item).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogItemCarrier {
    pub creation_time: u64,
    pub address: u32,
    pub item_type: u8,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataItem {
    TagState(TagState),
    TagId(u64),
    Ack(u32),
    Clock(u64),
    Wakeup(WakeupTarget),
    AddressedTo(u64),
    LogItem(LogItemCarrier),
    LogState(LogState),
    /// Unknown type, kept verbatim.
    Opaque { type_code: u16, payload: Vec<u8> },
}

impl DataItem {
    pub fn type_code(&self) -> u16 {
        use data_type::*;
        match self {
            DataItem::TagState(_) => TAG_STATE,
            DataItem::TagId(_) => TAG_ID,
            DataItem::Ack(_) => ACK,
            DataItem::Clock(_) => CLOCK,
            DataItem::Wakeup(_) => WAKEUP,
            DataItem::AddressedTo(_) => ADDRESSED_TO,
            DataItem::LogItem(_) => LOG_ITEM,
            DataItem::LogState(_) => LOG_STATE,
            DataItem::Opaque { type_code, .. } => *type_code,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        match self {
            DataItem::TagState(s) => vec![s.to_byte()],
            DataItem::TagId(id) | DataItem::AddressedTo(id) => id.to_le_bytes().to_vec(),
            DataItem::Ack(a) => a.to_le_bytes().to_vec(),
            DataItem::Clock(t) => t.to_le_bytes().to_vec(),
            DataItem::Wakeup(WakeupTarget::Highest) => vec![0xFF],
            DataItem::Wakeup(WakeupTarget::Config(c)) => vec![*c],
            DataItem::LogItem(c) => {
                let mut p = Vec::with_capacity(13 + c.payload.len());
                p.extend_from_slice(&c.creation_time.to_le_bytes());
                p.extend_from_slice(&c.address.to_le_bytes());
                p.push(c.item_type);
                p.extend_from_slice(&c.payload);
                p
            }
            DataItem::LogState(s) => {
                let mut p = Vec::with_capacity(16);
                p.extend_from_slice(&s.write_addr.to_le_bytes());
                p.extend_from_slice(&s.ack_cursor.to_le_bytes());
                p.extend_from_slice(&s.creation_time.to_le_bytes());
                p
            }
            DataItem::Opaque { payload, .. } => payload.clone(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        let p = self.payload().len();
        header_len(self.type_code(), p.min(255) as u8) + p
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        let p = self.payload();
        out.extend(encode_header(self.type_code() as u32, p.len())?);
        out.extend_from_slice(&p);
        Ok(())
    }

    fn decode(type_code: u16, p: &[u8], offset: usize) -> Result<DataItem, WireError> {
        use data_type::*;
        let bad = |kind| WireError::BadItem { kind, offset };
        let u64_of = |p: &[u8]| u64::from_le_bytes(p.try_into().unwrap());
        let u32_of = |p: &[u8]| u32::from_le_bytes(p.try_into().unwrap());
        Ok(match type_code {
            TAG_STATE => {
                if p.len() != 1 {
                    return Err(bad("tag-state"));
                }
                DataItem::TagState(TagState::from_byte(p[0]).ok_or(bad("tag-state"))?)
            }
            TAG_ID | ADDRESSED_TO | CLOCK => {
                if p.len() != 8 {
                    return Err(bad("64-bit"));
                }
                let v = u64_of(p);
                match type_code {
                    TAG_ID => DataItem::TagId(v),
                    ADDRESSED_TO => DataItem::AddressedTo(v),
                    _ => DataItem::Clock(v),
                }
            }
            ACK => {
                if p.len() != 4 {
                    return Err(bad("ack"));
                }
                DataItem::Ack(u32_of(p))
            }
            WAKEUP => match p {
                [0xFF] => DataItem::Wakeup(WakeupTarget::Highest),
                [c] if *c <= 15 => DataItem::Wakeup(WakeupTarget::Config(*c)),
                _ => return Err(bad("wakeup")),
            },
            LOG_ITEM => {
                if p.len() < 13 || p.len() > 13 + crate::log::MAX_PAYLOAD {
                    return Err(bad("log-item"));
                }
                DataItem::LogItem(LogItemCarrier {
                    creation_time: u64_of(&p[..8]),
                    address: u32_of(&p[8..12]),
                    item_type: p[12],
                    payload: p[13..].to_vec(),
                })
            }
            LOG_STATE => {
                if p.len() != 16 {
                    return Err(bad("log-state"));
                }
                DataItem::LogState(LogState {
                    write_addr: u32_of(&p[..4]),
                    ack_cursor: u32_of(&p[4..8]),
                    creation_time: u64_of(&p[8..]),
                })
            }
            _ => DataItem::Opaque {
                type_code,
                payload: p.to_vec(),
            },
        })
    }
}

pub fn build_packet(items: &[DataItem]) -> Result<Vec<u8>, WireError> {
    if items.is_empty() {
        return Err(WireError::Empty);
    }
    let mut out = Vec::new();
    for item in items {
        item.encode_into(&mut out)?;
    }
    if out.len() > MAX_PACKET {
        return Err(WireError::Overflow(out.len()));
    }
    Ok(out)
}

pub fn parse_packet(payload: &[u8]) -> Result<Vec<DataItem>, WireError> {
    if payload.len() > MAX_PACKET {
        return Err(WireError::Overflow(payload.len()));
    }
    let mut items = Vec::new();
    let mut off = 0;
    while off < payload.len() {
        let (t, l, n) = decode_header_at(payload, off)?;
        let start = off + n;
        let end = start + l as usize;
        if end > payload.len() {
            return Err(WireError::Truncated(off));
        }
        items.push(DataItem::decode(t, &payload[start..end], off)?);
        off = end;
    }
    Ok(items)
}

/// Who sent a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Tag,
    Base,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub source: Source,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn build(source: Source, items: &[DataItem]) -> Result<Self, WireError> {
        Ok(Packet {
            source,
            payload: build_packet(items)?,
        })
    }

    pub fn items(&self) -> Result<Vec<DataItem>, WireError> {
        parse_packet(&self.payload)
    }
}
