//! Simulated page-write nonvolatile media.
//!
//! A [`Media`] behaves like NOR flash or a raw SD card as seen by the log:
//! every byte starts erased (`0xFF`), programming can only clear bits, and the
//! only write primitive is a whole-page write. A [`FaultPlan`] cuts power in the
//! middle of a chosen page write, leaving a committed prefix and a partially
//! programmed tail inside that one page.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::MediaError;

pub const ERASED: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MediaGeometry {
    pub page_size: usize,
    pub sector_size: usize,
    pub sector_count: usize,
}

impl MediaGeometry {
    pub fn new(
        page_size: usize,
        sector_size: usize,
        sector_count: usize,
    ) -> Result<Self, MediaError> {
        if page_size == 0 || sector_size == 0 || sector_count == 0 {
            return Err(MediaError::Geometry("sizes must be positive".into()));
        }
        if sector_size % page_size != 0 {
            return Err(MediaError::Geometry(format!(
                "sector size {sector_size} is not a multiple of page size {page_size}"
            )));
        }
        Ok(MediaGeometry {
            page_size,
            sector_size,
            sector_count,
        })
    }

    /// 8 MB NOR flash, 256-byte pages, 4 KB logical sectors.
    pub fn nor_8mb() -> Self {
        MediaGeometry {
            page_size: 256,
            sector_size: 4096,
            sector_count: 2048,
        }
    }

    /// NOR page geometry with a caller-chosen number of 4 KB sectors.
    pub fn nor(sector_count: usize) -> Self {
        MediaGeometry {
            page_size: 256,
            sector_size: 4096,
            sector_count,
        }
    }

    /// SD card: 512-byte pages, 64 KB logical sectors.
    pub fn sd(sector_count: usize) -> Self {
        MediaGeometry {
            page_size: 512,
            sector_size: 65536,
            sector_count,
        }
    }

    pub fn capacity(&self) -> usize {
        self.sector_size * self.sector_count
    }

    pub fn page_count(&self) -> usize {
        self.capacity() / self.page_size
    }

    pub fn pages_per_sector(&self) -> usize {
        self.sector_size / self.page_size
    }
}

/// Power fails during the `fail_at_write`-th page write (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultPlan {
    pub fail_at_write: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WriteOutcome {
    Committed,
    /// Power was lost; bytes `[page_start, page_start + committed)` hold the
    /// requested data, the rest of the page is in an indeterminate state.
    PowerLost { committed: usize },
}

#[derive(Clone)]
pub struct Media {
    geometry: MediaGeometry,
    bytes: Vec<u8>,
    writes: u64,
    fault: Option<FaultPlan>,
    failed: bool,
}

impl std::fmt::Debug for Media {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Media")
            .field("geometry", &self.geometry)
            .field("writes", &self.writes)
            .field("fault", &self.fault)
            .field("failed", &self.failed)
            .finish()
    }
}

impl Media {
    pub fn new(geometry: MediaGeometry) -> Self {
        Media {
            geometry,
            bytes: vec![ERASED; geometry.capacity()],
            writes: 0,
            fault: None,
            failed: false,
        }
    }

    pub fn with_fault(geometry: MediaGeometry, fault: FaultPlan) -> Self {
        let mut m = Media::new(geometry);
        m.fault = Some(fault);
        m
    }

    pub fn from_image(geometry: MediaGeometry, image: Vec<u8>) -> Result<Self, MediaError> {
        if image.len() != geometry.capacity() {
            return Err(MediaError::Geometry(format!(
                "image is {} bytes, geometry expects {}",
                image.len(),
                geometry.capacity()
            )));
        }
        Ok(Media {
            geometry,
            bytes: image,
            writes: 0,
            fault: None,
            failed: false,
        })
    }

    pub fn load(geometry: MediaGeometry, path: &Path) -> Result<Self, MediaError> {
        let image = fs::read(path)?;
        Media::from_image(geometry, image)
    }

    pub fn save(&self, path: &Path) -> Result<(), MediaError> {
        fs::write(path, &self.bytes)?;
        Ok(())
    }

    pub fn geometry(&self) -> MediaGeometry {
        self.geometry
    }

    pub fn image(&self) -> &[u8] {
        &self.bytes
    }

    pub fn write_count(&self) -> u64 {
        self.writes
    }

    pub fn is_failed(&self) -> bool {
        self.failed
    }

    pub fn set_fault_plan(&mut self, fault: Option<FaultPlan>) {
        self.fault = fault;
    }

    /// Restores power after a fault: the device accepts writes again and the
    /// fault plan is cleared. Contents are untouched.
    pub fn power_cycle(&mut self) {
        self.failed = false;
        self.fault = None;
    }

    pub fn page_write(&mut self, page_index: usize, data: &[u8]) -> Result<WriteOutcome, MediaError> {
        if self.failed {
            return Err(MediaError::Failed);
        }
        let ps = self.geometry.page_size;
        if page_index >= self.geometry.page_count() {
            return Err(MediaError::OutOfRange {
                offset: page_index * ps,
                len: ps,
            });
        }
        if data.len() != ps {
            return Err(MediaError::PageLength {
                expected: ps,
                got: data.len(),
            });
        }
        self.writes += 1;
        let start = page_index * ps;
        let page = &mut self.bytes[start..start + ps];
        match self.fault {
            Some(plan) if plan.fail_at_write == self.writes => {
                let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ self.writes.rotate_left(32));
                let committed = rng.gen_range(0..ps);
                for (i, (b, d)) in page.iter_mut().zip(data).enumerate() {
                    if i < committed {
                        *b &= *d;
                    } else {
                        // bits that were meant to be cleared may or may not be
                        let noise: u8 = rng.gen();
                        *b &= *d | noise;
                    }
                }
                self.failed = true;
                Ok(WriteOutcome::PowerLost { committed })
            }
            _ => {
                for (b, d) in page.iter_mut().zip(data) {
                    *b &= *d;
                }
                Ok(WriteOutcome::Committed)
            }
        }
    }

    pub fn read(&self, offset: usize, len: usize) -> Result<&[u8], MediaError> {
        let end = offset
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(MediaError::OutOfRange { offset, len })?;
        Ok(&self.bytes[offset..end])
    }

    pub fn is_sector_erased(&self, sector_index: usize) -> Result<bool, MediaError> {
        let ss = self.geometry.sector_size;
        if sector_index >= self.geometry.sector_count {
            return Err(MediaError::OutOfRange {
                offset: sector_index * ss,
                len: ss,
            });
        }
        let start = sector_index * ss;
        Ok(self.bytes[start..start + ss].iter().all(|&b| b == ERASED))
    }

    pub fn is_fully_erased(&self) -> bool {
        self.bytes.iter().all(|&b| b == ERASED)
    }

    /// Sector erase. The log never calls this; it exists for reuse experiments.
    pub fn erase_sector(&mut self, sector_index: usize) -> Result<(), MediaError> {
        if self.failed {
            return Err(MediaError::Failed);
        }
        let ss = self.geometry.sector_size;
        if sector_index >= self.geometry.sector_count {
            return Err(MediaError::OutOfRange {
                offset: sector_index * ss,
                len: ss,
            });
        }
        let start = sector_index * ss;
        self.bytes[start..start + ss].fill(ERASED);
        Ok(())
    }
}
