//! Simulated sensors and the packed sample layouts used in log items.
//!
//! ```text
//! accumulation item := start:u32 sample*            one-shot samples, `every` s apart
//! burst fragment    := start:u32 index:u8 sample*   samples at 1/rate_hz s spacing
//! pressure sample   := pressure:u24 (1/8 Pa) temperature:i8 (deg C)
//! accel sample      := x:i16 y:i16 z:i16 (full scale from the sensor config)
//! ```
//!
//! `start` is whole seconds: UTC once the tag clock is set, seconds since boot
//! before that.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::log::item_type;
use crate::tagdef::{SamplingMode, SensorKind, SensorSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sample {
    PressureTemperature { pressure_raw: u32, temperature_c: i8 },
    Acceleration([i16; 3]),
}

impl Sample {
    pub fn kind(&self) -> SensorKind {
        match self {
            Sample::PressureTemperature { .. } => SensorKind::PressureTemperature,
            Sample::Acceleration(_) => SensorKind::Acceleration,
        }
    }

    pub fn pack(&self, out: &mut Vec<u8>) {
        match *self {
            Sample::PressureTemperature {
                pressure_raw,
                temperature_c,
            } => {
                out.extend_from_slice(&pressure_raw.to_le_bytes()[..3]);
                out.push(temperature_c as u8);
            }
            Sample::Acceleration(axes) => {
                for a in axes {
                    out.extend_from_slice(&a.to_le_bytes());
                }
            }
        }
    }

    pub fn unpack(kind: SensorKind, b: &[u8]) -> Option<Sample> {
        match kind {
            SensorKind::PressureTemperature if b.len() == 4 => Some(Sample::PressureTemperature {
                pressure_raw: u32::from_le_bytes([b[0], b[1], b[2], 0]),
                temperature_c: b[3] as i8,
            }),
            SensorKind::Acceleration if b.len() == 6 => Some(Sample::Acceleration([
                i16::from_le_bytes([b[0], b[1]]),
                i16::from_le_bytes([b[2], b[3]]),
                i16::from_le_bytes([b[4], b[5]]),
            ])),
            _ => None,
        }
    }

    /// Physical values: [Pa, deg C] or [g, g, g].
    pub fn physical(&self, sensor_config: &[u8]) -> Vec<f64> {
        match *self {
            Sample::PressureTemperature {
                pressure_raw,
                temperature_c,
            } => vec![pressure_raw as f64 / 8.0, temperature_c as f64],
            Sample::Acceleration(axes) => {
                let range = accel_range_g(sensor_config) as f64;
                axes.iter().map(|&a| a as f64 * range / 32768.0).collect()
            }
        }
    }
}

/// Full-scale range in g: first byte of the accelerometer config, 2 g if absent.
pub fn accel_range_g(config: &[u8]) -> u8 {
    match config.first() {
        Some(&r @ (2 | 4 | 8 | 16)) => r,
        _ => 2,
    }
}

pub fn item_type_for(kind: SensorKind, mode: SamplingMode) -> u8 {
    match (kind, mode) {
        (SensorKind::PressureTemperature, SamplingMode::OneShot) => item_type::PRESSURE_TEMPERATURE,
        (SensorKind::PressureTemperature, SamplingMode::Burst { .. }) => {
            item_type::PRESSURE_FRAGMENT
        }
        (SensorKind::Acceleration, SamplingMode::OneShot) => item_type::ACCEL_ACCUMULATION,
        (SensorKind::Acceleration, SamplingMode::Burst { .. }) => item_type::ACCEL_FRAGMENT,
    }
}

/// Inverse of [`item_type_for`]: (kind, is_burst).
pub fn classify_item(t: u8) -> Option<(SensorKind, bool)> {
    Some(match t {
        item_type::PRESSURE_TEMPERATURE => (SensorKind::PressureTemperature, false),
        item_type::PRESSURE_FRAGMENT => (SensorKind::PressureTemperature, true),
        item_type::ACCEL_ACCUMULATION => (SensorKind::Acceleration, false),
        item_type::ACCEL_FRAGMENT => (SensorKind::Acceleration, true),
        _ => return None,
    })
}

pub fn accumulation_payload(start_s: u32, samples: &[Sample]) -> Vec<u8> {
    let mut p = start_s.to_le_bytes().to_vec();
    for s in samples {
        s.pack(&mut p);
    }
    p
}

pub fn fragment_payload(start_s: u32, index: u8, samples: &[Sample]) -> Vec<u8> {
    let mut p = start_s.to_le_bytes().to_vec();
    p.push(index);
    for s in samples {
        s.pack(&mut p);
    }
    p
}

fn unpack_all(kind: SensorKind, b: &[u8]) -> Option<Vec<Sample>> {
    let n = kind.sample_size();
    if b.len() % n != 0 {
        return None;
    }
    b.chunks(n).map(|c| Sample::unpack(kind, c)).collect()
}

pub fn parse_accumulation(kind: SensorKind, p: &[u8]) -> Option<(u32, Vec<Sample>)> {
    let start = u32::from_le_bytes(p.get(..4)?.try_into().ok()?);
    Some((start, unpack_all(kind, &p[4..])?))
}

pub fn parse_fragment(kind: SensorKind, p: &[u8]) -> Option<(u32, u8, Vec<Sample>)> {
    let start = u32::from_le_bytes(p.get(..4)?.try_into().ok()?);
    let index = *p.get(4)?;
    Some((start, index, unpack_all(kind, &p[5..])?))
}

/// Microsecond offset of sample `n` within a burst.
pub fn burst_offset_us(n: u32, rate_hz: u32) -> i64 {
    n as i64 * 1_000_000 / rate_hz as i64
}

/// Splits a burst into the log item payloads described by `schedule`.
pub fn burst_fragments(schedule: &SensorSchedule, start_s: u32, samples: &[Sample]) -> Vec<Vec<u8>> {
    let (_, per) = schedule.fragment_layout();
    samples
        .chunks(per.max(1) as usize)
        .enumerate()
        .map(|(i, c)| fragment_payload(start_s, i as u8, c))
        .collect()
}

/// Deterministic waveforms standing in for the barometer and accelerometer.
#[derive(Debug, Clone, Copy)]
pub struct SensorSim {
    pub seed: u64,
}

impl SensorSim {
    pub fn new(seed: u64) -> Self {
        SensorSim { seed }
    }

    fn noise(&self, kind: SensorKind, t_us: i64) -> ChaCha8Rng {
        let k = match kind {
            SensorKind::PressureTemperature => 0x5054,
            SensorKind::Acceleration => 0x4143,
        };
        ChaCha8Rng::seed_from_u64(self.seed ^ (t_us as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ k)
    }

    /// Reading at true time `t_us` (microseconds).
    pub fn sample(&self, kind: SensorKind, t_us: i64) -> Sample {
        let t = t_us as f64 / 1e6;
        let mut rng = self.noise(kind, t_us);
        match kind {
            SensorKind::PressureTemperature => {
                // a slow climb and descent of about 50 m
                let pa = 100_000.0 - 600.0 * (TAU * t / 900.0).sin() + rng.gen_range(-2.0..2.0);
                let c = 15.0 + 8.0 * (TAU * t / 3600.0).sin() + rng.gen_range(-0.5..0.5);
                Sample::PressureTemperature {
                    pressure_raw: ((pa * 8.0).round() as u32) & 0x00FF_FFFF,
                    temperature_c: c.round() as i8,
                }
            }
            SensorKind::Acceleration => {
                let mut axis = |amp: f64, hz: f64, bias: f64| {
                    (bias + amp * (TAU * hz * t).sin() + rng.gen_range(-200.0..200.0)).round()
                        as i16
                };
                Sample::Acceleration([
                    axis(4000.0, 1.7, 0.0),
                    axis(2500.0, 2.3, 0.0),
                    axis(1500.0, 0.9, 16384.0),
                ])
            }
        }
    }
}
