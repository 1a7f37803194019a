//! Average-current lifespan estimate for a tag definition on a primary cell.
//!
//! The average current is the MCU sleep current, the reservoir capacitor
//! leakage, and the charge of every radio event and sensor sample times its
//! rate. Defaults were fitted by least squares to measured maximum lifespans
//! of tags pinging at 1/8 Hz and 1/6 Hz (the CR2477 row, about 97 uA average,
//! does not fit any linear model with the others and was left out).

use crate::tagdef::{Configuration, SetupKind, SlotMode, TagDefinition};

/// Sleep current of the MCU, uA.
pub const SLEEP_CURRENT_UA: f64 = 1.0;
/// Leakage of the reservoir capacitor, uA.
pub const CAP_LEAKAGE_UA: f64 = 20.637;
/// Charge of one 8192-bit ATLAS ping at 1 Mb/s, uC.
pub const ATLAS_PING_CHARGE_UC: f64 = 130.13;
/// Charge of one data-packet transmission at 500 kb/s, uC.
pub const DATA_TX_CHARGE_UC: f64 = 20.0;
/// Charge of one receive window after a data transmission, uC.
pub const RX_WINDOW_CHARGE_UC: f64 = 90.0;
/// Charge of one sensor sample, uC.
pub const SENSING_CHARGE_UC: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub sleep_ua: f64,
    pub leakage_ua: f64,
    pub atlas_ping_uc: f64,
    pub data_tx_uc: f64,
    pub rx_window_uc: f64,
    pub sample_uc: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            sleep_ua: SLEEP_CURRENT_UA,
            leakage_ua: CAP_LEAKAGE_UA,
            atlas_ping_uc: ATLAS_PING_CHARGE_UC,
            data_tx_uc: DATA_TX_CHARGE_UC,
            rx_window_uc: RX_WINDOW_CHARGE_UC,
            sample_uc: SENSING_CHARGE_UC,
        }
    }
}

impl EnergyParams {
    /// Every current and charge multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        EnergyParams {
            sleep_ua: self.sleep_ua * k,
            leakage_ua: self.leakage_ua * k,
            atlas_ping_uc: self.atlas_ping_uc * k,
            data_tx_uc: self.data_tx_uc * k,
            rx_window_uc: self.rx_window_uc * k,
            sample_uc: self.sample_uc * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Battery {
    pub name: &'static str,
    pub capacity_mah: f64,
    pub usable_fraction: f64,
}

impl Battery {
    pub fn custom(capacity_mah: f64) -> Self {
        Battery {
            name: "custom",
            capacity_mah,
            usable_fraction: 1.0,
        }
    }
}

/// Capacities to the cut-off voltage the tags run down to (2.4 V for the
/// silver-oxide pairs, 2 V otherwise).
pub const BATTERIES: &[Battery] = &[
    Battery { name: "SO337", capacity_mah: 8.3, usable_fraction: 1.0 },
    Battery { name: "SO317", capacity_mah: 11.5, usable_fraction: 1.0 },
    Battery { name: "CR1025", capacity_mah: 30.0, usable_fraction: 1.0 },
    Battery { name: "CR1620", capacity_mah: 81.0, usable_fraction: 1.0 },
    Battery { name: "CR2032", capacity_mah: 235.0, usable_fraction: 1.0 },
    Battery { name: "CR2477", capacity_mah: 1000.0, usable_fraction: 1.0 },
    Battery { name: "TL4920", capacity_mah: 8500.0, usable_fraction: 1.0 },
];

pub fn battery(name: &str) -> Option<Battery> {
    BATTERIES
        .iter()
        .find(|b| b.name.eq_ignore_ascii_case(name))
        .copied()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub average_current_ua: f64,
    pub days: f64,
}

fn event_charge(def: &TagDefinition, setup: &str, mode: SlotMode, p: &EnergyParams) -> f64 {
    let Some(s) = def.setup(setup) else {
        return 0.0;
    };
    let tx = match s.kind {
        SetupKind::AtlasPing => {
            p.atlas_ping_uc * (s.ping_bits as f64 / 8192.0) * (1_000_000.0 / s.bitrate as f64)
        }
        SetupKind::DataShortRange | SetupKind::DataLongRange => {
            p.data_tx_uc * (500_000.0 / s.bitrate as f64)
        }
    };
    match mode {
        SlotMode::TxOnly => tx,
        SlotMode::TxThenRx => tx + p.rx_window_uc,
    }
}

/// Average current in uA while the tag stays in `config`.
pub fn average_current(def: &TagDefinition, config: &Configuration, p: &EnergyParams) -> f64 {
    let period_s = def.period_ms as f64 / 1000.0;
    let radio: f64 = config
        .allocations
        .iter()
        .map(|a| event_charge(def, &a.setup, a.mode, p) / (a.every as f64 * period_s))
        .sum();
    let sensing: f64 = def
        .sensors
        .iter()
        .map(|s| p.sample_uc * s.burst_samples() as f64 / s.every_s as f64)
        .sum();
    p.sleep_ua + p.leakage_ua + radio + sensing
}

/// Lifespan in the initial configuration. Returns `None` when the average
/// current is not positive.
pub fn estimate_lifespan(def: &TagDefinition, battery: &Battery, p: &EnergyParams) -> Option<Estimate> {
    let config = def.config(def.initial_config)?;
    estimate_for_current(average_current(def, config, p), battery)
}

pub fn estimate_for_current(current_ua: f64, battery: &Battery) -> Option<Estimate> {
    if !(current_ua > 0.0) {
        return None;
    }
    let usable_uah = battery.capacity_mah.max(0.0) * battery.usable_fraction * 1000.0;
    Some(Estimate {
        average_current_ua: current_ua,
        days: usable_uah / current_ua / 24.0,
    })
}

/// A minimal pinger: one configuration with an ATLAS ping every `period_ms`.
pub fn pinger_definition(period_ms: u32) -> TagDefinition {
    use crate::tagdef::{RadioSetup, SlotAllocation};
    TagDefinition {
        tag_id: 0,
        period_ms,
        setups: vec![RadioSetup {
            name: "ATLAS".into(),
            kind: SetupKind::AtlasPing,
            bitrate: 1_000_000,
            ping_bits: 8192,
        }],
        configurations: vec![Configuration {
            index: 0,
            cycle_length: 1,
            allocations: vec![SlotAllocation {
                setup: "ATLAS".into(),
                every: 1,
                from: 0,
                mode: SlotMode::TxOnly,
            }],
        }],
        initial_config: 0,
        transitions: Vec::new(),
        sensors: Vec::new(),
        upload_threshold: crate::tagdef::DEFAULT_UPLOAD_THRESHOLD,
        actuator_config: None,
    }
}
