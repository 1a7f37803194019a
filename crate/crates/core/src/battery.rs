//! Concentration-polarization stalls: under pulsed load a coin cell's voltage
//! can sag below what the MCU needs and recover only slowly.

use rand::Rng;

pub const MIN_OPERATING_VOLTAGE: f64 = 1.8;
pub const VOLTAGE_CHECK_US: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StallParams {
    /// Chance that a slot wake-up triggers a stall.
    pub probability: f64,
    /// Time constant of the voltage recovery, seconds.
    pub recovery_tau_s: f64,
    /// Voltage right after the sag.
    pub sag_voltage: f64,
}

impl Default for StallParams {
    fn default() -> Self {
        StallParams {
            probability: 0.0,
            recovery_tau_s: 3.0,
            sag_voltage: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryState {
    pub open_circuit_voltage: f64,
    pub threshold: f64,
    pub params: StallParams,
    stalled_at: Option<u64>,
    pub stall_count: u32,
}

impl BatteryState {
    pub fn new(open_circuit_voltage: f64, params: StallParams) -> Self {
        BatteryState {
            open_circuit_voltage: open_circuit_voltage.clamp(0.0, 3.8),
            threshold: MIN_OPERATING_VOLTAGE,
            params,
            stalled_at: None,
            stall_count: 0,
        }
    }

    pub fn is_stalled(&self) -> bool {
        self.stalled_at.is_some()
    }

    /// Voltage at `now_us`, relaxing exponentially back towards open circuit.
    pub fn voltage(&self, now_us: u64) -> f64 {
        let ocv = self.open_circuit_voltage;
        match self.stalled_at {
            None => ocv,
            Some(t0) => {
                let dt = now_us.saturating_sub(t0) as f64 / 1e6;
                let tau = self.params.recovery_tau_s.max(1e-9);
                ocv - (ocv - self.params.sag_voltage) * (-dt / tau).exp()
            }
        }
    }

    /// Called at each slot wake-up. Returns false when the tag must stall.
    pub fn on_wake(&mut self, now_us: u64, rng: &mut impl Rng) -> bool {
        if self.stalled_at.is_some() {
            return false;
        }
        if self.open_circuit_voltage < self.threshold {
            self.stalled_at = Some(now_us);
            self.stall_count += 1;
            return false;
        }
        if self.params.probability > 0.0 && rng.gen_bool(self.params.probability.min(1.0)) {
            self.stalled_at = Some(now_us);
            self.stall_count += 1;
            return false;
        }
        true
    }

    /// A voltage check; clears the stall once the voltage is back above threshold.
    pub fn check(&mut self, now_us: u64) -> bool {
        if self.stalled_at.is_some() && self.voltage(now_us) >= self.threshold {
            self.stalled_at = None;
        }
        self.stalled_at.is_none()
    }
}
