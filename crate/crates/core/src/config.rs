use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of one simulated run.
///
/// `m = n^beta` is always derived through [`SimConfig::m`] and never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Primary density (nodes per unit area).
    pub n: f64,
    /// Density exponent, secondary density is `n^beta`.
    pub beta: f64,
    /// Pathloss exponent.
    pub alpha: f64,
    /// Power constant `P` in the `P * a^(alpha/2)` transmit power rule.
    pub power_const: f64,
    /// Ambient noise power.
    pub noise: f64,
    /// Multiplier applied to the minimum primary cell area `2 ln n / n`.
    pub ap_scale: f64,
    /// Simulated primary frames (64 primary slots each), warmup included.
    pub frames: u32,
    /// Leading primary frames excluded from steady-state metrics.
    pub warmup_frames: u32,
    pub seed: u64,

    /// A secondary source injects one packet every this many secondary frames.
    pub secondary_injection_period: u32,
    /// A primary source injects one packet every this many primary frames.
    pub primary_injection_period: u32,
    /// Upper bound on the number of secondary S-D flows whose packets are
    /// simulated. `None` simulates every pair.
    pub secondary_probe_pairs: Option<usize>,
    /// Cap on the secondary frames (three primary slots each) covered by the
    /// SINR audit. `None` audits the whole measurement window.
    pub audit_frames: Option<u32>,
    /// Extra primary frames run without injection so that packets created in
    /// the measurement window can finish.
    pub drain_frames: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1024.0,
            beta: 2.0,
            alpha: 4.0,
            power_const: 1.0,
            noise: 1.0,
            ap_scale: 1.0,
            frames: 12,
            warmup_frames: 4,
            seed: 0,
            secondary_injection_period: 2,
            primary_injection_period: 3,
            secondary_probe_pairs: Some(1024),
            audit_frames: None,
            drain_frames: 16,
        }
    }
}

impl SimConfig {
    pub fn m(&self) -> f64 {
        self.n.powf(self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.n > 1.0) {
            return fail(format!("n must exceed 1, got {}", self.n));
        }
        if !(self.beta >= 2.0) {
            return fail(format!("beta must be at least 2, got {}", self.beta));
        }
        if !(self.alpha > 2.0) {
            return fail(format!("alpha must exceed 2, got {}", self.alpha));
        }
        if !(self.power_const > 0.0) {
            return fail(format!("power_const must be positive, got {}", self.power_const));
        }
        if !(self.noise >= 0.0) {
            return fail(format!("noise must be non-negative, got {}", self.noise));
        }
        if !(self.ap_scale >= 1.0) {
            return fail(format!("ap_scale must be at least 1, got {}", self.ap_scale));
        }
        if self.frames == 0 {
            return fail("frames must be positive".into());
        }
        if self.warmup_frames >= self.frames {
            return fail(format!(
                "warmup_frames ({}) must be smaller than frames ({})",
                self.warmup_frames, self.frames
            ));
        }
        if self.secondary_injection_period == 0 || self.primary_injection_period == 0 {
            return fail("injection periods must be positive".into());
        }
        if self.secondary_probe_pairs == Some(0) {
            return fail("secondary_probe_pairs must be positive when set".into());
        }
        Ok(())
    }
}
