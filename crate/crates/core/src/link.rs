//! Physical link description and its reduction to a normalized noise model.
//!
//! The transmitter maps PAM-M symbols onto optical power levels proportional
//! to x + β, where x takes the normalized values of a [`PamConstellation`]
//! (outer levels pinned at ±(M−1)) and the bias β keeps every power level
//! non-negative. After fiber loss, direct detection, and a transimpedance
//! stage whose gain is chosen to undo the whole electro-optic conversion
//! chain, the received sample obeys
//!
//! ```text
//! Y = X + Z * sqrt(sigma_th^2 + (X + beta)^2 * sigma_rin^2),  Z ~ N(0, 1)
//! ```
//!
//! with both sigmas expressed in symbol units. `sigma_th` collects the
//! receiver thermal noise and therefore shrinks as the transmit swing (OMA)
//! grows; `sigma_rin` comes from laser intensity noise, scales with the
//! instantaneous power through the (x + β) factor, and is independent of the
//! swing. This module owns all of the dBm/dB bookkeeping that turns
//! data-sheet quantities (NEP, RIN, attenuation, OMA, extinction ratio) into
//! those two numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// JSON has no literal for −∞, so RIN fields serialize non-finite values as
/// the string "-inf" and accept either form back.
pub(crate) mod rin_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    pub(crate) enum Raw {
        Num(f64),
        Text(String),
    }

    impl Raw {
        pub(crate) fn resolve<E: de::Error>(self) -> Result<f64, E> {
            match self {
                Raw::Num(v) => Ok(v),
                Raw::Text(s) => s
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| E::custom(format!("bad RIN value {s:?}: {e}"))),
            }
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Raw::deserialize(d)?.resolve()
    }
}

/// Same convention for lists of RIN values.
pub(crate) mod rin_seq_serde {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            if x.is_finite() {
                seq.serialize_element(x)?;
            } else {
                seq.serialize_element("-inf")?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<super::rin_serde::Raw>::deserialize(d)?;
        raw.into_iter().map(|r| r.resolve()).collect()
    }
}

// ---------------------------------------------------------------- parameters

/// Physical parameters of one operating point of the link.
///
/// Everything is stored in SI base units (Hz, baud, A/W, A/√Hz) plus the
/// conventional dB forms used on data sheets. The configuration layer accepts
/// the friendlier GHz/GBd/pA keys and converts on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Double-sided receiver noise bandwidth B in Hz.
    pub noise_bandwidth_hz: f64,
    /// Symbol rate in baud.
    pub symbol_rate_baud: f64,
    /// Laser relative intensity noise in dB/Hz. `-inf` selects the pure
    /// thermal-noise (AWGN) mode.
    #[serde(with = "rin_serde")]
    pub rin_db_per_hz: f64,
    /// Modulator extinction ratio in dB, strictly positive.
    pub er_db: f64,
    /// Fiber attenuation in dB/km.
    pub atten_db_per_km: f64,
    /// Fiber length in km.
    pub fiber_length_km: f64,
    /// Photodiode responsivity in A/W.
    pub responsivity_a_per_w: f64,
    /// Input-referred PD-TIA noise current density in A/√Hz.
    pub nep_a_per_sqrt_hz: f64,
    /// Optical modulation amplitude in dBm: the swing between the largest and
    /// smallest transmitted optical power.
    pub oma_dbm: f64,
    /// Forward error correction overhead as a fraction (0.10 means 10%).
    pub fec_overhead: f64,
    /// Direct override of the bias β, bypassing [`beta_from_er`]. Lets
    /// non-static extinction-ratio conventions be reproduced exactly.
    pub beta_override: Option<f64>,
}

impl LinkParams {
    /// Baseline parameter set: B = 102 GHz, Rs = 170 GBd, ER = 5 dB,
    /// α = 0.35 dB/km over 2 km, ℜ = 0.5 A/W, NEP = 22 pA/√Hz, 10% FEC
    /// overhead. RIN and OMA default to −150 dB/Hz and 0 dBm.
    pub fn preset_first() -> Self {
        LinkParams {
            noise_bandwidth_hz: 102e9,
            symbol_rate_baud: 170e9,
            rin_db_per_hz: -150.0,
            er_db: 5.0,
            atten_db_per_km: 0.35,
            fiber_length_km: 2.0,
            responsivity_a_per_w: 0.5,
            nep_a_per_sqrt_hz: 22e-12,
            oma_dbm: 0.0,
            fec_overhead: 0.10,
            beta_override: None,
        }
    }

    /// Higher-rate variant: B = 105 GHz, Rs = 175 GBd, 12.9% FEC overhead,
    /// other fields as in [`preset_first`](Self::preset_first).
    pub fn preset_revised() -> Self {
        LinkParams {
            noise_bandwidth_hz: 105e9,
            symbol_rate_baud: 175e9,
            fec_overhead: 0.129,
            ..Self::preset_first()
        }
    }

    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<()> {
        fn pos(v: f64, name: &str) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")))
            }
        }
        fn nonneg(v: f64, name: &str) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")))
            }
        }
        pos(self.noise_bandwidth_hz, "noise_bandwidth_hz")?;
        pos(self.symbol_rate_baud, "symbol_rate_baud")?;
        pos(self.responsivity_a_per_w, "responsivity_a_per_w")?;
        nonneg(self.nep_a_per_sqrt_hz, "nep_a_per_sqrt_hz")?;
        nonneg(self.atten_db_per_km, "atten_db_per_km")?;
        nonneg(self.fiber_length_km, "fiber_length_km")?;
        nonneg(self.fec_overhead, "fec_overhead")?;
        if !self.oma_dbm.is_finite() {
            return Err(Error::invalid(format!("oma_dbm must be finite, got {}", self.oma_dbm)));
        }
        // -inf is the AWGN mode; NaN and +inf are not meaningful.
        if self.rin_db_per_hz.is_nan() || self.rin_db_per_hz == f64::INFINITY {
            return Err(Error::invalid(format!(
                "rin_db_per_hz must be finite or -inf, got {}",
                self.rin_db_per_hz
            )));
        }
        if self.beta_override.is_none() {
            pos(self.er_db, "er_db")?;
        } else if let Some(b) = self.beta_override {
            if !b.is_finite() {
                return Err(Error::invalid(format!("beta override must be finite, got {b}")));
            }
        }
        Ok(())
    }
}

impl Default for LinkParams {
    fn default() -> Self {
        Self::preset_first()
    }
}

// ---------------------------------------------------------------- symbols

/// Ordered PAM symbol levels in normalized units.
///
/// Invariants, enforced by every constructor:
/// levels are finite and strictly increasing, and the outer two are pinned at
/// exactly ±(M−1). The pinning encodes the peak-power constraint: the
/// modulator drive swing is fixed, only the M−2 inner levels may move.
#[derive(Debug, Clone, PartialEq)]
pub struct PamConstellation {
    levels: Vec<f64>,
}

/// Constructors snap endpoints that are within this distance of ±(M−1) onto
/// the exact constraint and reject anything farther away.
const ENDPOINT_TOL: f64 = 1e-9;

impl PamConstellation {
    /// The equally-spaced constellation {−(M−1), −(M−3), …, M−1}.
    pub fn equally_spaced(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::invalid(format!("PAM order must be >= 2, got {order}")));
        }
        let peak = (order - 1) as f64;
        let levels = (0..order).map(|i| 2.0 * i as f64 - peak).collect();
        Ok(PamConstellation { levels })
    }

    /// Builds from explicit levels, validating ordering and endpoints.
    pub fn from_levels(mut levels: Vec<f64>) -> Result<Self> {
        let m = levels.len();
        if m < 2 {
            return Err(Error::invalid(format!("need at least 2 levels, got {m}")));
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("levels must all be finite".to_string()));
        }
        let peak = (m - 1) as f64;
        if (levels[0] + peak).abs() > ENDPOINT_TOL || (levels[m - 1] - peak).abs() > ENDPOINT_TOL {
            return Err(Error::invalid(format!(
                "outer levels must sit at -+{peak}, got {} and {}",
                levels[0],
                levels[m - 1]
            )));
        }
        levels[0] = -peak;
        levels[m - 1] = peak;
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("levels must be strictly increasing".to_string()));
        }
        Ok(PamConstellation { levels })
    }

    /// Builds from the M−1 adjacent gaps. The gaps must be positive and sum
    /// to 2(M−1); the last level is then pinned to +(M−1) exactly so the
    /// peak-power endpoints never drift from accumulated rounding.
    pub fn from_gaps(gaps: &[f64]) -> Result<Self> {
        let m = gaps.len() + 1;
        if m < 2 {
            return Err(Error::invalid("need at least one gap".to_string()));
        }
        if gaps.iter().any(|g| !g.is_finite() || *g <= 0.0) {
            return Err(Error::invalid("gaps must all be finite and > 0".to_string()));
        }
        let peak = (m - 1) as f64;
        let sum: f64 = gaps.iter().sum();
        if (sum - 2.0 * peak).abs() > ENDPOINT_TOL * m as f64 {
            return Err(Error::invalid(format!(
                "gaps must sum to {}, got {sum}",
                2.0 * peak
            )));
        }
        let mut levels = Vec::with_capacity(m);
        let mut x = -peak;
        levels.push(x);
        for &g in &gaps[..m - 2] {
            x += g;
            levels.push(x);
        }
        levels.push(peak);
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("gaps leave no room for the last level".to_string()));
        }
        Ok(PamConstellation { levels })
    }

    pub fn order(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Adjacent level differences; always M−1 positive values summing to
    /// 2(M−1) by the endpoint invariant.
    pub fn gaps(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

// ---------------------------------------------------------------- noise

/// Normalized-domain noise model of the channel.
///
/// Per-symbol noise is σ(x) = sqrt(sigma_th² + (x+β)²·sigma_rin²). Both
/// components are non-negative and at least one is strictly positive; with
/// `sigma_rin > 0` the noise grows strictly with the level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub(crate) sigma_th: f64,
    pub(crate) sigma_rin: f64,
    pub(crate) beta: f64,
}

impl NoiseProfile {
    pub fn new(sigma_th: f64, sigma_rin: f64, beta: f64) -> Result<Self> {
        for (v, name) in [(sigma_th, "sigma_th"), (sigma_rin, "sigma_rin")] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if sigma_th == 0.0 && sigma_rin == 0.0 {
            return Err(Error::DegenerateNoise(
                "sigma_th and sigma_rin cannot both be zero".to_string(),
            ));
        }
        if !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be finite, got {beta}")));
        }
        Ok(NoiseProfile { sigma_th, sigma_rin, beta })
    }

    pub fn sigma_th(&self) -> f64 {
        self.sigma_th
    }

    pub fn sigma_rin(&self) -> f64 {
        self.sigma_rin
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Noise standard deviation seen by a symbol at level `x`.
    pub fn per_symbol_sigma(&self, x: f64) -> f64 {
        let u = (x + self.beta) * self.sigma_rin;
        (self.sigma_th * self.sigma_th + u * u).sqrt()
    }

    /// The same profile with the thermal component removed, i.e. the OMA→∞
    /// limit. `None` when there is no intensity-noise component at all (the
    /// limit would be a noiseless channel).
    pub fn zero_thermal(&self) -> Option<Self> {
        if self.sigma_rin == 0.0 {
            None
        } else {
            Some(NoiseProfile { sigma_th: 0.0, ..*self })
        }
    }
}

// ---------------------------------------------------------------- mapping

/// Bias β that pins the ratio of the largest to the smallest transmitted
/// optical power to the extinction ratio r = 10^(er_db/10):
///
/// ```text
/// (x_max + β) / (x_min + β) = r  with  x_max,min = ±(M−1)
/// =>  β = (M−1)(r+1)/(r−1)
/// ```
///
/// β decreases with ER and approaches M−1 (the smallest bias that keeps every
/// power non-negative) as the extinction ratio grows without bound.
pub fn beta_from_er(er_db: f64, order: usize) -> Result<f64> {
    if order < 2 {
        return Err(Error::invalid(format!("PAM order must be >= 2, got {order}")));
    }
    if er_db.is_nan() || er_db <= 0.0 {
        return Err(Error::invalid(format!("er_db must be > 0, got {er_db}")));
    }
    let peak = (order - 1) as f64;
    if er_db == f64::INFINITY {
        return Ok(peak);
    }
    let r = 10f64.powf(er_db / 10.0);
    Ok(peak * (r + 1.0) / (r - 1.0))
}

/// Reduces physical link parameters to the normalized noise model.
///
/// One symbol unit corresponds to `P_scale = OMA_W / (2(M−1))` watts at the
/// transmitter, so the outer levels ±(M−1) span exactly the configured OMA.
/// The TIA gain G is set to compensate the electro-optic conversion, fiber
/// loss, and detection: `G · ℜ · 10^(−αL/10) · P_scale = 1` symbol unit.
/// Referring both noise sources to that unit gives
///
/// ```text
/// sigma_th  = NEP · sqrt(B) / (ℜ · 10^(−αL/10) · P_scale)
/// sigma_rin = sqrt(10^(RIN/10) · B)
/// ```
///
/// `sigma_th` halves when the OMA doubles in watts; `sigma_rin` multiplies
/// the instantaneous power (x+β) and does not depend on the OMA at all,
/// which is what makes the high-OMA error floor a pure function of RIN.
pub fn normalize_noise(params: &LinkParams, order: usize) -> Result<NoiseProfile> {
    params.validate()?;
    if order < 2 {
        return Err(Error::invalid(format!("PAM order must be >= 2, got {order}")));
    }
    let beta = match params.beta_override {
        Some(b) => {
            let peak = (order - 1) as f64;
            if b < peak {
                return Err(Error::invalid(format!(
                    "beta override {b} would give negative optical power (needs >= {peak})"
                )));
            }
            b
        }
        None => beta_from_er(params.er_db, order)?,
    };

    let oma_w = 10f64.powf(params.oma_dbm / 10.0) * 1e-3;
    let p_scale = oma_w / (2.0 * (order - 1) as f64);
    let loss_lin = 10f64.powf(-params.atten_db_per_km * params.fiber_length_km / 10.0);
    let amps_per_unit = params.responsivity_a_per_w * loss_lin * p_scale;
    let sigma_th =
        params.nep_a_per_sqrt_hz * params.noise_bandwidth_hz.sqrt() / amps_per_unit;

    let sigma_rin = if params.rin_db_per_hz == f64::NEG_INFINITY {
        0.0
    } else {
        (10f64.powf(params.rin_db_per_hz / 10.0) * params.noise_bandwidth_hz).sqrt()
    };

    NoiseProfile::new(sigma_th, sigma_rin, beta)
}

/// Net information rate Rs·log2(M)/(1 + overhead) in bit/s.
pub fn net_bitrate(params: &LinkParams, order: usize) -> Result<f64> {
    if order < 2 {
        return Err(Error::invalid(format!("PAM order must be >= 2, got {order}")));
    }
    params.validate()?;
    Ok(params.symbol_rate_baud * (order as f64).log2() / (1.0 + params.fec_overhead))
}
