//! Sweep configuration: TOML schema, built-in presets, grid expansion.
//!
//! A config resolves in three layers: the `first` preset supplies every
//! default, `--preset` may swap in the `revised` parameter set, and keys in
//! a TOML file override whichever preset is active. All keys are optional;
//! an empty file reproduces the preset exactly.
//!
//! Friendly units at the file boundary (GHz, GBd, pA/√Hz) convert to SI on
//! load. RIN accepts a scalar or a list; `-inf` can be written either as the
//! native TOML float or as the string `"-inf"`. OMA accepts a scalar or an
//! inclusive `{ start, stop, step }` range.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{rin_seq_serde, LinkParams};
use crate::optimizer::OptimizerSettings;

/// Built-in parameter sets selectable with `--preset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// B = 102 GHz, Rs = 170 GBd, 10% FEC overhead,
    /// RIN ∈ {−150, −148, −146, −∞} dB/Hz.
    First,
    /// B = 105 GHz, Rs = 175 GBd, 12.9% FEC overhead,
    /// RIN ∈ {−150, −147, −144, −141, −∞} dB/Hz.
    Revised,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(Preset::First),
            "revised" => Ok(Preset::Revised),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}, expected \"first\" or \"revised\""
            ))),
        }
    }
}

/// Fully resolved sweep plan: link parameters plus the (OMA, RIN) grid and
/// optimizer settings. `link.oma_dbm` and `link.rin_db_per_hz` are
/// placeholders; [`SweepConfig::link_at`] stamps the per-cell values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub link: LinkParams,
    pub pam_order: usize,
    pub oma_points_dbm: Vec<f64>,
    #[serde(with = "rin_seq_serde")]
    pub rin_points_db_per_hz: Vec<f64>,
    pub optimizer: OptimizerSettings,
}

impl SweepConfig {
    /// The untouched defaults of a preset: PAM-6 over OMA −6 to +6 dBm in
    /// 0.5 dB steps, with the preset's RIN list.
    pub fn preset(p: Preset) -> Self {
        let (link, rins) = match p {
            Preset::First => (
                LinkParams::preset_first(),
                vec![-150.0, -148.0, -146.0, f64::NEG_INFINITY],
            ),
            Preset::Revised => (
                LinkParams::preset_revised(),
                vec![-150.0, -147.0, -144.0, -141.0, f64::NEG_INFINITY],
            ),
        };
        SweepConfig {
            link,
            pam_order: 6,
            oma_points_dbm: expand_range(-6.0, 6.0, 0.5),
            rin_points_db_per_hz: rins,
            optimizer: OptimizerSettings::default(),
        }
    }

    /// Applies the keys of a TOML document on top of `base`.
    pub fn from_toml_str(text: &str, base: Preset) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        let mut cfg = SweepConfig::preset(base);
        file.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and applies a TOML file on top of `base`.
    pub fn from_file(path: &Path, base: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, base)
    }

    /// Link parameters for one grid cell.
    pub fn link_at(&self, oma_dbm: f64, rin_db_per_hz: f64) -> LinkParams {
        LinkParams { oma_dbm, rin_db_per_hz, ..self.link.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pam_order < 2 {
            return Err(Error::Config(format!(
                "pam_order must be >= 2, got {}",
                self.pam_order
            )));
        }
        if self.oma_points_dbm.is_empty() {
            return Err(Error::Config("oma_dbm resolves to no points".to_string()));
        }
        if self.rin_points_db_per_hz.is_empty() {
            return Err(Error::Config("rin_db_per_hz resolves to no points".to_string()));
        }
        for &oma in &self.oma_points_dbm {
            if !oma.is_finite() {
                return Err(Error::Config(format!("oma_dbm point {oma} is not finite")));
            }
        }
        for &rin in &self.rin_points_db_per_hz {
            if rin.is_nan() || rin == f64::INFINITY {
                return Err(Error::Config(format!(
                    "rin_db_per_hz point {rin} must be finite or -inf"
                )));
            }
        }
        self.optimizer.validate()?;
        self.link_at(self.oma_points_dbm[0], self.rin_points_db_per_hz[0])
            .validate()
    }
}

fn expand_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    // Nudge against representation error so e.g. (6 − (−6))/0.5 lands on 24.
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + i as f64 * step).collect()
}

// ---------------------------------------------------------------- raw file

/// One RIN entry: a number, or a string such as `"-inf"`.
#[derive(Deserialize)]
#[serde(untagged)]
enum RinValue {
    Num(f64),
    Text(String),
}

impl RinValue {
    fn resolve(&self) -> Result<f64> {
        let v = match self {
            RinValue::Num(v) => *v,
            RinValue::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad rin_db_per_hz value {s:?}: {e}")))?,
        };
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::Config(format!(
                "rin_db_per_hz must be finite or -inf, got {v}"
            )));
        }
        Ok(v)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RinSpec {
    One(RinValue),
    Many(Vec<RinValue>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OmaRange {
    start: f64,
    stop: f64,
    step: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OmaSpec {
    Scalar(f64),
    Range(OmaRange),
}

/// The raw TOML schema. Every key optional; unknown keys rejected.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    noise_bandwidth_ghz: Option<f64>,
    symbol_rate_gbd: Option<f64>,
    rin_db_per_hz: Option<RinSpec>,
    er_db: Option<f64>,
    atten_db_per_km: Option<f64>,
    fiber_length_km: Option<f64>,
    responsivity_a_per_w: Option<f64>,
    nep_pa_per_sqrt_hz: Option<f64>,
    oma_dbm: Option<OmaSpec>,
    pam_order: Option<usize>,
    fec_overhead: Option<f64>,
    beta: Option<f64>,
    optimizer: Option<OptimizerSettings>,
}

impl ConfigFile {
    fn apply(self, cfg: &mut SweepConfig) -> Result<()> {
        if let Some(v) = self.noise_bandwidth_ghz {
            cfg.link.noise_bandwidth_hz = v * 1e9;
        }
        if let Some(v) = self.symbol_rate_gbd {
            cfg.link.symbol_rate_baud = v * 1e9;
        }
        if let Some(spec) = self.rin_db_per_hz {
            cfg.rin_points_db_per_hz = match spec {
                RinSpec::One(v) => vec![v.resolve()?],
                RinSpec::Many(vs) => vs.iter().map(|v| v.resolve()).collect::<Result<_>>()?,
            };
        }
        if let Some(v) = self.er_db {
            cfg.link.er_db = v;
        }
        if let Some(v) = self.atten_db_per_km {
            cfg.link.atten_db_per_km = v;
        }
        if let Some(v) = self.fiber_length_km {
            cfg.link.fiber_length_km = v;
        }
        if let Some(v) = self.responsivity_a_per_w {
            cfg.link.responsivity_a_per_w = v;
        }
        if let Some(v) = self.nep_pa_per_sqrt_hz {
            cfg.link.nep_a_per_sqrt_hz = v * 1e-12;
        }
        if let Some(spec) = self.oma_dbm {
            cfg.oma_points_dbm = match spec {
                OmaSpec::Scalar(v) => vec![v],
                OmaSpec::Range(r) => {
                    if !r.step.is_finite() || r.step <= 0.0 {
                        return Err(Error::Config(format!(
                            "oma_dbm step must be > 0, got {}",
                            r.step
                        )));
                    }
                    if r.stop < r.start || !r.start.is_finite() || !r.stop.is_finite() {
                        return Err(Error::Config(format!(
                            "oma_dbm range [{}, {}] is empty or not finite",
                            r.start, r.stop
                        )));
                    }
                    expand_range(r.start, r.stop, r.step)
                }
            };
        }
        if let Some(v) = self.pam_order {
            cfg.pam_order = v;
        }
        if let Some(v) = self.fec_overhead {
            cfg.link.fec_overhead = v;
        }
        if let Some(v) = self.beta {
            cfg.link.beta_override = Some(v);
        }
        if let Some(v) = self.optimizer {
            cfg.optimizer = v;
        }
        Ok(())
    }
}
