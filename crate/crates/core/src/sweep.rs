//! Grid sweeps over (OMA, RIN) and their emission as CSV or JSON.
//!
//! Each cell evaluates the equally-spaced baseline, runs the shaping
//! optimizer, and records SERs, floors, the shaped levels, and mutual
//! information for both constellations. Cells are independent and evaluated
//! by a worker pool; the output order is fixed by sorting cells by
//! (RIN, OMA) up front, so results are deterministic regardless of
//! completion order.
//!
//! CSV carries one row per record with 17-significant-digit floats ("-inf"
//! for the AWGN rows) and round-trips byte-identically through
//! [`parse_csv`]. JSON mirrors the whole [`SweepResult`] including metadata.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SweepConfig;
use crate::error::{Error, Result};
use crate::link::{normalize_noise, rin_serde, PamConstellation};
use crate::metrics::{mutual_information, ser_analytic};
use crate::optimizer::optimize_constellation;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One grid cell of a finished sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub oma_dbm: f64,
    #[serde(with = "rin_serde")]
    pub rin_db_per_hz: f64,
    /// Analytic SER of the equally-spaced constellation.
    pub ser_es: f64,
    /// Analytic SER of the shaped constellation.
    pub ser_gs: f64,
    pub ser_floor_es: f64,
    pub ser_floor_gs: f64,
    /// Shaped levels, x0 through x{M−1}.
    pub constellation_gs: Vec<f64>,
    /// Mutual information in bits/symbol; absent if the quadrature failed.
    pub mi_es: Option<f64>,
    pub mi_gs: Option<f64>,
    /// False when the recorded optimum came from a non-converged run (the
    /// best-so-far constellation is still recorded). Not a CSV column; CSV
    /// parses assume true.
    pub gs_converged: bool,
}

/// Provenance of a sweep, embedded in JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    /// The fully resolved configuration that produced the grid.
    pub config: SweepConfig,
    pub tool_version: String,
    /// Optimizer seed, duplicated out of the config for quick access.
    pub seed: u64,
    /// RFC 3339 creation time. Honors `SOURCE_DATE_EPOCH` for reproducible
    /// output; falls back to the wall clock.
    pub timestamp: String,
}

/// A finished sweep: records sorted by (RIN ascending, OMA ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: Vec<SweepRecord>,
    pub metadata: SweepMetadata,
}

fn timestamp_rfc3339() -> String {
    if let Some(sec) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
    {
        if let Some(t) = chrono::DateTime::from_timestamp(sec, 0) {
            return t.to_rfc3339();
        }
    }
    chrono::Utc::now().to_rfc3339()
}

/// Evaluates every (OMA, RIN) cell of the config.
///
/// Grid axes are sorted and deduplicated first. A cell whose optimizer does
/// not converge is recorded anyway with `gs_converged = false` and the
/// best-so-far constellation; a cell that fails outright (for instance a
/// degenerate noise profile) is dropped. Only when every cell fails does the
/// sweep itself return an error.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let mut rins = config.rin_points_db_per_hz.clone();
    rins.sort_by(f64::total_cmp);
    rins.dedup();
    let mut omas = config.oma_points_dbm.clone();
    omas.sort_by(f64::total_cmp);
    omas.dedup();
    let cells: Vec<(f64, f64)> = rins
        .iter()
        .flat_map(|&rin| omas.iter().map(move |&oma| (oma, rin)))
        .collect();

    let es = PamConstellation::equally_spaced(config.pam_order)?;
    let eval_cell = |&(oma, rin): &(f64, f64)| -> Result<SweepRecord> {
        let n = normalize_noise(&config.link_at(oma, rin), config.pam_order)?;
        let es_b = ser_analytic(&es, &n)?;
        let (report, converged) =
            match optimize_constellation(&n, config.pam_order, &config.optimizer) {
                Ok(r) => {
                    let c = r.converged;
                    (r, c)
                }
                Err(Error::NonConvergence { best, .. }) => (*best, false),
                Err(e) => return Err(e),
            };
        let gs_b = ser_analytic(&report.optimum, &n)?;
        let mi_es = mutual_information(&es, &n).ok();
        let mi_gs = mutual_information(&report.optimum, &n).ok();
        Ok(SweepRecord {
            oma_dbm: oma,
            rin_db_per_hz: rin,
            ser_es: es_b.total_ser,
            ser_gs: gs_b.total_ser,
            ser_floor_es: es_b.floor_ser,
            ser_floor_gs: gs_b.floor_ser,
            constellation_gs: report.optimum.levels().to_vec(),
            mi_es,
            mi_gs,
            gs_converged: converged,
        })
    };

    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<SweepRecord>> = cells.par_iter().map(eval_cell).collect();
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<SweepRecord>> = cells.iter().map(eval_cell).collect();

    let total = outcomes.len();
    let grid: Vec<SweepRecord> = outcomes.into_iter().filter_map(|r| r.ok()).collect();
    if grid.is_empty() {
        return Err(Error::SweepAllFailed { total });
    }
    Ok(SweepResult {
        grid,
        metadata: SweepMetadata {
            config: config.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.optimizer.seed,
            timestamp: timestamp_rfc3339(),
        },
    })
}

// ---------------------------------------------------------------- relaxation

/// One detected equivalence: shaping at the noisier `rin_a` performs like
/// the unshaped baseline at the quieter `rin_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationPair {
    pub oma_dbm: f64,
    pub rin_a: f64,
    pub rin_b: f64,
    pub ser_gs_a: f64,
    pub ser_es_b: f64,
    /// ser_gs_a / ser_es_b, inside [1/tolerance, tolerance].
    pub ratio: f64,
    /// rin_a − rin_b, always positive.
    pub relaxation_db: f64,
}

/// All equivalences found in a sweep at a given SER ratio tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationReport {
    pub tolerance_ratio: f64,
    pub pairs: Vec<RelaxationPair>,
}

/// Scans a sweep for RIN pairs (a > b, both finite) where the shaped SER at
/// `a` matches the unshaped SER at `b` within `tolerance_ratio` at the same
/// OMA. AWGN rows never participate; sweeps with fewer than two finite RIN
/// values yield an empty report.
pub fn relaxation_report(sweep: &SweepResult, tolerance_ratio: f64) -> Result<RelaxationReport> {
    if !tolerance_ratio.is_finite() || tolerance_ratio < 1.0 {
        return Err(Error::invalid(format!(
            "tolerance_ratio must be finite and >= 1, got {tolerance_ratio}"
        )));
    }
    let mut omas: Vec<f64> = sweep.grid.iter().map(|r| r.oma_dbm).collect();
    omas.sort_by(f64::total_cmp);
    omas.dedup();
    let mut rins: Vec<f64> = sweep
        .grid
        .iter()
        .map(|r| r.rin_db_per_hz)
        .filter(|r| r.is_finite())
        .collect();
    rins.sort_by(f64::total_cmp);
    rins.dedup();

    let find = |oma: f64, rin: f64| -> Option<&SweepRecord> {
        sweep
            .grid
            .iter()
            .find(|r| r.oma_dbm == oma && r.rin_db_per_hz == rin)
    };

    let mut pairs = Vec::new();
    for &oma in &omas {
        for (bi, &rin_b) in rins.iter().enumerate() {
            for &rin_a in &rins[bi + 1..] {
                let (Some(rec_a), Some(rec_b)) = (find(oma, rin_a), find(oma, rin_b)) else {
                    continue;
                };
                let ratio = rec_a.ser_gs / rec_b.ser_es;
                if ratio >= 1.0 / tolerance_ratio && ratio <= tolerance_ratio {
                    pairs.push(RelaxationPair {
                        oma_dbm: oma,
                        rin_a,
                        rin_b,
                        ser_gs_a: rec_a.ser_gs,
                        ser_es_b: rec_b.ser_es,
                        ratio,
                        relaxation_db: rin_a - rin_b,
                    });
                }
            }
        }
    }
    Ok(RelaxationReport { tolerance_ratio, pairs })
}

// ---------------------------------------------------------------- emission

/// Output encodings of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Json,
}

impl std::str::FromStr for EmitFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EmitFormat::Csv),
            "json" => Ok(EmitFormat::Json),
            other => Err(Error::Config(format!(
                "unknown format {other:?}, expected \"csv\" or \"json\""
            ))),
        }
    }
}

/// 17 significant digits: enough to reconstruct any f64 exactly.
fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else {
        "nan".to_string()
    }
}

fn csv_header(order: usize) -> String {
    let mut cols = vec![
        "oma_dbm".to_string(),
        "rin_db_per_hz".to_string(),
        "ser_es".to_string(),
        "ser_gs".to_string(),
        "ser_floor_es".to_string(),
        "ser_floor_gs".to_string(),
    ];
    cols.extend((0..order).map(|i| format!("x{i}")));
    cols.push("mi_es".to_string());
    cols.push("mi_gs".to_string());
    cols.join(",")
}

/// Renders records as CSV. `order` fixes the level-column count, which
/// matters for the header-only empty grid.
pub fn csv_string(records: &[SweepRecord], order: usize) -> String {
    let mut out = csv_header(order);
    out.push('\n');
    for r in records {
        let mut fields = vec![
            fmt_f64(r.oma_dbm),
            fmt_f64(r.rin_db_per_hz),
            fmt_f64(r.ser_es),
            fmt_f64(r.ser_gs),
            fmt_f64(r.ser_floor_es),
            fmt_f64(r.ser_floor_gs),
        ];
        fields.extend(r.constellation_gs.iter().map(|&x| fmt_f64(x)));
        fields.push(r.mi_es.map(fmt_f64).unwrap_or_default());
        fields.push(r.mi_gs.map(fmt_f64).unwrap_or_default());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Parses CSV produced by [`csv_string`]. The level count is inferred from
/// the header. `gs_converged` is not a CSV column and comes back `true`.
pub fn parse_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV input".to_string()))?;
    let n_cols = header.split(',').count();
    if n_cols < 9 || !header.starts_with("oma_dbm,rin_db_per_hz,") {
        return Err(Error::Parse(format!("unrecognized CSV header {header:?}")));
    }
    let order = n_cols - 8;
    if csv_header(order) != header {
        return Err(Error::Parse(format!("unrecognized CSV header {header:?}")));
    }

    let field = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::Parse(format!("line {line}: bad float {s:?}: {e}")))
    };
    let opt_field = |s: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            field(s, line).map(Some)
        }
    };

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != n_cols {
            return Err(Error::Parse(format!(
                "line {lineno}: expected {n_cols} fields, got {}",
                f.len()
            )));
        }
        let mut levels = Vec::with_capacity(order);
        for s in &f[6..6 + order] {
            levels.push(field(s, lineno)?);
        }
        records.push(SweepRecord {
            oma_dbm: field(f[0], lineno)?,
            rin_db_per_hz: field(f[1], lineno)?,
            ser_es: field(f[2], lineno)?,
            ser_gs: field(f[3], lineno)?,
            ser_floor_es: field(f[4], lineno)?,
            ser_floor_gs: field(f[5], lineno)?,
            constellation_gs: levels,
            mi_es: opt_field(f[6 + order], lineno)?,
            mi_gs: opt_field(f[7 + order], lineno)?,
            gs_converged: true,
        });
    }
    Ok(records)
}

/// The whole sweep, metadata included, as pretty JSON.
pub fn json_string(sweep: &SweepResult) -> Result<String> {
    let mut s = serde_json::to_string_pretty(sweep)
        .map_err(|e| Error::Parse(format!("JSON encoding failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes a sweep in the chosen format.
pub fn emit<W: std::io::Write>(sweep: &SweepResult, format: EmitFormat, mut w: W) -> Result<()> {
    let text = match format {
        EmitFormat::Csv => csv_string(&sweep.grid, sweep.metadata.config.pam_order),
        EmitFormat::Json => json_string(sweep)?,
    };
    w.write_all(text.as_bytes())?;
    Ok(())
}

/// Writes a sweep to a file path.
pub fn emit_to_path(sweep: &SweepResult, format: EmitFormat, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    emit(sweep, format, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Preset, SweepConfig};
    use approx::assert_relative_eq;

    fn tiny_config(toml: &str) -> SweepConfig {
        SweepConfig::from_toml_str(toml, Preset::First).unwrap()
    }

    fn tiny_sweep() -> SweepResult {
        run_sweep(&tiny_config(
            "oma_dbm = 0.0\nrin_db_per_hz = [-146.0, \"-inf\"]",
        ))
        .unwrap()
    }

    #[test]
    fn single_point_yields_one_record() {
        let s = run_sweep(&tiny_config("oma_dbm = 0.0\nrin_db_per_hz = -146.0")).unwrap();
        assert_eq!(s.grid.len(), 1);
        let r = &s.grid[0];
        assert_eq!(r.oma_dbm, 0.0);
        assert_eq!(r.rin_db_per_hz, -146.0);
        assert!(r.ser_gs <= r.ser_es);
        assert!(r.ser_floor_es <= r.ser_es);
        assert!(r.ser_floor_gs <= r.ser_gs);
        assert_eq!(r.constellation_gs.len(), 6);
        assert!(r.mi_es.is_some() && r.mi_gs.is_some());
        assert!(r.gs_converged);
        assert_eq!(s.metadata.seed, 0);
        assert!(!s.metadata.tool_version.is_empty());
    }

    #[test]
    fn awgn_shaping_changes_nothing() {
        let s = run_sweep(&tiny_config(
            "oma_dbm = { start = -2.0, stop = 0.0, step = 2.0 }\nrin_db_per_hz = \"-inf\"",
        ))
        .unwrap();
        assert_eq!(s.grid.len(), 2);
        for r in &s.grid {
            assert_relative_eq!(r.ser_gs, r.ser_es, max_relative = 1e-12);
            assert_eq!(r.ser_floor_es, 0.0);
            assert_eq!(r.ser_floor_gs, 0.0);
        }
    }

    #[test]
    fn records_come_out_sorted_and_deduplicated() {
        let s = run_sweep(&tiny_config(
            "oma_dbm = { start = -1.0, stop = 1.0, step = 1.0 }\n\
             rin_db_per_hz = [-146.0, -150.0, \"-inf\", -146.0]",
        ))
        .unwrap();
        assert_eq!(s.grid.len(), 9);
        let key: Vec<(f64, f64)> = s.grid.iter().map(|r| (r.rin_db_per_hz, r.oma_dbm)).collect();
        let mut sorted = key.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        assert_eq!(key, sorted);
        assert_eq!(key[0].0, f64::NEG_INFINITY);
    }

    #[test]
    fn gs_dominates_es_on_every_record() {
        let s = run_sweep(&tiny_config(
            "oma_dbm = { start = -6.0, stop = 6.0, step = 3.0 }\nrin_db_per_hz = [-150.0, -146.0]",
        ))
        .unwrap();
        assert_eq!(s.grid.len(), 10);
        for r in &s.grid {
            assert!(r.ser_gs <= r.ser_es, "violated at {:?}", (r.oma_dbm, r.rin_db_per_hz));
            assert!(
                r.ser_floor_gs <= r.ser_floor_es,
                "floor violated at {:?}",
                (r.oma_dbm, r.rin_db_per_hz)
            );
        }
    }

    #[test]
    fn relaxation_pairs_detect_ratio_band() {
        let mut s = tiny_sweep();
        // Rebuild a synthetic grid with controlled SERs at one OMA.
        let proto = s.grid[0].clone();
        let mk = |rin: f64, ser_es: f64, ser_gs: f64| SweepRecord {
            rin_db_per_hz: rin,
            ser_es,
            ser_gs,
            ..proto.clone()
        };
        s.grid = vec![
            mk(-150.0, 1e-7, 5e-8),
            mk(-148.0, 3e-7, 1.5e-7),
            mk(-146.0, 9e-7, 4.4e-7),
        ];
        let rep = relaxation_report(&s, 2.0).unwrap();
        // gs(-148)/es(-150) = 1.5, gs(-146)/es(-148) = 1.4667: both detected.
        // gs(-146)/es(-150) = 4.4: outside.
        assert_eq!(rep.pairs.len(), 2);
        for p in &rep.pairs {
            assert!(p.relaxation_db > 0.0);
            assert_eq!(p.relaxation_db, 2.0);
            assert!(p.ratio >= 0.5 && p.ratio <= 2.0);
        }
        assert_eq!(rep.pairs[0].rin_a, -148.0);
        assert_eq!(rep.pairs[0].rin_b, -150.0);

        assert!(relaxation_report(&s, 0.5).is_err());
        assert!(relaxation_report(&s, f64::NAN).is_err());
    }

    #[test]
    fn awgn_only_sweep_has_empty_relaxation_report() {
        let s = run_sweep(&tiny_config("oma_dbm = 0.0\nrin_db_per_hz = \"-inf\"")).unwrap();
        let rep = relaxation_report(&s, 2.0).unwrap();
        assert!(rep.pairs.is_empty());
    }

    #[test]
    fn csv_round_trips_byte_identically() {
        let s = tiny_sweep();
        let order = s.metadata.config.pam_order;
        let text = csv_string(&s.grid, order);
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed.len(), s.grid.len());
        let again = csv_string(&parsed, order);
        assert_eq!(text, again);
        // Parsed floats are exact, not approximate.
        for (a, b) in parsed.iter().zip(&s.grid) {
            assert_eq!(a.ser_gs.to_bits(), b.ser_gs.to_bits());
            assert_eq!(a.rin_db_per_hz.to_bits(), b.rin_db_per_hz.to_bits());
        }
    }

    #[test]
    fn csv_schema_is_fixed() {
        let s = tiny_sweep();
        let text = csv_string(&s.grid, 6);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "oma_dbm,rin_db_per_hz,ser_es,ser_gs,ser_floor_es,ser_floor_gs,\
             x0,x1,x2,x3,x4,x5,mi_es,mi_gs"
        );
        for line in lines {
            assert_eq!(line.split(',').count(), 14);
        }
        // The AWGN row spells out -inf and parses back.
        assert!(text.contains(",-inf,"));
    }

    #[test]
    fn empty_grid_emits_header_only() {
        let mut s = tiny_sweep();
        s.grid.clear();
        let mut buf = Vec::new();
        emit(&s, EmitFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.ends_with('\n'));
        assert_eq!(parse_csv(&text).unwrap(), vec![]);
    }

    #[test]
    fn missing_mi_leaves_fields_empty() {
        let mut s = tiny_sweep();
        s.grid[0].mi_es = None;
        s.grid[0].mi_gs = None;
        let text = csv_string(&s.grid, 6);
        let first = text.lines().nth(1).unwrap();
        assert!(first.ends_with(",,"));
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed[0].mi_es, None);
        assert_eq!(parsed[0].mi_gs, None);
        assert!(parsed[1].mi_es.is_some());
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(parse_csv("").is_err());
        assert!(parse_csv("nope,nope\n").is_err());
        let s = tiny_sweep();
        let text = csv_string(&s.grid, 6);
        let truncated: String = text
            .lines()
            .enumerate()
            .map(|(i, l)| if i == 1 { l.rsplit_once(',').unwrap().0.to_string() } else { l.to_string() })
            .collect::<Vec<_>>()
            .join("\n");
        assert!(parse_csv(&truncated).is_err());
    }

    #[test]
    fn json_mirrors_everything_and_round_trips() {
        let s = tiny_sweep();
        let text = json_string(&s).unwrap();
        assert!(text.contains("\"tool_version\""));
        assert!(text.contains("\"timestamp\""));
        assert!(text.contains("\"pam_order\""));
        // -inf encodes as a string, not null.
        assert!(text.contains("\"-inf\""));
        assert!(!text.contains("null,"));
        let back: SweepResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn source_date_epoch_pins_the_timestamp() {
        std::env::set_var("SOURCE_DATE_EPOCH", "1700000000");
        let t = timestamp_rfc3339();
        std::env::remove_var("SOURCE_DATE_EPOCH");
        assert_eq!(t, "2023-11-14T22:13:20+00:00");
    }
}
