//! Seedable Monte Carlo simulation of the hard-decision channel.
//!
//! Symbols are drawn equiprobably, the received value is x + z·σ(x) with z
//! standard normal, and decisions come from threshold comparison. Work is
//! sharded into fixed 65536-symbol chunks, each driven by its own
//! counter-addressed substream of one ChaCha8 generator (`set_stream(chunk)`),
//! and chunk results are folded in chunk order. The early-stop rule (first
//! chunk at which the cumulative error count reaches the target) therefore
//! depends only on the seed and budget, never on worker count or completion
//! order: results are bit-identical on 1 or N threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::link::{NoiseProfile, PamConstellation};
use crate::metrics::DecisionRule;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Symbols per RNG substream. Fixed: changing it changes every result.
const CHUNK: u64 = 65_536;
/// Substream id offset for per-symbol histogram sampling, clear of the
/// chunk ids used by [`simulate`].
const HISTOGRAM_STREAM_BASE: u64 = 1 << 32;

/// Stopping rule for [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimBudget {
    /// Hard cap on drawn symbols.
    pub max_symbols: u64,
    /// Stop once this many errors have accumulated (checked at chunk
    /// granularity). Zero disables the error target and runs the full cap.
    pub target_errors: u64,
}

impl Default for SimBudget {
    fn default() -> Self {
        SimBudget { max_symbols: 100_000_000, target_errors: 100 }
    }
}

/// Outcome of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub n_symbols: u64,
    pub n_errors: u64,
    /// n_errors / n_symbols.
    pub ser_estimate: f64,
    /// 95% Wald binomial halfwidth, 1.96·sqrt(p̂(1−p̂)/n).
    pub ci_halfwidth_95: f64,
    /// Errors indexed by transmitted symbol; sums to `n_errors`.
    pub per_symbol_errors: Vec<u64>,
    pub seed: u64,
    /// Populated by histogram-producing entry points, not by [`simulate`].
    pub histogram: Option<SymbolHistogram>,
}

impl SimResult {
    /// True when the budget was exhausted without a single error. The
    /// estimate is then 0 and says nothing beyond SER < ~1/n; significance
    /// is the caller's call.
    pub fn zero_error_run(&self) -> bool {
        self.n_errors == 0
    }
}

struct ChunkOut {
    n: u64,
    errors: u64,
    per_symbol: Vec<u64>,
}

fn run_chunk(
    levels: &[f64],
    n: &NoiseProfile,
    rule: &DecisionRule,
    seed: u64,
    chunk_idx: u64,
    count: u64,
) -> ChunkOut {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk_idx);
    let mut errors = 0u64;
    let mut per_symbol = vec![0u64; levels.len()];
    for _ in 0..count {
        let sym = rng.random_range(0..levels.len());
        let x = levels[sym];
        let z: f64 = rng.sample(StandardNormal);
        let y = x + z * n.per_symbol_sigma(x);
        if rule.decide(y) != sym {
            errors += 1;
            per_symbol[sym] += 1;
        }
    }
    ChunkOut { n: count, errors, per_symbol }
}

/// Runs the channel until the error target or the symbol cap is reached.
///
/// Reproducibility contract: identical (inputs, seed, budget) produce a
/// bit-identical [`SimResult`] for any worker count.
pub fn simulate(
    c: &PamConstellation,
    n: &NoiseProfile,
    rule: &DecisionRule,
    budget: &SimBudget,
    seed: u64,
) -> Result<SimResult> {
    if budget.max_symbols < 1_000 {
        return Err(Error::invalid(format!(
            "max_symbols must be >= 1000, got {}",
            budget.max_symbols
        )));
    }
    let levels = c.levels();
    // The rule may have been built for a different constellation; re-check
    // interleaving so every error is a genuine crossing.
    if rule.thresholds().len() != levels.len() - 1 {
        return Err(Error::invalid(format!(
            "decision rule has {} thresholds for {} levels",
            rule.thresholds().len(),
            levels.len()
        )));
    }
    for (i, &r) in rule.thresholds().iter().enumerate() {
        if r <= levels[i] || r >= levels[i + 1] {
            return Err(Error::invalid(format!(
                "threshold {i} = {r} does not interleave levels ({}, {})",
                levels[i],
                levels[i + 1]
            )));
        }
    }

    let n_chunks = budget.max_symbols.div_ceil(CHUNK);
    let chunk_len = |idx: u64| -> u64 { CHUNK.min(budget.max_symbols - idx * CHUNK) };

    #[cfg(feature = "parallel")]
    let wave = 8usize.max(4 * rayon::current_num_threads()) as u64;
    #[cfg(not(feature = "parallel"))]
    let wave = 8u64;

    let mut n_symbols = 0u64;
    let mut n_errors = 0u64;
    let mut per_symbol_errors = vec![0u64; levels.len()];
    let mut start = 0u64;
    'waves: while start < n_chunks {
        let end = n_chunks.min(start + wave);
        let ids: Vec<u64> = (start..end).collect();
        #[cfg(feature = "parallel")]
        let outs: Vec<ChunkOut> = ids
            .par_iter()
            .map(|&idx| run_chunk(levels, n, rule, seed, idx, chunk_len(idx)))
            .collect();
        #[cfg(not(feature = "parallel"))]
        let outs: Vec<ChunkOut> = ids
            .iter()
            .map(|&idx| run_chunk(levels, n, rule, seed, idx, chunk_len(idx)))
            .collect();
        // Fold strictly in chunk order; chunks after the stopping one are
        // discarded, so the cut point is worker-count independent.
        for out in outs {
            n_symbols += out.n;
            n_errors += out.errors;
            for (acc, e) in per_symbol_errors.iter_mut().zip(&out.per_symbol) {
                *acc += e;
            }
            if budget.target_errors > 0 && n_errors >= budget.target_errors {
                break 'waves;
            }
        }
        start = end;
    }

    let p = n_errors as f64 / n_symbols as f64;
    Ok(SimResult {
        n_symbols,
        n_errors,
        ser_estimate: p,
        ci_halfwidth_95: 1.96 * (p * (1.0 - p) / n_symbols as f64).sqrt(),
        per_symbol_errors,
        seed,
        histogram: None,
    })
}

// ---------------------------------------------------------------- histogram

/// Per-symbol empirical densities of the received value over a shared bin
/// grid, with the raw sample moments kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolHistogram {
    /// Shared grid, `bins + 1` ascending edges.
    pub bin_edges: Vec<f64>,
    /// Counts per symbol per bin (M rows). Samples beyond the grid are
    /// clamped into the edge bins; the grid spans every mean ± 8σ, so the
    /// clamped mass is negligible.
    pub counts: Vec<Vec<u64>>,
    /// Sample mean of each symbol's received values.
    pub sample_means: Vec<f64>,
    /// Unbiased sample variance of each symbol's received values.
    pub sample_variances: Vec<f64>,
    pub per_symbol_samples: u64,
    pub seed: u64,
}

impl SymbolHistogram {
    /// Density row for one symbol: count / (n · bin width).
    pub fn density(&self, symbol: usize) -> Vec<f64> {
        let n = self.per_symbol_samples as f64;
        self.counts[symbol]
            .iter()
            .enumerate()
            .map(|(b, &c)| c as f64 / (n * (self.bin_edges[b + 1] - self.bin_edges[b])))
            .collect()
    }

    /// Writes `symbol_index,bin_left,bin_right,density` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "symbol_index,bin_left,bin_right,density")?;
        for sym in 0..self.counts.len() {
            let dens = self.density(sym);
            for (b, d) in dens.iter().enumerate() {
                writeln!(
                    w,
                    "{sym},{:.16e},{:.16e},{:.16e}",
                    self.bin_edges[b],
                    self.bin_edges[b + 1],
                    d
                )?;
            }
        }
        Ok(())
    }
}

/// Samples the received distribution of every symbol.
///
/// Each symbol uses its own substream, so the result is deterministic and
/// symbols can be sampled concurrently.
pub fn received_histogram(
    c: &PamConstellation,
    n: &NoiseProfile,
    per_symbol_samples: u64,
    bins: usize,
    seed: u64,
) -> Result<SymbolHistogram> {
    if per_symbol_samples < 10_000 {
        return Err(Error::invalid(format!(
            "per_symbol_samples must be >= 10000, got {per_symbol_samples}"
        )));
    }
    if bins < 2 {
        return Err(Error::invalid(format!("need at least 2 bins, got {bins}")));
    }
    let levels = c.levels();
    let lo = levels
        .iter()
        .map(|&x| x - 8.0 * n.per_symbol_sigma(x))
        .fold(f64::INFINITY, f64::min);
    let hi = levels
        .iter()
        .map(|&x| x + 8.0 * n.per_symbol_sigma(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * width).collect();

    let sample_symbol = |sym: usize| -> (Vec<u64>, f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(HISTOGRAM_STREAM_BASE + sym as u64);
        let x = levels[sym];
        let sigma = n.per_symbol_sigma(x);
        let mut counts = vec![0u64; bins];
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..per_symbol_samples {
            let z: f64 = rng.sample(StandardNormal);
            let y = x + z * sigma;
            let b = (((y - lo) / width) as isize).clamp(0, bins as isize - 1) as usize;
            counts[b] += 1;
            sum += y;
            sumsq += y * y;
        }
        let n_f = per_symbol_samples as f64;
        let mean = sum / n_f;
        let var = (sumsq - n_f * mean * mean) / (n_f - 1.0);
        (counts, mean, var)
    };

    let syms: Vec<usize> = (0..levels.len()).collect();
    #[cfg(feature = "parallel")]
    let rows: Vec<(Vec<u64>, f64, f64)> = syms.par_iter().map(|&s| sample_symbol(s)).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<(Vec<u64>, f64, f64)> = syms.iter().map(|&s| sample_symbol(s)).collect();

    let mut counts = Vec::with_capacity(levels.len());
    let mut sample_means = Vec::with_capacity(levels.len());
    let mut sample_variances = Vec::with_capacity(levels.len());
    for (c_row, mean, var) in rows {
        counts.push(c_row);
        sample_means.push(mean);
        sample_variances.push(var);
    }
    Ok(SymbolHistogram {
        bin_edges,
        counts,
        sample_means,
        sample_variances,
        per_symbol_samples,
        seed,
    })
}
