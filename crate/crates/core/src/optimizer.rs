//! Peak-power-constrained constellation shaping.
//!
//! The outer levels are pinned at ±(M−1), so the search space is the M−2
//! inner levels, reparameterized as adjacent gaps: the first M−2 gaps are
//! free coordinates, the last is implied by the fixed total 2(M−1). A
//! projection clamps every gap to a small floor and rescales the rest, which
//! keeps iterates strictly ordered without any constrained-step logic and
//! preserves the gap sum exactly.
//!
//! The objective (pairwise SER, or negated mutual information) is smooth but
//! its gradient through the signal-dependent sigmas is fiddly, so the search
//! is a derivative-free Nelder-Mead simplex with deterministic multi-start:
//! the equally-spaced constellation, a noise-weighted seed that widens gaps
//! where the per-symbol noise is larger, and a configurable number of seeded
//! log-normal perturbations. Identical settings always produce bit-identical
//! reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{NoiseProfile, PamConstellation};
use crate::metrics::{mi_from_levels, ser_analytic, ser_total_from_levels};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Simplex stops when all projected gap vectors agree to this diameter.
const SIMPLEX_DIAMETER_TOL: f64 = 1e-9;
/// ... or when the best objective improves by less than this relative amount
/// over [`STALL_WINDOW`] consecutive iterations.
const STALL_REL_TOL: f64 = 1e-12;
const STALL_WINDOW: usize = 50;
/// Candidate cap for [`grid_oracle`].
const GRID_CANDIDATE_LIMIT: f64 = 1e9;

/// Tunables exposed through the sweep config `[optimizer]` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Iteration budget per start.
    pub max_iters: usize,
    /// Number of seeded perturbation starts beyond the two deterministic ones.
    pub n_extra_starts: usize,
    /// Smallest admissible gap; keeps orderings strict.
    pub gap_floor: f64,
    /// Seed for the perturbation starts.
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings { max_iters: 20_000, n_extra_starts: 4, gap_floor: 1e-6, seed: 0 }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("optimizer max_iters must be >= 1".to_string()));
        }
        if !(self.gap_floor > 0.0 && self.gap_floor < 2.0) {
            return Err(Error::invalid(format!(
                "gap_floor must be in (0, 2), got {}",
                self.gap_floor
            )));
        }
        Ok(())
    }
}

/// What to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Minimize the analytic symbol error rate.
    SymbolErrorRate,
    /// Maximize mutual information (the search minimizes its negation).
    MutualInformation,
}

/// Outcome of a shaping run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    pub optimum: PamConstellation,
    /// SER of `optimum` (recomputed through `ser_analytic`, whatever the
    /// search objective was).
    pub objective_ser: f64,
    /// Best objective value seen so far, per iteration, across all starts.
    /// Non-increasing by construction. Holds SER values for the SER
    /// objective and negated MI otherwise.
    pub objective_trace: Vec<f64>,
    pub n_starts: usize,
    /// Whether the start that produced `optimum` met a convergence test
    /// (simplex diameter or stall window) rather than the iteration cap.
    pub converged: bool,
    /// Adjacent gaps of `optimum`; positive, summing to 2(M−1).
    pub gap_vector: Vec<f64>,
}

/// Minimizes the analytic SER over the inner levels.
///
/// For M = 2 there is nothing to optimize and the equally-spaced pair is
/// returned immediately. If no start converges, the error carries the best
/// report found so callers can still inspect or use it.
pub fn optimize_constellation(
    n: &NoiseProfile,
    order: usize,
    opts: &OptimizerSettings,
) -> Result<OptimizationReport> {
    optimize_with_objective(n, order, Objective::SymbolErrorRate, opts)
}

/// Same search under a caller-chosen objective.
pub fn optimize_with_objective(
    n: &NoiseProfile,
    order: usize,
    objective: Objective,
    opts: &OptimizerSettings,
) -> Result<OptimizationReport> {
    if order < 2 {
        return Err(Error::invalid(format!("PAM order must be >= 2, got {order}")));
    }
    opts.validate()?;

    if order == 2 {
        let optimum = PamConstellation::equally_spaced(2)?;
        let ser = ser_analytic(&optimum, n)?.total_ser;
        return Ok(OptimizationReport {
            optimum,
            objective_ser: ser,
            objective_trace: vec![ser],
            n_starts: 1,
            converged: true,
            gap_vector: vec![2.0],
        });
    }

    let space = GapSpace::new(order, opts.gap_floor);
    let eval = |free: &[f64]| -> f64 {
        let gaps = space.project(free);
        let levels = space.levels(&gaps);
        match objective {
            Objective::SymbolErrorRate => ser_total_from_levels(&levels, n),
            Objective::MutualInformation => match mi_from_levels(&levels, n) {
                Ok(mi) => -mi,
                Err(_) => f64::INFINITY,
            },
        }
    };

    let starts = build_starts(n, order, opts);
    let n_starts = starts.len();
    let mut trace: Vec<f64> = Vec::new();
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    let mut any_converged = false;

    for x0 in starts {
        let outcome = nelder_mead(&eval, &space, x0, opts.max_iters, &mut trace);
        any_converged |= outcome.converged;
        let better = match &best {
            None => true,
            Some((f, _, _)) => outcome.f < *f,
        };
        if better {
            best = Some((outcome.f, outcome.free, outcome.converged));
        }
    }

    let (_, free, winner_converged) = best.expect("at least one start");
    let gap_vector = space.project(&free);
    let optimum = PamConstellation::from_gaps(&gap_vector)?;
    let objective_ser = ser_analytic(&optimum, n)?.total_ser;
    let report = OptimizationReport {
        optimum,
        objective_ser,
        objective_trace: trace,
        n_starts,
        converged: winner_converged,
        gap_vector,
    };
    if !any_converged {
        return Err(Error::NonConvergence { max_iters: opts.max_iters, best: Box::new(report) });
    }
    Ok(report)
}

// ---------------------------------------------------------------- gap space

/// The feasible set of gap vectors for a given order: M−1 gaps, each at least
/// `floor`, summing to 2(M−1). Free coordinates are the first M−2 gaps.
struct GapSpace {
    order: usize,
    total: f64,
    floor: f64,
}

impl GapSpace {
    fn new(order: usize, floor: f64) -> Self {
        GapSpace { order, total: 2.0 * (order - 1) as f64, floor }
    }

    fn dim(&self) -> usize {
        self.order - 2
    }

    /// Maps an unconstrained free vector onto a feasible full gap vector.
    /// Clamps each free gap to the floor; if the implied last gap falls
    /// below the floor, shrinks the free gaps toward it so the total is
    /// preserved exactly.
    fn project(&self, free: &[f64]) -> Vec<f64> {
        debug_assert_eq!(free.len(), self.dim());
        let d = free.len();
        let mut gaps = Vec::with_capacity(d + 1);
        for &g in free {
            gaps.push(if g.is_finite() { g.max(self.floor) } else { self.floor });
        }
        let inner: f64 = gaps.iter().sum();
        let last = self.total - inner;
        if last >= self.floor {
            gaps.push(last);
            return gaps;
        }
        let base = d as f64 * self.floor;
        let span = inner - base;
        if span > 0.0 {
            // Inner gaps must shrink to total - floor; scale their excess
            // over the floor accordingly.
            let alpha = (self.total - self.floor - base) / span;
            for g in gaps.iter_mut() {
                *g = self.floor + alpha * (*g - self.floor);
            }
            gaps.push(self.floor);
        } else {
            // Everything already at the floor; give the remainder to the
            // last gap.
            gaps.push(self.total - base);
        }
        gaps
    }

    fn levels(&self, gaps: &[f64]) -> Vec<f64> {
        let peak = (self.order - 1) as f64;
        let mut levels = Vec::with_capacity(self.order);
        let mut x = -peak;
        levels.push(x);
        for &g in &gaps[..self.order - 2] {
            x += g;
            levels.push(x);
        }
        levels.push(peak);
        levels
    }
}

fn build_starts(n: &NoiseProfile, order: usize, opts: &OptimizerSettings) -> Vec<Vec<f64>> {
    let d = order - 2;
    let total = 2.0 * (order - 1) as f64;
    let mut starts = Vec::with_capacity(2 + opts.n_extra_starts);

    // Equally spaced.
    starts.push(vec![2.0; d]);

    // Gaps proportional to the noise seen at their two endpoints, computed
    // on the ES levels. Coincides with ES in pure AWGN; under RIN it leans
    // the right way immediately.
    let es: Vec<f64> = (0..order).map(|i| 2.0 * i as f64 - (order - 1) as f64).collect();
    let weights: Vec<f64> = es
        .windows(2)
        .map(|w| n.per_symbol_sigma(w[0]) + n.per_symbol_sigma(w[1]))
        .collect();
    let wsum: f64 = weights.iter().sum();
    if wsum > 0.0 {
        let gaps: Vec<f64> = weights.iter().map(|w| total * w / wsum).collect();
        starts.push(gaps[..d].to_vec());
    }

    // Seeded log-normal jitter around ES.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.n_extra_starts {
        let raw: Vec<f64> = (0..order - 1)
            .map(|_| {
                let xi: f64 = rng.sample(StandardNormal);
                2.0 * (0.25 * xi).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        let gaps: Vec<f64> = raw.iter().map(|g| g * total / sum).collect();
        starts.push(gaps[..d].to_vec());
    }
    starts
}

// ---------------------------------------------------------------- simplex

struct StartOutcome {
    free: Vec<f64>,
    f: f64,
    converged: bool,
}

/// One Nelder-Mead run with the textbook coefficients (reflect 1, expand 2,
/// contract 1/2, shrink 1/2). Appends the across-starts best-so-far to
/// `trace` once per iteration.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    eval: &F,
    space: &GapSpace,
    x0: Vec<f64>,
    max_iters: usize,
    trace: &mut Vec<f64>,
) -> StartOutcome {
    let d = space.dim();
    debug_assert!(d >= 1);
    let step = 0.1;

    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    verts.push(x0.clone());
    for i in 0..d {
        let mut v = x0.clone();
        v[i] += step;
        verts.push(v);
    }
    let mut fvals: Vec<f64> = verts.iter().map(|v| eval(v)).collect();

    let mut running_best = trace.last().copied().unwrap_or(f64::INFINITY);
    let mut best_hist: Vec<f64> = Vec::with_capacity(max_iters);
    let mut converged = false;

    for _iter in 0..max_iters {
        // Order the simplex: locate best and worst.
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
        let (b_i, w_i) = (order[0], order[d]);
        let second_worst = fvals[order[d.saturating_sub(1)]];

        let f_best = fvals[b_i];
        best_hist.push(f_best);
        running_best = running_best.min(f_best);
        trace.push(running_best);

        // Convergence: all vertices collapse in projected gap space, or the
        // best value stalls for a full window.
        let projected: Vec<Vec<f64>> = verts.iter().map(|v| space.project(v)).collect();
        let mut diam = 0.0f64;
        for a in 0..projected.len() {
            for b in a + 1..projected.len() {
                for (ga, gb) in projected[a].iter().zip(&projected[b]) {
                    diam = diam.max((ga - gb).abs());
                }
            }
        }
        if diam < SIMPLEX_DIAMETER_TOL {
            converged = true;
            break;
        }
        let hist_len = best_hist.len();
        if hist_len > STALL_WINDOW {
            let prev = best_hist[hist_len - 1 - STALL_WINDOW];
            let rel = (prev - f_best) / prev.abs().max(f64::MIN_POSITIVE);
            if rel < STALL_REL_TOL {
                converged = true;
                break;
            }
        }

        // Centroid of the face opposite the worst vertex.
        let mut centroid = vec![0.0; d];
        for (i, v) in verts.iter().enumerate() {
            if i == w_i {
                continue;
            }
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= d as f64;
        }

        let lerp = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&verts[w_i])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let refl = lerp(1.0);
        let f_refl = eval(&refl);
        if f_refl < f_best {
            let exp = lerp(2.0);
            let f_exp = eval(&exp);
            if f_exp < f_refl {
                verts[w_i] = exp;
                fvals[w_i] = f_exp;
            } else {
                verts[w_i] = refl;
                fvals[w_i] = f_refl;
            }
            continue;
        }
        if f_refl < second_worst {
            verts[w_i] = refl;
            fvals[w_i] = f_refl;
            continue;
        }
        let contracted = if f_refl < fvals[w_i] { lerp(0.5) } else { lerp(-0.5) };
        let f_con = eval(&contracted);
        if f_con < fvals[w_i].min(f_refl) {
            verts[w_i] = contracted;
            fvals[w_i] = f_con;
            continue;
        }
        // Shrink everything toward the best vertex.
        let best_v = verts[b_i].clone();
        for i in 0..=d {
            if i == b_i {
                continue;
            }
            for (x, b) in verts[i].iter_mut().zip(&best_v) {
                *x = b + 0.5 * (*x - b);
            }
            fvals[i] = eval(&verts[i]);
        }
    }

    let mut best_i = 0;
    for i in 1..=d {
        if fvals[i] < fvals[best_i] {
            best_i = i;
        }
    }
    running_best = running_best.min(fvals[best_i]);
    trace.push(running_best);
    StartOutcome { free: verts.swap_remove(best_i), f: fvals[best_i], converged }
}

// ---------------------------------------------------------------- grid oracle

/// Exhaustive lattice search over the inner levels, for validating the
/// simplex optimizer at small orders. Interior candidates sit at
/// −(M−1) + j·resolution; orderings are enforced by construction.
///
/// Refuses grids with more than 10⁹ candidates.
pub fn grid_oracle(n: &NoiseProfile, order: usize, resolution: f64) -> Result<PamConstellation> {
    if !(order == 3 || order == 4) {
        return Err(Error::invalid(format!(
            "grid oracle supports M in {{3, 4}}, got {order}"
        )));
    }
    if !resolution.is_finite() || resolution <= 0.0 {
        return Err(Error::invalid(format!("resolution must be > 0, got {resolution}")));
    }
    let peak = (order - 1) as f64;
    let total = 2.0 * peak;
    // Largest j with -peak + j*res strictly below +peak, robust to the
    // division landing a hair above an integer.
    let mut k = (total / resolution - 1e-9).floor() as u64;
    while k > 0 && -peak + k as f64 * resolution >= peak {
        k -= 1;
    }
    if k == 0 {
        return Err(Error::invalid("resolution leaves no interior lattice point".to_string()));
    }
    let candidates = match order {
        3 => k as f64,
        _ => k as f64 * (k as f64 - 1.0) / 2.0,
    };
    if candidates > GRID_CANDIDATE_LIMIT {
        return Err(Error::CostBound { candidates, limit: GRID_CANDIDATE_LIMIT });
    }

    let at = |j: u64| -peak + j as f64 * resolution;

    let best_levels: Vec<f64> = if order == 3 {
        let mut best = (f64::INFINITY, 0u64);
        for j in 1..=k {
            let f = ser_total_from_levels(&[-peak, at(j), peak], n);
            if f < best.0 {
                best = (f, j);
            }
        }
        vec![-peak, at(best.1), peak]
    } else {
        let scan_row = |j1: u64| -> (f64, u64, u64) {
            let x1 = at(j1);
            let mut row = (f64::INFINITY, j1, j1 + 1);
            for j2 in j1 + 1..=k {
                let f = ser_total_from_levels(&[-peak, x1, at(j2), peak], n);
                if f < row.0 {
                    row = (f, j1, j2);
                }
            }
            row
        };
        let pick = |a: (f64, u64, u64), b: (f64, u64, u64)| -> (f64, u64, u64) {
            match a.0.total_cmp(&b.0) {
                std::cmp::Ordering::Less => a,
                std::cmp::Ordering::Greater => b,
                std::cmp::Ordering::Equal => {
                    if (a.1, a.2) <= (b.1, b.2) {
                        a
                    } else {
                        b
                    }
                }
            }
        };
        #[cfg(feature = "parallel")]
        let best = (1..k)
            .into_par_iter()
            .map(scan_row)
            .reduce(|| (f64::INFINITY, u64::MAX, u64::MAX), pick);
        #[cfg(not(feature = "parallel"))]
        let best = (1..k)
            .map(scan_row)
            .fold((f64::INFINITY, u64::MAX, u64::MAX), |a, b| pick(a, b));
        vec![-peak, at(best.1), at(best.2), peak]
    };

    PamConstellation::from_levels(best_levels)
}
