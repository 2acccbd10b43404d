//! Finite-difference Greeks with common random numbers, and the martingale check on
//! `Δ_x f(X_t) z_t`.

use super::VegaDirection;
use crate::engine::{reduce_chunks, reduce_paths, tree_merge, McEstimate, PathSample, PathSource, RunningStats};
use crate::error::{Error, Result};
use crate::models::Simulator;
use crate::path::{DiscretePath, PathFunctional};

#[derive(Debug, Clone)]
pub enum FdGreek {
    /// Central difference in `x0`.
    Delta,
    /// Second central difference in `x0`.
    Gamma,
    /// Central difference in the lognormal variance `σ̄²`.
    VegaSigma2,
    /// Central difference along a local-variance direction.
    Vega(VegaDirection),
}

/// Paired simulation: path `i` of every source shares its random numbers.
fn paired<G: PathFunctional + ?Sized>(sims: &[Simulator], g: &G, combine: impl Fn(&[f64]) -> f64 + Sync) -> Result<McEstimate> {
    let base = &sims[0];
    let chunks = reduce_chunks(
        base,
        || (RunningStats::default(), sims.iter().map(|s| s.new_sample()).collect::<Vec<PathSample>>()),
        |(stats, samples), i, _| {
            let mut values = Vec::with_capacity(sims.len());
            for (sim, sample) in sims.iter().zip(samples.iter_mut()) {
                sim.sample_into(i, sample)?;
                values.push(g.eval(&sample.path)?);
            }
            let v = combine(&values);
            if !v.is_finite() {
                return Err(Error::NonFinite { path: i, step: base.n_steps() });
            }
            stats.push(v);
            Ok(())
        },
    )?;
    let stats: Vec<RunningStats> = chunks.into_iter().map(|(s, _)| s).collect();
    let total = tree_merge(&stats, &|a: &RunningStats, b: &RunningStats| a.merge(b)).unwrap_or_default();
    Ok(McEstimate::from_stats(&total, base.seed()))
}

pub fn fd_greek<G: PathFunctional + ?Sized>(sim: &Simulator, g: &G, which: &FdGreek, bump: f64) -> Result<McEstimate> {
    if !(bump > 0.0) {
        return Err(Error::invalid("bump", bump, "must be positive"));
    }
    if sim.start() != 0 {
        return Err(Error::invalid("start", sim.start() as f64, "finite differences need a simulation from x0"));
    }
    let x0 = sim.x0();
    match which {
        FdGreek::Delta => {
            let sims = [sim.with_x0(x0 + bump)?, sim.with_x0(x0 - bump)?];
            paired(&sims, g, |v| (v[0] - v[1]) / (2.0 * bump))
        }
        FdGreek::Gamma => {
            let sims = [sim.with_x0(x0 + bump)?, sim.clone(), sim.with_x0(x0 - bump)?];
            paired(&sims, g, |v| (v[0] - 2.0 * v[1] + v[2]) / (bump * bump))
        }
        FdGreek::VegaSigma2 => vega_fd(sim, g, &VegaDirection::lognormal_constant(1.0), bump),
        FdGreek::Vega(dir) => vega_fd(sim, g, dir, bump),
    }
}

fn vega_fd<G: PathFunctional + ?Sized>(sim: &Simulator, g: &G, dir: &VegaDirection, bump: f64) -> Result<McEstimate> {
    let m = sim.model();
    let sims = [
        sim.with_model(m.with_variance_bump(bump, dir)?),
        sim.with_model(m.with_variance_bump(-bump, dir)?),
    ];
    paired(&sims, g, |v| (v[0] - v[1]) / (2.0 * bump))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub times: Vec<f64>,
    pub estimates: Vec<McEstimate>,
    /// Largest pairwise `|E_i − E_j|` in combined standard errors.
    pub max_deviation: f64,
}

/// Estimates `E[Δ_x f(X_t) z_t]` at each probe time, where `delta_at` supplies
/// `Δ_x f` on the path stopped at `t`.
pub fn martingale_diagnostic<S, D>(source: &S, times: &[f64], delta_at: D) -> Result<MartingaleReport>
where
    S: PathSource + ?Sized,
    D: Fn(&DiscretePath) -> Result<f64> + Sync,
{
    if times.is_empty() {
        return Err(Error::Empty("probe times"));
    }
    let dt = source.grid_step();
    let idx: Vec<usize> = times.iter().map(|t| ((t / dt).round() as usize).min(source.n_steps())).collect();
    let red = reduce_paths(source, times.len(), |_, s, out| {
        for (o, &k) in out.iter_mut().zip(&idx) {
            *o = delta_at(&s.path.restrict(k))? * s.z[k];
        }
        Ok(())
    })?;
    let estimates: Vec<McEstimate> = (0..times.len()).map(|c| red.estimate(c)).collect();
    let mut max_deviation: f64 = 0.0;
    for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            let diff = (a.mean - b.mean).abs();
            let se = a.std_error.hypot(b.std_error);
            let z = if diff == 0.0 { 0.0 } else { diff / se };
            max_deviation = max_deviation.max(z);
        }
    }
    Ok(MartingaleReport {
        times: idx.iter().map(|&k| k as f64 * dt).collect(),
        estimates,
        max_deviation,
    })
}
