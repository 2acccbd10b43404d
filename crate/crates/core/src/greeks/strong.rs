//! Delta correction for strongly path-dependent prices:
//! `E[(1/T) ∫₀ᵀ ∫₀ᵗ 𝔏f(X_s) z_s ds dt] = E[(1/T) ∫₀ᵀ (T − s) 𝔏f(X_s) z_s ds]`.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::engine::{reduce_paths, McEstimate, PathSource};
use crate::error::{Error, Result};
use crate::funcderiv::{lie_bracket, DerivativeConfig};
use crate::models::{Simulator, VolatilityModel};
use crate::path::{DiscretePath, PathFunctional};
use crate::payoffs::Contract;
use crate::rng::derive_seed;

/// A price functional `f(Y_t)` that may itself be a Monte Carlo estimate. `seed` selects
/// the random numbers; equal seeds give common random numbers across prefixes.
pub trait PriceFunctional: Sync {
    /// Returns the price and the standard error of that value (zero when exact).
    fn price(&self, prefix: &DiscretePath, seed: u64) -> Result<(f64, f64)>;
}

/// An exactly known price functional.
pub struct ExactPrice<F>(pub F);

impl<F: PathFunctional> PriceFunctional for ExactPrice<F> {
    fn price(&self, prefix: &DiscretePath, _seed: u64) -> Result<(f64, f64)> {
        Ok((self.0.eval(prefix)?, 0.0))
    }
}

/// `f(Y_t) = E[g(Y_t ⊗ X)]` by simulation from the prefix.
#[derive(Debug, Clone)]
pub struct NestedPricer {
    pub model: VolatilityModel,
    pub contract: Contract,
    pub horizon: f64,
    pub n_steps: usize,
    pub inner_paths: usize,
}

impl PriceFunctional for NestedPricer {
    fn price(&self, prefix: &DiscretePath, seed: u64) -> Result<(f64, f64)> {
        if prefix.n_steps() >= self.n_steps {
            return Ok((self.contract.eval(prefix)?, 0.0));
        }
        let sim = Simulator::from_prefix(self.model.clone(), prefix, self.horizon, self.n_steps, self.inner_paths, seed)?;
        let e = super::price(&sim, &self.contract)?;
        Ok((e.mean, if e.std_error.is_finite() { e.std_error } else { 0.0 }))
    }
}

/// Fixes the seed of a [`PriceFunctional`] so it can be differentiated as a path
/// functional, and counts evaluations whose standard error is too large.
pub struct SeededPrice<'a, P: PriceFunctional + ?Sized> {
    pub price: &'a P,
    pub seed: u64,
    /// Flag an evaluation when `se > max_rel_se · |price|`.
    pub max_rel_se: f64,
    pub flagged: AtomicUsize,
    pub evaluations: AtomicUsize,
}

impl<'a, P: PriceFunctional + ?Sized> SeededPrice<'a, P> {
    pub fn new(price: &'a P, seed: u64, max_rel_se: f64) -> Self {
        Self {
            price,
            seed,
            max_rel_se,
            flagged: AtomicUsize::new(0),
            evaluations: AtomicUsize::new(0),
        }
    }
}

impl<P: PriceFunctional + ?Sized> PathFunctional for SeededPrice<'_, P> {
    fn eval(&self, path: &DiscretePath) -> Result<f64> {
        let (v, se) = self.price.price(path, self.seed)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        if se > self.max_rel_se * v.abs() {
            self.flagged.fetch_add(1, Ordering::Relaxed);
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongCorrectionConfig {
    /// Grid steps per `s`-cell; `s` is sampled at cell midpoints, so this must be even.
    pub s_stride: usize,
    pub derivative: DerivativeConfig,
    pub max_inner_rel_se: f64,
}

impl Default for StrongCorrectionConfig {
    fn default() -> Self {
        Self {
            s_stride: 10,
            derivative: DerivativeConfig::default(),
            max_inner_rel_se: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongCorrection {
    pub estimate: McEstimate,
    /// Inner price evaluations whose relative standard error exceeded the threshold.
    pub flagged: usize,
    pub evaluations: usize,
}

/// Midpoint rule in `s` over cells of `s_stride` steps; each path's Lie brackets use a
/// seed derived from the outer seed, the path index and `s`, shared by all four corners.
pub fn strong_correction<S, P>(outer: &S, price: &P, cfg: &StrongCorrectionConfig) -> Result<StrongCorrection>
where
    S: PathSource + ?Sized,
    P: PriceFunctional + ?Sized,
{
    cfg.derivative.validate()?;
    let (dt, n) = (outer.grid_step(), outer.n_steps());
    let stride = cfg.s_stride;
    if stride == 0 || stride % 2 != 0 || n % stride != 0 {
        return Err(Error::invalid(
            "s_stride",
            stride as f64,
            format!("must be even and divide the step count {}", n),
        ));
    }
    if outer.start() != 0 {
        return Err(Error::invalid("start", outer.start() as f64, "outer simulation must start at time zero"));
    }
    let horizon = n as f64 * dt;
    let flagged = AtomicUsize::new(0);
    let evaluations = AtomicUsize::new(0);
    let red = reduce_paths(outer, 1, |i, s, out| {
        let mut acc = 0.0;
        for idx in (stride / 2..n).step_by(stride) {
            let prefix = s.path.restrict(idx);
            let f = SeededPrice::new(price, derive_seed(outer.seed(), i as u64, idx as u64), cfg.max_inner_rel_se);
            let bracket = lie_bracket(&f, &prefix, &cfg.derivative)?;
            flagged.fetch_add(f.flagged.into_inner(), Ordering::Relaxed);
            evaluations.fetch_add(f.evaluations.into_inner(), Ordering::Relaxed);
            acc += (horizon - idx as f64 * dt) * bracket * s.z[idx];
        }
        out[0] = acc * stride as f64 * dt / horizon;
        Ok(())
    })?;
    let flagged = flagged.into_inner();
    if flagged > 0 {
        log::warn!("{} inner price evaluations exceeded the relative error threshold", flagged);
    }
    Ok(StrongCorrection {
        estimate: red.estimate(0),
        flagged,
        evaluations: evaluations.into_inner(),
    })
}
