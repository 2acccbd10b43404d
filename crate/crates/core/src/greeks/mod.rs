//! Weighted-expectation Greeks: `Delta = E[g π]`, `Gamma = E[g ξ]`, and the Vega as a
//! time integral of `ξ`. All stochastic integrals are left-point sums over the very
//! Brownian increments that drove the simulation.

mod fd;
mod strong;
mod vega;

pub use fd::{fd_greek, martingale_diagnostic, FdGreek, MartingaleReport};
pub use strong::{
    strong_correction, ExactPrice, NestedPricer, PriceFunctional, SeededPrice, StrongCorrection,
    StrongCorrectionConfig,
};
pub use vega::{vega_directional, vega_surface, SurfaceBins, VegaDirection, VegaSurface};

use crate::engine::{reduce_paths, McEstimate, PathSample, PathSource, Reduction};
use crate::error::{Error, Result};
use crate::models::{Simulator, VolatilityModel};
use crate::path::{DiscretePath, PathFunctional};

/// Tolerance for the unit-integral constraints on allocation functions.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Piecewise-constant `a(t)`: `values[k]` holds on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationFunction {
    grid_step: f64,
    values: Vec<f64>,
}

impl AllocationFunction {
    pub fn new(grid_step: f64, values: Vec<f64>) -> Result<Self> {
        if !(grid_step > 0.0) {
            return Err(Error::invalid("grid_step", grid_step, "must be positive"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid("allocation value", *v, "must be finite"));
        }
        Ok(Self { grid_step, values })
    }

    /// `value` on `[0, until)`, zero afterwards. `until` is rounded to the grid.
    pub fn constant_until(value: f64, until: f64, grid_step: f64, n_steps: usize) -> Result<Self> {
        let cut = ((until / grid_step).round() as usize).min(n_steps);
        Self::new(grid_step, (0..n_steps).map(|k| if k < cut { value } else { 0.0 }).collect())
    }

    /// Samples `f` at step midpoints.
    pub fn from_fn(f: impl Fn(f64) -> f64, grid_step: f64, n_steps: usize) -> Result<Self> {
        Self::new(grid_step, (0..n_steps).map(|k| f((k as f64 + 0.5) * grid_step)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    /// `∫₀^{t_i} a dt` as an exact step sum.
    pub fn integral_to(&self, index: usize) -> f64 {
        self.grid_step * self.values[..index.min(self.values.len())].iter().sum::<f64>()
    }
}

/// Which weight to use for the Delta.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    /// `a ≡ 1/(T − s)` on the simulated window.
    Weakly,
    /// `∫₀^{t_i} a = 1` at every monitoring time.
    Discrete { alloc: AllocationFunction, times: Vec<f64> },
    /// `∫₀^{t1} a = 1` and `a ≡ 0` on `[t1, T]`.
    Delayed { alloc: AllocationFunction, t1: f64 },
}

fn grid_index(t: f64, grid_step: f64, what: &'static str) -> Result<usize> {
    let r = t / grid_step;
    if (r - r.round()).abs() > 1e-9 || r < 0.0 {
        return Err(Error::invalid(what, t, format!("not on the simulation grid (step {})", grid_step)));
    }
    Ok(r.round() as usize)
}

fn unit_integral(alloc: &AllocationFunction, index: usize, t: f64) -> Result<()> {
    let integral = alloc.integral_to(index);
    if (integral - 1.0).abs() > MEMBERSHIP_TOL {
        return Err(Error::AllocationConstraint {
            constraint: "integral of a over [0, t] equals 1",
            detail: format!("t = {}: integral is {:.15}", t, integral),
        });
    }
    Ok(())
}

impl WeightSpec {
    /// `a ≡ 1/t1` on `[0, t1)`.
    pub fn delayed_uniform(t1: f64, grid_step: f64, n_steps: usize) -> Result<Self> {
        Ok(Self::Delayed {
            alloc: AllocationFunction::constant_until(1.0 / t1, t1, grid_step, n_steps)?,
            t1,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Weakly => "weakly",
            Self::Discrete { .. } => "discrete",
            Self::Delayed { .. } => "delayed",
        }
    }

    /// Validates the constraints against the source grid and returns `a` per step.
    pub fn allocation(&self, grid_step: f64, n_steps: usize, start: usize) -> Result<Vec<f64>> {
        let alloc = match self {
            Self::Weakly => {
                let tau = (n_steps - start) as f64 * grid_step;
                return Ok((0..n_steps).map(|k| if k < start { 0.0 } else { 1.0 / tau }).collect());
            }
            Self::Discrete { alloc, times } => {
                if times.is_empty() {
                    return Err(Error::Empty("monitoring times"));
                }
                for &t in times {
                    unit_integral(alloc, grid_index(t, grid_step, "monitoring time")?, t)?;
                }
                alloc
            }
            Self::Delayed { alloc, t1 } => {
                let i1 = grid_index(*t1, grid_step, "t1")?;
                unit_integral(alloc, i1, *t1)?;
                if let Some((k, v)) = alloc.values.iter().enumerate().skip(i1).find(|(_, v)| v.abs() > MEMBERSHIP_TOL) {
                    return Err(Error::AllocationConstraint {
                        constraint: "a vanishes on [t1, T]",
                        detail: format!("a = {} at t = {}", v, k as f64 * grid_step),
                    });
                }
                alloc
            }
        };
        if start != 0 {
            return Err(Error::invalid(
                "start",
                start as f64,
                "allocation constraints are only defined from time zero",
            ));
        }
        if alloc.values.len() != n_steps || (alloc.grid_step - grid_step).abs() > 1e-12 * grid_step {
            return Err(Error::GridMismatch {
                left: alloc.grid_step,
                right: grid_step,
            });
        }
        Ok(alloc.values.clone())
    }
}

/// `z_k Δw_k / σ_k` for every simulated step; zero on the prefix.
pub(crate) fn eta_increments(index: usize, s: &PathSample, out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    out.resize(s.n_steps(), 0.0);
    for k in s.start..s.n_steps() {
        let sigma = s.sigma[k];
        if !(sigma > 0.0) {
            return Err(Error::NonPositiveVolatility {
                path: index,
                step: k,
                value: sigma,
            });
        }
        out[k] = s.z[k] * s.dw[k] / sigma;
    }
    Ok(())
}

/// `π = Σ a_k z_k Δw_k / σ_k`.
pub fn malliavin_weight(sample: &PathSample, alloc: &[f64]) -> Result<f64> {
    let mut eta = Vec::new();
    eta_increments(0, sample, &mut eta)?;
    Ok(eta.iter().zip(alloc).map(|(e, a)| e * a).sum())
}

/// `ξ_{t_k,T}` given the tail sum `η_T − η_{t_k}`.
#[inline]
pub(crate) fn xi(s: &PathSample, k: usize, eta_tail: f64) -> f64 {
    let tau = (s.n_steps() - k) as f64 * s.grid_step();
    let (z, sigma) = (s.z[k], s.sigma[k]);
    let a = eta_tail / (tau * z);
    a * a - (s.dsigma[k] / sigma) * a - 1.0 / (tau * sigma * sigma)
}

/// The second-order weight `ξ_{s,T}` at the start of the simulated window.
pub fn gamma_weight(sample: &PathSample) -> Result<f64> {
    let mut eta = Vec::new();
    eta_increments(0, sample, &mut eta)?;
    Ok(xi(sample, sample.start, eta.iter().sum()))
}

/// Which estimators [`evaluate`] should run in its single pass.
#[derive(Debug, Clone, Default)]
pub struct GreekRequest {
    pub delta: Option<WeightSpec>,
    pub gamma: bool,
    pub vega: Option<VegaDirection>,
    /// Constant subtracted from the payoff in the weighted columns. Every weight has zero
    /// mean, so the expectations are unchanged; a value near the price reduces variance.
    pub baseline: Option<f64>,
}

/// Column labels of a [`GreekReport`], in order. `price` is always present.
#[derive(Debug, Clone)]
pub struct GreekReport {
    pub labels: Vec<&'static str>,
    pub reduction: Reduction,
}

impl GreekReport {
    pub fn get(&self, label: &str) -> Option<McEstimate> {
        self.labels.iter().position(|l| *l == label).map(|c| self.reduction.estimate(c))
    }

    pub fn estimates(&self) -> Vec<(&'static str, McEstimate)> {
        self.labels.iter().enumerate().map(|(c, l)| (*l, self.reduction.estimate(c))).collect()
    }
}

/// Price and the requested Greeks from one pass over `source`.
pub fn evaluate<S, G>(source: &S, g: &G, model: &VolatilityModel, req: &GreekRequest) -> Result<GreekReport>
where
    S: PathSource + ?Sized,
    G: PathFunctional + ?Sized,
{
    let (dt, n, start) = (source.grid_step(), source.n_steps(), source.start());
    let alloc = req.delta.as_ref().map(|w| w.allocation(dt, n, start)).transpose()?;
    if req.vega.is_some() && !model.is_local() {
        return Err(Error::invalid(
            "model",
            f64::NAN,
            "the Vega estimator requires a local volatility model",
        ));
    }
    let mut labels = vec!["price"];
    if alloc.is_some() {
        labels.push("delta");
    }
    if req.gamma {
        labels.push("gamma");
    }
    if req.vega.is_some() {
        labels.push("vega");
    }
    let reduction = reduce_paths(source, labels.len(), |i, s, out| {
        let price = g.eval(&s.path)?;
        let gv = price - req.baseline.unwrap_or(0.0);
        let mut eta = Vec::with_capacity(n);
        eta_increments(i, s, &mut eta)?;
        let mut c = 0;
        out[c] = price;
        if let Some(a) = &alloc {
            c += 1;
            out[c] = gv * eta.iter().zip(a).map(|(e, a)| e * a).sum::<f64>();
        }
        if req.gamma {
            c += 1;
            out[c] = gv * xi(s, start, eta[start..].iter().sum());
        }
        if let Some(dir) = &req.vega {
            c += 1;
            out[c] = gv * vega::vega_weight(i, s, &eta, dir)?;
        }
        Ok(())
    })?;
    Ok(GreekReport { labels, reduction })
}

pub fn price<S: PathSource + ?Sized, G: PathFunctional + ?Sized>(source: &S, g: &G) -> Result<McEstimate> {
    Ok(reduce_paths(source, 1, |_, s, out| {
        out[0] = g.eval(&s.path)?;
        Ok(())
    })?
    .estimate(0))
}

pub fn delta<S: PathSource + ?Sized, G: PathFunctional + ?Sized>(
    source: &S,
    g: &G,
    spec: &WeightSpec,
) -> Result<McEstimate> {
    let alloc = spec.allocation(source.grid_step(), source.n_steps(), source.start())?;
    Ok(reduce_paths(source, 1, |i, s, out| {
        let mut eta = Vec::new();
        eta_increments(i, s, &mut eta)?;
        out[0] = g.eval(&s.path)? * eta.iter().zip(&alloc).map(|(e, a)| e * a).sum::<f64>();
        Ok(())
    })?
    .estimate(0))
}

/// Gamma at the start of the simulated window (time zero, or the end of the prefix).
pub fn gamma<S: PathSource + ?Sized, G: PathFunctional + ?Sized>(source: &S, g: &G) -> Result<McEstimate> {
    Ok(reduce_paths(source, 1, |i, s, out| {
        let mut eta = Vec::new();
        eta_increments(i, s, &mut eta)?;
        out[0] = g.eval(&s.path)? * xi(s, s.start, eta[s.start..].iter().sum());
        Ok(())
    })?
    .estimate(0))
}

/// Delta conditional on `prefix`, with the tangent process restarted at 1 at the end of
/// the prefix.
pub fn delta_at<G: PathFunctional + ?Sized>(
    prefix: &DiscretePath,
    g: &G,
    model: &VolatilityModel,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    let sim = Simulator::from_prefix(model.clone(), prefix, horizon, n_steps, n_paths, seed)?;
    delta(&sim, g, &WeightSpec::Weakly)
}
