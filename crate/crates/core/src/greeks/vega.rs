//! Vega as a Fréchet derivative in the local variance `v = σ²(t, x)`.

use std::fmt;
use std::sync::Arc;

use super::{eta_increments, xi};
use crate::engine::{reduce_chunks, sum_in_order, McEstimate, PathSample, PathSource};
use crate::error::{Error, Result};
use crate::models::{LocalVolFn, VolatilityModel};
use crate::path::PathFunctional;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scaling {
    /// `v ↦ v + ε u(t, x)`.
    Absolute,
    /// `v ↦ v + ε u(t, x) x²`, i.e. a bump of the lognormal variance.
    Lognormal,
}

/// A perturbation direction `u(t, x)` for the local variance.
#[derive(Clone)]
pub struct VegaDirection {
    u: LocalVolFn,
    scaling: Scaling,
    constant: Option<f64>,
}

impl fmt::Debug for VegaDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VegaDirection")
            .field("scaling", &self.scaling)
            .field("constant", &self.constant)
            .finish()
    }
}

impl VegaDirection {
    pub fn absolute(u: LocalVolFn) -> Self {
        Self { u, scaling: Scaling::Absolute, constant: None }
    }

    pub fn absolute_constant(c: f64) -> Self {
        Self { u: Arc::new(move |_, _| c), scaling: Scaling::Absolute, constant: Some(c) }
    }

    pub fn lognormal(u: LocalVolFn) -> Self {
        Self { u, scaling: Scaling::Lognormal, constant: None }
    }

    /// `u ≡ c` in lognormal variance; for Black–Scholes this is `∂/∂σ̄²` when `c = 1`.
    pub fn lognormal_constant(c: f64) -> Self {
        Self { u: Arc::new(move |_, _| c), scaling: Scaling::Lognormal, constant: Some(c) }
    }

    /// Restricts the direction to `t < until`.
    pub fn restricted(&self, until: f64) -> Self {
        let u = self.u.clone();
        Self {
            u: Arc::new(move |t, x| if t < until { u(t, x) } else { 0.0 }),
            scaling: self.scaling,
            constant: None,
        }
    }

    /// The direction as a bump of the absolute local variance.
    pub fn absolute_at(&self, t: f64, x: f64) -> f64 {
        match self.scaling {
            Scaling::Absolute => (self.u)(t, x),
            Scaling::Lognormal => (self.u)(t, x) * x * x,
        }
    }

    pub(crate) fn constant_lognormal(&self) -> Option<f64> {
        match self.scaling {
            Scaling::Lognormal => self.constant,
            Scaling::Absolute => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == Some(0.0)
    }
}

/// `½ Σ_k u(t_k, x_k) ξ_{t_k,T} Δt`, built with suffix sums of `η`.
pub(crate) fn vega_weight(index: usize, s: &PathSample, eta: &[f64], dir: &VegaDirection) -> Result<f64> {
    if dir.is_zero() {
        return Ok(0.0);
    }
    let dt = s.grid_step();
    let x = s.path.values();
    let mut tail = 0.0;
    let mut acc = 0.0;
    for k in (s.start..s.n_steps()).rev() {
        tail += eta[k];
        let u = dir.absolute_at(k as f64 * dt, x[k]);
        if !u.is_finite() {
            return Err(Error::NonFinite { path: index, step: k });
        }
        if u != 0.0 {
            acc += u * xi(s, k, tail);
        }
    }
    Ok(0.5 * dt * acc)
}

/// `⟨∇_v f, u⟩ = E[g ½∫ u(t, x_t) ξ_{t,T} dt]`.
pub fn vega_directional<S, G>(source: &S, g: &G, model: &VolatilityModel, dir: &VegaDirection) -> Result<McEstimate>
where
    S: PathSource + ?Sized,
    G: PathFunctional + ?Sized,
{
    let req = super::GreekRequest {
        vega: Some(dir.clone()),
        ..Default::default()
    };
    super::evaluate(source, g, model, &req).map(|r| r.reduction.estimate(1))
}

/// Probe grid for [`vega_surface`].
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceBins {
    /// Strictly increasing price-bin edges.
    pub edges: Vec<f64>,
    /// Probe every `time_stride`-th grid time.
    pub time_stride: usize,
    /// Cells visited by fewer paths are reported empty.
    pub min_occupancy: u64,
}

impl SurfaceBins {
    pub fn uniform(low: f64, high: f64, n_bins: usize, time_stride: usize) -> Result<Self> {
        if n_bins == 0 || !(high > low) {
            return Err(Error::invalid("bins", high - low, "need a positive range and at least one bin"));
        }
        let w = (high - low) / n_bins as f64;
        Ok(Self {
            edges: (0..=n_bins).map(|i| low + w * i as f64).collect(),
            time_stride,
            min_occupancy: 50,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.edges.len() < 2 {
            return Err(Error::invalid("bins", self.edges.len() as f64, "need at least two edges"));
        }
        if let Some(w) = self.edges.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("bin width", w[1] - w[0], "bins must have positive width"));
        }
        if self.time_stride == 0 {
            return Err(Error::invalid("time_stride", 0.0, "must be at least 1"));
        }
        Ok(())
    }

    fn bin_of(&self, x: f64) -> Option<usize> {
        let e = &self.edges;
        if x < e[0] || x >= e[e.len() - 1] {
            return None;
        }
        Some(e.partition_point(|&edge| edge <= x) - 1)
    }
}

/// Estimated `m(t, x)` on a grid of probe times and price bins.
#[derive(Debug, Clone, PartialEq)]
pub struct VegaSurface {
    pub times: Vec<f64>,
    pub edges: Vec<f64>,
    /// `m[t][bin]`; `None` below the occupancy threshold.
    pub m: Vec<Vec<Option<f64>>>,
    pub occupancy: Vec<Vec<u64>>,
    pub time_step: f64,
    pub n_paths: u64,
}

impl VegaSurface {
    /// `Σ m(t, x) u(t, x) Δx Δt` over the non-empty cells, with `u` at bin midpoints.
    pub fn integrate(&self, dir: &VegaDirection) -> f64 {
        let mut total = 0.0;
        for (ti, row) in self.m.iter().enumerate() {
            for (b, cell) in row.iter().enumerate() {
                if let Some(m) = cell {
                    let (lo, hi) = (self.edges[b], self.edges[b + 1]);
                    total += m * dir.absolute_at(self.times[ti], 0.5 * (lo + hi)) * (hi - lo) * self.time_step;
                }
            }
        }
        total
    }

    pub const CSV_HEADER: &'static str = "t,x_low,x_high,m,occupancy";

    /// One row per cell; empty cells leave `m` blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (ti, row) in self.m.iter().enumerate() {
            for (b, cell) in row.iter().enumerate() {
                let m = cell.map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    self.times[ti],
                    self.edges[b],
                    self.edges[b + 1],
                    m,
                    self.occupancy[ti][b]
                ));
            }
        }
        out
    }
}

/// `m̂(t, x) = ½ Σ_{paths with x_t in cell} g ξ_{t,T} / (n · width)`, the conditional
/// mean times the empirical density.
pub fn vega_surface<S, G>(source: &S, g: &G, model: &VolatilityModel, bins: &SurfaceBins) -> Result<VegaSurface>
where
    S: PathSource + ?Sized,
    G: PathFunctional + ?Sized,
{
    bins.validate()?;
    if !model.is_local() {
        return Err(Error::invalid("model", f64::NAN, "the Vega surface requires a local volatility model"));
    }
    let (dt, n, start) = (source.grid_step(), source.n_steps(), source.start());
    let probes: Vec<usize> = (start..n).step_by(bins.time_stride).collect();
    let nb = bins.edges.len() - 1;
    let width = 2 * probes.len() * nb;

    let chunks = reduce_chunks(
        source,
        || vec![0.0; width],
        |acc, i, s| {
            let gv = g.eval(&s.path)?;
            let mut eta = Vec::with_capacity(n);
            eta_increments(i, s, &mut eta)?;
            let mut tail = 0.0;
            let mut p = probes.len();
            for k in (start..n).rev() {
                tail += eta[k];
                if p > 0 && probes[p - 1] == k {
                    p -= 1;
                    if let Some(b) = bins.bin_of(s.path.values()[k]) {
                        let cell = 2 * (p * nb + b);
                        acc[cell] += gv * xi(s, k, tail);
                        acc[cell + 1] += 1.0;
                    }
                }
            }
            Ok(())
        },
    )?;
    let totals = sum_in_order(chunks, width);
    let n_paths = source.n_paths() as f64;
    let mut m = vec![vec![None; nb]; probes.len()];
    let mut occupancy = vec![vec![0; nb]; probes.len()];
    for p in 0..probes.len() {
        for b in 0..nb {
            let cell = 2 * (p * nb + b);
            let count = totals[cell + 1] as u64;
            occupancy[p][b] = count;
            if count >= bins.min_occupancy {
                let w = bins.edges[b + 1] - bins.edges[b];
                m[p][b] = Some(0.5 * totals[cell] / (n_paths * w));
            }
        }
    }
    Ok(VegaSurface {
        times: probes.iter().map(|&k| k as f64 * dt).collect(),
        edges: bins.edges.clone(),
        m,
        occupancy,
        time_step: bins.time_stride as f64 * dt,
        n_paths: source.n_paths() as u64,
    })
}
