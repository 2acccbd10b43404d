//! Driftless volatility models `dx = σ(X_t) dw` and their simulation together with the
//! tangent process `z`.
//!
//! The tangent process is always built in closed exponential form,
//! `z_t = exp{-½ Σ (Δ_xσ)² Δt + Σ Δ_xσ Δw}`, which keeps it strictly positive and makes
//! `z = x / x0` hold to round-off under Black–Scholes.

use std::fmt;
use std::sync::Arc;

use crate::engine::{PathSample, PathSource};
use crate::error::{Error, Result};
use crate::funcderiv::{space_derivative, DerivativeConfig};
use crate::path::{DiscretePath, PathView};
use crate::rng::PathRng;

pub type LocalVolFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type PathVolFn = Arc<dyn Fn(&PathView<'_>) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ModelKind {
    /// `σ(Y_t) = vol · y_t`, stepped exactly in log space.
    BlackScholes { vol: f64 },
    /// `σ(Y_t) = σ(t, y_t)`, Euler stepping.
    LocalVol {
        sigma: LocalVolFn,
        dsigma_dx: Option<LocalVolFn>,
    },
    /// Arbitrary functional of the path so far, Euler stepping.
    PathDependent {
        sigma: PathVolFn,
        dsigma_dx: Option<PathVolFn>,
    },
}

#[derive(Clone)]
pub struct VolatilityModel {
    kind: ModelKind,
    label: String,
}

impl fmt::Debug for VolatilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VolatilityModel").field("label", &self.label).finish()
    }
}

fn local_bump(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

impl VolatilityModel {
    pub fn black_scholes(vol: f64) -> Self {
        Self {
            kind: ModelKind::BlackScholes { vol },
            label: format!("black_scholes({})", vol),
        }
    }

    /// Constant absolute volatility; the tangent process is identically one.
    pub fn bachelier(vol: f64) -> Self {
        let sigma: LocalVolFn = Arc::new(move |_, _| vol);
        let dsigma: LocalVolFn = Arc::new(|_, _| 0.0);
        Self::local_vol(format!("bachelier({})", vol), sigma, Some(dsigma))
    }

    /// Constant elasticity of variance, `σ(x) = vol · x0^(1-beta) · x^beta`.
    pub fn cev(vol: f64, beta: f64, x0: f64) -> Self {
        let scale = vol * x0.powf(1.0 - beta);
        let sigma: LocalVolFn = Arc::new(move |_, x| scale * x.max(0.0).powf(beta));
        let dsigma: LocalVolFn = Arc::new(move |_, x| scale * beta * x.max(f64::MIN_POSITIVE).powf(beta - 1.0));
        Self::local_vol(format!("cev({},{})", vol, beta), sigma, Some(dsigma))
    }

    pub fn local_vol(label: impl Into<String>, sigma: LocalVolFn, dsigma_dx: Option<LocalVolFn>) -> Self {
        Self {
            kind: ModelKind::LocalVol { sigma, dsigma_dx },
            label: label.into(),
        }
    }

    pub fn path_dependent(label: impl Into<String>, sigma: PathVolFn, dsigma_dx: Option<PathVolFn>) -> Self {
        Self {
            kind: ModelKind::PathDependent { sigma, dsigma_dx },
            label: label.into(),
        }
    }

    /// `σ(Y_t) = vol · (1 + alpha · QV(log Y_t)) · y_t`.
    pub fn qv_feedback(vol: f64, alpha: f64) -> Self {
        let sigma: PathVolFn = Arc::new(move |p: &PathView<'_>| {
            let mut qv = 0.0;
            for w in p.values.windows(2) {
                let r = (w[1] / w[0]).ln();
                qv += r * r;
            }
            vol * (1.0 + alpha * qv) * p.last()
        });
        Self::path_dependent(format!("qv_feedback({},{})", vol, alpha), sigma, None)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// True for models whose volatility depends on the path only through `(t, y_t)`.
    pub fn is_local(&self) -> bool {
        !matches!(self.kind, ModelKind::PathDependent { .. })
    }

    pub fn lognormal_vol(&self) -> Option<f64> {
        match self.kind {
            ModelKind::BlackScholes { vol } => Some(vol),
            _ => None,
        }
    }

    pub fn sigma(&self, path: &PathView<'_>) -> f64 {
        match &self.kind {
            ModelKind::BlackScholes { vol } => vol * path.last(),
            ModelKind::LocalVol { sigma, .. } => sigma(path.time(), path.last()),
            ModelKind::PathDependent { sigma, .. } => sigma(path),
        }
    }

    /// `Δ_xσ(Y_t)`; a central bump of the terminal value when no analytic form was given.
    pub fn dsigma_dx(&self, path: &PathView<'_>) -> f64 {
        match &self.kind {
            ModelKind::BlackScholes { vol } => *vol,
            ModelKind::LocalVol { dsigma_dx: Some(d), .. } => d(path.time(), path.last()),
            ModelKind::LocalVol { sigma, dsigma_dx: None } => {
                let (t, x) = (path.time(), path.last());
                let h = local_bump(x);
                (sigma(t, x + h) - sigma(t, x - h)) / (2.0 * h)
            }
            ModelKind::PathDependent { dsigma_dx: Some(d), .. } => d(path),
            ModelKind::PathDependent { sigma, dsigma_dx: None } => {
                let sigma = sigma.clone();
                let f = move |p: &DiscretePath| sigma(&p.view());
                space_derivative(&f, &path.to_path(), &DerivativeConfig::default())
                    .expect("infallible functional")
            }
        }
    }

    /// Local variance as a function of `(t, x)`. Only meaningful for local models.
    fn local_variance(&self, t: f64, x: f64) -> f64 {
        match &self.kind {
            ModelKind::BlackScholes { vol } => (vol * x).powi(2),
            ModelKind::LocalVol { sigma, .. } => sigma(t, x).powi(2),
            ModelKind::PathDependent { .. } => unreachable!("checked by caller"),
        }
    }

    /// Model with local variance `σ²(t,x) + eps · u(t,x)` where `u` is the absolute
    /// variance direction. Black–Scholes bumped along `u = c·x²` stays Black–Scholes.
    pub fn with_variance_bump(&self, eps: f64, direction: &crate::greeks::VegaDirection) -> Result<Self> {
        if !self.is_local() {
            return Err(Error::invalid(
                "model",
                f64::NAN,
                "variance perturbation requires a local volatility model",
            ));
        }
        if let (ModelKind::BlackScholes { vol }, Some(c)) = (&self.kind, direction.constant_lognormal()) {
            let v = vol * vol + eps * c;
            if v < 0.0 {
                return Err(Error::invalid("variance bump", eps, "drives variance negative"));
            }
            return Ok(Self::black_scholes(v.sqrt()));
        }
        let base = self.clone();
        let dir = direction.clone();
        let sigma: LocalVolFn = Arc::new(move |t, x| {
            let v = base.local_variance(t, x) + eps * dir.absolute_at(t, x);
            v.max(0.0).sqrt()
        });
        Ok(Self::local_vol(format!("{}+{}u", self.label, eps), sigma, None))
    }
}

/// Lazily simulates paths of a model on a uniform grid, optionally continuing a fixed
/// prefix. Path `i` is a pure function of `(seed, i)`.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: VolatilityModel,
    prefix: DiscretePath,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
}

impl Simulator {
    pub fn new(model: VolatilityModel, x0: f64, horizon: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<Self> {
        if !(x0 > 0.0) || !x0.is_finite() {
            return Err(Error::invalid("x0", x0, "must be positive"));
        }
        check_grid(horizon, n_steps, n_paths)?;
        let prefix = DiscretePath::new(horizon / n_steps as f64, vec![x0])?;
        Ok(Self {
            model,
            prefix,
            n_steps,
            n_paths,
            seed,
        })
    }

    /// Every path equals `prefix` up to its horizon and is simulated afterwards with the
    /// full path history visible to `σ`. The tangent process restarts at 1 at the end of
    /// the prefix.
    pub fn from_prefix(
        model: VolatilityModel,
        prefix: &DiscretePath,
        horizon: f64,
        n_steps: usize,
        n_paths: usize,
        seed: u64,
    ) -> Result<Self> {
        check_grid(horizon, n_steps, n_paths)?;
        let dt = horizon / n_steps as f64;
        if (prefix.grid_step() - dt).abs() > 1e-12 * dt {
            return Err(Error::GridMismatch {
                left: prefix.grid_step(),
                right: dt,
            });
        }
        if prefix.n_steps() >= n_steps {
            return Err(Error::invalid(
                "prefix horizon",
                prefix.time(),
                format!("must be shorter than the horizon {}", horizon),
            ));
        }
        Ok(Self {
            model,
            prefix: prefix.clone(),
            n_steps,
            n_paths,
            seed,
        })
    }

    pub fn model(&self) -> &VolatilityModel {
        &self.model
    }

    pub fn x0(&self) -> f64 {
        self.prefix.initial()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_paths(&self, n_paths: usize) -> Self {
        Self { n_paths, ..self.clone() }
    }

    pub fn with_model(&self, model: VolatilityModel) -> Self {
        Self { model, ..self.clone() }
    }

    /// Same grid and seed, started from a different initial value.
    pub fn with_x0(&self, x0: f64) -> Result<Self> {
        Self::new(self.model.clone(), x0, self.maturity(), self.n_steps, self.n_paths, self.seed)
    }

    pub fn materialize(&self) -> Result<SimulatedBatch> {
        SimulatedBatch::collect(self)
    }
}

fn check_grid(horizon: f64, n_steps: usize, n_paths: usize) -> Result<()> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", horizon, "must be positive"));
    }
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", 0.0, "must be at least 1"));
    }
    if n_paths == 0 {
        return Err(Error::invalid("n_paths", 0.0, "must be at least 1"));
    }
    Ok(())
}

impl PathSource for Simulator {
    fn n_paths(&self) -> usize {
        self.n_paths
    }

    fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn grid_step(&self) -> f64 {
        self.prefix.grid_step()
    }

    fn start(&self) -> usize {
        self.prefix.n_steps()
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn sample_into(&self, index: usize, out: &mut PathSample) -> Result<()> {
        let n = self.n_steps;
        let start = self.prefix.n_steps();
        let dt = self.grid_step();
        let sqrt_dt = dt.sqrt();
        let mut rng = PathRng::new(self.seed, index as u64);

        out.start = start;
        let x = out.path.values_mut();
        x.clear();
        x.extend_from_slice(self.prefix.values());
        x.resize(n + 1, 0.0);

        for k in 0..start {
            let view = PathView {
                grid_step: dt,
                values: &x[..=k],
            };
            out.sigma[k] = self.model.sigma(&view);
            out.dsigma[k] = self.model.dsigma_dx(&view);
            out.dw[k] = 0.0;
            out.z[k] = 1.0;
        }
        out.z[start] = 1.0;

        match self.model.kind {
            ModelKind::BlackScholes { vol } => {
                let drift = -0.5 * vol * vol * dt;
                for k in start..n {
                    let dw = sqrt_dt * rng.normal();
                    let growth = (vol * dw + drift).exp();
                    out.dw[k] = dw;
                    out.sigma[k] = vol * x[k];
                    out.dsigma[k] = vol;
                    x[k + 1] = x[k] * growth;
                    out.z[k + 1] = out.z[k] * growth;
                    if !x[k + 1].is_finite() {
                        return Err(Error::NonFinite { path: index, step: k });
                    }
                }
            }
            _ => {
                for k in start..n {
                    let view = PathView {
                        grid_step: dt,
                        values: &x[..=k],
                    };
                    let s = self.model.sigma(&view);
                    let d = self.model.dsigma_dx(&view);
                    let dw = sqrt_dt * rng.normal();
                    out.dw[k] = dw;
                    out.sigma[k] = s;
                    out.dsigma[k] = d;
                    x[k + 1] = x[k] + s * dw;
                    out.z[k + 1] = out.z[k] * (d * dw - 0.5 * d * d * dt).exp();
                    // An underflowed tangent would silently break positivity.
                    if !x[k + 1].is_finite() || !out.z[k + 1].is_finite() || out.z[k + 1] <= 0.0 {
                        return Err(Error::NonFinite { path: index, step: k });
                    }
                }
            }
        }
        out.path.reset_left_limit();
        Ok(())
    }
}

/// Shorthand for `Simulator::new(..)?.materialize()`.
pub fn simulate(
    model: &VolatilityModel,
    x0: f64,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<SimulatedBatch> {
    Simulator::new(model.clone(), x0, horizon, n_steps, n_paths, seed)?.materialize()
}

pub fn simulate_from_prefix(
    model: &VolatilityModel,
    prefix: &DiscretePath,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<SimulatedBatch> {
    Simulator::from_prefix(model.clone(), prefix, horizon, n_steps, n_paths, seed)?.materialize()
}

/// A fully materialized batch. Fine for small experiments and audits; large runs should
/// stream from a [`Simulator`] instead.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedBatch {
    pub paths: Vec<DiscretePath>,
    pub brownian: Vec<Vec<f64>>,
    pub tangent: Vec<DiscretePath>,
    pub sigma: Vec<Vec<f64>>,
    pub dsigma: Vec<Vec<f64>>,
    pub master_seed: u64,
    pub start: usize,
}

impl SimulatedBatch {
    fn collect<S: PathSource + ?Sized>(source: &S) -> Result<Self> {
        let chunks = crate::engine::reduce_chunks(source, Vec::new, |acc: &mut Vec<PathSample>, _, s| {
            acc.push(s.clone());
            Ok(())
        })?;
        let samples: Vec<PathSample> = chunks.into_iter().flatten().collect();
        let dt = source.grid_step();
        Ok(Self {
            tangent: samples
                .iter()
                .map(|s| DiscretePath::from_parts(dt, s.z.clone()))
                .collect(),
            brownian: samples.iter().map(|s| s.dw.clone()).collect(),
            sigma: samples.iter().map(|s| s.sigma.clone()).collect(),
            dsigma: samples.iter().map(|s| s.dsigma.clone()).collect(),
            paths: samples.into_iter().map(|s| s.path).collect(),
            master_seed: source.seed(),
            start: source.start(),
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// One row per path: `path,grid_step,n_steps,start,x_0..x_n,dw_0..dw_{n-1},z_0..z_n`,
    /// preceded by a header line. Volatility values are not stored; [`Self::from_csv`]
    /// recomputes them from the model.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# master_seed={}\npath,grid_step,n_steps,start,values\n", self.master_seed);
        for (i, p) in self.paths.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}", i, p.grid_step(), p.n_steps(), self.start));
            for v in p.values().iter().chain(&self.brownian[i]).chain(self.tangent[i].values()) {
                out.push_str(&format!(",{}", v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, model: &VolatilityModel) -> Result<Self> {
        let mut lines = text.lines();
        let seed_line = lines.next().ok_or(Error::Empty("batch csv"))?;
        let master_seed = seed_line
            .trim()
            .strip_prefix("# master_seed=")
            .ok_or_else(|| Error::Parse("missing master_seed line".into()))?
            .parse::<u64>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        lines.next();
        let mut batch = Self {
            paths: Vec::new(),
            brownian: Vec::new(),
            tangent: Vec::new(),
            sigma: Vec::new(),
            dsigma: Vec::new(),
            master_seed,
            start: 0,
        };
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{}`: {}", f, e))))
                .collect::<Result<_>>()?;
            if fields.len() < 4 {
                return Err(Error::Parse("short batch row".into()));
            }
            let (dt, n, start) = (fields[1], fields[2] as usize, fields[3] as usize);
            if fields.len() != 4 + 3 * n + 2 {
                return Err(Error::Parse(format!("expected {} fields, got {}", 4 + 3 * n + 2, fields.len())));
            }
            let x = fields[4..5 + n].to_vec();
            let dw = fields[5 + n..5 + 2 * n].to_vec();
            let z = fields[5 + 2 * n..].to_vec();
            let (sigma, dsigma): (Vec<f64>, Vec<f64>) = (0..n)
                .map(|k| {
                    let v = PathView { grid_step: dt, values: &x[..=k] };
                    (model.sigma(&v), model.dsigma_dx(&v))
                })
                .unzip();
            batch.paths.push(DiscretePath::new(dt, x)?);
            batch.tangent.push(DiscretePath::new(dt, z)?);
            batch.brownian.push(dw);
            batch.sigma.push(sigma);
            batch.dsigma.push(dsigma);
            batch.start = start;
        }
        Ok(batch)
    }
}

impl PathSource for SimulatedBatch {
    fn n_paths(&self) -> usize {
        self.paths.len()
    }

    fn n_steps(&self) -> usize {
        self.paths.first().map_or(0, |p| p.n_steps())
    }

    fn grid_step(&self) -> f64 {
        self.paths.first().map_or(1.0, |p| p.grid_step())
    }

    fn start(&self) -> usize {
        self.start
    }

    fn seed(&self) -> u64 {
        self.master_seed
    }

    fn sample_into(&self, index: usize, out: &mut PathSample) -> Result<()> {
        out.path = self.paths[index].clone();
        out.dw.clone_from(&self.brownian[index]);
        out.z.clone_from(&self.tangent[index].values().to_vec());
        out.sigma.clone_from(&self.sigma[index]);
        out.dsigma.clone_from(&self.dsigma[index]);
        out.start = self.start;
        Ok(())
    }
}
