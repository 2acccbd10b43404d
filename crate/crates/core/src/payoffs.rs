//! Contract functionals `g : Λ_T → ℝ`.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::path::{quadratic_variation, DiscretePath, PathFunctional};

type PayoffFn = dyn Fn(&DiscretePath) -> Result<f64> + Send + Sync;

/// Times closer than this (relative to the grid step) to a grid point are not reported
/// as snapped.
const SNAP_TOL: f64 = 1e-9;

#[derive(Clone)]
pub struct Contract {
    payoff: Arc<PayoffFn>,
    label: String,
    monitoring: Option<Vec<f64>>,
}

impl fmt::Debug for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Contract")
            .field("label", &self.label)
            .field("monitoring", &self.monitoring)
            .finish()
    }
}

impl PathFunctional for Contract {
    fn eval(&self, path: &DiscretePath) -> Result<f64> {
        (self.payoff)(path)
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, v, "must be positive and finite"))
    }
}

/// Snaps `t` to the grid of `path`, warning once per contract when it is off-grid.
fn snap(path: &DiscretePath, t: f64, warned: &AtomicBool, what: &str) -> usize {
    let i = path.index_of(t);
    let off = (i as f64 * path.grid_step() - t).abs();
    if off > SNAP_TOL * path.grid_step() && !warned.swap(true, Ordering::Relaxed) {
        log::warn!(
            "{} time {} is off the grid (step {}); using {}",
            what,
            t,
            path.grid_step(),
            i as f64 * path.grid_step()
        );
    }
    i
}

/// Trapezoid integral of the path values between grid indices `from` and `to`.
fn trapezoid(values: &[f64], from: usize, to: usize, dt: f64) -> f64 {
    if to <= from {
        return 0.0;
    }
    let inner: f64 = values[from + 1..to].iter().sum();
    dt * (inner + 0.5 * (values[from] + values[to]))
}

impl Contract {
    pub fn new(
        label: impl Into<String>,
        payoff: impl Fn(&DiscretePath) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            payoff: Arc::new(payoff),
            label: label.into(),
            monitoring: None,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn monitoring(&self) -> Option<&[f64]> {
        self.monitoring.as_deref()
    }

    /// `(x_T − K)⁺`.
    pub fn european_call(strike: f64) -> Result<Self> {
        positive("strike", strike)?;
        Ok(Self::new(format!("european_call(K={})", strike), move |p| {
            Ok((p.terminal() - strike).max(0.0))
        }))
    }

    /// `(x_T − K)⁺ · 1{QV(log x) < H}`. Pass `f64::INFINITY` for an unbarriered call.
    pub fn vko_call(strike: f64, barrier: f64) -> Result<Self> {
        positive("strike", strike)?;
        if !(barrier > 0.0) {
            return Err(Error::invalid("barrier", barrier, "must be positive"));
        }
        Ok(Self::new(format!("vko_call(K={},H={})", strike, barrier), move |p| {
            let payoff = (p.terminal() - strike).max(0.0);
            if barrier.is_infinite() {
                return Ok(payoff);
            }
            if let Some(v) = p
                .values()
                .iter()
                .chain(std::iter::once(&p.terminal_left_limit()))
                .find(|&&v| !(v > 0.0))
            {
                return Err(Error::invalid("path value", *v, "log of a non-positive price"));
            }
            let qv = quadratic_variation(&p.map(f64::ln));
            Ok(if qv < barrier { payoff } else { 0.0 })
        }))
    }

    /// `(x_T − A)⁺` with `A` the trapezoid average of `x` over `[t1, T]`. Paths running
    /// past `maturity` are read only up to it.
    pub fn asian_forward_start(t1: f64, maturity: f64) -> Result<Self> {
        positive("maturity", maturity)?;
        if !(t1 >= 0.0 && t1 < maturity) {
            return Err(Error::invalid("t1", t1, format!("must lie in [0, {})", maturity)));
        }
        let warned = Arc::new(AtomicBool::new(false));
        Ok(Self::new(format!("asian_forward_start(t1={},T={})", t1, maturity), move |p| {
            let n = horizon_index(p, maturity)?;
            let i1 = snap(p, t1, &warned, "averaging start").min(n);
            let values = p.values();
            if i1 == n {
                return Ok(0.0);
            }
            let avg = trapezoid(values, i1, n, p.grid_step()) / ((n - i1) as f64 * p.grid_step());
            Ok((values[n] - avg).max(0.0))
        }))
    }

    /// `φ(y_{t_1}, …, y_{t_n})` on grid-snapped monitoring times.
    pub fn discretely_monitored(
        label: impl Into<String>,
        phi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        times: Vec<f64>,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Empty("monitoring times"));
        }
        if times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "monitoring times",
                times[0],
                "must be positive and strictly increasing",
            ));
        }
        let warned = Arc::new(AtomicBool::new(false));
        let ts = times.clone();
        let mut c = Self::new(label, move |p| {
            let last = *ts.last().expect("non-empty");
            if last > p.time() * (1.0 + 1e-12) + SNAP_TOL * p.grid_step() {
                return Err(Error::invalid("monitoring time", last, "beyond the path horizon"));
            }
            let obs: Vec<f64> = ts
                .iter()
                .map(|&t| p.values()[snap(p, t, &warned, "monitoring")])
                .collect();
            Ok(phi(&obs))
        });
        c.monitoring = Some(times);
        Ok(c)
    }

    /// Trapezoid average `(1/T)∫₀ᵀ x dt`, optionally as a call `(A − K)⁺`.
    pub fn fixed_strike_average(strike: Option<f64>, maturity: f64) -> Result<Self> {
        positive("maturity", maturity)?;
        if let Some(k) = strike {
            positive("strike", k)?;
        }
        let label = match strike {
            Some(k) => format!("fixed_strike_average(K={},T={})", k, maturity),
            None => format!("fixed_strike_average(T={})", maturity),
        };
        Ok(Self::new(label, move |p| {
            let n = horizon_index(p, maturity)?;
            let avg = trapezoid(p.values(), 0, n, p.grid_step()) / maturity;
            Ok(match strike {
                Some(k) => (avg - k).max(0.0),
                None => avg,
            })
        }))
    }

    pub fn terminal_value() -> Self {
        Self::new("terminal_value", |p| Ok(p.terminal()))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({})", c), move |_| Ok(c))
    }
}

fn horizon_index(p: &DiscretePath, maturity: f64) -> Result<usize> {
    let n = (maturity / p.grid_step()).round() as usize;
    if n > p.n_steps() {
        return Err(Error::invalid(
            "path horizon",
            p.time(),
            format!("shorter than the contract maturity {}", maturity),
        ));
    }
    Ok(n)
}
