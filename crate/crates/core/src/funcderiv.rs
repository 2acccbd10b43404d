//! Finite-difference functional derivatives, the Lie bracket `𝔏 = Δ_xΔ_t − Δ_tΔ_x`, and a
//! heuristic path-dependence classifier.
//!
//! Space derivatives are central differences in the terminal bump `h`. Time derivatives
//! are forward differences over `dt_steps` grid steps, since flat extension only runs
//! forward in time.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::path::{bump, flat_extension, DiscretePath, PathFunctional};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeConfig {
    /// Space bump size, in path units (multiplied by `max(1, |y_t|)` when `scale_h` is set).
    pub h: f64,
    /// Number of grid steps used as `δt`.
    pub dt_steps: usize,
    pub scale_h: bool,
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        Self {
            h: 1e-4,
            dt_steps: 1,
            scale_h: true,
        }
    }
}

impl DerivativeConfig {
    pub fn new(h: f64, dt_steps: usize) -> Result<Self> {
        let cfg = Self {
            h,
            dt_steps,
            scale_h: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::invalid("h", self.h, "must be positive"));
        }
        if self.dt_steps == 0 {
            return Err(Error::invalid("dt_steps", 0.0, "must be at least 1"));
        }
        Ok(())
    }

    /// The bump actually applied at `path`.
    pub fn bump_size(&self, path: &DiscretePath) -> f64 {
        if self.scale_h {
            self.h * path.terminal().abs().max(1.0)
        } else {
            self.h
        }
    }

    fn dt(&self, path: &DiscretePath) -> f64 {
        self.dt_steps as f64 * path.grid_step()
    }
}

/// `[f(Y_{t,δt}) − f(Y_t)] / δt`.
pub fn time_derivative<F: PathFunctional + ?Sized>(
    f: &F,
    path: &DiscretePath,
    cfg: &DerivativeConfig,
) -> Result<f64> {
    cfg.validate()?;
    let extended = f.eval(&flat_extension(path, cfg.dt_steps))?;
    Ok((extended - f.eval(path)?) / cfg.dt(path))
}

/// `[f(Y_t^h) − f(Y_t^{−h})] / 2h`.
pub fn space_derivative<F: PathFunctional + ?Sized>(
    f: &F,
    path: &DiscretePath,
    cfg: &DerivativeConfig,
) -> Result<f64> {
    cfg.validate()?;
    let h = cfg.bump_size(path);
    Ok((f.eval(&bump(path, h))? - f.eval(&bump(path, -h))?) / (2.0 * h))
}

/// `[f(Y_t^h) − 2f(Y_t) + f(Y_t^{−h})] / h²`.
pub fn second_space_derivative<F: PathFunctional + ?Sized>(
    f: &F,
    path: &DiscretePath,
    cfg: &DerivativeConfig,
) -> Result<f64> {
    cfg.validate()?;
    let h = cfg.bump_size(path);
    let up = f.eval(&bump(path, h))?;
    let down = f.eval(&bump(path, -h))?;
    Ok((up - 2.0 * f.eval(path)? + down) / (h * h))
}

/// Lie bracket from the bump/extension commutator.
///
/// For a signed bump `k`, compares extending the bumped path with bumping the extended
/// path: `[f((Y_t^k)_{t,δt}) − f((Y_{t,δt})^k)] / (δt k)`. The result averages `k = ±h`,
/// which cancels the even-order error in `h`. With this orientation the estimate equals
/// `Δ_xΔ_t f − Δ_tΔ_x f`, so `𝔏 ∫y du = 1`.
pub fn lie_bracket<F: PathFunctional + ?Sized>(
    f: &F,
    path: &DiscretePath,
    cfg: &DerivativeConfig,
) -> Result<f64> {
    cfg.validate()?;
    let h = cfg.bump_size(path);
    let dt = cfg.dt(path);
    let extended = flat_extension(path, cfg.dt_steps);
    let one_sided = |k: f64| -> Result<f64> {
        let extend_after_bump = f.eval(&flat_extension(&bump(path, k), cfg.dt_steps))?;
        let bump_after_extend = f.eval(&bump(&extended, k))?;
        Ok((extend_after_bump - bump_after_extend) / (dt * k))
    };
    Ok(0.5 * (one_sided(h)? + one_sided(-h)?))
}

/// Lie bracket as the nested difference `Δ_x(Δ_t f) − Δ_t(Δ_x f)`; cross-check for
/// [`lie_bracket`].
pub fn lie_bracket_nested<F: PathFunctional + ?Sized>(
    f: &F,
    path: &DiscretePath,
    cfg: &DerivativeConfig,
) -> Result<f64> {
    cfg.validate()?;
    let h = cfg.bump_size(path);
    // Pin h to the base path so both nestings bump by the same amount.
    let fixed = DerivativeConfig {
        h,
        dt_steps: cfg.dt_steps,
        scale_h: false,
    };
    let dt_of = |p: &DiscretePath| time_derivative(f, p, &fixed);
    let dx_of = |p: &DiscretePath| space_derivative(f, p, &fixed);

    let dx_dt = (dt_of(&bump(path, h))? - dt_of(&bump(path, -h))?) / (2.0 * h);
    let dt_dx = (dx_of(&flat_extension(path, cfg.dt_steps))? - dx_of(path)?) / fixed.dt(path);
    Ok(dx_dt - dt_dx)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathDependenceKind {
    Weakly,
    PathIndependent,
    DiscretelyMonitored(Vec<f64>),
    Delayed(f64),
    Strongly,
}

impl PathDependenceKind {
    pub fn label(&self) -> String {
        match self {
            Self::Weakly => "weakly".into(),
            Self::PathIndependent => "path_independent".into(),
            Self::DiscretelyMonitored(times) => {
                let ts: Vec<String> = times.iter().map(|t| format!("{}", t)).collect();
                format!("discretely_monitored({})", ts.join(";"))
            }
            Self::Delayed(t1) => format!("delayed({})", t1),
            Self::Strongly => "strongly".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketEvidence {
    pub time: f64,
    /// Largest `|𝔏f|` over the probe paths at this time.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathDependenceClass {
    pub kind: PathDependenceKind,
    pub evidence: Vec<BracketEvidence>,
}

impl PathDependenceClass {
    /// CSV table with header `time,abs_bracket`.
    pub fn evidence_csv(&self) -> String {
        let mut out = String::from("time,abs_bracket\n");
        for e in &self.evidence {
            out.push_str(&format!("{},{}\n", e.time, e.magnitude));
        }
        out
    }
}

/// Labels `f` by where its Lie bracket exceeds `tol` on the probe paths.
///
/// This is a heuristic: the classes are exact properties that finitely many probes
/// cannot decide. The evidence table is always returned alongside the label.
pub fn classify<F: PathFunctional + ?Sized>(
    f: &F,
    probe_paths: &[DiscretePath],
    probe_times: &[f64],
    cfg: &DerivativeConfig,
    tol: f64,
) -> Result<PathDependenceClass> {
    if probe_paths.is_empty() {
        return Err(Error::Empty("probe paths"));
    }
    if probe_times.is_empty() {
        return Err(Error::Empty("probe times"));
    }
    cfg.validate()?;
    let mut times = probe_times.to_vec();
    times.sort_by(|a, b| a.total_cmp(b));
    for p in probe_paths {
        if let Some(&t) = times.iter().find(|&&t| t < 0.0 || t > p.time() + 0.5 * p.grid_step()) {
            return Err(Error::invalid("probe time", t, "outside the probe path horizon"));
        }
    }

    let evidence = times
        .par_iter()
        .map(|&t| -> Result<BracketEvidence> {
            let mut magnitude = 0.0_f64;
            for p in probe_paths {
                let prefix = p.restrict(p.index_of(t));
                magnitude = magnitude.max(lie_bracket(f, &prefix, cfg)?.abs());
            }
            Ok(BracketEvidence { time: t, magnitude })
        })
        .collect::<Result<Vec<_>>>()?;

    let exceeds: Vec<bool> = evidence.iter().map(|e| e.magnitude > tol).collect();
    let kind = label_from_exceedances(&times, &exceeds);
    Ok(PathDependenceClass { kind, evidence })
}

fn label_from_exceedances(times: &[f64], exceeds: &[bool]) -> PathDependenceKind {
    let Some(first) = exceeds.iter().position(|&e| e) else {
        return PathDependenceKind::Weakly;
    };
    let tail_block = exceeds[first..].iter().all(|&e| e);
    if tail_block && first > 0 {
        return PathDependenceKind::Delayed(times[first]);
    }
    if tail_block {
        return PathDependenceKind::Strongly;
    }
    let isolated = exceeds.windows(2).all(|w| !(w[0] && w[1]));
    if isolated {
        let hits = times
            .iter()
            .zip(exceeds)
            .filter(|(_, &e)| e)
            .map(|(&t, _)| t)
            .collect();
        PathDependenceKind::DiscretelyMonitored(hits)
    } else {
        PathDependenceKind::Strongly
    }
}

/// Left-point running integral `∫_0^t y_u du`. The terminal value carries no weight, so a
/// terminal bump leaves it unchanged.
pub fn running_integral(path: &DiscretePath) -> f64 {
    let v = path.values();
    v[..v.len() - 1].iter().sum::<f64>() * path.grid_step()
}

/// Left-point `∫_0^t ∫_0^s y_u du ds`.
pub fn double_running_integral(path: &DiscretePath) -> f64 {
    let dt = path.grid_step();
    let v = path.values();
    let mut inner = 0.0;
    let mut outer = 0.0;
    for &y in &v[..v.len() - 1] {
        outer += inner * dt;
        inner += y * dt;
    }
    outer
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, dt: f64) -> DiscretePath {
        DiscretePath::new(dt, (0..=n).map(|i| 100.0 + (i as f64 * 0.37).sin() * 3.0).collect()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(DerivativeConfig::new(0.0, 1).is_err());
        assert!(DerivativeConfig::new(1e-3, 0).is_err());
        let p = DiscretePath::new(0.1, vec![1.0, 250.0]).unwrap();
        assert_eq!(DerivativeConfig::default().bump_size(&p), 250.0 * 1e-4);
    }

    #[test]
    fn time_derivative_examples() {
        let cfg = DerivativeConfig::default();
        let p = ramp(10, 0.01);
        let t = |p: &DiscretePath| p.time();
        assert!((time_derivative(&t, &p, &cfg).unwrap() - 1.0).abs() < 1e-9);
        let y = |p: &DiscretePath| p.terminal();
        assert_eq!(time_derivative(&y, &p, &cfg).unwrap(), 0.0);
        let c = DiscretePath::constant(0.01, 7.0, 20).unwrap();
        assert!((time_derivative(&running_integral, &c, &cfg).unwrap() - 7.0).abs() < 1e-9);
    }

    #[test]
    fn space_derivative_examples() {
        let cfg = DerivativeConfig::default();
        let p = ramp(10, 0.01);
        let y = |p: &DiscretePath| p.terminal();
        assert!((space_derivative(&y, &p, &cfg).unwrap() - 1.0).abs() < 1e-9);
        let qv = |p: &DiscretePath| crate::path::quadratic_variation(p);
        assert!(space_derivative(&qv, &p, &cfg).unwrap().abs() < 1e-9);
        assert!((second_space_derivative(&qv, &p, &cfg).unwrap() - 2.0).abs() < 1e-4);
        assert_eq!(space_derivative(&running_integral, &p, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn bracket_examples() {
        let cfg = DerivativeConfig::default();
        let p = ramp(50, 0.02);
        assert!((lie_bracket(&running_integral, &p, &cfg).unwrap() - 1.0).abs() < 1e-6);
        assert!(lie_bracket(&double_running_integral, &p, &cfg).unwrap().abs() < 1e-6);
        let ty = |p: &DiscretePath| p.time() * p.terminal();
        assert!(lie_bracket(&ty, &p, &cfg).unwrap().abs() < 1e-6);
    }

    #[test]
    fn failing_functional_propagates() {
        struct Broken;
        impl PathFunctional for Broken {
            fn eval(&self, _: &DiscretePath) -> Result<f64> {
                Err(Error::Evaluation("nope".into()))
            }
        }
        let p = ramp(3, 0.1);
        let cfg = DerivativeConfig::default();
        assert!(lie_bracket(&Broken, &p, &cfg).is_err());
        assert!(time_derivative(&Broken, &p, &cfg).is_err());
    }

    #[test]
    fn labels_from_exceedance_patterns() {
        let t = [0.1, 0.2, 0.3, 0.4, 0.5];
        use PathDependenceKind::*;
        assert_eq!(label_from_exceedances(&t, &[false; 5]), Weakly);
        assert_eq!(label_from_exceedances(&t, &[true; 5]), Strongly);
        assert_eq!(label_from_exceedances(&t, &[false, false, true, true, true]), Delayed(0.3));
        assert_eq!(
            label_from_exceedances(&t, &[false, true, false, true, false]),
            DiscretelyMonitored(vec![0.2, 0.4])
        );
        assert_eq!(label_from_exceedances(&t, &[true, true, false, true, false]), Strongly);
    }

    #[test]
    fn classify_rejects_empty_and_out_of_range() {
        let cfg = DerivativeConfig::default();
        let p = ramp(10, 0.1);
        assert!(classify(&running_integral, &[], &[0.5], &cfg, 1e-2).is_err());
        assert!(classify(&running_integral, &[p.clone()], &[], &cfg, 1e-2).is_err());
        assert!(classify(&running_integral, &[p], &[2.0], &cfg, 1e-2).is_err());
    }
}
