//! Discrete càdlàg paths on a uniform grid and the pathwise functionals built on them.
//!
//! A [`DiscretePath`] holds `values[i]`, the path at time `i * grid_step`. The only
//! discontinuity a path can carry is at its final time: [`bump`] moves the terminal
//! value and keeps the pre-bump value in `terminal_left_limit`. Interior jumps are not
//! represented.
//!
//! The terminal slot is treated as one extra sub-step wherever increments matter: the
//! last grid increment runs up to the left limit and the jump is a separate increment
//! evaluated at `Y_{t-}`. With that convention the discrete Itô identity
//! `y_T^2 - y_0^2 - 2 I_l = QV` holds exactly for bumped and unbumped paths alike.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const GRID_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    grid_step: f64,
    values: Vec<f64>,
    terminal_left_limit: f64,
}

/// Borrowed prefix of a path, used where allocation per evaluation would be too costly
/// (volatility evaluation inside the simulation loop).
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub grid_step: f64,
    pub values: &'a [f64],
}

impl<'a> PathView<'a> {
    pub fn time(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.grid_step
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn to_path(&self) -> DiscretePath {
        DiscretePath::from_parts(self.grid_step, self.values.to_vec())
    }
}

impl DiscretePath {
    pub fn new(grid_step: f64, values: Vec<f64>) -> Result<Self> {
        if !(grid_step > 0.0) || !grid_step.is_finite() {
            return Err(Error::invalid("grid_step", grid_step, "must be positive and finite"));
        }
        if values.is_empty() {
            return Err(Error::Empty("path values"));
        }
        Ok(Self::from_parts(grid_step, values))
    }

    /// Path with an explicit terminal left limit, i.e. a jump of
    /// `values[last] - terminal_left_limit` at the final time.
    pub fn with_left_limit(grid_step: f64, values: Vec<f64>, terminal_left_limit: f64) -> Result<Self> {
        let mut p = Self::new(grid_step, values)?;
        p.terminal_left_limit = terminal_left_limit;
        Ok(p)
    }

    pub fn constant(grid_step: f64, value: f64, n_points: usize) -> Result<Self> {
        Self::new(grid_step, vec![value; n_points.max(1)])
    }

    pub(crate) fn from_parts(grid_step: f64, values: Vec<f64>) -> Self {
        let terminal_left_limit = values[values.len() - 1];
        Self {
            grid_step,
            values,
            terminal_left_limit,
        }
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of grid steps, `len() - 1`.
    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self) -> f64 {
        self.n_steps() as f64 * self.grid_step
    }

    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn terminal_left_limit(&self) -> f64 {
        self.terminal_left_limit
    }

    /// `y_t - y_{t-}`; zero unless the path has been bumped.
    pub fn terminal_jump(&self) -> f64 {
        self.terminal() - self.terminal_left_limit
    }

    pub fn view(&self) -> PathView<'_> {
        PathView {
            grid_step: self.grid_step,
            values: &self.values,
        }
    }

    /// The path stopped at grid index `index` (time `index * grid_step`), continuous at its end.
    pub fn restrict(&self, index: usize) -> DiscretePath {
        let end = index.min(self.n_steps());
        Self::from_parts(self.grid_step, self.values[..=end].to_vec())
    }

    /// The continuous path `Y_{t-}`: terminal value replaced by the left limit.
    pub fn left_limit_path(&self) -> DiscretePath {
        let mut values = self.values.clone();
        let last = values.len() - 1;
        values[last] = self.terminal_left_limit;
        Self::from_parts(self.grid_step, values)
    }

    /// Applies `f` pointwise, including to the terminal left limit.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DiscretePath {
        Self {
            grid_step: self.grid_step,
            values: self.values.iter().map(|&v| f(v)).collect(),
            terminal_left_limit: f(self.terminal_left_limit),
        }
    }

    /// Nearest grid index to time `t`, clamped to the path.
    pub fn index_of(&self, t: f64) -> usize {
        let i = (t / self.grid_step).round();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.n_steps())
        }
    }

    /// Value at the grid point nearest to `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.index_of(t)]
    }

    /// Increments used by every pathwise sum: the last grid increment ends at the left
    /// limit. The terminal jump is not included (see [`DiscretePath::terminal_jump`]).
    pub(crate) fn continuous_increment(&self, i: usize) -> f64 {
        let m = self.n_steps();
        if i + 1 == m {
            self.terminal_left_limit - self.values[i]
        } else {
            self.values[i + 1] - self.values[i]
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut Vec<f64> {
        &mut self.values
    }

    pub(crate) fn reset_left_limit(&mut self) {
        self.terminal_left_limit = self.terminal();
    }

    /// CSV row: `grid_step,v0,v1,...`. The terminal left limit is not serialized; a
    /// parsed path is continuous at its end.
    pub fn to_csv_row(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 20);
        write!(s, "{}", self.grid_step).unwrap();
        for v in &self.values {
            write!(s, ",{}", v).unwrap();
        }
        s
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let mut fields = row.trim().split(',').map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("`{}`: {}", f, e)))
        });
        let grid_step = fields.next().ok_or(Error::Empty("csv row"))??;
        let values = fields.collect::<Result<Vec<_>>>()?;
        Self::new(grid_step, values)
    }
}

/// A real-valued functional of a path. Closures `Fn(&DiscretePath) -> f64` qualify.
pub trait PathFunctional: Sync {
    fn eval(&self, path: &DiscretePath) -> Result<f64>;
}

impl<F: ?Sized> PathFunctional for F
where
    F: Fn(&DiscretePath) -> f64 + Sync,
{
    fn eval(&self, path: &DiscretePath) -> Result<f64> {
        Ok(self(path))
    }
}

fn same_grid(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() <= GRID_RTOL * a.abs().max(b.abs()) {
        Ok(())
    } else {
        Err(Error::GridMismatch { left: a, right: b })
    }
}

/// `Y_{t,δt}`: the path held at its terminal value for `extra_steps` more grid points.
pub fn flat_extension(path: &DiscretePath, extra_steps: usize) -> DiscretePath {
    if extra_steps == 0 {
        return path.clone();
    }
    let last = path.terminal();
    let mut values = Vec::with_capacity(path.len() + extra_steps);
    values.extend_from_slice(&path.values);
    values.resize(path.len() + extra_steps, last);
    DiscretePath::from_parts(path.grid_step, values)
}

/// `Y_t^h`: terminal value shifted by `h`, left limit kept.
pub fn bump(path: &DiscretePath, h: f64) -> DiscretePath {
    let mut out = path.clone();
    let last = out.values.len() - 1;
    out.values[last] += h;
    out
}

/// `Y ⊗ Z`: prefix on `[0, t]`, then the suffix's increments pasted on from `y_t`.
pub fn concatenate(prefix: &DiscretePath, suffix: &DiscretePath) -> Result<DiscretePath> {
    same_grid(prefix.grid_step, suffix.grid_step)?;
    if suffix.len() == 1 {
        return Ok(prefix.clone());
    }
    let join = prefix.terminal();
    let z0 = suffix.initial();
    let mut values = Vec::with_capacity(prefix.len() + suffix.len() - 1);
    values.extend_from_slice(&prefix.values);
    values.extend(suffix.values[1..].iter().map(|&z| z - z0 + join));
    let tail_jump = suffix.terminal_jump();
    let mut out = DiscretePath::from_parts(prefix.grid_step, values);
    out.terminal_left_limit = out.terminal() - tail_jump;
    Ok(out)
}

/// `d_Λ(Y_t, Z_s) = ||Y_{t,s-t} - Z_s||_∞ + |s - t|`.
pub fn lambda_distance(a: &DiscretePath, b: &DiscretePath) -> Result<f64> {
    same_grid(a.grid_step, b.grid_step)?;
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let short_last = short.terminal();
    let sup = long
        .values
        .iter()
        .enumerate()
        .map(|(i, &lv)| {
            let sv = short.values.get(i).copied().unwrap_or(short_last);
            (lv - sv).abs()
        })
        .fold(0.0_f64, f64::max);
    Ok(sup + (long.time() - short.time()).abs())
}

/// Left-point pathwise integral `I_h(Y_t) = ∫ h(Y_{s-}) dy_s`.
///
/// Each grid increment is weighted by `h` of the path restricted to the increment's left
/// end; a terminal jump is weighted by `h(Y_{t-})`.
pub fn pathwise_integral<F: PathFunctional + ?Sized>(h: &F, path: &DiscretePath) -> Result<f64> {
    let m = path.n_steps();
    let mut work = path.left_limit_path();
    let jump = path.terminal_jump();
    let jump_term = if jump != 0.0 { h.eval(&work)? * jump } else { 0.0 };

    let mut terms = vec![0.0; m];
    for i in (0..m).rev() {
        work.values.truncate(i + 1);
        work.terminal_left_limit = work.values[i];
        terms[i] = h.eval(&work)? * path.continuous_increment(i);
    }
    Ok(terms.iter().sum::<f64>() + jump_term)
}

/// Discrete quadratic variation: squared grid increments plus the squared terminal jump.
pub fn quadratic_variation(path: &DiscretePath) -> f64 {
    let m = path.n_steps();
    let mut qv = 0.0;
    for i in 0..m {
        let d = path.continuous_increment(i);
        qv += d * d;
    }
    let j = path.terminal_jump();
    qv + j * j
}

/// `(1 + Δy) exp{-Δy + Δy²/2}` for a terminal jump `Δy`.
pub fn jump_factor(jump: f64) -> Result<f64> {
    if jump <= -1.0 {
        return Err(Error::invalid(
            "terminal jump",
            jump,
            "must exceed -1 for the stochastic exponential to stay positive",
        ));
    }
    Ok((1.0 + jump) * (-jump + 0.5 * jump * jump).exp())
}

/// Pathwise Doléans-Dade exponential `exp{y_t - y_0 - QV/2}` times the terminal jump factor.
pub fn doleans_exponential(path: &DiscretePath) -> Result<f64> {
    let jump = path.terminal_jump();
    let factor = if jump != 0.0 { jump_factor(jump)? } else { 1.0 };
    let exponent = path.terminal() - path.initial() - 0.5 * quadratic_variation(path);
    Ok(exponent.exp() * factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(values: &[f64]) -> DiscretePath {
        DiscretePath::new(1.0, values.to_vec()).unwrap()
    }

    fn level(path: &DiscretePath) -> f64 {
        path.terminal()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(DiscretePath::new(0.0, vec![1.0]).is_err());
        assert!(DiscretePath::new(-1.0, vec![1.0]).is_err());
        assert!(DiscretePath::new(1.0, vec![]).is_err());
    }

    #[test]
    fn flat_extension_examples() {
        assert_eq!(flat_extension(&p(&[100.0]), 3).values(), &[100.0; 4]);
        let q = p(&[1.0, 2.0]);
        assert_eq!(flat_extension(&q, 0), q);

        let bumped = bump(&p(&[0.0, 1.0, 3.0]), 0.5);
        assert_eq!(bumped.terminal_left_limit(), 3.0);
        let ext = flat_extension(&bumped, 2);
        assert_eq!(ext.values(), &[0.0, 1.0, 3.5, 3.5, 3.5]);
        assert_eq!(ext.terminal_left_limit(), 3.5);
        assert_eq!(ext.time(), 4.0);
    }

    #[test]
    fn bump_examples() {
        let b = bump(&DiscretePath::new(0.5, vec![0.0, 1.0]).unwrap(), 0.25);
        assert_eq!(b.values(), &[0.0, 1.25]);
        assert_eq!(b.terminal_left_limit(), 1.0);
        assert_eq!(b.terminal_jump(), 0.25);

        let q = p(&[3.0, 1.5, 2.0]);
        assert_eq!(bump(&bump(&q, 0.7), -0.7), q);
        assert_eq!(bump(&q, 0.0), q);
    }

    #[test]
    fn concatenate_examples() {
        assert_eq!(concatenate(&p(&[5.0]), &p(&[0.0, 1.0, 2.0])).unwrap().values(), &[5.0, 6.0, 7.0]);
        assert_eq!(concatenate(&p(&[1.0, 2.0]), &p(&[2.0, 2.0])).unwrap().values(), &[1.0, 2.0, 2.0]);
        assert_eq!(concatenate(&p(&[0.0, 1.0]), &p(&[10.0, 9.0])).unwrap().values(), &[0.0, 1.0, 0.0]);
        let other = DiscretePath::new(0.5, vec![1.0, 2.0]).unwrap();
        assert!(matches!(concatenate(&p(&[1.0]), &other), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn lambda_distance_examples() {
        let a = p(&[0.0, 2.0, -1.0]);
        assert_eq!(lambda_distance(&a, &a).unwrap(), 0.0);
        let d = 0.01;
        let a = DiscretePath::new(d, vec![0.0, 0.0]).unwrap();
        let b = DiscretePath::new(d, vec![0.0]).unwrap();
        assert!((lambda_distance(&a, &b).unwrap() - d).abs() < 1e-15);
        assert_eq!(lambda_distance(&p(&[0.0, 1.0]), &p(&[0.0, 3.0])).unwrap(), 2.0);
        let other = DiscretePath::new(0.5, vec![1.0]).unwrap();
        assert!(lambda_distance(&p(&[1.0]), &other).is_err());
    }

    #[test]
    fn pathwise_integral_examples() {
        let q = p(&[2.0, 5.0, 4.0, 7.5]);
        let one = |_: &DiscretePath| 1.0;
        assert_eq!(pathwise_integral(&one, &q).unwrap(), 7.5 - 2.0);
        assert_eq!(pathwise_integral(&level, &p(&[0.0, 1.0, 0.0])).unwrap(), -1.0);
    }

    #[test]
    fn integrand_sees_left_limit_at_jump() {
        // Δ_x I_h(Y_t) = h(Y_{t-}): the jump is weighted by h of the unbumped path.
        let q = p(&[1.0, 2.0, 4.0]);
        let base = pathwise_integral(&level, &q).unwrap();
        let bumped = pathwise_integral(&level, &bump(&q, 0.5)).unwrap();
        assert!((bumped - base - 4.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn quadratic_variation_examples() {
        assert_eq!(quadratic_variation(&p(&[3.0; 5])), 0.0);
        assert_eq!(quadratic_variation(&p(&[0.0, 1.0, 0.0, 1.0])), 3.0);
        // The jump adds h² and nothing else, so the central space derivative is zero.
        let q = p(&[0.0, 1.0, 3.0]);
        let h = 1e-3;
        let up = quadratic_variation(&bump(&q, h));
        let down = quadratic_variation(&bump(&q, -h));
        assert!(((up - down) / (2.0 * h)).abs() < 1e-9);
        let second = (up - 2.0 * quadratic_variation(&q) + down) / (h * h);
        assert!((second - 2.0).abs() < 1e-6);
    }

    #[test]
    fn doleans_examples() {
        assert_eq!(doleans_exponential(&p(&[0.0; 4])).unwrap(), 1.0);

        let sigma = 0.3;
        let w = [0.0, 0.4, -0.1, 0.25, 0.9];
        let path = DiscretePath::new(0.25, w.iter().map(|v| sigma * v).collect()).unwrap();
        let expect = (sigma * w[4] - 0.5 * sigma * sigma * quadratic_variation(&DiscretePath::new(0.25, w.to_vec()).unwrap())).exp();
        assert!((doleans_exponential(&path).unwrap() - expect).abs() < 1e-14);

        let jump = 0.1;
        assert!((jump_factor(jump).unwrap() - 1.1 * (-0.1_f64 + 0.005).exp()).abs() < 1e-15);
        let bumped = bump(&p(&[0.0, 0.0]), jump);
        // exp{Δy - Δy²/2} from the continuous part cancels the compensator in the jump factor.
        assert!((doleans_exponential(&bumped).unwrap() - 1.1).abs() < 1e-14);

        assert!(doleans_exponential(&bump(&p(&[0.0]), -1.0)).is_err());
    }

    #[test]
    fn csv_row_roundtrip_is_exact() {
        let q = DiscretePath::new(1.0 / 3.0, vec![100.0, 100.1 / 3.0, f64::MIN_POSITIVE]).unwrap();
        assert_eq!(DiscretePath::from_csv_row(&q.to_csv_row()).unwrap(), q);
        assert!(DiscretePath::from_csv_row("0.1,abc").is_err());
    }
}
