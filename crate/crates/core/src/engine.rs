//! Path sources and deterministic parallel reductions over them.
//!
//! Paths are grouped into fixed-size chunks by index. Each chunk is reduced sequentially,
//! and chunk results are merged by a pairwise tree in chunk order, so an estimate depends
//! only on the seed and path count, never on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::path::DiscretePath;

/// Paths per reduction chunk.
pub const CHUNK_SIZE: usize = 512;

/// One simulated path with everything the weight estimators need.
///
/// `dw`, `sigma` and `dsigma` are indexed by step `k` (interval `[t_k, t_{k+1})`); `z`
/// and the path values are indexed by grid point. Steps before `start` belong to a fixed
/// prefix: their Brownian increments are zero and the tangent process is held at 1.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub path: DiscretePath,
    pub dw: Vec<f64>,
    pub z: Vec<f64>,
    pub sigma: Vec<f64>,
    pub dsigma: Vec<f64>,
    pub start: usize,
}

impl PathSample {
    pub fn new(grid_step: f64, n_steps: usize, start: usize) -> Self {
        Self {
            path: DiscretePath::from_parts(grid_step, vec![0.0; n_steps + 1]),
            dw: vec![0.0; n_steps],
            z: vec![1.0; n_steps + 1],
            sigma: vec![0.0; n_steps],
            dsigma: vec![0.0; n_steps],
            start,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.dw.len()
    }

    pub fn grid_step(&self) -> f64 {
        self.path.grid_step()
    }

    pub fn maturity(&self) -> f64 {
        self.path.time()
    }

    pub fn start_time(&self) -> f64 {
        self.start as f64 * self.grid_step()
    }

    /// Brownian motion accumulated since `start`.
    pub fn brownian_terminal(&self) -> f64 {
        self.dw[self.start..].iter().sum()
    }
}

/// Anything that can produce path `i` of a Monte Carlo batch on demand.
pub trait PathSource: Sync {
    fn n_paths(&self) -> usize;
    fn n_steps(&self) -> usize;
    fn grid_step(&self) -> f64;
    /// Index of the first simulated step (zero unless simulating from a prefix).
    fn start(&self) -> usize;
    fn seed(&self) -> u64;
    fn sample_into(&self, index: usize, out: &mut PathSample) -> Result<()>;

    fn new_sample(&self) -> PathSample {
        PathSample::new(self.grid_step(), self.n_steps(), self.start())
    }

    fn maturity(&self) -> f64 {
        self.n_steps() as f64 * self.grid_step()
    }
}

/// Streaming mean/variance (Welford), mergeable with Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let w = other.count as f64 / count as f64;
        Self {
            count,
            mean: self.mean + delta * w,
            m2: self.m2 + other.m2 + delta * delta * self.count as f64 * w,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// A Monte Carlo estimate with its standard error and provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: u64,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_stats(stats: &RunningStats, seed: u64) -> Self {
        Self {
            mean: stats.mean,
            std_error: stats.std_error(),
            n_paths: stats.count,
            seed,
        }
    }

    pub fn relative_error(&self) -> f64 {
        self.std_error / self.mean.abs()
    }

    /// `|self - value|` in units of this estimate's standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.mean - value).abs() / self.std_error
    }

    /// `|self - other|` in units of the combined standard error.
    pub fn combined_z(&self, other_mean: f64, other_se: f64) -> f64 {
        (self.mean - other_mean).abs() / self.std_error.hypot(other_se)
    }

    pub fn sum(&self, other: &McEstimate) -> McEstimate {
        McEstimate {
            mean: self.mean + other.mean,
            std_error: self.std_error.hypot(other.std_error),
            n_paths: self.n_paths.min(other.n_paths),
            seed: self.seed,
        }
    }

    pub const CSV_HEADER: &'static str = "label,mean,std_error,n_paths,seed";

    pub fn csv_row(&self, label: &str) -> String {
        format!("{},{},{},{},{}", label, self.mean, self.std_error, self.n_paths, self.seed)
    }
}

pub(crate) fn tree_merge<T: Clone>(items: &[T], merge: &impl Fn(&T, &T) -> T) -> Option<T> {
    match items.len() {
        0 => None,
        1 => Some(items[0].clone()),
        n => {
            let (l, r) = items.split_at(n / 2);
            Some(merge(&tree_merge(l, merge)?, &tree_merge(r, merge)?))
        }
    }
}

/// Per-chunk reduction: `init` builds an empty accumulator, `visit` folds one path in.
/// Returns one accumulator per chunk, in path order.
pub fn reduce_chunks<S, A, I, V>(source: &S, init: I, visit: V) -> Result<Vec<A>>
where
    S: PathSource + ?Sized,
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, usize, &PathSample) -> Result<()> + Sync,
{
    let n = source.n_paths();
    let n_chunks = n.div_ceil(CHUNK_SIZE);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut sample = source.new_sample();
            let mut acc = init();
            for i in c * CHUNK_SIZE..((c + 1) * CHUNK_SIZE).min(n) {
                source.sample_into(i, &mut sample)?;
                visit(&mut acc, i, &sample)?;
            }
            Ok(acc)
        })
        .collect()
}

/// Result of [`reduce_paths`]: totals per output column plus the per-chunk statistics
/// used for convergence tables.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub totals: Vec<RunningStats>,
    pub chunks: Vec<Vec<RunningStats>>,
    pub seed: u64,
}

impl Reduction {
    pub fn estimate(&self, column: usize) -> McEstimate {
        McEstimate::from_stats(&self.totals[column], self.seed)
    }

    /// Running estimates of `column` at (roughly) log-spaced path counts. Counts are
    /// rounded up to chunk boundaries; the last row is always the full batch.
    pub fn convergence(&self, column: usize, points_per_decade: usize) -> Vec<McEstimate> {
        let mut targets: Vec<u64> = Vec::new();
        let total: u64 = self.totals[column].count;
        let per = points_per_decade.max(1) as f64;
        let mut k = 0;
        loop {
            let t = 10f64.powf(2.0 + k as f64 / per).round() as u64;
            if t >= total {
                break;
            }
            targets.push(t);
            k += 1;
        }
        targets.push(total);

        let mut out = Vec::new();
        let mut acc = RunningStats::default();
        let mut next = 0;
        for chunk in &self.chunks {
            acc = acc.merge(&chunk[column]);
            while next < targets.len() && acc.count >= targets[next] {
                if out.last().map_or(true, |e: &McEstimate| e.n_paths != acc.count) {
                    out.push(McEstimate::from_stats(&acc, self.seed));
                }
                next += 1;
            }
        }
        out
    }
}

/// Evaluates `width` per-path quantities and reduces each to a mean and standard error.
/// A non-finite per-path value is an error naming the path.
pub fn reduce_paths<S, F>(source: &S, width: usize, per_path: F) -> Result<Reduction>
where
    S: PathSource + ?Sized,
    F: Fn(usize, &PathSample, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = reduce_chunks(
        source,
        || (vec![RunningStats::default(); width], vec![0.0; width]),
        |(stats, buf), i, sample| {
            per_path(i, sample, buf)?;
            for (s, &x) in stats.iter_mut().zip(buf.iter()) {
                if !x.is_finite() {
                    return Err(Error::NonFinite {
                        path: i,
                        step: sample.n_steps(),
                    });
                }
                s.push(x);
            }
            Ok(())
        },
    )?;
    let chunks: Vec<Vec<RunningStats>> = chunks.into_iter().map(|(s, _)| s).collect();
    let totals = tree_merge(&chunks, &|a: &Vec<RunningStats>, b: &Vec<RunningStats>| {
        a.iter().zip(b).map(|(x, y)| x.merge(y)).collect()
    })
    .unwrap_or_else(|| vec![RunningStats::default(); width]);
    Ok(Reduction {
        totals,
        chunks,
        seed: source.seed(),
    })
}

/// Sums per-chunk vectors elementwise in chunk order.
pub(crate) fn sum_in_order(chunks: Vec<Vec<f64>>, width: usize) -> Vec<f64> {
    tree_merge(&chunks, &|a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .unwrap_or_else(|| vec![0.0; width])
}
