//! The `run`, `classify` and `dump-paths` verbs. Each writes CSV files into an output
//! directory and returns what it wrote so callers can inspect results without parsing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};
use pathgreeks::greeks::{
    evaluate, fd_greek, strong_correction, vega_surface, FdGreek, NestedPricer, SeededPrice, StrongCorrectionConfig,
    SurfaceBins,
};
use pathgreeks::rng::derive_seed;
use pathgreeks::{simulate, DerivativeConfig, GreekRequest, McEstimate, PathDependenceClass, Simulator};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const RESULTS_FILE: &str = "results.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const SURFACE_FILE: &str = "vega_surface.csv";
pub const EVIDENCE_FILE: &str = "classify_evidence.csv";
pub const LABEL_FILE: &str = "classification.txt";
pub const PATHS_FILE: &str = "paths.csv";

/// Default relative standard error above which an inner price evaluation is flagged.
const MAX_INNER_REL_SE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rows: Vec<(String, McEstimate)>,
}

impl RunSummary {
    pub fn get(&self, label: &str) -> Option<McEstimate> {
        self.rows.iter().find(|(l, _)| l == label).map(|(_, e)| *e)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", McEstimate::CSV_HEADER);
        for (label, e) in &self.rows {
            out.push_str(&e.csv_row(label));
            out.push('\n');
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<22} {:>14} {:>12} {:>10}\n", "label", "mean", "std_error", "n_paths");
        for (label, e) in &self.rows {
            let _ = writeln!(out, "{:<22} {:>14.6} {:>12.6} {:>10}", label, e.mean, e.std_error, e.n_paths);
        }
        out
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn simulator(cfg: &ExperimentConfig, n_paths: usize) -> Result<Simulator, CliError> {
    Ok(Simulator::new(
        cfg.volatility_model(),
        cfg.x0(),
        cfg.horizon(),
        cfg.mc.n_steps,
        n_paths,
        cfg.mc.seed,
    )?)
}

fn check_finite(rows: &[(String, McEstimate)]) -> Result<(), CliError> {
    match rows.iter().find(|(_, e)| !e.mean.is_finite()) {
        Some((label, e)) => Err(CliError::Numerical(format!("{} is not finite ({})", label, e.mean))),
        None => Ok(()),
    }
}

/// Runs the requested estimators and writes the results, convergence and (when
/// configured) Vega surface CSVs into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary, CliError> {
    let model = cfg.volatility_model();
    let contract = cfg.contract()?;
    let sim = simulator(cfg, cfg.mc.n_paths)?;
    let req = GreekRequest {
        delta: cfg.weight_spec()?,
        gamma: cfg.greeks.gamma,
        vega: cfg.vega_direction(),
        baseline: cfg.greeks.baseline,
    };
    info!("{} under {}: {} paths x {} steps", contract.label(), model.label(), cfg.mc.n_paths, cfg.mc.n_steps);
    let report = evaluate(&sim, &contract, &model, &req)?;

    let mut rows: Vec<(String, McEstimate)> = report.estimates().into_iter().map(|(l, e)| (l.to_string(), e)).collect();

    let mut convergence = String::from("label,n_paths,mean,std_error\n");
    for (c, label) in report.labels.iter().enumerate() {
        for e in report.reduction.convergence(c, cfg.output.points_per_decade) {
            let _ = writeln!(convergence, "{},{},{},{}", label, e.n_paths, e.mean, e.std_error);
        }
    }

    if let Some(fd) = &cfg.greeks.fd {
        if let Some(b) = fd.delta_bump {
            rows.push(("fd_delta".into(), fd_greek(&sim, &contract, &FdGreek::Delta, b)?));
        }
        if let Some(b) = fd.gamma_bump {
            rows.push(("fd_gamma".into(), fd_greek(&sim, &contract, &FdGreek::Gamma, b)?));
        }
        if let Some(b) = fd.vega_bump {
            let dir = cfg
                .vega_direction()
                .ok_or_else(|| CliError::Validation("greeks.fd.vega_bump needs a [greeks.vega] direction".into()))?;
            rows.push(("fd_vega".into(), fd_greek(&sim, &contract, &FdGreek::Vega(dir), b)?));
        }
    }

    if let Some(sc) = &cfg.strong {
        let outer = simulator(cfg, sc.outer_paths)?;
        let pricer = NestedPricer {
            model: model.clone(),
            contract: contract.clone(),
            horizon: cfg.horizon(),
            n_steps: cfg.mc.n_steps,
            inner_paths: sc.inner_paths,
        };
        let scfg = StrongCorrectionConfig {
            s_stride: sc.s_stride,
            max_inner_rel_se: sc.max_inner_rel_se.unwrap_or(MAX_INNER_REL_SE),
            ..Default::default()
        };
        let c = strong_correction(&outer, &pricer, &scfg)?;
        if c.flagged > 0 {
            warn!("{} of {} inner price evaluations exceeded the standard error threshold", c.flagged, c.evaluations);
        }
        rows.push(("strong_correction".into(), c.estimate));
        if let Some(d) = report.get("delta") {
            rows.push(("delta_corrected".into(), d.sum(&c.estimate)));
        }
    }

    check_finite(&rows)?;
    let summary = RunSummary { rows };
    write(out, RESULTS_FILE, &summary.to_csv())?;
    write(out, CONVERGENCE_FILE, &convergence)?;

    if let Some(s) = &cfg.surface {
        let mut bins = SurfaceBins::uniform(s.x_low, s.x_high, s.n_bins, s.time_stride)?;
        if let Some(m) = s.min_occupancy {
            bins.min_occupancy = m;
        }
        let surface = vega_surface(&sim, &contract, &model, &bins)?;
        write(out, SURFACE_FILE, &surface.to_csv())?;
    }
    Ok(summary)
}

/// Classifies the price functional `f(Y_t) = E[g | Y_t]`, computed by nested simulation
/// with a fixed inner seed, on simulated probe paths.
pub fn classify(cfg: &ExperimentConfig, out: &Path) -> Result<PathDependenceClass, CliError> {
    let cc = cfg
        .classify
        .as_ref()
        .ok_or_else(|| CliError::Validation("classify needs a [classify] section".into()))?;
    let model = cfg.volatility_model();
    let contract = cfg.contract()?;
    let probes = simulate(&model, cfg.x0(), cfg.horizon(), cfg.mc.n_steps, cc.probe_paths, cfg.mc.seed)?;
    let pricer = NestedPricer {
        model,
        contract,
        horizon: cfg.horizon(),
        n_steps: cfg.mc.n_steps,
        inner_paths: cc.inner_paths,
    };
    let seeded = SeededPrice::new(&pricer, derive_seed(cfg.mc.seed, 1, 0), MAX_INNER_REL_SE);
    let mut dcfg = DerivativeConfig::default();
    if let Some(h) = cc.h {
        dcfg.h = h;
    }
    if let Some(k) = cc.dt_steps {
        dcfg.dt_steps = k;
    }
    let class = pathgreeks::classify(&seeded, &probes.paths, &cc.probe_times, &dcfg, cc.tolerance)?;
    write(out, EVIDENCE_FILE, &class.evidence_csv())?;
    write(out, LABEL_FILE, &format!("{}\n", class.kind.label()))?;
    Ok(class)
}

/// Simulates `mc.n_paths` paths and writes them with their Brownian increments and tangent.
pub fn dump_paths(cfg: &ExperimentConfig, out: &Path) -> Result<usize, CliError> {
    let batch = simulator(cfg, cfg.mc.n_paths)?.materialize()?;
    write(out, PATHS_FILE, &batch.to_csv())?;
    Ok(batch.len())
}
