use pathgreeks::funcderiv::{classify, running_integral};
use pathgreeks::{simulate, DerivativeConfig, DiscretePath, PathDependenceKind, VolatilityModel};

fn brownian_probes() -> Vec<DiscretePath> {
    simulate(&VolatilityModel::bachelier(1.0), 1.0, 1.0, 100, 20, 31).unwrap().paths
}

fn probe_times() -> Vec<f64> {
    (0..10).map(|i| 0.05 + 0.1 * i as f64).collect()
}

#[test]
fn square_of_terminal_value_is_weakly_path_dependent() {
    let f = |p: &DiscretePath| p.terminal().powi(2);
    let c = classify(&f, &brownian_probes(), &probe_times(), &DerivativeConfig::default(), 1e-2).unwrap();
    assert_eq!(c.kind, PathDependenceKind::Weakly);
    assert_eq!(c.evidence.len(), 10);
}

#[test]
fn running_integral_is_strongly_path_dependent() {
    let c = classify(&running_integral, &brownian_probes(), &probe_times(), &DerivativeConfig::default(), 1e-2).unwrap();
    assert_eq!(c.kind, PathDependenceKind::Strongly);
    assert!(c.evidence.iter().all(|e| (e.magnitude - 1.0).abs() < 1e-3));
    assert!(c.evidence_csv().starts_with("time,abs_bracket\n"));
}

#[test]
fn two_date_product_is_flagged_at_its_monitoring_date() {
    let t1: f64 = 0.35;
    let f = move |p: &DiscretePath| p.value_at(t1.min(p.time())) * p.terminal();
    let c = classify(&f, &brownian_probes(), &probe_times(), &DerivativeConfig::default(), 1e-2).unwrap();
    match c.kind {
        PathDependenceKind::DiscretelyMonitored(ts) => {
            assert_eq!(ts.len(), 1);
            assert!((ts[0] - t1).abs() < 1e-9);
        }
        other => panic!("unexpected {:?}", other),
    }
}
