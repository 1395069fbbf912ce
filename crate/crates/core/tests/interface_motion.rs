//! Short end-to-end interface tracking through the harness: the zero path
//! exists at every checkpoint, never teleports between checkpoints, and the
//! per-path CSV series land on disk.

mod common;

use acsharp::harness::{
    run_experiment, ExperimentConfig, ExperimentKind, GridConfig, InitialConfig, LimitSdeConfig,
    ReactionConfig,
};

fn track_config() -> ExperimentConfig {
    ExperimentConfig {
        experiment: ExperimentKind::TrackInterface,
        root_seed: 21,
        paths: 4,
        eps_list: vec![0.02],
        gamma: 1.0,
        kappa: 1.05,
        alpha: 0.6,
        c1: 0.9,
        reaction: ReactionConfig {
            kind: "cubic".into(),
            c0: 1.5,
            ..Default::default()
        },
        grid: GridConfig {
            dim: 1,
            extent: 8.0,
            nodes: 512,
            boundary: "farfield".into(),
        },
        initial: InitialConfig {
            kind: "tanh".into(),
            center: 0.3,
            slope: 1.0,
            ..Default::default()
        },
        limit_sde: LimitSdeConfig {
            // short rescaled horizon keeps this a smoke-scale run
            t_end: 0.002,
            track_checkpoints: 21,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn tracked_zero_is_continuous_and_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&track_config(), Some(dir.path())).unwrap();
    assert_eq!(report.outcomes.len(), 4);
    for o in &report.outcomes {
        assert!(o.pass, "path {} failed: {:?}", o.path, o.failure);
    }
    for p in 0..4 {
        let csv = std::fs::read_to_string(dir.path().join(format!("interface_{p:04}.csv")))
            .expect("interface csv");
        let mut prev_xi: Option<f64> = None;
        let mut rows = 0;
        for line in csv.lines().skip(1) {
            let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            let (xi, l2) = (cols[1], cols[2]);
            assert!(xi.abs() <= 1.0, "interface left [-1, 1]: {xi}");
            assert!(l2.is_finite() && l2 > 0.0);
            if let Some(prev) = prev_xi {
                // no teleporting between adjacent checkpoints
                assert!(
                    (xi - prev).abs() <= 0.2,
                    "zero jumped from {prev} to {xi}"
                );
            }
            prev_xi = Some(xi);
            rows += 1;
        }
        assert_eq!(rows, 21);
    }
}
