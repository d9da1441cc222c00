use bloch_boussinesq::effective::AmplitudeKind;
use bloch_boussinesq::experiment::{run_validation, ExperimentConfig};

fn cfg(kind: AmplitudeKind, preset: &str, a_max: Option<f64>) -> ExperimentConfig {
    ExperimentConfig {
        kind,
        level: bloch_boussinesq::approximant::Level::Improved,
        preset: preset.into(),
        coefficients: None,
        epsilons: vec![0.15, 0.2, 0.25, 0.3],
        t0: 1.0,
        run_pde: false,
        frame: 1.0,
        a_max,
        width: None,
        points_per_cell: 16,
        residual_points_per_cell: 0,
        energy_points_per_cell: 2,
        slow_points: 128,
        cells: 0,
        cell_cutoff: 0,
        dt_safety: 0.4,
        residual_samples: 17,
        error_samples: 17,
        energy_samples: 8,
        out_dir: None,
        seed: 7,
    }
}

#[test]
fn residual_scaling_smoke() {
    for (kind, preset, amax) in [
        (AmplitudeKind::Kdv, "constant", None),
        (AmplitudeKind::Kdv, "periodic", None),
        (AmplitudeKind::Burgers, "constant", None),
        (AmplitudeKind::Burgers, "periodic", None),
        (AmplitudeKind::Whitham, "constant", Some(0.05)),
        (AmplitudeKind::Whitham, "periodic", Some(0.01)),
    ] {
        let t0 = std::time::Instant::now();
        let report = run_validation(&cfg(kind, preset, amax)).unwrap();
        print!("{:?} {preset}: ", kind);
        for f in &report.fits {
            print!("{}={:.3} ", f.name, f.fit.slope);
        }
        for c in &report.checks {
            print!("| {} ", c.line());
        }
        println!("({} failed) [{:?}]", report.failed.len(), t0.elapsed());
        for f in &report.failed {
            println!("  eps={} error: {}", f.epsilon, f.error);
        }
    }
}
