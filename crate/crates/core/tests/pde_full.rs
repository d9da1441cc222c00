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
        run_pde: true,
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
        residual_samples: 9,
        error_samples: 51,
        energy_samples: 16,
        out_dir: None,
        seed: 7,
    }
}

#[test]
fn full_pde_sweeps() {
    for (kind, preset, amax) in [
        (AmplitudeKind::Kdv, "periodic", None),
        (AmplitudeKind::Kdv, "constant", None),
        (AmplitudeKind::Burgers, "periodic", None),
        (AmplitudeKind::Whitham, "periodic", Some(0.05)),
    ] {
        let t0 = std::time::Instant::now();
        match run_validation(&cfg(kind, preset, amax)) {
            Ok(report) => {
                println!("== {:?} {preset} [{:?}]", kind, t0.elapsed());
                for f in &report.fits {
                    println!("   {} = {:.3}", f.name, f.fit.slope);
                }
                for c in &report.checks {
                    println!("   {}", c.line());
                }
                for fr in &report.failed {
                    println!("   eps={} failed: {}", fr.epsilon, fr.error);
                }
                for r in &report.runs {
                    println!(
                        "   eps={}: cells={} err={:.3e} E_sup/gamma/drift={:?}",
                        r.epsilon, r.cells, r.sup_err_h1,
                        r.gronwall.as_ref().map(|g| (g.sup_e, g.gamma, g.drift))
                    );
                }
            }
            Err(e) => println!("== {:?} {preset} FAILED: {e}", kind),
        }
    }
}
