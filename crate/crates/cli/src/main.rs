//! Command-line front end: band structure export, effective-model
//! computation, full-PDE simulation, residual sweeps, theorem validation,
//! energy audits and the Bloch self-test.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use bloch_boussinesq::approximant::Level;
use bloch_boussinesq::coeffs::PeriodicCoefficients;
use bloch_boussinesq::effective::{AmplitudeKind, EffectiveModel};
use bloch_boussinesq::experiment::{dispersion_csv, run_validation, ExperimentConfig};
use bloch_boussinesq::selftest;

#[derive(Parser)]
#[command(
    name = "bloch-boussinesq",
    about = "Bloch band analysis and amplitude-equation validation for a periodic Boussinesq model",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML experiment configuration; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Amplitude equation: kdv | burgers | whitham.
    #[arg(long)]
    kind: Option<String>,
    /// Coefficient preset: constant | periodic | mixed.
    #[arg(long)]
    preset: Option<String>,
    /// Ansatz level: leading | improved.
    #[arg(long)]
    level: Option<String>,
    /// Comma-separated ε sweep, e.g. 0.15,0.2,0.25,0.3.
    #[arg(long)]
    epsilons: Option<String>,
    /// Slow-time horizon T0.
    #[arg(long)]
    t0: Option<f64>,
    /// Frame sign (+1, -1; omit to pick empirically).
    #[arg(long)]
    frame: Option<f64>,
    /// Gaussian amplitude of the initial profile.
    #[arg(long)]
    a_max: Option<f64>,
    /// Gaussian width of the initial profile.
    #[arg(long)]
    width: Option<f64>,
    /// Output directory (defaults to $BB_OUT_DIR or ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self, default_kind: AmplitudeKind, run_pde: bool) -> bloch_boussinesq::Result<ExperimentConfig> {
        let mut cfg = if let Some(path) = &self.config {
            ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?
        } else {
            ExperimentConfig {
                kind: default_kind,
                level: Level::Improved,
                preset: "constant".into(),
                coefficients: None,
                epsilons: vec![0.15, 0.2, 0.25, 0.3],
                t0: 1.0,
                run_pde,
                frame: 0.0,
                a_max: None,
                width: None,
                points_per_cell: 16,
                residual_points_per_cell: 0,
                energy_points_per_cell: 2,
                slow_points: 128,
                cells: 0,
                cell_cutoff: 0,
                dt_safety: 0.4,
                residual_samples: 64,
                error_samples: 64,
                energy_samples: 20,
                out_dir: None,
                seed: 7,
            }
        };
        if let Some(kind) = &self.kind {
            cfg.kind = match kind.as_str() {
                "kdv" => AmplitudeKind::Kdv,
                "burgers" => AmplitudeKind::Burgers,
                "whitham" => AmplitudeKind::Whitham,
                other => {
                    return Err(bloch_boussinesq::Error::Config(format!(
                        "unknown kind '{other}'"
                    )))
                }
            };
        }
        if let Some(p) = &self.preset {
            cfg.preset = p.clone();
        }
        if let Some(l) = &self.level {
            cfg.level = match l.as_str() {
                "leading" => Level::Leading,
                "improved" => Level::Improved,
                other => {
                    return Err(bloch_boussinesq::Error::Config(format!(
                        "unknown level '{other}'"
                    )))
                }
            };
        }
        if let Some(e) = &self.epsilons {
            cfg.epsilons = e
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bloch_boussinesq::Error::Config(format!("bad epsilon list: {e}")))?;
        }
        if let Some(t0) = self.t0 {
            cfg.t0 = t0;
        }
        if let Some(f) = self.frame {
            cfg.frame = f;
        }
        if self.a_max.is_some() {
            cfg.a_max = self.a_max;
        }
        if self.width.is_some() {
            cfg.width = self.width;
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
            .or_else(|| std::env::var("BB_OUT_DIR").ok().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));
        cfg.out_dir = Some(out.to_string_lossy().into_owned());
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Export the first Bloch bands λ_n(l) as CSV.
    Dispersion {
        #[arg(long, default_value = "periodic")]
        preset: String,
        #[arg(long, default_value_t = 4)]
        bands: usize,
        #[arg(long, default_value_t = 201)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the effective model (c, λ₁'''', ν₂, s₂, g₁, δ₀) as JSON.
    Effective {
        #[arg(long, default_value = "periodic")]
        preset: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Well-prepared full-PDE run over the natural window (error + energy).
    Simulate(ConfigArgs),
    /// Residual-scaling sweep only (no PDE evolution).
    Residual(ConfigArgs),
    /// Full validation: residual, error and energy meters plus slope checks.
    Validate(ConfigArgs),
    /// Energy/Gronwall audit of a validation run (alias of simulate).
    Energy(ConfigArgs),
    /// Bloch-transform identities and oracle equivalences on random fields.
    BlochSelftest {
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn print_report(report: &bloch_boussinesq::report::ScalingReport) {
    println!(
        "kind={} level={} preset={} frame={:+} width={} a_max={}",
        report.kind,
        report.level,
        report.preset,
        report.frame,
        report.profile_width,
        report.profile_a_max
    );
    println!(
        "model: c={:.6} lambda4={:.6} nu2={:.6} s2={:.6} delta0={:.4}",
        report.model_summary.wave_speed,
        report.model_summary.lambda4,
        report.model_summary.nu2,
        report.model_summary.whitham_s2,
        report.model_summary.delta0
    );
    for fit in &report.fits {
        println!(
            "fit {}: slope {:.4} (stderr {:.4}, residual {:.2e})",
            fit.name, fit.fit.slope, fit.fit.stderr, fit.fit.residual
        );
    }
    for check in &report.checks {
        println!("{}", check.line());
    }
    for failed in &report.failed {
        println!("[FAIL] eps={} aborted: {}", failed.epsilon, failed.error);
    }
}

fn main() {
    let cli = Cli::parse();
    let outcome: bloch_boussinesq::Result<()> = match cli.command {
        Command::Dispersion { preset, bands, samples, out } => (|| {
            let coeffs = PeriodicCoefficients::preset(&preset)?;
            let cutoff = EffectiveModel::default_cutoff(&coeffs);
            let csv = dispersion_csv(&coeffs, bands, samples, cutoff)?;
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        })(),
        Command::Effective { preset, out } => (|| {
            let coeffs = PeriodicCoefficients::preset(&preset)?;
            let cutoff = EffectiveModel::default_cutoff(&coeffs);
            let model = EffectiveModel::compute(&coeffs, cutoff, 1e-3)?;
            let json = model.to_json();
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            Ok(())
        })(),
        Command::Simulate(args) | Command::Energy(args) => (|| {
            let cfg = args.resolve(AmplitudeKind::Kdv, true)?;
            let report = run_validation(&cfg)?;
            print_report(&report);
            println!("outputs in {}", cfg.out_dir.unwrap());
            Ok(())
        })(),
        Command::Residual(args) => (|| {
            let mut cfg = args.resolve(AmplitudeKind::Kdv, false)?;
            cfg.run_pde = false;
            let report = run_validation(&cfg)?;
            print_report(&report);
            println!("outputs in {}", cfg.out_dir.unwrap());
            Ok(())
        })(),
        Command::Validate(args) => (|| {
            let cfg = args.resolve(AmplitudeKind::Kdv, true)?;
            let report = run_validation(&cfg)?;
            print_report(&report);
            println!("outputs in {}", cfg.out_dir.unwrap());
            if !report.all_passed() {
                std::process::exit(2);
            }
            Ok(())
        })(),
        Command::BlochSelftest { draws, seed } => (|| {
            let mut ok = true;
            for check in selftest::bloch_selftest(draws, seed)
                .into_iter()
                .chain(selftest::oracle_selftest(seed))
            {
                println!("{}", check.line());
                ok &= check.passed;
            }
            if !ok {
                std::process::exit(2);
            }
            Ok(())
        })(),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
