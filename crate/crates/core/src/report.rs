//! Scaling reports: per-ε records, fitted slopes, pass/fail checks, and the
//! CSV/JSON/gnuplot emission with deterministic formatting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyRow, GronwallReport};
use crate::error::Result;
use crate::fitting::FitResult;
use crate::residual::ResidualTrace;

/// One sampled approximation-error row.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ErrorRow {
    pub t: f64,
    pub err_h1: f64,
    pub err_h2: f64,
}

/// Everything measured at one ε.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub epsilon: f64,
    pub cells: usize,
    pub t_end: f64,
    pub frame: f64,
    pub residual: ResidualTrace,
    pub errors: Vec<ErrorRow>,
    pub energy: Vec<EnergyRow>,
    pub gronwall: Option<GronwallReport>,
    /// Sup over the window of the traced norms, for the fits.
    pub sup_res_l2: f64,
    pub sup_res_h1: f64,
    pub sup_ires_l2: f64,
    pub sup_ires_h1: f64,
    pub sup_err_h1: f64,
    pub sup_err_h2: f64,
}

/// A run that failed, with its error preserved.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailedRun {
    pub epsilon: f64,
    pub error: String,
}

/// One named threshold check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tol: f64,
    /// "two_sided", "at_least", or "at_most".
    pub mode: String,
    pub passed: bool,
}

impl CheckResult {
    pub fn two_sided(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tol,
            mode: "two_sided".into(),
            passed: (value - target).abs() <= tol,
        }
    }

    pub fn at_least(name: &str, value: f64, floor: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: floor,
            tol: 0.0,
            mode: "at_least".into(),
            passed: value >= floor,
        }
    }

    pub fn at_most(name: &str, value: f64, ceil: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: ceil,
            tol: 0.0,
            mode: "at_most".into(),
            passed: value <= ceil,
        }
    }

    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        match self.mode.as_str() {
            "two_sided" => format!(
                "[{status}] {}: {:.4} (target {:.4} ± {:.2})",
                self.name, self.value, self.target, self.tol
            ),
            "at_least" => format!(
                "[{status}] {}: {:.4} (>= {:.4})",
                self.name, self.value, self.target
            ),
            _ => format!(
                "[{status}] {}: {:.4e} (<= {:.4e})",
                self.name, self.value, self.target
            ),
        }
    }
}

/// Full validation report for one experiment configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    pub kind: String,
    pub level: String,
    pub preset: String,
    pub frame: f64,
    pub profile_a_max: f64,
    pub profile_width: f64,
    pub t0: f64,
    pub epsilons: Vec<f64>,
    pub model_summary: ModelSummary,
    pub runs: Vec<RunRecord>,
    pub failed: Vec<FailedRun>,
    pub fits: Vec<NamedFit>,
    pub checks: Vec<CheckResult>,
    pub schema_version: u32,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelSummary {
    pub wave_speed: f64,
    pub lambda2: f64,
    pub lambda4: f64,
    pub nu2: f64,
    pub whitham_s2: f64,
    pub delta0: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedFit {
    pub name: String,
    pub fit: FitResult,
    pub pairs: Vec<(f64, f64)>,
}

impl ScalingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn fit(&self, name: &str) -> Option<&NamedFit> {
        self.fits.iter().find(|f| f.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Write CSV tables, gnuplot-ready fit data and the JSON summary.
    pub fn emit(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();

        let mut residual_csv = String::from(ResidualTrace::csv_header());
        for run in &self.runs {
            residual_csv.push_str(&run.residual.csv_rows());
        }
        let p = dir.join("residual_trace.csv");
        std::fs::write(&p, residual_csv)?;
        written.push(p);

        let mut error_csv = String::from("epsilon,t,err_h1,err_h2\n");
        for run in &self.runs {
            for r in &run.errors {
                error_csv.push_str(&format!(
                    "{:.17e},{:.17e},{:.17e},{:.17e}\n",
                    run.epsilon, r.t, r.err_h1, r.err_h2
                ));
            }
        }
        let p = dir.join("error_trace.csv");
        std::fs::write(&p, error_csv)?;
        written.push(p);

        let mut energy_csv = String::from("epsilon,t,E,H\n");
        for run in &self.runs {
            for r in &run.energy {
                energy_csv.push_str(&format!(
                    "{:.17e},{:.17e},{:.17e},{:.17e}\n",
                    run.epsilon, r.t, r.e, r.h
                ));
            }
        }
        let p = dir.join("energy_trace.csv");
        std::fs::write(&p, energy_csv)?;
        written.push(p);

        for fit in &self.fits {
            let mut dat = String::from("# epsilon  value  (log-log fit: slope, intercept below)\n");
            dat.push_str(&format!(
                "# slope {:.17e} intercept {:.17e} residual {:.17e}\n",
                fit.fit.slope, fit.fit.intercept, fit.fit.residual
            ));
            for (e, v) in &fit.pairs {
                dat.push_str(&format!("{e:.17e} {v:.17e}\n"));
            }
            let p = dir.join(format!("loglog_{}.dat", fit.name));
            std::fs::write(&p, dat)?;
            written.push(p);
        }

        let p = dir.join("summary.json");
        std::fs::write(&p, self.to_json())?;
        written.push(p);
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximant::Level;

    fn tiny_report() -> ScalingReport {
        let trace = ResidualTrace {
            epsilon: 0.2,
            kind: "kdv".into(),
            level: Level::Improved,
            rows: vec![crate::residual::ResidualRow {
                t: 0.0,
                res_l2: 1e-5,
                res_h1: 2e-5,
                ires_l2: 5e-5,
                ires_h1: 6e-5,
            }],
        };
        ScalingReport {
            kind: "kdv".into(),
            level: "improved".into(),
            preset: "constant".into(),
            frame: 1.0,
            profile_a_max: 1.0,
            profile_width: 16.0,
            t0: 1.0,
            epsilons: vec![0.2, 0.3],
            model_summary: ModelSummary {
                wave_speed: 1.0,
                lambda2: 2.0,
                lambda4: 24.0,
                nu2: -1.0,
                whitham_s2: 2.0,
                delta0: 0.49,
            },
            runs: vec![RunRecord {
                epsilon: 0.2,
                cells: 128,
                t_end: 125.0,
                frame: 1.0,
                residual: trace,
                errors: vec![ErrorRow { t: 0.0, err_h1: 1e-3, err_h2: 2e-3 }],
                energy: vec![EnergyRow { t: 0.0, e: 0.0, h: 1.0 }],
                gronwall: None,
                sup_res_l2: 1e-5,
                sup_res_h1: 2e-5,
                sup_ires_l2: 5e-5,
                sup_ires_h1: 6e-5,
                sup_err_h1: 1e-3,
                sup_err_h2: 2e-3,
            }],
            failed: vec![FailedRun { epsilon: 0.3, error: "BlowUp".into() }],
            fits: vec![NamedFit {
                name: "res_h1".into(),
                fit: crate::fitting::fit_convergence_rate(&[(0.2, 1e-5), (0.3, 2e-5)]).unwrap(),
                pairs: vec![(0.2, 1e-5), (0.3, 2e-5)],
            }],
            checks: vec![CheckResult::two_sided("res_h1_slope", 7.4, 7.5, 0.5)],
            schema_version: 1,
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let report = tiny_report();
        let back = ScalingReport::from_json(&report.to_json()).unwrap();
        assert_eq!(report.to_json(), back.to_json());
        assert!(back.check("res_h1_slope").unwrap().passed);
        assert_eq!(back.failed.len(), 1);
    }

    #[test]
    fn emission_is_deterministic() {
        let report = tiny_report();
        let dir1 = std::env::temp_dir().join("bb_report_a");
        let dir2 = std::env::temp_dir().join("bb_report_b");
        report.emit(&dir1).unwrap();
        report.emit(&dir2).unwrap();
        for name in ["residual_trace.csv", "error_trace.csv", "summary.json", "loglog_res_h1.dat"] {
            let a = std::fs::read(dir1.join(name)).unwrap();
            let b = std::fs::read(dir2.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical emissions");
        }
    }
}
