//! One function per subcommand: run the scenario, write its files into the
//! output directory and hand back the report.

use std::path::Path;

use fbm_mkv::fokker_planck::{write_moments_csv, write_solution_csv};
use log::info;

use crate::config::ScenarioConfig;
use crate::output::{write_atomic, write_with};
use crate::report::ValidationReport;
use crate::scenarios;
use crate::CliError;

/// Whether the command's exit code follows the report's pass flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Report,
    RuntimeOnly,
}

#[derive(Debug)]
pub struct Outcome {
    pub report: ValidationReport,
    pub gate: Gate,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self.gate {
            Gate::Report if !self.report.passed() => 1,
            _ => 0,
        }
    }
}

fn write_report(out: &Path, report: &ValidationReport) -> Result<(), CliError> {
    write_atomic(out, "report.csv", report.to_csv().as_bytes())?;
    write_atomic(out, "report.txt", report.to_text().as_bytes())?;
    Ok(())
}

fn write_config(out: &Path, cfg: &ScenarioConfig) -> Result<(), CliError> {
    let text: String = cfg
        .to_key_values()
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    write_atomic(out, "config.txt", text.as_bytes())?;
    Ok(())
}

pub fn sample_fbm(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, CliError> {
    let (paths, surface, report) = scenarios::sample_fbm_check(cfg)?;
    write_atomic(out, "paths.csv", scenarios::paths_csv(&paths).as_bytes())?;
    write_atomic(
        out,
        "covariance.csv",
        scenarios::covariance_csv(&surface).as_bytes(),
    )?;
    write_report(out, &report)?;
    Ok(Outcome {
        report,
        gate: Gate::RuntimeOnly,
    })
}

pub fn validate(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, CliError> {
    let run = scenarios::validate(cfg)?;
    write_with(out, "fp_solution.csv", |w| {
        write_solution_csv(&run.fp.states, w)
    })?;
    write_with(out, "fp_moments.csv", |w| {
        write_moments_csv(&run.fp.states, w)
    })?;
    write_with(out, "target_density.csv", |w| run.target.write_csv(w))?;
    write_config(out, cfg)?;
    write_report(out, &run.report)?;
    Ok(Outcome {
        report: run.report,
        gate: Gate::Report,
    })
}

pub fn m2_table(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, CliError> {
    let rows = scenarios::m2_table(&cfg.h_list, &cfg.t_list)?;
    write_atomic(out, "m2.csv", scenarios::m2_csv(&rows).as_bytes())?;
    let mut report = scenarios::m2_report(&rows);
    for &h in &cfg.h_list {
        let hp = fbm_mkv::fbm::HurstParameter::new(h)?;
        report.note(scenarios::adjudication_table(&hp, &cfg.t_list)?);
    }
    write_report(out, &report)?;
    Ok(Outcome {
        report,
        gate: Gate::Report,
    })
}

pub fn fourier_check(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, CliError> {
    let run = scenarios::fourier_check(cfg)?;
    write_atomic(
        out,
        "fourier_residuals.csv",
        scenarios::fourier_csv(&run.residuals).as_bytes(),
    )?;
    write_config(out, cfg)?;
    write_report(out, &run.report)?;
    Ok(Outcome {
        report: run.report,
        gate: Gate::Report,
    })
}

pub fn simulate(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, CliError> {
    let traj = scenarios::run_particles(cfg)?;
    info!("writing {} particle paths", traj.n_particles());
    write_with(out, "trajectory.csv", |w| traj.write_csv(w))?;
    write_with(out, "summary.csv", |w| traj.write_summary_csv(w))?;
    write_config(out, cfg)?;
    Ok(Outcome {
        report: ValidationReport::new("simulate"),
        gate: Gate::RuntimeOnly,
    })
}

pub fn fp_solve(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, CliError> {
    let sol = scenarios::run_fp(cfg)?;
    write_with(out, "fp_solution.csv", |w| {
        write_solution_csv(&sol.states, w)
    })?;
    write_with(out, "fp_moments.csv", |w| write_moments_csv(&sol.states, w))?;
    write_config(out, cfg)?;
    let mut report = ValidationReport::new("fp-solve");
    report.info("mass_drift", sol.max_mass_drift());
    report.info("min_before_clip", sol.min_before_clip());
    report.info("sweeps", sol.sweeps as f64);
    Ok(Outcome {
        report,
        gate: Gate::RuntimeOnly,
    })
}
