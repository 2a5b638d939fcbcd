use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbm_mkv_cli::commands::{self, Outcome};
use fbm_mkv_cli::config::{Scenario, ScenarioConfig};
use fbm_mkv_cli::CliError;
use log::{error, info};

/// Simulate fBm-driven McKean-Vlasov equations, solve their Fokker-Planck
/// equation and cross-check both against closed forms.
///
/// Only Hurst parameters in (1/2, 1) are accepted: the kernel operator and
/// every diffusion formula used here diverge for h <= 1/2.
#[derive(Debug, Parser)]
#[command(name = "fbm-mkv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample fBm paths; write paths.csv and covariance.csv.
    SampleFbm(Common),
    /// Particles, Fokker-Planck solve and closed form; exit 1 on a failed threshold.
    Validate(Common),
    /// Tabulate the squared kernel operator on indicators over h_list x t_list.
    M2Table(Common),
    /// Fourier-side generator residuals and refinement study.
    FourierCheck(Common),
    /// Raw particle run: trajectory.csv and summary.csv.
    Simulate(Common),
    /// Raw Fokker-Planck run: fp_solution.csv and fp_moments.csv.
    FpSolve(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

/// Command-line overrides, applied after the configuration file.
#[derive(Debug, Args, Default)]
struct Overrides {
    #[arg(long, help_heading = "Overrides")]
    scenario: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    seed: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    h: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    t_end: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    steps: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    fp_steps: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    t0: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    half_width: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    cells: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    n_particles: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    alpha0: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    beta0: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    z0: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    l1_tol: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    kde_tol: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    m_dist_tol: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    n_se: Option<String>,
    /// `consistent` or `printed`.
    #[arg(long, help_heading = "Overrides")]
    normalization: Option<String>,
    /// Comma-separated list.
    #[arg(long, help_heading = "Overrides")]
    frequencies: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    fourier_particles: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    fourier_steps: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    refinement_levels: Option<String>,
    #[arg(long, help_heading = "Overrides")]
    fourier_replicates: Option<String>,
    /// Comma-separated list.
    #[arg(long, help_heading = "Overrides")]
    h_list: Option<String>,
    /// Comma-separated list.
    #[arg(long, help_heading = "Overrides")]
    t_list: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(String, String)> {
        let fields = [
            ("scenario", &self.scenario),
            ("seed", &self.seed),
            ("h", &self.h),
            ("t_end", &self.t_end),
            ("steps", &self.steps),
            ("fp_steps", &self.fp_steps),
            ("t0", &self.t0),
            ("half_width", &self.half_width),
            ("cells", &self.cells),
            ("n_particles", &self.n_particles),
            ("alpha0", &self.alpha0),
            ("beta0", &self.beta0),
            ("z0", &self.z0),
            ("l1_tol", &self.l1_tol),
            ("kde_tol", &self.kde_tol),
            ("m_dist_tol", &self.m_dist_tol),
            ("n_se", &self.n_se),
            ("normalization", &self.normalization),
            ("frequencies", &self.frequencies),
            ("fourier_particles", &self.fourier_particles),
            ("fourier_steps", &self.fourier_steps),
            ("refinement_levels", &self.refinement_levels),
            ("fourier_replicates", &self.fourier_replicates),
            ("h_list", &self.h_list),
            ("t_list", &self.t_list),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

type Handler = fn(&ScenarioConfig, &std::path::Path) -> Result<Outcome, CliError>;

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let (common, f): (&Common, Handler) = match &cli.command {
        Command::SampleFbm(c) => (c, commands::sample_fbm),
        Command::Validate(c) => (c, commands::validate),
        Command::M2Table(c) => (c, commands::m2_table),
        Command::FourierCheck(c) => (c, commands::fourier_check),
        Command::Simulate(c) => (c, commands::simulate),
        Command::FpSolve(c) => (c, commands::fp_solve),
    };
    let cfg = ScenarioConfig::load(
        common.config.as_deref(),
        &common.overrides.pairs(),
        Scenario::FbmLaw,
    )?;
    info!("scenario {} with seed {}", cfg.scenario, cfg.seed);
    f(&cfg, &common.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.report.to_text());
            for row in outcome.report.failures() {
                error!("failed threshold: {} = {:e}", row.name, row.value);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use fbm_mkv_cli::config::KEYS;

    #[test]
    fn every_config_key_has_a_flag() {
        let cmd = Cli::command();
        let sub = cmd.find_subcommand("validate").unwrap();
        for key in KEYS {
            let flag = key.replace('_', "-");
            assert!(
                sub.get_arguments()
                    .any(|a| a.get_long() == Some(flag.as_str())),
                "missing --{flag}"
            );
        }
    }

    #[test]
    fn overrides_map_back_to_keys() {
        let cli =
            Cli::try_parse_from(["fbm-mkv", "validate", "--t-end", "2", "--seed", "9"]).unwrap();
        let Command::Validate(c) = cli.command else {
            panic!()
        };
        assert_eq!(
            c.overrides.pairs(),
            vec![("seed".into(), "9".into()), ("t_end".into(), "2".into())]
        );
    }
}
