use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use strichartz_core::error::LabError;
use strichartz_core::euler_lagrange::InitKind;
use strichartz_core::harness::{self, ConfigSource, ExperimentConfig, RunReport, SchemeName};

#[derive(Parser)]
#[command(name = "strichartz", version, about = "Strichartz extremizer laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command. Flags override the `--config` file.
#[derive(Args, Clone)]
struct Common {
    /// JSON file mirroring the experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Points per axis.
    #[arg(long = "n")]
    n_points: Option<usize>,
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long)]
    t_nodes: Option<usize>,
    /// `tangent` (default) or `uniform`.
    #[arg(long)]
    scheme: Option<String>,
    /// Truncation time of the uniform scheme.
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Power iteration from a seeded start; writes the field and a report.
    Extremize {
        #[command(flatten)]
        common: Common,
        /// `random`, `random_real` or `perturbed_gaussian`.
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Structural checks on a stored field.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        field: PathBuf,
    },
    /// Bilinear decay sweep over separations.
    BilinearSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        s: Option<f64>,
        /// Comma separated separations.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<f64>>,
        /// Comma separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Time-domain against circle-reduced quadrilinear form.
    QConsistency {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Splitting bounds, eps sweep, decay fit and weight bound of a field.
    BootstrapAudit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        field: PathBuf,
    },
    /// Critical point and half-level roots of the cubic G.
    GAnalysis {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        omega: f64,
        #[arg(long = "C")]
        c: f64,
    },
    /// Rectangle functional-equation residuals of a field.
    RectTest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n_quadruples: usize,
    },
    /// Closed-form Gaussian ratio and sharp constant.
    OracleGaussian {
        #[command(flatten)]
        common: Common,
    },
}

fn usage(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

/// The configuration file text when nothing overrides it, otherwise the
/// serialized effective configuration.
fn resolve(common: &Common, edit: impl FnOnce(&mut ExperimentConfig) -> Result<bool, LabError>) -> Result<ConfigSource, LabError> {
    let base = match &common.config {
        Some(p) => ConfigSource::load(p)?,
        None => ConfigSource::from_config(ExperimentConfig::default())?,
    };
    let mut cfg = base.config.clone();
    let mut changed = edit(&mut cfg)?;
    let mut set = |flag: bool| changed |= flag;
    if let Some(n) = common.n_points {
        cfg.grid.n_points = n;
        set(true);
    }
    if let Some(l) = common.half_width {
        cfg.grid.half_width = l;
        set(true);
    }
    if let Some(k) = common.t_nodes {
        cfg.time_quadrature.n_nodes = k;
        set(true);
    }
    if let Some(s) = &common.scheme {
        cfg.time_quadrature.scheme = match s.as_str() {
            "tangent" | "tangent_mapped_legendre" => SchemeName::TangentMappedLegendre,
            "uniform" | "uniform_truncated" => SchemeName::UniformTruncated,
            other => return Err(usage(format!("unknown time scheme {other:?}"))),
        };
        set(true);
    }
    if let Some(t) = common.t_max {
        cfg.time_quadrature.t_max = Some(t);
        set(true);
    }
    if let Some(seed) = common.seed {
        cfg.solver.seed = Some(seed);
        set(true);
    }
    if let Some(out) = &common.out {
        cfg.io.out_path = out.clone();
        set(true);
    }
    if changed || common.config.is_none() {
        ConfigSource::from_config(cfg)
    } else {
        Ok(base)
    }
}

fn run(cli: Cli) -> Result<RunReport, LabError> {
    match cli.command {
        Command::Extremize {
            common,
            init,
            tol,
            max_iter,
        } => {
            let src = resolve(&common, |cfg| {
                let mut changed = false;
                if let Some(i) = &init {
                    cfg.solver.init = serde_json::from_value::<InitKind>(serde_json::Value::String(i.clone()))
                        .map_err(|_| usage(format!("unknown init {i:?}")))?;
                    changed = true;
                }
                if let Some(t) = tol {
                    cfg.solver.tol = t;
                    changed = true;
                }
                if let Some(m) = max_iter {
                    cfg.solver.max_iter = m;
                    changed = true;
                }
                Ok(changed)
            })?;
            harness::cmd_extremize(&src)
        }
        Command::Verify { common, field } => harness::cmd_verify(&resolve(&common, |_| Ok(false))?, &field),
        Command::BilinearSweep {
            common,
            s,
            n_list,
            seeds,
        } => {
            let src = resolve(&common, |cfg| {
                let changed = s.is_some() || n_list.is_some() || seeds.is_some();
                if let Some(s) = s {
                    cfg.sweep.s = s;
                }
                if let Some(n) = n_list {
                    cfg.sweep.n_list = n;
                }
                if let Some(v) = seeds {
                    cfg.sweep.seeds = v;
                }
                Ok(changed)
            })?;
            harness::cmd_bilinear_sweep(&src)
        }
        Command::QConsistency { common, count } => {
            let src = resolve(&common, |cfg| {
                if let Some(c) = count {
                    cfg.checks.q_count = c;
                }
                Ok(count.is_some())
            })?;
            harness::cmd_q_consistency(&src)
        }
        Command::BootstrapAudit { common, field } => {
            harness::cmd_bootstrap_audit(&resolve(&common, |_| Ok(false))?, &field)
        }
        Command::GAnalysis { common, omega, c } => harness::cmd_g_analysis(&resolve(&common, |_| Ok(false))?, omega, c),
        Command::RectTest {
            common,
            field,
            n_quadruples,
        } => {
            let seed = common.seed.unwrap_or(1);
            harness::cmd_rect_test(&resolve(&common, |_| Ok(false))?, &field, n_quadruples, seed)
        }
        Command::OracleGaussian { common } => harness::cmd_oracle_gaussian(&resolve(&common, |_| Ok(false))?),
    }
}

fn exit_code(err: &LabError) -> u8 {
    match err {
        LabError::Config(_) | LabError::InvalidGrid(_) | LabError::InvalidParameter(_) => 2,
        LabError::Io(_) | LabError::Format(_) | LabError::Json(_) | LabError::Csv(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("STRZ_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            _ => {
                eprintln!("error: STRZ_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(report) => {
            for c in &report.checks {
                let value = c.value.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
                let verdict = if c.pass { "PASS" } else { "FAIL" };
                println!("{verdict} {} value={value} tolerance={:e}", c.name, c.tolerance);
            }
            if let Some(p) = report.artifacts.last() {
                println!("report: {}", p.display());
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
