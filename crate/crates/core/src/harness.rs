//! Experiment configuration and the commands behind the `strichartz` binary.
//!
//! Every command writes `<command>.json` (a [`RunReport`]) into the output
//! directory, plus CSV tables and field files where it has them. Reports
//! echo the configuration text they were started from verbatim.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{json, Value};

use crate::bilinear::{decay_sweep, SLOPE_WINDOW};
use crate::character::{
    functional_equation_residual, quadratic_log_fit, random_rectangles, second_difference_test, FIT_THRESHOLD,
};
use crate::decay::{
    constraint_weight_check, default_annulus, eps_sweep, fit_gaussian_decay, frequency_split, spectral_norm,
    split_norm_bounds, g_function_analysis, WeightParams,
};
use crate::error::{LabError, Result};
use crate::euler_lagrange::{el_residual, initial_field, power_iterate, InitKind, SolverConfig};
use crate::field::{ComplexField2D, Space};
use crate::functional::{
    dual_symmetry_check, gaussian_ratio_closed_form, quadrilinear_circle_reduction, quadrilinear_time_domain,
    random_localized_field, strichartz_ratio, FieldKind,
};
use crate::grid::Grid2D;
use crate::io::{read_field, write_field};
use crate::quadrature::TimeQuadrature;
use crate::transform::{gaussian_field, to_frequency, to_physical};

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n_points: usize,
    pub half_width: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n_points: 64,
            half_width: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    TangentMappedLegendre,
    UniformTruncated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub scheme: SchemeName,
    pub n_nodes: usize,
    pub t_max: Option<f64>,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            scheme: SchemeName::TangentMappedLegendre,
            n_nodes: 129,
            t_max: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_iter: usize,
    pub tol: f64,
    pub omega_tol: f64,
    pub init: InitKind,
    pub seed: Option<u64>,
    pub renormalize_scale: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            max_iter: d.max_iter,
            tol: d.tol,
            omega_tol: d.omega_tol,
            init: InitKind::RandomComplex,
            seed: None,
            renormalize_scale: d.renormalize_scale,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Cutoff and weight of the `eps` sweep.
    pub s: f64,
    pub mu: f64,
    pub eps_list: Vec<f64>,
    pub annulus: Option<(f64, f64)>,
    /// Cutoffs for the splitting bounds, each with `mu = s^{-4}`.
    pub split_s: Vec<f64>,
    /// `(mu, eps)` settings for the pointwise weight check.
    pub weight_settings: Vec<(f64, f64)>,
    pub weight_samples: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            s: 1.5,
            mu: 1e-3,
            eps_list: vec![1.0, 1e-1, 1e-2, 1e-3],
            annulus: None,
            split_s: vec![2.0, 3.0, 5.0],
            weight_settings: vec![(0.0, 0.0), (1e-3, 0.0), (0.0625, 0.1), (1.0, 1.0), (0.2, 1e-3)],
            weight_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub s: f64,
    #[serde(rename = "N_list")]
    pub n_list: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            s: 1.0,
            n_list: vec![4.0, 16.0, 64.0, 256.0],
            seeds: vec![0, 1, 2],
        }
    }
}

/// Tolerances and sample counts of `verify`, `rect-test` and `q-consistency`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksSection {
    pub el_residual: f64,
    pub decay_r_squared: f64,
    pub functional_max: f64,
    pub anisotropy: f64,
    pub cross: f64,
    pub fit_rms: f64,
    pub dual_ratio: f64,
    pub n_quadruples: usize,
    pub rect_seed: u64,
    pub center_scale: f64,
    pub edge_scale: f64,
    pub q_count: usize,
    pub q_max_level: usize,
    pub q_seed: u64,
    pub q_relative: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            el_residual: 1e-6,
            decay_r_squared: 0.99,
            functional_max: 1e-3,
            anisotropy: 1e-3,
            cross: 1e-3,
            fit_rms: 1e-4,
            dual_ratio: 1e-6,
            n_quadruples: 10_000,
            rect_seed: 1,
            center_scale: 0.7,
            edge_scale: 1.0,
            q_count: 20,
            q_max_level: 3,
            q_seed: 0,
            q_relative: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    /// JSON report only.
    Json,
    /// JSON report plus CSV tables.
    JsonCsv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub out_path: PathBuf,
    pub format: OutputFormat,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            out_path: PathBuf::from("out"),
            format: OutputFormat::JsonCsv,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub time_quadrature: TimeSection,
    pub solver: SolverSection,
    pub analysis: AnalysisSection,
    pub sweep: SweepSection,
    pub checks: ChecksSection,
    pub io: IoSection,
}

fn config_err(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.grid.n_points, self.grid.half_width).map_err(|e| config_err(e.to_string()))
    }

    pub fn time_quadrature(&self, grid: &Grid2D) -> Result<TimeQuadrature> {
        let t = &self.time_quadrature;
        let tq = match t.scheme {
            SchemeName::TangentMappedLegendre => TimeQuadrature::for_grid(grid, t.n_nodes),
            SchemeName::UniformTruncated => {
                let t_max = t
                    .t_max
                    .ok_or_else(|| config_err("uniform_truncated quadrature needs t_max"))?;
                TimeQuadrature::uniform_truncated(t.n_nodes, t_max)
            }
        };
        tq.map_err(|e| config_err(e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_iter: self.solver.max_iter,
            tol: self.solver.tol,
            omega_tol: self.solver.omega_tol,
            renormalize_scale: self.solver.renormalize_scale,
        }
    }

    /// Checks that do not depend on which command runs.
    pub fn validate(&self) -> Result<()> {
        let g = self.grid()?;
        self.time_quadrature(&g)?;
        let s = &self.solver;
        if s.max_iter == 0 || !(s.tol > 0.0) || !(s.omega_tol > 0.0) {
            return Err(config_err("solver needs max_iter > 0, tol > 0 and omega_tol > 0"));
        }
        let a = &self.analysis;
        if !(a.s > 1.0) || !(a.mu >= 0.0) || a.eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(config_err("analysis needs s > 1, mu >= 0 and positive eps values"));
        }
        if a.split_s.iter().any(|s| !(*s > 1.0)) {
            return Err(config_err("split cutoffs must exceed 1"));
        }
        if !(self.sweep.s > 0.0) || self.sweep.n_list.iter().any(|n| !(*n > 1.0)) {
            return Err(config_err("sweep needs s > 0 and N > 1"));
        }
        let c = &self.checks;
        if !(c.center_scale > 0.0 && c.edge_scale > 0.0) {
            return Err(config_err("rectangle scales must be positive"));
        }
        Ok(())
    }

    fn seed(&self) -> Result<u64> {
        self.solver
            .seed
            .ok_or_else(|| config_err("a seed is required for randomized runs"))
    }
}

/// A configuration together with the text it was read from.
#[derive(Debug, Clone)]
pub struct ConfigSource {
    pub config: ExperimentConfig,
    pub text: String,
}

impl ConfigSource {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        config.validate()?;
        Ok(Self {
            config,
            text: text.trim().to_string(),
        })
    }

    pub fn from_config(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let text = serde_json::to_string_pretty(&config)?;
        Ok(Self { config, text })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `None` when the underlying computation failed.
    pub value: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value: Some(value),
            tolerance,
            pass: value <= tolerance,
            note: None,
        }
    }

    /// Passes when `value >= tolerance`.
    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value: Some(value),
            tolerance,
            pass: value >= tolerance,
            note: None,
        }
    }

    pub fn flag(name: &str, pass: bool, note: Option<String>) -> Self {
        Self {
            name: name.into(),
            value: Some(if pass { 1.0 } else { 0.0 }),
            tolerance: 1.0,
            pass,
            note,
        }
    }

    pub fn failed(name: &str, tolerance: f64, err: &LabError) -> Self {
        Self {
            name: name.into(),
            value: None,
            tolerance,
            pass: false,
            note: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub library_version: String,
    pub config: Box<RawValue>,
    pub outputs: Value,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub artifacts: Vec<PathBuf>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Run<'a> {
    command: &'static str,
    src: &'a ConfigSource,
    start: Instant,
    artifacts: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn start(command: &'static str, src: &'a ConfigSource) -> Result<Self> {
        fs::create_dir_all(&src.config.io.out_path)?;
        Ok(Self {
            command,
            src,
            start: Instant::now(),
            artifacts: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.src.config.io.out_path.join(name)
    }

    fn csv<T: Serialize>(&mut self, suffix: &str, rows: &[T]) -> Result<()> {
        if self.src.config.io.format == OutputFormat::Json {
            return Ok(());
        }
        let path = self.path(&format!("{}{suffix}.csv", self.command));
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.artifacts.push(path);
        Ok(())
    }

    fn field(&mut self, name: &str, f: &ComplexField2D) -> Result<()> {
        let path = self.path(name);
        write_field(&path, f)?;
        self.artifacts.push(path);
        Ok(())
    }

    fn finish(mut self, outputs: Value, checks: Vec<Check>) -> Result<RunReport> {
        let path = self.path(&format!("{}.json", self.command));
        self.artifacts.push(path.clone());
        let report = RunReport {
            command: self.command.into(),
            library_version: LIBRARY_VERSION.into(),
            config: RawValue::from_string(self.src.text.clone())?,
            outputs,
            passed: checks.iter().all(|c| c.pass),
            checks,
            artifacts: self.artifacts,
            wall_time_s: self.start.elapsed().as_secs_f64(),
        };
        fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
        Ok(report)
    }
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    phi: f64,
    residual: f64,
}

/// Power iteration from the configured initial field; writes
/// `extremizer.strz` and the `phi`/residual trace.
pub fn cmd_extremize(src: &ConfigSource) -> Result<RunReport> {
    let cfg = &src.config;
    let seed = cfg.seed()?;
    let grid = cfg.grid()?;
    let tq = cfg.time_quadrature(&grid)?;
    let mut run = Run::start("extremize", src)?;
    let f0 = initial_field(&grid, cfg.solver.init, seed)?;
    let rep = power_iterate(&f0, &tq, &cfg.solver_config())?;
    run.field("extremizer.strz", &rep.field)?;
    let trace: Vec<TraceRow> = rep
        .phi_trace
        .iter()
        .zip(&rep.residual_trace)
        .enumerate()
        .map(|(k, (&phi, &residual))| TraceRow {
            iteration: k + 1,
            phi,
            residual,
        })
        .collect();
    run.csv("_trace", &trace)?;
    let phi_gauss = gaussian_ratio_closed_form(1.0)?;
    let outputs = json!({
        "extremizer": rep,
        "sharp_constant_estimate": rep.phi.powf(0.25),
        "phi_gaussian": phi_gauss,
        "phi_relative_gap": (rep.phi - phi_gauss).abs() / phi_gauss,
    });
    let checks = vec![
        Check::flag("converged", rep.converged, None),
        Check::at_most("residual", rep.residual, cfg.solver.tol),
    ];
    run.finish(outputs, checks)
}

/// Rectangle residuals for `f` at the configured counts.
fn rectangle_checks(f: &ComplexField2D, cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<(Value, Vec<RectRow>, f64)> {
    let c = &cfg.checks;
    let qs = random_rectangles(c.center_scale, c.edge_scale, n, seed)?;
    let fe = functional_equation_residual(f, &qs)?;
    let sd = second_difference_test(f, &qs)?;
    let rows = fe
        .per_quadruple
        .iter()
        .zip(&sd.per_quadruple)
        .enumerate()
        .map(|(index, (&functional, &second_difference))| RectRow {
            index,
            functional,
            second_difference,
        })
        .collect();
    let max = fe.max;
    let summary = json!({
        "functional": {"rms": fe.rms, "max": fe.max, "evaluated": fe.evaluated, "skipped": fe.skipped},
        "second_difference": {"rms": sd.rms, "max": sd.max, "evaluated": sd.evaluated, "skipped": sd.skipped},
    });
    Ok((summary, rows, max))
}

#[derive(Serialize)]
struct RectRow {
    index: usize,
    functional: Option<f64>,
    second_difference: Option<f64>,
}

/// The structural checks on a stored field, each reported separately.
pub fn cmd_verify(src: &ConfigSource, field_path: &Path) -> Result<RunReport> {
    let cfg = &src.config;
    let c = &cfg.checks;
    let f = to_physical(&read_field(field_path)?)?;
    let tq = cfg.time_quadrature(f.grid())?;
    let mut run = Run::start("verify", src)?;
    let mut checks = Vec::new();
    let mut outputs = serde_json::Map::new();
    outputs.insert("field".into(), json!(field_path));
    outputs.insert("grid".into(), json!(f.grid()));

    match el_residual(&f, &tq) {
        Ok(r) => checks.push(Check::at_most("el_residual", r, c.el_residual)),
        Err(e) => checks.push(Check::failed("el_residual", c.el_residual, &e)),
    }

    let fhat = to_frequency(&f)?;
    let annulus = cfg.analysis.annulus.unwrap_or_else(|| default_annulus(&fhat));
    match fit_gaussian_decay(&fhat, annulus) {
        Ok(d) => {
            checks.push(Check::flag("decay_mu_positive", d.mu_fit > 0.0, None));
            checks.push(Check::at_least("decay_r_squared", d.r_squared, c.decay_r_squared));
            outputs.insert("decay".into(), json!(d));
        }
        Err(e) => checks.push(Check::failed("decay_r_squared", c.decay_r_squared, &e)),
    }

    let (rect, rows, fe_max) = rectangle_checks(&f, cfg, c.n_quadruples, c.rect_seed)?;
    checks.push(Check::at_most("functional_equation_max", fe_max, c.functional_max));
    outputs.insert("rectangles".into(), rect);
    run.csv("_rectangles", &rows)?;

    match quadratic_log_fit(&f, FIT_THRESHOLD) {
        Ok(fit) => {
            checks.push(Check::flag("fit_re_a_negative", fit.a.re < 0.0, None));
            checks.push(Check::at_most("fit_anisotropy", fit.anisotropy, c.anisotropy));
            checks.push(Check::at_most("fit_cross", fit.cross, c.cross));
            checks.push(Check::at_most("fit_residual_rms", fit.residual_rms, c.fit_rms));
            outputs.insert("quadratic_fit".into(), json!(fit));
        }
        Err(e) => checks.push(Check::failed("fit_residual_rms", c.fit_rms, &e)),
    }

    match dual_symmetry_check(&f, &tq) {
        Ok(d) => {
            checks.push(Check::at_most("dual_symmetry", (d.ratio / (2.0 * PI) - 1.0).abs(), c.dual_ratio));
            outputs.insert("dual_symmetry".into(), json!(d));
        }
        Err(e) => checks.push(Check::failed("dual_symmetry", c.dual_ratio, &e)),
    }
    run.finish(Value::Object(outputs), checks)
}

#[derive(Serialize)]
struct SweepCsvRow {
    #[serde(rename = "N")]
    n: f64,
    ratio: f64,
    seed: u64,
}

/// Worst-case bilinear ratios over the configured `N` list and seeds.
pub fn cmd_bilinear_sweep(src: &ConfigSource) -> Result<RunReport> {
    let cfg = &src.config;
    let grid = cfg.grid()?;
    let tq = cfg.time_quadrature(&grid)?;
    let mut run = Run::start("bilinear_sweep", src)?;
    let res = decay_sweep(&grid, cfg.sweep.s, &cfg.sweep.n_list, &cfg.sweep.seeds, &tq)?;
    let rows: Vec<SweepCsvRow> = res
        .per_seed
        .iter()
        .map(|r| SweepCsvRow {
            n: r.n_sep,
            ratio: r.ratio,
            seed: r.seed,
        })
        .collect();
    run.csv("", &rows)?;
    let checks = vec![
        Check::at_most("slope_upper", res.slope, SLOPE_WINDOW.1),
        Check::at_least("slope_lower", res.slope, SLOPE_WINDOW.0),
        Check::flag("ratios_finite", res.per_seed.iter().all(|r| r.ratio.is_finite()), None),
    ];
    run.finish(json!({"sweep": res, "window": SLOPE_WINDOW}), checks)
}

#[derive(Serialize)]
struct QRow {
    index: usize,
    time_re: f64,
    time_im: f64,
    circle_re: f64,
    circle_im: f64,
    relative_difference: f64,
    diagonal_re: f64,
    diagonal_im: f64,
}

/// Time-domain against circle-reduced `Q` on seeded localized quadruples,
/// and positivity of the diagonal `Q(f, f, f, f)`.
pub fn cmd_q_consistency(src: &ConfigSource) -> Result<RunReport> {
    let cfg = &src.config;
    let c = &cfg.checks;
    let grid = cfg.grid()?;
    let tq = cfg.time_quadrature(&grid)?;
    let mut run = Run::start("q_consistency", src)?;
    let mut rows = Vec::with_capacity(c.q_count);
    for k in 0..c.q_count {
        let fs = (0..4u64)
            .map(|j| random_localized_field(&grid, c.q_max_level, FieldKind::Complex, c.q_seed + 4 * k as u64 + j))
            .collect::<Result<Vec<_>>>()?;
        let hs = fs.iter().map(to_frequency).collect::<Result<Vec<_>>>()?;
        let t = quadrilinear_time_domain(&fs[0], &fs[1], &fs[2], &fs[3], &tq)?.value;
        let q = quadrilinear_circle_reduction(&hs[0], &hs[1], &hs[2], &hs[3])?.value;
        // Q(f, f, f, f) = C_Q ||u||_4^4 on the time-domain route
        let d = quadrilinear_time_domain(&fs[0], &fs[0], &fs[0], &fs[0], &tq)?.value;
        rows.push(QRow {
            index: k,
            time_re: t.re,
            time_im: t.im,
            circle_re: q.re,
            circle_im: q.im,
            relative_difference: (t - q).norm() / t.norm().max(q.norm()),
            diagonal_re: d.re,
            diagonal_im: d.im,
        });
    }
    run.csv("", &rows)?;
    let worst = rows.iter().map(|r| r.relative_difference).fold(0.0, f64::max);
    let worst_imag = rows
        .iter()
        .map(|r| r.diagonal_im.abs() / r.diagonal_re.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let checks = vec![
        Check::at_most("route_relative_difference", worst, c.q_relative),
        Check::at_most("diagonal_relative_imaginary", worst_imag, 1e-8),
        Check::flag("diagonal_nonnegative", rows.iter().all(|r| r.diagonal_re >= 0.0), None),
    ];
    let outputs = json!({
        "count": rows.len(),
        "max_relative_difference": worst,
        "max_diagonal_relative_imaginary": worst_imag,
    });
    run.finish(outputs, checks)
}

#[derive(Serialize)]
struct EpsRow {
    eps: f64,
    tail_norm: f64,
}

/// Splitting bounds, `eps` sweep, decay fit and pointwise weight bound for a
/// stored field.
pub fn cmd_bootstrap_audit(src: &ConfigSource, field_path: &Path) -> Result<RunReport> {
    let cfg = &src.config;
    let a = &cfg.analysis;
    let f = to_physical(&read_field(field_path)?)?.normalized()?;
    let mut run = Run::start("bootstrap_audit", src)?;
    let fhat = to_frequency(&f)?;
    let mut checks = Vec::new();

    let mut splits = Vec::new();
    for &s in &a.split_s {
        let b = split_norm_bounds(&f, s, s.powi(-4))?;
        checks.push(Check::at_least(&format!("split_slack_s{s}"), b.below.slack.min(b.low.slack).min(b.mid.slack), 0.0));
        let parts = frequency_split(&fhat, s)?;
        let sum: f64 = [&parts.low, &parts.mid, &parts.high].iter().map(|p| p.norm_sq()).sum();
        let pyth = (sum - fhat.norm_sq()).abs() / fhat.norm_sq();
        checks.push(Check::at_most(&format!("pythagoras_s{s}"), pyth, 1e-14));
        splits.push(json!({"bounds": b, "pythagoras_relative": pyth}));
    }

    let sweep = eps_sweep(&fhat, a.s, a.mu, &a.eps_list)?;
    checks.push(Check::flag("eps_monotone", sweep.monotone, None));
    checks.push(Check::at_most("eps_last_relative_change", sweep.last_relative_change, 1e-3));
    let eps_rows: Vec<EpsRow> = sweep.rows.iter().map(|&(eps, tail_norm)| EpsRow { eps, tail_norm }).collect();
    run.csv("_eps", &eps_rows)?;

    let annulus = a.annulus.unwrap_or_else(|| default_annulus(&fhat));
    let decay = fit_gaussian_decay(&fhat, annulus)?;
    checks.push(Check::flag("decay_mu_positive", decay.mu_fit > 0.0, None));
    checks.push(Check::at_least("decay_r_squared", decay.r_squared, cfg.checks.decay_r_squared));

    let seed = cfg.solver.seed.unwrap_or(0);
    let mut weights = Vec::new();
    for (k, &(mu, eps)) in a.weight_settings.iter().enumerate() {
        let w = constraint_weight_check(WeightParams::new(mu, eps)?, a.weight_samples, seed + k as u64)?;
        checks.push(Check::at_most(&format!("weight_mu{mu}_eps{eps}"), w.max_weight, 1.0 + 1e-12));
        weights.push(w);
    }
    let outputs = json!({
        "unit_norm": spectral_norm(&fhat)?,
        "splits": splits,
        "eps_sweep": sweep,
        "decay": decay,
        "weight_checks": weights,
    });
    run.finish(outputs, checks)
}

/// Critical point and half-level roots of `G(x) = omega x / 2 - C x^2 - C x^3`.
pub fn cmd_g_analysis(src: &ConfigSource, omega: f64, c: f64) -> Result<RunReport> {
    let run = Run::start("g_analysis", src)?;
    let g = g_function_analysis(omega, c)?;
    let tol = 1e-12 * g.m.abs().max(1.0);
    let checks = vec![
        Check::flag("bracketing", g.x0 < g.x_crit && g.x_crit < g.x1, None),
        Check::at_most("root_x0", (g.g(g.x0) - 0.5 * g.m).abs(), tol),
        Check::at_most("root_x1", (g.g(g.x1) - 0.5 * g.m).abs(), tol),
    ];
    run.finish(json!(g), checks)
}

/// Functional-equation and second-difference residuals of a stored field.
pub fn cmd_rect_test(src: &ConfigSource, field_path: &Path, n_quadruples: usize, seed: u64) -> Result<RunReport> {
    let cfg = &src.config;
    let f = to_physical(&read_field(field_path)?)?;
    let mut run = Run::start("rect_test", src)?;
    let (summary, rows, max) = rectangle_checks(&f, cfg, n_quadruples, seed)?;
    run.csv("", &rows)?;
    let checks = vec![Check::at_most("functional_equation_max", max, cfg.checks.functional_max)];
    run.finish(summary, checks)
}

/// Closed-form `Phi` and `R` for Gaussians next to the grid value for
/// `e^{-|x|^2}`.
pub fn cmd_oracle_gaussian(src: &ConfigSource) -> Result<RunReport> {
    let cfg = &src.config;
    let grid = cfg.grid()?;
    let tq = cfg.time_quadrature(&grid)?;
    let run = Run::start("oracle_gaussian", src)?;
    let phi = gaussian_ratio_closed_form(1.0)?;
    let z = num_complex::Complex64::new(0.0, 0.0);
    let f = gaussian_field(grid, num_complex::Complex64::new(-1.0, 0.0), [z; 2], z)?;
    let numeric = strichartz_ratio(&f, &tq)?;
    let rel = (numeric.phi - phi).abs() / phi;
    let outputs = json!({
        "phi": phi,
        "sharp_constant": phi.powf(0.25),
        "numeric_phi": numeric.phi,
        "relative_difference": rel,
    });
    run.finish(outputs, vec![Check::at_most("grid_vs_closed_form", rel, 1e-6)])
}

/// Reads any stored field into physical space; used by the binary to fail
/// early on unreadable inputs.
pub fn load_physical(path: &Path) -> Result<ComplexField2D> {
    let f = read_field(path)?;
    match f.space() {
        Space::Physical => Ok(f),
        Space::Frequency => to_physical(&f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.solver.seed = Some(3);
        cfg.solver.init = InitKind::PerturbedGaussian;
        cfg.io.out_path = dir.to_path_buf();
        cfg
    }

    #[test]
    fn config_defaults_and_validation() {
        let src = ConfigSource::from_json("{}").unwrap();
        assert_eq!(src.config.grid.n_points, 64);
        assert_eq!(src.config.sweep.n_list, vec![4.0, 16.0, 64.0, 256.0]);
        assert!(matches!(
            ConfigSource::from_json(r#"{"grid": {"n_points": 63}}"#),
            Err(LabError::Config(_))
        ));
        assert!(ConfigSource::from_json(r#"{"grid": {"points": 64}}"#).is_err());
        let uniform = r#"{"time_quadrature": {"scheme": "uniform_truncated", "n_nodes": 65}}"#;
        assert!(ConfigSource::from_json(uniform).is_err());
        let init: InitKind = serde_json::from_str("\"random\"").unwrap();
        assert_eq!(init, InitKind::RandomComplex);
    }

    #[test]
    fn extremize_requires_seed_and_echoes_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.solver.seed = None;
        let src = ConfigSource::from_config(cfg).unwrap();
        assert!(matches!(cmd_extremize(&src), Err(LabError::Config(_))));

        let text = serde_json::to_string(&small_config(dir.path())).unwrap();
        let src = ConfigSource::from_json(&text).unwrap();
        let rep = cmd_extremize(&src).unwrap();
        assert!(rep.passed, "{:?}", rep.checks);
        assert_eq!(rep.config.get(), text);
        assert!(dir.path().join("extremizer.strz").exists());
        assert!(dir.path().join("extremize_trace.csv").exists());
    }

    #[test]
    fn g_analysis_closed_form() {
        let dir = tempfile::tempdir().unwrap();
        let src = ConfigSource::from_config(small_config(dir.path())).unwrap();
        let rep = cmd_g_analysis(&src, 2.0, 1.0).unwrap();
        assert!(rep.passed);
        let x = rep.outputs["x_crit"].as_f64().unwrap();
        let m = rep.outputs["M"].as_f64().unwrap();
        assert!((x - 1.0 / 3.0).abs() < 1e-12 && (m - 5.0 / 27.0).abs() < 1e-12);
    }
}
