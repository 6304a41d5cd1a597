//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use strichartz_core::character::{functional_equation_residual, quadratic_log_fit, random_rectangles, FIT_THRESHOLD};
use strichartz_core::decay::{
    constraint_weight_check, default_annulus, eps_sweep, fit_gaussian_decay, frequency_split, g_function_analysis,
    split_norm_bounds, WeightParams,
};
use strichartz_core::euler_lagrange::{el_residual, initial_field, InitKind};
use strichartz_core::field::{ComplexField2D, Space};
use strichartz_core::functional::{
    dual_symmetry_check, gaussian_ratio_closed_form, quadrilinear_circle_reduction, quadrilinear_time_domain,
    random_localized_field, strichartz_ratio, FieldKind,
};
use strichartz_core::grid::Grid2D;
use strichartz_core::harness::{cmd_bilinear_sweep, cmd_extremize, ConfigSource, ExperimentConfig, GridSection};
use strichartz_core::io::read_field;
use strichartz_core::quadrature::TimeQuadrature;
use strichartz_core::rng;
use strichartz_core::transform::{dilate, modulate, propagate, to_frequency, to_physical, translate};

type Outcome = Result<(bool, String), String>;

fn report(id: usize, name: &str, start: Instant, outcome: Outcome) -> bool {
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    println!("{} {id:>2} {name}: {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" });
    pass
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn base_grid() -> Grid2D {
    Grid2D::new(64, 10.0).unwrap()
}

fn base_tq(g: &Grid2D) -> TimeQuadrature {
    TimeQuadrature::for_grid(g, 129).unwrap()
}

fn criterion_1(dir: &Path) -> Result<((bool, String), ComplexField2D), String> {
    let start = Instant::now();
    let mut cfg = ExperimentConfig {
        grid: GridSection {
            n_points: 64,
            half_width: 10.0,
        },
        ..Default::default()
    };
    cfg.time_quadrature.n_nodes = 129;
    cfg.solver.init = InitKind::RandomComplex;
    cfg.solver.seed = Some(42);
    cfg.solver.tol = 1e-7;
    cfg.io.out_path = dir.to_path_buf();
    let src = ConfigSource::from_config(cfg).map_err(err)?;
    let rep = cmd_extremize(&src).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let out = &rep.outputs["extremizer"];
    let iterations = out["iterations"].as_u64().unwrap_or(u64::MAX);
    let residual = out["residual"].as_f64().unwrap_or(f64::INFINITY);
    let phi = out["phi"].as_f64().unwrap_or(f64::NAN);
    let gap = rel(phi, gaussian_ratio_closed_form(1.0).map_err(err)?);
    let pass = out["converged"].as_bool() == Some(true) && iterations <= 300 && residual <= 1e-6 && gap <= 1e-2 && secs <= 120.0;
    let field = read_field(&dir.join("extremizer.strz")).map_err(err)?;
    Ok((
        (
            pass,
            format!("iterations={iterations} residual={residual:.3e} phi={phi:.12} rel_gap={gap:.3e} runtime={secs:.1}s"),
        ),
        field,
    ))
}

fn criterion_2(f: &ComplexField2D) -> Outcome {
    let fit = quadratic_log_fit(f, FIT_THRESHOLD).map_err(err)?;
    let qs = random_rectangles(0.7, 1.0, 10_000, 1).map_err(err)?;
    let fe = functional_equation_residual(f, &qs).map_err(err)?;
    let pass = fit.a.re < 0.0
        && fit.anisotropy <= 1e-3
        && fit.cross <= 1e-3
        && fit.residual_rms <= 1e-4
        && fe.max <= 1e-3
        && fe.evaluated == 10_000;
    Ok((
        pass,
        format!(
            "Re(A)={:.6} anisotropy={:.2e} cross={:.2e} fit_rms={:.2e} fe_max={:.2e} over {} rectangles",
            fit.a.re, fit.anisotropy, fit.cross, fit.residual_rms, fe.max, fe.evaluated
        ),
    ))
}

fn criterion_3(f: &ComplexField2D) -> Outcome {
    let fh = to_frequency(f).map_err(err)?;
    let d = fit_gaussian_decay(&fh, default_annulus(&fh)).map_err(err)?;
    let sw = eps_sweep(&fh, 1.5, 1e-3, &[1.0, 1e-1, 1e-2, 1e-3]).map_err(err)?;
    let tail_ok = sw.rows.iter().all(|r| r.1 <= sw.limit * (1.0 + 1e-12));
    let pass = d.mu_fit > 0.0 && d.r_squared >= 0.99 && sw.monotone && sw.last_relative_change <= 1e-3 && tail_ok;
    Ok((
        pass,
        format!(
            "mu_fit={:.4} r2={:.6} eps sweep (s=1.5, mu=1e-3) monotone={} last_change={:.2e} limit={:.6}",
            d.mu_fit, d.r_squared, sw.monotone, sw.last_relative_change, sw.limit
        ),
    ))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let g = Grid2D::balanced(16).map_err(err)?;
    let tq = TimeQuadrature::for_grid(&g, 129).map_err(err)?;
    let (mut worst, mut worst_imag, mut nonneg) = (0.0f64, 0.0f64, true);
    for k in 0..20u64 {
        let fs = (0..4)
            .map(|j| random_localized_field(&g, 3, FieldKind::Complex, 4 * k + j))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let hs = fs.iter().map(to_frequency).collect::<Result<Vec<_>, _>>().map_err(err)?;
        let t = quadrilinear_time_domain(&fs[0], &fs[1], &fs[2], &fs[3], &tq).map_err(err)?.value;
        let c = quadrilinear_circle_reduction(&hs[0], &hs[1], &hs[2], &hs[3]).map_err(err)?.value;
        worst = worst.max((t - c).norm() / t.norm());
        let d = quadrilinear_time_domain(&fs[0], &fs[0], &fs[0], &fs[0], &tq).map_err(err)?.value;
        worst_imag = worst_imag.max(d.im.abs() / d.re.abs());
        nonneg &= d.re >= 0.0;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-3 && worst_imag <= 1e-8 && nonneg && secs <= 300.0,
        format!("max route difference={worst:.2e} max diagonal imag={worst_imag:.2e} runtime={secs:.1}s"),
    ))
}

fn criterion_5(dir: &Path) -> Outcome {
    let mut cfg = ExperimentConfig {
        grid: GridSection {
            n_points: 256,
            half_width: 8.0,
        },
        ..Default::default()
    };
    cfg.io.out_path = dir.to_path_buf();
    let src = ConfigSource::from_config(cfg).map_err(err)?;
    let rep = cmd_bilinear_sweep(&src).map_err(err)?;
    let sweep = &rep.outputs["sweep"];
    let slope = sweep["slope"].as_f64().unwrap_or(f64::NAN);
    Ok((
        (-0.75..=-0.45).contains(&slope) && rep.passed,
        format!("N in {{4,16,64,256}}, 3 seeds: slope={slope:.4} rows={}", sweep["rows"]),
    ))
}

fn criterion_6() -> Outcome {
    let settings = [(0.0, 0.0), (1e-3, 0.0), (0.0625, 0.1), (1.0, 1.0), (0.2, 1e-3)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, &(mu, eps)) in settings.iter().enumerate() {
        let w = constraint_weight_check(WeightParams::new(mu, eps).map_err(err)?, 100_000, k as u64).map_err(err)?;
        pass &= w.max_weight <= 1.0 + 1e-12;
        if mu == 0.0 {
            pass &= w.max_weight == 1.0;
        }
        parts.push(format!("({mu},{eps})->{:.15}", w.max_weight));
    }
    Ok((pass, parts.join(" ")))
}

fn criterion_7(f: &ComplexField2D) -> Outcome {
    let f = f.normalized().map_err(err)?;
    let fh = to_frequency(&f).map_err(err)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for s in [2.0f64, 3.0, 5.0] {
        let b = split_norm_bounds(&f, s, s.powi(-4)).map_err(err)?;
        let slack = b.below.slack.min(b.low.slack).min(b.mid.slack);
        let parts_ = frequency_split(&fh, s).map_err(err)?;
        let sum: f64 = [&parts_.low, &parts_.mid, &parts_.high].iter().map(|p| p.norm_sq()).sum();
        let pyth = (sum - fh.norm_sq()).abs() / fh.norm_sq();
        pass &= b.all_hold && slack >= 0.0 && pyth <= 1e-14;
        parts.push(format!("s={s}: min_slack={slack:.3e} pythagoras={pyth:.1e}"));
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_8() -> Outcome {
    let g = g_function_analysis(2.0, 1.0).map_err(err)?;
    let mut pass = (g.x_crit - 1.0 / 3.0).abs() <= 1e-12 && (g.m - 5.0 / 27.0).abs() <= 1e-12;
    let mut r = rng::stream(8, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let omega = 10f64.powf(r.gen_range(-2.0..2.0));
        let c = 10f64.powf(r.gen_range(-2.0..2.0));
        let a = g_function_analysis(omega, c).map_err(err)?;
        let tol = 1e-12 * a.m.abs().max(1.0);
        let d = (a.g(a.x0) - 0.5 * a.m).abs().max((a.g(a.x1) - 0.5 * a.m).abs());
        worst = worst.max(d / a.m.abs().max(1.0));
        pass &= a.x0 < a.x_crit && a.x_crit < a.x1 && d <= tol;
    }
    Ok((
        pass,
        format!(
            "x_crit={:.15} M={:.15}; 100 random pairs bracketed, worst |G-M/2|={worst:.1e}",
            g.x_crit, g.m
        ),
    ))
}

fn criterion_9() -> Outcome {
    let g = base_grid();
    let tq = base_tq(&g);
    let f = random_localized_field(&g, 4, FieldKind::Complex, 9).map_err(err)?;
    let mut unitarity = 0.0f64;
    for t in [0.1, 1.0, 7.5, -3.0] {
        let u = propagate(&f, t).map_err(err)?;
        unitarity = unitarity.max(rel(u.l2_norm(), f.l2_norm()));
    }
    let phi = strichartz_ratio(&f, &tq).map_err(err)?.phi;
    let mut invariance = 0.0f64;
    for moved in [
        translate(&f, [0.37, -0.61]).map_err(err)?,
        modulate(&f, [0.45, -0.3]).map_err(err)?,
        dilate(&f, 1.25).map_err(err)?,
    ] {
        invariance = invariance.max(rel(strichartz_ratio(&moved, &tq).map_err(err)?.phi, phi));
    }
    let ratios = (0..10)
        .map(|k| {
            let h = random_localized_field(&g, 4, FieldKind::Complex, 100 + k)?;
            Ok(dual_symmetry_check(&h, &tq)?.ratio)
        })
        .collect::<Result<Vec<f64>, strichartz_core::error::LabError>>()
        .map_err(err)?;
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    Ok((
        unitarity <= 1e-12 && invariance <= 1e-8 && spread <= 1e-6,
        format!(
            "unitarity={unitarity:.1e} phi invariance={invariance:.1e} dual ratio spread={spread:.1e} (ratio/2pi={:.12})",
            lo / (2.0 * PI)
        ),
    ))
}

fn criterion_10() -> Outcome {
    let g = base_grid();
    let tq = base_tq(&g);
    let quartic = ComplexField2D::from_fn(g, Space::Physical, |x, y| {
        Complex64::new((-(x * x + y * y).powi(2)).exp(), 0.0)
    })
    .map_err(err)?;
    let qs = random_rectangles(0.7, 1.0, 10_000, 1).map_err(err)?;
    let fe = functional_equation_residual(&quartic, &qs).map_err(err)?;
    let phi_q = strichartz_ratio(&quartic, &tq).map_err(err)?.phi;
    let phi_g = gaussian_ratio_closed_form(1.0).map_err(err)?;
    let random = to_physical(&initial_field(&g, InitKind::RandomComplex, 42).map_err(err)?).map_err(err)?;
    let el = el_residual(&random, &tq).map_err(err)?;
    Ok((
        fe.rms >= 1e-2 && phi_g - phi_q >= 1e-3 && el >= 0.1,
        format!("quartic fe_rms={:.3e} phi={phi_q:.6} (gap {:.3e}); random el_residual={el:.3}", fe.rms, phi_g - phi_q),
    ))
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut all = true;

    let start = Instant::now();
    let field = match criterion_1(dir.path()) {
        Ok((outcome, field)) => {
            all &= report(1, "extremizer recovery", start, Ok(outcome));
            Some(to_physical(&field).expect("stored field"))
        }
        Err(e) => {
            all &= report(1, "extremizer recovery", start, Err(e));
            None
        }
    };
    let need = || -> Result<&ComplexField2D, String> { field.as_ref().ok_or_else(|| "no converged field".to_string()) };

    let t = Instant::now();
    all &= report(2, "Gaussian characterization", t, need().and_then(criterion_2));
    let t = Instant::now();
    all &= report(3, "Fourier decay", t, need().and_then(criterion_3));
    let t = Instant::now();
    all &= report(4, "Q-route consistency", t, criterion_4());
    let t = Instant::now();
    all &= report(5, "bilinear decay", t, criterion_5(dir.path()));
    let t = Instant::now();
    all &= report(6, "weight bound", t, criterion_6());
    let t = Instant::now();
    all &= report(7, "bootstrap ingredients", t, need().and_then(criterion_7));
    let t = Instant::now();
    all &= report(8, "G-analysis", t, criterion_8());
    let t = Instant::now();
    all &= report(9, "symmetry suite", t, criterion_9());
    let t = Instant::now();
    all &= report(10, "negative controls", t, criterion_10());

    if !all {
        std::process::exit(1);
    }
}
