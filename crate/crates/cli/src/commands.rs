//! One function per subcommand. Each resolves its defaults, validates
//! before computing, writes its files and returns the verdict.

use std::path::Path;

use hermproj_core::checks::{identity_suite, SuiteSpec};
use hermproj_core::hermite::{enumerate_level, level_degree};
use hermproj_core::localization::{default_resolution, AnnulusSpec, DEFAULT_BUDGET};
use hermproj_core::mehler::{kernel_direct, kernel_mehler, OscIntegralSpec};
use hermproj_core::normlab::{
    asymmetry_profile, assemble, endpoint_sweep, mu_sweep, norm_p_q_power, sup_norm_sweep,
    unscaled_norm, PowerSpec, SweepResult, SweepRow,
};
use hermproj_core::{Error, Region};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::config::{RunConfig, Slice};
use crate::report::{csv_writer, ensure_dir, num, write_json, write_sweep_csv, Outcome, Report, Verdict};
use crate::CliError;

/// Default asymmetry and μ-sweep shell widths.
pub const DEFAULT_SHELLS: [f64; 4] = [0.25, 0.125, 0.0625, 0.03125];

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// `q∘ = 2(d+3)/(d+1)`.
pub fn critical_q(d: usize) -> f64 {
    2.0 * (d as f64 + 3.0) / (d as f64 + 1.0)
}

fn check_d(d: usize) -> Result<usize, CliError> {
    if d == 0 {
        return Err(config_err("--d must be at least 1"));
    }
    Ok(d)
}

fn power_spec(c: &RunConfig) -> Result<PowerSpec, CliError> {
    let base = PowerSpec::default();
    let spec = PowerSpec {
        restarts: c.restarts.unwrap_or(base.restarts),
        tol: c.power_tol.unwrap_or(base.tol),
        max_iter: c.max_iter.unwrap_or(base.max_iter),
        seed: c.seed.unwrap_or(0),
    };
    if spec.restarts == 0 || spec.max_iter == 0 || !(spec.tol > 0.0) {
        return Err(config_err("power method needs --restarts ≥ 1, --max-iter ≥ 1 and --power-tol > 0"));
    }
    Ok(spec)
}

fn resolution(c: &RunConfig, d: usize) -> Result<f64, CliError> {
    let r = c.resolution.unwrap_or_else(|| default_resolution(d));
    if !(r >= 2.0) {
        return Err(config_err(format!("--resolution = {r} must be at least 2")));
    }
    Ok(r)
}

fn budget(c: &RunConfig) -> Result<usize, CliError> {
    match c.budget.unwrap_or(DEFAULT_BUDGET) {
        0 => Err(config_err("--budget must be positive")),
        b => Ok(b),
    }
}

fn shell(mu: f64, what: &str) -> Result<Region, CliError> {
    AnnulusSpec::plus(mu)
        .map(Region::Shell)
        .map_err(|e| config_err(format!("{what}: {e}")))
}

fn fit_json(result: &SweepResult) -> Value {
    json!({
        "slope": result.fit.slope,
        "intercept": result.fit.intercept,
        "stderr": result.fit.stderr,
        "r_squared": result.fit.r_squared,
        "samples": result.fit.samples,
    })
}

fn slope_line(label: &str, target: Option<f64>, slope: f64, stderr: f64, verdict: Verdict) -> String {
    let target = target.map(|t| format!("{t:+.4}")).unwrap_or_else(|| "none".into());
    format!("{label}: target {target}, measured {slope:+.4}, stderr {stderr:.4}, verdict {verdict:?}")
}

pub fn phase_check(c: &RunConfig) -> Result<Outcome, CliError> {
    let base = SuiteSpec::default();
    let spec = SuiteSpec {
        samples: c.samples.unwrap_or(base.samples),
        d: check_d(c.d.unwrap_or(base.d))?,
        mu: c.mu.unwrap_or(base.mu),
        mu_tilde: c.mu_tilde.unwrap_or(base.mu_tilde),
        seed: c.seed.unwrap_or(0),
        ..base
    };
    if spec.samples == 0 {
        return Err(config_err("--samples must be positive"));
    }
    let checks = identity_suite(&spec).map_err(|e| config_err(e.to_string()))?;
    let passed = checks.iter().all(|k| k.passed);
    let summary = checks
        .iter()
        .map(|k| {
            format!(
                "{:<28} max error {:.3e}  tolerance {:.0e}  {}",
                k.name,
                k.max_error,
                k.tolerance,
                if k.passed { "pass" } else { "FAIL" }
            )
        })
        .collect();
    let report = Report::new("phase-check", spec.seed, json!(spec), Verdict::from_pass(passed), json!(checks));
    let dir = c.out_dir();
    ensure_dir(&dir)?;
    let files = vec![write_json(&dir, "phase-check.json", &report)?];
    Ok(Outcome { report, files, summary })
}

/// Evaluation pairs for `kernel`.
pub fn kernel_pairs(d: usize, lambda: u32, points: usize, slice: Slice, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let reach = 1.2 * (lambda as f64).sqrt();
    match slice {
        Slice::Diagonal => (0..points)
            .map(|i| {
                let t = if points == 1 { 0.0 } else { -reach + 2.0 * reach * i as f64 / (points - 1) as f64 };
                let mut x = vec![0.0; d];
                x[0] = t;
                (x.clone(), x)
            })
            .collect(),
        Slice::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let in_ball = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                let n = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                let r = reach * rng.random::<f64>().powf(1.0 / d as f64);
                g.into_iter().map(|v| r * v / n).collect()
            };
            (0..points)
                .map(|i| {
                    let x = in_ball(&mut rng);
                    // every fourth pair sits near the diagonal, where |K| peaks
                    let y = if i % 4 == 0 {
                        x.iter()
                            .map(|v| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                v + 0.3 * z
                            })
                            .collect()
                    } else {
                        in_ball(&mut rng)
                    };
                    (x, y)
                })
                .collect()
        }
    }
}

pub fn kernel(c: &RunConfig) -> Result<Outcome, CliError> {
    let d = check_d(c.d.unwrap_or(1))?;
    let lambda = c.lambda.unwrap_or(5);
    level_degree(d, lambda)?;
    let points = c.points.unwrap_or(101);
    if points == 0 {
        return Err(config_err("--points must be positive"));
    }
    let slice = c.slice.unwrap_or(Slice::Diagonal);
    let seed = c.seed.unwrap_or(0);
    let base = OscIntegralSpec::default();
    let spec = OscIntegralSpec {
        j_max: c.j_max.unwrap_or(base.j_max),
        tolerance: c.tolerance.unwrap_or(base.tolerance),
        skip_phase: c.skip_phase.unwrap_or(base.skip_phase),
        ..base
    };
    spec.validate().map_err(|e| config_err(e.to_string()))?;
    let rel_tol = c.kernel_rel.unwrap_or(1e-4);
    let config = json!({
        "d": d, "lambda": lambda, "points": points, "slice": slice, "seed": seed,
        "osc": spec, "kernel_rel": rel_tol,
    });

    let dir = c.out_dir();
    ensure_dir(&dir)?;
    let csv_path = dir.join("kernel.csv");
    let mut w = csv_writer(&csv_path)?;
    let mut header = vec!["i".to_string()];
    header.extend((1..=d).map(|k| format!("x{k}")));
    header.extend((1..=d).map(|k| format!("y{k}")));
    header.extend(["k_direct", "re_k_mehler", "im_k_mehler", "abs_diff"].map(String::from));
    w.write_record(&header)?;

    let (mut max_k, mut max_diff, mut max_quad_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut failure = None;
    let mut done = 0;
    for (i, (x, y)) in kernel_pairs(d, lambda, points, slice, seed).into_iter().enumerate() {
        let direct = kernel_direct(lambda, &x, &y)?;
        let mehler = match kernel_mehler(lambda, &x, &y, &spec) {
            Ok(m) => m,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let diff = (mehler.value - direct).norm();
        max_k = max_k.max(direct.abs());
        max_diff = max_diff.max(diff);
        max_quad_err = max_quad_err.max(mehler.error);
        let mut rec = vec![i.to_string()];
        rec.extend(x.iter().chain(&y).map(|&v| num(v)));
        rec.extend([num(direct), num(mehler.value.re), num(mehler.value.im), num(diff)]);
        w.write_record(&rec)?;
        done += 1;
    }
    w.flush()?;
    let relative = if max_k > 0.0 { max_diff / max_k } else { max_diff };
    let complete = failure.is_none();
    let verdict = Verdict::from_pass(complete && relative <= rel_tol);
    let mut results = json!({
        "complete": complete,
        "points_written": done,
        "max_abs_k_direct": max_k,
        "max_abs_diff": max_diff,
        "relative_deviation": relative,
        "max_quadrature_error": max_quad_err,
        "columns": header,
    });
    if let Some(e) = &failure {
        results["error"] = json!(e.to_string());
    }
    let mut report = Report::new("kernel", seed, config, verdict, results);
    if !complete {
        report.notes.push(format!("partial file: stopped after {done} of {points} pairs"));
    }
    let files = vec![csv_path, write_json(&dir, "kernel.json", &report)?];
    if let Some(e) = failure {
        if !matches!(e, Error::Accuracy { .. }) {
            return Err(e.into());
        }
    }
    let summary = vec![format!(
        "kernel d={d} λ={lambda}: max|ΔK| = {max_diff:.3e}, max|K| = {max_k:.3e}, relative {relative:.3e} (tolerance {rel_tol:.0e}), {}",
        if complete { "complete" } else { "PARTIAL" }
    )];
    Ok(Outcome { report, files, summary })
}

pub fn norm(c: &RunConfig) -> Result<Outcome, CliError> {
    let d = check_d(c.d.unwrap_or(3))?;
    let lambda = c.lambda.unwrap_or(21);
    level_degree(d, lambda)?;
    let q = c.q.unwrap_or_else(|| critical_q(d));
    let p = c.p.unwrap_or(2.0);
    if !(p > 1.0 && p <= 2.0 && q >= 2.0 && q.is_finite()) {
        return Err(config_err(format!("need 1 < p ≤ 2 ≤ q < ∞, got p = {p}, q = {q}")));
    }
    let ball = Region::Ball { radius: 2.0 };
    let out_region = match c.mu {
        Some(m) => shell(m, "--mu")?,
        None => ball,
    };
    let in_region = match c.mu_tilde {
        Some(m) => shell(m, "--mu-tilde")?,
        None => ball,
    };
    let res = resolution(c, d)?;
    let budget = budget(c)?;
    let power = power_spec(c)?;
    let config = json!({
        "d": d, "lambda": lambda, "p": p, "q": q, "mu": c.mu, "mu_tilde": c.mu_tilde,
        "in_region": in_region, "out_region": out_region, "resolution": res, "budget": budget, "power": power,
    });
    let op = assemble(lambda, d, in_region, out_region, res, budget)?;
    let est = norm_p_q_power(&op, p, q, &power)?;
    let unscaled = unscaled_norm(est.value, lambda, d, p, q);
    let dir = c.out_dir();
    ensure_dir(&dir)?;
    let row = SweepRow {
        d,
        lambda,
        mu: c.mu,
        mu_tilde: c.mu_tilde,
        p,
        q,
        norm: est.value,
        residual: est.residual,
        restarts_agreeing: est.restarts_agreeing,
    };
    let csv_path = dir.join("norm.csv");
    write_sweep_csv(&csv_path, &[row])?;
    let results = json!({
        "estimate": est,
        "norm_rescaled": est.value,
        "norm_unscaled": unscaled,
        "in_points": op.in_grid().len(),
        "out_points": op.out_grid().len(),
        "rank": op.rank,
    });
    let report = Report::new("norm", power.seed, config, Verdict::Pass, results);
    let files = vec![csv_path, write_json(&dir, "norm.json", &report)?];
    let summary = vec![format!(
        "‖T‖_{{{p}→{q}}} = {:.6} (rescaled), {:.6e} (unscaled); {} of {} restarts agree, residual {:.1e}",
        est.value, unscaled, est.restarts_agreeing, power.restarts, est.residual
    )];
    Ok(Outcome { report, files, summary })
}

/// Ten degrees spread geometrically over `[100, 5000]`.
pub fn default_sup_degrees() -> Vec<u32> {
    (0..10).map(|i| (100.0 * 50f64.powf(i as f64 / 9.0)).round() as u32).collect()
}

pub fn sweep_endpoint(c: &RunConfig) -> Result<Outcome, CliError> {
    let d = check_d(c.d.unwrap_or(3))?;
    if d == 1 {
        return sweep_sup(c);
    }
    let q = c.q.unwrap_or_else(|| critical_q(d));
    if !(q > 2.0 && q.is_finite()) {
        return Err(config_err(format!("endpoint sweep needs 2 < q < ∞, got {q}")));
    }
    let lambdas = c
        .lambdas
        .clone()
        .unwrap_or_else(|| [9u32, 19, 29, 39].iter().map(|k| d as u32 + 2 * k).collect());
    if lambdas.len() < 3 {
        return Err(config_err("--lambdas needs at least three values"));
    }
    for &l in &lambdas {
        level_degree(d, l)?;
    }
    let res = resolution(c, d)?;
    let budget = budget(c)?;
    let power = power_spec(c)?;
    let at_endpoint = (q - critical_q(d)).abs() < 1e-12;
    // the endpoint law is asserted for d ≥ 3 only
    let target = (at_endpoint && d >= 3).then(|| -1.0 / (2.0 * (d as f64 + 3.0)));
    let band = c.band.unwrap_or(0.05);
    let config = json!({
        "d": d, "q": q, "lambdas": lambdas, "resolution": res, "budget": budget, "power": power,
        "target_slope": target, "band": band,
    });
    let result = endpoint_sweep(d, &lambdas, q, res, budget, &power)?;
    let verdict = match target {
        Some(t) => Verdict::from_pass((result.fit.slope - t).abs() <= band),
        None => Verdict::NotAsserted,
    };
    let mut notes = result.regime_notes.clone();
    if d == 2 && at_endpoint {
        notes.push("d = 2 endpoint behaviour is open; measured only".into());
    }
    finish_sweep(c, "sweep-endpoint", power.seed, config, verdict, &result, target, notes)
}

fn sweep_sup(c: &RunConfig) -> Result<Outcome, CliError> {
    if let Some(q) = c.q {
        if q.is_finite() {
            return Err(config_err("in d = 1 the endpoint sweep measures sup norms; omit --q or pass inf"));
        }
    }
    let ks: Vec<u32> = match &c.lambdas {
        Some(ls) => ls
            .iter()
            .map(|&l| level_degree(1, l))
            .collect::<Result<_, _>>()?,
        None => default_sup_degrees(),
    };
    if ks.len() < 3 {
        return Err(config_err("--lambdas needs at least three values"));
    }
    let target = -1.0 / 12.0;
    let band = c.band.unwrap_or(0.01);
    let fit = sup_norm_sweep(&ks)?;
    let rows: Vec<SweepRow> = ks
        .iter()
        .zip(&fit.samples)
        .map(|(&k, &(_, v))| SweepRow {
            d: 1,
            lambda: 2 * k + 1,
            mu: None,
            mu_tilde: None,
            p: 2.0,
            q: f64::INFINITY,
            norm: v,
            residual: 0.0,
            restarts_agreeing: 1,
        })
        .collect();
    let verdict = Verdict::from_pass((fit.slope - target).abs() <= band);
    let config = json!({
        "d": 1, "q": "inf", "degrees": ks, "target_slope": target, "band": band,
    });
    let result = SweepResult { rows, fit, regime_notes: Vec::new() };
    finish_sweep(c, "sweep-endpoint", 0, config, verdict, &result, Some(target), Vec::new())
}

pub fn sweep_mu(c: &RunConfig) -> Result<Outcome, CliError> {
    let d = check_d(c.d.unwrap_or(2))?;
    let lambda = c.lambda.unwrap_or(402);
    level_degree(d, lambda)?;
    if let Some(q) = c.q {
        if q != 2.0 {
            return Err(config_err(format!("the μ sweep uses the Gram route and needs q = 2, got {q}")));
        }
    }
    let mus = c.mus.clone().unwrap_or_else(|| DEFAULT_SHELLS.to_vec());
    if mus.len() < 3 {
        return Err(config_err("--mus needs at least three values"));
    }
    for &m in &mus {
        shell(m, "--mus")?;
    }
    let res = resolution(c, d)?;
    let budget = budget(c)?;
    let target = 0.25;
    let band = c.band.unwrap_or(0.10);
    let config = json!({
        "d": d, "lambda": lambda, "q": 2.0, "mus": mus, "resolution": res, "budget": budget,
        "target_slope": target, "band": band,
    });
    let result = mu_sweep(lambda, d, &mus, res, budget)?;
    let verdict = Verdict::from_pass((result.fit.slope - target).abs() <= band);
    let notes = result.regime_notes.clone();
    finish_sweep(c, "sweep-mu", c.seed.unwrap_or(0), config, verdict, &result, Some(target), notes)
}

/// Checks that `ratios` never rise by more than `slack` relative to the
/// previous entry.
pub fn non_increasing_within(ratios: &[f64], slack: f64) -> bool {
    ratios.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}

pub fn sweep_asym(c: &RunConfig) -> Result<Outcome, CliError> {
    let d = check_d(c.d.unwrap_or(3))?;
    let lambda = c.lambda.unwrap_or(41);
    level_degree(d, lambda)?;
    let q = c.q.unwrap_or(3.0);
    let mu = c.mu.unwrap_or(0.25);
    shell(mu, "--mu")?;
    let mts = c.mu_tildes.clone().unwrap_or_else(|| DEFAULT_SHELLS.to_vec());
    if mts.len() < 3 {
        return Err(config_err("--mu-tildes needs at least three values"));
    }
    for &m in &mts {
        shell(m, "--mu-tildes")?;
    }
    let res = resolution(c, d)?;
    let budget = budget(c)?;
    let power = power_spec(c)?;
    let min_gain = c.min_gain.unwrap_or(0.02);
    let slack = c.monotone_slack.unwrap_or(0.2);
    let config = json!({
        "d": d, "lambda": lambda, "q": q, "mu": mu, "mu_tildes": mts, "resolution": res,
        "budget": budget, "power": power, "min_gain": min_gain, "monotone_slack": slack,
    });
    let result = asymmetry_profile(lambda, d, mu, &mts, q, res, budget, &power).map_err(|e| match e {
        Error::Input(m) => config_err(m),
        other => other.into(),
    })?;
    // the fit is against μ̃/μ: ratio ∼ (μ̃/μ)^c, so the slope is c itself
    let gain = result.fit.slope;
    let ratios: Vec<f64> = result.fit.samples.iter().map(|s| s.1).collect();
    let monotone = non_increasing_within(&ratios, slack);
    let verdict = Verdict::from_pass(monotone && gain >= min_gain);
    let mut out = finish_sweep(c, "sweep-asym", power.seed, config, verdict, &result, None, result.regime_notes.clone())?;
    out.report.results["ratios"] = json!(ratios);
    out.report.results["monotone_within_slack"] = json!(monotone);
    out.report.results["gain_exponent"] = json!(gain);
    out.report.results["slope_vs_mu_over_mu_tilde"] = json!(-gain);
    out.summary = vec![
        format!("normalized ratios (μ̃ = {mts:?}): {ratios:.5?}"),
        format!(
            "non-increasing within {:.0}%: {monotone}; gain exponent c = {gain:+.4} ± {:.4} (need ≥ {min_gain}); slope vs log(μ/μ̃) = {:+.4}; verdict {:?}",
            100.0 * slack,
            result.fit.stderr,
            -gain,
            verdict
        ),
    ];
    let dir = c.out_dir();
    write_json(&dir, "sweep-asym.json", &out.report)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn finish_sweep(
    c: &RunConfig,
    name: &str,
    seed: u64,
    config: Value,
    verdict: Verdict,
    result: &SweepResult,
    target: Option<f64>,
    notes: Vec<String>,
) -> Result<Outcome, CliError> {
    let dir = c.out_dir();
    ensure_dir(&dir)?;
    let csv_path = dir.join(format!("{name}.csv"));
    write_sweep_csv(&csv_path, &result.rows)?;
    let results = json!({
        "fit": fit_json(result),
        "target_slope": target,
        "rows": result.rows,
    });
    let mut report = Report::new(name, seed, config, verdict, results);
    report.notes = notes;
    let json_path = write_json(&dir, &format!("{name}.json"), &report)?;
    let mut summary: Vec<String> = result
        .rows
        .iter()
        .map(|r| format!("λ = {:>5}  μ = {:<8} μ̃ = {:<8} norm = {:.6e}", r.lambda, fmt_opt(r.mu), fmt_opt(r.mu_tilde), r.norm))
        .collect();
    summary.push(slope_line(name, target, result.fit.slope, result.fit.stderr, verdict));
    summary.extend(report.notes.iter().cloned());
    Ok(Outcome { report, files: vec![csv_path, json_path], summary })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "-".into())
}

pub fn basis(c: &RunConfig) -> Result<Outcome, CliError> {
    let d = check_d(c.d.unwrap_or(1))?;
    let lambda = c.lambda.unwrap_or(5);
    let level = enumerate_level(d, lambda)?;
    let k = level_degree(d, lambda)?;
    let dir = c.out_dir();
    ensure_dir(&dir)?;
    let csv_path = dir.join("basis.csv");
    write_basis_csv(&csv_path, d, &level)?;
    let results = json!({ "d": d, "lambda": lambda, "k": k, "dim": level.len() });
    let report = Report::new("basis", 0, json!({ "d": d, "lambda": lambda }), Verdict::Pass, results);
    let files = vec![csv_path, write_json(&dir, "basis.json", &report)?];
    let summary = vec![format!("d = {d}, λ = {lambda}: degree k = {k}, eigenspace dimension {}", level.len())];
    Ok(Outcome { report, files, summary })
}

fn write_basis_csv(path: &Path, d: usize, level: &[hermproj_core::MultiIndex]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["index".to_string()];
    header.extend((1..=d).map(|i| format!("alpha{i}")));
    w.write_record(&header)?;
    for (i, a) in level.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(a.0.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
