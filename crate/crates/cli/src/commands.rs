use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mmn_predict::mmn::sample_mmn;
use mmn_predict::posterior::{posterior as posterior_of, posterior_mean, NormalPrior};
use mmn_predict::predictive::{
    build, normal_prior_bayes, sample_predictive, Estimator, PredictionProblem, PredictiveDensity,
};
use mmn_predict::risk::{mre_risk_exact, risk_sweep as sweep, sweep_theta, Contender, SweepPoint};
use mmn_predict::rng::stream;
use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{Common, Format};

pub const SEED_ENV: &str = "MMN_PREDICT_SEED";
pub const RISK_HEADER: [&str; 7] = ["t", "estimator", "risk", "stderr", "n", "seed", "errors"];
pub const DIFF_HEADER: [&str; 6] = [
    "t",
    "estimator_a",
    "estimator_b",
    "diff",
    "diff_stderr",
    "errors",
];
const DEFAULT_RISK_N: usize = 100_000;

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    RunConfig::load(path)
}

/// `--seed`, then the config, then `MMN_PREDICT_SEED`, then 0.
fn seed(common: &Common, config: &RunConfig) -> Result<u64, CliError> {
    if let Some(s) = common.seed.or(config.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))
        }),
        Err(_) => Ok(0),
    }
}

fn parse_vector(text: &str, d: usize, name: &str) -> Result<DVector<f64>, CliError> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("--{name}: {e}")))?;
    if values.len() != d {
        return Err(CliError::Config(format!(
            "--{name} has {} entries, model has dimension {d}",
            values.len()
        )));
    }
    Ok(DVector::from_vec(values))
}

/// `lo:hi:step`, endpoints included.
fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || {
        CliError::Config(format!(
            "--grid must be lo:hi:step with lo ≤ hi and step > 0, got {text:?}"
        ))
    };
    let parts = text
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if !(lo.is_finite() && hi.is_finite() && lo <= hi && step > 0.0) {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

fn parse_estimator(text: &str, config: &RunConfig) -> Result<Estimator, CliError> {
    let text = text.trim();
    if text.starts_with('{') {
        return serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("--estimator: {e}")));
    }
    if let Some(e) = config.estimators.iter().find(|e| e.name() == text) {
        return Ok(*e);
    }
    serde_json::from_value(json!({ "kind": text }))
        .map_err(|e| CliError::Config(format!("--estimator {text}: {e}")))
}

fn prior(config: &RunConfig, d: usize) -> Result<NormalPrior, CliError> {
    config
        .prior
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a prior in the config".into()))?
        .build(d)
}

fn predictive(
    problem: &PredictionProblem,
    estimator: Estimator,
    config: &RunConfig,
    x: &DVector<f64>,
) -> Result<PredictiveDensity, CliError> {
    Ok(match estimator {
        Estimator::NormalPriorBayes => {
            normal_prior_bayes(problem, &prior(config, problem.dim())?, x)?
        }
        e => build(problem, e, x)?,
    })
}

/// Estimator name with its parameters, unique within a sweep.
fn label(e: &Estimator) -> String {
    match e {
        Estimator::RestrictedInterval { c_lo, c_hi } => {
            format!("restricted_interval[{c_lo};{c_hi}]")
        }
        Estimator::RestrictedCylinder { radius } => format!("restricted_cylinder[{radius}]"),
        e => e.name().to_string(),
    }
}

fn emit(common: &Common, text: &str) -> Result<(), CliError> {
    match &common.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn matrix_csv(header: &[String], rows: &DMatrix<f64>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for row in rows.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(csv_error)?;
    }
    finish(w)
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn columns(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

pub fn density(common: &Common, estimator: &str, x: &str, grid: &str) -> Result<(), CliError> {
    let config = load(common)?;
    let problem = config.model.problem()?;
    let d = problem.dim();
    let estimator = parse_estimator(estimator, &config)?;
    let x = parse_vector(x, d, "x")?;
    let axis = parse_grid(grid)?;
    let q = predictive(&problem, estimator, &config, &x)?;
    let total = axis
        .len()
        .checked_pow(d as u32)
        .filter(|n| *n <= 10_000_000)
        .ok_or_else(|| {
            CliError::Config(format!(
                "grid of {} points per axis is too large in dimension {d}",
                axis.len()
            ))
        })?;
    let mut rows = DMatrix::zeros(total, d + 1);
    for i in 0..total {
        let mut rest = i;
        let mut y = DVector::zeros(d);
        for k in (0..d).rev() {
            y[k] = axis[rest % axis.len()];
            rest /= axis.len();
        }
        rows[(i, d)] = q.log_density(&y)?;
        for k in 0..d {
            rows[(i, k)] = y[k];
        }
    }
    let text = match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut header = columns("y", d);
            header.push("log_density".into());
            matrix_csv(&header, &rows)?
        }
        Format::Json => {
            let out: Vec<_> = rows
                .row_iter()
                .map(|r| json!({ "y": r.columns(0, d).iter().collect::<Vec<_>>(), "log_density": r[d] }))
                .collect();
            format!(
                "{}\n",
                json!({ "estimator": estimator, "x": x.as_slice(), "rows": out })
            )
        }
    };
    emit(common, &text)
}

pub fn sample(common: &Common, estimator: Option<&str>, x: Option<&str>) -> Result<(), CliError> {
    let config = load(common)?;
    let problem = config.model.problem()?;
    let d = problem.dim();
    let count = common.n.or(config.n).unwrap_or(1);
    let mut rng = stream(seed(common, &config)?);
    let (prefix, draws) = match estimator {
        Some(e) => {
            let estimator = parse_estimator(e, &config)?;
            let x = x.ok_or_else(|| {
                CliError::Config("sampling a predictive density needs --x".into())
            })?;
            let q = predictive(&problem, estimator, &config, &parse_vector(x, d, "x")?)?;
            ("y", sample_predictive(&q, count, &mut rng)?)
        }
        None => {
            if x.is_some() {
                return Err(CliError::Config("--x only applies with --estimator".into()));
            }
            let theta = config
                .theta
                .clone()
                .map(DVector::from_vec)
                .unwrap_or_else(|| DVector::zeros(d));
            (
                "x",
                sample_mmn(&problem.x_distribution(theta)?, count, &mut rng),
            )
        }
    };
    let text = match common.format.unwrap_or(Format::Csv) {
        Format::Csv => matrix_csv(&columns(prefix, d), &draws)?,
        Format::Json => {
            let rows: Vec<Vec<f64>> = draws
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect();
            format!("{}\n", json!({ "draws": rows }))
        }
    };
    emit(common, &text)
}

pub fn posterior(common: &Common, x: &str) -> Result<(), CliError> {
    let config = load(common)?;
    let problem = config.model.problem()?;
    let d = problem.dim();
    let x = parse_vector(x, d, "x")?;
    let prior = prior(&config, d)?;
    let post = posterior_of(&problem.x_distribution(DVector::zeros(d))?, &prior, &x)?;
    let mean = posterior_mean(&post)?;
    let text = match common.format.unwrap_or(Format::Json) {
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({
                "location": post.location.as_slice(),
                "a_star": post.a_star.as_slice(),
                "A": post.tilt_a,
                "B": post.tilt_b,
                "posterior_mean": mean.as_slice(),
            }))
            .expect("report serializes")
        ),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["field", "index", "value"])
                .map_err(csv_error)?;
            let vectors = [
                ("location", &post.location),
                ("a_star", &post.a_star),
                ("posterior_mean", &mean),
            ];
            for (name, v) in vectors {
                for (i, value) in v.iter().enumerate() {
                    w.write_record([name.to_string(), (i + 1).to_string(), value.to_string()])
                        .map_err(csv_error)?;
                }
            }
            for (name, value) in [("A", post.tilt_a), ("B", post.tilt_b)] {
                w.write_record([name.to_string(), String::new(), value.to_string()])
                    .map_err(csv_error)?;
            }
            finish(w)?
        }
    };
    emit(common, &text)
}

pub fn mre_risk(common: &Common) -> Result<(), CliError> {
    let config = load(common)?;
    let problem = config.model.problem()?;
    let risk = mre_risk_exact(&problem)?;
    let text = match common.format {
        None => format!("{risk}\n"),
        Some(Format::Csv) => format!("d,mre_risk\n{},{risk}\n", problem.dim()),
        Some(Format::Json) => format!("{}\n", json!({ "d": problem.dim(), "mre_risk": risk })),
    };
    emit(common, &text)
}

struct SweepFiles {
    risks: String,
    differences: String,
}

fn sweep_csv(
    points: &[SweepPoint],
    labels: &[String],
    n: usize,
    seed: u64,
) -> Result<SweepFiles, CliError> {
    let mut risks = csv::Writer::from_writer(Vec::new());
    let mut diffs = csv::Writer::from_writer(Vec::new());
    risks.write_record(RISK_HEADER).map_err(csv_error)?;
    diffs.write_record(DIFF_HEADER).map_err(csv_error)?;
    for p in points {
        let t = p.t.to_string();
        match &p.outcome {
            Ok(r) => {
                for (name, est) in &r.risks {
                    risks
                        .write_record([
                            &t,
                            name,
                            &est.mean.to_string(),
                            &est.std_error.to_string(),
                            &est.n.to_string(),
                            &seed.to_string(),
                            "",
                        ])
                        .map_err(csv_error)?;
                }
                for d in &r.differences {
                    let e = &d.estimate;
                    diffs
                        .write_record([
                            &t,
                            &d.baseline,
                            &d.other,
                            &e.mean.to_string(),
                            &e.std_error.to_string(),
                            "",
                        ])
                        .map_err(csv_error)?;
                }
            }
            Err(err) => {
                let msg = err.to_string();
                for name in labels {
                    risks
                        .write_record([&t, name, "", "", &n.to_string(), &seed.to_string(), &msg])
                        .map_err(csv_error)?;
                }
                for name in &labels[1..] {
                    diffs
                        .write_record([&t, &labels[0], name, "", "", &msg])
                        .map_err(csv_error)?;
                }
            }
        }
    }
    Ok(SweepFiles {
        risks: finish(risks)?,
        differences: finish(diffs)?,
    })
}

fn summary(out: &mut String, c: Option<f64>, points: &[SweepPoint], labels: &[String]) {
    if let Some(c) = c {
        let _ = writeln!(out, "c = {c}");
    }
    let _ = writeln!(
        out,
        "{:>8}  {:<28} {:>12} {:>10} {:>12} {:>10} {:>8}",
        "t", "estimator", "risk", "stderr", "gain", "stderr", "ratio"
    );
    for p in points {
        match &p.outcome {
            Ok(r) => {
                let base = r.risks[0].1.mean;
                for (name, est) in &r.risks {
                    let (gain, gain_se) = r
                        .difference(name)
                        .map(|d| (format!("{:.6}", d.mean), format!("{:.6}", d.std_error)))
                        .unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{:>8}  {:<28} {:>12.6} {:>10.6} {:>12} {:>10} {:>8.4}",
                        p.t,
                        name,
                        est.mean,
                        est.std_error,
                        gain,
                        gain_se,
                        est.mean / base
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{:>8}  {} failed: {e}", p.t, labels.join(","));
            }
        }
    }
}

pub fn risk_sweep(common: &Common) -> Result<(), CliError> {
    let config = load(common)?;
    if config.estimators.is_empty() {
        return Err(CliError::Config(
            "risk-sweep needs at least one estimator".into(),
        ));
    }
    if config.t_grid.is_empty() {
        return Err(CliError::Config(
            "risk-sweep needs a non-empty t_grid".into(),
        ));
    }
    let n = common.n.or(config.n).unwrap_or(DEFAULT_RISK_N);
    let seed = seed(common, &config)?;
    let workers = common.workers.or(config.workers).unwrap_or(1);
    let dir: PathBuf = common
        .out
        .clone()
        .or_else(|| config.output.clone())
        .ok_or_else(|| {
            CliError::Config("risk-sweep needs --out or an output directory in the config".into())
        })?;
    let labels: Vec<String> = config.estimators.iter().map(label).collect();
    let base = config.model.problem()?;
    let prior = match config.estimators.contains(&Estimator::NormalPriorBayes) {
        true => Some(prior(&config, base.dim())?),
        false => None,
    };
    let runs: Vec<(Option<f64>, f64)> = if config.c_values.is_empty() {
        vec![(None, config.model.sigma2_y)]
    } else {
        config
            .c_values
            .iter()
            .map(|c| (Some(*c), c * config.model.sigma2_x))
            .collect()
    };
    let mut outputs = Vec::new();
    let mut table = String::new();
    let mut first_error = None;
    let mut any_ok = false;
    for (c, sigma2_y) in runs {
        let problem = config.model.problem_with_sigma2_y(sigma2_y)?;
        let contenders: Vec<Contender<'_>> = config
            .estimators
            .iter()
            .zip(&labels)
            .map(|(e, name)| match e {
                Estimator::NormalPriorBayes => {
                    let prior = prior.as_ref().expect("prior resolved above");
                    Contender::new(name.clone(), |x: &DVector<f64>| {
                        normal_prior_bayes(&problem, prior, x)
                    })
                }
                e => {
                    let (e, p) = (*e, &problem);
                    Contender::new(name.clone(), move |x: &DVector<f64>| build(p, e, x))
                }
            })
            .collect();
        let points = sweep(
            &problem,
            &contenders,
            &config.t_grid,
            |t| sweep_theta(problem.a(), t),
            n,
            seed,
            workers,
        )?;
        for p in &points {
            match &p.outcome {
                Ok(_) => any_ok = true,
                Err(e) if first_error.is_none() => first_error = Some(e.clone()),
                Err(_) => {}
            }
        }
        summary(&mut table, c, &points, &labels);
        let suffix = c.map(|c| format!("_c{c}")).unwrap_or_default();
        outputs.push((suffix, sweep_csv(&points, &labels, n, seed)?));
    }
    std::fs::create_dir_all(&dir)?;
    for (suffix, files) in &outputs {
        write(&dir, &format!("risks{suffix}.csv"), &files.risks)?;
        write(
            &dir,
            &format!("differences{suffix}.csv"),
            &files.differences,
        )?;
    }
    match common.format {
        Some(Format::Json) => {
            let files: Vec<_> = outputs
                .iter()
                .flat_map(|(s, _)| [format!("risks{s}.csv"), format!("differences{s}.csv")])
                .collect();
            println!(
                "{}",
                json!({ "output": dir, "files": files, "n": n, "seed": seed })
            );
        }
        _ => print!("{table}"),
    }
    match (any_ok, first_error) {
        (false, Some(e)) => Err(e.into()),
        _ => Ok(()),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    std::fs::write(dir.join(name), text)?;
    Ok(())
}
