//! Batch command line for fitting, inference, simulation and tuning.
//!
//! Every command writes its results into `--out` together with a
//! `manifest.json` echoing the resolved settings and the SHA-256 of each file.
//! Exit codes: 2 input error, 3 numerical failure, 4 configuration error.

pub mod config;
pub mod error;
pub mod output;

use std::io::BufRead;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use latentreg::dist::normal_upper_quantile;
use latentreg::{
    load_matrix_csv, run_b_experiment, run_signal_sweep, run_theta_experiment, Dataset, DgpConfig,
    ExperimentResult, FactorCount, FittedModel, PipelineConfig, DEFAULT_SIGNAL_GRID,
};
use serde::Serialize;

pub use crate::config::Settings;
pub use crate::error::CliError;
use crate::output::{csv_table, matrix_csv, matrix_rows, num, ArtifactDir};

#[derive(Debug, Parser)]
#[command(name = "latentreg", version, about = "Inference for multivariate regression with hidden variables")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lava fit, residuals and hidden-factor estimates.
    Fit(CommonArgs),
    /// Debiased estimates, tests and confidence intervals for entries of Θ.
    InferTheta(CommonArgs),
    /// χ² tests of B_j = 0 for response columns.
    TestHidden(CommonArgs),
    /// Monte Carlo type I error and power on synthetic data.
    Simulate(CommonArgs),
    /// Power curve over fixed signal strengths.
    Sweep(CommonArgs),
    /// Cross-validation curves for the lava and initial-lasso penalties.
    Cv(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Design matrix CSV (n × p).
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Response matrix CSV (n × m).
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of hidden variables, or `auto` to select it.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Flat key = value settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV header handling: auto, true or false.
    #[arg(long)]
    pub header: Option<String>,
    /// Entries `i:j` (1-based) or `all`; repeatable or comma separated.
    #[arg(long = "entries")]
    pub entries: Vec<String>,
    /// Response indices (1-based) or `all`.
    #[arg(long = "responses")]
    pub responses: Vec<String>,
    /// Multiple-testing correction: none or bonferroni.
    #[arg(long)]
    pub correction: Option<String>,
    /// Simulation experiment: theta or b.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Signal values for the sweep.
    #[arg(long = "r")]
    pub r: Vec<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long = "b-m")]
    pub b_m: Option<usize>,
    /// Turn cross-validation of penalties on or off.
    #[arg(long)]
    pub cv: Option<bool>,
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub command: &'static str,
    pub out_dir: PathBuf,
    pub manifest: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<RunSummary, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    run_cli(cli)
}

pub fn run_cli(cli: Cli) -> Result<RunSummary, CliError> {
    let (name, common) = match &cli.command {
        Command::Fit(a) => ("fit", a),
        Command::InferTheta(a) => ("infer-theta", a),
        Command::TestHidden(a) => ("test-hidden", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Cv(a) => ("cv", a),
    };
    let file = match &common.config {
        Some(path) => config::load_config(path)?,
        None => Default::default(),
    };
    let mut settings = Settings::new(file);
    let threads = settings.get::<usize>("threads", common.threads)?;
    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            if t == 0 {
                return Err(CliError::Config("threads must be at least 1".into()));
            }
            builder = builder.num_threads(t);
        }
        builder
            .build()
            .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?
    };
    pool.install(|| {
        let out = settings.require::<String>("out", common.out.as_ref().map(|p| p.display().to_string()))?;
        let mut dir = ArtifactDir::create(Path::new(&out))?;
        match &cli.command {
            Command::Fit(a) => cmd_fit(a, &mut settings, &mut dir)?,
            Command::InferTheta(a) => cmd_infer_theta(a, &mut settings, &mut dir)?,
            Command::TestHidden(a) => cmd_test_hidden(a, &mut settings, &mut dir)?,
            Command::Simulate(a) => cmd_simulate(a, &mut settings, &mut dir)?,
            Command::Sweep(a) => cmd_sweep(a, &mut settings, &mut dir)?,
            Command::Cv(a) => cmd_cv(a, &mut settings, &mut dir)?,
        }
        let out_dir = dir.path().to_path_buf();
        let manifest = dir.finish(name, settings.resolved())?;
        Ok(RunSummary {
            command: name,
            out_dir,
            manifest,
        })
    })
}

fn check_alpha(alpha: f64) -> Result<f64, CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(CliError::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn first_line_is_header(path: &Path) -> Result<bool, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut line = String::new();
    std::io::BufReader::new(file)
        .read_line(&mut line)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(line.split(',').any(|f| {
        let f = f.trim();
        !f.is_empty() && f.parse::<f64>().is_err()
    }))
}

struct Loaded {
    data: Dataset,
    y_labels: Vec<String>,
}

fn load_data(a: &CommonArgs, s: &mut Settings) -> Result<Loaded, CliError> {
    let x_path = PathBuf::from(s.require::<String>("x", a.x.as_ref().map(|p| p.display().to_string()))?);
    let y_path = PathBuf::from(s.require::<String>("y", a.y.as_ref().map(|p| p.display().to_string()))?);
    let header = s.get_or::<String>("header", a.header.clone(), "auto".into())?;
    let has_header = |path: &Path| -> Result<bool, CliError> {
        match header.as_str() {
            "auto" => first_line_is_header(path),
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(CliError::Config(format!("header must be auto, true or false, got '{other}'"))),
        }
    };
    let x = load_matrix_csv(&x_path, has_header(&x_path)?)?;
    let y = load_matrix_csv(&y_path, has_header(&y_path)?)?;
    let m = y.matrix.ncols();
    let y_labels = y
        .labels
        .clone()
        .unwrap_or_else(|| (1..=m).map(|j| format!("y{j}")).collect());
    Ok(Loaded {
        data: Dataset::new(x.matrix, y.matrix)?,
        y_labels,
    })
}

fn pipeline_config(a: &CommonArgs, s: &mut Settings, default_k: FactorCount) -> Result<PipelineConfig, CliError> {
    let mut config = PipelineConfig {
        seed: s.get_or("seed", a.seed, 0u64)?,
        ..Default::default()
    };
    let k_bar = s.get::<usize>("k_bar", None)?;
    config.factors = match s.get::<String>("k", a.k.clone())?.as_deref() {
        None => match default_k {
            FactorCount::Select { .. } => FactorCount::Select { k_bar },
            fixed => fixed,
        },
        Some("auto") => FactorCount::Select { k_bar },
        Some(text) => FactorCount::Fixed(
            text.parse()
                .map_err(|_| CliError::Config(format!("k must be a nonnegative integer or auto, got '{text}'")))?,
        ),
    };
    let t = &mut config.tuning;
    t.cross_validate = s.get_or("cv", a.cv, true)?;
    t.num_folds = s.get_or("folds", None, t.num_folds)?;
    t.c0 = s.get_or("c0", None, t.c0)?;
    t.lambda1 = s.get("lambda1", None)?;
    t.lambda2 = s.get("lambda2", None)?;
    t.lambda3 = s.get("lambda3", None)?;
    t.lambda_tilde = s.get("lambda_tilde", None)?;
    for (name, v) in [("lambda1", t.lambda1), ("lambda2", t.lambda2), ("lambda3", t.lambda3), ("lambda_tilde", t.lambda_tilde)] {
        if let Some(v) = v {
            if v.is_nan() || v < 0.0 {
                return Err(CliError::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
    }
    Ok(config)
}

#[derive(Serialize)]
struct LavaTuningRecord {
    response: String,
    lambda1: f64,
    /// `null` stands for λ₂ = ∞ (plain lasso).
    lambda2: Option<f64>,
}

#[derive(Serialize)]
struct FactorsRecord {
    k: usize,
    k_selection: &'static str,
    n: usize,
    m: usize,
    singular_values: Vec<f64>,
    d_k: Vec<f64>,
    /// K × m, one row per hidden variable.
    b_hat: Vec<Vec<f64>>,
    /// n × K.
    w_hat: Vec<Vec<f64>>,
    /// m × m.
    p_b_perp: Vec<Vec<f64>>,
    sigma2_e: Vec<f64>,
    lava_tuning: Vec<LavaTuningRecord>,
}

fn write_fit_artifacts(model: &FittedModel, labels: &[String], dir: &mut ArtifactDir) -> Result<(), CliError> {
    let lava = model.lava();
    let fe = model.factors();
    dir.write("f_hat.csv", &matrix_csv(&lava.f_hat, labels))?;
    dir.write("residuals.csv", &matrix_csv(&lava.residuals, labels))?;
    let record = FactorsRecord {
        k: fe.k,
        k_selection: match model.config().factors {
            FactorCount::Fixed(_) => "fixed",
            FactorCount::Select { .. } => "eigenvalue_ratio",
        },
        n: model.data().n(),
        m: model.data().m(),
        singular_values: model.residual_svd().d.iter().copied().collect(),
        d_k: fe.d_k.iter().copied().collect(),
        b_hat: matrix_rows(&fe.b_hat),
        w_hat: matrix_rows(&fe.w_hat),
        p_b_perp: matrix_rows(&fe.p_b_perp),
        sigma2_e: fe.sigma2_e.iter().copied().collect(),
        lava_tuning: model
            .lava_tuning()
            .iter()
            .zip(labels)
            .map(|(t, label)| LavaTuningRecord {
                response: label.clone(),
                lambda1: t.tuning.lambda1,
                lambda2: t.tuning.lambda2.is_finite().then_some(t.tuning.lambda2),
            })
            .collect(),
    };
    dir.write_json("factors.json", &record)
}

fn fit_model(a: &CommonArgs, s: &mut Settings) -> Result<(FittedModel, Vec<String>), CliError> {
    let loaded = load_data(a, s)?;
    let config = pipeline_config(a, s, FactorCount::Select { k_bar: None })?;
    let model = FittedModel::fit(loaded.data, config)?;
    Ok((model, loaded.y_labels))
}

fn cmd_fit(a: &CommonArgs, s: &mut Settings, dir: &mut ArtifactDir) -> Result<(), CliError> {
    let (model, labels) = fit_model(a, s)?;
    write_fit_artifacts(&model, &labels, dir)
}

/// Parses `i:j` pairs (1-based) or `all` into 0-based entries.
pub fn parse_entries(items: &[String], p: usize, m: usize) -> Result<Vec<(usize, usize)>, CliError> {
    if items.is_empty() {
        return Err(CliError::Config("no entries requested".into()));
    }
    if items.iter().any(|t| t == "all") {
        return Ok((0..p).flat_map(|i| (0..m).map(move |j| (i, j))).collect());
    }
    let mut entries = Vec::new();
    let mut offenders = Vec::new();
    for item in items {
        let parsed = item
            .split_once(':')
            .and_then(|(i, j)| Some((i.trim().parse::<usize>().ok()?, j.trim().parse::<usize>().ok()?)));
        match parsed {
            Some((i, j)) if (1..=p).contains(&i) && (1..=m).contains(&j) => entries.push((i - 1, j - 1)),
            _ => offenders.push(item.clone()),
        }
    }
    if !offenders.is_empty() {
        return Err(CliError::Config(format!(
            "invalid entries (need i:j with 1 ≤ i ≤ {p}, 1 ≤ j ≤ {m}): {}",
            offenders.join(" ")
        )));
    }
    Ok(entries)
}

/// Parses 1-based response indices or `all`.
pub fn parse_responses(items: &[String], m: usize) -> Result<Vec<usize>, CliError> {
    if items.is_empty() || items.iter().any(|t| t == "all") {
        return Ok((0..m).collect());
    }
    let mut out = Vec::new();
    let mut offenders = Vec::new();
    for item in items {
        match item.parse::<usize>() {
            Ok(j) if (1..=m).contains(&j) => out.push(j - 1),
            _ => offenders.push(item.clone()),
        }
    }
    if !offenders.is_empty() {
        return Err(CliError::Config(format!(
            "invalid responses (need 1 ≤ j ≤ {m}): {}",
            offenders.join(" ")
        )));
    }
    Ok(out)
}

/// Per-test level after the requested correction.
pub fn corrected_alpha(alpha: f64, correction: &str, tests: usize) -> Result<f64, CliError> {
    match correction {
        "none" => Ok(alpha),
        "bonferroni" => Ok(alpha / tests.max(1) as f64),
        other => Err(CliError::Config(format!("correction must be none or bonferroni, got '{other}'"))),
    }
}

fn cmd_infer_theta(a: &CommonArgs, s: &mut Settings, dir: &mut ArtifactDir) -> Result<(), CliError> {
    let alpha = check_alpha(s.get_or("alpha", a.alpha, 0.05)?)?;
    let correction = s.get_or::<String>("correction", a.correction.clone(), "none".into())?;
    let requested = s.list("entries", &a.entries);
    let (model, labels) = fit_model(a, s)?;
    let entries = parse_entries(&requested, model.data().p(), model.data().m())?;
    let level = corrected_alpha(alpha, &correction, entries.len())?;
    let results = model.infer_entries(&entries, level)?;
    write_fit_artifacts(&model, &labels, dir)?;
    let z = normal_upper_quantile(level / 2.0);
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                (r.i + 1).to_string(),
                (r.j + 1).to_string(),
                labels[r.j].clone(),
                num(r.theta_init),
                num(r.theta_debiased),
                num(r.std_error()),
                num(r.u_stat),
                num(r.p_value),
                num(r.ci_low),
                num(r.ci_high),
                num(r.alpha),
                num(z),
                r.reject.to_string(),
            ]
        })
        .collect();
    dir.write(
        "theta_results.csv",
        &csv_table(
            &["i", "j", "response", "theta_init", "theta_debiased", "std_error", "u_stat", "p_value", "ci_low", "ci_high", "alpha", "z_crit", "reject"],
            &rows,
        ),
    )
}

fn cmd_test_hidden(a: &CommonArgs, s: &mut Settings, dir: &mut ArtifactDir) -> Result<(), CliError> {
    let alpha = check_alpha(s.get_or("alpha", a.alpha, 0.05)?)?;
    let correction = s.get_or::<String>("correction", a.correction.clone(), "none".into())?;
    let requested = s.list("responses", &a.responses);
    let (model, labels) = fit_model(a, s)?;
    let responses = parse_responses(&requested, model.data().m())?;
    let level = corrected_alpha(alpha, &correction, responses.len())?;
    let results = responses
        .iter()
        .map(|&j| model.hidden_effect_test(j, level))
        .collect::<latentreg::Result<Vec<_>>>()?;
    write_fit_artifacts(&model, &labels, dir)?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                (r.j + 1).to_string(),
                labels[r.j].clone(),
                num(r.r_stat),
                r.df.to_string(),
                num(r.p_value),
                num(r.alpha),
                r.reject.to_string(),
            ]
        })
        .collect();
    dir.write(
        "b_tests.csv",
        &csv_table(&["j", "response", "r_stat", "df", "p_value", "alpha", "reject"], &rows),
    )
}

fn dgp_config(a: &CommonArgs, s: &mut Settings) -> Result<DgpConfig, CliError> {
    let d = DgpConfig::default();
    let k = match s.get::<String>("k", a.k.clone())? {
        None => d.k,
        Some(text) => text
            .parse()
            .map_err(|_| CliError::Config(format!("k must be a nonnegative integer for simulations, got '{text}'")))?,
    };
    let cfg = DgpConfig {
        n: s.get_or("n", a.n, d.n)?,
        p: s.get_or("p", a.p, d.p)?,
        m: s.get_or("m", a.m, d.m)?,
        k,
        eta: s.get_or("eta", a.eta, d.eta)?,
        s: s.get_or("s", None, d.s)?,
        s_m: s.get_or("s_m", None, d.s_m)?,
        theta_signal: s.get("theta_signal", None)?,
        b_m: s.get_or("b_m", a.b_m, d.b_m)?,
        sigma_w: s.get_or("sigma_w", None, d.sigma_w)?,
        seed: s.get_or("seed", a.seed, 0u64)?,
        project_theta: s.get_or("project_theta", None, false)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Simulation runs use the true K unless `select_k = true`.
fn simulation_method(a: &CommonArgs, s: &mut Settings, cfg: &DgpConfig) -> Result<PipelineConfig, CliError> {
    let select = s.get_or("select_k", None, false)?;
    let mut args = a.clone();
    args.k = None;
    let mut method = pipeline_config(&args, s, FactorCount::Fixed(cfg.k))?;
    if select {
        method.factors = FactorCount::Select {
            k_bar: s.get("k_bar", None)?,
        };
    }
    Ok(method)
}

fn setting_header() -> Vec<&'static str> {
    vec!["n", "p", "m", "k", "eta", "s", "s_m", "theta_signal", "b_m", "sigma_w", "alpha"]
}

fn setting_cells(cfg: &DgpConfig, alpha: f64) -> Vec<String> {
    vec![
        cfg.n.to_string(),
        cfg.p.to_string(),
        cfg.m.to_string(),
        cfg.k.to_string(),
        num(cfg.eta),
        cfg.s.to_string(),
        cfg.s_m.to_string(),
        cfg.theta_signal.map(num).unwrap_or_else(|| "random".into()),
        cfg.b_m.to_string(),
        num(cfg.sigma_w),
        num(alpha),
    ]
}

fn details_csv(result: &ExperimentResult, is_alt: &[bool]) -> Vec<u8> {
    let rows: Vec<Vec<String>> = result
        .details
        .iter()
        .map(|d| {
            let null_rej = d.rejections.iter().zip(is_alt).filter(|(&r, &alt)| r && !alt).count();
            let alt_rej = d.rejections.iter().zip(is_alt).filter(|(&r, &alt)| r && alt).count();
            vec![
                d.rep.to_string(),
                d.seed.to_string(),
                d.k_hat.map(|k| k.to_string()).unwrap_or_default(),
                null_rej.to_string(),
                alt_rej.to_string(),
                d.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            ]
        })
        .collect();
    csv_table(&["rep", "seed", "k_hat", "null_rejections", "alt_rejections", "error"], &rows)
}

fn cmd_simulate(a: &CommonArgs, s: &mut Settings, dir: &mut ArtifactDir) -> Result<(), CliError> {
    let cfg = dgp_config(a, s)?;
    let alpha = check_alpha(s.get_or("alpha", a.alpha, 0.05)?)?;
    let reps = s.get_or("reps", a.reps, 100usize)?;
    let experiment = s.get_or::<String>("experiment", a.experiment.clone(), "theta".into())?;
    let method = simulation_method(a, s, &cfg)?;
    let (result, is_alt) = match experiment.as_str() {
        "theta" => (run_theta_experiment(&cfg, &method, reps, alpha)?, cfg.support()),
        "b" => (
            run_b_experiment(&cfg, &method, reps, alpha)?,
            (0..cfg.m).map(|j| j >= cfg.b_m).collect(),
        ),
        other => return Err(CliError::Config(format!("experiment must be theta or b, got '{other}'"))),
    };
    let mut header = vec!["experiment"];
    header.extend(setting_header());
    header.extend(["type1", "power", "reps", "failures"]);
    let mut row = vec![experiment.clone()];
    row.extend(setting_cells(&cfg, alpha));
    row.extend([num(result.type1), num(result.power), result.reps.to_string(), result.failures.to_string()]);
    dir.write("metrics.csv", &csv_table(&header, &[row]))?;
    dir.write("details.csv", &details_csv(&result, &is_alt))
}

fn cmd_sweep(a: &CommonArgs, s: &mut Settings, dir: &mut ArtifactDir) -> Result<(), CliError> {
    let cfg = dgp_config(a, s)?;
    let alpha = check_alpha(s.get_or("alpha", a.alpha, 0.05)?)?;
    let reps = s.get_or("reps", a.reps, 50usize)?;
    let grid_text = s.list("r", &a.r);
    let grid: Vec<f64> = if grid_text.is_empty() {
        DEFAULT_SIGNAL_GRID.to_vec()
    } else {
        grid_text
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| CliError::Config(format!("invalid signal value '{t}'"))))
            .collect::<Result<_, _>>()?
    };
    let method = simulation_method(a, s, &cfg)?;
    let rows = run_signal_sweep(&cfg, &method, &grid, reps, alpha)?;
    let mut header = vec!["r"];
    header.extend(setting_header());
    header.extend(["type1", "power", "reps", "failures"]);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let point = DgpConfig {
                theta_signal: Some(row.r),
                ..cfg.clone()
            };
            let mut cells = vec![num(row.r)];
            cells.extend(setting_cells(&point, alpha));
            cells.extend([
                num(row.result.type1),
                num(row.result.power),
                row.result.reps.to_string(),
                row.result.failures.to_string(),
            ]);
            cells
        })
        .collect();
    dir.write("sweep.csv", &csv_table(&header, &table))
}

fn cmd_cv(a: &CommonArgs, s: &mut Settings, dir: &mut ArtifactDir) -> Result<(), CliError> {
    let (model, labels) = fit_model(a, s)?;
    if !model.config().tuning.cross_validate {
        return Err(CliError::Config("the cv command needs cv = true".into()));
    }
    let mut lava_rows = Vec::new();
    let mut chosen = Vec::new();
    for (j, t) in model.lava_tuning().iter().enumerate() {
        for (stage, curve, pick) in [
            ("lambda2", &t.lambda2_curve, t.tuning.lambda2),
            ("lambda1", &t.lambda1_curve, t.tuning.lambda1),
        ] {
            for pt in curve {
                lava_rows.push(vec![
                    (j + 1).to_string(),
                    labels[j].clone(),
                    stage.to_string(),
                    num(pt.candidate),
                    num(pt.mean_error),
                    num(pt.se_error),
                    (pt.candidate == pick).to_string(),
                ]);
            }
        }
        let init = model.initial_estimate(j)?;
        chosen.push(vec![
            (j + 1).to_string(),
            labels[j].clone(),
            num(t.tuning.lambda1),
            num(t.tuning.lambda2),
            num(init.lambda3),
        ]);
    }
    let mut lasso_rows = Vec::new();
    for (j, label) in labels.iter().enumerate() {
        let init = model.initial_estimate(j)?;
        for pt in &init.cv_curve {
            lasso_rows.push(vec![
                (j + 1).to_string(),
                label.clone(),
                num(pt.candidate),
                num(pt.mean_error),
                num(pt.se_error),
                (pt.candidate == init.lambda3).to_string(),
            ]);
        }
    }
    dir.write(
        "cv_lava.csv",
        &csv_table(&["j", "response", "stage", "candidate", "mean_error", "se_error", "selected"], &lava_rows),
    )?;
    dir.write(
        "cv_lambda3.csv",
        &csv_table(&["j", "response", "candidate", "mean_error", "se_error", "selected"], &lasso_rows),
    )?;
    dir.write(
        "tuning.csv",
        &csv_table(&["j", "response", "lambda1", "lambda2", "lambda3"], &chosen),
    )
}
