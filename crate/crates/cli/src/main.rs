//! Command-line toolkit for the structured log-odds model family: fitting,
//! temporal evaluation against baselines, synthetic replication
//! experiments, nuclear-norm regularized estimation, and Monte Carlo season
//! simulation. Every command writes a manifest sufficient to reproduce the
//! run bit-for-bit.

mod manifest;
mod output;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use logodds::data::{parse_csv, promotion_features, split_by_dates, BatchPolicy, CsvSchema, Dataset};
use logodds::eval::{
    temporal_validate, HomeWinModel, OddsModel, PoissonModel, ReportConfig, TemporalModel,
    ValidationReport,
};
use logodds::model::{Link, ModelState, Structure};
use logodds::season;
use logodds::stats::{paired_t_test, Alternative};
use logodds::synth::{
    replicate_experiment, write_experiment_csv, ExperimentConfig, ExperimentModel, SynthSpec,
    TruthSpec,
};
use logodds::train::{
    default_k_grid, fit_batch, grid_search, LogOddsRunner, ModelConfig, Regime, TrainConfig,
};

use manifest::Manifest;
use output::{sig6, OutDir};

#[derive(Parser)]
#[command(name = "logodds", version, about = "Structured log-odds models for match outcome prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Named model variants on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelName {
    /// Rank-2 ratings with ones factor (Bradley-Terry-Élő).
    Elo,
    /// Élő plus promotion covariates.
    EloCov,
    /// General antisymmetric rank-2 interaction factors.
    Twofactor,
    /// Rank-4: interaction factors plus ratings.
    Rankfour,
    /// Skellam score-difference model.
    ScoreDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LinkName {
    Binary,
    Ternary,
    Skellam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeName {
    Batch,
    Online,
    TwoStage,
    Retrain,
}

impl RegimeName {
    fn regime(self) -> Regime {
        match self {
            RegimeName::Batch => Regime::SingleBatch,
            RegimeName::Online => Regime::Online,
            RegimeName::TwoStage => Regime::TwoStage,
            RegimeName::Retrain => Regime::Retrain,
        }
    }
}

fn model_config(name: ModelName, link: Option<LinkName>, home_adv: bool) -> Result<ModelConfig> {
    let link = match (name, link) {
        (ModelName::ScoreDiff, None | Some(LinkName::Skellam)) => Link::SkellamScore,
        (ModelName::ScoreDiff, Some(_)) => {
            bail!("score-diff always uses the skellam link")
        }
        (_, Some(LinkName::Binary)) => Link::Binary,
        (_, Some(LinkName::Skellam)) => bail!("the skellam link requires --model score-diff"),
        (_, Some(LinkName::Ternary) | None) => Link::TernaryPo,
    };
    let structure = match (name, home_adv) {
        (ModelName::Elo | ModelName::EloCov | ModelName::ScoreDiff, true) => Structure::Rank2HomeAdv,
        (ModelName::Elo | ModelName::EloCov | ModelName::ScoreDiff, false) => Structure::Rank2,
        (ModelName::Twofactor, true) => Structure::TwoFactorHomeAdv,
        (ModelName::Twofactor, false) => Structure::TwoFactor,
        (ModelName::Rankfour, true) => Structure::RankFourHomeAdv,
        (ModelName::Rankfour, false) => Structure::RankFour,
    };
    Ok(ModelConfig {
        structure,
        link,
        covariates: name == ModelName::EloCov,
    })
}

fn model_label(name: ModelName) -> &'static str {
    match name {
        ModelName::Elo => "elo",
        ModelName::EloCov => "elo-cov",
        ModelName::Twofactor => "twofactor",
        ModelName::Rankfour => "rankfour",
        ModelName::ScoreDiff => "score-diff",
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory for artifacts and the run manifest.
    #[arg(long)]
    out: PathBuf,
    /// RNG seed; defaults to $LOGODDS_SEED or 0, and is always recorded in
    /// the manifest.
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonArgs {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or_else(|| {
            std::env::var("LOGODDS_SEED")
                .ok()
                .and_then(|v| v.parse().ok())
                .unwrap_or(0)
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Batch maximum-likelihood fit; writes model.txt and trace.csv.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "elo")]
        model: ModelName,
        #[arg(long, value_enum)]
        link: Option<LinkName>,
        /// Drop the home-advantage constant.
        #[arg(long)]
        no_home_adv: bool,
        /// Fit only on matches strictly before this date (YYYY-MM-DD).
        #[arg(long)]
        train_end: Option<NaiveDate>,
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Grid-search on train/tune, final prequential evaluation on test;
    /// writes per-model reports and a summary with paired tests.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated model list.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "elo")]
        models: Vec<ModelName>,
        #[arg(long, value_enum)]
        link: Option<LinkName>,
        #[arg(long)]
        no_home_adv: bool,
        #[arg(long, value_enum, default_value = "two-stage")]
        regime: RegimeName,
        /// First date of the tuning window (YYYY-MM-DD).
        #[arg(long)]
        tune_start: NaiveDate,
        /// First date of the test window (YYYY-MM-DD).
        #[arg(long)]
        test_start: NaiveDate,
        /// Comma-separated K-factor grid; defaults to the built-in grid.
        #[arg(long, value_delimiter = ',')]
        k_grid: Option<Vec<f64>>,
        /// Baselines to evaluate alongside: home, odds, maher, dixon-coles.
        #[arg(long, value_delimiter = ',')]
        baselines: Option<Vec<String>>,
        /// Time-decay rate per week for the Poisson baselines.
        #[arg(long, default_value_t = 0.0)]
        xi: f64,
        #[arg(long, default_value_t = 5000)]
        bootstrap: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Paired synthetic replication experiment.
    Synth {
        /// Ground-truth structure: rank2, rank4-orth, rank4-gauss, elo.
        #[arg(long, default_value = "rank2")]
        truth: String,
        /// Comma-separated contenders: elo, twofactor, rankfour, regularized.
        #[arg(long, value_delimiter = ',', default_value = "elo,twofactor")]
        models: Vec<String>,
        #[arg(long, default_value_t = 47)]
        q: usize,
        #[arg(long, default_value_t = 4)]
        per_pair: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, value_enum, default_value = "online")]
        regime: RegimeName,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 0.7)]
        sigma: f64,
        #[arg(long, default_value_t = 25.0)]
        s1: f64,
        #[arg(long, default_value_t = 24.0)]
        s2: f64,
        #[arg(long, default_value_t = 0.8)]
        sd: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, value_delimiter = ',')]
        k_grid: Option<Vec<f64>>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Nuclear-norm regularized log-odds estimation with lambda selection.
    Regularize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tune_start: NaiveDate,
        #[arg(long)]
        test_start: NaiveDate,
        /// Use the binary (win/lose) variant instead of the ternary one.
        #[arg(long)]
        binary: bool,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        /// Comma-separated lambda grid, or "auto".
        #[arg(long, default_value = "auto")]
        lambda_grid: String,
        #[arg(long, default_value_t = 5000)]
        bootstrap: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Monte Carlo season-ranking simulation from prequential predictions.
    Simulate {
        #[arg(long)]
        data: PathBuf,
        /// Season starting year (e.g. 2010 for the 2010-11 season).
        #[arg(long)]
        season: i32,
        #[arg(long, value_enum, default_value = "elo-cov")]
        model: ModelName,
        #[arg(long, value_enum, default_value = "two-stage")]
        regime: RegimeName,
        /// K factor for the online stage.
        #[arg(long, default_value_t = 0.1)]
        k: f64,
        #[arg(long, default_value_t = 10000)]
        reps: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            data,
            model,
            link,
            no_home_adv,
            train_end,
            max_iters,
            tol,
            common,
        } => cmd_fit(data, model, link, !no_home_adv, train_end, max_iters, tol, common),
        Command::Eval {
            data,
            models,
            link,
            no_home_adv,
            regime,
            tune_start,
            test_start,
            k_grid,
            baselines,
            xi,
            bootstrap,
            common,
        } => cmd_eval(
            data, models, link, !no_home_adv, regime, tune_start, test_start, k_grid, baselines,
            xi, bootstrap, common,
        ),
        Command::Synth {
            truth,
            models,
            q,
            per_pair,
            reps,
            regime,
            mu,
            sigma,
            s1,
            s2,
            sd,
            eps,
            k_grid,
            common,
        } => cmd_synth(
            truth, models, q, per_pair, reps, regime, mu, sigma, s1, s2, sd, eps, k_grid, common,
        ),
        Command::Regularize {
            data,
            tune_start,
            test_start,
            binary,
            eps,
            lambda_grid,
            bootstrap,
            common,
        } => cmd_regularize(data, tune_start, test_start, binary, eps, lambda_grid, bootstrap, common),
        Command::Simulate {
            data,
            season,
            model,
            regime,
            k,
            reps,
            common,
        } => cmd_simulate(data, season, model, regime, k, reps, common),
    }
}

fn load_dataset(path: &PathBuf) -> Result<Dataset> {
    parse_csv(path, &CsvSchema::default())
        .with_context(|| format!("failed to parse {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    data_path: PathBuf,
    model: ModelName,
    link: Option<LinkName>,
    home_adv: bool,
    train_end: Option<NaiveDate>,
    max_iters: usize,
    tol: f64,
    common: CommonArgs,
) -> Result<()> {
    let seed = common.seed();
    let out = OutDir::create(&common.out)?;
    let data = load_dataset(&data_path)?;
    let config = model_config(model, link, home_adv)?;

    let train = match train_end {
        Some(end) => {
            let cut = data
                .records()
                .partition_point(|r| r.date < end);
            Dataset::new(data.records()[..cut].to_vec(), data.teams().clone())
        }
        None => data.clone(),
    };
    if train.is_empty() {
        bail!("no training records before {train_end:?}");
    }
    let spec = config.spec(data.n_teams())?;
    let features = config
        .covariates
        .then(|| promotion_features(&data)[..train.len()].to_vec());
    let cfg = TrainConfig {
        max_iters,
        tol,
        seed,
        ..TrainConfig::default()
    };
    let (state, trace) = fit_batch(
        ModelState::init(&spec, seed),
        &spec,
        &train,
        features.as_deref(),
        &cfg,
    )?;

    logodds::model::save_model(out.path("model.txt"), &spec, &state, data.teams())?;
    let mut trace_file = out.file("trace.csv")?;
    logodds::train::write_trace_csv(&trace, &mut trace_file)?;
    let last = trace.last().unwrap();
    println!(
        "fitted {} on {} matches: loglik {}, gradient norm {}, {} iterations",
        model_label(model),
        train.len(),
        sig6(last.loglik),
        sig6(last.grad_norm),
        trace.len() - 1
    );

    Manifest::new("fit", seed)
        .arg("model", model_label(model))
        .arg("link", format!("{:?}", config.link))
        .arg("home_adv", home_adv)
        .arg("train_end", train_end.map(|d| d.to_string()))
        .arg("max_iters", max_iters)
        .arg("tol", tol)
        .input(&data_path)?
        .outputs(["model.txt", "trace.csv"])
        .write(&out)
}

struct EvaluatedModel {
    name: String,
    report: ValidationReport,
    chosen_k: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    data_path: PathBuf,
    models: Vec<ModelName>,
    link: Option<LinkName>,
    home_adv: bool,
    regime: RegimeName,
    tune_start: NaiveDate,
    test_start: NaiveDate,
    k_grid: Option<Vec<f64>>,
    baselines: Option<Vec<String>>,
    xi: f64,
    bootstrap: usize,
    common: CommonArgs,
) -> Result<()> {
    let seed = common.seed();
    let out = OutDir::create(&common.out)?;
    let data = load_dataset(&data_path)?;
    let (train, tune, test) = split_by_dates(&data, tune_start, test_start)?;
    for (name, part) in [("train", &train), ("tune", &tune), ("test", &test)] {
        if part.is_empty() {
            bail!("the {name} split is empty; check the split dates");
        }
    }
    println!(
        "split: {} train / {} tune / {} test matches",
        train.len(),
        tune.len(),
        test.len()
    );
    let train_tune = train.concat(&tune)?;
    let report_cfg = ReportConfig {
        bootstrap_reps: bootstrap,
        level: 0.95,
        seed,
    };
    let ks = k_grid.unwrap_or_else(default_k_grid);
    let grid: Vec<TrainConfig> = ks
        .iter()
        .map(|&k| TrainConfig {
            learning_rate: k,
            seed,
            ..TrainConfig::default()
        })
        .collect();

    let mut evaluated: Vec<EvaluatedModel> = Vec::new();
    for name in &models {
        let config = model_config(*name, link, home_adv)?;
        let (best, rows) = grid_search(config, regime.regime(), &train, &tune, &grid)?;
        let mut cfg = best.clone();
        if regime == RegimeName::Retrain {
            cfg.batch_policy = BatchPolicy::CalendarQuarter;
        }
        let mut runner = LogOddsRunner::new(config, regime.regime(), cfg);
        let report = temporal_validate(&mut runner, &train_tune, &test, &report_cfg)?;
        println!(
            "{:>12} ({}): K = {}, accuracy {}, mean loglik {} (tune grid: {})",
            model_label(*name),
            regime.regime().name(),
            best.learning_rate,
            sig6(report.aggregates.accuracy),
            sig6(report.aggregates.mean_loglik),
            rows.iter()
                .map(|r| format!("{}@{}", sig6(r.mean_loglik), r.learning_rate))
                .collect::<Vec<_>>()
                .join(" ")
        );
        evaluated.push(EvaluatedModel {
            name: model_label(*name).to_string(),
            report,
            chosen_k: Some(best.learning_rate),
        });
    }

    for b in baselines.unwrap_or_default() {
        let mut model: Box<dyn TemporalModel> = match b.as_str() {
            "home" => Box::new(HomeWinModel),
            "odds" => Box::new(OddsModel),
            "maher" => Box::new(PoissonModel {
                variant: logodds::baselines::PoissonVariant::Maher,
                xi,
            }),
            "dixon-coles" => Box::new(PoissonModel {
                variant: logodds::baselines::PoissonVariant::DixonColes,
                xi,
            }),
            other => bail!("unknown baseline {other:?}; valid: home, odds, maher, dixon-coles"),
        };
        let report = temporal_validate(model.as_mut(), &train_tune, &test, &report_cfg)?;
        println!(
            "{:>12} (baseline): accuracy {}, mean loglik {}{}",
            model.name(),
            sig6(report.aggregates.accuracy),
            sig6(report.aggregates.mean_loglik),
            if report.n_skipped > 0 {
                format!(", {} rows skipped", report.n_skipped)
            } else {
                String::new()
            }
        );
        evaluated.push(EvaluatedModel {
            name: model.name(),
            report,
            chosen_k: None,
        });
    }

    // Per-model artifacts.
    for e in &evaluated {
        let mut case_file = out.file(&format!("report_{}.csv", e.name))?;
        e.report.write_csv(&mut case_file)?;
        out.write_json(
            &format!("report_{}.json", e.name),
            &serde_json::json!({
                "model": e.name,
                "chosen_k": e.chosen_k,
                "aggregates": e.report.aggregates,
                "n_skipped": e.report.n_skipped,
            }),
        )?;
    }

    // Pairwise paired t-tests on per-case log-likelihoods over the shared
    // cases (models that skip rows pair on the intersection).
    let mut tests = Vec::new();
    for a in 0..evaluated.len() {
        for b in (a + 1)..evaluated.len() {
            let (ea, eb) = (&evaluated[a], &evaluated[b]);
            let by_index: std::collections::HashMap<usize, f64> = eb
                .report
                .per_case
                .iter()
                .map(|c| (c.index, -c.log_loss))
                .collect();
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for c in &ea.report.per_case {
                if let Some(&y) = by_index.get(&c.index) {
                    let x = -c.log_loss;
                    if x.is_finite() && y.is_finite() {
                        xs.push(x);
                        ys.push(y);
                    }
                }
            }
            if xs.len() < 2 {
                continue;
            }
            let t_first = paired_t_test(&xs, &ys, Alternative::Greater)?;
            let t_two = paired_t_test(&xs, &ys, Alternative::TwoSided)?;
            println!(
                "paired t ({} vs {}): one-sided p = {}, two-sided p = {}",
                ea.name,
                eb.name,
                sig6(t_first.p_value),
                sig6(t_two.p_value)
            );
            tests.push(serde_json::json!({
                "first": ea.name,
                "second": eb.name,
                "n_shared": xs.len(),
                "t_statistic": t_first.statistic,
                "p_first_better": t_first.p_value,
                "p_two_sided": t_two.p_value,
                "degenerate": t_first.degenerate,
            }));
        }
    }

    let summary = serde_json::json!({
        "split": { "train": train.len(), "tune": tune.len(), "test": test.len() },
        "regime": regime.regime().name(),
        "models": evaluated
            .iter()
            .map(|e| {
                serde_json::json!({
                    "model": e.name,
                    "chosen_k": e.chosen_k,
                    "aggregates": e.report.aggregates,
                })
            })
            .collect::<Vec<_>>(),
        "paired_tests": tests,
    });
    out.write_json("summary.json", &summary)?;

    let mut outputs: Vec<String> = evaluated
        .iter()
        .flat_map(|e| {
            vec![
                format!("report_{}.csv", e.name),
                format!("report_{}.json", e.name),
            ]
        })
        .collect();
    outputs.push("summary.json".into());
    Manifest::new("eval", seed)
        .arg("models", models.iter().map(|m| model_label(*m)).collect::<Vec<_>>().join(","))
        .arg("regime", regime.regime().name())
        .arg("tune_start", tune_start.to_string())
        .arg("test_start", test_start.to_string())
        .arg("k_grid", ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","))
        .arg("xi", xi)
        .arg("bootstrap", bootstrap)
        .input(&data_path)?
        .outputs(outputs)
        .write(&out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    truth: String,
    models: Vec<String>,
    q: usize,
    per_pair: usize,
    reps: usize,
    regime: RegimeName,
    mu: f64,
    sigma: f64,
    s1: f64,
    s2: f64,
    sd: f64,
    eps: f64,
    k_grid: Option<Vec<f64>>,
    common: CommonArgs,
) -> Result<()> {
    let seed = common.seed();
    let out = OutDir::create(&common.out)?;
    let truth_spec = match truth.as_str() {
        "rank2" => TruthSpec::Rank2Gaussian { mu, sigma },
        "rank4-orth" => TruthSpec::Rank4Orthonormal { s1, s2 },
        "rank4-gauss" => TruthSpec::Rank4Gaussian { mu, sigma },
        "elo" => TruthSpec::EloGaussian { sd },
        other => bail!("unknown truth {other:?}; valid: rank2, rank4-orth, rank4-gauss, elo"),
    };
    let contenders: Vec<ExperimentModel> = models
        .iter()
        .map(|m| {
            Ok(match m.as_str() {
                "elo" => ExperimentModel::LogOdds(ModelConfig {
                    structure: Structure::Rank2,
                    link: Link::Binary,
                    covariates: false,
                }),
                "twofactor" => ExperimentModel::LogOdds(ModelConfig {
                    structure: Structure::TwoFactor,
                    link: Link::Binary,
                    covariates: false,
                }),
                "rankfour" => ExperimentModel::LogOdds(ModelConfig {
                    structure: Structure::RankFour,
                    link: Link::Binary,
                    covariates: false,
                }),
                "regularized" => ExperimentModel::Regularized { eps },
                other => bail!("unknown model {other:?}; valid: elo, twofactor, rankfour, regularized"),
            })
        })
        .collect::<Result<_>>()?;

    let cfg = ExperimentConfig {
        synth: SynthSpec {
            q,
            truth: truth_spec,
            matches_per_pair: per_pair,
            seed,
        },
        models: contenders,
        reps,
        regime: regime.regime(),
        k_grid: k_grid.unwrap_or_else(default_k_grid),
    };
    let result = replicate_experiment(&cfg)?;

    let mut csv = out.file("results.csv")?;
    write_experiment_csv(&result, &mut csv)?;
    out.write_json(
        "pvalues.json",
        &serde_json::json!({
            "models": result.model_names,
            "p_loglik": result.p_loglik,
            "p_accuracy": result.p_accuracy,
            "degenerate": result.degenerate,
        }),
    )?;

    println!("replications: {reps}, truth: {truth}, q = {q}");
    let n_models = result.model_names.len();
    for (m, name) in result.model_names.iter().enumerate() {
        // Rows are emitted replication-major, model-minor.
        let lls: Vec<f64> = result
            .rows
            .iter()
            .skip(m)
            .step_by(n_models)
            .map(|r| r.mean_loglik)
            .collect();
        let mean = lls.iter().sum::<f64>() / lls.len().max(1) as f64;
        println!("  {:>12}: mean out-of-sample loglik {}", name, sig6(mean));
    }
    for a in 0..result.model_names.len() {
        for b in 0..result.model_names.len() {
            if a != b {
                println!(
                    "  p({} > {}) = {} (loglik), {} (accuracy)",
                    result.model_names[b],
                    result.model_names[a],
                    sig6(result.p_loglik[a][b]),
                    sig6(result.p_accuracy[a][b])
                );
            }
        }
    }

    Manifest::new("synth", seed)
        .arg("truth", truth)
        .arg("models", models.join(","))
        .arg("q", q)
        .arg("per_pair", per_pair)
        .arg("reps", reps)
        .arg("regime", regime.regime().name())
        .outputs(["results.csv", "pvalues.json"])
        .write(&out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_regularize(
    data_path: PathBuf,
    tune_start: NaiveDate,
    test_start: NaiveDate,
    binary: bool,
    eps: f64,
    lambda_grid: String,
    bootstrap: usize,
    common: CommonArgs,
) -> Result<()> {
    use logodds::regularize::{
        empirical_logodds, lambda_grid as auto_grid, select_lambda, write_matrix_csv,
        CountMatrices, EmpiricalLogOdds,
    };
    let seed = common.seed();
    let out = OutDir::create(&common.out)?;
    let data = load_dataset(&data_path)?;
    let (train, tune, test) = split_by_dates(&data, tune_start, test_start)?;
    for (name, part) in [("train", &train), ("tune", &tune), ("test", &test)] {
        if part.is_empty() {
            bail!("the {name} split is empty; check the split dates");
        }
    }

    let counts = if binary {
        CountMatrices::binary_from(&train)
    } else {
        CountMatrices::ternary_from(&train)
    };
    let emp = empirical_logodds(&counts, eps)?;
    let grid: Vec<f64> = if lambda_grid == "auto" {
        match &emp {
            EmpiricalLogOdds::Binary { lhat, .. } => auto_grid(lhat),
            EmpiricalLogOdds::Ternary { l1, .. } => auto_grid(l1),
        }
    } else {
        lambda_grid
            .split(',')
            .map(|t| t.trim().parse::<f64>().context("bad lambda value"))
            .collect::<Result<_>>()?
    };

    let (predictor, lambda, table) = select_lambda(&counts, eps, &tune, &grid)?;
    println!("selected lambda = {} by tune log-likelihood", sig6(lambda));
    let mut table_file = out.file("lambda_table.csv")?;
    use std::io::Write as _;
    writeln!(table_file, "lambda,tune_mean_loglik")?;
    for (l, ll) in &table {
        writeln!(table_file, "{l},{ll}")?;
    }

    match &emp {
        EmpiricalLogOdds::Binary { lhat, .. } => {
            write_matrix_csv(lhat, Some(data.teams()), out.file("empirical_logodds.csv")?)?;
        }
        EmpiricalLogOdds::Ternary { l1, l2, .. } => {
            write_matrix_csv(l1, Some(data.teams()), out.file("empirical_logodds_l1.csv")?)?;
            write_matrix_csv(l2, Some(data.teams()), out.file("empirical_logodds_l2.csv")?)?;
        }
    }
    write_matrix_csv(&predictor.l, Some(data.teams()), out.file("solution.csv")?)?;

    // Frozen evaluation on the test set.
    let predictions: Vec<_> = test
        .records()
        .iter()
        .map(|r| predictor.predict(r.home.0, r.away.0).map(Some))
        .collect::<logodds::Result<_>>()?;
    let report_cfg = ReportConfig {
        bootstrap_reps: bootstrap,
        level: 0.95,
        seed,
    };
    let report = ValidationReport::from_predictions(&test, &predictions, &report_cfg)?;
    println!(
        "test: accuracy {}, mean loglik {}",
        sig6(report.aggregates.accuracy),
        sig6(report.aggregates.mean_loglik)
    );
    let mut case_file = out.file("report.csv")?;
    report.write_csv(&mut case_file)?;
    out.write_json(
        "report.json",
        &serde_json::json!({
            "lambda": lambda,
            "phi": predictor.phi,
            "ternary": predictor.ternary,
            "aggregates": report.aggregates,
        }),
    )?;

    Manifest::new("regularize", seed)
        .arg("tune_start", tune_start.to_string())
        .arg("test_start", test_start.to_string())
        .arg("binary", binary)
        .arg("eps", eps)
        .arg("lambda_grid", lambda_grid)
        .input(&data_path)?
        .outputs([
            "lambda_table.csv",
            "solution.csv",
            "report.csv",
            "report.json",
        ])
        .write(&out)
}

fn cmd_simulate(
    data_path: PathBuf,
    season_year: i32,
    model: ModelName,
    regime: RegimeName,
    k: f64,
    reps: usize,
    common: CommonArgs,
) -> Result<()> {
    let seed = common.seed();
    let out = OutDir::create(&common.out)?;
    let data = load_dataset(&data_path)?;
    let season_start = NaiveDate::from_ymd_opt(season_year, 7, 1).unwrap();
    let season_end = NaiveDate::from_ymd_opt(season_year + 1, 7, 1).unwrap();
    let before = data.records().partition_point(|r| r.date < season_start);
    let after = data.records().partition_point(|r| r.date < season_end);
    let train = Dataset::new(data.records()[..before].to_vec(), data.teams().clone());
    let season = Dataset::new(
        data.records()[before..after].to_vec(),
        data.teams().clone(),
    );
    if season.is_empty() {
        bail!("no matches found in season {season_year}-{}", season_year + 1);
    }
    if train.is_empty() {
        bail!("no training matches before season {season_year}");
    }
    println!(
        "season {season_year}-{}: {} fixtures, trained on {} earlier matches",
        season_year + 1,
        season.len(),
        train.len()
    );

    // Prequential predictions over the season, then frozen resampling.
    let config = model_config(model, None, true)?;
    let runner = LogOddsRunner::new(
        config,
        regime.regime(),
        TrainConfig {
            learning_rate: k,
            seed,
            ..TrainConfig::default()
        },
    );
    let run = runner.run(&train, &season)?;
    let fixtures = season::fixtures_of(&season);

    // Only the teams actually playing this season get ranked; remap ids.
    let mut playing: Vec<usize> = fixtures
        .iter()
        .flat_map(|&(h, a)| [h.0, a.0])
        .collect();
    playing.sort_unstable();
    playing.dedup();
    let dense: std::collections::HashMap<usize, usize> = playing
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new))
        .collect();
    let dense_fixtures: Vec<_> = fixtures
        .iter()
        .map(|&(h, a)| {
            (
                logodds::data::TeamId(dense[&h.0]),
                logodds::data::TeamId(dense[&a.0]),
            )
        })
        .collect();
    let season_teams = logodds::data::TeamIndex::from_names(
        playing
            .iter()
            .map(|&t| data.teams().name(logodds::data::TeamId(t))),
    );

    let dist = season::simulate_season(
        &run.predictions,
        &dense_fixtures,
        playing.len(),
        reps,
        seed,
    )?;
    season::write_rank_csv(&dist, &season_teams, out.file("rank_matrix.csv")?)?;
    let summary = season::rank_summary(&dist, &season_teams);
    std::fs::write(out.path("summary.txt"), &summary)?;
    print!("{summary}");

    Manifest::new("simulate", seed)
        .arg("season", season_year)
        .arg("model", model_label(model))
        .arg("regime", regime.regime().name())
        .arg("k", k)
        .arg("reps", reps)
        .input(&data_path)?
        .outputs(["rank_matrix.csv", "summary.txt"])
        .write(&out)
}
