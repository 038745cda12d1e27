//! Synthetic truth generation, Bernoulli match sampling, and the paired
//! replication experiment for model comparison.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MatchRecord, Outcome, TeamId, TeamIndex};
use crate::error::{Error, Result};
use crate::links::sigmoid;
use crate::model::{LogOddsMatrix, Structure};
use crate::regularize;
use crate::stats::{wilcoxon_signed_rank, Alternative};
use crate::train::{grid_search, LogOddsRunner, ModelConfig, Regime, TrainConfig};

/// Ground-truth structure of a synthetic log-odds matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TruthSpec {
    /// L = u v^T - v u^T with iid Gaussian factor entries.
    Rank2Gaussian { mu: f64, sigma: f64 },
    /// L = s1 (u v^T - v u^T) + s2 (theta o^T - o theta^T) with
    /// {o, u, v, theta} orthonormal (o the normalized ones vector);
    /// singular values come out as (s1, s1, s2, s2).
    Rank4Orthonormal { s1: f64, s2: f64 },
    /// The rank-four form with iid Gaussian factors and the raw ones vector.
    Rank4Gaussian { mu: f64, sigma: f64 },
    /// L = theta 1^T - 1 theta^T with iid centered Gaussian ratings.
    EloGaussian { sd: f64 },
}

/// Parameters of one synthetic data-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub q: usize,
    pub truth: TruthSpec,
    /// Matches sampled per unordered pair, in each generated set.
    pub matches_per_pair: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            q: 47,
            truth: TruthSpec::Rank2Gaussian { mu: 1.0, sigma: 0.7 },
            matches_per_pair: 4,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::Invalid("need at least two teams".into()));
        }
        if self.matches_per_pair == 0 {
            return Err(Error::Invalid("matches_per_pair must be positive".into()));
        }
        let positive = |v: f64, name: &str| -> Result<()> {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive, got {v}")))
            }
        };
        match self.truth {
            TruthSpec::Rank2Gaussian { sigma, .. } | TruthSpec::Rank4Gaussian { sigma, .. } => {
                positive(sigma, "sigma")
            }
            TruthSpec::Rank4Orthonormal { s1, s2 } => {
                positive(s1, "s1").and(positive(s2, "s2"))
            }
            TruthSpec::EloGaussian { sd } => positive(sd, "sd"),
        }
    }
}

fn gaussian_vector(q: usize, mu: f64, sigma: f64, rng: &mut crate::rng::Rng) -> DVector<f64> {
    DVector::from_fn(q, |_, _| mu + sigma * crate::rng::standard_normal(rng))
}

/// a b^T - b a^T
fn antisym_outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose() - b * a.transpose()
}

/// Deterministic Gram-Schmidt over the given vectors; fails on (numerical)
/// degeneracy.
fn orthonormalize(mut vectors: Vec<DVector<f64>>) -> Option<Vec<DVector<f64>>> {
    for i in 0..vectors.len() {
        for j in 0..i {
            let proj = vectors[i].dot(&vectors[j]);
            let prev = vectors[j].clone();
            vectors[i] -= prev * proj;
        }
        let norm = vectors[i].norm();
        if norm < 1e-8 {
            return None;
        }
        vectors[i] /= norm;
    }
    Some(vectors)
}

/// Generates the ground-truth log-odds matrix; exactly antisymmetric by
/// construction.
pub fn gen_truth(spec: &SynthSpec) -> Result<LogOddsMatrix> {
    spec.validate()?;
    let q = spec.q;
    let mut rng = crate::rng::seeded(spec.seed);
    let (m, structure) = match spec.truth {
        TruthSpec::Rank2Gaussian { mu, sigma } => {
            let u = gaussian_vector(q, mu, sigma, &mut rng);
            let v = gaussian_vector(q, mu, sigma, &mut rng);
            (antisym_outer(&u, &v), Structure::TwoFactor)
        }
        TruthSpec::EloGaussian { sd } => {
            let theta = gaussian_vector(q, 0.0, sd, &mut rng);
            let ones = DVector::from_element(q, 1.0);
            (antisym_outer(&theta, &ones), Structure::Rank2)
        }
        TruthSpec::Rank4Gaussian { mu, sigma } => {
            let u = gaussian_vector(q, mu, sigma, &mut rng);
            let v = gaussian_vector(q, mu, sigma, &mut rng);
            let theta = gaussian_vector(q, mu, sigma, &mut rng);
            let ones = DVector::from_element(q, 1.0);
            (
                antisym_outer(&u, &v) + antisym_outer(&theta, &ones),
                Structure::RankFour,
            )
        }
        TruthSpec::Rank4Orthonormal { s1, s2 } => {
            let mut basis = None;
            for _ in 0..20 {
                let candidates = vec![
                    DVector::from_element(q, 1.0),
                    gaussian_vector(q, 0.0, 1.0, &mut rng),
                    gaussian_vector(q, 0.0, 1.0, &mut rng),
                    gaussian_vector(q, 0.0, 1.0, &mut rng),
                ];
                if let Some(ortho) = orthonormalize(candidates) {
                    basis = Some(ortho);
                    break;
                }
            }
            let basis = basis.ok_or_else(|| {
                Error::Invalid("orthonormalization kept degenerating".into())
            })?;
            let (ones_hat, u, v, theta) = (&basis[0], &basis[1], &basis[2], &basis[3]);
            (
                antisym_outer(u, v) * s1 + antisym_outer(theta, ones_hat) * s2,
                Structure::RankFour,
            )
        }
    };
    Ok(LogOddsMatrix::new(m, structure))
}

/// Team index T00, T01, ... sized for the truth matrix.
pub fn synthetic_teams(q: usize) -> TeamIndex {
    let width = (q.saturating_sub(1)).to_string().len().max(2);
    TeamIndex::from_names((0..q).map(|i| format!("T{i:0width$}")))
}

/// Samples `matches_per_pair` Bernoulli outcomes for every unordered pair,
/// the lower-indexed team designated as the home side (the synthetic truths
/// carry no home advantage). Dates are synthetic and strictly increasing
/// from `start`.
pub fn sample_matches(
    truth: &LogOddsMatrix,
    matches_per_pair: usize,
    seed: u64,
    start: NaiveDate,
) -> Result<Dataset> {
    if truth.antisymmetry_defect() > 1e-9 {
        return Err(Error::Invalid(
            "synthetic sampling expects an antisymmetric truth".into(),
        ));
    }
    let q = truth.n_teams();
    let mut rng = crate::rng::seeded(seed);
    let mut records = Vec::with_capacity(matches_per_pair * q * (q - 1) / 2);
    let mut day = 0u64;
    for _round in 0..matches_per_pair {
        for i in 0..q {
            for j in (i + 1)..q {
                let p = sigmoid(truth.get(TeamId(i), TeamId(j)));
                let home_wins = rng.gen_bool(p);
                let (hg, ag) = if home_wins { (1, 0) } else { (0, 1) };
                records.push(MatchRecord {
                    date: start + chrono::Days::new(day),
                    home: TeamId(i),
                    away: TeamId(j),
                    home_goals: hg,
                    away_goals: ag,
                    outcome: Outcome::from_goals(hg, ag),
                    odds: None,
                });
                day += 1;
            }
        }
    }
    Ok(Dataset::new(records, synthetic_teams(q)))
}

/// A contender in a replication experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExperimentModel {
    LogOdds(ModelConfig),
    /// Nuclear-norm regularized estimation (binary counts); lambda is tuned
    /// on a chronological split of the validation set.
    Regularized { eps: f64 },
}

impl ExperimentModel {
    pub fn name(&self) -> String {
        match self {
            ExperimentModel::LogOdds(m) => format!(
                "{}{}",
                m.structure.name(),
                if m.covariates { "-cov" } else { "" }
            ),
            ExperimentModel::Regularized { .. } => "Regularized".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub synth: SynthSpec,
    pub models: Vec<ExperimentModel>,
    pub reps: usize,
    /// Training regime for the log-odds contenders (Online per the
    /// replication protocol; SingleBatch for batch comparisons).
    pub regime: Regime,
    pub k_grid: Vec<f64>,
}

/// Per-replication, per-model test metrics.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRow {
    pub rep: usize,
    pub model: String,
    pub mean_loglik: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub model_names: Vec<String>,
    pub rows: Vec<ReplicationRow>,
    /// p_loglik[a][b]: one-sided Wilcoxon p-value that model b achieves
    /// higher mean log-likelihood than model a (1.0 on the diagonal).
    pub p_loglik: Vec<Vec<f64>>,
    pub p_accuracy: Vec<Vec<f64>>,
    /// Set for entries whose paired differences were all zero.
    pub degenerate: Vec<Vec<bool>>,
}

/// Runs the paired replication protocol: per replication a fresh truth plus
/// fresh validation and test sets, per-model tuning on the validation set,
/// evaluation on the test set; Wilcoxon signed-rank p-values over the
/// paired per-replication metrics. Deterministic given the seed.
pub fn replicate_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.reps < 2 {
        return Err(Error::Invalid("need at least two replications".into()));
    }
    if cfg.models.is_empty() {
        return Err(Error::Invalid("need at least one model".into()));
    }
    cfg.synth.validate()?;
    let n_models = cfg.models.len();
    let mut rows = Vec::with_capacity(cfg.reps * n_models);
    let mut logliks = vec![Vec::with_capacity(cfg.reps); n_models];
    let mut accuracies = vec![Vec::with_capacity(cfg.reps); n_models];

    for rep in 0..cfg.reps {
        // Sub-seeds for this replication, drawn from its own stream.
        let mut rep_rng = crate::rng::replicate(cfg.synth.seed, rep as u64);
        let truth_seed: u64 = rep_rng.gen();
        let val_seed: u64 = rep_rng.gen();
        let test_seed: u64 = rep_rng.gen();
        let init_seed: u64 = rep_rng.gen();

        let truth = gen_truth(&SynthSpec {
            seed: truth_seed,
            ..cfg.synth
        })?;
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let validation =
            sample_matches(&truth, cfg.synth.matches_per_pair, val_seed, start)?;
        let test_start = validation.last_date().unwrap() + chrono::Days::new(1);
        let test = sample_matches(&truth, cfg.synth.matches_per_pair, test_seed, test_start)?;

        for (m, model) in cfg.models.iter().enumerate() {
            let (mean_loglik, accuracy) = match model {
                ExperimentModel::LogOdds(config) => {
                    let empty = Dataset::new(Vec::new(), validation.teams().clone());
                    let chosen = match cfg.regime {
                        Regime::Online | Regime::TwoStage => {
                            let grid: Vec<TrainConfig> = cfg
                                .k_grid
                                .iter()
                                .map(|&k| TrainConfig {
                                    learning_rate: k,
                                    seed: init_seed,
                                    ..TrainConfig::default()
                                })
                                .collect();
                            grid_search(*config, cfg.regime, &empty, &validation, &grid)?.0
                        }
                        // Batch regimes have no K to tune.
                        _ => TrainConfig {
                            seed: init_seed,
                            ..TrainConfig::default()
                        },
                    };
                    let runner = LogOddsRunner::new(*config, cfg.regime, chosen);
                    let out = runner.run(&validation, &test)?;
                    score(&out.predictions, &test)
                }
                ExperimentModel::Regularized { eps } => {
                    let hold = validation.len() / 2;
                    let counts_half = regularize::CountMatrices::binary_from(&Dataset::new(
                        validation.records()[..hold].to_vec(),
                        validation.teams().clone(),
                    ));
                    let tune_half = Dataset::new(
                        validation.records()[hold..].to_vec(),
                        validation.teams().clone(),
                    );
                    let emp = regularize::empirical_logodds(&counts_half, *eps)?;
                    let grid = match &emp {
                        regularize::EmpiricalLogOdds::Binary { lhat, .. } => {
                            regularize::lambda_grid(lhat)
                        }
                        regularize::EmpiricalLogOdds::Ternary { l1, .. } => {
                            regularize::lambda_grid(l1)
                        }
                    };
                    let (_, lambda, _) =
                        regularize::select_lambda(&counts_half, *eps, &tune_half, &grid)?;
                    // Refit on the full validation set with the chosen lambda.
                    let counts = regularize::CountMatrices::binary_from(&validation);
                    let regularize::EmpiricalLogOdds::Binary { lhat, .. } =
                        regularize::empirical_logodds(&counts, *eps)?
                    else {
                        unreachable!("binary counts produce binary log-odds")
                    };
                    let predictor = regularize::RegularizedPredictor {
                        l: regularize::solve_nuclear_binary(&lhat, lambda)?,
                        phi: 0.0,
                        ternary: false,
                    };
                    let preds: Vec<_> = test
                        .records()
                        .iter()
                        .map(|r| predictor.predict(r.home.0, r.away.0))
                        .collect::<Result<_>>()?;
                    score(&preds, &test)
                }
            };
            rows.push(ReplicationRow {
                rep,
                model: model.name(),
                mean_loglik,
                accuracy,
            });
            logliks[m].push(mean_loglik);
            accuracies[m].push(accuracy);
        }
    }

    let mut p_loglik = vec![vec![1.0; n_models]; n_models];
    let mut p_accuracy = vec![vec![1.0; n_models]; n_models];
    let mut degenerate = vec![vec![false; n_models]; n_models];
    for a in 0..n_models {
        for b in 0..n_models {
            if a == b {
                continue;
            }
            let ll = wilcoxon_signed_rank(&logliks[b], &logliks[a], Alternative::Greater)?;
            let acc =
                wilcoxon_signed_rank(&accuracies[b], &accuracies[a], Alternative::Greater)?;
            p_loglik[a][b] = ll.p_value;
            p_accuracy[a][b] = acc.p_value;
            degenerate[a][b] = ll.degenerate || acc.degenerate;
        }
    }

    Ok(ExperimentResult {
        model_names: cfg.models.iter().map(|m| m.name()).collect(),
        rows,
        p_loglik,
        p_accuracy,
        degenerate,
    })
}

fn score(preds: &[crate::data::OutcomeDistribution], test: &Dataset) -> (f64, f64) {
    let mut total = 0.0;
    let mut correct = 0usize;
    for (p, r) in preds.iter().zip(test.records()) {
        total += p.mass(r.outcome).ln();
        if p.argmax() == r.outcome {
            correct += 1;
        }
    }
    (
        total / test.len() as f64,
        correct as f64 / test.len() as f64,
    )
}

/// Writes one row per replication per model.
pub fn write_experiment_csv<W: std::io::Write>(
    result: &ExperimentResult,
    mut w: W,
) -> Result<()> {
    writeln!(w, "rep,model,mean_loglik,accuracy")?;
    for r in &result.rows {
        writeln!(w, "{},{},{},{}", r.rep, r.model, r.mean_loglik, r.accuracy)?;
    }
    Ok(())
}
