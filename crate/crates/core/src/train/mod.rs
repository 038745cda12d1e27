//! Training of structured log-odds models: the classic on-line rating
//! update, full-batch maximum likelihood with backtracking line search, the
//! batch/epoch schedule, the four training regimes built from them, and
//! hyperparameter grid search.

use serde::{Deserialize, Serialize};

use crate::data::{
    partition_bounds, promotion_features, BatchPolicy, Dataset, MatchRecord, OutcomeDistribution,
};
use crate::error::{Error, Result};
use crate::model::{self, grad, loglik, Link, ModelSpec, ModelState, PromoFlags, Structure};

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Step size of the on-line gradient update (the K factor).
    pub learning_rate: f64,
    /// Epoch size of the initial batch.
    pub epochs_initial: usize,
    /// Epoch size of every later batch.
    pub epochs: usize,
    pub batch_policy: BatchPolicy,
    /// Iteration cap for batch fitting.
    pub max_iters: usize,
    /// Batch fitting stops once the log-likelihood improvement falls below
    /// tol * max(1, |loglik|). Zero disables this criterion.
    pub tol: f64,
    /// Batch fitting also stops once the gradient norm falls below this.
    /// Zero disables the criterion.
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs_initial: 1,
            epochs: 1,
            batch_policy: BatchPolicy::PerMatch,
            max_iters: 5000,
            tol: 1e-8,
            grad_tol: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_learning_rate(k: f64) -> Self {
        Self {
            learning_rate: k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.tol < 0.0 || self.grad_tol < 0.0 {
            return Err(Error::Invalid("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// The default K-factor grid searched when none is supplied.
pub fn default_k_grid() -> Vec<f64> {
    vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5]
}

/// One row of the batch-fitting trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loglik: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// Writes a fitting trace as CSV (iteration, loglik, gradient norm, step).
pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], mut w: W) -> Result<()> {
    writeln!(w, "iteration,loglik,grad_norm,step")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.iteration, r.loglik, r.grad_norm, r.step)?;
    }
    Ok(())
}

fn loglik_or_reject(
    state: &ModelState,
    spec: &ModelSpec,
    data: &Dataset,
    features: Option<&[PromoFlags]>,
) -> Result<f64> {
    match loglik(state, spec, data, features) {
        Ok(v) => Ok(v),
        // A wild trial step can push the Skellam series out of its
        // convergent range; the line search just rejects such steps.
        Err(Error::Overflow(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// One on-line rating update: a single gradient-ascent step on the
/// one-outcome log-likelihood with step size `k`. For the binary rank-two
/// model this is exactly the classical update
/// theta_i += K (S - p), theta_j -= K (S - p).
/// Covariate coefficients are not touched by the on-line step.
pub fn elo_online_update(
    state: &mut ModelState,
    spec: &ModelSpec,
    record: &MatchRecord,
    features: Option<PromoFlags>,
    k: f64,
) -> Result<()> {
    let mut g = ModelState::zeros(spec.n_teams);
    model::accumulate_grad(state, spec, record, features, &mut g)?;
    state.axpy(spec, &g, k, false);
    Ok(())
}

/// Full-batch maximum likelihood by gradient ascent with backtracking step
/// halving. The returned trace is non-decreasing in `loglik`; the ratings
/// gauge is applied to the final state.
pub fn fit_batch(
    mut state: ModelState,
    spec: &ModelSpec,
    data: &Dataset,
    features: Option<&[PromoFlags]>,
    cfg: &TrainConfig,
) -> Result<(ModelState, Vec<TraceRow>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Invalid("fit_batch needs a nonempty dataset".into()));
    }
    let mut ll = loglik(&state, spec, data, features)?;
    if !ll.is_finite() {
        return Err(Error::NonFinite(format!(
            "initial log-likelihood is {ll}: the model assigns zero mass to an \
             observed outcome (for example phi = 0 with observed draws)"
        )));
    }
    let mut trace = vec![TraceRow {
        iteration: 0,
        loglik: ll,
        grad_norm: f64::NAN,
        step: 0.0,
    }];
    let mut step = 1.0f64;
    for iteration in 1..=cfg.max_iters {
        let g = grad(&state, spec, data, features)?;
        let gn = g.grad_norm(spec);
        trace.last_mut().unwrap().grad_norm = gn;
        if cfg.grad_tol > 0.0 && gn < cfg.grad_tol {
            break;
        }
        // Backtracking line search with a mild Armijo condition; the trial
        // step doubles after every accepted iteration so the search can
        // expand as well as shrink.
        let mut t = step * 2.0;
        let mut accepted = None;
        while t > 1e-18 {
            let mut cand = state.clone();
            cand.axpy(spec, &g, t, true);
            let cand_ll = loglik_or_reject(&cand, spec, data, features)?;
            if cand_ll.is_finite() && cand_ll >= ll + 1e-4 * t * gn * gn {
                accepted = Some((cand, cand_ll));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_ll)) = accepted else {
            // No step of any size improves the likelihood: converged to
            // floating-point resolution.
            break;
        };
        let improvement = cand_ll - ll;
        state = cand;
        ll = cand_ll;
        step = t;
        trace.push(TraceRow {
            iteration,
            loglik: ll,
            grad_norm: f64::NAN,
            step: t,
        });
        if cfg.tol > 0.0 && improvement < cfg.tol * ll.abs().max(1.0) {
            break;
        }
    }
    if trace.last().map_or(false, |r| r.grad_norm.is_nan()) {
        let g = grad(&state, spec, data, features)?;
        trace.last_mut().unwrap().grad_norm = g.grad_norm(spec);
    }
    state.apply_gauge(spec);
    Ok((state, trace))
}

/// Epoch sizes: the initial batch may differ from the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub initial: usize,
    pub rest: usize,
}

impl EpochSchedule {
    pub fn uniform(n: usize) -> Self {
        Self { initial: n, rest: n }
    }

    fn for_batch(&self, index: usize) -> usize {
        if index == 0 {
            self.initial
        } else {
            self.rest
        }
    }
}

/// A prediction emitted by the schedule, before its batch entered training.
#[derive(Debug, Clone)]
pub struct SchedulePrediction {
    pub batch: usize,
    /// Index into the concatenation of all batches.
    pub index: usize,
    pub dist: OutcomeDistribution,
    /// Number of gradient updates applied to the state when the prediction
    /// was made (prequential audit).
    pub updates_before: u64,
}

/// Output of a batch/epoch schedule run.
#[derive(Debug, Clone)]
pub struct ScheduleRun {
    pub predictions: Vec<SchedulePrediction>,
    /// State after training on each batch.
    pub snapshots: Vec<ModelState>,
    pub final_state: ModelState,
    /// Updates counter after training each batch; predictions for batch i
    /// carry the counter value left by batch i-1.
    pub updates_after_batch: Vec<u64>,
}

/// Batch/epoch on-line training: for each batch in order, first predict
/// every record in the batch with the current state, then apply tau_i
/// full-gradient ascent steps of size `lr` on that batch. Predictions
/// therefore never depend on their own record or any later one.
pub fn run_schedule(
    mut state: ModelState,
    spec: &ModelSpec,
    batches: &[Dataset],
    features: Option<&[Vec<PromoFlags>]>,
    epochs: &EpochSchedule,
    lr: f64,
    update_covariates: bool,
) -> Result<ScheduleRun> {
    if let Some(f) = features {
        if f.len() != batches.len() {
            return Err(Error::Dimension(format!(
                "{} feature batches for {} data batches",
                f.len(),
                batches.len()
            )));
        }
    }
    let mut predictions = Vec::new();
    let mut snapshots = Vec::with_capacity(batches.len());
    let mut updates_after_batch = Vec::with_capacity(batches.len());
    let mut updates: u64 = 0;
    let mut global = 0usize;
    for (b, batch) in batches.iter().enumerate() {
        let batch_features = features.map(|f| f[b].as_slice());
        for (k, r) in batch.records().iter().enumerate() {
            let feat = batch_features.map(|f| f[k]);
            predictions.push(SchedulePrediction {
                batch: b,
                index: global + k,
                dist: model::predict(&state, spec, r.home, r.away, feat)?,
                updates_before: updates,
            });
        }
        for _ in 0..epochs.for_batch(b) {
            let g = grad(&state, spec, batch, batch_features)?;
            state.axpy(spec, &g, lr, update_covariates);
            updates += 1;
        }
        snapshots.push(state.clone());
        updates_after_batch.push(updates);
        global += batch.len();
    }
    Ok(ScheduleRun {
        predictions,
        snapshots,
        final_state: state,
        updates_after_batch,
    })
}

/// The four training regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Single-batch maximum likelihood on the training data; the state is
    /// never updated during testing.
    SingleBatch,
    /// Repeated re-training: a fresh batch fit from scratch at every batch
    /// boundary of the test stream.
    Retrain,
    /// Pure on-line updates over the whole concatenated stream.
    Online,
    /// Batch fit to convergence on the training data, then on-line updates
    /// through the test stream (covariate coefficients stay fixed).
    TwoStage,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::SingleBatch => "batch",
            Regime::Retrain => "retrain",
            Regime::Online => "online",
            Regime::TwoStage => "two-stage",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "batch" => Regime::SingleBatch,
            "retrain" => Regime::Retrain,
            "online" => Regime::Online,
            "two-stage" => Regime::TwoStage,
            _ => return None,
        })
    }
}

/// Which model to build, independent of the team count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub structure: Structure,
    pub link: Link,
    pub covariates: bool,
}

impl ModelConfig {
    pub fn spec(&self, n_teams: usize) -> Result<ModelSpec> {
        ModelSpec::new(self.structure, self.link, self.covariates, n_teams)
    }
}

/// Result of running a model over a test stream.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One prediction per test record, each made strictly before the record
    /// entered any parameter update.
    pub predictions: Vec<OutcomeDistribution>,
    /// Updates counter at prediction time, per test record (for the
    /// prequential audit).
    pub updates_at_prediction: Vec<u64>,
    pub final_state: ModelState,
}

/// A structured log-odds model plus its training regime and configuration;
/// drives prequential evaluation over a train/test pair.
#[derive(Debug, Clone)]
pub struct LogOddsRunner {
    pub model: ModelConfig,
    pub regime: Regime,
    pub cfg: TrainConfig,
}

impl LogOddsRunner {
    pub fn new(model: ModelConfig, regime: Regime, cfg: TrainConfig) -> Self {
        Self { model, regime, cfg }
    }

    /// Runs the regime over `train` (initial data) and `test` (evaluation
    /// stream), returning prequential predictions for every test record.
    pub fn run(&self, train: &Dataset, test: &Dataset) -> Result<RunOutput> {
        self.cfg.validate()?;
        let concat = train.concat(test)?;
        let spec = self.model.spec(concat.n_teams())?;
        let features = self.model.covariates.then(|| promotion_features(&concat));
        let feature_slice =
            |range: std::ops::Range<usize>| features.as_ref().map(|f| f[range].to_vec());
        let init = ModelState::init(&spec, self.cfg.seed);

        match self.regime {
            Regime::SingleBatch => {
                let state = if train.is_empty() {
                    init
                } else {
                    let (s, _) = fit_batch(
                        init,
                        &spec,
                        train,
                        feature_slice(0..train.len()).as_deref(),
                        &self.cfg,
                    )?;
                    s
                };
                frozen_predictions(
                    &state,
                    &spec,
                    test,
                    feature_slice(train.len()..concat.len()),
                    0,
                )
            }
            Regime::Retrain => {
                let bounds = partition_bounds(test, self.cfg.batch_policy);
                let mut predictions = Vec::with_capacity(test.len());
                let mut updates_at_prediction = Vec::with_capacity(test.len());
                let mut state = init.clone();
                let mut fits: u64 = 0;
                for range in bounds {
                    // Fit from scratch on everything strictly before this
                    // batch of the test stream.
                    let seen = train.len() + range.start;
                    if seen > 0 {
                        let prefix = {
                            let mut records = train.records().to_vec();
                            records.extend(test.records()[0..range.start].iter().cloned());
                            Dataset::new(records, concat.teams().clone())
                        };
                        let (s, _) = fit_batch(
                            ModelState::init(&spec, self.cfg.seed),
                            &spec,
                            &prefix,
                            feature_slice(0..seen).as_deref(),
                            &self.cfg,
                        )?;
                        state = s;
                        fits += 1;
                    }
                    for (k, r) in test.records()[range.clone()].iter().enumerate() {
                        let feat = features.as_ref().map(|f| f[train.len() + range.start + k]);
                        predictions.push(model::predict(&state, &spec, r.home, r.away, feat)?);
                        updates_at_prediction.push(fits);
                    }
                }
                Ok(RunOutput {
                    predictions,
                    updates_at_prediction,
                    final_state: state,
                })
            }
            Regime::Online => {
                let bounds = partition_bounds(&concat, self.cfg.batch_policy);
                let batches = slice_batches(&concat, &bounds);
                let batch_features = features
                    .as_ref()
                    .map(|f| bounds.iter().map(|r| f[r.clone()].to_vec()).collect::<Vec<_>>());
                let run = run_schedule(
                    init,
                    &spec,
                    &batches,
                    batch_features.as_deref(),
                    &EpochSchedule::uniform(self.cfg.epochs),
                    self.cfg.learning_rate,
                    false,
                )?;
                let mut predictions = Vec::with_capacity(test.len());
                let mut updates_at_prediction = Vec::with_capacity(test.len());
                for p in run.predictions {
                    if p.index >= train.len() {
                        predictions.push(p.dist);
                        updates_at_prediction.push(p.updates_before);
                    }
                }
                Ok(RunOutput {
                    predictions,
                    updates_at_prediction,
                    final_state: run.final_state,
                })
            }
            Regime::TwoStage => {
                let state = if train.is_empty() {
                    init
                } else {
                    let (s, _) = fit_batch(
                        init,
                        &spec,
                        train,
                        feature_slice(0..train.len()).as_deref(),
                        &self.cfg,
                    )?;
                    s
                };
                if test.is_empty() {
                    return frozen_predictions(&state, &spec, test, None, 0);
                }
                let bounds = partition_bounds(test, BatchPolicy::PerMatch);
                let batches = slice_batches(test, &bounds);
                let batch_features = features.as_ref().map(|f| {
                    bounds
                        .iter()
                        .map(|r| f[train.len() + r.start..train.len() + r.end].to_vec())
                        .collect::<Vec<_>>()
                });
                let run = run_schedule(
                    state,
                    &spec,
                    &batches,
                    batch_features.as_deref(),
                    &EpochSchedule::uniform(self.cfg.epochs),
                    self.cfg.learning_rate,
                    false,
                )?;
                Ok(RunOutput {
                    predictions: run.predictions.iter().map(|p| p.dist).collect(),
                    updates_at_prediction: run
                        .predictions
                        .iter()
                        .map(|p| p.updates_before)
                        .collect(),
                    final_state: run.final_state,
                })
            }
        }
    }
}

fn frozen_predictions(
    state: &ModelState,
    spec: &ModelSpec,
    test: &Dataset,
    features: Option<Vec<PromoFlags>>,
    updates: u64,
) -> Result<RunOutput> {
    let mut predictions = Vec::with_capacity(test.len());
    for (k, r) in test.records().iter().enumerate() {
        let feat = features.as_ref().map(|f| f[k]);
        predictions.push(model::predict(state, spec, r.home, r.away, feat)?);
    }
    Ok(RunOutput {
        updates_at_prediction: vec![updates; test.len()],
        predictions,
        final_state: state.clone(),
    })
}

fn slice_batches(d: &Dataset, bounds: &[std::ops::Range<usize>]) -> Vec<Dataset> {
    bounds
        .iter()
        .map(|r| Dataset::new(d.records()[r.clone()].to_vec(), d.teams().clone()))
        .collect()
}

/// One row of the grid-search report.
#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub learning_rate: f64,
    pub mean_loglik: f64,
    pub accuracy: f64,
    /// Set when an identical configuration appeared earlier in the grid.
    pub duplicate_of: Option<usize>,
}

/// Evaluates every configuration prequentially (train as initial data, tune
/// as test stream) and picks the one with the highest mean out-of-sample
/// log-likelihood. Ties break towards the smaller learning rate; duplicated
/// configurations keep their first occurrence.
pub fn grid_search(
    model: ModelConfig,
    regime: Regime,
    train: &Dataset,
    tune: &Dataset,
    grid: &[TrainConfig],
) -> Result<(TrainConfig, Vec<GridRow>)> {
    if grid.is_empty() {
        return Err(Error::Invalid("grid search needs a nonempty grid".into()));
    }
    if tune.is_empty() {
        return Err(Error::Invalid("grid search needs a nonempty tune set".into()));
    }
    let mut rows: Vec<GridRow> = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (k, cfg) in grid.iter().enumerate() {
        let duplicate_of = grid[..k].iter().position(|c| c == cfg);
        let (mean_loglik, accuracy) = match duplicate_of {
            Some(first) => (rows[first].mean_loglik, rows[first].accuracy),
            None => {
                let runner = LogOddsRunner::new(model, regime, cfg.clone());
                let out = runner.run(train, tune)?;
                let mut total = 0.0;
                let mut correct = 0usize;
                for (pred, rec) in out.predictions.iter().zip(tune.records()) {
                    total += pred.mass(rec.outcome).ln();
                    if pred.argmax() == rec.outcome {
                        correct += 1;
                    }
                }
                (total / tune.len() as f64, correct as f64 / tune.len() as f64)
            }
        };
        rows.push(GridRow {
            learning_rate: cfg.learning_rate,
            mean_loglik,
            accuracy,
            duplicate_of,
        });
        if duplicate_of.is_none() {
            let better = match best {
                None => true,
                Some((b, b_ll)) => {
                    mean_loglik > b_ll
                        || (mean_loglik == b_ll && cfg.learning_rate < grid[b].learning_rate)
                }
            };
            if better {
                best = Some((k, mean_loglik));
            }
        }
    }
    let (idx, _) = best.ok_or_else(|| Error::Invalid("no usable grid point".into()))?;
    Ok((grid[idx].clone(), rows))
}
