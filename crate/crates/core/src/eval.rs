//! Loss functions, the temporal validation harness, and validation reports.

use serde::Serialize;

use crate::baselines::{
    fit_poisson_baseline, home_win_baseline, odds_to_probs, poisson_predict_ternary,
    PoissonVariant,
};
use crate::data::{BatchPolicy, Dataset, Outcome, OutcomeDistribution};
use crate::error::{Error, Result};
use crate::stats::{bootstrap_ci, clopper_pearson};
use crate::train::LogOddsRunner;

/// Negative log mass on the observed outcome; infinite on zero mass.
pub fn log_loss(pred: &OutcomeDistribution, observed: Outcome) -> f64 {
    -pred.mass(observed).ln()
}

/// (1 - p_observed)^2 plus the squared mass on the other outcomes.
pub fn brier_loss(pred: &OutcomeDistribution, observed: Outcome) -> f64 {
    let p = pred.mass(observed);
    let sum_sq = pred.p_win * pred.p_win + pred.p_draw * pred.p_draw + pred.p_lose * pred.p_lose;
    (1.0 - p).powi(2) + (sum_sq - p * p)
}

/// One evaluated test case.
#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    /// Index into the test set.
    pub index: usize,
    pub date: chrono::NaiveDate,
    pub home: String,
    pub away: String,
    pub pred: OutcomeDistribution,
    pub observed: Outcome,
    pub log_loss: f64,
    pub brier: f64,
    pub correct: bool,
}

/// Settings of the statistical summaries attached to a report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportConfig {
    pub bootstrap_reps: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            bootstrap_reps: 5000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregates {
    /// Evaluated cases (excludes skipped records).
    pub n: usize,
    /// Test records without a prediction (e.g. rows lacking odds).
    pub n_skipped: usize,
    /// Cases with infinite log-loss; excluded from the mean and the
    /// bootstrap but counted here.
    pub n_infinite: usize,
    pub mean_log_loss: f64,
    /// Mean out-of-sample log-likelihood (the negative of the above).
    pub mean_loglik: f64,
    pub mean_brier: f64,
    pub accuracy: f64,
    /// Clopper-Pearson interval for the accuracy.
    pub accuracy_ci: (f64, f64),
    /// Bootstrap percentile interval for the mean log-likelihood.
    pub loglik_ci: (f64, f64),
}

/// Per-case results plus aggregate metrics with confidence intervals.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub per_case: Vec<CaseResult>,
    pub n_skipped: usize,
    pub aggregates: Aggregates,
}

impl ValidationReport {
    /// Builds a report from aligned predictions; `None` predictions count
    /// as skipped. Accuracy takes the highest-probability outcome, ties
    /// broken win > draw > lose.
    pub fn from_predictions(
        test: &Dataset,
        predictions: &[Option<OutcomeDistribution>],
        cfg: &ReportConfig,
    ) -> Result<Self> {
        if predictions.len() != test.len() {
            return Err(Error::Dimension(format!(
                "{} predictions for {} test records",
                predictions.len(),
                test.len()
            )));
        }
        let mut per_case = Vec::new();
        let mut n_skipped = 0;
        for (k, (record, pred)) in test.records().iter().zip(predictions).enumerate() {
            let Some(pred) = pred else {
                n_skipped += 1;
                continue;
            };
            per_case.push(CaseResult {
                index: k,
                date: record.date,
                home: test.teams().name(record.home).to_string(),
                away: test.teams().name(record.away).to_string(),
                pred: *pred,
                observed: record.outcome,
                log_loss: log_loss(pred, record.outcome),
                brier: brier_loss(pred, record.outcome),
                correct: pred.argmax() == record.outcome,
            });
        }
        let aggregates = aggregate(&per_case, n_skipped, cfg)?;
        Ok(Self {
            per_case,
            n_skipped,
            aggregates,
        })
    }

    /// Per-case CSV export.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "index,date,home,away,p_win,p_draw,p_lose,observed,log_loss,brier,correct"
        )?;
        for c in &self.per_case {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.index,
                c.date.format("%Y-%m-%d"),
                c.home,
                c.away,
                c.pred.p_win,
                c.pred.p_draw,
                c.pred.p_lose,
                c.observed.code(),
                c.log_loss,
                c.brier,
                c.correct
            )?;
        }
        Ok(())
    }
}

/// Aggregates recomputable from the per-case rows.
pub fn aggregate(
    per_case: &[CaseResult],
    n_skipped: usize,
    cfg: &ReportConfig,
) -> Result<Aggregates> {
    let n = per_case.len();
    if n == 0 {
        return Err(Error::Invalid("no evaluated cases to aggregate".into()));
    }
    let finite: Vec<f64> = per_case
        .iter()
        .map(|c| c.log_loss)
        .filter(|l| l.is_finite())
        .collect();
    let n_infinite = n - finite.len();
    let mean_log_loss = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
    let mean_brier = per_case.iter().map(|c| c.brier).sum::<f64>() / n as f64;
    let correct = per_case.iter().filter(|c| c.correct).count();
    let accuracy = correct as f64 / n as f64;
    let accuracy_ci = clopper_pearson(correct as u64, n as u64, cfg.level)?;
    let logliks: Vec<f64> = finite.iter().map(|l| -l).collect();
    let loglik_ci = if logliks.is_empty() {
        (f64::NEG_INFINITY, f64::NEG_INFINITY)
    } else {
        bootstrap_ci(&logliks, cfg.bootstrap_reps, cfg.level, cfg.seed)?
    };
    Ok(Aggregates {
        n,
        n_skipped,
        n_infinite,
        mean_log_loss,
        mean_loglik: -mean_log_loss,
        mean_brier,
        accuracy,
        accuracy_ci,
        loglik_ci,
    })
}

/// Output of one prequential model run over a test stream.
#[derive(Debug, Clone)]
pub struct ModelRun {
    /// One entry per test record; `None` marks records the model cannot
    /// score (counted as skipped).
    pub predictions: Vec<Option<OutcomeDistribution>>,
    /// Records whose prediction used information from their own or a later
    /// record; zero by construction for every model shipped here.
    pub leaked_records: u64,
}

/// A model that can be validated prequentially on a temporal split.
pub trait TemporalModel {
    fn name(&self) -> String;
    fn run(&mut self, train: &Dataset, test: &Dataset) -> Result<ModelRun>;
}

/// Runs the model over the temporal split and collects predictions for the
/// test records only, each made strictly before its record entered any
/// update.
pub fn temporal_validate(
    model: &mut dyn TemporalModel,
    train: &Dataset,
    test: &Dataset,
    cfg: &ReportConfig,
) -> Result<ValidationReport> {
    if let (Some(last), Some(first)) = (train.last_date(), test.first_date()) {
        if last >= first {
            return Err(Error::Invalid(format!(
                "training data must predate the test data ({last} >= {first})"
            )));
        }
    }
    let run = model.run(train, test)?;
    if run.leaked_records > 0 {
        return Err(Error::Invalid(format!(
            "prequential contract violated: {} leaked records",
            run.leaked_records
        )));
    }
    ValidationReport::from_predictions(test, &run.predictions, cfg)
}

impl TemporalModel for LogOddsRunner {
    fn name(&self) -> String {
        format!(
            "{}-{}{}-{}",
            self.model.structure.name(),
            self.model.link.name(),
            if self.model.covariates { "-cov" } else { "" },
            self.regime.name()
        )
    }

    fn run(&mut self, train: &Dataset, test: &Dataset) -> Result<ModelRun> {
        let out = LogOddsRunner::run(self, train, test)?;
        // The schedule counters must never decrease along the stream; any
        // violation would mean a prediction saw a later update.
        let leaked_records = out
            .updates_at_prediction
            .windows(2)
            .filter(|w| w[1] < w[0])
            .count() as u64;
        Ok(ModelRun {
            predictions: out.predictions.into_iter().map(Some).collect(),
            leaked_records,
        })
    }
}

/// Constant predictor: train-set outcome frequencies for every test record.
pub struct HomeWinModel;

impl TemporalModel for HomeWinModel {
    fn name(&self) -> String {
        "home-win".into()
    }

    fn run(&mut self, train: &Dataset, test: &Dataset) -> Result<ModelRun> {
        let baseline = home_win_baseline(train)?;
        Ok(ModelRun {
            predictions: vec![Some(baseline.dist); test.len()],
            leaked_records: 0,
        })
    }
}

/// Normalized bookmaker odds; records without odds are skipped and counted.
pub struct OddsModel;

impl TemporalModel for OddsModel {
    fn name(&self) -> String {
        "bookmaker-odds".into()
    }

    fn run(&mut self, _train: &Dataset, test: &Dataset) -> Result<ModelRun> {
        let mut predictions = Vec::with_capacity(test.len());
        for r in test.records() {
            predictions.push(match r.odds {
                Some(odds) => Some(odds_to_probs(odds)?),
                None => None,
            });
        }
        Ok(ModelRun {
            predictions,
            leaked_records: 0,
        })
    }
}

/// Maher / Dixon-Coles predictor, refitted from scratch at every calendar
/// quarter of the test stream.
pub struct PoissonModel {
    pub variant: PoissonVariant,
    pub xi: f64,
}

impl TemporalModel for PoissonModel {
    fn name(&self) -> String {
        match self.variant {
            PoissonVariant::Maher => "maher".into(),
            PoissonVariant::DixonColes => "dixon-coles".into(),
        }
    }

    fn run(&mut self, train: &Dataset, test: &Dataset) -> Result<ModelRun> {
        let concat = train.concat(test)?;
        let bounds = crate::data::partition_bounds(test, BatchPolicy::CalendarQuarter);
        let mut predictions = Vec::with_capacity(test.len());
        for range in bounds {
            let seen = train.len() + range.start;
            if seen == 0 {
                predictions.extend(std::iter::repeat(None).take(range.len()));
                continue;
            }
            let prefix = Dataset::new(
                concat.records()[0..seen].to_vec(),
                concat.teams().clone(),
            );
            let (state, _) = fit_poisson_baseline(&prefix, self.variant, self.xi)?;
            for r in &test.records()[range] {
                let (dist, _) = poisson_predict_ternary(&state, r.home, r.away)?;
                predictions.push(Some(dist));
            }
        }
        Ok(ModelRun {
            predictions,
            leaked_records: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DecimalOdds, MatchRecord, TeamId, TeamIndex};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use chrono::NaiveDate;
    use rand::Rng as _;

    fn date(n: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + chrono::Days::new(n)
    }

    fn record(k: u64, home: usize, away: usize, outcome: Outcome) -> MatchRecord {
        let (hg, ag) = match outcome {
            Outcome::HomeWin => (1, 0),
            Outcome::Draw => (0, 0),
            Outcome::AwayWin => (0, 1),
        };
        MatchRecord {
            date: date(k),
            home: TeamId(home),
            away: TeamId(away),
            home_goals: hg,
            away_goals: ag,
            outcome,
            odds: None,
        }
    }

    fn dataset(records: Vec<MatchRecord>, q: usize) -> Dataset {
        let teams = TeamIndex::from_names((0..q).map(|i| format!("T{i}")));
        Dataset::new(records, teams)
    }

    #[test]
    fn log_loss_examples() {
        let uniform = OutcomeDistribution::uniform();
        for o in [Outcome::HomeWin, Outcome::Draw, Outcome::AwayWin] {
            assert_relative_eq!(log_loss(&uniform, o), 3f64.ln(), epsilon = 1e-15);
        }
        let sure = OutcomeDistribution::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(log_loss(&sure, Outcome::HomeWin), 0.0);
        assert_eq!(log_loss(&sure, Outcome::Draw), f64::INFINITY);
        let p = OutcomeDistribution::new(0.5, 0.3, 0.2).unwrap();
        assert_relative_eq!(log_loss(&p, Outcome::HomeWin), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn brier_examples() {
        let sure = OutcomeDistribution::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(brier_loss(&sure, Outcome::HomeWin), 0.0);
        let binary = OutcomeDistribution::binary(0.6);
        assert_relative_eq!(
            brier_loss(&binary, Outcome::HomeWin),
            0.32,
            epsilon = 1e-12
        );
        let uniform = OutcomeDistribution::uniform();
        assert_relative_eq!(
            brier_loss(&uniform, Outcome::Draw),
            2.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn losses_invariant_under_relabeling() {
        let p = OutcomeDistribution::new(0.5, 0.3, 0.2).unwrap();
        // Swap the two non-observed outcomes: the observed mass and the
        // complement multiset stay fixed, so both losses are unchanged.
        let swapped = OutcomeDistribution::new(0.5, 0.2, 0.3).unwrap();
        assert_eq!(
            log_loss(&p, Outcome::HomeWin),
            log_loss(&swapped, Outcome::HomeWin)
        );
        assert_relative_eq!(
            brier_loss(&p, Outcome::HomeWin),
            brier_loss(&swapped, Outcome::HomeWin),
            epsilon = 1e-15
        );
    }

    #[test]
    fn true_distribution_minimizes_expected_log_loss() {
        let mut rng = crate::rng::seeded(77);
        let truth = 0.63;
        let outcomes: Vec<Outcome> = (0..20_000)
            .map(|_| {
                if rng.gen_bool(truth) {
                    Outcome::HomeWin
                } else {
                    Outcome::AwayWin
                }
            })
            .collect();
        let mean_ll = |p: f64| -> f64 {
            outcomes
                .iter()
                .map(|&o| log_loss(&OutcomeDistribution::binary(p), o))
                .sum::<f64>()
                / outcomes.len() as f64
        };
        let at_truth = mean_ll(truth);
        for &p in &[0.3, 0.5, 0.55, 0.7, 0.9] {
            assert!(mean_ll(p) > at_truth, "perturbed {p} beat the truth");
        }
    }

    #[test]
    fn report_aggregates_match_per_case_rows() {
        let mut rng = crate::rng::seeded(3);
        let records: Vec<MatchRecord> = (0..60)
            .map(|k| {
                let o = match rng.gen_range(0..3) {
                    0 => Outcome::HomeWin,
                    1 => Outcome::Draw,
                    _ => Outcome::AwayWin,
                };
                record(k, 0, 1, o)
            })
            .collect();
        let test = dataset(records, 2);
        let preds: Vec<Option<OutcomeDistribution>> = (0..60)
            .map(|_| {
                let w = rng.gen_range(0.1..0.8);
                let d = rng.gen_range(0.0..(1.0 - w) * 0.9);
                Some(OutcomeDistribution::normalized(w, d, 1.0 - w - d))
            })
            .collect();
        let cfg = ReportConfig::default();
        let report = ValidationReport::from_predictions(&test, &preds, &cfg).unwrap();
        let re = aggregate(&report.per_case, report.n_skipped, &cfg).unwrap();
        assert_eq!(report.aggregates.mean_log_loss, re.mean_log_loss);
        assert_eq!(report.aggregates.accuracy, re.accuracy);
        assert_eq!(report.aggregates.loglik_ci, re.loglik_ci);
        // Hand recomputation.
        let mean: f64 = report.per_case.iter().map(|c| c.log_loss).sum::<f64>() / 60.0;
        assert_relative_eq!(report.aggregates.mean_log_loss, mean, epsilon = 1e-12);
    }

    #[test]
    fn infinite_cases_are_counted_not_averaged() {
        let test = dataset(
            vec![record(0, 0, 1, Outcome::Draw), record(1, 0, 1, Outcome::HomeWin)],
            2,
        );
        let preds = vec![
            Some(OutcomeDistribution::binary(0.5)), // zero mass on the draw
            Some(OutcomeDistribution::binary(0.5)),
        ];
        let report =
            ValidationReport::from_predictions(&test, &preds, &ReportConfig::default()).unwrap();
        assert_eq!(report.aggregates.n_infinite, 1);
        assert_relative_eq!(report.aggregates.mean_log_loss, 2f64.ln(), epsilon = 1e-12);
    }

    struct UniformModel;

    impl TemporalModel for UniformModel {
        fn name(&self) -> String {
            "uniform".into()
        }
        fn run(&mut self, _train: &Dataset, test: &Dataset) -> Result<ModelRun> {
            Ok(ModelRun {
                predictions: vec![Some(OutcomeDistribution::uniform()); test.len()],
                leaked_records: 0,
            })
        }
    }

    #[test]
    fn uniform_model_scores_ln3() {
        let train = dataset(vec![record(0, 0, 1, Outcome::HomeWin)], 2);
        let test = dataset(
            (10..40).map(|k| record(k, 0, 1, Outcome::AwayWin)).collect(),
            2,
        );
        let report =
            temporal_validate(&mut UniformModel, &train, &test, &ReportConfig::default()).unwrap();
        assert_relative_eq!(report.aggregates.mean_log_loss, 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn temporal_precondition_enforced() {
        let train = dataset(vec![record(50, 0, 1, Outcome::HomeWin)], 2);
        let test = dataset(vec![record(10, 0, 1, Outcome::HomeWin)], 2);
        assert!(
            temporal_validate(&mut UniformModel, &train, &test, &ReportConfig::default())
                .is_err()
        );
    }

    #[test]
    fn odds_model_skips_and_counts_missing_rows() {
        let mut r0 = record(10, 0, 1, Outcome::HomeWin);
        r0.odds = Some(DecimalOdds {
            home: 2.0,
            draw: 3.0,
            away: 6.0,
        });
        let r1 = record(11, 1, 0, Outcome::Draw);
        let test = dataset(vec![r0, r1], 2);
        let train = dataset(vec![record(0, 0, 1, Outcome::HomeWin)], 2);
        let report =
            temporal_validate(&mut OddsModel, &train, &test, &ReportConfig::default()).unwrap();
        assert_eq!(report.n_skipped, 1);
        assert_eq!(report.per_case.len(), 1);
        assert_abs_diff_eq!(report.per_case[0].pred.p_win, 0.5, epsilon = 1e-12);
    }
}
