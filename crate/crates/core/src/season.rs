//! Monte Carlo simulation of final season rank tables from per-fixture
//! outcome distributions.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::Serialize;

use crate::data::{Dataset, OutcomeDistribution, TeamId, TeamIndex};
use crate::error::{Error, Result};

/// Estimated probability of each final rank per team: `probs[(team, rank)]`,
/// ranks 0-based from best to worst. Rows and columns each sum to one.
#[derive(Debug, Clone, Serialize)]
pub struct RankDistribution {
    #[serde(skip)]
    pub probs: DMatrix<f64>,
    pub reps: usize,
    pub seed: u64,
}

impl RankDistribution {
    pub fn n_teams(&self) -> usize {
        self.probs.nrows()
    }

    pub fn prob(&self, team: TeamId, rank: usize) -> f64 {
        self.probs[(team.0, rank)]
    }

    /// Smallest rank r with cumulative probability >= q (0-based).
    pub fn rank_quantile(&self, team: TeamId, q: f64) -> usize {
        let mut acc = 0.0;
        for r in 0..self.n_teams() {
            acc += self.probs[(team.0, r)];
            if acc >= q - 1e-12 {
                return r;
            }
        }
        self.n_teams() - 1
    }
}

/// The (home, away) pairings of a dataset in chronological order.
pub fn fixtures_of(d: &Dataset) -> Vec<(TeamId, TeamId)> {
    d.records().iter().map(|r| (r.home, r.away)).collect()
}

/// Simulates final rank tables: per replicate every fixture's outcome is
/// drawn from its (frozen) distribution, points are 3/1/0, and teams are
/// ranked by points. Teams on equal points are ordered uniformly at random
/// within the replicate, since sampled outcomes carry no goal difference.
pub fn simulate_season(
    predictions: &[OutcomeDistribution],
    fixtures: &[(TeamId, TeamId)],
    n_teams: usize,
    reps: usize,
    seed: u64,
) -> Result<RankDistribution> {
    if predictions.len() != fixtures.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} fixtures",
            predictions.len(),
            fixtures.len()
        )));
    }
    if fixtures.is_empty() || reps == 0 {
        return Err(Error::Invalid("need fixtures and at least one replicate".into()));
    }
    for &(home, away) in fixtures {
        if home.0 >= n_teams || away.0 >= n_teams || home == away {
            return Err(Error::Invalid(format!(
                "fixture ({home}, {away}) outside the {n_teams}-team league"
            )));
        }
    }
    let mut counts = DMatrix::<f64>::zeros(n_teams, n_teams);
    for rep in 0..reps {
        let mut rng = crate::rng::replicate(seed, rep as u64);
        let mut points = vec![0u32; n_teams];
        for (pred, &(home, away)) in predictions.iter().zip(fixtures) {
            let u: f64 = rng.gen_range(0.0..1.0);
            if u < pred.p_win {
                points[home.0] += 3;
            } else if u < pred.p_win + pred.p_draw {
                points[home.0] += 1;
                points[away.0] += 1;
            } else {
                points[away.0] += 3;
            }
        }
        // Random tie-break keys, drawn in team order for determinism.
        let keys: Vec<u64> = (0..n_teams).map(|_| rng.gen()).collect();
        let mut order: Vec<usize> = (0..n_teams).collect();
        order.sort_by_key(|&t| (std::cmp::Reverse(points[t]), keys[t]));
        for (rank, &team) in order.iter().enumerate() {
            counts[(team, rank)] += 1.0;
        }
    }
    Ok(RankDistribution {
        probs: counts / reps as f64,
        reps,
        seed,
    })
}

/// Teams-by-ranks CSV of the rank probabilities.
pub fn write_rank_csv<W: std::io::Write>(
    dist: &RankDistribution,
    teams: &TeamIndex,
    mut w: W,
) -> Result<()> {
    let q = dist.n_teams();
    let header: Vec<String> = std::iter::once("team".to_string())
        .chain((1..=q).map(|r| format!("rank{r}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for t in 0..q {
        let row: Vec<String> = std::iter::once(teams.name(TeamId(t)).to_string())
            .chain((0..q).map(|r| dist.probs[(t, r)].to_string()))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Human-readable summary: per-team quartile rank ranges, with the
/// tie-break caveat stated up front.
pub fn rank_summary(dist: &RankDistribution, teams: &TeamIndex) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Season rank distribution from {} Monte Carlo replicates (seed {}).\n",
        dist.reps, dist.seed
    ));
    out.push_str(
        "Note: teams on equal points are ordered uniformly at random per replicate;\n\
         the official goal-difference tie-break is not computable from sampled\n\
         win/draw/loss outcomes.\n\n",
    );
    out.push_str("team                      q25  median  q75\n");
    for t in 0..dist.n_teams() {
        let team = TeamId(t);
        out.push_str(&format!(
            "{:<24} {:>4} {:>6} {:>5}\n",
            teams.name(team),
            dist.rank_quantile(team, 0.25) + 1,
            dist.rank_quantile(team, 0.5) + 1,
            dist.rank_quantile(team, 0.75) + 1,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn team(i: usize) -> TeamId {
        TeamId(i)
    }

    #[test]
    fn deterministic_predictions_give_a_point_mass() {
        // Three teams, unambiguous results: 0 beats 1 and 2; 1 beats 2.
        let fixtures = vec![(team(0), team(1)), (team(0), team(2)), (team(1), team(2))];
        let sure_home = OutcomeDistribution::new(1.0, 0.0, 0.0).unwrap();
        let preds = vec![sure_home; 3];
        let dist = simulate_season(&preds, &fixtures, 3, 500, 7).unwrap();
        assert_eq!(dist.prob(team(0), 0), 1.0);
        assert_eq!(dist.prob(team(1), 1), 1.0);
        assert_eq!(dist.prob(team(2), 2), 1.0);
    }

    #[test]
    fn exchangeable_teams_have_matching_rank_distributions() {
        let fixtures = vec![(team(0), team(1)), (team(1), team(0))];
        let uniform = OutcomeDistribution::uniform();
        let dist = simulate_season(&[uniform, uniform], &fixtures, 2, 40_000, 3).unwrap();
        assert_abs_diff_eq!(dist.prob(team(0), 0), 0.5, epsilon = 0.01);
        assert_abs_diff_eq!(dist.prob(team(1), 0), 0.5, epsilon = 0.01);
    }

    #[test]
    fn rank_matrix_is_doubly_stochastic() {
        let mut preds = Vec::new();
        let mut fixtures = Vec::new();
        for i in 0..6usize {
            for j in 0..6usize {
                if i == j {
                    continue;
                }
                fixtures.push((team(i), team(j)));
                let w = 0.3 + 0.05 * i as f64;
                preds.push(OutcomeDistribution::normalized(w, 0.25, 1.0 - w - 0.25));
            }
        }
        let dist = simulate_season(&preds, &fixtures, 6, 10_000, 11).unwrap();
        for t in 0..6 {
            let row: f64 = (0..6).map(|r| dist.probs[(t, r)]).sum();
            assert_abs_diff_eq!(row, 1.0, epsilon = 1e-12);
            let col: f64 = (0..6).map(|s| dist.probs[(s, t)]).sum();
            assert_abs_diff_eq!(col, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn simulation_is_deterministic_under_seed() {
        let fixtures = vec![(team(0), team(1)), (team(1), team(2)), (team(2), team(0))];
        let preds = vec![OutcomeDistribution::normalized(0.5, 0.2, 0.3); 3];
        let a = simulate_season(&preds, &fixtures, 3, 2000, 99).unwrap();
        let b = simulate_season(&preds, &fixtures, 3, 2000, 99).unwrap();
        assert_eq!(a.probs, b.probs);
        let c = simulate_season(&preds, &fixtures, 3, 2000, 1_000_000).unwrap();
        assert_ne!(a.probs, c.probs);
    }

    #[test]
    fn misaligned_inputs_rejected() {
        let fixtures = vec![(team(0), team(1))];
        assert!(simulate_season(&[], &fixtures, 2, 10, 0).is_err());
        let preds = vec![OutcomeDistribution::uniform()];
        assert!(simulate_season(&preds, &[(team(0), team(0))], 2, 10, 0).is_err());
    }
}
