//! Benchmark predictors: the constant home-win rule, bookmaker-odds
//! probabilities, and the Maher / Dixon-Coles Poisson score models.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DecimalOdds, Outcome, OutcomeDistribution, TeamId};
use crate::error::{Error, Result};
use crate::special::ln_factorial;

/// The uninformed benchmark: always predicts the home side to win, and
/// scores log-loss with the constant train-set outcome frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct HomeWinBaseline {
    /// Empirical (home win, draw, away win) frequencies of the train set.
    pub dist: OutcomeDistribution,
}

impl HomeWinBaseline {
    /// The deterministic label used for accuracy.
    pub fn label(&self) -> Outcome {
        Outcome::HomeWin
    }
}

pub fn home_win_baseline(train: &Dataset) -> Result<HomeWinBaseline> {
    if train.is_empty() {
        return Err(Error::Invalid(
            "home-win baseline needs a nonempty train set".into(),
        ));
    }
    let n = train.len() as f64;
    let count = |o: Outcome| train.records().iter().filter(|r| r.outcome == o).count() as f64;
    let w = count(Outcome::HomeWin) / n;
    let d = count(Outcome::Draw) / n;
    Ok(HomeWinBaseline {
        dist: OutcomeDistribution {
            p_win: w,
            p_draw: d,
            p_lose: 1.0 - (w + d),
        },
    })
}

/// Normalized inverse odds (vigorish removal).
pub fn odds_to_probs(odds: DecimalOdds) -> Result<OutcomeDistribution> {
    for (v, label) in [
        (odds.home, "home"),
        (odds.draw, "draw"),
        (odds.away, "away"),
    ] {
        if !(v > 1.0) {
            return Err(Error::Domain(format!("{label} odds {v} must exceed 1")));
        }
    }
    Ok(OutcomeDistribution::normalized(
        1.0 / odds.home,
        1.0 / odds.draw,
        1.0 / odds.away,
    ))
}

/// Which Poisson score model to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoissonVariant {
    /// Independent Poisson scores.
    Maher,
    /// Maher plus the low-score dependence adjustment with parameter rho.
    DixonColes,
}

/// Fitted attack/defense rates. Scores are modelled as
/// S_home ~ Poisson(alpha_i beta_j h), S_away ~ Poisson(alpha_j beta_i),
/// with the Dixon-Coles tau adjustment applied to scores below 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonBaselineState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub h: f64,
    pub rho: f64,
    /// Exponential time-decay rate per week of elapsed time (0 = none).
    pub xi: f64,
    pub variant: PoissonVariant,
}

impl PoissonBaselineState {
    pub fn rates(&self, i: TeamId, j: TeamId) -> (f64, f64) {
        let lambda = self.alpha[i.0] * self.beta[j.0] * self.h;
        let mu = self.alpha[j.0] * self.beta[i.0];
        (lambda, mu)
    }
}

/// tau(s_home, s_away); 1 everywhere once either score reaches 2.
fn tau(lambda: f64, mu: f64, rho: f64, s_home: u32, s_away: u32) -> f64 {
    match (s_home, s_away) {
        (0, 0) => 1.0 - lambda * mu * rho,
        (0, 1) => 1.0 + lambda * rho,
        (1, 0) => 1.0 + mu * rho,
        (1, 1) => 1.0 - rho,
        _ => 1.0,
    }
}

fn ln_poisson(k: u32, rate: f64) -> f64 {
    k as f64 * rate.ln() - rate - ln_factorial(k as u64)
}

/// Packed parameterization: [a_0..a_Q, b_0..b_Q, ln h, rho?]; positivity of
/// the rates comes from the log parameterization.
struct PoissonParams<'a> {
    a: &'a [f64],
    b: &'a [f64],
    ln_h: f64,
    rho: f64,
}

fn unpack(x: &[f64], q: usize, with_rho: bool) -> PoissonParams<'_> {
    PoissonParams {
        a: &x[0..q],
        b: &x[q..2 * q],
        ln_h: x[2 * q],
        rho: if with_rho { x[2 * q + 1] } else { 0.0 },
    }
}

/// Time-decay weights relative to the newest record: exp(-xi * weeks).
pub fn decay_weights(data: &Dataset, xi: f64) -> Vec<f64> {
    let reference = data.last_date().expect("nonempty dataset");
    data.records()
        .iter()
        .map(|r| {
            let weeks = (reference - r.date).num_days() as f64 / 7.0;
            (-xi * weeks).exp()
        })
        .collect()
}

/// Weighted log-likelihood of the packed parameter vector
/// [a_0..a_Q, b_0..b_Q, ln h, rho?] (the raw optimizer objective; negative
/// infinity where a tau adjustment turns nonpositive).
pub fn packed_score_loglik(data: &Dataset, weights: &[f64], x: &[f64], with_rho: bool) -> f64 {
    weighted_loglik(data, weights, x, with_rho)
}

/// Analytic gradient of `packed_score_loglik`.
pub fn packed_score_grad(data: &Dataset, weights: &[f64], x: &[f64], with_rho: bool) -> Vec<f64> {
    weighted_grad(data, weights, x, with_rho)
}

fn weighted_loglik(data: &Dataset, weights: &[f64], x: &[f64], with_rho: bool) -> f64 {
    let q = data.n_teams();
    let p = unpack(x, q, with_rho);
    let mut total = 0.0;
    for (k, r) in data.records().iter().enumerate() {
        let (i, j) = (r.home.0, r.away.0);
        let lambda = (p.a[i] + p.b[j] + p.ln_h).exp();
        let mu = (p.a[j] + p.b[i]).exp();
        let t = tau(lambda, mu, p.rho, r.home_goals, r.away_goals);
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += weights[k]
            * (t.ln() + ln_poisson(r.home_goals, lambda) + ln_poisson(r.away_goals, mu));
    }
    total
}

fn weighted_grad(data: &Dataset, weights: &[f64], x: &[f64], with_rho: bool) -> Vec<f64> {
    let q = data.n_teams();
    let p = unpack(x, q, with_rho);
    let mut g = vec![0.0; x.len()];
    for (k, r) in data.records().iter().enumerate() {
        let w = weights[k];
        let (i, j) = (r.home.0, r.away.0);
        let lambda = (p.a[i] + p.b[j] + p.ln_h).exp();
        let mu = (p.a[j] + p.b[i]).exp();
        let t = tau(lambda, mu, p.rho, r.home_goals, r.away_goals);
        // d ln tau / d lambda, mu, rho for the four adjusted score cells.
        let (dt_dl, dt_dm, dt_dr) = match (r.home_goals, r.away_goals) {
            (0, 0) => (-mu * p.rho / t, -lambda * p.rho / t, -lambda * mu / t),
            (0, 1) => (p.rho / t, 0.0, lambda / t),
            (1, 0) => (0.0, p.rho / t, mu / t),
            (1, 1) => (0.0, 0.0, -1.0 / t),
            _ => (0.0, 0.0, 0.0),
        };
        let g_lam = r.home_goals as f64 - lambda + dt_dl * lambda;
        let g_mu = r.away_goals as f64 - mu + dt_dm * mu;
        g[i] += w * g_lam;
        g[q + j] += w * g_lam;
        g[2 * q] += w * g_lam;
        g[j] += w * g_mu;
        g[q + i] += w * g_mu;
        if with_rho {
            g[2 * q + 1] += w * dt_dr;
        }
    }
    g
}

/// Maximizes the (xi-weighted) score log-likelihood by gradient ascent with
/// backtracking. The attack-rate gauge (geometric mean of alpha equal to 1)
/// is applied afterwards. Returns the state and the monotone objective
/// trace.
pub fn fit_poisson_baseline(
    data: &Dataset,
    variant: PoissonVariant,
    xi: f64,
) -> Result<(PoissonBaselineState, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::Invalid("cannot fit on an empty dataset".into()));
    }
    if xi < 0.0 {
        return Err(Error::Domain(format!("xi must be nonnegative, got {xi}")));
    }
    let q = data.n_teams();
    let with_rho = variant == PoissonVariant::DixonColes;
    let weights = decay_weights(data, xi);

    let mut x = vec![0.0; 2 * q + 1 + usize::from(with_rho)];
    let mut ll = weighted_loglik(data, &weights, &x, with_rho);
    let mut trace = vec![ll];
    let mut step = 0.01f64;
    for _ in 0..5000 {
        let g = weighted_grad(data, &weights, &x, with_rho);
        let gn2: f64 = g.iter().map(|v| v * v).sum();
        let mut t = step * 2.0;
        let mut accepted = None;
        while t > 1e-18 {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + t * gi).collect();
            let cand_ll = weighted_loglik(data, &weights, &cand, with_rho);
            if cand_ll.is_finite() && cand_ll >= ll + 1e-4 * t * gn2 {
                accepted = Some((cand, cand_ll));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_ll)) = accepted else {
            break;
        };
        let improvement = cand_ll - ll;
        x = cand;
        ll = cand_ll;
        step = t;
        trace.push(ll);
        if improvement < 1e-10 * ll.abs().max(1.0) {
            break;
        }
    }

    // Gauge: shift so that mean(a) = 0, i.e. the geometric mean of alpha is
    // 1; the rates are invariant under a -> a - c, b -> b + c.
    let c = x[0..q].iter().sum::<f64>() / q as f64;
    let alpha: Vec<f64> = x[0..q].iter().map(|a| (a - c).exp()).collect();
    let beta: Vec<f64> = x[q..2 * q].iter().map(|b| (b + c).exp()).collect();
    Ok((
        PoissonBaselineState {
            alpha,
            beta,
            h: x[2 * q].exp(),
            rho: if with_rho { x[2 * q + 1] } else { 0.0 },
            xi,
            variant,
        },
        trace,
    ))
}

/// Goals per side considered when aggregating the score grid.
pub const SCORE_GRID_MAX: u32 = 10;

/// Win/draw/lose probabilities from the (adjusted) joint score distribution
/// over the truncated grid; the missed tail mass is folded into the largest
/// region and reported as the second return value.
pub fn poisson_predict_ternary(
    state: &PoissonBaselineState,
    i: TeamId,
    j: TeamId,
) -> Result<(OutcomeDistribution, f64)> {
    if i == j {
        return Err(Error::Invalid("a team cannot play itself".into()));
    }
    let (lambda, mu) = state.rates(i, j);
    let mut win = 0.0;
    let mut draw = 0.0;
    let mut lose = 0.0;
    for s_home in 0..=SCORE_GRID_MAX {
        for s_away in 0..=SCORE_GRID_MAX {
            let p = tau(lambda, mu, state.rho, s_home, s_away)
                * (ln_poisson(s_home, lambda) + ln_poisson(s_away, mu)).exp();
            match s_home.cmp(&s_away) {
                std::cmp::Ordering::Greater => win += p,
                std::cmp::Ordering::Equal => draw += p,
                std::cmp::Ordering::Less => lose += p,
            }
        }
    }
    let total = win + draw + lose;
    let truncation_error = (1.0 - total).max(0.0);
    // Fold the unseen tail into the dominant region, then normalize.
    if win >= draw && win >= lose {
        win += truncation_error;
    } else if draw >= lose {
        draw += truncation_error;
    } else {
        lose += truncation_error;
    }
    Ok((
        OutcomeDistribution::normalized(win, draw, lose),
        truncation_error,
    ))
}
