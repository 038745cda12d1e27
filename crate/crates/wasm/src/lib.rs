//! Browser bindings for the interactive demo: outcome curves of the
//! proportional-odds link, Skellam score-difference distributions, and
//! Monte Carlo season rank tables for a synthetic league.
//!
//! Inputs are clamped to safe ranges rather than erroring, so sliders can
//! be dragged freely.

use wasm_bindgen::prelude::*;

use logodds::data::{OutcomeDistribution, TeamId};
use logodds::links::{skellam_pmf, skellam_ternary, ternary_probs, SkellamParams};
use logodds::season::simulate_season;

fn clamp_phi(phi: f64) -> f64 {
    phi.clamp(0.0, 10.0)
}

fn clamp_mean(mu: f64) -> f64 {
    mu.clamp(0.01, 12.0)
}

/// Win/draw/lose curves of the ternary link over a log-odds range:
/// `n` samples of l in [lo, hi] with home advantage `h` added, flattened as
/// [p_win..., p_draw..., p_lose...].
#[wasm_bindgen]
pub fn ternary_curve(phi: f64, h: f64, lo: f64, hi: f64, n: u32) -> Vec<f64> {
    let phi = clamp_phi(phi);
    let n = n.clamp(2, 4096) as usize;
    let mut out = vec![0.0; 3 * n];
    for k in 0..n {
        let l = lo + (hi - lo) * k as f64 / (n - 1) as f64 + h;
        let d = ternary_probs(l, phi).expect("phi clamped nonnegative");
        out[k] = d.p_win;
        out[n + k] = d.p_draw;
        out[2 * n + k] = d.p_lose;
    }
    out
}

/// Skellam probability mass over z in [-z_max, z_max].
#[wasm_bindgen]
pub fn skellam_pmf_range(mu1: f64, mu2: f64, z_max: u32) -> Vec<f64> {
    let params = SkellamParams::new(clamp_mean(mu1), clamp_mean(mu2)).expect("means clamped");
    let z_max = z_max.clamp(1, 60) as i64;
    (-z_max..=z_max)
        .map(|z| skellam_pmf(z, params).unwrap_or(0.0))
        .collect()
}

/// Win/draw/lose masses of the Skellam score-difference model.
#[wasm_bindgen]
pub fn skellam_outcomes(mu1: f64, mu2: f64) -> Vec<f64> {
    let params = SkellamParams::new(clamp_mean(mu1), clamp_mean(mu2)).expect("means clamped");
    let d = skellam_ternary(params).expect("clamped parameters");
    vec![d.p_win, d.p_draw, d.p_lose]
}

/// Monte Carlo rank table for a synthetic double round-robin league.
/// Ratings are drawn from a centered normal with the given spread and
/// sorted descending; every pairing is predicted by the ternary link with
/// the given draw parameter and home advantage, frozen, then resampled.
/// Returns [theta_0..theta_{q-1}, probs_row_major...] where
/// probs[t * q + r] is the probability that team t finishes at rank r.
#[wasm_bindgen]
pub fn simulate_league(
    teams: u32,
    rating_sd: f64,
    phi: f64,
    home_adv: f64,
    reps: u32,
    seed: u64,
) -> Vec<f64> {
    let q = teams.clamp(2, 24) as usize;
    let sd = rating_sd.clamp(0.0, 3.0);
    let phi = clamp_phi(phi);
    let h = home_adv.clamp(-2.0, 2.0);
    let reps = reps.clamp(1, 50_000) as usize;

    let mut rng = logodds::rng::seeded(seed);
    let mut theta: Vec<f64> = (0..q)
        .map(|_| sd * logodds::rng::standard_normal(&mut rng))
        .collect();
    theta.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let mut fixtures = Vec::with_capacity(q * (q - 1));
    let mut preds: Vec<OutcomeDistribution> = Vec::with_capacity(q * (q - 1));
    for i in 0..q {
        for j in 0..q {
            if i == j {
                continue;
            }
            fixtures.push((TeamId(i), TeamId(j)));
            preds.push(
                ternary_probs(theta[i] - theta[j] + h, phi).expect("phi clamped nonnegative"),
            );
        }
    }
    let dist =
        simulate_season(&preds, &fixtures, q, reps, seed).expect("aligned synthetic fixtures");

    let mut out = Vec::with_capacity(q + q * q);
    out.extend_from_slice(&theta);
    for t in 0..q {
        for r in 0..q {
            out.push(dist.prob(TeamId(t), r));
        }
    }
    out
}
