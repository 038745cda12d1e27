//! Scalar link functions and outcome distributions: the logistic pair, the
//! proportional-odds ternary link, the modified Bessel function of the first
//! kind, and the Skellam score-difference distribution.

use crate::data::OutcomeDistribution;
use crate::error::{Error, Result};

/// Logistic function sigma(x) = 1 / (1 + e^-x), numerically stable on both
/// tails.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds function, inverse of `sigmoid` on (0, 1).
pub fn logit(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) || p == 0.0 {
        return Err(Error::Domain(format!("logit requires p in (0,1), got {p}")));
    }
    Ok((p / (1.0 - p)).ln())
}

/// Win/draw/lose distribution of the proportional-odds link:
/// p_win = sigma(l), p_lose = sigma(-l - phi), p_draw picks up the rest.
/// phi = 0 collapses to the binary model with p_draw = 0 exactly.
pub fn ternary_probs(l: f64, phi: f64) -> Result<OutcomeDistribution> {
    if !(phi >= 0.0) {
        return Err(Error::Domain(format!(
            "draw parameter must be nonnegative, got {phi}"
        )));
    }
    let p_win = sigmoid(l);
    if phi == 0.0 {
        return Ok(OutcomeDistribution::binary(p_win));
    }
    let p_lose = sigmoid(-l - phi);
    let p_draw = (sigmoid(-l) - p_lose).max(0.0);
    Ok(OutcomeDistribution {
        p_win,
        p_draw,
        p_lose,
    })
}

/// Modified Bessel function of the first kind, integer order, by direct
/// series summation to relative tolerance below 1e-12.
pub fn bessel_i(alpha: u32, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::Domain(format!("bessel_i requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(if alpha == 0 { 1.0 } else { 0.0 });
    }
    let half = 0.5 * x;
    // t_0 = (x/2)^alpha / alpha!
    let mut term = (alpha as f64 * half.ln() - crate::special::ln_factorial(alpha as u64)).exp();
    let mut sum = term;
    let q = half * half;
    for k in 0..1_000u32 {
        term *= q / ((k + 1) as f64 * (alpha + k + 1) as f64);
        sum += term;
        if !sum.is_finite() {
            return Err(Error::Overflow(format!("bessel_i({alpha}, {x}) overflows f64")));
        }
        if term < sum * 1e-17 {
            return Ok(sum);
        }
    }
    Err(Error::Overflow(format!(
        "bessel_i({alpha}, {x}) did not converge"
    )))
}

/// ln I_alpha(x) without intermediate overflow: the series is accumulated in
/// log space with a running max (all terms are positive).
pub fn ln_bessel_i(alpha: u32, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::Domain(format!(
            "ln_bessel_i requires x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(if alpha == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    let half_ln = (0.5 * x).ln();
    let q_ln = 2.0 * half_ln;
    let mut ln_term = alpha as f64 * half_ln - crate::special::ln_factorial(alpha as u64);
    let mut max = ln_term;
    let mut acc = 1.0f64; // sum of exp(ln_term - max)
    let quarter_sq = 0.25 * x * x;
    for k in 0..200_000u64 {
        ln_term += q_ln - ((k + 1) as f64 * (alpha as u64 + k + 1) as f64).ln();
        if ln_term > max {
            acc = acc * (max - ln_term).exp() + 1.0;
            max = ln_term;
        } else {
            acc += (ln_term - max).exp();
            // Terms decay once (k+1)(alpha+k+1) exceeds x^2/4.
            let past_peak = ((k + 1) * (alpha as u64 + k + 1)) as f64 > quarter_sq;
            if past_peak && ln_term - max < -40.0 {
                return Ok(max + acc.ln());
            }
        }
    }
    Err(Error::Overflow(format!(
        "ln_bessel_i({alpha}, {x}) did not converge"
    )))
}

/// Means of the two Poisson components behind a Skellam distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkellamParams {
    pub mu1: f64,
    pub mu2: f64,
}

impl SkellamParams {
    pub fn new(mu1: f64, mu2: f64) -> Result<Self> {
        if !(mu1 > 0.0 && mu2 > 0.0) {
            return Err(Error::Domain(format!(
                "Skellam means must be positive, got ({mu1}, {mu2})"
            )));
        }
        Ok(Self { mu1, mu2 })
    }
}

/// Log probability mass of the Skellam distribution at integer z:
/// ln P(z) = -(mu1 + mu2) + (z/2) ln(mu1/mu2) + ln I_|z|(2 sqrt(mu1 mu2)).
pub fn skellam_log_pmf(z: i64, params: SkellamParams) -> Result<f64> {
    let SkellamParams { mu1, mu2 } = params;
    let x = 2.0 * (mu1 * mu2).sqrt();
    let order = z.unsigned_abs().min(u32::MAX as u64) as u32;
    Ok(-(mu1 + mu2) + 0.5 * z as f64 * (mu1.ln() - mu2.ln()) + ln_bessel_i(order, x)?)
}

/// Probability mass of the Skellam distribution at integer z.
pub fn skellam_pmf(z: i64, params: SkellamParams) -> Result<f64> {
    Ok(skellam_log_pmf(z, params)?.exp())
}

/// Hard cap on the symmetric truncation of the Skellam support.
pub const SKELLAM_Z_CAP: i64 = 500;

/// Win/draw/lose masses of the score-difference distribution: the support is
/// truncated symmetrically until the remaining tail mass is below 1e-10
/// (hard cap |z| <= 500), then renormalized to sum to 1 exactly.
pub fn skellam_ternary(params: SkellamParams) -> Result<OutcomeDistribution> {
    let p0 = skellam_pmf(0, params)?;
    let mut win = 0.0;
    let mut lose = 0.0;
    let mean_shift = (params.mu1 - params.mu2).abs();
    let spread = (params.mu1 + params.mu2).sqrt();
    for z in 1..=SKELLAM_Z_CAP {
        let up = skellam_pmf(z, params)?;
        let down = skellam_pmf(-z, params)?;
        win += up;
        lose += down;
        let past_peak = z as f64 > mean_shift + 10.0 * spread + 5.0;
        if past_peak && up + down < 1e-11 {
            break;
        }
    }
    let total = win + p0 + lose;
    let p_win = win / total;
    let p_draw = p0 / total;
    Ok(OutcomeDistribution {
        p_win,
        p_draw,
        p_lose: 1.0 - (p_win + p_draw),
    })
}
