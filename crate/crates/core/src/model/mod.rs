//! Structured log-odds models: structural assumptions, log-odds matrix
//! construction, prediction, log-likelihood and analytic gradients.

mod io;

pub use io::{load_model, read_model, save_model, write_model};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Outcome, OutcomeDistribution, TeamId};
use crate::error::{Error, Result};
use crate::links::{self, SkellamParams};

/// Structural assumption on the log-odds matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    /// L = theta 1^T - 1 theta^T (Bradley-Terry-Élő).
    Rank2,
    Rank2HomeAdv,
    /// L = u v^T - v u^T.
    TwoFactor,
    TwoFactorHomeAdv,
    /// L = u v^T - v u^T + theta 1^T - 1 theta^T.
    RankFour,
    RankFourHomeAdv,
}

impl Structure {
    pub fn has_home_adv(&self) -> bool {
        matches!(
            self,
            Structure::Rank2HomeAdv | Structure::TwoFactorHomeAdv | Structure::RankFourHomeAdv
        )
    }

    pub fn has_theta(&self) -> bool {
        matches!(
            self,
            Structure::Rank2
                | Structure::Rank2HomeAdv
                | Structure::RankFour
                | Structure::RankFourHomeAdv
        )
    }

    pub fn has_factors(&self) -> bool {
        matches!(
            self,
            Structure::TwoFactor
                | Structure::TwoFactorHomeAdv
                | Structure::RankFour
                | Structure::RankFourHomeAdv
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Structure::Rank2 => "Rank2",
            Structure::Rank2HomeAdv => "Rank2HomeAdv",
            Structure::TwoFactor => "TwoFactor",
            Structure::TwoFactorHomeAdv => "TwoFactorHomeAdv",
            Structure::RankFour => "RankFour",
            Structure::RankFourHomeAdv => "RankFourHomeAdv",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "Rank2" => Structure::Rank2,
            "Rank2HomeAdv" => Structure::Rank2HomeAdv,
            "TwoFactor" => Structure::TwoFactor,
            "TwoFactorHomeAdv" => Structure::TwoFactorHomeAdv,
            "RankFour" => Structure::RankFour,
            "RankFourHomeAdv" => Structure::RankFourHomeAdv,
            _ => return None,
        })
    }
}

/// Outcome link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Link {
    /// Win/lose through the logistic function.
    Binary,
    /// Win/draw/lose through the proportional-odds link with draw
    /// parameter phi = exp(psi).
    TernaryPo,
    /// Integer score difference through a Skellam distribution whose two
    /// means are exp of a rank-two-with-ones matrix and its transpose.
    SkellamScore,
}

impl Link {
    pub fn name(&self) -> &'static str {
        match self {
            Link::Binary => "Binary",
            Link::TernaryPo => "TernaryPO",
            Link::SkellamScore => "SkellamScore",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "Binary" => Link::Binary,
            "TernaryPO" => Link::TernaryPo,
            "SkellamScore" => Link::SkellamScore,
            _ => return None,
        })
    }
}

/// Log-odds are clamped to this magnitude before exponentiation.
pub const LOGODDS_CLAMP: f64 = 36.0;

/// The structural assumption plus link and covariate switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub structure: Structure,
    pub link: Link,
    pub covariates: bool,
    pub n_teams: usize,
}

impl ModelSpec {
    pub fn new(structure: Structure, link: Link, covariates: bool, n_teams: usize) -> Result<Self> {
        if link == Link::SkellamScore {
            // The score-difference link carries its own rank-two-with-ones
            // structure; only the home-advantage switch of `structure` is
            // meaningful for it.
            if structure.has_factors() {
                return Err(Error::Invalid(
                    "the score-difference link only combines with the \
                     rank-two-with-ones structure (Rank2 or Rank2HomeAdv)"
                        .into(),
                ));
            }
            if covariates {
                return Err(Error::Invalid(
                    "promotion covariates are not supported with the \
                     score-difference link"
                        .into(),
                ));
            }
        }
        if n_teams < 2 {
            return Err(Error::Invalid("a model needs at least two teams".into()));
        }
        Ok(Self {
            structure,
            link,
            covariates,
            n_teams,
        })
    }

    pub fn has_home_adv(&self) -> bool {
        self.structure.has_home_adv()
    }
}

/// All fitted parameters. Fields not active under a given spec stay at their
/// initial values and are ignored by prediction and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// Élő ratings (also the rank-four rating component).
    pub theta: Vec<f64>,
    /// Interaction factors.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Home advantage.
    pub h: f64,
    /// Draw parameter, stored unconstrained: phi = exp(psi).
    pub psi: f64,
    /// Shared promotion-covariate coefficients.
    pub beta_home: f64,
    pub beta_away: f64,
    /// Score-rate factors of the Skellam link.
    pub skellam_u: Vec<f64>,
    pub skellam_v: Vec<f64>,
}

impl ModelState {
    /// Zero state (gradient container shape).
    pub fn zeros(n_teams: usize) -> Self {
        Self {
            theta: vec![0.0; n_teams],
            u: vec![0.0; n_teams],
            v: vec![0.0; n_teams],
            h: 0.0,
            psi: 0.0,
            beta_home: 0.0,
            beta_away: 0.0,
            skellam_u: vec![0.0; n_teams],
            skellam_v: vec![0.0; n_teams],
        }
    }

    /// Initial state: zeros for ratings, home advantage and coefficients;
    /// psi such that phi = 0.5. Interaction factors start at the ones
    /// vector plus a small seeded normal perturbation: at u = v = 1 the
    /// interaction matrix is zero yet its gradients already have the same
    /// scale as the rating update, so on-line learning works from the first
    /// match (a zero or tiny init is a near-saddle where factor models
    /// learn far too slowly).
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut state = Self::zeros(spec.n_teams);
        state.psi = 0.5f64.ln();
        if spec.structure.has_factors() {
            let mut rng = crate::rng::seeded(seed);
            for k in 0..spec.n_teams {
                state.u[k] = 1.0 + 0.01 * crate::rng::standard_normal(&mut rng);
            }
            for k in 0..spec.n_teams {
                state.v[k] = 1.0 + 0.01 * crate::rng::standard_normal(&mut rng);
            }
        }
        state
    }

    pub fn n_teams(&self) -> usize {
        self.theta.len()
    }

    pub fn phi(&self) -> f64 {
        self.psi.exp()
    }

    fn check_dims(&self, spec: &ModelSpec) -> Result<()> {
        if self.theta.len() != spec.n_teams
            || self.u.len() != spec.n_teams
            || self.v.len() != spec.n_teams
            || self.skellam_u.len() != spec.n_teams
            || self.skellam_v.len() != spec.n_teams
        {
            return Err(Error::Dimension(format!(
                "state sized for {} teams, spec wants {}",
                self.theta.len(),
                spec.n_teams
            )));
        }
        Ok(())
    }

    /// In-place `self += t * g` over the blocks active under `spec`.
    /// Covariate coefficients move only when `update_covariates` is set
    /// (the on-line step keeps them fixed).
    pub fn axpy(&mut self, spec: &ModelSpec, g: &ModelState, t: f64, update_covariates: bool) {
        match spec.link {
            Link::SkellamScore => {
                for k in 0..self.skellam_u.len() {
                    self.skellam_u[k] += t * g.skellam_u[k];
                    self.skellam_v[k] += t * g.skellam_v[k];
                }
            }
            _ => {
                if spec.structure.has_theta() {
                    for k in 0..self.theta.len() {
                        self.theta[k] += t * g.theta[k];
                    }
                }
                if spec.structure.has_factors() {
                    for k in 0..self.u.len() {
                        self.u[k] += t * g.u[k];
                        self.v[k] += t * g.v[k];
                    }
                }
                if spec.link == Link::TernaryPo {
                    self.psi += t * g.psi;
                }
                if spec.covariates && update_covariates {
                    self.beta_home += t * g.beta_home;
                    self.beta_away += t * g.beta_away;
                }
            }
        }
        if spec.has_home_adv() {
            self.h += t * g.h;
        }
    }

    /// Flattens the blocks active under `spec` (the free parameters
    /// optimized by training, in a fixed order).
    pub fn pack(&self, spec: &ModelSpec) -> Vec<f64> {
        let mut out = Vec::new();
        match spec.link {
            Link::SkellamScore => {
                out.extend_from_slice(&self.skellam_u);
                out.extend_from_slice(&self.skellam_v);
            }
            _ => {
                if spec.structure.has_theta() {
                    out.extend_from_slice(&self.theta);
                }
                if spec.structure.has_factors() {
                    out.extend_from_slice(&self.u);
                    out.extend_from_slice(&self.v);
                }
                if spec.link == Link::TernaryPo {
                    out.push(self.psi);
                }
                if spec.covariates {
                    out.push(self.beta_home);
                    out.push(self.beta_away);
                }
            }
        }
        if spec.has_home_adv() {
            out.push(self.h);
        }
        out
    }

    /// Inverse of `pack`.
    pub fn unpack(&mut self, spec: &ModelSpec, packed: &[f64]) {
        let mut it = packed.iter().copied();
        let q = spec.n_teams;
        let mut take = |dst: &mut [f64]| {
            for d in dst.iter_mut() {
                *d = it.next().expect("packed vector too short");
            }
        };
        match spec.link {
            Link::SkellamScore => {
                let mut su = vec![0.0; q];
                let mut sv = vec![0.0; q];
                take(&mut su);
                take(&mut sv);
                self.skellam_u = su;
                self.skellam_v = sv;
            }
            _ => {
                if spec.structure.has_theta() {
                    let mut th = vec![0.0; q];
                    take(&mut th);
                    self.theta = th;
                }
                if spec.structure.has_factors() {
                    let mut uu = vec![0.0; q];
                    let mut vv = vec![0.0; q];
                    take(&mut uu);
                    take(&mut vv);
                    self.u = uu;
                    self.v = vv;
                }
                if spec.link == Link::TernaryPo {
                    self.psi = it.next().expect("packed vector too short");
                }
                if spec.covariates {
                    self.beta_home = it.next().expect("packed vector too short");
                    self.beta_away = it.next().expect("packed vector too short");
                }
            }
        }
        if spec.has_home_adv() {
            self.h = it.next().expect("packed vector too short");
        }
        assert!(it.next().is_none(), "packed vector too long");
    }

    /// Euclidean norm over the active blocks.
    pub fn grad_norm(&self, spec: &ModelSpec) -> f64 {
        self.pack(spec).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Mean-centers the ratings (and the rank-four rating component).
    /// Predictions are invariant under this shift; the interaction factors
    /// are left un-gauged.
    pub fn apply_gauge(&mut self, spec: &ModelSpec) {
        if spec.link != Link::SkellamScore && spec.structure.has_theta() {
            let mean = self.theta.iter().sum::<f64>() / self.theta.len() as f64;
            for t in &mut self.theta {
                *t -= mean;
            }
        }
    }
}

/// Per-match covariate values: (home side promoted, away side promoted).
pub type PromoFlags = (bool, bool);

/// Log-odds entry for the pairing (i home, j away), including home advantage
/// and covariate contributions where enabled. Not defined for the Skellam
/// link, which has two matrices (see `skellam_means`).
pub fn logodds_value(
    state: &ModelState,
    spec: &ModelSpec,
    i: TeamId,
    j: TeamId,
    features: Option<PromoFlags>,
) -> f64 {
    debug_assert_ne!(spec.link, Link::SkellamScore);
    let mut l = 0.0;
    if spec.structure.has_theta() {
        l += state.theta[i.0] - state.theta[j.0];
    }
    if spec.structure.has_factors() {
        l += state.u[i.0] * state.v[j.0] - state.v[i.0] * state.u[j.0];
    }
    if spec.has_home_adv() {
        l += state.h;
    }
    if spec.covariates {
        let (hp, ap) = features.unwrap_or((false, false));
        if hp {
            l += state.beta_home;
        }
        if ap {
            l += state.beta_away;
        }
    }
    l
}

/// The pair of Skellam means (home-score, away-score) for pairing (i, j):
/// mu1 = exp(L_ij) with L = 1 u^T + v 1^T + h, mu2 = exp(L'_ij) with
/// L' = (1 u^T + v 1^T)^T; the home-advantage constant enters the home mean
/// only. Values are clamped before exponentiation.
pub fn skellam_means(state: &ModelState, spec: &ModelSpec, i: TeamId, j: TeamId) -> (f64, f64) {
    let mut l_home = state.skellam_u[j.0] + state.skellam_v[i.0];
    if spec.has_home_adv() {
        l_home += state.h;
    }
    let l_away = state.skellam_u[i.0] + state.skellam_v[j.0];
    let clamp = |x: f64| x.clamp(-LOGODDS_CLAMP, LOGODDS_CLAMP);
    (clamp(l_home).exp(), clamp(l_away).exp())
}

/// Full Q x Q log-odds matrix under the spec's structural assumption. For
/// home-advantage variants the diagonal carries h (it is never used in
/// prediction); for the Skellam link this is the home-score matrix L.
pub fn build_logodds(state: &ModelState, spec: &ModelSpec) -> Result<LogOddsMatrix> {
    state.check_dims(spec)?;
    let q = spec.n_teams;
    let mut m = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in 0..q {
            m[(i, j)] = match spec.link {
                Link::SkellamScore => {
                    let mut l = state.skellam_u[j] + state.skellam_v[i];
                    if spec.has_home_adv() {
                        l += state.h;
                    }
                    l
                }
                _ => logodds_value(state, spec, TeamId(i), TeamId(j), None),
            };
        }
    }
    Ok(LogOddsMatrix::new(m, spec.structure))
}

/// A square log-odds matrix together with the structural assumption it was
/// built under.
#[derive(Debug, Clone, PartialEq)]
pub struct LogOddsMatrix {
    entries: DMatrix<f64>,
    structure: Structure,
}

impl LogOddsMatrix {
    pub fn new(entries: DMatrix<f64>, structure: Structure) -> Self {
        assert_eq!(entries.nrows(), entries.ncols(), "log-odds matrix must be square");
        Self { entries, structure }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn declared_structure(&self) -> Structure {
        self.structure
    }

    pub fn n_teams(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: TeamId, j: TeamId) -> f64 {
        self.entries[(i.0, j.0)]
    }

    /// max_ij |(L + L^T)_ij|; zero for antisymmetric matrices.
    pub fn antisymmetry_defect(&self) -> f64 {
        let s = &self.entries + self.entries.transpose();
        s.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let svd = self.entries.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }

    /// Number of singular values above 1e-9 times the largest.
    pub fn numerical_rank(&self) -> usize {
        let sv = self.singular_values();
        match sv.first() {
            None | Some(0.0) => 0,
            Some(&max) => sv.iter().filter(|&&s| s > 1e-9 * max).count(),
        }
    }
}

/// Probabilistic prediction for the pairing (i home, j away).
pub fn predict(
    state: &ModelState,
    spec: &ModelSpec,
    i: TeamId,
    j: TeamId,
    features: Option<PromoFlags>,
) -> Result<OutcomeDistribution> {
    if i == j {
        return Err(Error::Invalid(format!("a team cannot play itself ({i})")));
    }
    state.check_dims(spec)?;
    match spec.link {
        Link::Binary => {
            let l = logodds_value(state, spec, i, j, features);
            Ok(OutcomeDistribution::binary(links::sigmoid(l)))
        }
        Link::TernaryPo => {
            let l = logodds_value(state, spec, i, j, features);
            links::ternary_probs(l, state.phi())
        }
        Link::SkellamScore => {
            let (mu1, mu2) = skellam_means(state, spec, i, j);
            links::skellam_ternary(SkellamParams::new(mu1, mu2)?)
        }
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Log mass the model assigns to one observed record. Returns negative
/// infinity on exact zero mass (e.g. a draw under the binary link).
pub fn record_loglik(
    state: &ModelState,
    spec: &ModelSpec,
    record: &crate::data::MatchRecord,
    features: Option<PromoFlags>,
) -> Result<f64> {
    match spec.link {
        Link::Binary => {
            let l = logodds_value(state, spec, record.home, record.away, features);
            Ok(match record.outcome {
                Outcome::HomeWin => -softplus(-l),
                Outcome::AwayWin => -softplus(l),
                Outcome::Draw => f64::NEG_INFINITY,
            })
        }
        Link::TernaryPo => {
            let l = logodds_value(state, spec, record.home, record.away, features);
            let phi = state.phi();
            Ok(match record.outcome {
                Outcome::HomeWin => -softplus(-l),
                Outcome::AwayWin => -softplus(l + phi),
                Outcome::Draw => {
                    // p_draw = sigma(-l) sigma(l+phi) (1 - e^-phi)
                    let log_scale = (-(-phi).exp_m1()).ln();
                    -softplus(l) - softplus(-l - phi) + log_scale
                }
            })
        }
        Link::SkellamScore => {
            let (mu1, mu2) = skellam_means(state, spec, record.home, record.away);
            links::skellam_log_pmf(record.score_diff(), SkellamParams::new(mu1, mu2)?)
        }
    }
}

/// Batch log-likelihood: the sum of `record_loglik` over the dataset.
/// `features` must align with `data.records()` when covariates are enabled.
pub fn loglik(
    state: &ModelState,
    spec: &ModelSpec,
    data: &Dataset,
    features: Option<&[PromoFlags]>,
) -> Result<f64> {
    state.check_dims(spec)?;
    check_features(spec, data, features)?;
    let mut total = 0.0;
    for (k, r) in data.records().iter().enumerate() {
        total += record_loglik(state, spec, r, features.map(|f| f[k]))?;
    }
    Ok(total)
}

fn check_features(spec: &ModelSpec, data: &Dataset, features: Option<&[PromoFlags]>) -> Result<()> {
    if spec.covariates {
        match features {
            Some(f) if f.len() == data.len() => Ok(()),
            Some(f) => Err(Error::Dimension(format!(
                "{} feature rows for {} records",
                f.len(),
                data.len()
            ))),
            None => Err(Error::Invalid(
                "covariates enabled but no features supplied".into(),
            )),
        }
    } else {
        Ok(())
    }
}

/// Gradient of the one-record log-likelihood, accumulated into `g`.
pub fn accumulate_grad(
    state: &ModelState,
    spec: &ModelSpec,
    record: &crate::data::MatchRecord,
    features: Option<PromoFlags>,
    g: &mut ModelState,
) -> Result<()> {
    let (i, j) = (record.home, record.away);
    match spec.link {
        Link::SkellamScore => {
            let (mu1, mu2) = skellam_means(state, spec, i, j);
            let z = record.score_diff();
            let alpha = z.unsigned_abs() as u32;
            let x = 2.0 * (mu1 * mu2).sqrt();
            // d/dx ln I_a(x) = a/x + I_{a+1}(x)/I_a(x)
            let ratio =
                (links::ln_bessel_i(alpha + 1, x)? - links::ln_bessel_i(alpha, x)?).exp();
            let dlog_dx = alpha as f64 / x + ratio;
            let d_mu1 = -1.0 + 0.5 * z as f64 / mu1 + dlog_dx * (mu2 / mu1).sqrt();
            let d_mu2 = -1.0 - 0.5 * z as f64 / mu2 + dlog_dx * (mu1 / mu2).sqrt();
            // mu = exp(l) inside the clamp; outside it the derivative is 0.
            let mut l_home = state.skellam_u[j.0] + state.skellam_v[i.0];
            if spec.has_home_adv() {
                l_home += state.h;
            }
            let l_away = state.skellam_u[i.0] + state.skellam_v[j.0];
            let dl_home = if l_home.abs() < LOGODDS_CLAMP {
                d_mu1 * mu1
            } else {
                0.0
            };
            let dl_away = if l_away.abs() < LOGODDS_CLAMP {
                d_mu2 * mu2
            } else {
                0.0
            };
            g.skellam_u[j.0] += dl_home;
            g.skellam_v[i.0] += dl_home;
            g.skellam_u[i.0] += dl_away;
            g.skellam_v[j.0] += dl_away;
            if spec.has_home_adv() {
                g.h += dl_home;
            }
            Ok(())
        }
        Link::Binary => {
            let l = logodds_value(state, spec, i, j, features);
            let p = links::sigmoid(l);
            let y = match record.outcome {
                Outcome::HomeWin => 1.0,
                Outcome::AwayWin => 0.0,
                Outcome::Draw => {
                    return Err(Error::NonFinite(
                        "the binary link assigns zero mass to draws".into(),
                    ))
                }
            };
            scatter_structure(state, spec, i, j, features, y - p, g);
            Ok(())
        }
        Link::TernaryPo => {
            let l = logodds_value(state, spec, i, j, features);
            let phi = state.phi();
            let (dl, dphi) = match record.outcome {
                Outcome::HomeWin => (links::sigmoid(-l), 0.0),
                Outcome::AwayWin => {
                    let s = links::sigmoid(l + phi);
                    (-s, -s)
                }
                Outcome::Draw => {
                    let s_a = links::sigmoid(-l);
                    let s_b = links::sigmoid(-l - phi);
                    let p_draw = s_a - s_b;
                    if p_draw <= 0.0 {
                        return Err(Error::NonFinite(
                            "zero draw mass (phi = 0) with an observed draw".into(),
                        ));
                    }
                    let da = s_a * (1.0 - s_a);
                    let db = s_b * (1.0 - s_b);
                    ((-da + db) / p_draw, db / p_draw)
                }
            };
            scatter_structure(state, spec, i, j, features, dl, g);
            g.psi += dphi * phi;
            Ok(())
        }
    }
}

/// Scatters dL/dl times the structure derivative of L_ij into `g`.
fn scatter_structure(
    state: &ModelState,
    spec: &ModelSpec,
    i: TeamId,
    j: TeamId,
    features: Option<PromoFlags>,
    dl: f64,
    g: &mut ModelState,
) {
    if spec.structure.has_theta() {
        g.theta[i.0] += dl;
        g.theta[j.0] -= dl;
    }
    if spec.structure.has_factors() {
        g.u[i.0] += dl * state.v[j.0];
        g.u[j.0] -= dl * state.v[i.0];
        g.v[j.0] += dl * state.u[i.0];
        g.v[i.0] -= dl * state.u[j.0];
    }
    if spec.has_home_adv() {
        g.h += dl;
    }
    if spec.covariates {
        let (hp, ap) = features.unwrap_or((false, false));
        if hp {
            g.beta_home += dl;
        }
        if ap {
            g.beta_away += dl;
        }
    }
}

/// Analytic gradient of the batch log-likelihood with respect to every free
/// parameter, in a container of the same shape as the state.
pub fn grad(
    state: &ModelState,
    spec: &ModelSpec,
    data: &Dataset,
    features: Option<&[PromoFlags]>,
) -> Result<ModelState> {
    state.check_dims(spec)?;
    check_features(spec, data, features)?;
    let mut g = ModelState::zeros(spec.n_teams);
    for (k, r) in data.records().iter().enumerate() {
        accumulate_grad(state, spec, r, features.map(|f| f[k]), &mut g)?;
    }
    Ok(g)
}
