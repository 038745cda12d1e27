//! Empirical log-odds estimation with smoothing and the nuclear-norm
//! regularized log-odds estimator, binary and ternary variants.

use nalgebra::DMatrix;

use crate::data::{Dataset, Outcome, OutcomeDistribution, TeamIndex};
use crate::error::{Error, Result};
use crate::links::{sigmoid, ternary_probs};

/// Pairwise outcome counts. `wins[(i, j)]` counts matches team i won against
/// team j at either venue; `draws` is symmetric (zero in binary mode);
/// `total[(i, j)]` counts all matches between the pair that entered the
/// tally.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrices {
    pub wins: DMatrix<f64>,
    pub draws: DMatrix<f64>,
    pub total: DMatrix<f64>,
    pub ternary: bool,
}

impl CountMatrices {
    /// Binary counts: draws are left out entirely.
    pub fn binary_from(d: &Dataset) -> Self {
        let q = d.n_teams();
        let mut wins = DMatrix::zeros(q, q);
        let mut total = DMatrix::zeros(q, q);
        for r in d.records() {
            let (i, j) = (r.home.0, r.away.0);
            match r.outcome {
                Outcome::HomeWin => wins[(i, j)] += 1.0,
                Outcome::AwayWin => wins[(j, i)] += 1.0,
                Outcome::Draw => continue,
            }
            total[(i, j)] += 1.0;
            total[(j, i)] += 1.0;
        }
        Self {
            wins,
            draws: DMatrix::zeros(q, q),
            total,
            ternary: false,
        }
    }

    /// Ternary counts: wins, draws and (implicitly) losses per pair.
    pub fn ternary_from(d: &Dataset) -> Self {
        let q = d.n_teams();
        let mut wins = DMatrix::zeros(q, q);
        let mut draws = DMatrix::zeros(q, q);
        let mut total = DMatrix::zeros(q, q);
        for r in d.records() {
            let (i, j) = (r.home.0, r.away.0);
            match r.outcome {
                Outcome::HomeWin => wins[(i, j)] += 1.0,
                Outcome::AwayWin => wins[(j, i)] += 1.0,
                Outcome::Draw => {
                    draws[(i, j)] += 1.0;
                    draws[(j, i)] += 1.0;
                }
            }
            total[(i, j)] += 1.0;
            total[(j, i)] += 1.0;
        }
        Self {
            wins,
            draws,
            total,
            ternary: true,
        }
    }

    pub fn n_teams(&self) -> usize {
        self.wins.nrows()
    }

    /// Count-identity check: per-level counts add up to the totals.
    pub fn validate(&self) -> Result<()> {
        let q = self.n_teams();
        for i in 0..q {
            for j in 0..q {
                let sum = self.wins[(i, j)] + self.wins[(j, i)] + self.draws[(i, j)];
                if sum != self.total[(i, j)] {
                    return Err(Error::Invalid(format!(
                        "count identity violated at ({i}, {j}): {sum} vs {}",
                        self.total[(i, j)]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Empirical (cumulative) log-odds matrices with additive smoothing.
#[derive(Debug, Clone)]
pub enum EmpiricalLogOdds {
    Binary {
        lhat: DMatrix<f64>,
        /// Entries that came out non-finite (possible only with eps = 0).
        nonfinite: usize,
    },
    Ternary {
        /// logit P(win)
        l1: DMatrix<f64>,
        /// logit P(win or draw)
        l2: DMatrix<f64>,
        nonfinite: usize,
    },
}

impl EmpiricalLogOdds {
    pub fn nonfinite(&self) -> usize {
        match self {
            EmpiricalLogOdds::Binary { nonfinite, .. } => *nonfinite,
            EmpiricalLogOdds::Ternary { nonfinite, .. } => *nonfinite,
        }
    }
}

/// Empirical log-odds with smoothing: p_hat = (W + eps) / (N + 2 eps),
/// L_hat = logit(p_hat). With eps = 0, never-observed pairings produce
/// non-finite entries which are counted and left in place.
pub fn empirical_logodds(counts: &CountMatrices, eps: f64) -> Result<EmpiricalLogOdds> {
    if eps < 0.0 {
        return Err(Error::Domain(format!(
            "smoothing constant must be nonnegative, got {eps}"
        )));
    }
    let q = counts.n_teams();
    let mut nonfinite = 0;
    // logit((num + eps) / (num + den + 2 eps)) = ln(num + eps) - ln(den + eps)
    let mut cell = |num: f64, den: f64| -> f64 {
        let v = ((num + eps) / (den + eps)).ln();
        if !v.is_finite() {
            nonfinite += 1;
        }
        v
    };
    if counts.ternary {
        let mut l1 = DMatrix::zeros(q, q);
        let mut l2 = DMatrix::zeros(q, q);
        for i in 0..q {
            for j in 0..q {
                let w = counts.wins[(i, j)];
                let d = counts.draws[(i, j)];
                let l = counts.wins[(j, i)];
                l1[(i, j)] = cell(w, d + l);
                l2[(i, j)] = cell(w + d, l);
            }
        }
        Ok(EmpiricalLogOdds::Ternary { l1, l2, nonfinite })
    } else {
        let mut lhat = DMatrix::zeros(q, q);
        for i in 0..q {
            for j in 0..q {
                lhat[(i, j)] = cell(counts.wins[(i, j)], counts.wins[(j, i)]);
            }
        }
        Ok(EmpiricalLogOdds::Binary { lhat, nonfinite })
    }
}

/// U max(S - tau, 0) V^T: the proximal operator of tau * nuclear norm.
pub fn svd_soft_threshold(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let shrunk = svd.singular_values.map(|s| (s - tau).max(0.0));
    &u * DMatrix::from_diagonal(&shrunk) * &v_t
}

/// Sum of singular values.
pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().sum()
}

/// Exact minimizer of  ||lhat - L||_F^2 + lambda ||L||_*  subject to
/// L + L^T = 0: singular-value soft-thresholding (threshold lambda / 2) of
/// the antisymmetric part of the input. Soft-thresholding is a spectral
/// function, so it maps the antisymmetric subspace to itself.
pub fn solve_nuclear_binary(lhat: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if lambda < 0.0 {
        return Err(Error::Domain(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    if lhat.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(
            "empirical log-odds contain non-finite entries; smooth with eps > 0".into(),
        ));
    }
    let anti = (lhat - lhat.transpose()) * 0.5;
    Ok(svd_soft_threshold(&anti, lambda / 2.0))
}

/// Objective of the ternary program.
pub fn ternary_objective(
    l1: &DMatrix<f64>,
    l2: &DMatrix<f64>,
    l: &DMatrix<f64>,
    phi: f64,
    lambda: f64,
) -> f64 {
    let ones = DMatrix::from_element(l.nrows(), l.ncols(), phi);
    let r1 = l1 - l;
    let r2 = l2 - l - ones;
    r1.iter().map(|x| x * x).sum::<f64>()
        + r2.iter().map(|x| x * x).sum::<f64>()
        + lambda * nuclear_norm(l)
}

/// Alternating minimization of
/// ||L1 - L||_F^2 + ||L2 - L - phi 11^T||_F^2 + lambda ||L||_*
/// (no antisymmetry constraint in the ternary program). Returns the
/// estimate, the draw offset phi and the non-increasing objective trace.
pub fn solve_nuclear_ternary(
    l1: &DMatrix<f64>,
    l2: &DMatrix<f64>,
    lambda: f64,
) -> Result<(DMatrix<f64>, f64, Vec<f64>)> {
    if l1.shape() != l2.shape() {
        return Err(Error::Dimension(format!(
            "shape mismatch: {:?} vs {:?}",
            l1.shape(),
            l2.shape()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::Domain(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    if l1.iter().chain(l2.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(
            "empirical log-odds contain non-finite entries; smooth with eps > 0".into(),
        ));
    }
    let n = (l1.nrows() * l1.ncols()) as f64;
    let mut l = l1.clone();
    let mut phi = 0.0;
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..10_000 {
        // phi-step: mean of (L2 - L).
        phi = (l2 - &l).iter().sum::<f64>() / n;
        // L-step: prox on the average of both targets.
        let target = (l1 + l2 - DMatrix::from_element(l1.nrows(), l1.ncols(), phi)) * 0.5;
        l = svd_soft_threshold(&target, lambda / 4.0);
        let obj = ternary_objective(l1, l2, &l, phi, lambda);
        trace.push(obj);
        if (prev - obj).abs() < 1e-10 {
            break;
        }
        prev = obj;
    }
    Ok((l, phi, trace))
}

/// 20 logarithmically spaced regularization strengths spanning
/// [1e-3, 2 sigma_max] of the antisymmetric part.
pub fn lambda_grid(lhat: &DMatrix<f64>) -> Vec<f64> {
    let anti = (lhat - lhat.transpose()) * 0.5;
    let smax = anti
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    let hi: f64 = (2.0 * smax).max(2e-3);
    let lo: f64 = 1e-3;
    let n = 20;
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Predictions read off a (completed) regularized log-odds estimate; entries
/// for never-observed pairings come from the matrix completion.
#[derive(Debug, Clone)]
pub struct RegularizedPredictor {
    pub l: DMatrix<f64>,
    pub phi: f64,
    pub ternary: bool,
}

impl RegularizedPredictor {
    pub fn predict(&self, i: usize, j: usize) -> Result<OutcomeDistribution> {
        let v = self.l[(i, j)];
        if self.ternary {
            ternary_probs(v, self.phi.max(0.0))
        } else {
            Ok(OutcomeDistribution::binary(sigmoid(v)))
        }
    }
}

/// Fits the regularized estimator on `counts` for each lambda and returns
/// the per-lambda mean out-of-sample log-likelihood on `tune`, together
/// with the best predictor (highest tune log-likelihood).
pub fn select_lambda(
    counts: &CountMatrices,
    eps: f64,
    tune: &Dataset,
    grid: &[f64],
) -> Result<(RegularizedPredictor, f64, Vec<(f64, f64)>)> {
    if grid.is_empty() {
        return Err(Error::Invalid("lambda grid is empty".into()));
    }
    let emp = empirical_logodds(counts, eps)?;
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(RegularizedPredictor, f64, f64)> = None;
    for &lambda in grid {
        let predictor = match &emp {
            EmpiricalLogOdds::Binary { lhat, .. } => RegularizedPredictor {
                l: solve_nuclear_binary(lhat, lambda)?,
                phi: 0.0,
                ternary: false,
            },
            EmpiricalLogOdds::Ternary { l1, l2, .. } => {
                let (l, phi, _) = solve_nuclear_ternary(l1, l2, lambda)?;
                RegularizedPredictor {
                    l,
                    phi,
                    ternary: true,
                }
            }
        };
        let mut total = 0.0;
        for r in tune.records() {
            let p = predictor.predict(r.home.0, r.away.0)?;
            total += p.mass(r.outcome).ln();
        }
        let mean = total / tune.len().max(1) as f64;
        table.push((lambda, mean));
        if best.as_ref().map_or(true, |(_, _, b)| mean > *b) {
            best = Some((predictor, lambda, mean));
        }
    }
    let (predictor, lambda, _) = best.unwrap();
    Ok((predictor, lambda, table))
}

/// Dense CSV with a team-id header row and column.
pub fn write_matrix_csv<W: std::io::Write>(
    m: &DMatrix<f64>,
    teams: Option<&TeamIndex>,
    mut w: W,
) -> Result<()> {
    let q = m.nrows();
    let label = |k: usize| -> String {
        match teams {
            Some(t) => format!("{k}:{}", t.name(crate::data::TeamId(k))),
            None => k.to_string(),
        }
    };
    let header: Vec<String> = std::iter::once("team".to_string())
        .chain((0..q).map(&label))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..q {
        let row: Vec<String> = std::iter::once(label(i))
            .chain((0..m.ncols()).map(|j| m[(i, j)].to_string()))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
