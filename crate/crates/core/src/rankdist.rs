//! Station usage rank distributions and the truncated power law
//! `P(k) = C * k^-alpha * exp(-beta * k^gamma)`.
//!
//! Fitting is unweighted least squares in log space, so head and tail ranks
//! carry comparable weight.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::calendar::{Calendar, CalendarError, DayClass};
use crate::ingest::{StationId, UsageEvent};
use crate::lm::{self, LmSettings, Problem, Termination};
use crate::math;

pub const MIN_FIT_RANKS: usize = 10;

pub const ALPHA_BOUNDS: (f64, f64) = (0.0, 5.0);
pub const BETA_BOUNDS: (f64, f64) = (0.0, 1.0);
pub const GAMMA_BOUNDS: (f64, f64) = (0.1, 5.0);

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankEntry {
    pub rank: usize,
    pub station_id: StationId,
    pub count: u64,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankDistribution {
    pub day_class: DayClass,
    /// Ranks `1..=N`, count non-increasing.
    pub entries: Vec<RankEntry>,
}

impl RankDistribution {
    /// Ranks stations by count, descending; equal counts are ordered by
    /// station id ascending. Zero-count stations are dropped.
    pub fn from_counts(
        day_class: DayClass,
        counts: impl IntoIterator<Item = (StationId, u64)>,
    ) -> Result<Self, RankError> {
        let mut counts: Vec<(StationId, u64)> = counts.into_iter().filter(|c| c.1 > 0).collect();
        if counts.is_empty() {
            return Err(RankError::Empty(day_class));
        }
        counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let total: u64 = counts.iter().map(|c| c.1).sum();
        let entries = counts
            .into_iter()
            .enumerate()
            .map(|(i, (station_id, count))| RankEntry {
                rank: i + 1,
                station_id,
                count,
                proportion: count as f64 / total as f64,
            })
            .collect();
        Ok(Self { day_class, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn points(&self) -> Vec<RankPoint> {
        self.entries
            .iter()
            .map(|e| RankPoint {
                rank: e.rank as f64,
                proportion: e.proportion,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankError {
    #[error("no {0} activity to rank")]
    Empty(DayClass),
    #[error(transparent)]
    Calendar(#[from] CalendarError),
}

/// Usage per station is rentals plus returns over the dates of `day_class`.
pub fn rank_stations(
    events: &[UsageEvent],
    day_class: DayClass,
    calendar: &Calendar,
) -> Result<RankDistribution, RankError> {
    let mut counts: BTreeMap<&StationId, u64> = BTreeMap::new();
    for e in events {
        if calendar.classify(e.date())? == day_class {
            *counts.entry(&e.station_id).or_default() += e.total();
        }
    }
    RankDistribution::from_counts(day_class, counts.into_iter().map(|(s, c)| (s.clone(), c)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankPoint {
    pub rank: f64,
    pub proportion: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub norm_const: f64,
    /// Root mean square of `ln P(k) - ln model(k)`.
    pub rmse_log: f64,
    pub n_ranks: usize,
    /// Ranks left out of the fit because their proportion was zero.
    pub excluded_ranks: Vec<usize>,
    pub iterations: usize,
    pub termination: Termination,
}

impl RankFit {
    pub fn params(&self) -> RankParams {
        RankParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn evaluate(&self, k: f64) -> f64 {
        evaluate_rank_model(self, k)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least {min} ranks with positive proportion, got {got}")]
    TooFewRanks { min: usize, got: usize },
    #[error("no convergence after {iterations} iterations (best rmse_log {})", best.rmse_log)]
    NoConvergence { iterations: usize, best: RankFit },
}

/// `norm_const * k^-alpha * exp(-beta * k^gamma)`.
pub fn evaluate_rank_model(fit: &RankFit, k: f64) -> f64 {
    fit.norm_const * math::powf(k, -fit.alpha) * math::exp(-fit.beta * math::powf(k, fit.gamma))
}

/// Upper bound on `ln k_c`; `beta = exp(-gamma * ln k_c)` reaches zero in
/// double precision well before this.
const LN_CUTOFF_MAX: f64 = 700.0;

const PROFILE_POINTS: usize = 25;

/// Residuals of the log model over parameters `[ln C, alpha, u, gamma]`,
/// where the cut-off is written `(k / k_c)^gamma` with `u = ln k_c`, so
/// `beta = exp(-gamma u)`. Fitting `u` instead of `beta` decouples the two
/// cut-off parameters, which are nearly collinear in the original form.
struct LogModel {
    ln_k: Vec<f64>,
    ln_p: Vec<f64>,
}

fn cutoff_from_beta(beta: f64, gamma: f64) -> f64 {
    if beta > 0.0 {
        (-math::ln(beta) / gamma).clamp(0.0, LN_CUTOFF_MAX)
    } else {
        LN_CUTOFF_MAX
    }
}

impl Problem<4> for LogModel {
    fn residual_count(&self) -> usize {
        self.ln_k.len()
    }

    fn residuals(&self, p: &[f64; 4], out: &mut [f64]) {
        for ((o, &lk), &lp) in out.iter_mut().zip(&self.ln_k).zip(&self.ln_p) {
            *o = p[0] - p[1] * lk - math::exp(p[3] * (lk - p[2])) - lp;
        }
    }

    fn jacobian(&self, p: &[f64; 4], out: &mut [[f64; 4]]) {
        for (row, &lk) in out.iter_mut().zip(&self.ln_k) {
            let e = math::exp(p[3] * (lk - p[2]));
            *row = [1.0, -lk, p[3] * e, -e * (lk - p[2])];
        }
    }

    fn project(&self, p: &mut [f64; 4]) {
        p[1] = p[1].clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1);
        p[3] = p[3].clamp(GAMMA_BOUNDS.0, GAMMA_BOUNDS.1);
        // beta <= 1 is u >= 0; beta >= 0 holds by construction.
        p[2] = p[2].clamp(0.0, LN_CUTOFF_MAX);
    }
}

impl LogModel {
    fn sse(&self, p: &[f64; 4]) -> f64 {
        let mut r = alloc::vec![0.0; self.ln_k.len()];
        self.residuals(p, &mut r);
        r.iter().map(|x| x * x).sum()
    }

    /// Least-squares `ln C` for fixed shape parameters.
    fn best_log_norm(&self, alpha: f64, u: f64, gamma: f64) -> f64 {
        let n = self.ln_k.len() as f64;
        self.ln_k
            .iter()
            .zip(&self.ln_p)
            .map(|(&lk, &lp)| lp + alpha * lk + math::exp(gamma * (lk - u)))
            .sum::<f64>()
            / n
    }

    /// Linear least squares for `[ln C, alpha, beta]` with gamma held fixed,
    /// returned in fit coordinates. `None` when the solution is out of bounds.
    fn linear_start(&self, gamma: f64) -> Option<[f64; 4]> {
        let mut a = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for (&lk, &lp) in self.ln_k.iter().zip(&self.ln_p) {
            let row = [1.0, -lk, -math::exp(gamma * lk)];
            for i in 0..3 {
                b[i] += row[i] * lp;
                for j in 0..3 {
                    a[i][j] += row[i] * row[j];
                }
            }
        }
        let x = lm::solve(a, b)?;
        let inside = (ALPHA_BOUNDS.0..=ALPHA_BOUNDS.1).contains(&x[1])
            && (BETA_BOUNDS.0..=BETA_BOUNDS.1).contains(&x[2]);
        inside.then(|| [x[0], x[1], cutoff_from_beta(x[2], gamma), gamma])
    }
}

/// Default starting point: alpha from the log-log slope over the top 10% of
/// ranks (at least three), gamma = 2, and beta such that the cut-off factor
/// equals 1/2 at the middle rank.
pub fn initial_params(points: &[RankPoint]) -> RankParams {
    let head = (points.len() / 10).max(3).min(points.len());
    let xs: Vec<f64> = points[..head].iter().map(|p| math::ln(p.rank)).collect();
    let ys: Vec<f64> = points[..head].iter().map(|p| math::ln(p.proportion)).collect();
    let mx = xs.iter().sum::<f64>() / head as f64;
    let my = ys.iter().sum::<f64>() / head as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let gamma = 2.0;
    let mid = points.iter().map(|p| p.rank).fold(1.0, f64::max) / 2.0;
    RankParams {
        alpha: (-slope).clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1),
        beta: (core::f64::consts::LN_2 / math::powf(mid.max(1.0), gamma)).clamp(BETA_BOUNDS.0, BETA_BOUNDS.1),
        gamma,
    }
}

/// Fits the truncated power law to arbitrary (rank, proportion) points.
/// Zero-proportion points are excluded and reported.
pub fn fit_rank_points(points: &[RankPoint], init: Option<RankParams>) -> Result<RankFit, FitError> {
    fit_rank_points_with(points, init, &LmSettings::default())
}

pub fn fit_rank_points_with(
    points: &[RankPoint],
    init: Option<RankParams>,
    settings: &LmSettings,
) -> Result<RankFit, FitError> {
    let mut excluded_ranks = Vec::new();
    let mut kept = Vec::with_capacity(points.len());
    for p in points {
        if p.proportion > 0.0 {
            kept.push(*p);
        } else {
            excluded_ranks.push(p.rank as usize);
        }
    }
    if kept.len() < MIN_FIT_RANKS {
        return Err(FitError::TooFewRanks {
            min: MIN_FIT_RANKS,
            got: kept.len(),
        });
    }
    let model = LogModel {
        ln_k: kept.iter().map(|p| math::ln(p.rank)).collect(),
        ln_p: kept.iter().map(|p| math::ln(p.proportion)).collect(),
    };
    let start = init.unwrap_or_else(|| initial_params(&kept));
    let mut theta = [0.0, start.alpha, 0.0, start.gamma];
    model.project(&mut theta);
    theta[2] = cutoff_from_beta(start.beta.clamp(BETA_BOUNDS.0, BETA_BOUNDS.1), theta[3]);
    theta[0] = model.best_log_norm(theta[1], theta[2], theta[3]);
    // The model is linear in the other three parameters once gamma is fixed.
    // The supplied start competes with those conditional optima along a
    // gamma grid (and at its own gamma); LM starts from the best of them.
    let mut best = model.sse(&theta);
    let grid = (0..PROFILE_POINTS).map(|i| {
        let t = i as f64 / (PROFILE_POINTS - 1) as f64;
        GAMMA_BOUNDS.0 * math::powf(GAMMA_BOUNDS.1 / GAMMA_BOUNDS.0, t)
    });
    for gamma in core::iter::once(theta[3]).chain(grid) {
        if let Some(candidate) = model.linear_start(gamma) {
            let s = model.sse(&candidate);
            if s < best {
                best = s;
                theta = candidate;
            }
        }
    }

    let out = lm::minimize(&model, theta, settings);
    let [ln_c, alpha, u, gamma] = out.params;
    let fit = RankFit {
        alpha,
        beta: math::exp(-gamma * u),
        gamma,
        norm_const: math::exp(ln_c),
        rmse_log: math::sqrt(out.sse / kept.len() as f64),
        n_ranks: kept.len(),
        excluded_ranks,
        iterations: out.iterations,
        termination: out.termination.unwrap_or(Termination::Stalled),
    };
    match out.termination {
        Some(_) => Ok(fit),
        None => Err(FitError::NoConvergence {
            iterations: out.iterations,
            best: fit,
        }),
    }
}

pub fn fit_rank_distribution(
    dist: &RankDistribution,
    init: Option<RankParams>,
) -> Result<RankFit, FitError> {
    fit_rank_points(&dist.points(), init)
}
