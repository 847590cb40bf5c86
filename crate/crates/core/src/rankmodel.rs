//! Weekday/weekend rank correspondence and the sequential-occupancy model
//! relating them.
//!
//! The mean-field recurrence is
//! `S(k) = S(k-1) + (M - a S(k-1)) / M` with `S(1) = S1`, whose solution is
//! `S(k) = (S1 - M/a) (1 - a/M)^(k-1) + M/a`. The fitted curve uses
//! `x = k - 1`, so `y(x) = (b - M/a) (1 - a/M)^x + M/a` with `y(0) = b`.
//! `M` (here `m_max`) is the largest weekend rank.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::StationId;
use crate::lm::{self, LmSettings, Problem, Termination};
use crate::math;
use crate::rankdist::RankDistribution;

pub const MIN_FIT_PAIRS: usize = 10;
pub const A_BOUNDS: (f64, f64) = (0.01, 0.99);
pub const B_MIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankPair {
    pub station_id: StationId,
    /// Weekday rank.
    pub x: usize,
    /// Weekend rank.
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankCorrespondence {
    /// Ordered by weekday rank.
    pub pairs: Vec<RankPair>,
    /// Largest weekday rank.
    pub n: usize,
    /// Largest weekend rank.
    pub m_max: usize,
}

impl RankCorrespondence {
    /// `(x - 1, y)` pairs in the fitting convention.
    pub fn fit_points(&self) -> Vec<(f64, f64)> {
        self.pairs
            .iter()
            .map(|p| ((p.x - 1) as f64, p.y as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("weekday and weekend rankings share no stations")]
    EmptyIntersection,
    #[error("parameter a = {0} outside (0, 1)")]
    BadA(f64),
    #[error("maximum weekend rank must be at least 1, got {0}")]
    BadMMax(f64),
    #[error("need at least {min} pairs, got {got}")]
    TooFewPairs { min: usize, got: usize },
    #[error("no convergence after {iterations} iterations (best rmse {})", best.rmse)]
    NoConvergence { iterations: usize, best: RankModelFit },
    #[error("simulation requires N > M_max (N = {n}, M_max = {m_max})")]
    NotEnoughRanks { n: usize, m_max: usize },
    #[error("invalid simulation parameter: {0}")]
    BadSimulation(&'static str),
}

/// Pairs the two rankings over the stations present in both, re-ranking each
/// side densely as `1..=|intersection|` in its original order.
pub fn rank_correspondence(
    weekday: &RankDistribution,
    weekend: &RankDistribution,
) -> Result<RankCorrespondence, ModelError> {
    let in_weekday: BTreeMap<&StationId, ()> =
        weekday.entries.iter().map(|e| (&e.station_id, ())).collect();
    let weekend_rank: BTreeMap<&StationId, usize> = weekend
        .entries
        .iter()
        .filter(|e| in_weekday.contains_key(&e.station_id))
        .enumerate()
        .map(|(i, e)| (&e.station_id, i + 1))
        .collect();
    let pairs: Vec<RankPair> = weekday
        .entries
        .iter()
        .filter_map(|e| weekend_rank.get(&e.station_id).map(|&y| (e, y)))
        .enumerate()
        .map(|(i, (e, y))| RankPair {
            station_id: e.station_id.clone(),
            x: i + 1,
            y,
        })
        .collect();
    if pairs.is_empty() {
        return Err(ModelError::EmptyIntersection);
    }
    let n = pairs.len();
    Ok(RankCorrespondence {
        pairs,
        n,
        m_max: weekend_rank.len(),
    })
}

fn check_a(a: f64) -> Result<(), ModelError> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(ModelError::BadA(a))
    }
}

fn closed_form_unchecked(x: f64, a: f64, b: f64, m_max: f64) -> f64 {
    let limit = m_max / a;
    (b - limit) * math::powf(1.0 - a / m_max, x) + limit
}

/// `y(x) = (b - M/a) (1 - a/M)^x + M/a`.
pub fn model_closed_form(x: f64, a: f64, b: f64, m_max: f64) -> Result<f64, ModelError> {
    check_a(a)?;
    if !(m_max >= 1.0) {
        return Err(ModelError::BadMMax(m_max));
    }
    Ok(closed_form_unchecked(x, a, b, m_max))
}

/// `S(1) = s1, ..., S(steps)` by direct iteration of the recurrence.
pub fn recurrence_iterate(s1: f64, a: f64, m_max: f64, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps);
    let mut s = s1;
    for _ in 0..steps {
        out.push(s);
        s += (m_max - a * s) / m_max;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelRegime {
    /// Visible saturation toward `M/a` over the observed ranks.
    Saturating,
    /// `a / M_max` is too small for curvature to show: the fit is
    /// indistinguishable from a straight line and `a` is not identified.
    NearLinear,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankModelFit {
    pub a: f64,
    pub b: f64,
    pub m_max: f64,
    pub rmse: f64,
    pub n_pairs: usize,
    pub regime: ModelRegime,
    pub iterations: usize,
    pub termination: Termination,
}

impl RankModelFit {
    /// Predicted weekend rank for weekday rank `rank` (1-based).
    pub fn predict_rank(&self, rank: usize) -> f64 {
        closed_form_unchecked(rank.saturating_sub(1) as f64, self.a, self.b, self.m_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
}

struct ClosedForm<'a> {
    points: &'a [(f64, f64)],
    m_max: f64,
}

impl Problem<2> for ClosedForm<'_> {
    fn residual_count(&self) -> usize {
        self.points.len()
    }

    fn residuals(&self, p: &[f64; 2], out: &mut [f64]) {
        for (o, &(x, y)) in out.iter_mut().zip(self.points) {
            *o = closed_form_unchecked(x, p[0], p[1], self.m_max) - y;
        }
    }

    fn jacobian(&self, p: &[f64; 2], out: &mut [[f64; 2]]) {
        let (a, b, m) = (p[0], p[1], self.m_max);
        let q = 1.0 - a / m;
        let limit = m / a;
        for (row, &(x, _)) in out.iter_mut().zip(self.points) {
            let qx = math::powf(q, x);
            // d/da of (b - M/a) q^x + M/a
            let d_a = (m / (a * a)) * (qx - 1.0) - (b - limit) * x * qx / (q * m);
            *row = [d_a, qx];
        }
    }

    fn project(&self, p: &mut [f64; 2]) {
        p[0] = p[0].clamp(A_BOUNDS.0, A_BOUNDS.1);
        p[1] = p[1].max(B_MIN);
    }
}

/// Curvature over the observed range below this fraction counts as linear.
const NEAR_LINEAR_DECAY: f64 = 0.05;

/// Least squares over `(x, y)` points with `x = weekday rank - 1`.
pub fn fit_rank_model_points(
    points: &[(f64, f64)],
    m_max: f64,
    init: Option<ModelParams>,
) -> Result<RankModelFit, ModelError> {
    if points.len() < MIN_FIT_PAIRS {
        return Err(ModelError::TooFewPairs {
            min: MIN_FIT_PAIRS,
            got: points.len(),
        });
    }
    if !(m_max >= 1.0) {
        return Err(ModelError::BadMMax(m_max));
    }
    let start = init.unwrap_or_else(|| {
        // b from the smallest weekday ranks, a at mid-range.
        let head = &points[..points.len().min(3)];
        let b = head.iter().map(|p| p.1 - p.0).sum::<f64>() / head.len() as f64;
        ModelParams { a: 0.5, b }
    });
    let problem = ClosedForm { points, m_max };
    let out = lm::minimize(&problem, [start.a, start.b], &LmSettings::default());
    let [a, b] = out.params;
    let x_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let decay = 1.0 - math::powf(1.0 - a / m_max, x_max);
    let at_floor = a <= A_BOUNDS.0 * (1.0 + 1e-9);
    let regime = if at_floor || decay < NEAR_LINEAR_DECAY {
        ModelRegime::NearLinear
    } else {
        ModelRegime::Saturating
    };
    let fit = RankModelFit {
        a,
        b,
        m_max,
        rmse: math::sqrt(out.sse / points.len() as f64),
        n_pairs: points.len(),
        regime,
        iterations: out.iterations,
        termination: out.termination.unwrap_or(Termination::Stalled),
    };
    match out.termination {
        Some(_) => Ok(fit),
        None => Err(ModelError::NoConvergence {
            iterations: out.iterations,
            best: fit,
        }),
    }
}

pub fn fit_rank_model(
    corr: &RankCorrespondence,
    init: Option<ModelParams>,
) -> Result<RankModelFit, ModelError> {
    fit_rank_model_points(&corr.fit_points(), corr.m_max as f64, init)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationParams {
    /// Number of weekday ranks, `k = 1..=n`.
    pub n: usize,
    pub m_max: usize,
    /// `0 <= a < 1`; `a = 0` is the limit where every step advances.
    pub a: f64,
    pub s1: u32,
    pub seed: u64,
    pub trials: u64,
}

impl SimulationParams {
    fn validate(&self) -> Result<(), ModelError> {
        if self.n <= self.m_max {
            return Err(ModelError::NotEnoughRanks { n: self.n, m_max: self.m_max });
        }
        if self.m_max == 0 {
            return Err(ModelError::BadSimulation("m_max must be positive"));
        }
        if !(0.0..1.0).contains(&self.a) {
            return Err(ModelError::BadSimulation("a must lie in [0, 1)"));
        }
        if self.s1 == 0 {
            return Err(ModelError::BadSimulation("s1 must be at least 1"));
        }
        if self.trials == 0 {
            return Err(ModelError::BadSimulation("trials must be at least 1"));
        }
        Ok(())
    }
}

/// Running integer sums of `S(k)` and `S(k)^2`. Merging is exact, so the
/// result does not depend on how trials are partitioned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryStats {
    pub trials: u64,
    sum: Vec<u64>,
    sum_sq: Vec<u128>,
}

impl TrajectoryStats {
    pub fn new(len: usize) -> Self {
        Self {
            trials: 0,
            sum: vec![0; len],
            sum_sq: vec![0; len],
        }
    }

    pub fn record(&mut self, trajectory: &[u32]) {
        self.trials += 1;
        for (k, &s) in trajectory.iter().enumerate() {
            self.sum[k] += u64::from(s);
            self.sum_sq[k] += u128::from(s) * u128::from(s);
        }
    }

    pub fn merge(&mut self, other: &TrajectoryStats) {
        self.trials += other.trials;
        for k in 0..self.sum.len() {
            self.sum[k] += other.sum[k];
            self.sum_sq[k] += other.sum_sq[k];
        }
    }

    pub fn finish(&self) -> SimulationResult {
        let t = self.trials as f64;
        let mut mean = Vec::with_capacity(self.sum.len());
        let mut stderr = Vec::with_capacity(self.sum.len());
        for k in 0..self.sum.len() {
            let m = self.sum[k] as f64 / t;
            let var = if self.trials > 1 {
                // Unbiased sample variance from the exact integer sums.
                let ss = self.sum_sq[k] as f64 - t * m * m;
                (ss / (t - 1.0)).max(0.0)
            } else {
                0.0
            };
            mean.push(m);
            stderr.push(math::sqrt(var / t));
        }
        SimulationResult { mean, stderr, trials: self.trials }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// `mean[k - 1]` estimates `<S(k)>`.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: u64,
}

/// The generator for one trial: the master seed with the trial index as the
/// ChaCha stream, so trials are independent and order-free.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// One realisation of the occupancy process: at each step the weekend rank
/// advances by one with probability `(M - a S) / M`, clamped to `[0, 1]`.
pub fn simulate_trial(params: &SimulationParams, rng: &mut impl Rng, out: &mut Vec<u32>) {
    out.clear();
    let m = params.m_max as f64;
    let mut s = params.s1;
    out.push(s);
    for _ in 1..params.n {
        let p = ((m - params.a * f64::from(s)) / m).clamp(0.0, 1.0);
        if rng.random::<f64>() < p {
            s += 1;
        }
        out.push(s);
    }
}

/// Runs trials `range` of a simulation into `stats`.
pub fn simulate_range(params: &SimulationParams, range: core::ops::Range<u64>, stats: &mut TrajectoryStats) {
    let mut buf = Vec::with_capacity(params.n);
    for trial in range {
        let mut rng = trial_rng(params.seed, trial);
        simulate_trial(params, &mut rng, &mut buf);
        stats.record(&buf);
    }
}

/// Monte Carlo estimate of `<S(k)>` for `k = 1..=n` with standard errors.
pub fn simulate_assignment(params: &SimulationParams) -> Result<SimulationResult, ModelError> {
    params.validate()?;
    let mut stats = TrajectoryStats::new(params.n);
    simulate_range(params, 0..params.trials, &mut stats);
    Ok(stats.finish())
}

pub fn validate_simulation(params: &SimulationParams) -> Result<(), ModelError> {
    params.validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::DayClass;
    use alloc::vec;

    extern crate std;

    fn dist(class: DayClass, ids: &[&str]) -> RankDistribution {
        let n = ids.len() as u64;
        RankDistribution::from_counts(
            class,
            ids.iter().enumerate().map(|(i, s)| (StationId::from(*s), 10 * (n - i as u64))),
        )
        .unwrap()
    }

    #[test]
    fn correspondence_hand_case() {
        let wd = dist(DayClass::Weekday, &["A", "B", "C"]);
        let we = dist(DayClass::Weekend, &["B", "A", "C"]);
        let c = rank_correspondence(&wd, &we).unwrap();
        let xy: Vec<_> = c.pairs.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(xy, vec![(1, 2), (2, 1), (3, 3)]);
        assert_eq!((c.n, c.m_max), (3, 3));
    }

    #[test]
    fn correspondence_identical_is_diagonal() {
        let ids = ["s1", "s2", "s3", "s4", "s5"];
        let c = rank_correspondence(&dist(DayClass::Weekday, &ids), &dist(DayClass::Weekend, &ids)).unwrap();
        assert!(c.pairs.iter().all(|p| p.x == p.y));
    }

    #[test]
    fn correspondence_reranks_after_intersection() {
        let wd = dist(DayClass::Weekday, &["A", "X", "B", "C"]);
        let we = dist(DayClass::Weekend, &["Y", "C", "A", "B"]);
        let c = rank_correspondence(&wd, &we).unwrap();
        let xy: Vec<_> = c.pairs.iter().map(|p| (p.station_id.as_str(), p.x, p.y)).collect();
        assert_eq!(xy, vec![("A", 1, 2), ("B", 2, 3), ("C", 3, 1)]);
    }

    #[test]
    fn correspondence_disjoint_is_error() {
        let wd = dist(DayClass::Weekday, &["A"]);
        let we = dist(DayClass::Weekend, &["B"]);
        assert_eq!(rank_correspondence(&wd, &we), Err(ModelError::EmptyIntersection));
    }

    #[test]
    fn closed_form_anchor_and_limit() {
        assert_eq!(model_closed_form(0.0, 0.5, 7.0, 100.0).unwrap(), 7.0);
        let y = model_closed_form(1e6, 0.5, 1.0, 100.0).unwrap();
        assert!((y - 200.0).abs() / 200.0 < 1e-6);
        assert!(model_closed_form(3.0, 1.0, 1.0, 100.0).is_err());
        assert!(model_closed_form(3.0, 0.0, 1.0, 100.0).is_err());
    }

    #[test]
    fn closed_form_hand_value() {
        // 1 * 0.995^10 + 200 * (1 - 0.995^10) = 10.7291...
        let q10 = 0.995f64.powi(10);
        let expected = q10 + 200.0 * (1.0 - q10);
        assert!((expected - 10.7291).abs() < 1e-4);
        let y = model_closed_form(10.0, 0.5, 1.0, 100.0).unwrap();
        assert!((y - expected).abs() < 1e-12);
        let rec = recurrence_iterate(1.0, 0.5, 100.0, 11);
        assert!((rec[10] - y).abs() < 1e-12);
    }

    #[test]
    fn recurrence_first_step() {
        let s = recurrence_iterate(1.0, 0.5, 100.0, 2);
        assert_eq!(s[0], 1.0);
        assert!((s[1] - 1.995).abs() < 1e-15);
    }

    #[test]
    fn recurrence_fixed_point() {
        let s = recurrence_iterate(200.0, 0.5, 100.0, 5);
        assert!(s.iter().all(|&v| v == 200.0));
    }

    #[test]
    fn recurrence_increasing_below_fixed_point() {
        let s = recurrence_iterate(1.0, 0.3, 50.0, 400);
        for w in s.windows(2) {
            assert!(w[1] > w[0]);
            assert!(w[1] < 50.0 / 0.3);
        }
    }

    #[test]
    fn fit_too_few_pairs() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, i as f64 + 1.0)).collect();
        assert!(matches!(
            fit_rank_model_points(&pts, 5.0, None),
            Err(ModelError::TooFewPairs { .. })
        ));
    }

    #[test]
    fn fit_noiseless_recovery() {
        let m = 500.0;
        let pts: Vec<(f64, f64)> = (0..400)
            .map(|x| (x as f64, model_closed_form(x as f64, 0.4, 12.0, m).unwrap()))
            .collect();
        let fit = fit_rank_model_points(&pts, m, None).unwrap();
        assert!((fit.a - 0.4).abs() < 1e-6, "{fit:?}");
        assert!((fit.b - 12.0).abs() < 1e-4, "{fit:?}");
        assert_eq!(fit.regime, ModelRegime::Saturating);
    }

    #[test]
    fn identity_pairs_are_near_linear() {
        let ids: Vec<_> = (0..200).map(|i| alloc::format!("s{i:03}")).collect();
        let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
        let c = rank_correspondence(&dist(DayClass::Weekday, &refs), &dist(DayClass::Weekend, &refs)).unwrap();
        let fit = fit_rank_model(&c, None).unwrap();
        assert_eq!(fit.regime, ModelRegime::NearLinear, "{fit:?}");
    }

    #[test]
    fn simulation_deterministic_for_seed() {
        let p = SimulationParams { n: 120, m_max: 100, a: 0.5, s1: 1, seed: 11, trials: 200 };
        assert_eq!(simulate_assignment(&p).unwrap(), simulate_assignment(&p).unwrap());
    }

    #[test]
    fn simulation_zero_a_advances_every_step() {
        let p = SimulationParams { n: 60, m_max: 50, a: 0.0, s1: 3, seed: 1, trials: 20 };
        let r = simulate_assignment(&p).unwrap();
        for (k, (&m, &se)) in r.mean.iter().zip(&r.stderr).enumerate() {
            assert_eq!(m, 3.0 + k as f64);
            assert_eq!(se, 0.0);
        }
    }

    #[test]
    fn simulation_partition_independent() {
        let p = SimulationParams { n: 110, m_max: 100, a: 0.5, s1: 1, seed: 4, trials: 300 };
        let whole = simulate_assignment(&p).unwrap();
        let mut a = TrajectoryStats::new(p.n);
        let mut b = TrajectoryStats::new(p.n);
        simulate_range(&p, 150..300, &mut b);
        simulate_range(&p, 0..150, &mut a);
        a.merge(&b);
        assert_eq!(a.finish(), whole);
    }

    #[test]
    fn simulation_validation() {
        let ok = SimulationParams { n: 101, m_max: 100, a: 0.5, s1: 1, seed: 0, trials: 1 };
        assert!(simulate_assignment(&ok).is_ok());
        assert!(matches!(
            simulate_assignment(&SimulationParams { n: 100, ..ok }),
            Err(ModelError::NotEnoughRanks { .. })
        ));
        assert!(simulate_assignment(&SimulationParams { a: 1.0, ..ok }).is_err());
        assert!(simulate_assignment(&SimulationParams { a: -0.1, ..ok }).is_err());
        assert!(simulate_assignment(&SimulationParams { trials: 0, ..ok }).is_err());
    }
}
