//! Sampling and estimation engine: multinomial sampling, exact enumeration
//! of small instances, naive and multilevel-splitting tail estimation,
//! empirical α/β-slopes and power at prescribed critical values.

pub mod splitting;

use crate::alternatives::{cell_probabilities, AlternativeSpec, FamilyTag};
use crate::error::{Error, Result};
use crate::grouping::GroupedCounts;
use crate::largedev::{predict_alpha_slope, SlopeRegime, TestId};
use crate::numeric::{
    composition_count, derive_seed, for_each_composition, multinomial_pmf, t_quantile_975,
    wilson_interval,
};
use crate::poisson_moments::{
    null_moments, null_moments_exact, shift_xn, EXACT_ORACLE_MAX_CELLS, EXACT_ORACLE_MAX_N,
};
use crate::statistics::HFunction;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;
pub use splitting::TailSide;

/// Tail-probability estimation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Naive,
    Splitting,
    Exact,
}

/// Whether an estimate is a point value or only an upper bound (zero hits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateKind {
    Point,
    UpperBound,
}

/// A tail-probability estimate with 95% interval and replication metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub p_hat: f64,
    pub log_p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: Method,
    pub kind: EstimateKind,
    pub replicates: u64,
    pub seed: u64,
}

impl TailEstimate {
    fn exact(p: f64) -> Self {
        TailEstimate {
            p_hat: p,
            log_p_hat: p.ln(),
            ci_low: p,
            ci_high: p,
            method: Method::Exact,
            kind: EstimateKind::Point,
            replicates: 0,
            seed: 0,
        }
    }
}

/// Draws one multinomial vector into `out` by the sequential
/// conditional-binomial scheme.
pub(crate) fn sample_multinomial_into<R: Rng>(n: u64, p: &[f64], rng: &mut R, out: &mut [u64]) {
    let mut remaining = n;
    let mut rest = 1.0f64;
    let cells = p.len();
    for m in 0..cells {
        if m + 1 == cells {
            out[m] = remaining;
            break;
        }
        if remaining == 0 {
            out[m] = 0;
            continue;
        }
        let ratio = (p[m] / rest).clamp(0.0, 1.0);
        let draw = if ratio >= 1.0 {
            remaining
        } else if ratio <= 0.0 {
            0
        } else {
            Binomial::new(remaining, ratio)
                .expect("valid binomial parameters")
                .sample(rng)
        };
        out[m] = draw;
        remaining -= draw;
        rest = (rest - p[m]).max(0.0);
    }
}

fn validate_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidProbabilities {
            reason: "empty probability vector".into(),
        });
    }
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x) || x.is_nan()) {
        return Err(Error::InvalidProbabilities {
            reason: "entries must lie in [0, 1]".into(),
        });
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbabilities {
            reason: format!("probabilities sum to {total}"),
        });
    }
    Ok(())
}

/// One multinomial draw `M(n, p)`, deterministic per seed.
pub fn sample_multinomial(n: u64, p: &[f64], seed: u64) -> Result<GroupedCounts> {
    validate_probabilities(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; p.len()];
    sample_multinomial_into(n, p, &mut rng, &mut counts);
    Ok(GroupedCounts::from_counts(counts))
}

/// Evaluates `S = Σ h(η_m)` with the equal-cell null expectation `λ = n/N`.
fn statistic_value(counts: &[u64], h: &HFunction, lambda: f64) -> f64 {
    counts.iter().map(|&c| h.eval(c, lambda)).sum()
}

/// Inequality convention at the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inequality {
    /// `S ≥ t` (the definition used by the slopes).
    NonStrict,
    /// `S > t`.
    Strict,
}

fn event_holds(s: f64, threshold: f64, side: TailSide, ineq: Inequality) -> bool {
    match (side, ineq) {
        (TailSide::Upper, Inequality::NonStrict) => s >= threshold,
        (TailSide::Upper, Inequality::Strict) => s > threshold,
        (TailSide::Lower, Inequality::NonStrict) => s <= threshold,
        (TailSide::Lower, Inequality::Strict) => s < threshold,
    }
}

/// Largest instance enumerated exactly: `C(n+N-1, N-1) ≤ 10⁶`.
pub const EXACT_TAIL_MAX_COMPOSITIONS: u128 = 1_000_000;

/// Exact tail probability by full enumeration of the multinomial support.
pub fn exact_tail(
    n: u64,
    n_cells: u64,
    p: &[f64],
    h: &HFunction,
    threshold: f64,
) -> Result<TailEstimate> {
    exact_tail_with(n, n_cells, p, h, threshold, TailSide::Upper, Inequality::NonStrict)
}

pub fn exact_tail_with(
    n: u64,
    n_cells: u64,
    p: &[f64],
    h: &HFunction,
    threshold: f64,
    side: TailSide,
    ineq: Inequality,
) -> Result<TailEstimate> {
    validate_probabilities(p)?;
    if p.len() != n_cells as usize {
        return Err(Error::InvalidProbabilities {
            reason: format!("{} probabilities for {} cells", p.len(), n_cells),
        });
    }
    let compositions = composition_count(n, n_cells);
    if compositions > EXACT_TAIL_MAX_COMPOSITIONS {
        return Err(Error::InstanceTooLarge {
            compositions,
            limit: EXACT_TAIL_MAX_COMPOSITIONS,
        });
    }
    let lambda = n as f64 / n_cells as f64;
    let mut mass = 0.0f64;
    for_each_composition(n, n_cells as usize, |counts| {
        let s = statistic_value(counts, h, lambda);
        if event_holds(s, threshold, side, ineq) {
            mass += multinomial_pmf(counts, n, p);
        }
    });
    Ok(TailEstimate::exact(mass.min(1.0)))
}

/// Exact mean of `S` under `M(n, p)` by enumeration (oracle scale only).
pub fn exact_statistic_mean(n: u64, n_cells: u64, p: &[f64], h: &HFunction) -> Result<f64> {
    validate_probabilities(p)?;
    let compositions = composition_count(n, n_cells);
    if compositions > EXACT_TAIL_MAX_COMPOSITIONS {
        return Err(Error::InstanceTooLarge {
            compositions,
            limit: EXACT_TAIL_MAX_COMPOSITIONS,
        });
    }
    let lambda = n as f64 / n_cells as f64;
    let mut mean = 0.0f64;
    for_each_composition(n, n_cells as usize, |counts| {
        mean += multinomial_pmf(counts, n, p) * statistic_value(counts, h, lambda);
    });
    Ok(mean)
}

/// Tuning for the splitting estimator.
#[derive(Debug, Clone, Copy)]
pub struct SplittingConfig {
    /// Independent splitting runs; the interval comes from their spread.
    pub replications: usize,
    /// Walkers per run; `None` derives from the budget.
    pub walkers: Option<usize>,
    /// Markov moves applied to each walker per level; `None` -> `max(16, 2N)`.
    pub moves_per_walker: Option<usize>,
    /// Safety cap on adaptive levels.
    pub max_levels: usize,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        Self {
            replications: 24,
            walkers: None,
            moves_per_walker: None,
            max_levels: 20_000,
        }
    }
}

const NAIVE_MIN_HITS: u64 = 10;

/// Estimates `P{S ≥ threshold}` (upper tail) under `M(n, p)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_tail(
    n: u64,
    n_cells: u64,
    p: &[f64],
    h: &HFunction,
    threshold: f64,
    method: Method,
    budget: u64,
    seed: u64,
) -> Result<TailEstimate> {
    estimate_tail_with(
        n,
        n_cells,
        p,
        h,
        threshold,
        TailSide::Upper,
        method,
        budget,
        seed,
        &SplittingConfig::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_tail_with(
    n: u64,
    n_cells: u64,
    p: &[f64],
    h: &HFunction,
    threshold: f64,
    side: TailSide,
    method: Method,
    budget: u64,
    seed: u64,
    config: &SplittingConfig,
) -> Result<TailEstimate> {
    validate_probabilities(p)?;
    if p.len() != n_cells as usize {
        return Err(Error::InvalidProbabilities {
            reason: format!("{} probabilities for {} cells", p.len(), n_cells),
        });
    }
    match method {
        Method::Exact => exact_tail_with(n, n_cells, p, h, threshold, side, Inequality::NonStrict),
        Method::Naive => naive_tail(n, n_cells, p, h, threshold, side, budget, seed),
        Method::Splitting => splitting_tail(n, n_cells, p, h, threshold, side, budget, seed, config),
    }
}

#[allow(clippy::too_many_arguments)]
fn naive_tail(
    n: u64,
    n_cells: u64,
    p: &[f64],
    h: &HFunction,
    threshold: f64,
    side: TailSide,
    budget: u64,
    seed: u64,
) -> Result<TailEstimate> {
    let draws = budget.max(1);
    let lambda = n as f64 / n_cells as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut counts = vec![0u64; p.len()];
    let mut hits = 0u64;
    for _ in 0..draws {
        sample_multinomial_into(n, p, &mut rng, &mut counts);
        if event_holds(
            statistic_value(&counts, h, lambda),
            threshold,
            side,
            Inequality::NonStrict,
        ) {
            hits += 1;
        }
    }
    if hits < NAIVE_MIN_HITS {
        return Err(Error::TooFewHits {
            hits,
            budget: draws,
            needed: NAIVE_MIN_HITS,
        });
    }
    let p_hat = hits as f64 / draws as f64;
    let (ci_low, ci_high) = wilson_interval(hits, draws);
    Ok(TailEstimate {
        p_hat,
        log_p_hat: p_hat.ln(),
        ci_low,
        ci_high,
        method: Method::Naive,
        kind: EstimateKind::Point,
        replicates: draws,
        seed,
    })
}

#[allow(clippy::too_many_arguments)]
fn splitting_tail(
    n: u64,
    n_cells: u64,
    p: &[f64],
    h: &HFunction,
    threshold: f64,
    side: TailSide,
    budget: u64,
    seed: u64,
    config: &SplittingConfig,
) -> Result<TailEstimate> {
    let reps = config.replications.max(2);
    // the population floor keeps the finite-population bias of adaptive
    // levels (order 1/walkers) inside the replication interval, which
    // shrinks only like 1/√(walkers·replications)
    let walkers = config
        .walkers
        .unwrap_or_else(|| ((budget as usize / reps) / 8).clamp(128, 16384));
    let moves = config
        .moves_per_walker
        .unwrap_or_else(|| (2 * n_cells as usize).max(16));
    let lambda = n as f64 / n_cells as f64;
    let eval = |c: u64, l: f64| h.eval(c, l);
    let run = splitting::SplitRun {
        n,
        p,
        lambda,
        eval: &eval,
        threshold,
        side,
        walkers,
        moves_per_walker: moves,
        max_levels: config.max_levels,
    };
    let master = derive_seed(seed, 2);
    let estimates: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(master);
            rng.set_stream(rep as u64 + 1);
            run.run(&mut rng).unwrap_or(0.0)
        })
        .collect();

    let r = estimates.len() as f64;
    let p_hat = estimates.iter().sum::<f64>() / r;
    if p_hat == 0.0 {
        // zero hits everywhere: report the resolution floor as an upper bound
        let bound = 1.0 / (reps as f64 * walkers as f64);
        return Ok(TailEstimate {
            p_hat: bound,
            log_p_hat: bound.ln(),
            ci_low: 0.0,
            ci_high: bound,
            method: Method::Splitting,
            kind: EstimateKind::UpperBound,
            replicates: reps as u64,
            seed,
        });
    }
    let t = t_quantile_975(reps - 1);
    let (ci_low, ci_high) = if estimates.iter().all(|&e| e > 0.0) {
        // multiplicative interval from the replication spread of log p̂
        let logs: Vec<f64> = estimates.iter().map(|&e| e.ln()).collect();
        let mean_log = logs.iter().sum::<f64>() / r;
        let var_log = logs.iter().map(|&l| (l - mean_log).powi(2)).sum::<f64>() / (r - 1.0);
        let half = t * (var_log / r).sqrt();
        (p_hat * (-half).exp(), p_hat * half.exp())
    } else {
        let var = estimates.iter().map(|&e| (e - p_hat).powi(2)).sum::<f64>() / (r - 1.0);
        let half = t * (var / r).sqrt();
        ((p_hat - half).max(0.0), p_hat + half)
    };
    Ok(TailEstimate {
        p_hat,
        log_p_hat: p_hat.ln(),
        ci_low,
        ci_high: ci_high.min(1.0),
        method: Method::Splitting,
        kind: EstimateKind::Point,
        replicates: reps as u64,
        seed,
    })
}

/// How the slope threshold `E₁S` (or `E₀S` for β) is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Poisson-approximation moments and the leading-order shift `x_n(h)`.
    ApproxShift,
    /// Exact enumeration of both hypotheses (oracle scale only).
    ExactOracle,
    /// Empirical mean of the statistic under the other hypothesis.
    Empirical { reps: u64 },
}

/// One slope-experiment definition.
#[derive(Debug, Clone)]
pub struct SlopePoint {
    pub n: u64,
    pub n_cells: u64,
    pub h: HFunction,
    pub family: FamilyTag,
}

/// Estimation options shared by the slope and power runs.
#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub method: Method,
    pub budget: u64,
    pub seed: u64,
    pub threshold_mode: ThresholdMode,
    pub splitting: SplittingConfig,
}

impl EstimateOptions {
    pub fn new(method: Method, budget: u64, seed: u64) -> Self {
        Self {
            method,
            budget,
            seed,
            threshold_mode: ThresholdMode::ApproxShift,
            splitting: SplittingConfig::default(),
        }
    }
}

/// Outcome of one slope estimation at one `(n, N, δ, test)` point.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentPoint {
    pub n: u64,
    pub n_cells: u64,
    pub lambda: f64,
    pub delta: f64,
    pub test: String,
    pub family: FamilyTag,
    pub threshold: f64,
    pub threshold_mode: ThresholdMode,
    pub slope_empirical: f64,
    pub slope_predicted: Option<f64>,
    pub regime: Option<SlopeRegime>,
    pub estimate: TailEstimate,
}

fn test_id_for(h: &HFunction) -> TestId {
    match h.name() {
        "chi2" => TestId::Chi2,
        "lr" => TestId::Lr,
        _ => TestId::Generic(h.clone()),
    }
}

fn empirical_mean(
    n: u64,
    p: &[f64],
    h: &HFunction,
    lambda: f64,
    reps: u64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let mut counts = vec![0u64; p.len()];
    let mut acc = 0.0;
    for _ in 0..reps.max(1) {
        sample_multinomial_into(n, p, &mut rng, &mut counts);
        acc += statistic_value(&counts, h, lambda);
    }
    acc / reps.max(1) as f64
}

fn within_oracle_range(n: u64, n_cells: u64) -> bool {
    n <= EXACT_ORACLE_MAX_N && n_cells <= EXACT_ORACLE_MAX_CELLS
}

/// Empirical α-slope `-log P₀{S ≥ E₁S}` with the threshold from the
/// configured mode, alongside the theoretical prediction when one exists.
pub fn estimate_alpha_slope(
    point: &SlopePoint,
    spec: &AlternativeSpec,
    opts: &EstimateOptions,
) -> Result<ExperimentPoint> {
    slope_impl(point, spec, opts, TailSide::Upper)
}

/// Empirical β-slope `-log P₁{S ≤ E₀S}` (hypotheses swapped, left tail).
pub fn estimate_beta_slope(
    point: &SlopePoint,
    spec: &AlternativeSpec,
    opts: &EstimateOptions,
) -> Result<ExperimentPoint> {
    slope_impl(point, spec, opts, TailSide::Lower)
}

fn slope_impl(
    point: &SlopePoint,
    spec: &AlternativeSpec,
    opts: &EstimateOptions,
    side: TailSide,
) -> Result<ExperimentPoint> {
    let (n, n_cells) = (point.n, point.n_cells);
    let lambda = n as f64 / n_cells as f64;
    let delta = spec.schedule().value(n, n_cells)?;
    let p_null = vec![1.0 / n_cells as f64; n_cells as usize];
    let p_alt = cell_probabilities(spec, n, n_cells)?;

    // α: threshold is the alternative mean, sampling under the null;
    // β: threshold is the null mean, sampling under the alternative.
    let (threshold, sampling_p): (f64, &[f64]) = match side {
        TailSide::Upper => {
            let thr = match opts.threshold_mode {
                ThresholdMode::ApproxShift => {
                    let (mean0, var0) = null_moments(&point.h, n, n_cells)?;
                    mean0 + shift_xn(&point.h, n, n_cells, delta)? * var0.sqrt()
                }
                ThresholdMode::ExactOracle => {
                    if !within_oracle_range(n, n_cells) {
                        return Err(Error::InstanceTooLarge {
                            compositions: composition_count(n, n_cells),
                            limit: composition_count(EXACT_ORACLE_MAX_N, EXACT_ORACLE_MAX_CELLS),
                        });
                    }
                    exact_statistic_mean(n, n_cells, &p_alt, &point.h)?
                }
                ThresholdMode::Empirical { reps } => {
                    empirical_mean(n, &p_alt, &point.h, lambda, reps, opts.seed)
                }
            };
            (thr, &p_null)
        }
        TailSide::Lower => {
            let thr = match opts.threshold_mode {
                ThresholdMode::ApproxShift => null_moments(&point.h, n, n_cells)?.0,
                ThresholdMode::ExactOracle => {
                    let (m, _) = null_moments_exact(&point.h, n, n_cells)?;
                    m
                }
                ThresholdMode::Empirical { reps } => {
                    empirical_mean(n, &p_null, &point.h, lambda, reps, opts.seed)
                }
            };
            (thr, &p_alt)
        }
    };

    let estimate = estimate_tail_with(
        n,
        n_cells,
        sampling_p,
        &point.h,
        threshold,
        side,
        opts.method,
        opts.budget,
        opts.seed,
        &opts.splitting,
    )?;
    let slope_empirical = -estimate.log_p_hat;

    let (slope_predicted, regime) =
        match predict_alpha_slope(&test_id_for(&point.h), point.family, n, n_cells, delta) {
            Ok(pred) => (pred.value, Some(pred.regime)),
            Err(_) => (None, None),
        };

    Ok(ExperimentPoint {
        n,
        n_cells,
        lambda,
        delta,
        test: point.h.name().to_string(),
        family: point.family,
        threshold,
        threshold_mode: opts.threshold_mode,
        slope_empirical,
        slope_predicted,
        regime,
        estimate,
    })
}

/// Power `P₁{Ŝ > x_n(h) + c}` of the level-matched h-test at critical
/// offset `c`; approaches `Φ(-c)` in the CLT regime.
pub fn power_at_critical(
    point: &SlopePoint,
    spec: &AlternativeSpec,
    c: f64,
    budget: u64,
    seed: u64,
) -> Result<f64> {
    if c == f64::INFINITY {
        return Ok(0.0);
    }
    if c == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    if c.is_nan() {
        return Err(Error::OutOfDomain {
            name: "c",
            value: c,
            domain: "finite reals",
        });
    }
    let (n, n_cells) = (point.n, point.n_cells);
    let lambda = n as f64 / n_cells as f64;
    let delta = spec.schedule().value(n, n_cells)?;
    let (mean0, var0) = null_moments(&point.h, n, n_cells)?;
    let x = shift_xn(&point.h, n, n_cells, delta)?;
    let threshold = mean0 + (x + c) * var0.sqrt();
    let p_alt = cell_probabilities(spec, n, n_cells)?;

    let draws = budget.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 4));
    let mut counts = vec![0u64; p_alt.len()];
    let mut hits = 0u64;
    for _ in 0..draws {
        sample_multinomial_into(n, &p_alt, &mut rng, &mut counts);
        if statistic_value(&counts, &point.h, lambda) > threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alternatives::{AlternativeSpec, DeltaSchedule, DirectionFunction};
    use approx::assert_abs_diff_eq;

    fn uniform(n_cells: usize) -> Vec<f64> {
        vec![1.0 / n_cells as f64; n_cells]
    }

    #[test]
    fn multinomial_edge_cases() {
        let g = sample_multinomial(0, &uniform(3), 7).unwrap();
        assert_eq!(g.counts(), &[0, 0, 0]);
        let g = sample_multinomial(9, &[1.0, 0.0, 0.0], 7).unwrap();
        assert_eq!(g.counts(), &[9, 0, 0]);
        assert!(sample_multinomial(3, &[0.5, 0.4], 7).is_err());
    }

    #[test]
    fn multinomial_counts_near_expectation() {
        let n = 1_000_000u64;
        let cells = 100usize;
        let g = sample_multinomial(n, &uniform(cells), 42).unwrap();
        assert_eq!(g.n(), n);
        let sigma = (n as f64 * 0.01 * 0.99).sqrt();
        for &c in g.counts() {
            assert!(
                (c as f64 - 10_000.0).abs() < 6.0 * sigma,
                "count {c} too far from 10⁴"
            );
        }
    }

    #[test]
    fn exact_tail_hand_value() {
        let h = HFunction::chi_square();
        let est = exact_tail(4, 2, &uniform(2), &h, 4.0).unwrap();
        assert_eq!(est.p_hat, 0.125);
        assert_eq!((est.ci_low, est.ci_high), (0.125, 0.125));
        assert_eq!(
            exact_tail(4, 2, &uniform(2), &h, 0.0).unwrap().p_hat,
            1.0
        );
        assert_eq!(
            exact_tail(4, 2, &uniform(2), &h, f64::INFINITY).unwrap().p_hat,
            0.0
        );
    }

    #[test]
    fn exact_tail_strictness_matters_on_the_lattice() {
        let h = HFunction::chi_square();
        let non_strict = exact_tail(4, 2, &uniform(2), &h, 4.0).unwrap().p_hat;
        let strict = exact_tail_with(
            4,
            2,
            &uniform(2),
            &h,
            4.0,
            TailSide::Upper,
            Inequality::Strict,
        )
        .unwrap()
        .p_hat;
        assert!(strict < non_strict);
        assert_eq!(strict, 0.0);
    }

    #[test]
    fn exact_tail_too_large_rejected() {
        let h = HFunction::chi_square();
        assert!(matches!(
            exact_tail(1000, 20, &uniform(20), &h, 1.0),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn naive_and_splitting_cover_exact() {
        let h = HFunction::chi_square();
        let p = uniform(2);
        let naive = estimate_tail(4, 2, &p, &h, 4.0, Method::Naive, 40_000, 11).unwrap();
        assert!(naive.ci_low <= 0.125 && 0.125 <= naive.ci_high);
        assert!(naive.ci_low <= naive.p_hat && naive.p_hat <= naive.ci_high);

        let split = estimate_tail(4, 2, &p, &h, 4.0, Method::Splitting, 40_000, 11).unwrap();
        assert!(
            split.ci_low <= 0.125 && 0.125 <= split.ci_high,
            "splitting CI [{}, {}] misses 0.125",
            split.ci_low,
            split.ci_high
        );
    }

    #[test]
    fn estimates_are_seed_deterministic() {
        let h = HFunction::log_likelihood_ratio();
        let p = uniform(3);
        let a = estimate_tail(9, 3, &p, &h, 2.0, Method::Naive, 5_000, 5).unwrap();
        let b = estimate_tail(9, 3, &p, &h, 2.0, Method::Naive, 5_000, 5).unwrap();
        assert_eq!(a, b);
        let a = estimate_tail(9, 3, &p, &h, 5.0, Method::Splitting, 20_000, 5).unwrap();
        let b = estimate_tail(9, 3, &p, &h, 5.0, Method::Splitting, 20_000, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn naive_refuses_rare_events() {
        let h = HFunction::chi_square();
        // P{χ² ≥ 16} = P{η₁ ∈ {0,4}}… with threshold 16 only impossible values
        let err = estimate_tail(4, 2, &uniform(2), &h, 16.0, Method::Naive, 2_000, 3);
        assert!(matches!(err, Err(Error::TooFewHits { .. })));
    }

    #[test]
    fn splitting_reports_upper_bound_on_unreachable_events() {
        let h = HFunction::chi_square();
        let est = estimate_tail(
            4,
            2,
            &uniform(2),
            &h,
            1e9, // far above the maximal statistic value
            Method::Splitting,
            20_000,
            9,
        )
        .unwrap();
        assert_eq!(est.kind, EstimateKind::UpperBound);
        assert_eq!(est.ci_low, 0.0);
        assert!(est.p_hat > 0.0);
    }

    #[test]
    fn chi_square_null_mean_matches_enumeration() {
        // empirical mean of χ² under H₀ vs N-1 at 4σ/√reps
        let h = HFunction::chi_square();
        let n = 200u64;
        let cells = 8usize;
        let reps = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut counts = vec![0u64; cells];
        let p = uniform(cells);
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..reps {
            sample_multinomial_into(n, &p, &mut rng, &mut counts);
            let s = statistic_value(&counts, &h, n as f64 / cells as f64);
            acc += s;
            acc2 += s * s;
        }
        let mean = acc / reps as f64;
        let var = acc2 / reps as f64 - mean * mean;
        let tol = 4.0 * (var / reps as f64).sqrt();
        assert!(
            (mean - 7.0).abs() < tol,
            "mean {mean} vs 7 ± {tol}"
        );
    }

    fn oracle_spec(delta: f64) -> AlternativeSpec {
        AlternativeSpec::cell_contrast(
            vec![1.0, -1.0, 1.0, -1.0],
            DeltaSchedule::Fixed { value: delta },
        )
        .unwrap()
    }

    #[test]
    fn alpha_slope_exact_oracle_point() {
        let point = SlopePoint {
            n: 10,
            n_cells: 4,
            h: HFunction::chi_square(),
            family: FamilyTag::Fixed,
        };
        let spec = oracle_spec(0.4);
        let mut opts = EstimateOptions::new(Method::Exact, 0, 0);
        opts.threshold_mode = ThresholdMode::ExactOracle;
        let out = estimate_alpha_slope(&point, &spec, &opts).unwrap();
        // slope must equal -log of the exact tail at the exact E₁ threshold
        let p_alt = cell_probabilities(&spec, 10, 4).unwrap();
        let thr = exact_statistic_mean(10, 4, &p_alt, &point.h).unwrap();
        let direct = exact_tail(10, 4, &uniform(4), &point.h, thr).unwrap();
        assert_abs_diff_eq!(out.slope_empirical, -direct.p_hat.ln(), epsilon = 1e-12);
        assert_eq!(out.threshold, thr);
        // no prediction for the fixed-δ regime
        assert!(out.slope_predicted.is_none());
    }

    #[test]
    fn beta_slope_exact_oracle_point() {
        let point = SlopePoint {
            n: 10,
            n_cells: 4,
            h: HFunction::chi_square(),
            family: FamilyTag::Fixed,
        };
        let spec = oracle_spec(0.4);
        let mut opts = EstimateOptions::new(Method::Exact, 0, 0);
        opts.threshold_mode = ThresholdMode::ExactOracle;
        let out = estimate_beta_slope(&point, &spec, &opts).unwrap();
        let p_alt = cell_probabilities(&spec, 10, 4).unwrap();
        let (mean0, _) = null_moments_exact(&point.h, 10, 4).unwrap();
        let direct = exact_tail_with(
            10,
            4,
            &p_alt,
            &point.h,
            mean0,
            TailSide::Lower,
            Inequality::NonStrict,
        )
        .unwrap();
        assert_abs_diff_eq!(out.slope_empirical, -direct.p_hat.ln(), epsilon = 1e-12);
    }

    #[test]
    fn null_slope_is_near_log_two() {
        // δ = 0: threshold at the null mean, P ≈ 1/2
        let point = SlopePoint {
            n: 20_000,
            n_cells: 100,
            h: HFunction::chi_square(),
            family: FamilyTag::Fixed,
        };
        let spec = AlternativeSpec::density(
            DirectionFunction::cosine(1).unwrap(),
            DeltaSchedule::Fixed { value: 0.0 },
        );
        let opts = EstimateOptions::new(Method::Naive, 20_000, 31);
        let out = estimate_alpha_slope(&point, &spec, &opts).unwrap();
        assert!(
            (out.slope_empirical - std::f64::consts::LN_2).abs() < 0.15,
            "slope {}",
            out.slope_empirical
        );
        // hypotheses coincide: β-slope close to α-slope once the common
        // threshold is the empirical mean rather than the Poisson proxy
        let mut sym = opts.clone();
        sym.threshold_mode = ThresholdMode::Empirical { reps: 5_000 };
        let alpha = estimate_alpha_slope(&point, &spec, &sym).unwrap();
        let beta = estimate_beta_slope(&point, &spec, &sym).unwrap();
        assert!(
            (beta.slope_empirical - alpha.slope_empirical).abs() < 0.15,
            "α {} vs β {}",
            alpha.slope_empirical,
            beta.slope_empirical
        );
    }

    #[test]
    fn power_edges() {
        let point = SlopePoint {
            n: 400,
            n_cells: 4,
            h: HFunction::chi_square(),
            family: FamilyTag::Fixed,
        };
        let spec = oracle_spec(0.1);
        assert_eq!(
            power_at_critical(&point, &spec, f64::INFINITY, 100, 1).unwrap(),
            0.0
        );
        assert!(power_at_critical(&point, &spec, f64::NAN, 100, 1).is_err());
        let p = power_at_critical(&point, &spec, 0.0, 2_000, 1).unwrap();
        assert!(p > 0.2 && p < 0.8, "power {p} implausible at c = 0");
    }
}
