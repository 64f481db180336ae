//! Contiguous alternatives `f_n(x) = 1 + δ(n)·l_n(x)` on `[0, 1]`:
//! direction functions, δ(n) schedules, cell probabilities, rate-family
//! classification and the strip condition on `(n, N)`.

use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, MonotoneCubic};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Quadrature tolerances for the (1.1) constraints on `l`.
const MEAN_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-8;
/// Per-cell quadrature tolerance for cell probabilities.
const CELL_TOL: f64 = 1e-12;
/// Grid size for cdf tabulation before inversion.
const CDF_GRID: usize = 1 << 16;

/// A direction `l` on `[0, 1]` with `∫l = 0` and `‖l‖₂ = 1`.
#[derive(Clone)]
pub struct DirectionFunction {
    name: String,
    sup_bound: f64,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for DirectionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirectionFunction")
            .field("name", &self.name)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl DirectionFunction {
    /// `l(x) = √2·cos(2πkx)` for integer frequency `k ≥ 1`; satisfies the
    /// constraints exactly with sup-norm `√2`.
    pub fn cosine(frequency: u32) -> Result<Self> {
        if frequency == 0 {
            return Err(Error::InvalidDirection {
                reason: "cosine frequency must be ≥ 1".into(),
            });
        }
        let k = frequency as f64;
        Self::custom(
            &format!("cos-{frequency}"),
            std::f64::consts::SQRT_2,
            move |x| std::f64::consts::SQRT_2 * (2.0 * std::f64::consts::PI * k * x).cos(),
        )
    }

    /// Wraps an arbitrary direction and verifies the (1.1) constraints by
    /// quadrature.
    pub fn custom<F>(name: &str, sup_bound: f64, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mean = adaptive_simpson(&f, 0.0, 1.0, 1e-13);
        if mean.abs() > MEAN_TOL {
            return Err(Error::InvalidDirection {
                reason: format!("∫l = {mean} exceeds tolerance {MEAN_TOL}"),
            });
        }
        let norm2 = adaptive_simpson(&|x| f(x) * f(x), 0.0, 1.0, 1e-13);
        if (norm2 - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidDirection {
                reason: format!("∫l² = {norm2} not 1 within {NORM_TOL}"),
            });
        }
        Ok(Self {
            name: name.into(),
            sup_bound,
            f: Arc::new(f),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
}

/// How `δ(n)` evolves with the sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DeltaSchedule {
    /// `δ(n) = (n·λ_n²)^(-γ)`, `γ > 0`.
    PowerLaw { gamma: f64 },
    /// Pitman rate `δ(n) = (n·λ_n)^(-1/4)`.
    Pitman,
    /// Explicit `(n, δ)` pairs; evaluation requires an exact `n` match.
    Explicit { values: Vec<(u64, f64)> },
    /// Constant δ (the Bahadur/Hodges-Lehmann regime; classified only).
    Fixed { value: f64 },
}

impl DeltaSchedule {
    /// δ at `(n, N)` with `λ = n/N`.
    pub fn value(&self, n: u64, n_cells: u64) -> Result<f64> {
        if n == 0 || n_cells == 0 {
            return Err(Error::DegenerateCounts);
        }
        let lambda = n as f64 / n_cells as f64;
        match self {
            DeltaSchedule::PowerLaw { gamma } => {
                if gamma.is_nan() || *gamma <= 0.0 {
                    return Err(Error::OutOfDomain {
                        name: "gamma",
                        value: *gamma,
                        domain: "(0, ∞)",
                    });
                }
                Ok((n as f64 * lambda * lambda).powf(-gamma))
            }
            DeltaSchedule::Pitman => Ok((n as f64 * lambda).powf(-0.25)),
            DeltaSchedule::Explicit { values } => values
                .iter()
                .find(|(m, _)| *m == n)
                .map(|(_, d)| *d)
                .ok_or(Error::MissingDelta { n }),
            DeltaSchedule::Fixed { value } => Ok(*value),
        }
    }
}

/// Standalone form of [`DeltaSchedule::value`].
pub fn delta_value(schedule: &DeltaSchedule, n: u64, n_cells: u64) -> Result<f64> {
    schedule.value(n, n_cells)
}

/// Rate regime of a schedule along an `(n, N)` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilyTag {
    /// δ(n)·(nλ)^{1/4} → 0: no test has power.
    Undetectable,
    /// δ(n)·(nλ)^{1/4} asymptotically constant.
    Pitman,
    /// δ(n) = o((n·max(1, λ²))^{-1/6}).
    JO,
    /// Power law (nλ²)^{-γ} with 1/8 < γ ≤ 1/6.
    JGamma { gamma: f64 },
    /// δ(n) ≥ (nλ²)^{-1/8} eventually.
    JBar18,
    /// δ constant.
    Fixed,
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyTag::Undetectable => write!(f, "undetectable"),
            FamilyTag::Pitman => write!(f, "pitman"),
            FamilyTag::JO => write!(f, "j-o"),
            FamilyTag::JGamma { gamma } => write!(f, "j-gamma({gamma})"),
            FamilyTag::JBar18 => write!(f, "j-bar-1/8"),
            FamilyTag::Fixed => write!(f, "fixed"),
        }
    }
}

/// Trend of a positive sequence.
///
/// A trend needs monotone steps and a total end-to-end movement of at
/// least `1.05²`; grid refinement keeps the endpoints and therefore the
/// verdict.  Flat sequences stay inside the step band and the total band.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Trend {
    Decays,
    Flat,
    Grows,
    Mixed,
}

const STEP_BAND: f64 = 1.05;
const TOTAL_FACTOR: f64 = 1.05 * 1.05;

fn detect_trend(values: &[f64]) -> Trend {
    let total = values[values.len() - 1] / values[0];
    let mut nonincreasing = true;
    let mut nondecreasing = true;
    let mut in_step_band = true;
    for w in values.windows(2) {
        let ratio = w[1] / w[0];
        if ratio > 1.0 {
            nonincreasing = false;
        }
        if ratio < 1.0 {
            nondecreasing = false;
        }
        if !(1.0 / STEP_BAND..=STEP_BAND).contains(&ratio) {
            in_step_band = false;
        }
    }
    if nonincreasing && total <= 1.0 / TOTAL_FACTOR {
        Trend::Decays
    } else if nondecreasing && total >= TOTAL_FACTOR {
        Trend::Grows
    } else if in_step_band && (1.0 / TOTAL_FACTOR..=TOTAL_FACTOR).contains(&total) {
        Trend::Flat
    } else {
        Trend::Mixed
    }
}

/// Classifies a schedule against the rate families by numeric trend
/// detection along an increasing `(n, N)` grid of at least three points.
///
/// Checks run in order: constant δ, the (nλ)^{1/4} detectability product,
/// the J_o defining ratio, the power-law γ window, and the J̄_{1/8}
/// threshold.  An ambiguous trend is an error, never a silent guess.
pub fn classify_family(schedule: &DeltaSchedule, grid: &[(u64, u64)]) -> Result<FamilyTag> {
    if grid.len() < 3 {
        return Err(Error::Unclassified {
            reason: format!("grid has {} points, need ≥ 3", grid.len()),
        });
    }
    for w in grid.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Unclassified {
                reason: "grid sample sizes must increase".into(),
            });
        }
    }
    let deltas: Vec<f64> = grid
        .iter()
        .map(|&(n, nc)| schedule.value(n, nc))
        .collect::<Result<_>>()?;
    let lambdas: Vec<f64> = grid.iter().map(|&(n, nc)| n as f64 / nc as f64).collect();

    let spread = deltas.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread <= 1.0 + 1e-12 {
        return Ok(FamilyTag::Fixed);
    }

    let detect: Vec<f64> = grid
        .iter()
        .zip(&deltas)
        .zip(&lambdas)
        .map(|(((n, _), d), l)| d * (*n as f64 * l).powf(0.25))
        .collect();
    match detect_trend(&detect) {
        Trend::Decays => return Ok(FamilyTag::Undetectable),
        Trend::Flat => return Ok(FamilyTag::Pitman),
        Trend::Grows => {}
        Trend::Mixed => {
            return Err(Error::Unclassified {
                reason: format!("δ(nλ)^¼ trend is ambiguous: {detect:?}"),
            })
        }
    }

    let jo_ratio: Vec<f64> = grid
        .iter()
        .zip(&deltas)
        .zip(&lambdas)
        .map(|(((n, _), d), l)| d * (*n as f64 * l.max(1.0).powi(2)).powf(1.0 / 6.0))
        .collect();
    if detect_trend(&jo_ratio) == Trend::Decays {
        return Ok(FamilyTag::JO);
    }

    if let DeltaSchedule::PowerLaw { gamma } = schedule {
        if *gamma > 1.0 / 8.0 && *gamma <= 1.0 / 6.0 {
            return Ok(FamilyTag::JGamma { gamma: *gamma });
        }
    }

    let jbar: Vec<f64> = grid
        .iter()
        .zip(&deltas)
        .zip(&lambdas)
        .map(|(((n, _), d), l)| d * (*n as f64 * l * l).powf(1.0 / 8.0))
        .collect();
    let tail = &jbar[jbar.len() / 2..];
    if tail.iter().all(|&w| w >= 1.0) {
        return Ok(FamilyTag::JBar18);
    }

    Err(Error::Unclassified {
        reason: format!(
            "intermediate schedule fits no family: J_o ratio {jo_ratio:?}, J̄ ratio {jbar:?}"
        ),
    })
}

/// Strip condition report for Theorem 2.1 b's `(n, N)` region
/// `n^{(1-6γ)/(1-4γ)} ≪ N ≪ n^{3(1-4γ)/4(1-2γ)}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StripReport {
    pub gamma: f64,
    pub n: u64,
    pub n_cells: u64,
    pub lower_exponent: f64,
    pub upper_exponent: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// `N / n^lower`; how far above the lower edge.
    pub lower_margin: f64,
    /// `n^upper / N`; how far below the upper edge.
    pub upper_margin: f64,
    pub inside: bool,
    /// Both margins at least `slack` (finite-n proxy for `≪`).
    pub inside_with_slack: bool,
    pub slack: f64,
}

pub const DEFAULT_STRIP_SLACK: f64 = 4.0;

pub fn strip_condition(gamma: f64, n: u64, n_cells: u64, slack: f64) -> Result<StripReport> {
    if gamma.is_nan() || gamma <= 1.0 / 8.0 || gamma > 1.0 / 6.0 {
        return Err(Error::GammaOutOfRange { gamma });
    }
    let lower_exponent = (1.0 - 6.0 * gamma) / (1.0 - 4.0 * gamma);
    let upper_exponent = 3.0 * (1.0 - 4.0 * gamma) / (4.0 * (1.0 - 2.0 * gamma));
    let nf = n as f64;
    let lower_bound = nf.powf(lower_exponent);
    let upper_bound = nf.powf(upper_exponent);
    let cells = n_cells as f64;
    let lower_margin = cells / lower_bound;
    let upper_margin = upper_bound / cells;
    Ok(StripReport {
        gamma,
        n,
        n_cells,
        lower_exponent,
        upper_exponent,
        lower_bound,
        upper_bound,
        lower_margin,
        upper_margin,
        inside: lower_margin > 1.0 && upper_margin > 1.0,
        inside_with_slack: lower_margin >= slack && upper_margin >= slack,
        slack,
    })
}

/// An alternative: either a smooth density `1 + δ(n)·l(x)` or a direct
/// multinomial cell contrast `p_m = N⁻¹(1 + δ(n)·d_m)`.
#[derive(Debug, Clone)]
pub enum AlternativeSpec {
    Density {
        direction: DirectionFunction,
        schedule: DeltaSchedule,
    },
    CellContrast {
        /// `d_m` with `Σ d_m = 0`.
        contrast: Vec<f64>,
        schedule: DeltaSchedule,
    },
}

impl AlternativeSpec {
    pub fn density(direction: DirectionFunction, schedule: DeltaSchedule) -> Self {
        AlternativeSpec::Density {
            direction,
            schedule,
        }
    }

    pub fn cell_contrast(contrast: Vec<f64>, schedule: DeltaSchedule) -> Result<Self> {
        let mean = contrast.iter().sum::<f64>() / contrast.len().max(1) as f64;
        let max_abs = contrast.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
        if contrast.is_empty() || mean.abs() > 1e-10 * (1.0 + max_abs) {
            return Err(Error::InvalidDirection {
                reason: format!("contrast must sum to zero, mean is {mean}"),
            });
        }
        Ok(AlternativeSpec::CellContrast { contrast, schedule })
    }

    pub fn schedule(&self) -> &DeltaSchedule {
        match self {
            AlternativeSpec::Density { schedule, .. } => schedule,
            AlternativeSpec::CellContrast { schedule, .. } => schedule,
        }
    }

    /// Sup-norm of the direction part, for the non-negativity guard.
    fn sup_bound(&self) -> f64 {
        match self {
            AlternativeSpec::Density { direction, .. } => direction.sup_bound(),
            AlternativeSpec::CellContrast { contrast, .. } => {
                contrast.iter().fold(0.0_f64, |a, d| a.max(d.abs()))
            }
        }
    }

    fn guard_nonnegative(&self, delta: f64) -> Result<()> {
        let product = delta * self.sup_bound();
        if product > 1.0 {
            return Err(Error::NegativeDensity { product });
        }
        Ok(())
    }
}

/// Density value `1 + δ(n)·l(x)` at `x`; cell-contrast specs evaluate their
/// piecewise-constant density.
pub fn eval_density(spec: &AlternativeSpec, n: u64, n_cells: u64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::SampleOutOfRange { index: 0, value: x });
    }
    let delta = spec.schedule().value(n, n_cells)?;
    spec.guard_nonnegative(delta)?;
    match spec {
        AlternativeSpec::Density { direction, .. } => Ok(1.0 + delta * direction.eval(x)),
        AlternativeSpec::CellContrast { contrast, .. } => {
            let cells = contrast.len();
            let m = ((x * cells as f64) as usize).min(cells - 1);
            Ok(1.0 + delta * contrast[m])
        }
    }
}

/// Cell probabilities `p_m = ∫_cell f_n` over the `N` equal cells.
///
/// Smooth densities are integrated per cell by adaptive Simpson at 1e-12
/// absolute tolerance; `δ = 0` short-circuits to the exact uniform vector.
pub fn cell_probabilities(spec: &AlternativeSpec, n: u64, n_cells: u64) -> Result<Vec<f64>> {
    if n_cells == 0 {
        return Err(Error::EmptyPartition);
    }
    let delta = spec.schedule().value(n, n_cells)?;
    spec.guard_nonnegative(delta)?;
    let cells = n_cells as usize;
    let p: Vec<f64> = match spec {
        AlternativeSpec::Density { direction, .. } => {
            if delta == 0.0 {
                vec![1.0 / cells as f64; cells]
            } else {
                (0..cells)
                    .map(|m| {
                        let a = m as f64 / cells as f64;
                        let b = (m + 1) as f64 / cells as f64;
                        adaptive_simpson(&|x| 1.0 + delta * direction.eval(x), a, b, CELL_TOL)
                    })
                    .collect()
            }
        }
        AlternativeSpec::CellContrast { contrast, .. } => {
            if contrast.len() != cells {
                return Err(Error::InvalidConfig {
                    reason: format!(
                        "contrast has {} entries for {} cells",
                        contrast.len(),
                        cells
                    ),
                });
            }
            contrast
                .iter()
                .map(|d| (1.0 + delta * d) / cells as f64)
                .collect()
        }
    };
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 * cells as f64 {
        return Err(Error::InvalidProbabilities {
            reason: format!("cell probabilities sum to {total}"),
        });
    }
    if let Some(idx) = p.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroExpectedCount { index: idx });
    }
    Ok(p)
}

/// `n` iid draws from the alternative density, deterministic per seed.
///
/// The cdf is tabulated on a 2¹⁶-point grid and inverted through a
/// monotone cubic interpolant; cell-contrast densities invert exactly.
pub fn sample_alternative(
    spec: &AlternativeSpec,
    n: u64,
    n_cells: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let delta = spec.schedule().value(n, n_cells)?;
    spec.guard_nonnegative(delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        AlternativeSpec::Density { direction, .. } => {
            if delta == 0.0 {
                return Ok((0..n).map(|_| rng.random::<f64>()).collect());
            }
            let mut xs = Vec::with_capacity(CDF_GRID + 1);
            let mut ys = Vec::with_capacity(CDF_GRID + 1);
            let step = 1.0 / CDF_GRID as f64;
            let dens = |x: f64| 1.0 + delta * direction.eval(x);
            let mut acc = 0.0;
            xs.push(0.0);
            ys.push(0.0);
            for i in 0..CDF_GRID {
                let a = i as f64 * step;
                let b = a + step;
                // Simpson on each grid interval keeps the tabulation error
                // far inside the 1e-9 probability budget
                acc += step / 6.0 * (dens(a) + 4.0 * dens(0.5 * (a + b)) + dens(b));
                xs.push(b);
                ys.push(acc);
            }
            let total = *ys.last().expect("nonempty tabulation");
            if total.is_nan() || total <= 0.0 || (total - 1.0).abs() > 1e-6 {
                return Err(Error::CdfInversion {
                    reason: format!("tabulated cdf mass is {total}"),
                });
            }
            for y in &mut ys {
                *y /= total;
            }
            let inverse = MonotoneCubic::new(xs, ys)?;
            Ok((0..n).map(|_| inverse.invert(rng.random::<f64>())).collect())
        }
        AlternativeSpec::CellContrast { contrast, .. } => {
            let cells = contrast.len();
            let p: Vec<f64> = contrast
                .iter()
                .map(|d| (1.0 + delta * d) / cells as f64)
                .collect();
            let mut cum = Vec::with_capacity(cells);
            let mut acc = 0.0;
            for &pi in &p {
                acc += pi;
                cum.push(acc);
            }
            Ok((0..n)
                .map(|_| {
                    let u = rng.random::<f64>();
                    let m = cum.partition_point(|&c| c < u).min(cells - 1);
                    let lo = if m == 0 { 0.0 } else { cum[m - 1] };
                    let within = ((u - lo) / p[m]).clamp(0.0, 1.0);
                    (m as f64 + within) / cells as f64
                })
                .collect())
        }
    }
}

/// Multinomial contrast `ε(N) = N⁻¹ Σ (N·p_m - 1)²` of a probability vector.
pub fn epsilon_contrast(p: &[f64]) -> f64 {
    let cells = p.len() as f64;
    p.iter().map(|&pm| (cells * pm - 1.0).powi(2)).sum::<f64>() / cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn cosine_spec(delta: f64) -> AlternativeSpec {
        AlternativeSpec::density(
            DirectionFunction::cosine(1).unwrap(),
            DeltaSchedule::Fixed { value: delta },
        )
    }

    #[test]
    fn direction_constraints_checked() {
        assert!(DirectionFunction::cosine(1).is_ok());
        assert!(DirectionFunction::cosine(3).is_ok());
        // sine of half period has nonzero mean
        assert!(DirectionFunction::custom("bad", 1.0, |x| x).is_err());
        // right mean, wrong norm
        assert!(
            DirectionFunction::custom("bad2", 1.0, |x| 3.0 * (x - 0.5)).is_err()
        );
    }

    #[test]
    fn density_values() {
        let spec = cosine_spec(0.1);
        for x in [0.0, 0.3, 0.77] {
            assert_eq!(eval_density(&cosine_spec(0.0), 10, 2, x).unwrap(), 1.0);
        }
        assert_relative_eq!(
            eval_density(&spec, 10, 2, 0.0).unwrap(),
            1.0 + 0.1 * std::f64::consts::SQRT_2,
            epsilon = 1e-12
        );
        assert_relative_eq!(eval_density(&spec, 10, 2, 0.25).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        for &delta in &[0.0, 0.1, 0.5] {
            let spec = cosine_spec(delta);
            let mass = adaptive_simpson(
                &|x| eval_density(&spec, 100, 4, x).unwrap(),
                0.0,
                1.0,
                1e-12,
            );
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn negative_density_rejected() {
        let spec = cosine_spec(0.9); // 0.9·√2 > 1
        assert!(matches!(
            eval_density(&spec, 10, 2, 0.5),
            Err(Error::NegativeDensity { .. })
        ));
    }

    #[test]
    fn cell_probabilities_examples() {
        let p = cell_probabilities(&cosine_spec(0.0), 16, 4).unwrap();
        assert_eq!(p, vec![0.25; 4]);

        // cosine integrates to zero over each half
        let p = cell_probabilities(&cosine_spec(0.1), 16, 2).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-12);

        let p = cell_probabilities(&cosine_spec(0.1), 16, 4).unwrap();
        // quadrature oracle value, equal to 1/4 + 0.1·√2/(2π)
        assert_abs_diff_eq!(p[0], 0.272_507_907_9, epsilon = 1e-10);
        assert_abs_diff_eq!(p[1], 0.227_492_092_1, epsilon = 1e-10);
        assert_abs_diff_eq!(p[2], 0.227_492_092_1, epsilon = 1e-10);
        assert_abs_diff_eq!(p[3], 0.272_507_907_9, epsilon = 1e-10);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        // analytic antiderivative cross-check on a finer partition
        let p = cell_probabilities(&cosine_spec(0.2), 64, 8).unwrap();
        for (m, &pm) in p.iter().enumerate() {
            let a = m as f64 / 8.0;
            let b = (m + 1) as f64 / 8.0;
            let tau = 2.0 * std::f64::consts::PI;
            let exact = (b - a)
                + 0.2 * std::f64::consts::SQRT_2 / tau * ((tau * b).sin() - (tau * a).sin());
            assert_abs_diff_eq!(pm, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn delta_schedule_values() {
        let power = DeltaSchedule::PowerLaw { gamma: 1.0 / 6.0 };
        assert_relative_eq!(power.value(4096, 64).unwrap(), 0.0625, epsilon = 1e-13);
        assert_relative_eq!(
            DeltaSchedule::Pitman.value(4096, 64).unwrap(),
            0.044_194_173_824_159_22,
            epsilon = 1e-12
        );
        let eighth = DeltaSchedule::PowerLaw { gamma: 1.0 / 8.0 };
        assert_relative_eq!(eighth.value(4096, 64).unwrap(), 0.125, epsilon = 1e-13);
        let explicit = DeltaSchedule::Explicit {
            values: vec![(10, 0.5), (20, 0.25)],
        };
        assert_eq!(explicit.value(20, 4).unwrap(), 0.25);
        assert!(matches!(
            explicit.value(15, 4),
            Err(Error::MissingDelta { n: 15 })
        ));
    }

    fn cube_root_grid() -> Vec<(u64, u64)> {
        (10..=20)
            .step_by(2)
            .map(|e| {
                let n = 1u64 << e;
                (n, (n as f64).powf(1.0 / 3.0).floor() as u64)
            })
            .collect()
    }

    #[test]
    fn classify_family_examples() {
        // γ = 1/4 with N = n^{1/3}: δ decays below the Pitman rate
        // (δ·(nλ)^{1/4} = n^{-1/6} → 0), so the detectability check fires.
        let tag = classify_family(&DeltaSchedule::PowerLaw { gamma: 0.25 }, &cube_root_grid())
            .unwrap();
        assert_eq!(tag, FamilyTag::Undetectable);

        let tag = classify_family(
            &DeltaSchedule::PowerLaw { gamma: 1.0 / 7.0 },
            &cube_root_grid(),
        )
        .unwrap();
        assert_eq!(
            tag,
            FamilyTag::JGamma {
                gamma: 1.0 / 7.0
            }
        );

        let tag = classify_family(
            &DeltaSchedule::PowerLaw { gamma: 0.1 },
            &cube_root_grid(),
        )
        .unwrap();
        assert_eq!(tag, FamilyTag::JBar18);

        // γ = 1/4 lands in J_o when N outgrows n slightly: λ → 0 keeps the
        // schedule above the Pitman rate while δ = o(n^{-1/6})
        let grid: Vec<(u64, u64)> = (16..=36)
            .step_by(4)
            .map(|e| {
                let n = 1u64 << e;
                (n, (n as f64).powf(1.1).floor() as u64)
            })
            .collect();
        let tag = classify_family(&DeltaSchedule::PowerLaw { gamma: 0.25 }, &grid).unwrap();
        assert_eq!(tag, FamilyTag::JO);
    }

    #[test]
    fn classify_family_basic_tags() {
        let grid = cube_root_grid();
        assert_eq!(
            classify_family(&DeltaSchedule::Fixed { value: 0.3 }, &grid).unwrap(),
            FamilyTag::Fixed
        );
        assert_eq!(
            classify_family(&DeltaSchedule::Pitman, &grid).unwrap(),
            FamilyTag::Pitman
        );
        assert!(matches!(
            classify_family(&DeltaSchedule::Pitman, &grid[..2]),
            Err(Error::Unclassified { .. })
        ));
    }

    #[test]
    fn classify_family_stable_under_refinement() {
        let rules: [(f64, std::ops::RangeInclusive<u32>, usize); 2] =
            [(1.0 / 3.0, 10..=20, 2), (1.1, 16..=36, 4)];
        for (exponent, range, step) in rules {
            let coarse: Vec<(u64, u64)> = range
                .clone()
                .step_by(step)
                .map(|e| {
                    let n = 1u64 << e;
                    (n, (n as f64).powf(exponent).floor() as u64)
                })
                .collect();
            let fine: Vec<(u64, u64)> = range
                .clone()
                .step_by(step / 2)
                .map(|e| {
                    let n = 1u64 << e;
                    (n, (n as f64).powf(exponent).floor() as u64)
                })
                .collect();
            for schedule in [
                DeltaSchedule::PowerLaw { gamma: 0.25 },
                DeltaSchedule::PowerLaw { gamma: 1.0 / 7.0 },
                DeltaSchedule::PowerLaw { gamma: 0.1 },
                DeltaSchedule::Pitman,
            ] {
                assert_eq!(
                    classify_family(&schedule, &coarse).unwrap(),
                    classify_family(&schedule, &fine).unwrap(),
                    "{schedule:?} at N-rule exponent {exponent}"
                );
            }
        }
    }

    #[test]
    fn strip_condition_examples() {
        // γ = 1/6: lower exponent 0, upper 3/8
        let r = strip_condition(1.0 / 6.0, 1 << 24, 256, 4.0).unwrap();
        assert_abs_diff_eq!(r.lower_exponent, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.upper_exponent, 0.375, epsilon = 1e-12);
        assert_abs_diff_eq!(r.upper_bound, 512.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.upper_margin, 2.0, epsilon = 1e-9);
        assert!(r.inside);
        assert!(!r.inside_with_slack); // margin 2 < slack 4

        let r = strip_condition(0.15, 1_000_000, 100, 4.0).unwrap();
        assert_abs_diff_eq!(r.lower_exponent, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r.upper_exponent, 3.0 * 0.4 / (4.0 * 0.7), epsilon = 1e-12);

        assert!(matches!(
            strip_condition(0.2, 100, 10, 4.0),
            Err(Error::GammaOutOfRange { .. })
        ));
    }

    fn ks_distance(sample: &mut [f64]) -> f64 {
        sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sample.len() as f64;
        sample
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let hi = (i as f64 + 1.0) / n - u;
                let lo = u - i as f64 / n;
                hi.max(lo)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn sampling_null_is_uniform() {
        let mut sample = sample_alternative(&cosine_spec(0.0), 5000, 4, 71).unwrap();
        let d = ks_distance(&mut sample);
        assert!(d < 1.63 / (5000.0_f64).sqrt(), "KS distance {d}");
        assert!(sample_alternative(&cosine_spec(0.0), 0, 4, 7).unwrap().is_empty());
    }

    #[test]
    fn sampling_matches_direction_mean() {
        // E l(X) = δ·∫l² = δ under the alternative
        let delta = 0.2;
        let spec = cosine_spec(delta);
        let n = 100_000u64;
        let sample = sample_alternative(&spec, n, 4, 2024).unwrap();
        let dir = DirectionFunction::cosine(1).unwrap();
        let mean = sample.iter().map(|&x| dir.eval(x)).sum::<f64>() / n as f64;
        let sd = ((1.0 - delta * delta) / n as f64).sqrt();
        assert!(
            (mean - delta).abs() < 4.0 * sd,
            "mean {mean} vs δ = {delta} ± {}",
            4.0 * sd
        );
    }

    #[test]
    fn sampling_nonuniform_ks_against_its_own_cdf() {
        // transform draws through the model cdf and test uniformity
        let delta = 0.3;
        let spec = cosine_spec(delta);
        let n = 20_000u64;
        let sample = sample_alternative(&spec, n, 4, 99).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let mut u: Vec<f64> = sample
            .iter()
            .map(|&x| x + delta * std::f64::consts::SQRT_2 / tau * (tau * x).sin())
            .collect();
        let d = ks_distance(&mut u);
        assert!(d < 1.63 / (n as f64).sqrt(), "KS distance {d}");
    }

    #[test]
    fn cell_contrast_variant() {
        let spec = AlternativeSpec::cell_contrast(
            vec![1.0, -1.0, 1.0, -1.0],
            DeltaSchedule::Fixed { value: 0.2 },
        )
        .unwrap();
        let p = cell_probabilities(&spec, 100, 4).unwrap();
        assert_abs_diff_eq!(p[0], 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(p[1], 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(epsilon_contrast(&p), 0.04, epsilon = 1e-13);
        let sample = sample_alternative(&spec, 50_000, 4, 5).unwrap();
        let in_first = sample.iter().filter(|&&x| x < 0.25).count() as f64 / 50_000.0;
        assert!((in_first - 0.3).abs() < 0.01);
        assert!(AlternativeSpec::cell_contrast(
            vec![1.0, 1.0],
            DeltaSchedule::Fixed { value: 0.1 }
        )
        .is_err());
    }

    #[test]
    fn epsilon_contrast_values() {
        assert_eq!(epsilon_contrast(&[0.25; 4]), 0.0);
        assert_abs_diff_eq!(epsilon_contrast(&[0.6, 0.4]), 0.04, epsilon = 1e-15);
    }

    #[test]
    fn epsilon_contrast_converges_to_delta_squared() {
        // ε(N)/δ² = N⁻¹Σ l_mN² → ‖l‖₂² = 1 through cell averaging
        let delta = 0.1;
        let spec = cosine_spec(delta);
        let mut prev = 0.0;
        for e in [4u32, 6, 8, 10, 12] {
            let cells = 1u64 << e;
            let p = cell_probabilities(&spec, 1 << 20, cells).unwrap();
            let ratio = epsilon_contrast(&p) / (delta * delta);
            assert!(ratio > prev, "ratio not increasing at N = {cells}");
            prev = ratio;
        }
        assert!((prev - 1.0).abs() < 1e-5, "limit ratio {prev}");
    }
}
