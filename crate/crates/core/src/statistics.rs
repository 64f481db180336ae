//! Test statistics on grouped counts: `χ²_N`, `Λ_N` and the general
//! symmetric family `S_N^h = Σ h(η_m)`.

use crate::error::{Error, Result};
use crate::grouping::GroupedCounts;
use std::fmt;
use std::sync::Arc;

/// Non-decreasing majorant `scale · (1+k)^poly · (1+ln(1+k))^log` used to
/// bound truncation tails of Poisson sums.
#[derive(Debug, Clone, Copy)]
pub struct GrowthEnvelope {
    pub scale: f64,
    pub poly_degree: i32,
    pub log_degree: i32,
}

impl GrowthEnvelope {
    pub fn new(scale: f64, poly_degree: i32, log_degree: i32) -> Self {
        Self {
            scale,
            poly_degree,
            log_degree,
        }
    }

    pub fn eval(&self, k: u64) -> f64 {
        let base = 1.0 + k as f64;
        self.scale * base.powi(self.poly_degree) * (1.0 + base.ln()).powi(self.log_degree)
    }

    /// Majorant of the product of two enveloped functions.
    pub fn product(&self, other: &Self) -> Self {
        Self {
            scale: self.scale * other.scale,
            poly_degree: self.poly_degree + other.poly_degree,
            log_degree: self.log_degree + other.log_degree,
        }
    }

    /// Majorant of `|f| + add` for a constant `add >= 0`.
    pub fn plus_const(&self, add: f64) -> Self {
        Self {
            scale: self.scale + add,
            ..*self
        }
    }

    /// Majorant of `|f(k)| + slope·(1+k)`.
    pub fn plus_linear(&self, slope: f64) -> Self {
        Self {
            scale: self.scale + slope.abs(),
            poly_degree: self.poly_degree.max(1),
            log_degree: self.log_degree,
        }
    }

    pub fn power(&self, exp: i32) -> Self {
        Self {
            scale: self.scale.powi(exp),
            poly_degree: self.poly_degree * exp,
            log_degree: self.log_degree * exp,
        }
    }
}

type EvalFn = dyn Fn(u64, f64) -> f64 + Send + Sync;
type EnvelopeFn = dyn Fn(f64) -> GrowthEnvelope + Send + Sync;

/// A cell-score function `h(count, λ)` defining the statistic `S_N^h`.
///
/// `λ` is passed explicitly so kernels like `(u-λ)²/λ` need no global state.
#[derive(Clone)]
pub struct HFunction {
    name: String,
    is_linear: bool,
    eval_fn: Arc<EvalFn>,
    envelope_fn: Arc<EnvelopeFn>,
}

impl fmt::Debug for HFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HFunction")
            .field("name", &self.name)
            .field("is_linear", &self.is_linear)
            .finish()
    }
}

impl HFunction {
    /// Pearson kernel `(u - λ)² / λ`.
    pub fn chi_square() -> Self {
        Self {
            name: "chi2".into(),
            is_linear: false,
            eval_fn: Arc::new(|u, lambda| {
                let d = u as f64 - lambda;
                d * d / lambda
            }),
            envelope_fn: Arc::new(|lambda| {
                GrowthEnvelope::new((1.0 + lambda) * (1.0 + lambda) / lambda, 2, 0)
            }),
        }
    }

    /// Log-likelihood-ratio kernel `2u ln(u/λ)` with `0·ln 0 := 0`.
    pub fn log_likelihood_ratio() -> Self {
        Self {
            name: "lr".into(),
            is_linear: false,
            eval_fn: Arc::new(|u, lambda| {
                if u == 0 {
                    0.0
                } else {
                    2.0 * u as f64 * (u as f64 / lambda).ln()
                }
            }),
            envelope_fn: Arc::new(|lambda| {
                GrowthEnvelope::new(2.0 * (1.0 + lambda.ln().abs()), 1, 1)
            }),
        }
    }

    /// Empty-cell kernel `1{u = 0}`.
    pub fn empty_cells() -> Self {
        Self {
            name: "empty-cells".into(),
            is_linear: false,
            eval_fn: Arc::new(|u, _| if u == 0 { 1.0 } else { 0.0 }),
            envelope_fn: Arc::new(|_| GrowthEnvelope::new(1.0, 0, 0)),
        }
    }

    /// A user-supplied kernel together with a growth majorant for `|h|`.
    pub fn custom<F, E>(name: &str, is_linear: bool, eval: F, envelope: E) -> Self
    where
        F: Fn(u64, f64) -> f64 + Send + Sync + 'static,
        E: Fn(f64) -> GrowthEnvelope + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            is_linear,
            eval_fn: Arc::new(eval),
            envelope_fn: Arc::new(envelope),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "chi2" => Some(Self::chi_square()),
            "lr" => Some(Self::log_likelihood_ratio()),
            "empty-cells" => Some(Self::empty_cells()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_linear(&self) -> bool {
        self.is_linear
    }

    pub fn eval(&self, count: u64, lambda: f64) -> f64 {
        (self.eval_fn)(count, lambda)
    }

    /// Cache identity: built-in kernels are memoizable by name, custom
    /// closures are not (their name does not pin their behaviour).
    pub(crate) fn builtin_name(&self) -> Option<&str> {
        match self.name.as_str() {
            "chi2" | "lr" | "empty-cells" => Some(&self.name),
            _ => None,
        }
    }

    pub fn envelope(&self, lambda: f64) -> GrowthEnvelope {
        (self.envelope_fn)(lambda)
    }
}

/// A computed statistic value with a summary of the counts it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticValue {
    pub value: f64,
    pub statistic: String,
    pub n: u64,
    pub n_cells: usize,
}

fn validate(counts: &GroupedCounts, p: &[f64]) -> Result<()> {
    if counts.is_degenerate() {
        return Err(Error::DegenerateCounts);
    }
    if p.len() != counts.n_cells() {
        return Err(Error::InvalidProbabilities {
            reason: format!(
                "probability vector has {} entries for {} cells",
                p.len(),
                counts.n_cells()
            ),
        });
    }
    let n = counts.n() as f64;
    for (index, &pi) in p.iter().enumerate() {
        if pi.is_nan() || pi <= 0.0 || n * pi <= 0.0 {
            return Err(Error::ZeroExpectedCount { index });
        }
    }
    Ok(())
}

/// Pearson's statistic `Σ (η_m - np_m)² / (np_m)`.
pub fn chi_square(counts: &GroupedCounts, p: &[f64]) -> Result<StatisticValue> {
    validate(counts, p)?;
    let n = counts.n() as f64;
    let value = counts
        .counts()
        .iter()
        .zip(p)
        .map(|(&c, &pi)| {
            let e = n * pi;
            let d = c as f64 - e;
            d * d / e
        })
        .sum();
    Ok(StatisticValue {
        value,
        statistic: "chi2".into(),
        n: counts.n(),
        n_cells: counts.n_cells(),
    })
}

/// Log-likelihood ratio `2 Σ η_m ln(η_m / np_m)`, with empty cells
/// contributing zero.
pub fn log_likelihood_ratio(counts: &GroupedCounts, p: &[f64]) -> Result<StatisticValue> {
    validate(counts, p)?;
    let n = counts.n() as f64;
    let value = 2.0
        * counts
            .counts()
            .iter()
            .zip(p)
            .map(|(&c, &pi)| {
                if c == 0 {
                    0.0
                } else {
                    c as f64 * (c as f64 / (n * pi)).ln()
                }
            })
            .sum::<f64>();
    Ok(StatisticValue {
        value,
        statistic: "lr".into(),
        n: counts.n(),
        n_cells: counts.n_cells(),
    })
}

/// General symmetric statistic `S_N^h = Σ h(η_m)` with `λ = n/N`.
///
/// Linear kernels are rejected: the resulting statistic is a function of
/// `n` alone and carries no test.
pub fn h_statistic(counts: &GroupedCounts, h: &HFunction) -> Result<StatisticValue> {
    if h.is_linear() {
        return Err(Error::LinearKernel);
    }
    if counts.is_degenerate() {
        return Err(Error::DegenerateCounts);
    }
    let lambda = counts.lambda();
    let value = counts.counts().iter().map(|&c| h.eval(c, lambda)).sum();
    Ok(StatisticValue {
        value,
        statistic: h.name().to_string(),
        n: counts.n(),
        n_cells: counts.n_cells(),
    })
}

/// Standardizes a statistic value by prescribed null moments.
pub fn standardize(s: &StatisticValue, mean0: f64, var0: f64) -> Result<f64> {
    if var0 <= 0.0 {
        return Err(Error::NonPositiveVariance { var0 });
    }
    Ok((s.value - mean0) / var0.sqrt())
}
