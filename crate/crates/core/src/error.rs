//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cell count must be at least 1")]
    EmptyPartition,

    #[error("sample value {value} at index {index} is outside [0, 1]")]
    SampleOutOfRange { index: usize, value: f64 },

    #[error("cdf produced {value} outside [0, 1] for input {input}")]
    InvalidCdf { input: f64, value: f64 },

    #[error("grouped counts are degenerate (n = 0)")]
    DegenerateCounts,

    #[error("probability vector invalid: {reason}")]
    InvalidProbabilities { reason: String },

    #[error("expected count n*p[{index}] is not positive")]
    ZeroExpectedCount { index: usize },

    #[error("density 1 + δ·l(x) can be negative: δ·sup|l| = {product} > 1")]
    NegativeDensity { product: f64 },

    #[error("direction function violates (1.1) constraints: {reason}")]
    InvalidDirection { reason: String },

    #[error("delta schedule has no value at n = {n}")]
    MissingDelta { n: u64 },

    #[error("h must not be linear")]
    LinearKernel,

    #[error("kernel variance σ²(h) vanished at λ = {lambda}; h is linear in effect")]
    DegenerateKernel { lambda: f64 },

    #[error("truncated Poisson sum does not converge: {reason}")]
    NonConvergentEnvelope { reason: String },

    #[error("variance must be positive, got {var0}")]
    NonPositiveVariance { var0: f64 },

    #[error("rate classification is ambiguous: {reason}")]
    Unclassified { reason: String },

    #[error("γ = {gamma} outside (1/8, 1/6]")]
    GammaOutOfRange { gamma: f64 },

    #[error("argument {name} = {value} outside its domain {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("cdf inversion failed: {reason}")]
    CdfInversion { reason: String },

    #[error("family tag {family} is inconsistent with the point: {reason}")]
    InconsistentFamily { family: String, reason: String },

    #[error("no prediction available: {reason}")]
    UnsupportedPrediction { reason: String },

    #[error("open problem: {reason}")]
    OpenProblem { reason: String },

    #[error("instance too large for exact enumeration: {compositions} compositions exceed {limit}")]
    InstanceTooLarge { compositions: u128, limit: u128 },

    #[error("only {hits} hits at budget {budget} (need ≥ {needed}); use the splitting estimator")]
    TooFewHits { hits: u64, budget: u64, needed: u64 },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
}
