//! Simulation-based quasi-likelihood estimation from section statistics.
//!
//! The iteration works in the unconstrained coordinates
//! `phi = (mu1, mu2, log sigma1, log sigma2, atanh rho, log beta)`, so every
//! iterate is a valid parameter.

pub mod moments;
pub mod scoring;
pub mod stats;

pub use moments::{
    estimate_jacobian, estimate_moments, mean_caliper, Intensity, MomentEstimate, SectionSimulator, StatSimulator,
};
pub use scoring::{
    fit_qle, match_start, quasi_deviance, quasi_information, quasi_score, quasi_scoring_fit, regularize, Evaluation,
    IterationRecord, McMomentModel, MomentModel, QleConfig, QleFit,
};
pub use stats::{compute_statistics, SummaryStats, N_STATS};

use crate::model::ModelParams;

pub const N_PARAMS: usize = 6;

/// Finite-difference steps in `phi`.
pub const DEFAULT_STEPS: [f64; N_PARAMS] = [0.05, 0.05, 0.05, 0.05, 0.1, 0.1];

/// Smallest spread used for a starting value.
const MIN_START_SPREAD: f64 = 0.05;

pub fn to_phi(p: &ModelParams) -> [f64; N_PARAMS] {
    [p.mu1, p.mu2, p.sigma1.ln(), p.sigma2.ln(), p.rho.atanh(), p.beta.ln()]
}

/// Inverse of [`to_phi`], or `None` where it leaves the parameter space
/// numerically (e.g. `tanh` rounding to one).
pub fn from_phi(phi: &[f64; N_PARAMS]) -> Option<ModelParams> {
    if phi.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let p = ModelParams {
        mu1: phi[0],
        mu2: phi[1],
        sigma1: phi[2].exp(),
        sigma2: phi[3].exp(),
        rho: phi[4].tanh(),
        beta: phi[5].exp(),
    };
    let ok = p.sigma1 > 0.0
        && p.sigma2 > 0.0
        && p.sigma1.is_finite()
        && p.sigma2.is_finite()
        && p.rho.abs() < 1.0
        && p.beta > 0.0
        && p.beta.is_finite();
    ok.then_some(p)
}

/// `d theta / d phi`, componentwise.
pub fn dtheta_dphi(p: &ModelParams) -> [f64; N_PARAMS] {
    [1.0, 1.0, p.sigma1, p.sigma2, 1.0 - p.rho * p.rho, p.beta]
}

/// Plug-in starting value from observed statistics: location and spread of
/// `log A` and `logit S`, no correlation, isotropy.
pub fn default_start(y: &SummaryStats) -> ModelParams {
    let t = &y.0;
    ModelParams {
        mu1: t[1],
        mu2: t[2],
        sigma1: t[6].max(MIN_START_SPREAD),
        sigma2: t[7].max(MIN_START_SPREAD),
        rho: 0.0,
        beta: 1.0,
    }
}
