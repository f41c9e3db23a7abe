//! Maximum-likelihood fits from binned histograms (unfolded or 3D-binned)
//! and from exact 3D marks.
//!
//! The orientation parameter separates from size and shape: `beta` is fitted
//! to the angle marginal, `(mu, Sigma)` to the `(c, s)` marginal. Both
//! likelihoods weight classes by relative frequencies.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::brent::BrentOpt;
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use crate::error::{data, invalid, numerical, Result};
use crate::model::{
    cell_probabilities_cs, cell_probability_polar, joint_density_cs, logit, polar_density, ModelParams,
    SpheroidAttributes,
};
use crate::unfold::Histogram3D;

/// Search range of `log beta`.
pub const LOG_BETA_RANGE: (f64, f64) = (-6.0, 6.0);

const BETA_GRID: usize = 241;
/// Cost returned for infeasible or zero-likelihood points.
const BIG: f64 = 1e100;

/// Fitted parameters with the maximized log-likelihoods and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub params: ModelParams,
    pub loglik_beta: f64,
    pub loglik_size_shape: f64,
    pub iterations: u64,
    pub converged: bool,
    pub beta_at_boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub beta: f64,
    pub loglik: f64,
    pub at_boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeShapeFit {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub loglik: f64,
    pub iterations: u64,
    pub converged: bool,
}

fn relative(values: &[f64]) -> Option<Vec<f64>> {
    let t: f64 = values.iter().sum();
    (t > 0.0).then(|| values.iter().map(|v| v / t).collect())
}

/// `sum_k h_k log P_beta(class k)` over the angle marginal of `h`;
/// `-inf` if an occupied class has zero probability.
pub fn loglik_beta(h: &Histogram3D, beta: f64) -> Result<f64> {
    let m = relative(&h.marginal_theta()).ok_or_else(|| data("histogram has no mass"))?;
    let edges = h.binning.theta_edges();
    let mut ll = 0.0;
    for (k, &w) in m.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let p = cell_probability_polar(beta, edges[k], edges[k + 1])?;
        if p <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ll += w * p.ln();
    }
    Ok(ll)
}

/// Maximizes `f` over `[lo, hi]`: grid search, then Brent's method on the
/// bracket around the best grid point. Returns `(x, f(x), at_boundary)`.
fn maximize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, grid: usize) -> Result<(f64, f64, bool)> {
    let step = (hi - lo) / (grid - 1) as f64;
    let values: Vec<f64> = (0..grid).map(|i| f(lo + step * i as f64)).collect();
    let best = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| numerical("objective is not finite anywhere on the search grid"))?;
    let a = lo + step * best.saturating_sub(1) as f64;
    let b = (lo + step * (best + 1) as f64).min(hi);

    struct Neg<F>(F);
    impl<F: Fn(f64) -> f64> CostFunction for Neg<F> {
        type Param = f64;
        type Output = f64;
        fn cost(&self, x: &f64) -> std::result::Result<f64, argmin::core::Error> {
            let v = (self.0)(*x);
            Ok(if v.is_finite() { -v } else { BIG })
        }
    }
    let solver = BrentOpt::new(a, b).set_tolerance(1e-10, 1e-12);
    let res = Executor::new(Neg(&f), solver)
        .configure(|s| s.max_iters(200))
        .run()
        .map_err(|e| numerical(format!("1D search failed: {e}")))?;
    let mut x = *res.state().get_best_param().unwrap_or(&(lo + step * best as f64));
    let mut fx = f(x);
    let grid_best = values[best];
    if !(fx >= grid_best) {
        x = lo + step * best as f64;
        fx = grid_best;
    }
    let tol = 1e-6;
    Ok((x, fx, x <= lo + tol || x >= hi - tol))
}

/// Fits `beta` to the angle marginal of `h` by a bounded search on
/// `log beta`.
pub fn fit_beta(h: &Histogram3D) -> Result<BetaFit> {
    if h.marginal_theta().iter().sum::<f64>() <= 0.0 {
        return Err(data("angle marginal has no mass"));
    }
    let f = |lb: f64| loglik_beta(h, lb.exp()).unwrap_or(f64::NEG_INFINITY);
    let (lb, ll, at_boundary) = maximize_1d(f, LOG_BETA_RANGE.0, LOG_BETA_RANGE.1, BETA_GRID)?;
    Ok(BetaFit {
        beta: lb.exp(),
        loglik: ll,
        at_boundary,
    })
}

/// `sum_ij h_ij log P(class ij)` over the `(c, s)` marginal of `h`, with
/// class probabilities renormalized over the binned range `c <= c_max`.
pub fn loglik_size_shape(h: &Histogram3D, params: &ModelParams) -> Result<f64> {
    let m = relative(&h.marginal_cs()).ok_or_else(|| data("histogram has no mass"))?;
    cs_loglik(&m, &h.binning.c_edges(), &h.binning.s_edges(), params)
}

fn cs_loglik(m: &[f64], c_edges: &[f64], s_edges: &[f64], params: &ModelParams) -> Result<f64> {
    let p = cell_probabilities_cs(params, c_edges, s_edges)?;
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut ll = 0.0;
    for (w, pi) in m.iter().zip(&p) {
        if *w == 0.0 {
            continue;
        }
        if *pi <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ll += w * (pi / total).ln();
    }
    Ok(ll)
}

/// Unconstrained coordinates `(mu1, mu2, log sigma1, log sigma2, atanh rho)`.
fn size_shape_from_phi(phi: &[f64]) -> Option<ModelParams> {
    let p = ModelParams {
        mu1: phi[0],
        mu2: phi[1],
        sigma1: phi[2].clamp(-12.0, 5.0).exp(),
        sigma2: phi[3].clamp(-12.0, 5.0).exp(),
        rho: phi[4].clamp(-10.0, 10.0).tanh(),
        beta: 1.0,
    };
    (p.validate().is_ok() && p.rho.abs() < 1.0).then_some(p)
}

/// Weighted moments of `(log(c/s), logit s)` at class midpoints.
fn midpoint_start(m: &[f64], c_edges: &[f64], s_edges: &[f64]) -> Result<[f64; 5]> {
    let n_s = s_edges.len() - 1;
    let occupied = m.iter().filter(|w| **w > 0.0).count();
    if occupied < 2 {
        return Err(data("insufficient support: the (c, s) marginal occupies a single class"));
    }
    let mut pts = Vec::with_capacity(occupied);
    for (idx, &w) in m.iter().enumerate() {
        if w > 0.0 {
            let (i, j) = (idx / n_s, idx % n_s);
            let c = 0.5 * (c_edges[i] + c_edges[i + 1]);
            let s = 0.5 * (s_edges[j] + s_edges[j + 1]);
            pts.push((w, (c / s).ln(), logit(s)));
        }
    }
    let wt: f64 = pts.iter().map(|p| p.0).sum();
    let mx = pts.iter().map(|p| p.0 * p.1).sum::<f64>() / wt;
    let my = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / wt;
    let vx = pts.iter().map(|p| p.0 * (p.1 - mx).powi(2)).sum::<f64>() / wt;
    let vy = pts.iter().map(|p| p.0 * (p.2 - my).powi(2)).sum::<f64>() / wt;
    let cxy = pts.iter().map(|p| p.0 * (p.1 - mx) * (p.2 - my)).sum::<f64>() / wt;
    let sx = vx.sqrt().max(0.05);
    let sy = vy.sqrt().max(0.05);
    let r = (cxy / (sx * sy)).clamp(-0.9, 0.9);
    Ok([mx, my, sx.ln(), sy.ln(), r.atanh()])
}

/// Result of a Nelder-Mead minimization.
pub(crate) struct Simplex {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// Minimizes `f` by Nelder-Mead from `x0` with initial simplex offsets
/// `step`, restarting once from the best point.
pub(crate) fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    max_iters: u64,
    sd_tol: f64,
) -> Result<Simplex> {
    struct Cost<F>(F);
    impl<F: Fn(&[f64]) -> f64> CostFunction for Cost<F> {
        type Param = Vec<f64>;
        type Output = f64;
        fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
            let v = (self.0)(x);
            Ok(if v.is_finite() { v.min(BIG) } else { BIG })
        }
    }
    let mut x = x0.to_vec();
    let mut iterations = 0;
    let mut converged = false;
    let mut fx = f64::INFINITY;
    for round in 0..2 {
        let scale = if round == 0 { 1.0 } else { 0.2 };
        let mut simplex = vec![x.clone()];
        for k in 0..x.len() {
            let mut v = x.clone();
            v[k] += step[k] * scale;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(sd_tol)
            .map_err(|e| numerical(format!("simplex setup failed: {e}")))?;
        let res = Executor::new(Cost(&f), solver)
            .configure(|s| s.max_iters(max_iters))
            .run()
            .map_err(|e| numerical(format!("simplex search failed: {e}")))?;
        let state = res.state();
        iterations += state.get_iter();
        converged = matches!(
            state.get_termination_status(),
            TerminationStatus::Terminated(TerminationReason::SolverConverged)
        );
        if let Some(best) = state.get_best_param() {
            x = best.clone();
            fx = state.get_best_cost();
        }
    }
    Ok(Simplex {
        x,
        fx,
        iterations,
        converged,
    })
}

/// Fits `(mu1, mu2, sigma1, sigma2, rho)` to the `(c, s)` marginal of `h`.
pub fn fit_size_shape(h: &Histogram3D) -> Result<SizeShapeFit> {
    let m = relative(&h.marginal_cs()).ok_or_else(|| data("histogram has no mass"))?;
    let c_edges = h.binning.c_edges();
    let s_edges = h.binning.s_edges();
    let x0 = midpoint_start(&m, &c_edges, &s_edges)?;
    let cost = |phi: &[f64]| match size_shape_from_phi(phi) {
        Some(p) => cs_loglik(&m, &c_edges, &s_edges, &p).map_or(BIG, |ll| -ll),
        None => BIG,
    };
    let res = nelder_mead(cost, &x0, &[0.1, 0.1, 0.2, 0.2, 0.2], 3000, 1e-11)?;
    let p = size_shape_from_phi(&res.x).ok_or_else(|| numerical("size/shape fit left the feasible region"))?;
    if res.fx >= BIG {
        return Err(numerical("size/shape likelihood is zero everywhere visited"));
    }
    let loglik = cs_loglik(&m, &c_edges, &s_edges, &p)?;
    Ok(SizeShapeFit {
        mu1: p.mu1,
        mu2: p.mu2,
        sigma1: p.sigma1,
        sigma2: p.sigma2,
        rho: p.rho,
        loglik,
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// Binned maximum likelihood: [`fit_beta`] and [`fit_size_shape`] on the
/// same histogram.
pub fn fit_histogram(h: &Histogram3D) -> Result<MleFit> {
    let b = fit_beta(h)?;
    let ss = fit_size_shape(h)?;
    Ok(MleFit {
        params: ModelParams::new(ss.mu1, ss.mu2, ss.sigma1, ss.sigma2, ss.rho, b.beta)?,
        loglik_beta: b.loglik,
        loglik_size_shape: ss.loglik,
        iterations: ss.iterations,
        converged: ss.converged,
        beta_at_boundary: b.at_boundary,
    })
}

fn check_samples(samples: &[SpheroidAttributes]) -> Result<()> {
    if samples.len() < 10 {
        return Err(data(format!("3D fit needs at least 10 records, got {}", samples.len())));
    }
    for (n, a) in samples.iter().enumerate() {
        if !(a.s > 0.0 && a.s < 1.0) {
            return Err(data(format!("record {n}: aspect ratio {} outside (0, 1)", a.s)));
        }
        if !(a.c > 0.0 && a.c.is_finite()) {
            return Err(data(format!("record {n}: c = {} must be positive", a.c)));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&a.theta) {
            return Err(data(format!("record {n}: theta = {} outside [0, pi/2]", a.theta)));
        }
    }
    Ok(())
}

/// `sum_l log f(c_l, s_l)` of exact 3D marks.
pub fn loglik_3d_size_shape(samples: &[SpheroidAttributes], params: &ModelParams) -> Result<f64> {
    samples
        .iter()
        .map(|a| joint_density_cs(params, a.c, a.s).map(f64::ln))
        .sum()
}

/// `sum_l log(2 h_beta(theta_l))` of folded polar angles.
pub fn loglik_3d_beta(samples: &[SpheroidAttributes], beta: f64) -> Result<f64> {
    samples
        .iter()
        .map(|a| polar_density(beta, a.theta).map(|d| (2.0 * d).ln()))
        .sum()
}

/// Maximum likelihood from exact 3D marks. `(mu, Sigma)` have the closed
/// form of the Gaussian MLE on `(log(c/s), logit s)`; `beta` is a 1D
/// search.
pub fn fit_mle3d(samples: &[SpheroidAttributes]) -> Result<MleFit> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let xs: Vec<(f64, f64)> = samples.iter().map(|a| ((a.c / a.s).ln(), logit(a.s))).collect();
    let mx = xs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xs.iter().map(|p| p.1).sum::<f64>() / n;
    let vx = xs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / n;
    let vy = xs.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / n;
    let cxy = xs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n;
    if !(vx > 0.0 && vy > 0.0) {
        return Err(data("3D marks have zero variance in size or shape"));
    }
    let rho = cxy / (vx * vy).sqrt();
    if !(rho.abs() < 1.0) {
        return Err(data("3D size and shape are perfectly correlated"));
    }

    let f = |lb: f64| loglik_3d_beta(samples, lb.exp()).unwrap_or(f64::NEG_INFINITY);
    let (lb, ll_beta, at_boundary) = maximize_1d(f, LOG_BETA_RANGE.0, LOG_BETA_RANGE.1, BETA_GRID)?;
    let params = ModelParams::new(mx, my, vx.sqrt(), vy.sqrt(), rho, lb.exp())
        .map_err(|e| invalid(format!("3D fit produced invalid parameters: {e}")))?;
    let ll_ss = loglik_3d_size_shape(samples, &params)?;
    Ok(MleFit {
        params,
        loglik_beta: ll_beta,
        loglik_size_shape: ll_ss,
        iterations: 0,
        converged: true,
        beta_at_boundary: at_boundary,
    })
}
