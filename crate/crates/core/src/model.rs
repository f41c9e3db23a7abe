//! The parametric prolate-spheroid distribution.
//!
//! Size and shape come from a latent bivariate normal pair `(xi, eta)`:
//! the semi-major axis is `a = exp(xi)` and the aspect ratio is
//! `s = logistic(eta)`, so the semi-minor axis is `c = a * s`. The axis of
//! revolution follows the axial (Schladitz) orientation law with anisotropy
//! parameter `beta`, rotationally invariant about the reference axis `u`.
//!
//! Polar angles are folded to `[0, pi/2]` everywhere outside the raw
//! density/c.d.f./quantile functions, since spheroid axes are undirected.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};
use crate::quadrature::integrate_vec;
use crate::rng::open01;

/// Absolute tolerance of the eta-quadrature behind the cell probabilities.
pub const CELL_QUAD_TOL: f64 = 1e-9;

/// Number of latent standard deviations kept on either side of the mean of
/// eta; the mass outside is below 1e-32.
const ETA_SPAN: f64 = 12.0;

/// The six model parameters `(mu1, mu2, sigma1, sigma2, rho, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub beta: f64,
}

impl ModelParams {
    pub const NAMES: [&'static str; 6] = ["mu1", "mu2", "sigma1", "sigma2", "rho", "beta"];

    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, rho: f64, beta: f64) -> Result<Self> {
        let p = Self {
            mu1,
            mu2,
            sigma1,
            sigma2,
            rho,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks the parameter constraints, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mu1,
            self.mu2,
            self.sigma1,
            self.sigma2,
            self.rho,
            self.beta,
        ];
        for (name, v) in Self::NAMES.iter().zip(finite) {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite, got {v}")));
            }
        }
        if self.sigma1 < 0.0 {
            return Err(invalid(format!("sigma1 must be >= 0, got {}", self.sigma1)));
        }
        if self.sigma2 < 0.0 {
            return Err(invalid(format!("sigma2 must be >= 0, got {}", self.sigma2)));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(invalid(format!("rho must be in [-1, 1], got {}", self.rho)));
        }
        if self.beta <= 0.0 {
            return Err(invalid(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.mu1,
            self.mu2,
            self.sigma1,
            self.sigma2,
            self.rho,
            self.beta,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    /// Covariance matrix of the latent pair `(xi, eta)`.
    pub fn covariance(&self) -> Matrix2<f64> {
        let off = self.rho * self.sigma1 * self.sigma2;
        Matrix2::new(self.sigma1 * self.sigma1, off, off, self.sigma2 * self.sigma2)
    }

    /// True when the latent Gaussian has no density in the plane.
    pub fn is_degenerate(&self) -> bool {
        self.sigma1 == 0.0 || self.sigma2 == 0.0 || self.rho.abs() == 1.0
    }

    /// Mean and standard deviation of `eta` given `xi`.
    pub fn eta_given_xi(&self, xi: f64) -> (f64, f64) {
        if self.sigma1 > 0.0 {
            (
                self.mu2 + self.rho * self.sigma2 * (xi - self.mu1) / self.sigma1,
                self.sigma2 * (1.0 - self.rho * self.rho).max(0.0).sqrt(),
            )
        } else {
            (self.mu2, self.sigma2)
        }
    }

    /// Mean and standard deviation of `xi` given `eta`.
    pub fn xi_given_eta(&self, eta: f64) -> (f64, f64) {
        if self.sigma2 > 0.0 {
            (
                self.mu1 + self.rho * self.sigma1 * (eta - self.mu2) / self.sigma2,
                self.sigma1 * (1.0 - self.rho * self.rho).max(0.0).sqrt(),
            )
        } else {
            (self.mu1, self.sigma1)
        }
    }
}

/// Size and shape of one prolate spheroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeShape {
    /// Semi-major axis.
    pub a: f64,
    /// Aspect ratio `c / a` in `(0, 1]`.
    pub s: f64,
    /// Semi-minor axis.
    pub c: f64,
}

impl SizeShape {
    pub fn from_latent(xi: f64, eta: f64) -> Self {
        let a = xi.exp();
        let s = logistic(eta).max(f64::MIN_POSITIVE);
        Self { a, s, c: a * s }
    }
}

/// Folded polar angle and azimuth of a spheroid axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    pub theta: f64,
    pub phi: f64,
}

impl Orientation {
    /// Unit axis vector with the reference direction `u` as the z-axis.
    pub fn axis(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }
}

/// The three classified marks of a spheroid: semi-minor axis, aspect ratio
/// and folded polar angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpheroidAttributes {
    pub c: f64,
    pub s: f64,
    pub theta: f64,
}

/// Marks of one typical spheroid.
pub fn sample_attributes<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> SpheroidAttributes {
    let ss = sample_size_shape(params, rng);
    let o = sample_orientation(params.beta, rng);
    SpheroidAttributes {
        c: ss.c,
        s: ss.s,
        theta: o.theta,
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(logistic(x))`, stable for large negative `x`.
#[inline]
fn log_logistic(x: f64) -> f64 {
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Standard normal c.d.f.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }
}

#[inline]
fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (TAU).sqrt()
}

/// Folds an undirected axis angle from `[0, pi]` into `[0, pi/2]`.
#[inline]
pub fn fold_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    t.min(PI - t)
}

/// Draws `(a, s, c)` from the latent bivariate normal.
pub fn sample_size_shape<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> SizeShape {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let xi = params.mu1 + params.sigma1 * z1;
    let eta = params.mu2
        + params.sigma2 * (params.rho * z1 + (1.0 - params.rho * params.rho).max(0.0).sqrt() * z2);
    SizeShape::from_latent(xi, eta)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be a positive finite number, got {beta}")));
    }
    Ok(())
}

fn check_raw_theta(theta: f64) -> Result<()> {
    if !(0.0..=PI).contains(&theta) {
        return Err(invalid(format!("polar angle must lie in [0, pi), got {theta}")));
    }
    Ok(())
}

/// Density of the raw polar angle on `[0, pi)`.
pub fn polar_density(beta: f64, theta: f64) -> Result<f64> {
    check_beta(beta)?;
    check_raw_theta(theta)?;
    let ct = theta.cos();
    let denom = 1.0 + (beta * beta - 1.0) * ct * ct;
    Ok(0.5 * beta * theta.sin() / denom.powf(1.5))
}

/// C.d.f. of the raw polar angle on `[0, pi)`.
pub fn polar_cdf(beta: f64, theta: f64) -> Result<f64> {
    check_beta(beta)?;
    check_raw_theta(theta)?;
    Ok(polar_cdf_unchecked(beta, theta))
}

#[inline]
fn polar_cdf_unchecked(beta: f64, theta: f64) -> f64 {
    let ct = theta.cos();
    let denom = (1.0 + (beta * beta - 1.0) * ct * ct).sqrt();
    0.5 * (1.0 - beta * ct / denom)
}

/// C.d.f. of the folded polar angle on `[0, pi/2]`.
pub fn folded_polar_cdf(beta: f64, theta: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(0.0..=FRAC_PI_2 + 1e-12).contains(&theta) {
        return Err(invalid(format!("folded polar angle must lie in [0, pi/2], got {theta}")));
    }
    Ok((2.0 * polar_cdf_unchecked(beta, theta.min(FRAC_PI_2))).min(1.0))
}

/// Quantile function of the raw polar angle.
pub fn polar_quantile(beta: f64, q: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("quantile level must lie in (0, 1), got {q}")));
    }
    Ok(polar_quantile_unchecked(beta, q))
}

#[inline]
fn polar_quantile_unchecked(beta: f64, q: f64) -> f64 {
    let y = 1.0 - 2.0 * q;
    let d = (beta * beta - y * y * (beta * beta - 1.0)).sqrt();
    (y / d).clamp(-1.0, 1.0).acos()
}

/// Draws an axis orientation by inversion, folding the polar angle.
pub fn sample_orientation<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> Orientation {
    let raw = polar_quantile_unchecked(beta, open01(rng));
    Orientation {
        theta: raw.min(PI - raw),
        phi: TAU * rng.random::<f64>(),
    }
}

/// Probability of the folded polar-angle class `(lo, hi]`.
pub fn cell_probability_polar(beta: f64, theta_lo: f64, theta_hi: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(theta_lo >= 0.0 && theta_lo < theta_hi && theta_hi <= FRAC_PI_2 + 1e-12) {
        return Err(invalid(format!(
            "polar class ({theta_lo}, {theta_hi}] must satisfy 0 <= lo < hi <= pi/2"
        )));
    }
    let hi = theta_hi.min(FRAC_PI_2);
    Ok((2.0 * (polar_cdf_unchecked(beta, hi) - polar_cdf_unchecked(beta, theta_lo))).max(0.0))
}

/// Joint density of the semi-minor axis `c` and aspect ratio `s`.
pub fn joint_density_cs(params: &ModelParams, c: f64, s: f64) -> Result<f64> {
    if !(c > 0.0) || !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("density needs c > 0 and 0 < s < 1, got c={c}, s={s}")));
    }
    if params.is_degenerate() {
        return Err(invalid("density undefined for degenerate covariance"));
    }
    let xi = (c / s).ln();
    let eta = logit(s);
    Ok(bivariate_normal_density(params, xi, eta) / (c * s * (1.0 - s)))
}

fn bivariate_normal_density(p: &ModelParams, xi: f64, eta: f64) -> f64 {
    let z1 = (xi - p.mu1) / p.sigma1;
    let z2 = (eta - p.mu2) / p.sigma2;
    let one_minus = 1.0 - p.rho * p.rho;
    let quad = (z1 * z1 - 2.0 * p.rho * z1 * z2 + z2 * z2) / one_minus;
    (-0.5 * quad).exp() / (TAU * p.sigma1 * p.sigma2 * one_minus.sqrt())
}

/// Probability of the class `(c_lo, c_hi] x (s_lo, s_hi]`.
pub fn cell_probability_cs(
    params: &ModelParams,
    c_lo: f64,
    c_hi: f64,
    s_lo: f64,
    s_hi: f64,
) -> Result<f64> {
    Ok(cell_probabilities_cs(params, &[c_lo, c_hi], &[s_lo, s_hi])?[0])
}

fn check_edges(edges: &[f64], name: &str, upper: f64) -> Result<()> {
    if edges.len() < 2 {
        return Err(invalid(format!("{name} edges need at least two values")));
    }
    if edges[0] < 0.0 || *edges.last().unwrap() > upper {
        return Err(invalid(format!("{name} edges must lie in [0, {upper}]")));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid(format!("{name} edges must be strictly increasing")));
    }
    Ok(())
}

/// Probabilities of all classes of the grid spanned by `c_edges` and
/// `s_edges`, row-major with the c-class as the slow index.
///
/// Each column of classes sharing an s-range is one vector-valued quadrature
/// over `eta` of the conditional normal probabilities of `xi`.
pub fn cell_probabilities_cs(
    params: &ModelParams,
    c_edges: &[f64],
    s_edges: &[f64],
) -> Result<Vec<f64>> {
    params.validate()?;
    check_edges(c_edges, "c", f64::INFINITY)?;
    check_edges(s_edges, "s", 1.0)?;
    let n_c = c_edges.len() - 1;
    let n_s = s_edges.len() - 1;
    let log_c: Vec<f64> = c_edges.iter().map(|&c| c.ln()).collect();
    let mut out = vec![0.0; n_c * n_s];

    if params.sigma2 == 0.0 {
        // eta is a point mass: only one s-class carries probability.
        let s0 = logistic(params.mu2);
        let log_s0 = log_logistic(params.mu2);
        if let Some(j) = (0..n_s).find(|&j| s_edges[j] < s0 && s0 <= s_edges[j + 1]) {
            let cdf = |lc: f64| normal_cdf_or_step(lc - log_s0, params.mu1, params.sigma1);
            for i in 0..n_c {
                out[i * n_s + j] = (cdf(log_c[i + 1]) - cdf(log_c[i])).max(0.0);
            }
        }
        return Ok(out);
    }

    let eta_min = params.mu2 - ETA_SPAN * params.sigma2;
    let eta_max = params.mu2 + ETA_SPAN * params.sigma2;
    let cond_sd = params.sigma1 * (1.0 - params.rho * params.rho).max(0.0).sqrt();

    for j in 0..n_s {
        let lo = logit(s_edges[j]).max(eta_min);
        let hi = logit(s_edges[j + 1]).min(eta_max);
        if !(hi > lo) {
            continue;
        }
        if cond_sd == 0.0 {
            for i in 0..n_c {
                out[i * n_s + j] = degenerate_cell(params, lo, hi, log_c[i], log_c[i + 1]);
            }
            continue;
        }
        let mut cdfs = vec![0.0; n_c + 1];
        let integral = integrate_vec(
            |eta, vals: &mut [f64]| {
                let w = std_normal_pdf((eta - params.mu2) / params.sigma2) / params.sigma2;
                let (m, _) = params.xi_given_eta(eta);
                let shift = log_logistic(eta) + m;
                for (e, lc) in log_c.iter().enumerate() {
                    cdfs[e] = std_normal_cdf((lc - shift) / cond_sd);
                }
                for i in 0..n_c {
                    vals[i] = w * (cdfs[i + 1] - cdfs[i]);
                }
            },
            lo,
            hi,
            n_c,
            CELL_QUAD_TOL,
            400,
        );
        for i in 0..n_c {
            out[i * n_s + j] = integral.value[i].max(0.0);
        }
    }
    Ok(out)
}

fn normal_cdf_or_step(x: f64, mean: f64, sd: f64) -> f64 {
    if sd > 0.0 {
        std_normal_cdf((x - mean) / sd)
    } else if x >= mean {
        1.0
    } else {
        0.0
    }
}

/// Mass of `eta in (lo, hi]` for which the deterministic `log c(eta)` lies in
/// `(lc_lo, lc_hi]`; used when `xi` is a deterministic function of `eta`.
fn degenerate_cell(p: &ModelParams, lo: f64, hi: f64, lc_lo: f64, lc_hi: f64) -> f64 {
    let log_c = |eta: f64| p.xi_given_eta(eta).0 + log_logistic(eta);
    let inside = |eta: f64| {
        let v = log_c(eta);
        v > lc_lo && v <= lc_hi
    };
    // Breakpoints where log c(eta) crosses either threshold.
    const GRID: usize = 4000;
    let mut breaks = vec![lo];
    let step = (hi - lo) / GRID as f64;
    for threshold in [lc_lo, lc_hi] {
        if !threshold.is_finite() {
            continue;
        }
        let g = |eta: f64| log_c(eta) - threshold;
        let mut x0 = lo;
        let mut g0 = g(x0);
        for k in 1..=GRID {
            let x1 = if k == GRID { hi } else { lo + step * k as f64 };
            let g1 = g(x1);
            if (g0 <= 0.0) != (g1 <= 0.0) {
                let (mut a, mut b) = (x0, x1);
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if (g(mid) <= 0.0) == (g0 <= 0.0) {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                breaks.push(0.5 * (a + b));
            }
            x0 = x1;
            g0 = g1;
        }
    }
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    let z = |eta: f64| (eta - p.mu2) / p.sigma2;
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0] && inside(0.5 * (w[0] + w[1])))
        .map(|w| std_normal_cdf(z(w[1])) - std_normal_cdf(z(w[0])))
        .sum()
}
