//! Exact simulation of a stationary Poisson process of prolate spheroids,
//! restricted to the spheroids that hit a convex box window.
//!
//! The semi-major axis `a` of a prolate spheroid is the radius of its
//! smallest circumscribed ball, so the germ-grain process of circumscribed
//! balls hitting `W` is simulated exactly first: a Poisson number of balls
//! with mean `lambda * sum_k a_k E[R^k]` (Steiner coefficients `a_k` of `W`),
//! radii from the size-biased lognormal mixture and centres uniform on the
//! dilated window `W + B_r`. Shapes and orientations are then drawn
//! conditionally on the radius, and balls whose spheroid misses `W` are
//! dropped.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};

use crate::error::{invalid, numerical, Result};
use crate::model::{logistic, sample_orientation, ModelParams, SpheroidAttributes};
use crate::rng::{child_rng, child_seed, open01, rng_from_seed, stream};
use crate::sectioning::hits_box;

/// Largest expected number of generated spheroids per realization.
pub const MAX_EXPECTED_COUNT: f64 = 1e7;

/// Axis-aligned box `origin + [0, l1] x [0, l2] x [0, l3]`. Zero edge
/// lengths describe plates, segments, or a single point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxWindow {
    pub lengths: [f64; 3],
    #[serde(default)]
    pub origin: [f64; 3],
}

impl BoxWindow {
    pub fn new(lengths: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let w = Self { lengths, origin };
        w.validate()?;
        Ok(w)
    }

    pub fn unit_cube() -> Self {
        Self {
            lengths: [1.0, 1.0, 1.0],
            origin: [0.0; 3],
        }
    }

    /// A point window at the origin.
    pub fn point() -> Self {
        Self {
            lengths: [0.0; 3],
            origin: [0.0; 3],
        }
    }

    /// Square plate of side `side` lying in the plane `x = 0`, spanning
    /// `[0, side]` in `y` and `z`.
    pub fn vertical_plate(side: f64) -> Self {
        Self {
            lengths: [0.0, side, side],
            origin: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, &l) in self.lengths.iter().enumerate() {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(invalid(format!("window.lengths[{k}] must be finite and >= 0, got {l}")));
            }
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return Err(invalid("window.origin must be finite"));
        }
        Ok(())
    }

    pub fn min_corner(&self) -> [f64; 3] {
        self.origin
    }

    pub fn max_corner(&self) -> [f64; 3] {
        [
            self.origin[0] + self.lengths[0],
            self.origin[1] + self.lengths[1],
            self.origin[2] + self.lengths[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Squared Euclidean distance from `x` to the box.
    pub fn distance_squared(&self, x: &[f64; 3]) -> f64 {
        let lo = self.min_corner();
        let hi = self.max_corner();
        (0..3)
            .map(|k| {
                let d = if x[k] < lo[k] {
                    lo[k] - x[k]
                } else if x[k] > hi[k] {
                    x[k] - hi[k]
                } else {
                    0.0
                };
                d * d
            })
            .sum()
    }

    pub fn contains(&self, x: &[f64; 3]) -> bool {
        self.distance_squared(x) == 0.0
    }
}

/// Coefficients of the Steiner polynomial `V(W + B_r) = sum_k a_k r^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteinerCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl SteinerCoefficients {
    pub fn as_array(&self) -> [f64; 4] {
        [self.a0, self.a1, self.a2, self.a3]
    }

    pub fn dilated_volume(&self, r: f64) -> f64 {
        self.a0 + r * (self.a1 + r * (self.a2 + r * self.a3))
    }
}

/// Volume, surface area, integral of mean curvature and ball volume term
/// of a box window.
pub fn steiner_coefficients(window: &BoxWindow) -> SteinerCoefficients {
    let [l1, l2, l3] = window.lengths;
    SteinerCoefficients {
        a0: l1 * l2 * l3,
        a1: 2.0 * (l1 * l2 + l1 * l3 + l2 * l3),
        a2: PI * (l1 + l2 + l3),
        a3: 4.0 * PI / 3.0,
    }
}

/// A prolate spheroid with semi-axes `a >= c` and unit axis of revolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spheroid {
    pub center: [f64; 3],
    pub axis: [f64; 3],
    pub a: f64,
    pub c: f64,
}

impl Spheroid {
    /// Builds a spheroid, normalising `axis`.
    pub fn new(center: [f64; 3], axis: [f64; 3], a: f64, c: f64) -> Result<Self> {
        if !(c > 0.0 && a >= c && a.is_finite()) {
            return Err(invalid(format!("spheroid needs a >= c > 0, got a={a}, c={c}")));
        }
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(invalid("spheroid axis must be a nonzero finite vector"));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(invalid("spheroid center must be finite"));
        }
        Ok(Self {
            center,
            axis: [axis[0] / n, axis[1] / n, axis[2] / n],
            a,
            c,
        })
    }

    pub fn shape(&self) -> f64 {
        self.c / self.a
    }

    /// Folded polar angle of the axis with respect to the z-axis.
    pub fn polar_angle(&self) -> f64 {
        self.axis[2].abs().min(1.0).acos()
    }

    pub fn attributes(&self) -> SpheroidAttributes {
        SpheroidAttributes {
            c: self.c,
            s: self.shape(),
            theta: self.polar_angle(),
        }
    }

    /// Matrix `Q` of the quadric `(x - x0)^T Q (x - x0) = 1`.
    pub fn quadric(&self) -> Matrix3<f64> {
        let w = Vector3::from(self.axis);
        let ic2 = 1.0 / (self.c * self.c);
        let ia2 = 1.0 / (self.a * self.a);
        Matrix3::identity() * ic2 + w * w.transpose() * (ia2 - ic2)
    }
}

/// Intensity, model, window and seed of one process realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    pub lambda_v: f64,
    pub params: ModelParams,
    pub window: BoxWindow,
    pub seed: u64,
}

impl ProcessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_v > 0.0 && self.lambda_v.is_finite()) {
            return Err(invalid(format!("lambda_v must be > 0, got {}", self.lambda_v)));
        }
        self.params.validate()?;
        self.window.validate()
    }
}

/// `E[R^k]` of a lognormal `logN(mu, sigma^2)`.
#[inline]
pub fn lognormal_moment(mu: f64, sigma: f64, k: u32) -> f64 {
    let k = k as f64;
    (k * mu + 0.5 * k * k * sigma * sigma).exp()
}

/// Mean number of circumscribed balls hitting the window.
pub fn expected_hit_count(cfg: &ProcessConfig) -> f64 {
    let coef = steiner_coefficients(&cfg.window).as_array();
    cfg.lambda_v
        * (0..4)
            .map(|k| coef[k] * lognormal_moment(cfg.params.mu1, cfg.params.sigma1, k as u32))
            .sum::<f64>()
}

/// Mixing weights `p_k` of the hitting-radius distribution.
pub fn mixture_weights(window: &BoxWindow, mu: f64, sigma: f64) -> [f64; 4] {
    let coef = steiner_coefficients(window).as_array();
    let mut w = [0.0; 4];
    for k in 0..4 {
        w[k] = coef[k] * lognormal_moment(mu, sigma, k as u32);
    }
    let total: f64 = w.iter().sum();
    w.map(|v| v / total)
}

fn pick_class(weights: &[f64; 4], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // Rounding left `acc` marginally below one; take the last nonzero class.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(3)
}

#[inline]
fn hitting_radius(params: &ModelParams, weights: &[f64; 4], u: f64, z: f64) -> f64 {
    let k = pick_class(weights, u) as f64;
    let s2 = params.sigma1 * params.sigma1;
    (params.mu1 + k * s2 + params.sigma1 * z).exp()
}

/// Draws the radius of a circumscribed ball hitting the window: mixture
/// class `k` with probability `p_k`, then `logN(mu1 + k sigma1^2, sigma1^2)`.
pub fn sample_hitting_radius<R: Rng + ?Sized>(cfg: &ProcessConfig, rng: &mut R) -> f64 {
    let weights = mixture_weights(&cfg.window, cfg.params.mu1, cfg.params.sigma1);
    let u = open01(rng);
    let z: f64 = rng.sample(StandardNormal);
    hitting_radius(&cfg.params, &weights, u, z)
}

/// Uniform point on the dilated window `W + B_r`, by rejection from its
/// bounding box.
pub fn sample_center_given_radius<R: Rng + ?Sized>(window: &BoxWindow, r: f64, rng: &mut R) -> [f64; 3] {
    let lo = window.min_corner();
    let hi = window.max_corner();
    let r2 = r * r;
    loop {
        let mut x = [0.0; 3];
        for k in 0..3 {
            x[k] = lo[k] - r + (hi[k] - lo[k] + 2.0 * r) * rng.random::<f64>();
        }
        if window.distance_squared(&x) <= r2 {
            return x;
        }
    }
}

/// Poisson variate by inversion, so counts are monotone in the mean for a
/// fixed uniform.
fn poisson_by_inversion(mean: f64, u: f64) -> usize {
    if !(mean > 0.0) {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(dist) => dist.inverse_cdf(u) as usize,
        Err(_) => 0,
    }
}

/// Result of one realization: the kept spheroids and the number of
/// circumscribed balls generated before discarding non-hitting bodies.
#[derive(Debug, Clone)]
pub struct Realization {
    pub spheroids: Vec<Spheroid>,
    pub generated: usize,
}

/// Exact realization of the spheroids hitting `cfg.window`.
pub fn simulate_process(cfg: &ProcessConfig) -> Result<Vec<Spheroid>> {
    Ok(simulate_realization(cfg)?.spheroids)
}

/// Like [`simulate_process`] but also reports the pre-discard count.
///
/// Every spheroid draws from its own child stream of `cfg.seed`, in a fixed
/// order (mixture class, size and shape normals, orientation, then centre),
/// so realizations at nearby parameters share their random numbers.
pub fn simulate_realization(cfg: &ProcessConfig) -> Result<Realization> {
    cfg.validate()?;
    let mean = expected_hit_count(cfg);
    if !(mean <= MAX_EXPECTED_COUNT) {
        return Err(numerical(format!(
            "expected number of spheroids {mean:.3e} exceeds the limit {MAX_EXPECTED_COUNT:.0e}"
        )));
    }
    let mut top = rng_from_seed(cfg.seed);
    let n = poisson_by_inversion(mean, open01(&mut top));
    let weights = mixture_weights(&cfg.window, cfg.params.mu1, cfg.params.sigma1);
    let item_seed = child_seed(cfg.seed, stream::PROCESS);

    let mut spheroids = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = child_rng(item_seed, i as u64);
        let sph = draw_hitting_spheroid(cfg, &weights, &mut rng);
        if hits_box(&sph, &cfg.window) {
            spheroids.push(sph);
        }
    }
    Ok(Realization {
        spheroids,
        generated: n,
    })
}

fn draw_hitting_spheroid<R: Rng + ?Sized>(cfg: &ProcessConfig, weights: &[f64; 4], rng: &mut R) -> Spheroid {
    let p = &cfg.params;
    let u = open01(rng);
    let z_size: f64 = rng.sample(StandardNormal);
    let z_shape: f64 = rng.sample(StandardNormal);
    let orientation = sample_orientation(p.beta, rng);

    let a = hitting_radius(p, weights, u, z_size);
    let (m, sd) = p.eta_given_xi(a.ln());
    let s = logistic(m + sd * z_shape).max(f64::MIN_POSITIVE);
    let center = sample_center_given_radius(&cfg.window, a, rng);
    Spheroid {
        center,
        axis: orientation.axis(),
        a,
        c: a * s,
    }
}
