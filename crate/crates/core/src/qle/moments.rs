//! Monte Carlo moments of the summary statistics and their finite-difference
//! Jacobian under common random numbers.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rayon::prelude::*;

use crate::error::{invalid, numerical, Error, Result};
use crate::model::{sample_orientation, sample_size_shape, ModelParams};
use crate::qle::{from_phi, to_phi, N_PARAMS};
use crate::qle::stats::compute_statistics;
use crate::rng::{child_seed, SimRng};
use crate::sectioning::{section_process, EdgeRule, ObsWindow, SectionEllipse, SectionPlane};
use crate::simulate::{expected_hit_count, simulate_process, BoxWindow, ProcessConfig};

/// Attempts per replicate before a failing replicate aborts the estimate.
const MAX_ATTEMPTS: u64 = 10;
/// Draws behind the mean caliper used to match intensities.
const CALIPER_DRAWS: usize = 20_000;
const CALIPER_SEED: u64 = 0x4341_4c49;
/// Parameter values needing more spheroids than this per realization are
/// treated as infeasible.
pub const MAX_SIMULATED: f64 = 1e6;

/// A random statistic vector indexed by model parameters and a seed.
pub trait StatSimulator: Sync {
    /// Statistics of one realization at `theta` from stream `seed`. A
    /// [`Error::Data`] result marks a realization too sparse to summarize.
    fn simulate(&self, theta: &ModelParams, seed: u64) -> Result<Vec<f64>>;
}

/// How the process intensity is set for a parameter value.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Intensity {
    /// Known intensity per unit volume.
    Fixed(f64),
    /// Intensity whose expected number of retained sections equals the
    /// observed count.
    MatchCount(usize),
}

/// Full pipeline: simulate the spheroids hitting a plate window, section
/// them and summarize the retained ellipses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionSimulator {
    pub intensity: Intensity,
    pub window: BoxWindow,
    pub plane: SectionPlane,
    pub obs: ObsWindow,
    pub rule: EdgeRule,
}

impl SectionSimulator {
    /// Square observation window of side `side` in the plane `x = 0`, with
    /// the centres-in rule.
    pub fn square(intensity: Intensity, side: f64) -> Self {
        Self {
            intensity,
            window: BoxWindow::vertical_plate(side),
            plane: SectionPlane::vertical(),
            obs: ObsWindow::square(side),
            rule: EdgeRule::CentersIn,
        }
    }

    pub fn lambda_for(&self, theta: &ModelParams) -> f64 {
        match self.intensity {
            Intensity::Fixed(l) => l,
            Intensity::MatchCount(n) => n as f64 / (self.obs.area() * mean_caliper(theta, &self.plane.normal)),
        }
    }
}

impl SectionSimulator {
    /// Retained section ellipses of one realization at `theta`.
    pub fn sections(&self, theta: &ModelParams, seed: u64) -> Result<Vec<SectionEllipse>> {
        let cfg = ProcessConfig {
            lambda_v: self.lambda_for(theta),
            params: *theta,
            window: self.window,
            seed,
        };
        let expected = expected_hit_count(&cfg);
        if !(expected <= MAX_SIMULATED) {
            return Err(numerical(format!(
                "parameters need {expected:.3e} spheroids per realization, above {MAX_SIMULATED:.0e}"
            )));
        }
        let spheroids = simulate_process(&cfg)?;
        Ok(section_process(&spheroids, &self.plane, &self.obs, self.rule))
    }
}

impl StatSimulator for SectionSimulator {
    fn simulate(&self, theta: &ModelParams, seed: u64) -> Result<Vec<f64>> {
        let ellipses = self.sections(theta, seed)?;
        Ok(compute_statistics(&ellipses)?.0.to_vec())
    }
}

/// Mean width `E[2 hw]` of the typical spheroid in direction `v`, from a
/// fixed stream so it is a deterministic function of `theta`.
pub fn mean_caliper(theta: &ModelParams, v: &[f64; 3]) -> f64 {
    let mut rng = SimRng::seed_from_u64(CALIPER_SEED);
    let mut acc = 0.0;
    for _ in 0..CALIPER_DRAWS {
        let ss = sample_size_shape(theta, &mut rng);
        let w = sample_orientation(theta.beta, &mut rng).axis();
        let d = w[0] * v[0] + w[1] * v[1] + w[2] * v[2];
        acc += 2.0 * (ss.c * ss.c + (ss.a * ss.a - ss.c * ss.c) * d * d).sqrt();
    }
    acc / CALIPER_DRAWS as f64
}

/// Sample mean and covariance of the statistics at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n_sim: usize,
    pub seed: u64,
}

fn replicate<S: StatSimulator + ?Sized>(sim: &S, theta: &ModelParams, seed: u64, r: usize) -> Result<Vec<f64>> {
    let base = child_seed(seed, r as u64);
    for attempt in 0..MAX_ATTEMPTS {
        let s = if attempt == 0 { base } else { child_seed(base, attempt) };
        match sim.simulate(theta, s) {
            Ok(v) => return Ok(v),
            Err(Error::Data(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(numerical(format!(
        "replicate {r} produced no usable statistics in {MAX_ATTEMPTS} attempts"
    )))
}

/// Runs `n_sim` replicates with child seeds of `seed` and returns their
/// sample mean and covariance. Bit-reproducible for fixed inputs.
pub fn estimate_moments<S: StatSimulator + ?Sized>(
    sim: &S,
    theta: &ModelParams,
    n_sim: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    if n_sim < 20 {
        return Err(invalid(format!("n_sim must be at least 20, got {n_sim}")));
    }
    theta.validate()?;
    let rows = (0..n_sim)
        .into_par_iter()
        .map(|r| replicate(sim, theta, seed, r))
        .collect::<Result<Vec<_>>>()?;
    let q = rows[0].len();
    let n = n_sim as f64;
    let mut mean = DVector::zeros(q);
    for r in &rows {
        mean += DVector::from_column_slice(r);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(q, q);
    for r in &rows {
        let d = DVector::from_column_slice(r) - &mean;
        cov += &d * d.transpose();
    }
    cov /= n - 1.0;
    Ok(MomentEstimate {
        mean,
        cov,
        n_sim,
        seed,
    })
}

/// Central differences of the mean statistics in the unconstrained
/// coordinates, with the same seed at both ends of every difference.
/// Returns a `q x 6` matrix.
pub fn estimate_jacobian<S: StatSimulator + ?Sized>(
    sim: &S,
    theta: &ModelParams,
    n_sim: usize,
    seed: u64,
    steps: &[f64; N_PARAMS],
) -> Result<DMatrix<f64>> {
    if steps.iter().any(|h| !(*h > 0.0)) {
        return Err(invalid("finite-difference steps must be positive"));
    }
    let phi = to_phi(theta);
    let mut cols = Vec::with_capacity(N_PARAMS);
    for k in 0..N_PARAMS {
        let mut h = steps[k];
        let mut pair = None;
        for _ in 0..=4 {
            let mut plus = phi;
            let mut minus = phi;
            plus[k] += h;
            minus[k] -= h;
            if let (Some(tp), Some(tm)) = (from_phi(&plus), from_phi(&minus)) {
                pair = Some((tp, tm));
                break;
            }
            h *= 0.5;
        }
        let (tp, tm) = pair.ok_or_else(|| {
            numerical(format!("perturbations of parameter {k} stay infeasible after 4 halvings"))
        })?;
        let mp = estimate_moments(sim, &tp, n_sim, seed)?.mean;
        let mm = estimate_moments(sim, &tm, n_sim, seed)?.mean;
        cols.push((mp - mm) / (2.0 * h));
    }
    Ok(DMatrix::from_columns(&cols))
}
