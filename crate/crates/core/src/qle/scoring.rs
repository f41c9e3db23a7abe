//! Quasi-score, quasi-information and the Fisher quasi-scoring iteration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, numerical, Result};
use crate::model::ModelParams;
use crate::qle::moments::{estimate_jacobian, estimate_moments, MomentEstimate, StatSimulator};
use crate::qle::stats::N_STATS;
use crate::qle::{dtheta_dphi, from_phi, to_phi, DEFAULT_STEPS, N_PARAMS};

/// Covariances with a larger condition number get a diagonal ridge.
pub const MAX_CONDITION: f64 = 1e12;
const FIRST_RIDGE: f64 = 1e-8;
/// Longest full step in any unconstrained coordinate; longer scoring steps
/// are shortened as a whole before backtracking.
pub const MAX_STEP: f64 = 0.5;
const LAST_RIDGE: f64 = 1e4;

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let ev = m.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (ev.min(), ev.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `cov` itself when well conditioned, else `cov + eps tr(cov)/q I` with
/// the smallest `eps = 1e-8 * 10^k` that brings the condition number below
/// [`MAX_CONDITION`].
pub fn regularize(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !cov.is_square() || cov.iter().any(|v| !v.is_finite()) {
        return Err(invalid("covariance must be a finite square matrix"));
    }
    if condition_number(cov) < MAX_CONDITION {
        return Ok(cov.clone());
    }
    let q = cov.nrows();
    let scale = cov.trace() / q as f64;
    if !(scale > 0.0) {
        return Err(numerical("covariance is singular beyond repair (zero trace)"));
    }
    let mut eps = FIRST_RIDGE;
    while eps <= LAST_RIDGE {
        let r = cov + DMatrix::identity(q, q) * (eps * scale);
        if condition_number(&r) < MAX_CONDITION {
            return Ok(r);
        }
        eps *= 10.0;
    }
    Err(numerical("covariance is singular beyond repair"))
}

fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.solve(b))
        .ok_or_else(|| numerical("matrix is not positive definite"))
}

/// `J^T V^-1 (y - m)`.
pub fn quasi_score(jacobian: &DMatrix<f64>, cov: &DMatrix<f64>, y: &DVector<f64>, mean: &DVector<f64>) -> Result<DVector<f64>> {
    let v = regularize(cov)?;
    let r = DMatrix::from_column_slice(y.len(), 1, (y - mean).as_slice());
    let w = solve_spd(&v, &r)?;
    Ok(DVector::from_column_slice((jacobian.transpose() * w).as_slice()))
}

/// `J^T V^-1 J`.
pub fn quasi_information(jacobian: &DMatrix<f64>, cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let v = regularize(cov)?;
    let w = solve_spd(&v, jacobian)?;
    let i = jacobian.transpose() * w;
    Ok((&i + i.transpose()) * 0.5)
}

/// `Q^T I^-1 Q`.
pub fn quasi_deviance(score: &DVector<f64>, info: &DMatrix<f64>) -> Result<f64> {
    let x = info
        .clone()
        .lu()
        .solve(score)
        .ok_or_else(|| numerical("quasi-information is singular"))?;
    Ok(score.dot(&x))
}

/// Moments and Jacobian of the statistics in the unconstrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub jacobian: DMatrix<f64>,
}

/// Source of statistic moments at unconstrained parameters.
pub trait MomentModel {
    fn evaluate(&self, phi: &[f64; N_PARAMS]) -> Result<Evaluation>;
}

/// Moments from simulation, with one frozen seed for every parameter value.
pub struct McMomentModel<'a, S: StatSimulator + ?Sized> {
    pub sim: &'a S,
    pub n_sim: usize,
    pub seed: u64,
    pub steps: [f64; N_PARAMS],
}

impl<S: StatSimulator + ?Sized> MomentModel for McMomentModel<'_, S> {
    fn evaluate(&self, phi: &[f64; N_PARAMS]) -> Result<Evaluation> {
        let theta = from_phi(phi).ok_or_else(|| numerical("parameter outside the feasible region"))?;
        let m = estimate_moments(self.sim, &theta, self.n_sim, self.seed)?;
        let jacobian = estimate_jacobian(self.sim, &theta, self.n_sim, self.seed, &self.steps)?;
        Ok(Evaluation {
            mean: m.mean,
            cov: m.cov,
            jacobian,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QleConfig {
    pub n_sim: usize,
    pub max_iter: usize,
    /// Convergence threshold on the quasi-deviance.
    pub tol: f64,
    pub max_halvings: usize,
    pub seed: u64,
    pub steps: [f64; N_PARAMS],
    /// Moment-matching rounds applied to the starting value before scoring.
    pub start_rounds: usize,
}

impl Default for QleConfig {
    fn default() -> Self {
        Self {
            n_sim: 100,
            max_iter: 30,
            tol: 1e-2,
            max_halvings: 6,
            seed: 0,
            steps: DEFAULT_STEPS,
            start_rounds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub theta: ModelParams,
    pub step: f64,
    pub score_norm: f64,
    pub quasi_deviance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QleFit {
    pub theta_hat: ModelParams,
    /// Starting point followed by every accepted iterate.
    pub iterations: Vec<IterationRecord>,
    /// Quasi-information in the natural parameters.
    pub quasi_info: Vec<Vec<f64>>,
    pub asymptotic_se: [f64; N_PARAMS],
    pub quasi_deviance: f64,
    pub converged: bool,
    pub stalled: bool,
    pub config: QleConfig,
}

struct Point {
    phi: [f64; N_PARAMS],
    score: DVector<f64>,
    info: DMatrix<f64>,
    deviance: f64,
}

fn evaluate_point<M: MomentModel + ?Sized>(model: &M, y: &DVector<f64>, phi: [f64; N_PARAMS]) -> Result<Point> {
    let ev = model.evaluate(&phi)?;
    if ev.mean.len() != y.len() {
        return Err(invalid(format!(
            "observed statistics have length {}, model gives {}",
            y.len(),
            ev.mean.len()
        )));
    }
    let score = quasi_score(&ev.jacobian, &ev.cov, y, &ev.mean)?;
    let info = quasi_information(&ev.jacobian, &ev.cov)?;
    let deviance = quasi_deviance(&score, &info)?;
    Ok(Point {
        phi,
        score,
        info,
        deviance,
    })
}

/// Fisher quasi-scoring in the unconstrained coordinates with step halving
/// on the quasi-deviance. Returns the best iterate; `converged` when its
/// quasi-deviance is below `cfg.tol` and the standard errors are finite.
pub fn quasi_scoring_fit<M: MomentModel + ?Sized>(
    model: &M,
    y: &[f64],
    theta0: &ModelParams,
    cfg: &QleConfig,
) -> Result<QleFit> {
    theta0.validate()?;
    let y = DVector::from_column_slice(y);
    let mut cur = evaluate_point(model, &y, to_phi(theta0))?;
    let record = |p: &Point, step: f64| -> Result<IterationRecord> {
        Ok(IterationRecord {
            theta: from_phi(&p.phi).ok_or_else(|| numerical("iterate left the feasible region"))?,
            step,
            score_norm: p.score.norm(),
            quasi_deviance: p.deviance,
        })
    };
    let mut trace = vec![record(&cur, 0.0)?];
    let mut stalled = false;

    for _ in 0..cfg.max_iter {
        if cur.deviance < cfg.tol {
            break;
        }
        let delta = cur
            .info
            .clone()
            .lu()
            .solve(&cur.score)
            .ok_or_else(|| numerical("quasi-information is singular"))?;
        let longest = delta.amax();
        let delta = if longest > MAX_STEP { delta * (MAX_STEP / longest) } else { delta };
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..=cfg.max_halvings {
            let mut phi = cur.phi;
            for k in 0..N_PARAMS {
                phi[k] += t * delta[k];
            }
            if from_phi(&phi).is_some() {
                if let Ok(p) = evaluate_point(model, &y, phi) {
                    if p.deviance < cur.deviance {
                        next = Some(p);
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        match next {
            Some(p) => {
                cur = p;
                trace.push(record(&cur, t)?);
            }
            None => {
                stalled = true;
                break;
            }
        }
    }

    let theta_hat = from_phi(&cur.phi).ok_or_else(|| numerical("estimate left the feasible region"))?;
    let d = dtheta_dphi(&theta_hat);
    let (se, info_nat) = match cur.info.clone().try_inverse() {
        Some(inv) => {
            let mut se = [f64::NAN; N_PARAMS];
            for k in 0..N_PARAMS {
                se[k] = d[k].abs() * inv[(k, k)].max(0.0).sqrt();
            }
            let mut nat = vec![vec![0.0; N_PARAMS]; N_PARAMS];
            for (r, row) in nat.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = cur.info[(r, c)] / (d[r] * d[c]);
                }
            }
            (se, nat)
        }
        None => ([f64::NAN; N_PARAMS], vec![vec![f64::NAN; N_PARAMS]; N_PARAMS]),
    };
    let se_ok = se.iter().all(|s| s.is_finite() && *s > 0.0);
    Ok(QleFit {
        theta_hat,
        iterations: trace,
        quasi_info: info_nat,
        asymptotic_se: se,
        quasi_deviance: cur.deviance,
        converged: cur.deviance < cfg.tol && se_ok,
        stalled,
        config: *cfg,
    })
}

/// Coordinate, steering statistic, gain and log-scale flag for start
/// matching. The shape spread and the correlation have no statistic that
/// steers them reliably across orientations; the shape spread is scanned
/// over [`START_SIGMA2`] instead and the correlation stays put.
const START_MAP: [(usize, usize, f64, bool); 4] = [(0, 1, 1.0, false), (1, 2, 1.0, false), (2, 6, 1.0, true), (5, 4, 0.5, false)];
const START_SIGMA2: [f64; 4] = [0.1, 0.2, 0.4, 0.8];
const START_MAX_MOVE: f64 = 1.0;

fn standardized_residual(y: &[f64], m: &MomentEstimate) -> f64 {
    (0..y.len())
        .map(|k| (y[k] - m.mean[k]).powi(2) / m.cov[(k, k)].max(f64::MIN_POSITIVE))
        .sum()
}

/// Pulls `theta0` towards the observed statistics with simulated means
/// only: location, size spread and orientation are matched to one statistic
/// each for every candidate shape spread (including the one in `theta0`).
/// Returns the visited point with the smallest standardized residual.
pub fn match_start<S: StatSimulator + ?Sized>(
    sim: &S,
    y: &[f64],
    theta0: &ModelParams,
    n_sim: usize,
    seed: u64,
    rounds: usize,
) -> Result<ModelParams> {
    if y.len() != N_STATS {
        return Err(invalid(format!("expected {N_STATS} statistics, got {}", y.len())));
    }
    theta0.validate()?;
    let mut best = (f64::INFINITY, *theta0);
    if rounds == 0 {
        return Ok(*theta0);
    }
    let mut candidates = vec![theta0.sigma2];
    candidates.extend(START_SIGMA2);
    for sigma2 in candidates {
        let mut phi = to_phi(&ModelParams { sigma2, ..*theta0 });
        let mut last = f64::INFINITY;
        for _ in 0..rounds {
            let Some(theta) = from_phi(&phi) else { break };
            let Ok(m) = estimate_moments(sim, &theta, n_sim, seed) else { break };
            let resid = standardized_residual(y, &m);
            if resid < best.0 {
                best = (resid, theta);
            }
            if !(resid < last) {
                break;
            }
            last = resid;
            for &(k, stat, gain, log) in &START_MAP {
                let d = if log {
                    (y[stat].max(f64::MIN_POSITIVE) / m.mean[stat].max(f64::MIN_POSITIVE)).ln()
                } else {
                    y[stat] - m.mean[stat]
                };
                phi[k] += (d / gain).clamp(-START_MAX_MOVE, START_MAX_MOVE);
            }
        }
    }
    Ok(best.1)
}

/// Quasi-scoring driven by simulated statistics.
pub fn fit_qle<S: StatSimulator + ?Sized>(
    sim: &S,
    y: &[f64],
    theta0: &ModelParams,
    cfg: &QleConfig,
) -> Result<QleFit> {
    let start = match_start(sim, y, theta0, cfg.n_sim, cfg.seed, cfg.start_rounds)?;
    let model = McMomentModel {
        sim,
        n_sim: cfg.n_sim,
        seed: cfg.seed,
        steps: cfg.steps,
    };
    quasi_scoring_fit(&model, y, &start, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_spd<R: Rng>(q: usize, rng: &mut R) -> DMatrix<f64> {
        let a = random_matrix(q, q, rng);
        &a * a.transpose() + DMatrix::identity(q, q) * 0.5
    }

    #[test]
    fn score_vanishes_at_the_mean() {
        let mut rng = rng_from_seed(1);
        let j = random_matrix(12, 6, &mut rng);
        let v = random_spd(12, &mut rng);
        let m = DVector::from_fn(12, |_, _| rng.random::<f64>());
        assert_eq!(quasi_score(&j, &v, &m, &m).unwrap().norm(), 0.0);
    }

    #[test]
    fn scalar_case() {
        let j = DMatrix::from_element(1, 1, 2.5);
        let v = DMatrix::from_element(1, 1, 0.4);
        let y = DVector::from_element(1, 3.0);
        let m = DVector::from_element(1, 1.2);
        let q = quasi_score(&j, &v, &y, &m).unwrap();
        assert!((q[0] - 2.5 * 1.8 / 0.4).abs() < 1e-14);
        let i = quasi_information(&j, &v).unwrap();
        assert!((i[(0, 0)] - 2.5 * 2.5 / 0.4).abs() < 1e-14);
    }

    #[test]
    fn affine_invariance() {
        let mut rng = rng_from_seed(2);
        for _ in 0..20 {
            let j = random_matrix(12, 6, &mut rng);
            let v = random_spd(12, &mut rng);
            let y = DVector::from_fn(12, |_, _| rng.random::<f64>());
            let m = DVector::from_fn(12, |_, _| rng.random::<f64>());
            let a = random_matrix(12, 12, &mut rng) + DMatrix::identity(12, 12) * 3.0;
            let b = DVector::from_fn(12, |_, _| rng.random::<f64>());
            let q1 = quasi_score(&j, &v, &y, &m).unwrap();
            let q2 = quasi_score(&(&a * &j), &(&a * &v * a.transpose()), &(&a * &y + &b), &(&a * &m + &b)).unwrap();
            assert!((&q1 - &q2).norm() <= 1e-8 * q1.norm());
            let i1 = quasi_information(&j, &v).unwrap();
            let i2 = quasi_information(&(&a * &j), &(&a * &v * a.transpose())).unwrap();
            assert!((&i1 - &i2).norm() <= 1e-8 * i1.norm());
        }
    }

    #[test]
    fn information_is_psd() {
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let j = random_matrix(12, 6, &mut rng);
            let v = random_spd(12, &mut rng);
            let i = quasi_information(&j, &v).unwrap();
            assert!(i.symmetric_eigen().eigenvalues.min() >= -1e-10);
        }
    }

    #[test]
    fn ridge_only_when_ill_conditioned() {
        let v = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!(regularize(&v).unwrap(), v);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let r = regularize(&s).unwrap();
        assert!(condition_number(&r) < MAX_CONDITION);
        assert!(regularize(&DMatrix::zeros(2, 2)).is_err());
    }

    /// Statistics linear in the unconstrained parameters with fixed
    /// covariance.
    struct Linear {
        a: DMatrix<f64>,
        b: DVector<f64>,
        v: DMatrix<f64>,
    }

    impl MomentModel for Linear {
        fn evaluate(&self, phi: &[f64; N_PARAMS]) -> Result<Evaluation> {
            let p = DVector::from_column_slice(phi);
            Ok(Evaluation {
                mean: &self.b + &self.a * p,
                cov: self.v.clone(),
                jacobian: self.a.clone(),
            })
        }
    }

    #[test]
    fn linear_model_solves_weighted_least_squares_in_one_step() {
        let mut rng = rng_from_seed(4);
        let lin = Linear {
            a: random_matrix(12, 6, &mut rng) * 0.3,
            b: DVector::from_fn(12, |_, _| rng.random::<f64>()),
            v: random_spd(12, &mut rng) * 0.01,
        };
        let theta0 = ModelParams::new(-2.0, 0.5, 0.3, 0.3, 0.1, 1.0).unwrap();
        let y = &lin.b + &lin.a * DVector::from_column_slice(&to_phi(&theta0))
            + DVector::from_fn(12, |_, _| 0.05 * rng.sample::<f64, _>(StandardNormal));
        let fit = quasi_scoring_fit(&lin, y.as_slice(), &theta0, &QleConfig::default()).unwrap();

        let vinv = lin.v.clone().try_inverse().unwrap();
        let lhs = lin.a.transpose() * &vinv * &lin.a;
        let rhs = lin.a.transpose() * &vinv * (&y - &lin.b);
        let wls = lhs.lu().solve(&rhs).unwrap();
        let got = to_phi(&fit.theta_hat);
        for k in 0..N_PARAMS {
            assert!((got[k] - wls[k]).abs() < 1e-6, "{k}: {} vs {}", got[k], wls[k]);
        }
        assert_eq!(fit.iterations.len(), 2);
        assert_eq!(fit.iterations[1].step, 1.0);
        assert!(fit.converged);
        assert!(fit.asymptotic_se.iter().all(|s| *s > 0.0 && s.is_finite()));
        for w in fit.iterations.windows(2) {
            assert!(w[1].quasi_deviance <= w[0].quasi_deviance);
        }
    }
}
