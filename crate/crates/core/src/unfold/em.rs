//! Poisson EM (Richardson-Lucy) solution of the discretized unfolding
//! system `g ~ Poisson(K x)`.

use serde::{Deserialize, Serialize};

use crate::error::{data, invalid, numerical, Result};
use crate::unfold::binning::Histogram3D;
use crate::unfold::kernel::KernelMatrix;

/// Allowed decrease of the log-likelihood per iteration, relative to its
/// magnitude, before the run is declared broken.
const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmResult {
    /// Number-weighted relative frequencies of the source classes.
    pub h: Histogram3D,
    /// Unnormalized source intensities `x`.
    pub intensity: Vec<f64>,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Log-likelihood after initialization and after every iteration.
    pub trace: Vec<f64>,
}

fn forward(kernel: &KernelMatrix, x: &[f64], mu: &mut [f64]) {
    mu.iter_mut().for_each(|m| *m = 0.0);
    for (col, xj) in kernel.columns.iter().zip(x) {
        if *xj == 0.0 {
            continue;
        }
        for e in col {
            mu[e.row as usize] += e.value * xj;
        }
    }
}

/// `sum_t g_t log mu_t - mu_t`, dropping the data-only constant.
pub fn poisson_loglik(g: &[f64], mu: &[f64]) -> f64 {
    g.iter()
        .zip(mu)
        .map(|(&gt, &mt)| if gt > 0.0 { gt * mt.ln() - mt } else { -mt })
        .sum()
}

/// Unfolds raw section counts `g` with `kernel`.
pub fn em_unfold(g: &Histogram3D, kernel: &KernelMatrix, cfg: &EmConfig) -> Result<EmResult> {
    let (bg, bk) = (&g.binning, &kernel.binning);
    if (bg.n_c, bg.n_s, bg.n_theta) != (bk.n_c, bk.n_s, bk.n_theta)
        || (bg.c_max - bk.c_max).abs() > 1e-9 * bg.c_max
    {
        return Err(invalid("histogram and kernel binnings differ"));
    }
    if !(cfg.rel_tol >= 0.0) || cfg.max_iter == 0 {
        return Err(invalid("EM needs max_iter > 0 and rel_tol >= 0"));
    }
    let n = g.values.len();
    let total: f64 = g.total();
    if total <= 0.0 {
        return Err(data("cannot unfold an empty histogram"));
    }

    let mut reached = vec![false; n];
    for col in &kernel.columns {
        for e in col {
            if e.value > 0.0 {
                reached[e.row as usize] = true;
            }
        }
    }
    if let Some(t) = (0..n).find(|&t| g.values[t] > 0.0 && !reached[t]) {
        let (i, j, k) = bg.unindex(t);
        return Err(numerical(format!("kernel cannot explain observation in class ({i}, {j}, {k})")));
    }

    let sens = kernel.sensitivity();
    let sens_total: f64 = sens.iter().filter(|s| **s > 0.0).sum();
    let mut x: Vec<f64> = sens
        .iter()
        .map(|&s| if s > 0.0 { total / sens_total } else { 0.0 })
        .collect();
    let mut mu = vec![0.0; n];
    forward(kernel, &x, &mut mu);
    let mut ll = poisson_loglik(&g.values, &mu);
    let mut trace = vec![ll];
    let mut ratio = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        for t in 0..n {
            ratio[t] = if g.values[t] > 0.0 { g.values[t] / mu[t] } else { 0.0 };
        }
        for (j, col) in kernel.columns.iter().enumerate() {
            if x[j] == 0.0 {
                continue;
            }
            let back: f64 = col.iter().map(|e| e.value * ratio[e.row as usize]).sum();
            x[j] *= back / sens[j];
        }
        forward(kernel, &x, &mut mu);
        let next = poisson_loglik(&g.values, &mu);
        if next < ll - MONOTONE_SLACK * ll.abs().max(1.0) {
            return Err(numerical(format!(
                "EM log-likelihood decreased from {ll} to {next} at iteration {iterations}"
            )));
        }
        trace.push(next);
        let change = (next - ll).abs();
        ll = next;
        if change <= cfg.rel_tol * ll.abs() {
            converged = true;
            break;
        }
    }

    let sx: f64 = x.iter().sum();
    let h = Histogram3D {
        binning: *bg,
        values: x.iter().map(|v| v / sx).collect(),
        normalized: true,
    };
    Ok(EmResult {
        h,
        intensity: x,
        iterations,
        log_likelihood: ll,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unfold::binning::BinningSpec;

    #[test]
    fn identity_kernel_is_a_fixed_point() {
        let b = BinningSpec::new(2, 2, 2, 1.0).unwrap();
        let g = Histogram3D::from_values(b, vec![3.0, 0.0, 5.0, 1.0, 0.0, 7.0, 2.0, 2.0], false).unwrap();
        let r = em_unfold(&g, &KernelMatrix::identity(b), &EmConfig::default()).unwrap();
        let want = g.normalize();
        for (a, w) in r.h.values.iter().zip(&want.values) {
            assert!((a - w).abs() < 1e-15);
        }
        assert!(r.converged && r.iterations <= 2);
    }

    #[test]
    fn hand_system_matches_grid_search() {
        let b = BinningSpec::new(2, 1, 1, 1.0).unwrap();
        let k = KernelMatrix::from_dense(b, &[vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let g = Histogram3D::from_values(b, vec![60.0, 40.0], false).unwrap();
        let r = em_unfold(&g, &k, &EmConfig { max_iter: 100_000, rel_tol: 1e-15 }).unwrap();

        // brute force: total mass is fixed at 100 by the Poisson score, so
        // search the share w of the first source on a fine grid
        let dev = |w: f64| {
            let mu = [100.0 * (0.8 * w + 0.2 * (1.0 - w)), 100.0 * (0.2 * w + 0.8 * (1.0 - w))];
            -poisson_loglik(&[60.0, 40.0], &mu)
        };
        let best = (0..=1_000_000)
            .map(|i| i as f64 / 1e6)
            .min_by(|a, b| dev(*a).partial_cmp(&dev(*b)).unwrap())
            .unwrap();
        assert!((r.h.values[0] - best).abs() < 1e-5, "{} vs {best}", r.h.values[0]);
        assert!((best - 2.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn monotone_and_normalized() {
        let b = BinningSpec::new(3, 1, 1, 1.0).unwrap();
        let k = KernelMatrix::from_dense(b, &[vec![0.5, 0.3, 0.1], vec![0.0, 0.4, 0.3], vec![0.0, 0.0, 0.2]]).unwrap();
        let g = Histogram3D::from_values(b, vec![40.0, 25.0, 7.0], false).unwrap();
        let r = em_unfold(&g, &k, &EmConfig::default()).unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * w[0].abs());
        }
        assert!((r.h.total() - 1.0).abs() < 1e-12);
        assert!(r.h.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn unreachable_observation_is_an_error() {
        let b = BinningSpec::new(2, 1, 1, 1.0).unwrap();
        let k = KernelMatrix::from_dense(b, &[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let g = Histogram3D::from_values(b, vec![1.0, 1.0], false).unwrap();
        let err = em_unfold(&g, &k, &EmConfig::default()).unwrap_err().to_string();
        assert!(err.contains("kernel cannot explain observation"), "{err}");
    }
}
