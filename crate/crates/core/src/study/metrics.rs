//! Root mean squared error of replicate estimates and its bootstrap
//! standard error.

use rand::Rng;

use crate::error::{data, invalid, Result};

fn check<E: AsRef<[f64]>>(estimates: &[E], truth: &[f64]) -> Result<()> {
    if let Some((i, e)) = estimates.iter().enumerate().find(|(_, e)| e.as_ref().len() != truth.len()) {
        return Err(invalid(format!(
            "estimate {i} has {} components, truth has {}",
            e.as_ref().len(),
            truth.len()
        )));
    }
    Ok(())
}

fn rmse_of<E: AsRef<[f64]>>(estimates: &[E], idx: impl Iterator<Item = usize> + Clone, truth: &[f64]) -> Vec<f64> {
    let n = idx.clone().count() as f64;
    (0..truth.len())
        .map(|k| {
            let ss: f64 = idx.clone().map(|i| (estimates[i].as_ref()[k] - truth[k]).powi(2)).sum();
            (ss / n).sqrt()
        })
        .collect()
}

/// Componentwise `sqrt(mean((est - truth)^2))`.
pub fn rmse<E: AsRef<[f64]>>(estimates: &[E], truth: &[f64]) -> Result<Vec<f64>> {
    if estimates.is_empty() {
        return Err(data("rmse needs at least one estimate"));
    }
    check(estimates, truth)?;
    Ok(rmse_of(estimates, 0..estimates.len(), truth))
}

/// Standard deviation of the rmse over `b` resamples of the replicates
/// drawn with replacement.
pub fn bootstrap_se_rmse<E: AsRef<[f64]>, R: Rng + ?Sized>(
    estimates: &[E],
    truth: &[f64],
    b: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if b < 100 {
        return Err(invalid(format!("bootstrap needs at least 100 resamples, got {b}")));
    }
    if estimates.len() < 2 {
        return Err(data(format!("bootstrap needs at least 2 estimates, got {}", estimates.len())));
    }
    check(estimates, truth)?;
    let n = estimates.len();
    let p = truth.len();
    let mut sum = vec![0.0; p];
    let mut sum_sq = vec![0.0; p];
    let mut idx = vec![0usize; n];
    for _ in 0..b {
        idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
        let r = rmse_of(estimates, idx.iter().copied(), truth);
        for k in 0..p {
            sum[k] += r[k];
            sum_sq[k] += r[k] * r[k];
        }
    }
    let bf = b as f64;
    Ok((0..p)
        .map(|k| {
            let mean = sum[k] / bf;
            ((sum_sq[k] - bf * mean * mean) / (bf - 1.0)).max(0.0).sqrt()
        })
        .collect())
}
