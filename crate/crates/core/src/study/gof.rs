//! Simulation-based goodness of fit for section data: Monte Carlo
//! Kolmogorov–Smirnov tests and pointwise envelopes of empirical c.d.f.s.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{data, invalid, Error, Result};
use crate::qle::SectionSimulator;
use crate::model::ModelParams;
use crate::sectioning::SectionEllipse;
use crate::stats::{ecdf_sorted, ks_two_sample, quantile_sorted};

/// Ellipse attributes whose marginal distributions are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Marginal {
    A,
    C,
    S,
    Alpha,
}

impl Marginal {
    pub const ALL: [Marginal; 4] = [Marginal::A, Marginal::C, Marginal::S, Marginal::Alpha];

    pub fn name(&self) -> &'static str {
        match self {
            Marginal::A => "A",
            Marginal::C => "C",
            Marginal::S => "S",
            Marginal::Alpha => "alpha",
        }
    }

    pub fn values(&self, ellipses: &[SectionEllipse]) -> Vec<f64> {
        ellipses
            .iter()
            .map(|e| match self {
                Marginal::A => e.major,
                Marginal::C => e.minor,
                Marginal::S => e.shape,
                Marginal::Alpha => e.alpha,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    /// Distance between the data and the pooled sample.
    pub statistic: f64,
    pub p_value: f64,
    pub m: usize,
}

fn sorted(mut v: Vec<f64>) -> Result<Vec<f64>> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(data("sample contains NaN"));
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Monte Carlo two-sample KS test. The data and `m` samples from
/// `sampler` are pooled; each of the `m + 1` samples is compared with the
/// pool, and the p-value is the rank of the data's distance,
/// `(1 + #{simulated >= data}) / (m + 1)`. The samples are exchangeable
/// under the model, so the p-value is exact on its grid.
pub fn ks_test_mc<R, F>(values: &[f64], mut sampler: F, m: usize, rng: &mut R) -> Result<KsTest>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<Vec<f64>>,
{
    if values.is_empty() {
        return Err(data("KS test needs data"));
    }
    if m < 19 {
        return Err(invalid(format!("KS test needs m >= 19 simulated samples, got {m}")));
    }
    let mut samples = vec![sorted(values.to_vec())?];
    for i in 0..m {
        let s = sampler(rng)?;
        if s.is_empty() {
            return Err(data(format!("simulated sample {i} is empty")));
        }
        samples.push(sorted(s)?);
    }
    let pool = sorted(samples.iter().flatten().copied().collect())?;
    let d: Vec<f64> = samples.iter().map(|s| ks_two_sample(s, &pool)).collect();
    let exceed = d[1..].iter().filter(|&&x| x >= d[0]).count();
    Ok(KsTest {
        statistic: d[0],
        p_value: (1 + exceed) as f64 / (m + 1) as f64,
        m,
    })
}

/// Pointwise envelope of simulated empirical c.d.f.s with the data's own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub empirical: Vec<f64>,
}

impl Envelope {
    /// Share of grid points where the data's c.d.f. lies inside the band.
    pub fn coverage(&self) -> f64 {
        let inside = (0..self.grid.len())
            .filter(|&i| self.lower[i] <= self.empirical[i] && self.empirical[i] <= self.upper[i])
            .count();
        inside as f64 / self.grid.len() as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Csv {
            path: "<output>".into(),
            source: e,
        };
        w.write_record(["x", "lower", "upper", "empirical"]).map_err(err)?;
        for i in 0..self.grid.len() {
            w.serialize((self.grid[i], self.lower[i], self.upper[i], self.empirical[i]))
                .map_err(err)?;
        }
        w.flush().map_err(|e| err(e.into()))
    }
}

/// 2.5% and 97.5% pointwise quantiles of `m` simulated empirical c.d.f.s
/// on `grid`, together with the empirical c.d.f. of `values`.
pub fn envelope_cdf<R, F>(values: &[f64], mut sampler: F, m: usize, grid: &[f64], rng: &mut R) -> Result<Envelope>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<Vec<f64>>,
{
    if values.is_empty() || grid.is_empty() {
        return Err(data("envelope needs data and a grid"));
    }
    if m == 0 {
        return Err(invalid("envelope needs at least one simulated sample"));
    }
    let mut curves = vec![Vec::with_capacity(m); grid.len()];
    for i in 0..m {
        let s = sorted(sampler(rng)?)?;
        if s.is_empty() {
            return Err(data(format!("simulated sample {i} is empty")));
        }
        for (g, x) in grid.iter().enumerate() {
            curves[g].push(ecdf_sorted(&s, *x));
        }
    }
    let data_sorted = sorted(values.to_vec())?;
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    for c in &mut curves {
        c.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(c, 0.025));
        upper.push(quantile_sorted(c, 0.975));
    }
    Ok(Envelope {
        grid: grid.to_vec(),
        lower,
        upper,
        empirical: grid.iter().map(|x| ecdf_sorted(&data_sorted, *x)).collect(),
    })
}

/// `n` equally spaced points from the smallest to the largest value.
pub fn data_grid(values: &[f64], n: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) || n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Test and envelope for one marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub marginal: Marginal,
    pub ks: KsTest,
    pub envelope: Envelope,
}

/// KS tests and envelopes for `A`, `C`, `S` and `alpha` of `ellipses`
/// against sections simulated from `theta` with `sim`. Simulated samples
/// come from child seeds of `seed`; the test and the envelope use
/// separate sets of `m` samples.
pub fn check_sections(
    ellipses: &[SectionEllipse],
    theta: &ModelParams,
    sim: &SectionSimulator,
    m: usize,
    grid_points: usize,
    seed: u64,
) -> Result<Vec<MarginalCheck>> {
    use crate::rng::{child_seed, rng_from_seed};
    let total = 2 * m;
    let sims = (0..total)
        .map(|i| sim.sections(theta, child_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for marginal in Marginal::ALL {
        let values = marginal.values(ellipses);
        let mut next = 0usize;
        let mut take = |_: &mut _| -> Result<Vec<f64>> {
            let v = marginal.values(&sims[next]);
            next += 1;
            Ok(v)
        };
        let mut rng = rng_from_seed(seed);
        let ks = ks_test_mc(&values, &mut take, m, &mut rng)?;
        let grid = data_grid(&values, grid_points);
        let envelope = envelope_cdf(&values, &mut take, m, &grid, &mut rng)?;
        out.push(MarginalCheck { marginal, ks, envelope });
    }
    Ok(out)
}
