//! Monte Carlo estimate of the discretized section kernel.
//!
//! Column `(i, j, k)` holds, for a spheroid with marks uniform on that
//! source class, the expected number of section ellipses falling in each
//! observed class per unit length of plane positions. A section at offset
//! `t` from the centre is the central section scaled by
//! `sqrt(1 - (t / hw)^2)`, so `S` and `alpha` do not depend on `t` and the
//! offsets landing in each `C` class form two intervals of known length.
//! Each draw of the marks therefore contributes its exact conditional
//! expectation over the offset.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{child_rng, child_seed, stream};
use crate::sectioning::{half_width, intersect, SectionPlane};
use crate::simulate::Spheroid;
use crate::unfold::binning::{class_of, BinningSpec};

/// Smallest aspect ratio drawn in the kernel. The expected section rate of
/// a class is proportional to `E[1/s]`, which diverges on the lowest shape
/// class without a floor.
pub const MIN_SHAPE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Draws per source class.
    pub mc_reps: usize,
    pub seed: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            mc_reps: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEntry {
    pub row: u32,
    pub value: f64,
    pub se: f64,
}

/// Sparse kernel, one column per source class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub binning: BinningSpec,
    pub mc_reps: usize,
    pub seed: u64,
    pub columns: Vec<Vec<KernelEntry>>,
}

impl KernelMatrix {
    /// Each source class observed only in its own class.
    pub fn identity(binning: BinningSpec) -> Self {
        let columns = (0..binning.len())
            .map(|j| {
                vec![KernelEntry {
                    row: j as u32,
                    value: 1.0,
                    se: 0.0,
                }]
            })
            .collect();
        Self {
            binning,
            mc_reps: 0,
            seed: 0,
            columns,
        }
    }

    /// Kernel from a dense `rows[observed][source]` matrix.
    pub fn from_dense(binning: BinningSpec, rows: &[Vec<f64>]) -> Result<Self> {
        let n = binning.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(invalid(format!("dense kernel must be {n} x {n}")));
        }
        let columns = (0..n)
            .map(|j| {
                (0..n)
                    .filter(|&t| rows[t][j] != 0.0)
                    .map(|t| KernelEntry {
                        row: t as u32,
                        value: rows[t][j],
                        se: 0.0,
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            binning,
            mc_reps: 0,
            seed: 0,
            columns,
        })
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.columns[col]
            .iter()
            .find(|e| e.row as usize == row)
            .map_or(0.0, |e| e.value)
    }

    /// Column sums: expected sections per source spheroid over all classes.
    pub fn sensitivity(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.iter().map(|e| e.value).sum()).collect()
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    /// The same kernel for a size range `c_max`. Sections scale with the
    /// spheroid, so every entry scales linearly with the range.
    pub fn rescaled(&self, c_max: f64) -> Self {
        let f = c_max / self.binning.c_max;
        Self {
            binning: self.binning.with_c_max(c_max),
            mc_reps: self.mc_reps,
            seed: self.seed,
            columns: self
                .columns
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|e| KernelEntry {
                            row: e.row,
                            value: e.value * f,
                            se: e.se * f,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self)?;
        fs::write(path, s).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// Box of source marks `(c, s, theta)`, each range half-open on the left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceBox {
    pub c: (f64, f64),
    pub s: (f64, f64),
    pub theta: (f64, f64),
}

impl SourceBox {
    pub fn of_class(binning: &BinningSpec, col: usize) -> Self {
        let (i, j, k) = binning.unindex(col);
        let (wc, ws, wt) = (binning.c_width(), binning.s_width(), binning.theta_width());
        Self {
            c: (wc * i as f64, wc * (i + 1) as f64),
            s: (ws * j as f64, ws * (j + 1) as f64),
            theta: (wt * k as f64, (wt * (k + 1) as f64).min(FRAC_PI_2)),
        }
    }
}

/// Estimates one kernel column from `reps` draws of marks uniform on `src`.
pub fn estimate_column<R: Rng + ?Sized>(
    src: &SourceBox,
    binning: &BinningSpec,
    reps: usize,
    rng: &mut R,
) -> Vec<KernelEntry> {
    let n_rows = binning.len();
    let mut sum = vec![0.0; n_rows];
    let mut sum_sq = vec![0.0; n_rows];
    let mut touched: Vec<usize> = Vec::new();
    let c_edges = binning.c_edges();
    let plane = SectionPlane::vertical();
    let s_lo = src.s.0.max(MIN_SHAPE).min(src.s.1);
    let mut contrib = vec![0.0; binning.n_c];

    for _ in 0..reps {
        let c = src.c.1 - (src.c.1 - src.c.0) * rng.random::<f64>();
        let s = src.s.1 - (src.s.1 - s_lo) * rng.random::<f64>();
        let theta = src.theta.0 + (src.theta.1 - src.theta.0) * rng.random::<f64>();
        let phi = TAU * rng.random::<f64>();
        if !(c > 0.0 && s > 0.0) {
            continue;
        }
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let sph = Spheroid {
            center: [0.0; 3],
            axis: [st * cp, st * sp, ct],
            a: c / s,
            c,
        };
        let Some(e) = intersect(&sph, &plane) else { continue };
        let hw = half_width(&sph, &plane.normal);
        let (Some(jj), Some(kk)) = (class_of(e.shape, 1.0, binning.n_s), class_of(e.alpha, FRAC_PI_2, binning.n_theta))
        else {
            continue;
        };
        let c0 = e.minor.min(binning.c_max);
        // fraction of |t| / hw in [0, 1] for which the scaled minor axis
        // lies in each C class
        let level = |edge: f64| {
            let r = (edge / c0).min(1.0);
            (1.0 - r * r).sqrt()
        };
        let top = class_of(c0, binning.c_max, binning.n_c).unwrap_or(binning.n_c - 1);
        for ii in 0..=top {
            contrib[ii] = 2.0 * hw * (level(c_edges[ii]) - level(c_edges[ii + 1]));
        }
        for (ii, &v) in contrib.iter().enumerate().take(top + 1) {
            if v <= 0.0 {
                continue;
            }
            let row = binning.index(ii, jj, kk);
            if sum[row] == 0.0 {
                touched.push(row);
            }
            sum[row] += v;
            sum_sq[row] += v * v;
        }
    }

    touched.sort_unstable();
    let n = reps as f64;
    touched
        .into_iter()
        .map(|row| {
            let mean = sum[row] / n;
            let var = if reps > 1 {
                ((sum_sq[row] - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            KernelEntry {
                row: row as u32,
                value: mean,
                se: (var / n).sqrt(),
            }
        })
        .collect()
}

/// Estimates every column of the kernel, in parallel over source classes
/// with one random stream per class.
pub fn estimate_kernel(binning: &BinningSpec, cfg: &KernelConfig) -> Result<KernelMatrix> {
    binning.validate()?;
    if cfg.mc_reps == 0 {
        return Err(invalid("kernel mc_reps must be positive"));
    }
    let base = child_seed(cfg.seed, stream::KERNEL);
    let columns = (0..binning.len())
        .into_par_iter()
        .map(|col| {
            let mut rng = child_rng(base, col as u64);
            estimate_column(&SourceBox::of_class(binning, col), binning, cfg.mc_reps, &mut rng)
        })
        .collect();
    Ok(KernelMatrix {
        binning: *binning,
        mc_reps: cfg.mc_reps,
        seed: cfg.seed,
        columns,
    })
}

type CacheKey = (usize, usize, usize, usize, u64);

/// Kernels computed once per class layout and reused at any size range.
#[derive(Debug, Default)]
pub struct KernelCache {
    inner: Mutex<HashMap<CacheKey, Arc<KernelMatrix>>>,
}

impl KernelCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// The kernel for `binning`, estimated at unit size range on first use.
    pub fn get(&self, binning: &BinningSpec, cfg: &KernelConfig) -> Result<KernelMatrix> {
        let key = (binning.n_c, binning.n_s, binning.n_theta, cfg.mc_reps, cfg.seed);
        let unit = {
            let cached = self.inner.lock().expect("kernel cache poisoned").get(&key).cloned();
            match cached {
                Some(k) => k,
                None => {
                    let k = Arc::new(estimate_kernel(&binning.with_c_max(1.0), cfg)?);
                    self.inner
                        .lock()
                        .expect("kernel cache poisoned")
                        .entry(key)
                        .or_insert(k)
                        .clone()
                }
            }
        };
        Ok(unit.rescaled(binning.c_max))
    }
}
