//! Equidistant trivariate classes for `(c, s, theta)` and `(C, S, alpha)`.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{data, invalid, Error, Result};
use crate::model::SpheroidAttributes;
use crate::sectioning::SectionEllipse;

/// The five preset class counts `(n_c, n_s, n_theta)`, coarse to fine.
pub const PRESETS: [(usize, usize, usize); 5] = [(6, 5, 6), (8, 5, 8), (12, 7, 10), (15, 10, 12), (18, 12, 15)];

/// Relative slack allowed above the top class edge before a value is out of
/// range.
const EDGE_SLACK: f64 = 1e-12;

/// Equidistant right-closed classes on `(0, c_max] x (0, 1] x [0, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinningSpec {
    pub n_c: usize,
    pub n_s: usize,
    pub n_theta: usize,
    pub c_max: f64,
}

impl BinningSpec {
    pub fn new(n_c: usize, n_s: usize, n_theta: usize, c_max: f64) -> Result<Self> {
        let b = Self {
            n_c,
            n_s,
            n_theta,
            c_max,
        };
        b.validate()?;
        Ok(b)
    }

    /// Preset `index` in `1..=5`.
    pub fn preset(index: usize, c_max: f64) -> Result<Self> {
        let &(n_c, n_s, n_theta) = index
            .checked_sub(1)
            .and_then(|i| PRESETS.get(i))
            .ok_or_else(|| invalid(format!("binning preset must be in 1..=5, got {index}")))?;
        Self::new(n_c, n_s, n_theta, c_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_c == 0 || self.n_s == 0 || self.n_theta == 0 {
            return Err(invalid("binning class counts must be positive"));
        }
        if !(self.c_max > 0.0 && self.c_max.is_finite()) {
            return Err(invalid(format!("binning c_max must be > 0, got {}", self.c_max)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_c * self.n_s * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same class counts with a different size range.
    pub fn with_c_max(&self, c_max: f64) -> Self {
        Self { c_max, ..*self }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_s + j) * self.n_theta + k
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.n_theta;
        let ij = idx / self.n_theta;
        (ij / self.n_s, ij % self.n_s, k)
    }

    pub fn c_width(&self) -> f64 {
        self.c_max / self.n_c as f64
    }

    pub fn s_width(&self) -> f64 {
        1.0 / self.n_s as f64
    }

    pub fn theta_width(&self) -> f64 {
        FRAC_PI_2 / self.n_theta as f64
    }

    pub fn c_edges(&self) -> Vec<f64> {
        edges(self.c_max, self.n_c)
    }

    pub fn s_edges(&self) -> Vec<f64> {
        edges(1.0, self.n_s)
    }

    pub fn theta_edges(&self) -> Vec<f64> {
        edges(FRAC_PI_2, self.n_theta)
    }

    /// Class of `(c, s, theta)`, or `None` outside the binned domain.
    pub fn classify(&self, c: f64, s: f64, theta: f64) -> Option<usize> {
        let i = class_of(c, self.c_max, self.n_c)?;
        let j = class_of(s, 1.0, self.n_s)?;
        let k = class_of(theta, FRAC_PI_2, self.n_theta)?;
        Some(self.index(i, j, k))
    }
}

fn edges(hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| if i == n { hi } else { hi * i as f64 / n as f64 }).collect()
}

/// Right-closed class of `x` among `n` equal classes on `(0, hi]`; zero goes
/// to the first class.
#[inline]
pub(crate) fn class_of(x: f64, hi: f64, n: usize) -> Option<usize> {
    if !(x >= 0.0 && x <= hi * (1.0 + EDGE_SLACK)) {
        return None;
    }
    let pos = (x / hi * n as f64).ceil() as usize;
    Some(pos.clamp(1, n) - 1)
}

/// Trivariate histogram of counts or relative frequencies, row-major in
/// `(i, j, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram3D {
    pub binning: BinningSpec,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl Histogram3D {
    pub fn zeros(binning: BinningSpec) -> Self {
        Self {
            binning,
            values: vec![0.0; binning.len()],
            normalized: false,
        }
    }

    pub fn from_values(binning: BinningSpec, values: Vec<f64>, normalized: bool) -> Result<Self> {
        if values.len() != binning.len() {
            return Err(invalid(format!(
                "histogram needs {} values, got {}",
                binning.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("histogram values must be finite and nonnegative"));
        }
        Ok(Self {
            binning,
            values,
            normalized,
        })
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.binning.index(i, j, k)]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Relative frequencies; an all-zero histogram stays zero.
    pub fn normalize(&self) -> Self {
        let t = self.total();
        let values = if t > 0.0 {
            self.values.iter().map(|v| v / t).collect()
        } else {
            self.values.clone()
        };
        Self {
            binning: self.binning,
            values,
            normalized: true,
        }
    }

    /// Marginal over the angle classes.
    pub fn marginal_theta(&self) -> Vec<f64> {
        let b = &self.binning;
        let mut m = vec![0.0; b.n_theta];
        for (idx, v) in self.values.iter().enumerate() {
            m[idx % b.n_theta] += v;
        }
        m
    }

    /// Marginal over `(c, s)` classes, row-major in `(i, j)`.
    pub fn marginal_cs(&self) -> Vec<f64> {
        let b = &self.binning;
        let mut m = vec![0.0; b.n_c * b.n_s];
        for (idx, v) in self.values.iter().enumerate() {
            m[idx / b.n_theta] += v;
        }
        m
    }

    /// CSV with columns `i, j, k, value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "k", "value"]).map_err(csv_err)?;
        for (idx, v) in self.values.iter().enumerate() {
            let (i, j, k) = self.binning.unindex(idx);
            w.write_record([i.to_string(), j.to_string(), k.to_string(), v.to_string()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| csv_err(e.into()))?;
        Ok(())
    }

    /// Reads the CSV written by [`Histogram3D::write_csv`].
    pub fn read_csv(path: &Path, binning: BinningSpec, normalized: bool) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let mut values = vec![0.0; binning.len()];
        for (line, rec) in rdr.deserialize::<(usize, usize, usize, f64)>().enumerate() {
            let (i, j, k, v) = rec.map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            if i >= binning.n_c || j >= binning.n_s || k >= binning.n_theta {
                return Err(data(format!(
                    "{}: line {}: class ({i}, {j}, {k}) outside the binning",
                    path.display(),
                    line + 2
                )));
            }
            values[binning.index(i, j, k)] = v;
        }
        Self::from_values(binning, values, normalized)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv {
        path: "<output>".into(),
        source: e,
    }
}

/// Counts of section ellipses by `(C, S, alpha)` class.
pub fn bin_ellipses(ellipses: &[SectionEllipse], binning: &BinningSpec) -> Result<Histogram3D> {
    let mut h = Histogram3D::zeros(*binning);
    for (n, e) in ellipses.iter().enumerate() {
        let idx = binning.classify(e.minor, e.shape, e.alpha).ok_or_else(|| {
            data(format!(
                "ellipse {n}: (C, S, alpha) = ({}, {}, {}) outside (0, {}] x (0, 1] x [0, pi/2]",
                e.minor, e.shape, e.alpha, binning.c_max
            ))
        })?;
        h.values[idx] += 1.0;
    }
    Ok(h)
}

/// Counts of spheroid marks by `(c, s, theta)` class.
pub fn bin_attributes(items: &[SpheroidAttributes], binning: &BinningSpec) -> Result<Histogram3D> {
    let mut h = Histogram3D::zeros(*binning);
    for (n, a) in items.iter().enumerate() {
        let idx = binning.classify(a.c, a.s, a.theta).ok_or_else(|| {
            data(format!(
                "record {n}: (c, s, theta) = ({}, {}, {}) outside (0, {}] x (0, 1] x [0, pi/2]",
                a.c, a.s, a.theta, binning.c_max
            ))
        })?;
        h.values[idx] += 1.0;
    }
    Ok(h)
}
