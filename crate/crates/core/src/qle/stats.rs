//! The twelve robust summary statistics of a set of section ellipses.

use serde::{Deserialize, Serialize};

use crate::error::{data, Result};
use crate::model::logit;
use crate::sectioning::SectionEllipse;
use crate::stats::{mad, median, pearson};

pub const N_STATS: usize = 12;

/// `med` and `mad` of `log C`, `log A`, `Y = logit S`, `S`, `alpha`, then
/// `cor(log C, log A)` and `cor(log A, Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats(pub [f64; N_STATS]);

impl SummaryStats {
    pub const NAMES: [&'static str; N_STATS] = [
        "med_log_c",
        "med_log_a",
        "med_y",
        "med_s",
        "med_alpha",
        "mad_log_c",
        "mad_log_a",
        "mad_y",
        "mad_s",
        "mad_alpha",
        "cor_log_c_log_a",
        "cor_log_a_y",
    ];

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Computes the statistics; needs at least three ellipses, none circular.
pub fn compute_statistics(ellipses: &[SectionEllipse]) -> Result<SummaryStats> {
    if ellipses.len() < 3 {
        return Err(data(format!("statistics need at least 3 ellipses, got {}", ellipses.len())));
    }
    let n = ellipses.len();
    let mut log_c = Vec::with_capacity(n);
    let mut log_a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    for (i, e) in ellipses.iter().enumerate() {
        if !(e.shape > 0.0 && e.shape < 1.0) {
            return Err(data(format!("ellipse {i}: S = {} leaves logit(S) undefined", e.shape)));
        }
        log_c.push(e.minor.ln());
        log_a.push((e.minor / e.shape).ln());
        y.push(logit(e.shape));
        s.push(e.shape);
        alpha.push(e.alpha);
    }
    let zero_var = || data("zero variance: correlation statistics undefined");
    let cor_ca = pearson(&log_c, &log_a).ok_or_else(zero_var)?;
    let cor_ay = pearson(&log_a, &y).ok_or_else(zero_var)?;
    Ok(SummaryStats([
        median(&log_c),
        median(&log_a),
        median(&y),
        median(&s),
        median(&alpha),
        mad(&log_c),
        mad(&log_a),
        mad(&y),
        mad(&s),
        mad(&alpha),
        cor_ca,
        cor_ay,
    ]))
}
