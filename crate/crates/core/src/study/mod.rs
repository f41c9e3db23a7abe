//! Simulation study comparing unfolding plus maximum likelihood, quasi-
//! likelihood from sections, and maximum likelihood from 3D data.

pub mod gof;
pub mod metrics;

pub use gof::{
    check_sections, data_grid, envelope_cdf, ks_test_mc, Envelope, KsTest, Marginal, MarginalCheck,
};
pub use metrics::{bootstrap_se_rmse, rmse};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mle::{fit_histogram, fit_mle3d};
use crate::model::{sample_attributes, ModelParams};
use crate::qle::{compute_statistics, default_start, fit_qle, Intensity, QleConfig, SectionSimulator};
use crate::rng::{child_rng, child_seed, stream};
use crate::sectioning::SectionEllipse;
use crate::simulate::ProcessConfig;
use crate::unfold::{bin_attributes, bin_ellipses, em_unfold, BinningSpec, EmConfig, KernelCache, KernelConfig, PRESETS};

/// Which estimators a study runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodFlags {
    pub umle: bool,
    pub qle: bool,
    pub binmle: bool,
    pub mle3d: bool,
}

impl Default for MethodFlags {
    fn default() -> Self {
        Self {
            umle: true,
            qle: true,
            binmle: true,
            mle3d: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub true_params: ModelParams,
    pub lambda_v: f64,
    pub window_side: f64,
    pub n_reps: usize,
    /// Class counts `(n_c, n_s, n_theta)`; the size range is set per sample.
    pub binnings: Vec<[usize; 3]>,
    pub methods: MethodFlags,
    pub seed: u64,
    /// Upper size class edge as a multiple of the largest observed size.
    pub c_max_factor: f64,
    pub kernel: KernelConfig,
    pub em: EmConfig,
    pub qle: QleConfig,
    pub bootstrap_reps: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            true_params: ModelParams {
                mu1: -2.15,
                mu2: 0.55,
                sigma1: 0.35,
                sigma2: 0.3,
                rho: 0.0,
                beta: 1.0,
            },
            lambda_v: 50.0,
            window_side: 10.0,
            n_reps: 100,
            binnings: PRESETS.iter().map(|&(a, b, c)| [a, b, c]).collect(),
            methods: MethodFlags::default(),
            seed: 0,
            c_max_factor: 1.25,
            kernel: KernelConfig::default(),
            em: EmConfig::default(),
            qle: QleConfig::default(),
            bootstrap_reps: 1000,
        }
    }
}

impl StudyConfig {
    /// Twenty replicates with 50 simulations per quasi-likelihood moment.
    pub fn desk(true_params: ModelParams) -> Self {
        Self {
            true_params,
            n_reps: 20,
            qle: QleConfig {
                n_sim: 50,
                ..QleConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.true_params.validate()?;
        if self.n_reps < 2 {
            return Err(invalid(format!("n_reps must be at least 2, got {}", self.n_reps)));
        }
        if !(self.lambda_v > 0.0 && self.lambda_v.is_finite()) {
            return Err(invalid(format!("lambda_v must be positive, got {}", self.lambda_v)));
        }
        if !(self.window_side > 0.0 && self.window_side.is_finite()) {
            return Err(invalid(format!("window_side must be positive, got {}", self.window_side)));
        }
        if !(self.c_max_factor >= 1.0 && self.c_max_factor.is_finite()) {
            return Err(invalid(format!("c_max_factor must be at least 1, got {}", self.c_max_factor)));
        }
        for b in &self.binnings {
            BinningSpec::new(b[0], b[1], b[2], 1.0)?;
        }
        Ok(())
    }

    /// Method labels in result order.
    pub fn method_names(&self) -> Vec<String> {
        let nb = self.binnings.len();
        let mut names = Vec::new();
        if self.methods.umle {
            names.extend((1..=nb).map(|v| format!("UMLE{v}")));
        }
        if self.methods.qle {
            names.push("QLE".into());
        }
        if self.methods.binmle {
            names.extend((1..=nb).map(|v| format!("BINMLE{v}")));
        }
        if self.methods.mle3d {
            names.push("MLE3D".into());
        }
        names
    }

    fn simulator(&self) -> SectionSimulator {
        SectionSimulator::square(Intensity::Fixed(self.lambda_v), self.window_side)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub rep: usize,
    pub message: String,
}

/// Estimates and error summaries of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    /// One entry per replicate; `None` where the method failed.
    pub estimates: Vec<Option<[f64; 6]>>,
    /// Asymptotic standard errors per replicate, for methods that report them.
    pub standard_errors: Vec<Option<[f64; 6]>>,
    pub failures: Vec<ReplicateFailure>,
    /// Fits that returned an estimate without meeting their convergence
    /// criterion. They are kept in the error summaries.
    pub not_converged: usize,
    /// `None` when no replicate succeeded.
    pub rmse: Option<[f64; 6]>,
    /// `None` with fewer than two successful replicates.
    pub bootstrap_se: Option<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub truth: ModelParams,
    pub methods: Vec<MethodResult>,
    /// Number of retained sections per replicate.
    pub section_counts: Vec<usize>,
}

struct Estimate {
    params: [f64; 6],
    se: Option<[f64; 6]>,
    converged: bool,
}

type Fit = std::result::Result<Estimate, String>;

struct Replicate {
    n: usize,
    fits: Vec<Fit>,
}

fn as_fit(r: Result<([f64; 6], bool)>) -> Fit {
    r.map(|(params, converged)| Estimate {
        params,
        se: None,
        converged,
    })
    .map_err(|e| e.to_string())
}

/// Largest value of `f` over `items`, for the size class range.
fn largest<T>(items: &[T], f: impl Fn(&T) -> f64) -> f64 {
    items.iter().map(f).fold(0.0, f64::max)
}

fn run_replicate(cfg: &StudyConfig, cache: &KernelCache, rep: usize) -> Result<Replicate> {
    let seed = child_seed(cfg.seed, rep as u64);
    let sim = cfg.simulator();
    let theta = &cfg.true_params;
    let ellipses: Vec<SectionEllipse> = sim.sections(theta, child_seed(seed, stream::PROCESS))?;
    let n = ellipses.len();
    let mut fits = Vec::new();

    if cfg.methods.umle {
        let c_max = cfg.c_max_factor * largest(&ellipses, |e| e.minor);
        for b in &cfg.binnings {
            fits.push(as_fit((|| {
                let binning = BinningSpec::new(b[0], b[1], b[2], c_max)?;
                let g = bin_ellipses(&ellipses, &binning)?;
                let kernel = cache.get(&binning, &cfg.kernel)?;
                let em = em_unfold(&g, &kernel, &cfg.em)?;
                let fit = fit_histogram(&em.h)?;
                Ok((fit.params.to_array(), em.converged && fit.converged))
            })()));
        }
    }
    if cfg.methods.qle {
        let qle = (|| {
            let y = compute_statistics(&ellipses)?;
            let qcfg = QleConfig {
                seed: child_seed(seed, stream::QLE),
                ..cfg.qle
            };
            let fit = fit_qle(&sim, &y.0, &default_start(&y), &qcfg)?;
            Ok(Estimate {
                params: fit.theta_hat.to_array(),
                se: Some(fit.asymptotic_se),
                converged: fit.converged,
            })
        })();
        fits.push(qle.map_err(|e: Error| e.to_string()));
    }
    if cfg.methods.binmle || cfg.methods.mle3d {
        let mut rng = child_rng(seed, stream::TYPICAL);
        let typical: Vec<_> = (0..n).map(|_| sample_attributes(theta, &mut rng)).collect();
        if cfg.methods.binmle {
            let c_max = cfg.c_max_factor * largest(&typical, |t| t.c);
            for b in &cfg.binnings {
                fits.push(as_fit((|| {
                    let binning = BinningSpec::new(b[0], b[1], b[2], c_max)?;
                    let fit = fit_histogram(&bin_attributes(&typical, &binning)?)?;
                    Ok((fit.params.to_array(), fit.converged))
                })()));
            }
        }
        if cfg.methods.mle3d {
            fits.push(as_fit(fit_mle3d(&typical).map(|f| (f.params.to_array(), f.converged))));
        }
    }
    Ok(Replicate { n, fits })
}

/// Runs the study with a fresh kernel cache.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    run_study_with_cache(cfg, &KernelCache::new())
}

/// Runs all replicates in parallel and aggregates them in replicate order,
/// so the result depends only on the configuration.
pub fn run_study_with_cache(cfg: &StudyConfig, cache: &KernelCache) -> Result<StudyResult> {
    cfg.validate()?;
    if cfg.methods.umle {
        for b in &cfg.binnings {
            cache.get(&BinningSpec::new(b[0], b[1], b[2], 1.0)?, &cfg.kernel)?;
        }
    }
    let reps = (0..cfg.n_reps)
        .into_par_iter()
        .map(|r| run_replicate(cfg, cache, r))
        .collect::<Result<Vec<_>>>()?;

    let truth = cfg.true_params.to_array();
    let mut methods = Vec::new();
    for (m, name) in cfg.method_names().into_iter().enumerate() {
        let mut estimates = Vec::with_capacity(cfg.n_reps);
        let mut standard_errors = Vec::with_capacity(cfg.n_reps);
        let mut failures = Vec::new();
        let mut not_converged = 0;
        for (rep, r) in reps.iter().enumerate() {
            match &r.fits[m] {
                Ok(est) => {
                    estimates.push(Some(est.params));
                    standard_errors.push(est.se);
                    not_converged += usize::from(!est.converged);
                }
                Err(message) => {
                    estimates.push(None);
                    standard_errors.push(None);
                    failures.push(ReplicateFailure {
                        rep,
                        message: message.clone(),
                    });
                }
            }
        }
        let ok: Vec<[f64; 6]> = estimates.iter().flatten().copied().collect();
        let to6 = |v: Vec<f64>| -> [f64; 6] { v.try_into().expect("six components") };
        let rmse = rmse(&ok, &truth).ok().map(to6);
        let mut rng = child_rng(cfg.seed, stream::BOOTSTRAP ^ m as u64);
        let bootstrap_se = bootstrap_se_rmse(&ok, &truth, cfg.bootstrap_reps, &mut rng).ok().map(to6);
        methods.push(MethodResult {
            method: name,
            estimates,
            standard_errors,
            failures,
            not_converged,
            rmse,
            bootstrap_se,
        });
    }
    Ok(StudyResult {
        truth: cfg.true_params,
        methods,
        section_counts: reps.iter().map(|r| r.n).collect(),
    })
}

fn csv_error(e: csv::Error) -> Error {
    Error::Csv {
        path: "<output>".into(),
        source: e,
    }
}

impl StudyResult {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == name)
    }

    fn write_table<W: Write>(&self, out: W, pick: impl Fn(&MethodResult) -> Option<[f64; 6]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method"];
        header.extend(ModelParams::NAMES);
        header.extend(["n_ok", "n_failed", "n_not_converged"]);
        w.write_record(&header).map_err(csv_error)?;
        for m in &self.methods {
            let mut row = vec![m.method.clone()];
            match pick(m) {
                Some(v) => row.extend(v.iter().map(|x| x.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            let n_ok = m.estimates.iter().flatten().count();
            row.extend([n_ok, m.failures.len(), m.not_converged].map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| csv_error(e.into()))
    }

    /// One row per method with the rmse of each parameter.
    pub fn write_rmse_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_table(out, |m| m.rmse)
    }

    /// One row per method with the bootstrap standard error of each rmse.
    pub fn write_bootstrap_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_table(out, |m| m.bootstrap_se)
    }

    /// Every successful estimate as `method, rep, n, params...`.
    pub fn write_estimates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method", "rep", "n"];
        header.extend(ModelParams::NAMES);
        w.write_record(&header).map_err(csv_error)?;
        for m in &self.methods {
            for (rep, e) in m.estimates.iter().enumerate() {
                if let Some(v) = e {
                    let mut row = vec![m.method.clone(), rep.to_string(), self.section_counts[rep].to_string()];
                    row.extend(v.iter().map(|x| x.to_string()));
                    w.write_record(&row).map_err(csv_error)?;
                }
            }
        }
        w.flush().map_err(|e| csv_error(e.into()))
    }
}

/// Sections of one realization of the study design, as the study itself
/// would draw them for replicate `rep`.
pub fn study_sections(cfg: &StudyConfig, rep: usize) -> Result<Vec<SectionEllipse>> {
    let seed = child_seed(cfg.seed, rep as u64);
    cfg.simulator().sections(&cfg.true_params, child_seed(seed, stream::PROCESS))
}

/// Process configuration behind [`study_sections`].
pub fn study_process(cfg: &StudyConfig, rep: usize) -> ProcessConfig {
    let seed = child_seed(cfg.seed, rep as u64);
    let sim = cfg.simulator();
    ProcessConfig {
        lambda_v: cfg.lambda_v,
        params: cfg.true_params,
        window: sim.window,
        seed: child_seed(seed, stream::PROCESS),
    }
}
