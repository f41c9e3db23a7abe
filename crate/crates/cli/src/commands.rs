use std::path::Path;

use serde::{Deserialize, Serialize};
use spheroest::io::{read_ellipses, read_spheroids, write_ellipses, write_spheroids};
use spheroest::mle::{fit_histogram, MleFit};
use spheroest::qle::{compute_statistics, default_start, fit_qle as run_qle, Intensity, QleConfig, QleFit, SectionSimulator};
use spheroest::sectioning::section_process;
use spheroest::simulate::{expected_hit_count, simulate_realization};
use spheroest::study::{check_sections, run_study, StudyConfig};
use spheroest::unfold::{bin_ellipses, em_unfold, estimate_kernel, BinningSpec, EmConfig, Histogram3D, KernelConfig, KernelMatrix};
use spheroest::{BoxWindow, EdgeRule, ModelParams, ObsWindow, ProcessConfig, SectionEllipse, SectionPlane};

use crate::files::{create_dir, in_config, read_config, read_json, write_atomic, write_json, CliError};
use crate::BinningArgs;

fn setting_one() -> ModelParams {
    StudyConfig::default().true_params
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SimulateConfig {
    params: ModelParams,
    lambda_v: f64,
    window: BoxWindow,
    seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            params: setting_one(),
            lambda_v: 50.0,
            window: BoxWindow::vertical_plate(10.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulateMeta {
    config: ProcessConfig,
    expected_count: f64,
    generated: usize,
    written: usize,
}

pub fn simulate(config: Option<&Path>, seed: Option<u64>, out: &Path, meta: Option<&Path>) -> Result<(), CliError> {
    let cfg: SimulateConfig = read_config(config)?;
    let process = ProcessConfig {
        lambda_v: cfg.lambda_v,
        params: cfg.params,
        window: cfg.window,
        seed: seed.unwrap_or(cfg.seed),
    };
    process.validate().map_err(in_config(config))?;
    let r = simulate_realization(&process)?;
    write_atomic(out, |w| Ok(write_spheroids(w, &r.spheroids)?))?;
    let meta_path = meta.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("json"));
    write_json(
        &meta_path,
        &SimulateMeta {
            config: process,
            expected_count: expected_hit_count(&process),
            generated: r.generated,
            written: r.spheroids.len(),
        },
    )
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaneSpec {
    normal: [f64; 3],
    offset: f64,
    e1: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SectionConfig {
    plane: PlaneSpec,
    window: ObsWindow,
    edge: EdgeRule,
}

impl Default for SectionConfig {
    fn default() -> Self {
        let v = SectionPlane::vertical();
        Self {
            plane: PlaneSpec {
                normal: v.normal,
                offset: v.offset,
                e1: v.e1,
            },
            window: ObsWindow::square(10.0),
            edge: EdgeRule::CentersIn,
        }
    }
}

pub fn section(spheroids: &Path, config: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let cfg: SectionConfig = read_config(config)?;
    let plane = SectionPlane::new(cfg.plane.normal, cfg.plane.offset, cfg.plane.e1).map_err(in_config(config))?;
    cfg.window.validate().map_err(in_config(config))?;
    if let EdgeRule::MinusSampling { margin } = cfg.edge {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(CliError::config(format!("edge margin must be >= 0, got {margin}")));
        }
    }
    let s = read_spheroids(spheroids)?;
    let ellipses = section_process(&s, &plane, &cfg.window, cfg.edge);
    write_atomic(out, |w| Ok(write_ellipses(w, &ellipses)?))
}

fn read_sections(path: &Path) -> Result<Vec<SectionEllipse>, CliError> {
    let e = read_ellipses(path)?;
    if e.is_empty() {
        return Err(CliError::data(format!("{} holds no ellipses", path.display())));
    }
    Ok(e)
}

fn binning_for(args: &BinningArgs, ellipses: &[SectionEllipse]) -> Result<BinningSpec, CliError> {
    let c_max = match args.c_max {
        Some(c) => c,
        None => {
            if !(args.c_max_factor >= 1.0) {
                return Err(CliError::config(format!("c-max-factor must be >= 1, got {}", args.c_max_factor)));
            }
            args.c_max_factor * ellipses.iter().map(|e| e.minor).fold(0.0, f64::max)
        }
    };
    Ok(match &args.classes {
        Some(c) => BinningSpec::new(c[0], c[1], c[2], c_max)?,
        None => BinningSpec::preset(args.preset, c_max)?,
    })
}

/// The kernel for `binning`, estimated at unit size range (or loaded from
/// `args.kernel`) and rescaled.
fn kernel_for(args: &BinningArgs, binning: &BinningSpec, seed: Option<u64>) -> Result<KernelMatrix, CliError> {
    let unit = match &args.kernel {
        Some(path) if path.exists() => {
            let k = KernelMatrix::load_json(path)?;
            let b = k.binning;
            if (b.n_c, b.n_s, b.n_theta) != (binning.n_c, binning.n_s, binning.n_theta) {
                return Err(CliError::config(format!(
                    "kernel in {} has classes ({}, {}, {}), expected ({}, {}, {})",
                    path.display(),
                    b.n_c,
                    b.n_s,
                    b.n_theta,
                    binning.n_c,
                    binning.n_s,
                    binning.n_theta
                )));
            }
            k.rescaled(1.0)
        }
        other => {
            let cfg = KernelConfig {
                mc_reps: args.mc_reps,
                seed: seed.unwrap_or(0),
            };
            let k = estimate_kernel(&binning.with_c_max(1.0), &cfg)?;
            if let Some(path) = other {
                write_atomic(path, |w| {
                    serde_json::to_writer(w, &k).map_err(|e| CliError::data(e.to_string()))
                })?;
            }
            k
        }
    };
    Ok(unit.rescaled(binning.c_max))
}

#[derive(Debug, Serialize)]
struct EmReport {
    binning: BinningSpec,
    iterations: usize,
    converged: bool,
    log_likelihood: f64,
    sections: usize,
}

fn write_histogram(path: &Path, h: &Histogram3D) -> Result<(), CliError> {
    write_atomic(path, |w| Ok(h.write_csv(w)?))
}

pub fn unfold(
    ellipses: &Path,
    args: &BinningArgs,
    seed: Option<u64>,
    identity: bool,
    out: &Path,
    counts: Option<&Path>,
    report: Option<&Path>,
) -> Result<(), CliError> {
    let e = read_sections(ellipses)?;
    let binning = binning_for(args, &e)?;
    let g = bin_ellipses(&e, &binning)?;
    let kernel = if identity {
        KernelMatrix::identity(binning)
    } else {
        kernel_for(args, &binning, seed)?
    };
    let em = em_unfold(&g, &kernel, &EmConfig::default())?;
    write_histogram(out, &em.h)?;
    if let Some(p) = counts {
        write_histogram(p, &g)?;
    }
    if let Some(p) = report {
        write_json(
            p,
            &EmReport {
                binning,
                iterations: em.iterations,
                converged: em.converged,
                log_likelihood: em.log_likelihood,
                sections: e.len(),
            },
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct UmleOutput {
    em: EmReport,
    fit: MleFit,
}

pub fn fit_umle(ellipses: &Path, args: &BinningArgs, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let e = read_sections(ellipses)?;
    let binning = binning_for(args, &e)?;
    let g = bin_ellipses(&e, &binning)?;
    let kernel = kernel_for(args, &binning, seed)?;
    let em = em_unfold(&g, &kernel, &EmConfig::default())?;
    let fit = fit_histogram(&em.h)?;
    write_json(
        out,
        &UmleOutput {
            em: EmReport {
                binning,
                iterations: em.iterations,
                converged: em.converged,
                log_likelihood: em.log_likelihood,
                sections: e.len(),
            },
            fit,
        },
    )
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FitQleConfig {
    /// Side of the square observation window `[0, side]^2`.
    window_side: f64,
    /// Known intensity; by default it is matched to the section count.
    lambda_v: Option<f64>,
    start: Option<ModelParams>,
    qle: QleConfig,
}

impl Default for FitQleConfig {
    fn default() -> Self {
        Self {
            window_side: 10.0,
            lambda_v: None,
            start: None,
            qle: QleConfig::default(),
        }
    }
}

fn simulator(side: f64, lambda_v: Option<f64>, n: usize) -> Result<SectionSimulator, CliError> {
    if !(side > 0.0 && side.is_finite()) {
        return Err(CliError::config(format!("window_side must be positive, got {side}")));
    }
    let intensity = match lambda_v {
        Some(l) if l > 0.0 && l.is_finite() => Intensity::Fixed(l),
        Some(l) => return Err(CliError::config(format!("lambda_v must be positive, got {l}"))),
        None => Intensity::MatchCount(n),
    };
    Ok(SectionSimulator::square(intensity, side))
}

#[derive(Debug, Serialize)]
struct QleOutput {
    sections: usize,
    window_side: f64,
    intensity: Intensity,
    start: ModelParams,
    fit: QleFit,
}

pub fn fit_qle(ellipses: &Path, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut cfg: FitQleConfig = read_config(config)?;
    if let Some(s) = seed {
        cfg.qle.seed = s;
    }
    if let Some(p) = &cfg.start {
        p.validate().map_err(in_config(config))?;
    }
    let e = read_sections(ellipses)?;
    let sim = simulator(cfg.window_side, cfg.lambda_v, e.len())?;
    let y = compute_statistics(&e)?;
    let start = cfg.start.unwrap_or_else(|| default_start(&y));
    let fit = run_qle(&sim, &y.0, &start, &cfg.qle)?;
    write_json(
        out,
        &QleOutput {
            sections: e.len(),
            window_side: cfg.window_side,
            intensity: sim.intensity,
            start,
            fit,
        },
    )
}

pub fn study(config: Option<&Path>, seed: Option<u64>, out_dir: &Path) -> Result<(), CliError> {
    let mut cfg: StudyConfig = read_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(in_config(config))?;
    let result = run_study(&cfg)?;
    create_dir(out_dir)?;
    write_atomic(&out_dir.join("rmse.csv"), |w| Ok(result.write_rmse_csv(w)?))?;
    write_atomic(&out_dir.join("bootstrap_se.csv"), |w| Ok(result.write_bootstrap_csv(w)?))?;
    write_atomic(&out_dir.join("estimates.csv"), |w| Ok(result.write_estimates_csv(w)?))?;
    write_json(&out_dir.join("study.json"), &result)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GofConfig {
    window_side: f64,
    lambda_v: Option<f64>,
    /// Simulated samples for the test and, separately, for the envelopes.
    m: usize,
    grid_points: usize,
    seed: u64,
}

impl Default for GofConfig {
    fn default() -> Self {
        Self {
            window_side: 10.0,
            lambda_v: None,
            m: 199,
            grid_points: 200,
            seed: 0,
        }
    }
}

/// Parameters from a bare parameter object or from a fit output.
fn params_from(path: &Path) -> Result<ModelParams, CliError> {
    let v = read_json(path)?;
    for pointer in ["", "/fit/theta_hat", "/fit/params", "/theta_hat", "/params"] {
        if let Some(x) = v.pointer(pointer) {
            if let Ok(p) = serde_json::from_value::<ModelParams>(x.clone()) {
                p.validate().map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
                return Ok(p);
            }
        }
    }
    Err(CliError::data(format!("{}: no model parameters found", path.display())))
}

#[derive(Debug, Serialize)]
struct GofRow {
    marginal: &'static str,
    statistic: f64,
    p_value: f64,
    m: usize,
    envelope_coverage: f64,
}

pub fn gof(ellipses: &Path, params: &Path, config: Option<&Path>, seed: Option<u64>, out_dir: &Path) -> Result<(), CliError> {
    let cfg: GofConfig = read_config(config)?;
    if cfg.m < 19 || cfg.grid_points < 2 {
        return Err(CliError::config(format!(
            "gof needs m >= 19 and grid_points >= 2, got m={} grid_points={}",
            cfg.m, cfg.grid_points
        )));
    }
    let theta = params_from(params)?;
    let e = read_sections(ellipses)?;
    let sim = simulator(cfg.window_side, cfg.lambda_v, e.len())?;
    let checks = check_sections(&e, &theta, &sim, cfg.m, cfg.grid_points, seed.unwrap_or(cfg.seed))?;
    create_dir(out_dir)?;
    let mut rows = Vec::new();
    for c in &checks {
        let name = c.marginal.name();
        write_atomic(&out_dir.join(format!("envelope_{name}.csv")), |w| Ok(c.envelope.write_csv(w)?))?;
        rows.push(GofRow {
            marginal: name,
            statistic: c.ks.statistic,
            p_value: c.ks.p_value,
            m: c.ks.m,
            envelope_coverage: c.envelope.coverage(),
        });
    }
    write_json(&out_dir.join("gof.json"), &rows)
}
