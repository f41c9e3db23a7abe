use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spheroest"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn spheroest")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Simulates setting 1 in a plate window of side `side` and sections it.
fn sections(dir: &Path, side: f64, seed: &str) -> PathBuf {
    let sim_cfg = dir.join("sim.json");
    fs::write(
        &sim_cfg,
        format!(r#"{{"lambda_v": 50, "window": {{"lengths": [0, {side}, {side}]}}}}"#),
    )
    .unwrap();
    let sec_cfg = dir.join("sec.json");
    fs::write(&sec_cfg, format!(r#"{{"window": {{"min": [0, 0], "max": [{side}, {side}]}}}}"#)).unwrap();
    let sph = dir.join("spheroids.csv");
    let ell = dir.join("ellipses.csv");
    ok(&["simulate", "--config", p(&sim_cfg), "--out", p(&sph), "--seed", seed]);
    ok(&["section", "--spheroids", p(&sph), "--config", p(&sec_cfg), "--out", p(&ell)]);
    ell
}

#[test]
fn simulate_is_reproducible_and_near_the_expected_count() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["simulate", "--out", p(&a), "--seed", "5"]);
    ok(&["simulate", "--out", p(&b), "--seed", "5", "--threads", "1"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let meta = json(&dir.path().join("a.json"));
    let expected = meta["expected_count"].as_f64().unwrap();
    let generated = meta["generated"].as_f64().unwrap();
    assert!(generated > 0.0);
    assert!((generated - expected).abs() < 5.0 * expected.sqrt(), "{generated} vs {expected}");
    let rows = fs::read_to_string(&a).unwrap().lines().count() - 1;
    assert_eq!(rows as f64, meta["written"].as_f64().unwrap());
    assert!(rows > 0);
}

#[test]
fn config_errors_name_the_field_and_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let out = dir.path().join("s.csv");

    fs::write(&cfg, r#"{"params": {"mu1": -2.15, "mu2": 0.55, "sigma1": 0.35, "sigma2": 0.3, "rho": 1.5, "beta": 1}}"#).unwrap();
    let r = run(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("rho"));
    assert!(!out.exists());

    fs::write(&cfg, r#"{"lambda": 50}"#).unwrap();
    let r = run(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("lambda"));
}

#[test]
fn data_errors_cite_lines_and_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let ell = dir.path().join("e.csv");
    fs::write(&ell, "id,x,y,A,C,S,alpha\n1,1,1,0.3,0.1,0.3333333,0.2\n2,1,1,0.3,0.1,0.3333333,7\n").unwrap();
    let out = dir.path().join("h.csv");
    let r = run(&["unfold", "--ellipses", p(&ell), "--identity-kernel", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 3"));

    let r = run(&["unfold", "--ellipses", p(&dir.path().join("missing.csv")), "--identity-kernel", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn identity_kernel_unfolding_returns_the_input_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let ell = sections(dir.path(), 5.0, "3");
    let h = dir.path().join("h.csv");
    let g = dir.path().join("g.csv");
    let report = dir.path().join("em.json");
    ok(&[
        "unfold", "--ellipses", p(&ell), "--identity-kernel", "--out", p(&h), "--counts", p(&g), "--report", p(&report),
    ]);
    let read = |path: &Path| -> Vec<f64> {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect()
    };
    let (hv, gv) = (read(&h), read(&g));
    let total: f64 = gv.iter().sum();
    assert_eq!(total as u64, json(&report)["sections"].as_u64().unwrap());
    for (a, b) in hv.iter().zip(&gv) {
        assert!((a - b / total).abs() < 1e-12);
    }
}

#[test]
fn section_output_feeds_the_unfolding_fit() {
    let dir = tempfile::tempdir().unwrap();
    let ell = sections(dir.path(), 5.0, "4");
    let kernel = dir.path().join("kernel.json");
    let fit = dir.path().join("umle.json");
    let args = ["fit-umle", "--ellipses", p(&ell), "--preset", "1", "--mc-reps", "400", "--kernel", p(&kernel), "--out", p(&fit)];
    ok(&args);
    assert!(kernel.exists());
    let first = fs::read(&fit).unwrap();
    // a second run reads the saved kernel and reproduces the fit
    ok(&args);
    assert_eq!(fs::read(&fit).unwrap(), first);
    let v = json(&fit);
    let beta = v["fit"]["params"]["beta"].as_f64().unwrap();
    assert!(beta > 0.0 && beta.is_finite());
}

#[test]
fn quasi_likelihood_fit_recovers_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let ell = sections(dir.path(), 10.0, "11");
    let cfg = dir.path().join("qle.json");
    fs::write(&cfg, r#"{"window_side": 10, "qle": {"n_sim": 50}}"#).unwrap();
    let out = dir.path().join("qle_fit.json");
    ok(&["fit-qle", "--ellipses", p(&ell), "--config", p(&cfg), "--out", p(&out), "--seed", "2"]);
    let v = json(&out);
    let truth = [-2.15, 0.55, 0.35, 0.3, 0.0, 1.0];
    let names = ["mu1", "mu2", "sigma1", "sigma2", "rho", "beta"];
    let se = v["fit"]["asymptotic_se"].as_array().unwrap();
    for (k, name) in names.iter().enumerate() {
        let est = v["fit"]["theta_hat"][name].as_f64().unwrap();
        let s = se[k].as_f64().unwrap();
        assert!(s > 0.0 && s.is_finite(), "{name}: se {s}");
        assert!((est - truth[k]).abs() <= 3.0 * s, "{name}: {est} vs {} (se {s})", truth[k]);
    }
    assert_eq!(v["fit"]["config"]["seed"].as_u64(), Some(2));
}

#[test]
fn goodness_of_fit_on_self_simulated_data() {
    let dir = tempfile::tempdir().unwrap();
    let ell = sections(dir.path(), 10.0, "21");
    let params = dir.path().join("params.json");
    fs::write(&params, r#"{"mu1": -2.15, "mu2": 0.55, "sigma1": 0.35, "sigma2": 0.3, "rho": 0, "beta": 1}"#).unwrap();
    let cfg = dir.path().join("gof.json");
    fs::write(&cfg, r#"{"window_side": 10, "m": 39, "grid_points": 100}"#).unwrap();
    let out = dir.path().join("gof");
    ok(&["gof", "--ellipses", p(&ell), "--params", p(&params), "--config", p(&cfg), "--out-dir", p(&out)]);
    let rows = json(&out.join("gof.json"));
    for r in rows.as_array().unwrap() {
        let name = r["marginal"].as_str().unwrap();
        let pv = r["p_value"].as_f64().unwrap();
        let k = pv * 40.0;
        assert!((k - k.round()).abs() < 1e-9, "{name}: {pv}");
        assert!(r["envelope_coverage"].as_f64().unwrap() >= 0.9, "{name}: {r}");
        let csv = fs::read_to_string(out.join(format!("envelope_{name}.csv"))).unwrap();
        assert!(csv.starts_with("x,lower,upper,empirical\n"));
        assert_eq!(csv.lines().count(), 101);
    }
}

#[test]
fn tiny_study_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.json");
    fs::write(
        &cfg,
        r#"{"n_reps": 2, "window_side": 3, "binnings": [[4, 3, 4]], "kernel": {"mc_reps": 300, "seed": 0},
            "methods": {"qle": false}, "bootstrap_reps": 100}"#,
    )
    .unwrap();
    let out = dir.path().join("study");
    ok(&["study", "--config", p(&cfg), "--out-dir", p(&out), "--seed", "3"]);
    let rmse = fs::read_to_string(out.join("rmse.csv")).unwrap();
    assert_eq!(rmse.lines().next().unwrap(), "method,mu1,mu2,sigma1,sigma2,rho,beta,n_ok,n_failed,n_not_converged");
    let methods: Vec<&str> = rmse.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["UMLE1", "BINMLE1", "MLE3D"]);
    assert!(out.join("bootstrap_se.csv").exists() && out.join("estimates.csv").exists());
    assert_eq!(json(&out.join("study.json"))["section_counts"].as_array().unwrap().len(), 2);
}
