//! End-to-end runs of the `exitfsp` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use exitfsp_cli::config::RunConfig;
use serde_json::Value;
use tempfile::TempDir;

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exitfsp"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    exe()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn column(csv_path: &Path, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(csv_path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

const GENE: &str = r#"
[model]
kind = "gene_expression"

[truncation]
r = 8

[times]
t_final = 30.0
grid_points = 31

[[output.conditional]]
name = "m2"
select = "m == 2"
"#;

#[test]
fn etfsp_writes_outputs_and_echoes_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "gene.toml", GENE);
    let out = tmp.path().join("out");
    let o = run("etfsp", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["nu.csv", "mu.csv", "mu_t.csv", "mu_s.csv", "nu_s.csv", "conditional_m2.csv", "summary.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let s = summary(&out);
    assert_eq!(s["command"], "etfsp");
    assert_eq!(s["states"], 808);
    let eps = s["epsilon"].as_f64().unwrap();
    assert!(eps > 0.4 && eps < 0.5);

    // The echoed configuration parses back to the one that was run.
    let echoed: RunConfig = serde_json::from_value(s["config"].clone()).unwrap();
    let mut original = RunConfig::from_toml(GENE).unwrap();
    original.output.dir = out.to_string_lossy().into_owned();
    assert_eq!(echoed, original);
    let again = RunConfig::from_toml(&toml::to_string(&echoed).unwrap()).unwrap();
    assert_eq!(again, original);

    // Grid columns carry the exit time on 31 points; masses close to one.
    let t = column(&out.join("mu_t.csv"), "t");
    assert_eq!(t.len(), 31);
    let cdf = column(&out.join("mu_t.csv"), "exit_cdf");
    let leak = column(&out.join("mu_t.csv"), "leak");
    let occ = column(&out.join("mu_t.csv"), "occupied");
    for k in 0..31 {
        assert!((cdf[k] + leak[k] + occ[k] - 1.0).abs() < 1e-7);
    }
    let mu_s: f64 = column(&out.join("mu_s.csv"), "mu_s").iter().sum();
    assert!((mu_s + eps - 1.0).abs() < 1e-12);
    let tv = s["conditional"][0]["tv_error_bound"].as_f64().unwrap();
    let mass = s["conditional"][0]["target_mass"].as_f64().unwrap();
    assert!((tv - eps / (mass + eps)).abs() < 1e-12);
}

#[test]
fn unknown_keys_are_rejected_with_their_name() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &format!("{GENE}\n[solver]\nstep_size = 0.1\n"));
    let o = run("etfsp", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step_size"));
    assert!(!tmp.path().join("out").join("summary.json").exists());
}

#[test]
fn invalid_inputs_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let zero = write_config(
        tmp.path(),
        "zero.toml",
        "[model]\nkind = \"gene_expression\"\n[oracle]\nsamples = 0\ntime_cap = 100.0\n",
    );
    assert_eq!(run("simulate", &zero, &out, &[]).status.code(), Some(2));
    let missing = tmp.path().join("nope.toml");
    assert_eq!(run("etfsp", &missing, &out, &[]).status.code(), Some(2));
    let gene = write_config(tmp.path(), "gene.toml", GENE);
    assert_eq!(run("lv-phase", &gene, &out, &[]).status.code(), Some(2));
    let bad_select = write_config(
        tmp.path(),
        "sel.toml",
        &GENE.replace("select = \"m == 2\"", "select = \"q == 2\""),
    );
    assert_eq!(run("etfsp", &bad_select, &out, &[]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_code_one() {
    let o = exe().arg("etfsp").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = exe().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn step_budget_exhaustion_is_a_numerical_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", &format!("{GENE}\n[solver]\nmax_steps = 3\n"));
    let o = run("etfsp", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gene_sweep_tightens_the_bound() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sweep.toml",
        r#"
[model]
kind = "gene_expression"

[truncation]
schedule = [3, 5, 8, 16]

[times]
t_final = 30.0
grid_points = 61

[[output.conditional]]
name = "m3"
select = "m == 3"
"#,
    );
    let out = tmp.path().join("out");
    let o = run("sweep", &cfg, &out, &["--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eps = column(&out.join("sweep.csv"), "epsilon");
    assert_eq!(eps.len(), 4);
    assert!(eps.windows(2).all(|w| w[1] < w[0]), "{eps:?}");
    assert!(eps[3] < 1e-4);
    let tv = column(&out.join("conditional_sweep.csv"), "tv_error_bound");
    assert!(tv.windows(2).all(|w| w[1] <= w[0]));
    let mut rdr = csv::Reader::from_path(out.join("mu_s_sweep.csv")).unwrap();
    let h: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&h[h.len() - 4..], ["r=3", "r=5", "r=8", "r=16"]);
}

#[test]
fn empty_grid_writes_only_the_summary() {
    let tmp = TempDir::new().unwrap();
    let text = GENE.replace("grid_points = 31", "grid = []");
    let cfg = write_config(tmp.path(), "empty.toml", &text);
    let out = tmp.path().join("out");
    let o = run("etfsp", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, ["summary.json"]);
    assert!(summary(&out)["epsilon"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulation_is_reproducible_for_a_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sim.toml",
        r#"
[model]
kind = "gene_expression"

[times]
t_final = 30.0

[oracle]
samples = 2000
seed = 5
time_cap = 1000.0
ecdf_points = 51
"#,
    );
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(run("simulate", &cfg, &a, &["--threads", "1"]).status.success());
    assert!(run("simulate", &cfg, &b, &[]).status.success());
    assert!(run("simulate", &cfg, &c, &["--seed", "6"]).status.success());
    for f in ["samples.csv", "ecdf.csv", "exit_counts.csv"] {
        let (fa, fb, fc) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), fs::read(c.join(f)).unwrap());
        assert_eq!(fa, fb, "{f} differs between runs");
        assert_ne!(fa, fc, "{f} ignores the seed");
    }
    assert_eq!(summary(&c)["seed"], 6);
    let ecdf = column(&a.join("ecdf.csv"), "ecdf");
    assert!(ecdf.windows(2).all(|w| w[0] <= w[1]));
    let counts = column(&a.join("exit_counts.csv"), "count");
    assert_eq!(counts.iter().sum::<f64>(), 2000.0);
}

#[test]
fn lotka_volterra_phase_trajectories() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "phase.toml",
        r#"
[model]
kind = "lotka_volterra"
d = [1.0, 4.0]
delta_lambda = 0.5

[phase]
x0 = [[10.0, 10.0], [50.0, 1.0]]
t_final = 3000.0
dt = 0.5
"#,
    );
    let out = tmp.path().join("out");
    let o = run("lv-phase", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert!((s["growth_difference"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    // Species 1 grows faster and excludes species 2, settling at K (b1 - d1) = 45.
    let end = &s["trajectories"][0]["end"];
    assert!((end[0].as_f64().unwrap() - 45.0).abs() < 0.1);
    assert!(end[1].as_f64().unwrap() < 1e-3);
    let ids = column(&out.join("trajectories.csv"), "trajectory");
    assert_eq!(ids.len(), 2 * 6001);
}

#[test]
fn custom_model_forward_equation() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bd.toml",
        r#"
[model]
kind = "custom"
species = ["n"]

[[model.channels]]
name = "immigration"
change = { n = 1 }
rate = 4.0

[[model.channels]]
name = "death"
change = { n = -1 }
rate = 1.0
reactants = { n = 1 }

[domain]
expr = "n >= 0"

[truncation]
family = "rectangle"
axes = ["n"]
r = 40

[initial]
state = [0]

[times]
t_final = 5.0
grid_points = 11
"#,
    );
    let out = tmp.path().join("out");
    let o = run("fsp", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // Immigration-death from 0 is Poisson with mean 4 (1 − e^{−t}).
    let mut rdr = csv::Reader::from_path(out.join("p.csv")).unwrap();
    let last = rdr.headers().unwrap().len() - 1;
    let p: Vec<f64> = rdr.records().map(|r| r.unwrap()[last].parse().unwrap()).collect();
    let m = 4.0 * (1.0 - (-5f64).exp());
    let mut pmf = (-m).exp();
    for (n, &v) in p.iter().enumerate().take(20) {
        assert!((v - pmf).abs() < 1e-6, "n = {n}");
        pmf *= m / (n + 1) as f64;
    }
    let bound = column(&out.join("error_trace.csv"), "error_bound");
    // Non-decreasing up to the default solver tolerance (atol = 1e-10).
    assert!(bound.windows(2).all(|w| w[0] <= w[1] + 1e-9));
    assert!(bound.last().unwrap().abs() < 1e-9);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = RunConfig::load(&path).unwrap();
            cfg.resolve().unwrap();
            n += 1;
        }
    }
    assert!(n >= 5);
}
