use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cellinfect_cli::config::{load_config, parse_config, Experiment, Grid, RunSettings};
use cellinfect_cli::manifest::{Manifest, MANIFEST_FILE};
use cellinfect_cli::{run, CliError, EXIT_CHECK_FAILED, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn golden_configs() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    paths
}

fn cellinfect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellinfect")).args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const MODEL: &str = r#"
[model]
initial_trait = 1.0
time_step = 0.1

[model.parasite]
drift = { type = "affine", slope = 0.5, intercept = 0.0 }
diffusion = { type = "constant", value = 0.0 }

[model.policy]
rates = { type = "constant", r = 1.0, q = 0.3 }
kernel = { type = "uniform" }
"#;

#[test]
fn every_kind_has_a_passing_golden_config() {
    let mut kinds = BTreeSet::new();
    let out = tempfile::tempdir().unwrap();
    for path in golden_configs() {
        let (cfg, _) = load_config(&path).unwrap();
        kinds.insert(cfg.kind().as_str());
        let dir = out.path().join(path.file_stem().unwrap());
        let outcome = run(&cfg, &RunSettings { threads: 1, output: Some(dir.clone()) }).unwrap();
        for c in &outcome.checks {
            assert!(c.pass, "{}: {}", path.display(), c.line());
        }
        assert!(dir.join(MANIFEST_FILE).exists());
        assert!(dir.join("results.json").exists());
    }
    assert_eq!(kinds.len(), 8, "{kinds:?}");
}

#[test]
fn run_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("regime_map.toml");
    let out = dir.path().join("map");
    let o = cellinfect(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--check"]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);
    let csv = std::fs::read_to_string(out.join("regime_map.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("g_over_r,theta0,class"));
    assert_eq!(csv.lines().count(), 1 + 120 * 25);
}

#[test]
fn failed_check_exits_three_only_with_check_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "narrow.toml",
        "kind = \"regime-map\"\n[params]\nq_over_r = 0.5\ng_over_r = [0.1, 0.2]\ntheta0 = [0.2, 0.4]\n",
    );
    let out = dir.path().join("o");
    let args = ["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = cellinfect(&args);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL exactly three classes"));
    let mut with_check = args.to_vec();
    with_check.push("--check");
    assert_eq!(cellinfect(&with_check).status.code(), Some(EXIT_CHECK_FAILED));
}

#[test]
fn runtime_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "kind = \"moment-check\"\nreplicas = 10\n{MODEL}\n[params]\ntimes = [3.0]\nmax_cells = 2\n"
    );
    let cfg = write(dir.path(), "cap.toml", &text);
    let o = cellinfect(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_RUNTIME));
    assert!(stderr(&o).contains("max_cells"), "{}", stderr(&o));
}

#[test]
fn config_errors_have_distinct_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "unknown.toml", "kind = \"bogus-kind\"\n");
    let malformed = write(dir.path(), "malformed.toml", "kind = \"regime-map\n[params\n");
    let no_kernel = MODEL.replace("kernel = { type = \"uniform\" }", "");
    let missing = write(
        dir.path(),
        "missing.toml",
        &format!("kind = \"moment-check\"\n{no_kernel}\n[params]\ntimes = [1.0]\n"),
    );
    let no_params = write(dir.path(), "noparams.toml", "kind = \"regime-map\"\n[params]\nq_over_r = 0.5\n");
    let mut messages = Vec::new();
    for path in [&unknown, &malformed, &missing, &no_params] {
        let o = cellinfect(&["validate", "--config", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(EXIT_VALIDATION), "{}", path.display());
        messages.push(stderr(&o));
    }
    assert!(messages[0].contains("unknown variant `bogus-kind`"), "{}", messages[0]);
    assert!(messages[1].contains("TOML parse error"), "{}", messages[1]);
    assert!(messages[2].contains("missing field `kernel`"), "{}", messages[2]);
    assert!(messages[3].contains("missing field `g_over_r`"), "{}", messages[3]);
    let distinct: BTreeSet<_> = messages.iter().collect();
    assert_eq!(distinct.len(), messages.len());
}

#[test]
fn missing_model_and_unknown_params_are_rejected() {
    let base = Path::new(".");
    let err = parse_config("kind = \"moment-check\"\n[params]\ntimes = [1.0]\n", base).unwrap_err();
    assert!(matches!(&err, CliError::Validation(m) if m.contains("missing field `model`")), "{err}");
    let text = format!("kind = \"moment-check\"\n{MODEL}\n[params]\ntimes = [1.0]\nextra = 1\n");
    let err = parse_config(&text, base).unwrap_err();
    assert!(err.to_string().contains("unknown field `extra`"), "{err}");
    let err = parse_config("kind = \"regime-map\"\nmodel = \"nope.toml\"\n[params]\nq_over_r = 0.5\ng_over_r = [1.0]\ntheta0 = [0.2]\n", base)
        .unwrap_err();
    assert!(err.to_string().contains("nope.toml"), "{err}");
}

#[test]
fn validate_reports_eu_warnings() {
    let cfg = configs_dir().join("models").join("decreasing_jump_rate.toml");
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "v.toml",
        &format!(
            "kind = \"assumption-probe\"\nmodel = \"{}\"\n[params]\ngrid = [0.1, 1.0]\n",
            cfg.display()
        ),
    );
    let o = cellinfect(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("warning: RegularityRatesDrift")), "{stdout}");
    let good = configs_dir().join("many_to_one.toml");
    let o = cellinfect(&["validate", "--config", good.to_str().unwrap()]);
    assert!(!String::from_utf8_lossy(&o.stdout).contains("warning"));
}

#[test]
fn grids_expand_and_overrides_change_the_hash() {
    let g = Grid::Range { start: 1.0, stop: 100.0, num: 3, log: true };
    let pts = g.points();
    assert!((pts[1] - 10.0).abs() < 1e-12 && (pts[2] - 100.0).abs() < 1e-12);
    assert_eq!(Grid::Range { start: 0.0, stop: 1.0, num: 5, log: false }.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    let (mut cfg, _) = load_config(&configs_dir().join("many_to_one.toml")).unwrap();
    assert!(matches!(cfg.experiment, Experiment::ManyToOneCheck(_)));
    let h = cfg.hash();
    assert_eq!(h.len(), 64);
    assert_eq!(h, load_config(&configs_dir().join("many_to_one.toml")).unwrap().0.hash());
    cfg.seed += 1;
    assert_ne!(h, cfg.hash());
}

#[test]
fn replay_is_bit_identical_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("mean_cells_regime.toml");
    let first = dir.path().join("first");
    let o = cellinfect(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
        "--threads",
        "1",
        "--replicas",
        "200",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let manifest = first.join(MANIFEST_FILE);
    let m = Manifest::load(&manifest).unwrap();
    assert_eq!(m.replicas, 200);
    assert_eq!(m.kind, "mean-cells-regime");

    let second = dir.path().join("second");
    let o = cellinfect(&[
        "replay",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
        "--threads",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&o.stdout));
    for rec in &m.outputs {
        let a = std::fs::read(first.join(&rec.name)).unwrap();
        let b = std::fs::read(second.join(&rec.name)).unwrap();
        assert_eq!(a, b, "{}", rec.name);
    }

    let mut tampered = m.clone();
    tampered.outputs[0].sha256 = "0".repeat(64);
    let bad = dir.path().join("tampered.json");
    tampered.write(&bad).unwrap();
    let o = cellinfect(&["replay", "--manifest", bad.to_str().unwrap(), "--out", dir.path().join("t").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_CHECK_FAILED));
    assert!(String::from_utf8_lossy(&o.stdout).contains("MISMATCH"));

    let mut edited = m;
    edited.config.seed += 1;
    edited.write(&bad).unwrap();
    let o = cellinfect(&["replay", "--manifest", bad.to_str().unwrap(), "--out", dir.path().join("e").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_VALIDATION));
}
