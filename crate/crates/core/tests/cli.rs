use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
[data]
nx = 8
n_train = 3
n_test = 1
burn_in = 1
train_len = 6
extrap_len = 2
supersample = false

[model.encoder]
nx = 8
widths = [2, 4]
blocks = 2
stem_stride = 1
d_z = 2

[model.decoder]
hidden_layers = 1
width = 8
fourier_freqs = 1
d_z = 2

[model.odefunc]
hidden_layers = 1
width = 4
d_z = 2

[train]
lambda = 0.1

[train.stage1]
epochs = 1
batch_size = 4

[train.stage2]
epochs = 2
batch_size = 2

[sweep]
lambdas = [0.0, 0.1]
"#;

fn jerkrom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jerkrom"))
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn in_run(run: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--run-dir", run.to_str().unwrap()];
    all.extend_from_slice(args);
    jerkrom(&all)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn assert_code(o: &Output, code: i32) {
    assert_eq!(o.status.code(), Some(code), "stderr: {}", stderr(o));
}

fn read_dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = fs::read(&p).unwrap();
            (p.file_name().unwrap().into(), bytes)
        })
        .collect();
    out.sort();
    out
}

fn scored_times(manifest: &str) -> Vec<f64> {
    let v: toml::Value = toml::from_str(manifest).unwrap();
    v["scored_times"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_float().unwrap())
        .collect()
}

#[test]
fn unknown_command_and_flag_are_usage_errors() {
    assert_code(&jerkrom(&["frobnicate"]), 2);
    assert_code(&jerkrom(&["selftest", "--no-such-flag"]), 2);
    assert_code(&jerkrom(&["--help"]), 0);
}

#[test]
fn missing_config_file_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let o = in_run(&run, &["train-ae", "--config", "missing.cfg"]);
    assert_code(&o, 3);
    assert!(stderr(&o).contains("missing.cfg"), "{}", stderr(&o));
}

#[test]
fn invalid_override_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let o = in_run(&run, &["gen-data", "--set", "data.n_train=0"]);
    assert_code(&o, 3);
    assert!(stderr(&o).contains("data.n_train"), "{}", stderr(&o));
    let o = in_run(&run, &["gen-data", "--set", "data.no_such_key=1"]);
    assert_code(&o, 3);
    assert!(stderr(&o).contains("no_such_key"), "{}", stderr(&o));
}

#[test]
fn plot_on_empty_run_lists_missing_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = in_run(tmp.path(), &["plot"]);
    assert_code(&o, 3);
    let err = stderr(&o);
    for name in ["eval_report.json", "latents", "stage1_history.json", "sweep.json"] {
        assert!(err.contains(name), "{name} not listed in: {err}");
    }
}

#[test]
fn selftest_passes() {
    let o = jerkrom(&["selftest"]);
    assert_code(&o, 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{out}");
}

#[test]
fn tiny_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.to_str().unwrap();
    let run = tmp.path().join("run");

    assert_code(&in_run(&run, &["gen-data", "--config", cfg]), 0);
    assert!(run.join("config.toml").is_file());
    assert!(run.join("configs/gen-data.provenance.json").is_file());
    let first = read_dir_bytes(&run.join("data"));

    let again = in_run(&run, &["gen-data"]);
    assert_code(&again, 3);
    assert!(stderr(&again).contains("--force"), "{}", stderr(&again));
    assert_code(&in_run(&run, &["gen-data", "--force"]), 0);
    assert_eq!(read_dir_bytes(&run.join("data")), first, "regeneration is bit-identical");

    let changed = in_run(&run, &["train-ae", "--set", "data.seed=7"]);
    assert_code(&changed, 3);

    for cmd in ["train-ae", "encode", "train-ode", "eval"] {
        assert_code(&in_run(&run, &[cmd]), 0);
    }
    for f in ["stage1/manifest.toml", "stage1_history.json", "latents/manifest.toml", "stage2/manifest.toml"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(run.join("eval_report.json")).unwrap()).unwrap();
    assert!(report.is_object());

    assert_code(&in_run(&run, &["predict", "--resolution", "16", "--times", "0.5,2,7.25"]), 0);
    let pred = run.join("predictions/traj00003_r16");
    let manifest = fs::read_to_string(pred.join("manifest.toml")).unwrap();
    assert!(manifest.contains("jerkrom-prediction"));
    assert_eq!(scored_times(&manifest), Vec::<f64>::new());

    assert_code(&in_run(&run, &["predict", "--times", "0.5,1,3"]), 0);
    let manifest = fs::read_to_string(run.join("predictions/traj00003_r8/manifest.toml")).unwrap();
    assert_eq!(scored_times(&manifest), vec![1.0, 3.0], "only snapshot times on the data grid are scored");

    assert_code(&in_run(&run, &["sweep-lambda"]), 0);
    let sweep: serde_json::Value = serde_json::from_slice(&fs::read(run.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep.as_array().map(Vec::len), Some(2), "{sweep}");

    assert_code(&in_run(&run, &["plot"]), 0);
    let plots: Vec<_> = fs::read_dir(run.join("plots")).unwrap().collect();
    assert!(plots.len() >= 4);
    assert!(fs::read_to_string(run.join("log.txt")).unwrap().contains("train-ae"));

    let o = jerkrom(&["inspect", run.join("stage2").to_str().unwrap()]);
    assert_code(&o, 0);
}
