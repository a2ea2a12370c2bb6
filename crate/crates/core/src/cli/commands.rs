//! Implementations of the subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use super::artifacts::{
    load_latents, save_latents, save_prediction, LatentsManifest, PredictionArtifact, PredictionManifest,
    LATENTS_FORMAT, LATENTS_VERSION, PREDICTION_FORMAT, PREDICTION_VERSION,
};
use super::config::{resolve, ResolvedConfig, RunConfig};
use super::plots::{export_plots, EVAL_REPORT, LATENTS_DIR, STAGE1_HISTORY, SWEEP_TABLE};
use super::rundir::{choose_run_dir, claim_output, ensure_dir, record_config, write_json, Logger, CONFIG_FILE};
use super::selftest::run_selftest;
use super::{Cli, Command, Common, EXIT_FAILURE, EXIT_OK};
use crate::datastore::{
    load_dataset, load_manifest, read_manifest, restore_checkpoint, save_checkpoint, save_dataset_with_fingerprint,
    Checkpoint, CheckpointManifest, DatasetBundle, Stage, CHECKPOINT_FORMAT, CHECKPOINT_VERSION, DATASET_FORMAT, MANIFEST,
};
use crate::error::{Error, Result};
use crate::infer::{evaluate_rollout, predict, relative_rmse, QuerySpec};
use crate::nets::init_model;
use crate::train::{encode_dataset, sweep_lambda, train_stage1_logged, train_stage2_logged};

pub const DATA_DIR: &str = "data";
pub const STAGE1_DIR: &str = "stage1";
pub const STAGE2_DIR: &str = "stage2";
pub const STAGE2_HISTORY: &str = "stage2_history.json";
pub const PREDICTIONS_DIR: &str = "predictions";
pub const SELFTEST_REPORT: &str = "selftest.json";

struct Run {
    dir: PathBuf,
    cfg: RunConfig,
}

impl Run {
    fn fingerprint(&self) -> String {
        self.cfg.fingerprint()
    }
}

/// Newest directory under `root` that holds a run config.
fn latest_run(root: &Path) -> Result<PathBuf> {
    let entries = std::fs::read_dir(root).map_err(|_| {
        Error::config(
            "--run-dir",
            format!("no runs under {}; run gen-data first or pass --run-dir", root.display()),
        )
    })?;
    entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(CONFIG_FILE).is_file())
        .max()
        .ok_or_else(|| {
            Error::config(
                "--run-dir",
                format!("no runs under {}; run gen-data first or pass --run-dir", root.display()),
            )
        })
}

/// Resolves the configuration and run directory, records the config, and
/// attaches the log file. `fresh` commands start a new run by default.
fn open_run(common: &Common, command: &str, fresh: bool, log: &mut Logger) -> Result<Run> {
    // Reject a bad --config or --set before touching the file system.
    resolve(None, common.config.as_deref(), &common.overrides)?;
    let dir = match (&common.run_dir, fresh) {
        (Some(d), _) => d.clone(),
        (None, true) => choose_run_dir(None, &common.run_root),
        (None, false) => latest_run(&common.run_root)?,
    };
    let stored = dir.join(CONFIG_FILE);
    let base = stored.is_file().then_some(stored.as_path());
    let resolved: ResolvedConfig = resolve(base, common.config.as_deref(), &common.overrides)?;
    record_config(&dir, &resolved, command, common.force)?;
    log.attach(&dir)?;
    log.info(
        "start",
        &[
            ("run_dir", dir.display().to_string()),
            ("fingerprint", resolved.config.fingerprint()),
        ],
    );
    Ok(Run {
        dir,
        cfg: resolved.config,
    })
}

fn data_path(common: &Common, run: &Run) -> PathBuf {
    common.data.clone().unwrap_or_else(|| run.dir.join(DATA_DIR))
}

fn require(paths: &[PathBuf]) -> Result<()> {
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingInputs(missing))
    }
}

fn load_data(common: &Common, run: &Run) -> Result<DatasetBundle> {
    let path = data_path(common, run);
    require(&[path.join(MANIFEST)])?;
    let m = load_manifest(&path)?;
    let want = run.cfg.data_fingerprint();
    if let Some(found) = m.config_fingerprint.as_deref() {
        if found != want && !common.allow_mismatch {
            return Err(Error::config(
                "data",
                format!(
                    "dataset {} was generated from a different data configuration ({found} vs {want}); \
                     pass --allow-mismatch to use it anyway",
                    path.display()
                ),
            ));
        }
    }
    load_dataset(&path)
}

fn load_stage(common: &Common, run: &Run, dir: &str, stage: Stage) -> Result<Checkpoint> {
    let path = run.dir.join(dir);
    require(&[path.join(MANIFEST)])?;
    let ckpt = restore_checkpoint(&path, &run.cfg.model, Some(&run.fingerprint()), common.allow_mismatch)?;
    if stage == Stage::II && ckpt.stage != Stage::II {
        return Err(Error::config(
            dir,
            format!("{} holds a stage-I checkpoint; run train-ode first", path.display()),
        ));
    }
    Ok(ckpt)
}

fn secs(t: Instant) -> String {
    format!("{:.1}", t.elapsed().as_secs_f64())
}

fn sci(v: f64) -> String {
    format!("{v:.4e}")
}

pub fn dispatch(cli: &Cli, log: &mut Logger) -> Result<i32> {
    let c = &cli.common;
    let name = cli.command.name();
    match &cli.command {
        Command::Selftest => selftest(c, log),
        Command::Inspect { path } => inspect(path),
        Command::GenData => {
            let run = open_run(c, name, true, log)?;
            gen_data(c, &run, log)
        }
        Command::TrainAe => {
            let run = open_run(c, name, false, log)?;
            train_ae(c, &run, log)
        }
        Command::Encode => {
            let run = open_run(c, name, false, log)?;
            encode(c, &run, log)
        }
        Command::TrainOde => {
            let run = open_run(c, name, false, log)?;
            train_ode(c, &run, log)
        }
        Command::Predict { traj, resolution, times } => {
            let run = open_run(c, name, false, log)?;
            predict_cmd(c, &run, log, *traj, *resolution, times)
        }
        Command::Eval => {
            let run = open_run(c, name, false, log)?;
            eval(c, &run, log)
        }
        Command::SweepLambda { lambdas } => {
            let run = open_run(c, name, false, log)?;
            sweep(c, &run, log, lambdas)
        }
        Command::Plot { allow_partial } => {
            let dir = match &c.run_dir {
                Some(d) => d.clone(),
                None => latest_run(&c.run_root)?,
            };
            let (written, missing) = export_plots(&dir, *allow_partial)?;
            if dir.is_dir() {
                log.attach(&dir)?;
            }
            for p in &missing {
                log.warn("missing_input", &[("path", p.display().to_string())]);
            }
            for p in &written {
                log.info("wrote", &[("path", p.display().to_string())]);
            }
            Ok(EXIT_OK)
        }
    }
}

fn gen_data(c: &Common, run: &Run, log: &mut Logger) -> Result<i32> {
    let out = data_path(c, run);
    claim_output(&out, c.force)?;
    let t = Instant::now();
    let d = &run.cfg.data;
    log.info(
        "generate",
        &[
            ("nx", d.nx.to_string()),
            ("trajectories", (d.n_train + d.n_test).to_string()),
            ("workers", d.workers.to_string()),
        ],
    );
    let bundle = d.generate()?;
    save_dataset_with_fingerprint(&bundle, &out, Some(&run.cfg.data_fingerprint()))?;
    log.info(
        "done",
        &[
            ("path", out.display().to_string()),
            ("norm_mean", sci(bundle.norm.mean)),
            ("norm_std", sci(bundle.norm.std)),
            ("seconds", secs(t)),
        ],
    );
    Ok(EXIT_OK)
}

fn train_ae(c: &Common, run: &Run, log: &mut Logger) -> Result<i32> {
    let bundle = load_data(c, run)?;
    let ckpt_path = run.dir.join(STAGE1_DIR);
    let hist_path = run.dir.join(STAGE1_HISTORY);
    claim_output(&ckpt_path, c.force)?;
    claim_output(&hist_path, c.force)?;
    let m = &run.cfg.model;
    let model = init_model(&m.encoder, &m.decoder, &m.odefunc, run.cfg.train.seed)?;
    log.info(
        "stage1",
        &[
            ("lambda", run.cfg.train.lambda.to_string()),
            ("parameters", model.num_params().to_string()),
        ],
    );
    let t = Instant::now();
    let every = c.log_every.max(1);
    let (state, history) = train_stage1_logged(&bundle, model, &run.cfg.train, &mut |r| {
        if r.iter % every == 0 {
            log.info(
                "iter",
                &[
                    ("iter", r.iter.to_string()),
                    ("epoch", r.epoch.to_string()),
                    ("lr", sci(r.lr)),
                    ("total", sci(r.total)),
                    ("recon", sci(r.recon)),
                    ("jerk", sci(r.jerk)),
                ],
            );
        }
    })?;
    for e in &history.epochs {
        log.info(
            "epoch",
            &[
                ("epoch", e.epoch.to_string()),
                ("test_recon", sci(e.test_recon)),
                ("test_jerk", sci(e.test_jerk)),
            ],
        );
    }
    save_checkpoint(
        &Checkpoint {
            stage: Stage::I,
            config_fingerprint: Some(run.fingerprint()),
            state,
        },
        &ckpt_path,
    )?;
    write_json(&hist_path, &history)?;
    log.info("done", &[("checkpoint", ckpt_path.display().to_string()), ("seconds", secs(t))]);
    Ok(EXIT_OK)
}

fn encode(c: &Common, run: &Run, log: &mut Logger) -> Result<i32> {
    let bundle = load_data(c, run)?;
    let ckpt = load_stage(c, run, STAGE1_DIR, Stage::I)?;
    let out = run.dir.join(LATENTS_DIR);
    claim_output(&out, c.force)?;
    let latents = encode_dataset(&ckpt.state, &bundle, true)?;
    save_latents(&latents, &out, Some(&run.fingerprint()))?;
    log.info(
        "done",
        &[
            ("trajectories", latents.len().to_string()),
            ("d_z", ckpt.state.d_z().to_string()),
            ("path", out.display().to_string()),
        ],
    );
    Ok(EXIT_OK)
}

fn train_ode(c: &Common, run: &Run, log: &mut Logger) -> Result<i32> {
    let mut ckpt = load_stage(c, run, STAGE1_DIR, Stage::I)?;
    let lat_path = run.dir.join(LATENTS_DIR);
    require(&[lat_path.join(MANIFEST)])?;
    let (latents, fp) = load_latents(&lat_path)?;
    if fp.as_deref().is_some_and(|f| f != run.fingerprint()) && !c.allow_mismatch {
        return Err(Error::config(
            "latents",
            format!("{} was encoded under a different configuration", lat_path.display()),
        ));
    }
    let out = run.dir.join(STAGE2_DIR);
    let hist_path = run.dir.join(STAGE2_HISTORY);
    claim_output(&out, c.force)?;
    claim_output(&hist_path, c.force)?;
    let t = Instant::now();
    let every = c.log_every.max(1);
    let (f, history) = train_stage2_logged(&latents, ckpt.state.odefunc.clone(), &run.cfg.train, &mut |r| {
        if r.iter % every == 0 {
            log.info(
                "iter",
                &[
                    ("iter", r.iter.to_string()),
                    ("epoch", r.epoch.to_string()),
                    ("lr", sci(r.lr)),
                    ("loss", sci(r.loss)),
                    ("grad_norm", sci(r.grad_norm)),
                ],
            );
        }
    })?;
    if let Some(e) = history.epochs.last() {
        let mut fields = vec![("epoch", e.epoch.to_string()), ("train_loss", sci(e.train_loss))];
        if let Some(tl) = e.test_loss {
            fields.push(("test_loss", sci(tl)));
        }
        log.info("final_epoch", &fields);
    }
    ckpt.state.odefunc = f;
    ckpt.stage = Stage::II;
    ckpt.config_fingerprint = Some(run.fingerprint());
    save_checkpoint(&ckpt, &out)?;
    write_json(&hist_path, &history)?;
    log.info("done", &[("checkpoint", out.display().to_string()), ("seconds", secs(t))]);
    Ok(EXIT_OK)
}

fn predict_cmd(
    c: &Common,
    run: &Run,
    log: &mut Logger,
    traj: Option<usize>,
    resolution: Option<usize>,
    times: &[f64],
) -> Result<i32> {
    let bundle = load_data(c, run)?;
    let ckpt = load_stage(c, run, STAGE2_DIR, Stage::II)?;
    let sp = &bundle.splits;
    let ti = match traj {
        Some(i) if i < bundle.trajectories.len() => i,
        Some(i) => {
            return Err(Error::config(
                "--traj",
                format!("trajectory {i} out of range (dataset has {})", bundle.trajectories.len()),
            ))
        }
        None => *sp
            .test
            .first()
            .ok_or_else(|| Error::config("--traj", "dataset has no test trajectory"))?,
    };
    let res = resolution.or(run.cfg.eval.predict_resolution).unwrap_or(bundle.grid.nx);
    if res == 0 {
        return Err(Error::config("--resolution", "must be >= 1"));
    }
    let start = sp.train_window.start;
    let dt = bundle.dt();
    let source = &bundle.trajectories[ti];
    let times: Vec<f64> = if times.is_empty() {
        (start..source.len()).map(|i| (i - start) as f64 * dt).collect()
    } else {
        times.to_vec()
    };
    let query = QuerySpec::grid(res, bundle.grid.ndim, times.clone());
    let t = Instant::now();
    let p = predict(&ckpt.state, &source.to_snapshot(start), &query, &run.cfg.eval.integrator, dt)?;
    let mut rel = Vec::with_capacity(times.len());
    for (k, &tk) in times.iter().enumerate() {
        let step = tk / dt;
        let idx = start + step.round() as usize;
        let on_grid = res == bundle.grid.nx && (step - step.round()).abs() < 1e-9 && idx < source.len();
        rel.push(if on_grid {
            relative_rmse(p.snapshot(k), source.snapshot(idx)).ok()
        } else {
            None
        });
    }
    let out = run.dir.join(PREDICTIONS_DIR).join(format!("traj{ti:05}_r{res}"));
    claim_output(&out, c.force)?;
    ensure_dir(&run.dir.join(PREDICTIONS_DIR))?;
    save_prediction(
        &PredictionArtifact {
            fingerprint: Some(&run.fingerprint()),
            trajectory: ti,
            resolution: res,
            ndim: bundle.grid.ndim,
            times: &times,
            rel_rmse: rel.clone(),
            values: &p.values,
            latents: &p.latents,
        },
        &out,
    )?;
    let last = rel.iter().rev().flatten().next().copied();
    let mut fields = vec![
        ("trajectory", ti.to_string()),
        ("resolution", res.to_string()),
        ("times", times.len().to_string()),
        ("path", out.display().to_string()),
        ("seconds", secs(t)),
    ];
    if let Some(r) = last {
        fields.push(("final_rel_rmse", sci(r)));
    }
    log.info("done", &fields);
    Ok(EXIT_OK)
}

fn eval(c: &Common, run: &Run, log: &mut Logger) -> Result<i32> {
    let bundle = load_data(c, run)?;
    let ckpt = load_stage(c, run, STAGE2_DIR, Stage::II)?;
    let out = run.dir.join(EVAL_REPORT);
    claim_output(&out, c.force)?;
    let t = Instant::now();
    let report = evaluate_rollout(&ckpt.state, &bundle, &run.cfg.eval.options())?;
    write_json(&out, &report)?;
    log.info(
        "done",
        &[
            ("interp_rel_rmse", sci(report.interp.rel_rmse)),
            ("extrap_rel_rmse", sci(report.extrap.rel_rmse)),
            ("recon_mse", sci(report.recon_mse)),
            ("mean_avg_jerk", sci(report.mean_avg_jerk)),
            ("active_coords", report.active_coords.to_string()),
            ("threshold", sci(report.active_threshold)),
            ("seconds", secs(t)),
        ],
    );
    Ok(EXIT_OK)
}

fn sweep(c: &Common, run: &Run, log: &mut Logger, lambdas: &[f64]) -> Result<i32> {
    let bundle = load_data(c, run)?;
    let out = run.dir.join(SWEEP_TABLE);
    claim_output(&out, c.force)?;
    let lambdas = if lambdas.is_empty() {
        run.cfg.sweep.lambdas.clone()
    } else {
        lambdas.to_vec()
    };
    let t = Instant::now();
    log.info("sweep", &[("lambdas", format!("{lambdas:?}").replace(' ', ""))]);
    let rows = sweep_lambda(&bundle, &lambdas, &run.cfg.model, &run.cfg.train)?;
    for r in &rows {
        let mut fields = vec![
            ("lambda", r.lambda.to_string()),
            ("test_recon_mse", sci(r.test_recon_mse)),
            ("test_jerk", sci(r.test_jerk)),
        ];
        if let Some(e) = &r.error {
            fields.push(("error", e.clone()));
        }
        log.info("row", &fields);
    }
    write_json(&out, &rows)?;
    log.info("done", &[("path", out.display().to_string()), ("seconds", secs(t))]);
    Ok(if rows.iter().any(|r| r.error.is_some()) {
        EXIT_FAILURE
    } else {
        EXIT_OK
    })
}

fn selftest(c: &Common, log: &mut Logger) -> Result<i32> {
    let t = Instant::now();
    let outcomes = run_selftest();
    for o in &outcomes {
        println!(
            "{} {} ({:.1}s): {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.seconds,
            o.detail
        );
    }
    if let Some(dir) = &c.run_dir {
        ensure_dir(dir)?;
        write_json(&dir.join(SELFTEST_REPORT), &outcomes)?;
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    log.info(
        "done",
        &[
            ("checks", outcomes.len().to_string()),
            ("failed", failed.to_string()),
            ("seconds", secs(t)),
        ],
    );
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

fn inspect(path: &Path) -> Result<i32> {
    let manifest = path.join(MANIFEST);
    require(&[manifest.clone()])?;
    let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Corruption {
        path: manifest.clone(),
        msg: e.message().to_string(),
    })?;
    let format = table.get("format").and_then(|v| v.as_str()).unwrap_or("");
    println!("path: {}", path.display());
    println!("format: {format}");
    match format {
        DATASET_FORMAT => {
            let m = load_manifest(path)?;
            println!("grid: {}^{}", m.grid.nx, m.grid.ndim);
            println!("trajectories: {}", m.trajectories.len());
            if let Some(t) = m.trajectories.first() {
                println!("snapshots: {} (dt = {})", t.array.shape[0], t.dt);
            }
            println!("train: {} test: {}", m.splits.train.len(), m.splits.test.len());
            println!(
                "train_window: start {} len {}; extrap_window: start {} len {}",
                m.splits.train_window.start,
                m.splits.train_window.len,
                m.splits.extrap_window.start,
                m.splits.extrap_window.len
            );
            println!("norm: mean {:.6e} std {:.6e}", m.norm.mean, m.norm.std);
            println!("fingerprint: {}", m.config_fingerprint.as_deref().unwrap_or("-"));
        }
        CHECKPOINT_FORMAT => {
            let m: CheckpointManifest = read_manifest(path, CHECKPOINT_FORMAT, CHECKPOINT_VERSION)?;
            let params: usize = m.arrays.iter().map(|a| a.count()).sum();
            println!("stage: {:?}", m.stage);
            println!("d_z: {}", m.arch.d_z());
            println!("encoder: {:?} widths {:?}", m.arch.encoder.kind, m.arch.encoder.widths);
            println!("parameters: {params} in {} arrays", m.arrays.len());
            println!("fingerprint: {}", m.config_fingerprint.as_deref().unwrap_or("-"));
        }
        LATENTS_FORMAT => {
            let m: LatentsManifest = read_manifest(path, LATENTS_FORMAT, LATENTS_VERSION)?;
            let test = m.trajectories.iter().filter(|t| t.test).count();
            println!("d_z: {}", m.d_z);
            println!("trajectories: {} ({} test)", m.trajectories.len(), test);
            println!("fingerprint: {}", m.config_fingerprint.as_deref().unwrap_or("-"));
        }
        PREDICTION_FORMAT => {
            let m: PredictionManifest = read_manifest(path, PREDICTION_FORMAT, PREDICTION_VERSION)?;
            println!("trajectory: {} resolution: {}", m.trajectory, m.resolution);
            println!("times: {}", m.times.len());
            println!("fingerprint: {}", m.config_fingerprint.as_deref().unwrap_or("-"));
        }
        other => {
            return Err(Error::Corruption {
                path: manifest,
                msg: format!("unknown container format `{other}`"),
            })
        }
    }
    Ok(EXIT_OK)
}
