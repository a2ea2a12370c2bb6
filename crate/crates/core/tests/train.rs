use jerkrom::datastore::{DatasetBundle, Trajectory};
use jerkrom::nets::{
    init_model, ArchConfig, DecoderConfig, EncoderConfig, LatentTrajectory, ModelState, OdeFuncConfig,
};
use jerkrom::pdegen::{build_dataset, generate_toy_wave, GridSpec, SplitSpec, ToyWaveParams};
use jerkrom::train::{
    encode_dataset, make_segments, stage2_loss, sweep_lambda, train_stage1, train_stage2, Schedule, TrainConfig,
};
use jerkrom::Error;

fn toy_bundle(n_train: usize, n_test: usize, train_len: usize) -> DatasetBundle {
    let grid = GridSpec::line(16).unwrap();
    let params = ToyWaveParams {
        snapshots: train_len + 2,
        ..Default::default()
    };
    let (trajs, _) = generate_toy_wave(&grid, n_train + n_test, 5, &params).unwrap();
    build_dataset(
        trajs,
        grid,
        &SplitSpec {
            burn_in: 0,
            train_len: Some(train_len),
            extrap_len: 2,
            n_train,
        },
    )
    .unwrap()
}

fn toy_arch(d_z: usize) -> ArchConfig {
    ArchConfig {
        encoder: EncoderConfig {
            nx: 16,
            ndim: 1,
            widths: vec![4, 8],
            blocks: 2,
            d_z,
            ..Default::default()
        },
        decoder: DecoderConfig {
            ndim: 1,
            hidden_layers: 2,
            width: 16,
            fourier_freqs: 2,
            d_z,
            ..Default::default()
        },
        odefunc: OdeFuncConfig {
            hidden_layers: 1,
            width: 8,
            d_z,
            ..Default::default()
        },
    }
}

fn toy_model(seed: u64) -> ModelState {
    let a = toy_arch(3);
    init_model(&a.encoder, &a.decoder, &a.odefunc, seed).unwrap()
}

fn short_cfg(iters: usize) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.stage1.max_iterations = Some(iters);
    cfg.stage1.batch_size = 4;
    cfg.stage2.max_iterations = Some(iters);
    cfg.stage2.batch_size = 2;
    cfg
}

#[test]
fn thirty_step_window_gives_27_segments_per_trajectory() {
    let b = toy_bundle(3, 1, 30);
    let segs = make_segments(&b).unwrap();
    assert_eq!(segs.len(), 3 * 27);
    for t in 0..3 {
        let starts: Vec<usize> = segs.iter().filter(|s| s.traj == t).map(|s| s.start).collect();
        assert_eq!(starts, (0..27).collect::<Vec<_>>());
    }
}

#[test]
fn nine_hundred_trajectories_give_24300_segments() {
    let grid = GridSpec::line(8).unwrap();
    let trajs: Vec<Trajectory> = (0..901)
        .map(|i| Trajectory::new(vec![i as f32; 32 * 8], vec![8], 0.0, 1.0).unwrap())
        .collect();
    let b = build_dataset(
        trajs,
        grid,
        &SplitSpec {
            burn_in: 0,
            train_len: Some(30),
            extrap_len: 2,
            n_train: 900,
        },
    )
    .unwrap();
    assert_eq!(make_segments(&b).unwrap().len(), 24300);
}

#[test]
fn four_step_window_gives_one_segment_and_three_is_rejected() {
    let b = toy_bundle(2, 1, 4);
    assert_eq!(make_segments(&b).unwrap().len(), 2);
    let mut short = b.clone();
    short.splits.train_window.len = 3;
    assert!(matches!(make_segments(&short), Err(Error::Config { .. })));
}

#[test]
fn one_iteration_run_takes_one_step_and_leaves_ode_untouched() {
    let b = toy_bundle(4, 2, 8);
    let m0 = toy_model(1);
    let (m1, h) = train_stage1(&b, m0.clone(), &short_cfg(1)).unwrap();
    assert_eq!(h.iterations.len(), 1);
    assert_eq!(h.iterations[0].iter, 0);
    assert_ne!(m1.encoder.params, m0.encoder.params);
    assert_ne!(m1.decoder.params, m0.decoder.params);
    assert_eq!(m1.odefunc.params, m0.odefunc.params);
    assert_eq!(h.epochs.len(), 1, "a final held-out evaluation is recorded");
}

#[test]
fn fixed_seed_reproduces_histories_and_weights() {
    let b = toy_bundle(4, 2, 8);
    let cfg = short_cfg(12);
    let (ma, ha) = train_stage1(&b, toy_model(2), &cfg).unwrap();
    let (mb, hb) = train_stage1(&b, toy_model(2), &cfg).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(ma.encoder.params, mb.encoder.params);
    let other = TrainConfig { seed: 3, ..cfg };
    let (_, hc) = train_stage1(&b, toy_model(2), &other).unwrap();
    assert_ne!(ha.iterations, hc.iterations, "seed changes the shuffle order");
}

#[test]
fn stage_two_never_touches_the_autoencoder() {
    let b = toy_bundle(4, 2, 8);
    let (model, _) = train_stage1(&b, toy_model(4), &short_cfg(3)).unwrap();
    let lat = encode_dataset(&model, &b, true).unwrap();
    let (f, h) = train_stage2(&lat, model.odefunc.clone(), &short_cfg(3)).unwrap();
    assert_eq!(h.iterations.len(), 3);
    assert_ne!(f.params, model.odefunc.params);
    assert_eq!(encode_dataset(&model, &b, true).unwrap(), lat);
}

#[test]
fn encoded_dataset_covers_every_trajectory_window() {
    let b = toy_bundle(5, 3, 8);
    let model = toy_model(5);
    let lat = encode_dataset(&model, &b, true).unwrap();
    assert_eq!(lat.len(), 8);
    assert_eq!(lat.iter().filter(|l| l.test).count(), 3);
    for l in &lat {
        assert_eq!(l.len(), 8);
        assert_eq!(l.d_z, 3);
        assert_eq!(l.dt(), Some(1.0));
    }
    assert_eq!(encode_dataset(&model, &b, false).unwrap().len(), 5);
}

#[test]
fn divergence_is_reported_with_diagnostics() {
    let b = toy_bundle(4, 1, 8);
    let mut cfg = short_cfg(20);
    cfg.stage1.lr = 1e30;
    cfg.stage1.schedule = Schedule::Constant;
    match train_stage1(&b, toy_model(6), &cfg) {
        Err(Error::Diverged(msg)) => assert!(msg.contains("lambda") && msg.contains("lr"), "{msg}"),
        other => panic!("expected divergence, got {:?}", other.map(|(_, h)| h.iterations.len())),
    }
}

#[test]
fn sweep_with_one_coefficient_gives_one_row() {
    let b = toy_bundle(3, 1, 6);
    let rows = sweep_lambda(&b, &[0.1], &toy_arch(3), &short_cfg(2)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].lambda, 0.1);
    assert!(rows[0].test_recon_mse.is_finite() && rows[0].error.is_none());
    assert!(sweep_lambda(&b, &[0.1, -0.5], &toy_arch(3), &short_cfg(2)).is_err());
}

/// Exact solution of `dz/dt = A z` for a damped rotation.
fn linear_trajectory(z0: [f64; 2], times: &[f64]) -> LatentTrajectory {
    let (decay, omega) = (0.05, 0.3);
    let values = times
        .iter()
        .flat_map(|&t| {
            let (c, s, e) = ((omega * t).cos(), (omega * t).sin(), (-decay * t).exp());
            [e * (c * z0[0] - s * z0[1]), e * (s * z0[0] + c * z0[1])]
        })
        .collect();
    LatentTrajectory::new(0, times.to_vec(), 2, values).unwrap()
}

#[test]
fn linear_latent_system_is_learned_to_1e4_of_initial_loss() {
    let times: Vec<f64> = (0..11).map(f64::from).collect();
    let lat: Vec<LatentTrajectory> = (0..16)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / 16.0;
            let r = 0.5 + 0.5 * (i % 4) as f64 / 3.0;
            linear_trajectory([r * a.cos(), r * a.sin()], &times)
        })
        .collect();
    let ode = OdeFuncConfig {
        hidden_layers: 2,
        width: 32,
        d_z: 2,
        ..Default::default()
    };
    let enc = EncoderConfig {
        nx: 8,
        ndim: 1,
        widths: vec![2],
        blocks: 1,
        d_z: 2,
        ..Default::default()
    };
    let dec = DecoderConfig {
        ndim: 1,
        d_z: 2,
        ..Default::default()
    };
    let f0 = init_model(&enc, &dec, &ode, 9).unwrap().odefunc;
    let refs: Vec<&LatentTrajectory> = lat.iter().collect();
    let initial = stage2_loss(&f0, &refs, None).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.stage2.lr = 1e-2;
    cfg.stage2.schedule = Schedule::Cosine;
    cfg.stage2.batch_size = 16;
    cfg.stage2.epochs = 1500;
    cfg.stage2.clip = None;
    let (f, _) = train_stage2(&lat, f0, &cfg).unwrap();
    let last = stage2_loss(&f, &refs, None).unwrap();
    assert!(
        last < 1e-4 * initial,
        "loss {last:.3e} not below 1e-4 of initial {initial:.3e}"
    );
}
