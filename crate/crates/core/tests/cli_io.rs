//! End-to-end tests of the command-line binary: artifacts, schemas, exit
//! codes and bit-level idempotence.

use std::path::Path;
use std::process::Command;

use thermolearn::septuple::{Activation, Septuple, Topology};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thermolearn"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed: {}\n{}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run_expect_code(args: &[&str], code: i32) -> String {
    let out = bin().args(args).output().expect("binary runs");
    assert_eq!(
        out.status.code(),
        Some(code),
        "command {:?}: expected exit {code}, got {:?}\n{}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn train_small(dir: &Path) {
    run_ok(&[
        "train",
        "--arch",
        "6-5-4",
        "--data",
        "synth",
        "--synth-records",
        "60",
        "--epochs",
        "30",
        "--checkpoint-every",
        "10",
        "--seed",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ]);
}

#[test]
fn train_emits_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    train_small(dir.path());
    let log = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,u_boundary,u_bulk_forward\n"));
    assert_eq!(log.lines().count(), 31); // header + 30 epochs
    let thermo = std::fs::read_to_string(dir.path().join("thermo.csv")).unwrap();
    assert!(thermo.starts_with(thermolearn::cli::THERMO_HEADER));
    assert_eq!(thermo.lines().count(), 4); // header + epochs 10, 20, 30
    for epoch in [10, 20, 30] {
        let path = dir
            .path()
            .join("checkpoints")
            .join(format!("epoch_{epoch:06}.txt"));
        let net = Septuple::load(&path).unwrap();
        assert_eq!(net.epoch, epoch);
        assert!(net.validate().is_empty());
    }
    assert!(dir.path().join("train_log.gp").exists());
    assert!(dir.path().join("thermo.gp").exists());
}

#[test]
fn identical_configs_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    train_small(a.path());
    train_small(b.path());
    for file in ["train_log.csv", "thermo.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between identical runs");
    }
    let x = std::fs::read(a.path().join("checkpoints/epoch_000030.txt")).unwrap();
    let y = std::fs::read(b.path().join("checkpoints/epoch_000030.txt")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn spectrum_reports_untrained_and_zero_weight_nets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spec");
    // untrained random net: small weights keep every log eigenvalue within ±3
    let topo = Topology::layered(&[6, 5, 4]).unwrap();
    let net = Septuple::random(topo.clone(), Activation::Tanh, 11);
    let ckpt = dir.path().join("untrained.txt");
    net.save(&ckpt).unwrap();
    run_ok(&[
        "spectrum",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        "synth",
        "--synth-records",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    let spectrum = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let mut lines = spectrum.lines();
    assert_eq!(lines.next(), Some("index,lambda,log_lambda"));
    let mut count = 0;
    for line in lines {
        let log_lambda: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(
            log_lambda.abs() < 3.0,
            "log lambda {log_lambda} out of band"
        );
        count += 1;
    }
    assert_eq!(count, 15);

    // zero-weight net: all eigenvalues pinned at 1
    let zero = Septuple::zeroed(topo, Activation::Tanh);
    let zckpt = dir.path().join("zero.txt");
    zero.save(&zckpt).unwrap();
    let zo = dir.path().join("zspec");
    run_ok(&[
        "spectrum",
        "--checkpoint",
        zckpt.to_str().unwrap(),
        "--data",
        "synth",
        "--synth-records",
        "40",
        "--out",
        zo.to_str().unwrap(),
    ]);
    let hist = std::fs::read_to_string(zo.join("histogram.csv")).unwrap();
    assert_eq!(
        hist.lines().count(),
        1,
        "pinned eigenvalues excluded by default"
    );
    // with the exclusion threshold lifted, a single bin at zero appears
    let zo2 = dir.path().join("zspec2");
    run_ok(&[
        "spectrum",
        "--checkpoint",
        zckpt.to_str().unwrap(),
        "--data",
        "synth",
        "--synth-records",
        "40",
        "--min-abs-log",
        "0",
        "--out",
        zo2.to_str().unwrap(),
    ]);
    let hist = std::fs::read_to_string(zo2.join("histogram.csv")).unwrap();
    let rows: Vec<&str> = hist.lines().skip(1).collect();
    assert_eq!(rows.len(), 1, "single bin expected, got {rows:?}");
    let fields: Vec<f64> = rows[0].split(',').map(|t| t.parse().unwrap()).collect();
    assert!(fields[0] <= 0.0 && 0.0 < fields[1]);
    assert_eq!(fields[2] as usize, 15);
}

#[test]
fn thermo_sweep_over_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    train_small(dir.path());
    let out = dir.path().join("thermo_out");
    let stdout = run_ok(&[
        "thermo",
        "--checkpoints",
        dir.path().join("checkpoints").to_str().unwrap(),
        "--data",
        "synth",
        "--synth-records",
        "60",
        "--synth-seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("C_20 vs log U_bulk"));
    let thermo = std::fs::read_to_string(out.join("thermo.csv")).unwrap();
    assert!(thermo.starts_with(thermolearn::cli::THERMO_HEADER));
    assert_eq!(thermo.lines().count(), 4);

    // fewer than two checkpoints is a config error
    let lonely = tempfile::tempdir().unwrap();
    let topo = Topology::layered(&[2, 2]).unwrap();
    Septuple::zeroed(topo, Activation::Tanh)
        .save(&lonely.path().join("only.txt"))
        .unwrap();
    run_expect_code(
        &[
            "thermo",
            "--checkpoints",
            lonely.path().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        2,
    );
}

#[test]
fn thermo_on_identical_checkpoints_gives_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let ckpts = dir.path().join("ckpts");
    std::fs::create_dir_all(&ckpts).unwrap();
    let topo = Topology::layered(&[4, 3, 2]).unwrap();
    let net = Septuple::random(topo, Activation::Tanh, 9);
    net.save(&ckpts.join("epoch_000010.txt")).unwrap();
    net.save(&ckpts.join("epoch_000020.txt")).unwrap();
    let out = dir.path().join("out");
    run_ok(&[
        "thermo",
        "--checkpoints",
        ckpts.to_str().unwrap(),
        "--data",
        "synth",
        "--synth-records",
        "40",
        "--synth-seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    let thermo = std::fs::read_to_string(out.join("thermo.csv")).unwrap();
    let rows: Vec<&str> = thermo.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    // identical weights, identical observables: zero increments everywhere
    let strip_epoch = |r: &str| r.split_once(',').unwrap().1.to_string();
    assert_eq!(strip_epoch(rows[0]), strip_epoch(rows[1]));
}

#[test]
fn ensemble_and_toy_are_idempotent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        run_ok(&[
            "ensemble",
            "--arch",
            "2-2-1",
            "--beta",
            "1.0",
            "--samples",
            "2000",
            "--burn-in",
            "500",
            "--seed",
            "4",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        run_ok(&[
            "toy",
            "--beta",
            "0.5",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
    }
    for file in ["ensemble.csv", "toy.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between identical runs");
    }
}

#[test]
fn ensemble_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "ensemble",
        "--arch",
        "2-2-1",
        "--activation",
        "identity",
        "--beta",
        "0.5,1.0",
        "--window",
        "both",
        "--samples",
        "2000",
        "--burn-in",
        "500",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(dir.path().join("ensemble.csv")).unwrap();
    assert!(csv.starts_with(thermolearn::cli::ENSEMBLE_HEADER));
    assert_eq!(csv.lines().count(), 5); // header + 2 betas x 2 windows
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').count(), 9);
    }
    // oversized architecture is a config error
    run_expect_code(
        &[
            "ensemble",
            "--arch",
            "8-8-4",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        2,
    );
}

#[test]
fn toy_curves_and_extrema() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = run_ok(&[
        "toy",
        "--beta",
        "0.25,1.0",
        "--grid=-6:4:501",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(stdout.contains("interior maximum"));
    assert!(stdout.contains("interior minimum"));
    let csv = std::fs::read_to_string(dir.path().join("toy.csv")).unwrap();
    assert!(csv.starts_with("beta,gamma,log_lambda,neg_delta_f\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 501);
    // spot value: beta 0.25 near log lambda 0 gives 68.32
    let row = csv
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("0.25,"))
        .min_by(|a, b| {
            let u = |l: &str| l.split(',').nth(2).unwrap().parse::<f64>().unwrap().abs();
            u(a).partial_cmp(&u(b)).unwrap()
        })
        .expect("rows for beta 0.25");
    let value: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!((value - 68.32).abs() < 0.01, "value at ~0 was {value}");
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "arch = 6-5-4\ndata = synth\nsynth_records = 60\nepochs = 30\ncheckpoint_every = 10\nseed = 3\n",
    )
    .unwrap();
    let out_a = dir.path().join("a");
    run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    // identical to the flag-specified run
    let out_b = dir.path().join("b");
    train_small(&out_b);
    let x = std::fs::read(out_a.join("train_log.csv")).unwrap();
    let y = std::fs::read(out_b.join("train_log.csv")).unwrap();
    assert_eq!(x, y);

    // a flag overrides the file
    let out_c = dir.path().join("c");
    run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--epochs",
        "5",
        "--out",
        out_c.to_str().unwrap(),
    ]);
    let log = std::fs::read_to_string(out_c.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 6);
}

#[test]
fn exit_codes_for_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    // missing required option
    run_expect_code(&["train", "--arch", "4-2"], 2);
    // unreadable checkpoint path
    run_expect_code(
        &[
            "spectrum",
            "--checkpoint",
            "/nonexistent/net.txt",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        3,
    );
    // malformed dataset cache
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "not a dataset\n").unwrap();
    run_expect_code(
        &[
            "train",
            "--arch",
            "4-2",
            "--data",
            "cache",
            "--dataset",
            bad.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ],
        3,
    );
    // IDX with wrong magic
    let img = dir.path().join("img.idx");
    let lbl = dir.path().join("lbl.idx");
    std::fs::write(&img, 9999u32.to_be_bytes()).unwrap();
    std::fs::write(&lbl, 2049u32.to_be_bytes()).unwrap();
    run_expect_code(
        &[
            "train",
            "--arch",
            "784-10",
            "--data",
            "mnist",
            "--mnist-images",
            img.to_str().unwrap(),
            "--mnist-labels",
            lbl.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ],
        3,
    );
    // a local objective strong enough to break the Gaussian-model domain
    // (1 - βm + βλ ≤ 0 for the smallest eigenvalue) is a numeric error
    run_expect_code(
        &[
            "ensemble",
            "--arch",
            "2-2-1",
            "--activation",
            "identity",
            "--objective-m",
            "2",
            "--beta",
            "1.0",
            "--window",
            "gaussian",
            "--samples",
            "1000",
            "--burn-in",
            "200",
            "--out",
            dir.path().join("dom").to_str().unwrap(),
        ],
        4,
    );
}

#[test]
fn mnist_idx_path_end_to_end() {
    // synthesize a tiny valid IDX pair: 30 4x4 images, labels 0..9
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("images-idx3-ubyte");
    let lbl = dir.path().join("labels-idx1-ubyte");
    let count = 30usize;
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&2051u32.to_be_bytes());
    bytes.extend_from_slice(&(count as u32).to_be_bytes());
    bytes.extend_from_slice(&4u32.to_be_bytes());
    bytes.extend_from_slice(&4u32.to_be_bytes());
    bytes.extend((0..count * 16).map(|i| (i * 7 % 256) as u8));
    std::fs::write(&img, &bytes).unwrap();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&2049u32.to_be_bytes());
    bytes.extend_from_slice(&(count as u32).to_be_bytes());
    bytes.extend((0..count).map(|i| (i % 10) as u8));
    std::fs::write(&lbl, &bytes).unwrap();

    let out = dir.path().join("out");
    run_ok(&[
        "train",
        "--arch",
        "16-6-10",
        "--data",
        "mnist",
        "--mnist-images",
        img.to_str().unwrap(),
        "--mnist-labels",
        lbl.to_str().unwrap(),
        "--epochs",
        "5",
        "--checkpoint-every",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(out.join("train_log.csv").exists());

    // a mismatched architecture is rejected as a config error
    run_expect_code(
        &[
            "train",
            "--arch",
            "9-6-10",
            "--data",
            "mnist",
            "--mnist-images",
            img.to_str().unwrap(),
            "--mnist-labels",
            lbl.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        2,
    );
}

#[test]
fn dataset_cache_roundtrip_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("data.txt");
    let out_a = dir.path().join("a");
    run_ok(&[
        "train",
        "--arch",
        "6-5-4",
        "--data",
        "synth",
        "--synth-records",
        "60",
        "--epochs",
        "10",
        "--checkpoint-every",
        "5",
        "--seed",
        "3",
        "--save-dataset",
        cache.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    // retrain from the cached dataset: identical log
    let out_b = dir.path().join("b");
    run_ok(&[
        "train",
        "--arch",
        "6-5-4",
        "--data",
        "cache",
        "--dataset",
        cache.to_str().unwrap(),
        "--epochs",
        "10",
        "--checkpoint-every",
        "5",
        "--seed",
        "3",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    let x = std::fs::read(out_a.join("train_log.csv")).unwrap();
    let y = std::fs::read(out_b.join("train_log.csv")).unwrap();
    assert_eq!(x, y);
}
