use std::path::Path;
use std::process::{Command, Output};

use wigner_cli::evaluate::EvaluateSummary;
use wigner_cli::oracle_cmd::EvolveSummary;
use wigner_cli::output::strip_timestamp;
use wigner_cli::train::TrainSummary;
use wigner_cli::verify::VerifyReport;
use wigner_cli::ExperimentConfig;

fn wigner(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wigner"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("harmonic-coherent-1d").unwrap();
    cfg.run.epochs = 2;
    cfg.run.batch_size = 128;
    cfg.run.lr_gen_final = None;
    cfg.network.hidden = vec![8, 8];
    cfg.train.eval_every = 1;
    cfg.train.checkpoint_every = 0;
    cfg.train.moment_samples = 500;
    cfg.evaluate.samples = 4_000;
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn zero_hbar_is_rejected_before_any_check() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.physics.hbar = 0.0;
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = wigner(&["--config", s(&config), "--out", s(&out), "verify"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("verify_report.json").exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("hbar"));
}

#[test]
fn bad_potentials_and_usage_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "[potential]\nname = \"morse-ish\"\n").unwrap();
    assert_eq!(
        wigner(&["--config", s(&unknown), "verify"]).status.code(),
        Some(2)
    );

    let missing = dir.path().join("missing.toml");
    std::fs::write(&missing, "[potential]\nname = \"\"\n").unwrap();
    assert_eq!(
        wigner(&["--config", s(&missing), "config"]).status.code(),
        Some(2)
    );

    let stray_param = dir.path().join("stray.toml");
    std::fs::write(
        &stray_param,
        "[potential]\nname = \"double-well\"\nparams = { a = 1.0, omega = 2.0 }\n",
    )
    .unwrap();
    assert_eq!(
        wigner(&["--config", s(&stray_param), "config"])
            .status
            .code(),
        Some(2)
    );

    let typo = dir.path().join("typo.toml");
    std::fs::write(&typo, "[physics]\nhbarr = 1.0\n").unwrap();
    assert_eq!(
        wigner(&["--config", s(&typo), "config"]).status.code(),
        Some(2)
    );

    assert_eq!(wigner(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        wigner(&["--preset", "no-such-preset", "config"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        wigner(&["--config", s(&typo), "--threads", "0", "config"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn oracle_rejects_two_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.physics.dim = 2;
    let config = write_config(dir.path(), &cfg);
    let o = wigner(&[
        "--config",
        s(&config),
        "--out",
        s(&dir.path().join("out")),
        "oracle",
        "wigner",
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.train.divergence_threshold = 1e-30;
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = wigner(&["--config", s(&config), "--out", s(&out), "train"]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let summary: TrainSummary = read_json(&out.join("train_summary.json"));
    assert_eq!(summary.status, "diverged");
}

#[test]
fn verify_writes_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = wigner(&["--out", s(&out), "verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let report: VerifyReport = read_json(&out.join("verify_report.json"));
    assert!(report.passed && report.first_failure.is_none());
    assert!(report.checks.len() >= 12);
    assert!(report.checks.iter().all(|c| c.passed));
}

#[test]
fn train_writes_metrics_and_evaluate_at_zero_matches_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.run.epochs = 3;
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = wigner(&["--config", s(&config), "--out", s(&out), "train"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = strip_timestamp(&std::fs::read_to_string(out.join("metrics.csv")).unwrap());
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,loss,heldout_loss,alpha,mean_x_0,mean_p_0,wallclock_s,noise_floor"
    );
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        assert!(row.starts_with(&format!("{i},")));
    }

    let o = wigner(&[
        "--config",
        s(&config),
        "--out",
        s(&out),
        "evaluate",
        "--times",
        "0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: EvaluateSummary = read_json(&out.join("evaluate_summary.json"));
    let at0 = &summary.times[0];
    // At t = 0 the pushforward is the identity, so the draws are the coherent
    // state: centered on (1, 0.5) with variance 1/2 in each coordinate.
    let se = (0.5 / summary.samples as f64).sqrt();
    assert!((at0.mean_x[0] - 1.0).abs() < 5.0 * se, "{:?}", at0.mean_x);
    assert!((at0.mean_p[0] - 0.5).abs() < 5.0 * se, "{:?}", at0.mean_p);
    assert!((at0.covariance[0][0] - 0.5).abs() < 0.05);
    assert!((at0.covariance[1][1] - 0.5).abs() < 0.05);
    assert_eq!(at0.flagged_bins, 0);

    let o = wigner(&[
        "--config",
        s(&config),
        "--out",
        s(&out),
        "evaluate",
        "--times",
        "9",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn frozen_alpha_evaluation_has_no_negative_bins() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.network.freeze_alpha = Some(true);
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    assert!(wigner(&["--config", s(&config), "--out", s(&out), "train"])
        .status
        .success());
    assert!(
        wigner(&["--config", s(&config), "--out", s(&out), "evaluate"])
            .status
            .success()
    );
    let summary: EvaluateSummary = read_json(&out.join("evaluate_summary.json"));
    assert_eq!(summary.alpha, 0.0);
    assert!(summary
        .times
        .iter()
        .all(|t| t.flagged_bins == 0 && t.negative_fraction == 0.0));
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let two = small();
    let mut four = small();
    four.run.epochs = 4;
    let config_two = write_config(&dir.path().join("two"), &{
        std::fs::create_dir_all(dir.path().join("two")).unwrap();
        two
    });
    std::fs::create_dir_all(dir.path().join("four")).unwrap();
    let config_four = write_config(&dir.path().join("four"), &four);
    let (resumed, straight) = (dir.path().join("resumed"), dir.path().join("straight"));

    assert!(
        wigner(&["--config", s(&config_two), "--out", s(&resumed), "train"])
            .status
            .success()
    );
    let checkpoint = resumed.join("checkpoint.bin");
    let o = wigner(&[
        "--config",
        s(&config_four),
        "--out",
        s(&resumed),
        "train",
        "--resume",
        s(&checkpoint),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(
        wigner(&["--config", s(&config_four), "--out", s(&straight), "train"])
            .status
            .success()
    );

    for file in ["checkpoint.bin", "train_summary.json"] {
        assert_eq!(
            std::fs::read(resumed.join(file)).unwrap(),
            std::fs::read(straight.join(file)).unwrap(),
            "{file}"
        );
    }
    let metrics =
        |d: &Path| strip_timestamp(&std::fs::read_to_string(d.join("metrics.csv")).unwrap());
    assert_eq!(metrics(&resumed), metrics(&straight));

    let mut other_seed = small();
    other_seed.seed += 1;
    other_seed.run.epochs = 4;
    let config_other = write_config(&dir.path().join("two"), &other_seed);
    let o = wigner(&[
        "--config",
        s(&config_other),
        "--out",
        s(&resumed),
        "train",
        "--resume",
        s(&checkpoint),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn harmonic_evolution_returns_after_one_period() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("harmonic-coherent-1d").unwrap();
    cfg.oracle.nodes = 128;
    cfg.oracle.dt = 1e-3;
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = wigner(&["--config", s(&config), "--out", s(&out), "oracle", "evolve"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: EvolveSummary = read_json(&out.join("evolve_summary.json"));
    assert!((summary.duration - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    assert!(summary.l2_distance <= 1e-6, "{}", summary.l2_distance);
    assert!(summary.norm_drift <= 1e-10);
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(traj.lines().count() > 100);
}
