use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use wigner_core::pushforward::{FrozenFlow, PhaseFlow};
use wigner_core::rng::label;
use wigner_core::trainer::{audit_frozen, moments_at, train, MetricRow, TrainState, TrainStatus};
use wigner_core::StreamRng;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{num, write_json, Csv};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const MOMENTS_FILE: &str = "moments.csv";
pub const SUMMARY_FILE: &str = "train_summary.json";

pub fn metrics_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["epoch", "loss", "heldout_loss", "alpha"]
        .map(String::from)
        .to_vec();
    h.extend((0..dim).map(|i| format!("mean_x_{i}")));
    h.extend((0..dim).map(|i| format!("mean_p_{i}")));
    h.push("wallclock_s".into());
    h.push("noise_floor".into());
    h
}

pub fn metrics_cells(row: &MetricRow<f64>) -> Vec<String> {
    let mut c = vec![
        row.epoch.to_string(),
        num(row.loss),
        row.heldout_loss.map(num).unwrap_or_default(),
        num(row.alpha),
    ];
    c.extend(row.mean_x.iter().chain(&row.mean_p).map(|&v| num(v)));
    c.push(num(row.wallclock_s));
    c.push(num(row.noise_floor));
    c
}

/// Append-only metrics log, flushed after every row.
struct MetricsLog {
    out: BufWriter<File>,
    path: PathBuf,
}

impl MetricsLog {
    fn create(path: &Path, dim: usize, history: &[MetricRow<f64>]) -> Result<Self, CliError> {
        let header = metrics_header(dim);
        let head = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut log = Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        log.write(head.as_str())?;
        for row in history {
            log.row(row)?;
        }
        Ok(log)
    }

    fn write(&mut self, text: &str) -> Result<(), CliError> {
        self.out
            .write_all(text.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| CliError::io(&self.path, e))
    }

    fn row(&mut self, row: &MetricRow<f64>) -> Result<(), CliError> {
        let line = metrics_cells(row).join(",") + "\n";
        self.write(&line)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub t: f64,
    pub mean_x: Vec<f64>,
    pub mean_p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub status: String,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub final_heldout_loss: Option<f64>,
    pub final_noise_floor: Option<f64>,
    /// Frozen audits only: epochs whose loss exceeded the noise floor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs_above_noise_floor: Option<usize>,
    pub moments: Vec<MomentCheck>,
}

fn summarize(status: &str, history: &[MetricRow<f64>], moments: Vec<MomentCheck>) -> TrainSummary {
    let last = history.last();
    TrainSummary {
        status: status.into(),
        epochs: history.len(),
        final_loss: last.map(|r| r.loss),
        final_heldout_loss: history.iter().rev().find_map(|r| r.heldout_loss),
        final_noise_floor: last.map(|r| r.noise_floor),
        epochs_above_noise_floor: None,
        moments,
    }
}

fn print_row(row: &MetricRow<f64>, every: usize) {
    if every == 0 || (row.epoch + 1).is_multiple_of(every) || row.epoch == 0 {
        let held = row
            .heldout_loss
            .map_or(String::from("-"), |h| format!("{h:.3e}"));
        println!(
            "epoch {:>6}  loss {:.3e}  floor {:.3e}  heldout {held}  alpha {:.4}  <x> {:.4?}  <p> {:.4?}",
            row.epoch, row.loss, row.noise_floor, row.alpha, row.mean_x, row.mean_p
        );
    }
}

/// Signed means at the configured times, next to the classical orbit of the
/// initial center when the potential has an exact flow.
fn moment_checks<G: wigner_core::pushforward::SignedGenerator<f64> + ?Sized>(
    cfg: &ExperimentConfig,
    gen: &G,
    decomp: &wigner_core::InitialDecomposition,
) -> Result<Vec<MomentCheck>, CliError> {
    let n = cfg.physics.dim;
    let flow = cfg.classical_flow();
    let center = |v: &Vec<f64>| {
        if v.is_empty() {
            vec![0.0; n]
        } else {
            v.clone()
        }
    };
    let (x0, p0) = (center(&cfg.initial.center_x), center(&cfg.initial.center_p));
    let root = StreamRng::new(cfg.seed).split(label::EVALUATION);
    let mut out = Vec::new();
    for (i, &t) in cfg.train.moment_times.iter().enumerate() {
        let (mean_x, mean_p) = moments_at(
            gen,
            decomp,
            t,
            cfg.train.moment_samples,
            &root.derive(&[2, i as u64]),
        )?;
        let mut check = MomentCheck {
            t,
            mean_x,
            mean_p,
            reference_x: None,
            reference_p: None,
            max_error: None,
        };
        if let Some(flow) = &flow {
            let (mut rx, mut rp) = (vec![0.0; n], vec![0.0; n]);
            flow.flow(t, &x0, &p0, &mut rx, &mut rp);
            let err = check
                .mean_x
                .iter()
                .zip(&rx)
                .chain(check.mean_p.iter().zip(&rp))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            check.reference_x = Some(rx);
            check.reference_p = Some(rp);
            check.max_error = Some(err);
        }
        out.push(check);
    }
    Ok(out)
}

fn write_moments(path: &Path, dim: usize, checks: &[MomentCheck]) -> Result<(), CliError> {
    let mut header = vec!["t".to_string()];
    for prefix in ["mean_x", "mean_p", "ref_x", "ref_p"] {
        header.extend((0..dim).map(|i| format!("{prefix}_{i}")));
    }
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for c in checks {
        let mut cells = vec![num(c.t)];
        cells.extend(c.mean_x.iter().chain(&c.mean_p).map(|&v| num(v)));
        for r in [&c.reference_x, &c.reference_p] {
            match r {
                Some(r) => cells.extend(r.iter().map(|&v| num(v))),
                None => cells.extend(vec![String::new(); dim]),
            }
        }
        csv.row(&cells);
    }
    csv.save(path)
}

/// `wigner train`: the full min-max loop, or an adversary-only audit when an
/// exact flow is frozen in place of the networks.
pub fn run(
    cfg: &ExperimentConfig,
    out: &Path,
    resume: Option<&Path>,
    stop: Option<Arc<AtomicBool>>,
) -> Result<TrainSummary, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    // The snapshot lives in the output directory, so it omits that path.
    let snapshot = ExperimentConfig {
        out_dir: None,
        ..cfg.clone()
    };
    std::fs::write(out.join("config.toml"), snapshot.to_toml())
        .map_err(|e| CliError::io(out, e))?;
    let v = cfg.potential()?;
    let decomp = cfg.decomposition()?;
    let dim = cfg.physics.dim;
    let mut opts = cfg.train_options();
    opts.checkpoint_path = Some(out.join(CHECKPOINT_FILE));
    opts.stop = stop;
    let every = cfg.train.eval_every;

    if let Some(flow) = cfg.frozen_flow() {
        if resume.is_some() {
            return Err(CliError::Config(
                "a frozen-flow audit has nothing to resume".into(),
            ));
        }
        let gen = FrozenFlow { flow, dim };
        let mut log = MetricsLog::create(&out.join(METRICS_FILE), dim, &[])?;
        let mut io_err = None;
        let (_, rows) = audit_frozen(&opts, &v, &decomp, &gen, &mut |row| {
            print_row(row, every);
            if let Err(e) = log.row(row) {
                io_err.get_or_insert(e);
            }
        })?;
        if let Some(e) = io_err {
            return Err(e);
        }
        let moments = moment_checks(cfg, &gen, &decomp)?;
        let mut summary = summarize("completed", &rows, moments);
        summary.epochs_above_noise_floor =
            Some(rows.iter().filter(|r| r.loss > r.noise_floor).count());
        println!(
            "frozen audit: final loss {:.3e}, noise floor {:.3e}, {} of {} epochs above the floor",
            summary.final_loss.unwrap_or(f64::NAN),
            summary.final_noise_floor.unwrap_or(f64::NAN),
            summary.epochs_above_noise_floor.unwrap_or(0),
            rows.len()
        );
        finish(out, dim, &summary)?;
        return Ok(summary);
    }

    let state = match resume {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            let (state, ck) = TrainState::<f64>::from_bytes(&bytes)?;
            if ck.decomp != decomp
                || ck.horizon != cfg.run.horizon
                || ck.hbar != cfg.physics.hbar
                || ck.mass != cfg.physics.mass
            {
                return Err(CliError::Config(format!(
                    "{} was written for a different configuration",
                    path.display()
                )));
            }
            if state.seed != cfg.seed {
                return Err(CliError::Config(format!(
                    "checkpoint seed {} differs from config seed {}",
                    state.seed, cfg.seed
                )));
            }
            Some(state)
        }
        None => None,
    };
    let history = state.as_ref().map_or(&[][..], |s| &s.history[..]);
    let mut log = MetricsLog::create(&out.join(METRICS_FILE), dim, history)?;
    let mut io_err = None;
    let report = train(&opts, &v, &decomp, state, &mut |row| {
        print_row(row, every);
        if let Err(e) = log.row(row) {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    let status = match report.status {
        TrainStatus::Completed => "completed",
        TrainStatus::Interrupted => "interrupted",
        TrainStatus::Diverged { .. } => "diverged",
    };
    let moments = match report.status {
        TrainStatus::Completed => moment_checks(cfg, &report.state.sp, &decomp)?,
        _ => Vec::new(),
    };
    let summary = summarize(status, &report.state.history, moments);
    finish(out, dim, &summary)?;
    match report.status {
        TrainStatus::Completed => Ok(summary),
        TrainStatus::Interrupted => Err(CliError::Interrupted),
        TrainStatus::Diverged { epoch, loss } => Err(CliError::Diverged { epoch, loss }),
    }
}

fn finish(out: &Path, dim: usize, summary: &TrainSummary) -> Result<(), CliError> {
    if !summary.moments.is_empty() {
        write_moments(&out.join(MOMENTS_FILE), dim, &summary.moments)?;
        for m in &summary.moments {
            match m.max_error {
                Some(e) => println!(
                    "t {:.4}: <x> {:.4?} <p> {:.4?}  max error vs classical orbit {e:.4}",
                    m.t, m.mean_x, m.mean_p
                ),
                None => println!("t {:.4}: <x> {:.4?} <p> {:.4?}", m.t, m.mean_x, m.mean_p),
            }
        }
    }
    write_json(&out.join(SUMMARY_FILE), summary)
}
