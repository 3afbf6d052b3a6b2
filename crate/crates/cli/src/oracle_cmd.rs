use std::path::Path;

use serde::{Deserialize, Serialize};

use wigner_core::oracle::{
    coherent_wave, equivalence_sweep, first_excited_wave, split_step_observed, wigner_transform,
    Axis, GridField, WaveFunctionGrid,
};

use crate::config::{ExperimentConfig, StateName};
use crate::error::CliError;
use crate::output::{num, write_file, write_json, Csv, TIMESTAMP_PREFIX};
use crate::verify::sweep_settings;

pub const SWEEP_FILE: &str = "equivalence_sweep.csv";
pub const SWEEP_TOLERANCE: f64 = 1e-6;

fn require_1d(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.physics.dim == 1 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "the grid oracles are one-dimensional; physics.dim is {}",
            cfg.physics.dim
        )))
    }
}

fn axis(cfg: &ExperimentConfig) -> Result<Axis, CliError> {
    Ok(Axis::new(
        -cfg.oracle.half_width,
        cfg.oracle.half_width,
        cfg.oracle.nodes,
    )?)
}

fn initial_wave(cfg: &ExperimentConfig, x: Axis) -> Result<WaveFunctionGrid, CliError> {
    let (m, w, h) = (cfg.physics.mass, cfg.initial.omega, cfg.physics.hbar);
    let at = |v: &Vec<f64>| v.first().copied().unwrap_or(0.0);
    Ok(match cfg.initial.state {
        StateName::Coherent => coherent_wave(
            x,
            at(&cfg.initial.center_x),
            at(&cfg.initial.center_p),
            m,
            w,
            h,
        )?,
        StateName::FirstExcited => first_excited_wave(x, m, w, h)?,
    })
}

fn save_grid(out: &Path, stem: &str, f: &GridField) -> Result<(), CliError> {
    let path = out.join(format!("{stem}.grid"));
    write_file(&path, &f.to_bytes())?;
    let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let text = format!("{TIMESTAMP_PREFIX}{stamp}\n{}", f.to_csv());
    write_file(&out.join(format!("{stem}.csv")), text.as_bytes())
}

/// `wigner oracle equivalence-sweep`: one row per case, failing if any
/// relative gap exceeds the tolerance.
pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<f64, CliError> {
    require_1d(cfg)?;
    let cases = equivalence_sweep(&sweep_settings(cfg))?;
    let mut csv = Csv::new(&[
        "potential",
        "hbar",
        "state",
        "test",
        "lhs",
        "rhs",
        "rel_err",
    ]);
    for c in &cases {
        csv.row(&[
            c.potential.to_string(),
            num(c.hbar),
            c.state.name().to_string(),
            c.test.to_string(),
            num(c.weak),
            num(c.reduced),
            num(c.gap),
        ]);
    }
    csv.save(&out.join(SWEEP_FILE))?;
    let worst = cases.iter().max_by(|a, b| a.gap.total_cmp(&b.gap));
    let gap = worst.map_or(0.0, |c| c.gap);
    println!("{} cases, worst relative gap {gap:.3e}", cases.len());
    match worst {
        Some(c) if c.gap > SWEEP_TOLERANCE => Err(CliError::Verification(format!(
            "equivalence sweep: {} hbar={} {} test {} gap {:.3e}",
            c.potential,
            c.hbar,
            c.state.name(),
            c.test,
            c.gap
        ))),
        _ => Ok(gap),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveSummary {
    pub potential: String,
    pub duration: f64,
    pub steps: usize,
    pub dt: f64,
    pub norm_drift: f64,
    /// L2 distance between the final and initial Wigner functions.
    pub l2_distance: f64,
    pub final_negative_volume: f64,
}

/// Default duration: one period of the initial-state frequency, rescaled to
/// the well's own frequency for a harmonic potential.
fn default_duration(cfg: &ExperimentConfig) -> f64 {
    let omega = match cfg.classical_flow() {
        Some(wigner_core::oracle::AnalyticSolution::Harmonic { omega, .. }) => omega,
        _ => cfg.initial.omega,
    };
    2.0 * std::f64::consts::PI / omega
}

/// `wigner oracle evolve`: split-step evolution of the initial wave function,
/// Wigner grids at both ends and the trajectory of the means.
pub fn evolve(
    cfg: &ExperimentConfig,
    potential: Option<&str>,
    out: &Path,
) -> Result<EvolveSummary, CliError> {
    require_1d(cfg)?;
    let mut cfg = cfg.clone();
    if let Some(name) = potential {
        if name != cfg.potential.name {
            cfg.potential.name = name.to_string();
            cfg.potential.params.clear();
        }
    }
    let v = cfg.potential()?;
    let x = axis(&cfg)?;
    let psi0 = initial_wave(&cfg, x)?;
    let duration = cfg
        .oracle
        .duration
        .unwrap_or_else(|| default_duration(&cfg));
    let steps = (duration / cfg.oracle.dt).round().max(1.0) as usize;
    let dt = duration / steps as f64;
    let (h, m) = (cfg.physics.hbar, cfg.physics.mass);
    let record = (steps / 200).max(1);
    let mut traj = Csv::new(&["t", "mean_x", "mean_p", "norm"]);
    let mut last = psi0.clone();
    split_step_observed(&psi0, &v, h, m, dt, steps, |s, psi| {
        if s % record == 0 || s == steps {
            let (mx, _) = psi.position_moments();
            traj.numbers(&[s as f64 * dt, mx, psi.mean_momentum(h), psi.norm()]);
        }
        if s == steps {
            last = psi.clone();
        }
        Ok(())
    })?;
    let f0 = wigner_transform(&psi0, h, x)?;
    let f1 = wigner_transform(&last, h, x)?;
    save_grid(out, "wigner_initial", &f0)?;
    save_grid(out, "wigner_final", &f1)?;
    traj.save(&out.join("trajectory.csv"))?;
    let summary = EvolveSummary {
        potential: cfg.potential.name.clone(),
        duration,
        steps,
        dt,
        norm_drift: (last.norm() - psi0.norm()).abs(),
        l2_distance: f0.l2_distance(&f1)?,
        final_negative_volume: f1.negative_volume(),
    };
    println!(
        "{}: {} steps of {:.3e} over t = {:.4}; L2(final, initial) = {:.3e}, norm drift {:.1e}",
        summary.potential, steps, dt, duration, summary.l2_distance, summary.norm_drift
    );
    write_json(&out.join("evolve_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerSummary {
    pub integral: f64,
    pub min_value: f64,
    pub negative_volume: f64,
}

/// `wigner oracle wigner`: the Wigner function of the initial state.
pub fn wigner(cfg: &ExperimentConfig, out: &Path) -> Result<WignerSummary, CliError> {
    require_1d(cfg)?;
    let x = axis(cfg)?;
    let f = wigner_transform(&initial_wave(cfg, x)?, cfg.physics.hbar, x)?;
    save_grid(out, "wigner_initial", &f)?;
    let summary = WignerSummary {
        integral: f.integral(),
        min_value: f.min_value(),
        negative_volume: f.negative_volume(),
    };
    println!(
        "integral {:.10}, min {:.4e}, negative volume {:.6}",
        summary.integral, summary.min_value, summary.negative_volume
    );
    write_json(&out.join("wigner_summary.json"), &summary)?;
    Ok(summary)
}
