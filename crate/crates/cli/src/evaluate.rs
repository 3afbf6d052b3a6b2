use std::path::Path;

use serde::{Deserialize, Serialize};

use wigner_core::checkpoint::decode_checkpoint;
use wigner_core::pushforward::sample_batch;
use wigner_core::rng::label;
use wigner_core::{PhaseBatch, StreamRng};

use crate::error::CliError;
use crate::output::{num, write_json, Csv};

pub const SAMPLES_FILE: &str = "samples.csv";
pub const MARGINALS_FILE: &str = "marginals.csv";
pub const SUMMARY_FILE: &str = "evaluate_summary.json";

/// A signed histogram of one coordinate: density per bin with its Monte Carlo
/// standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub axis: String,
    pub lo: f64,
    pub hi: f64,
    pub density: Vec<f64>,
    pub std_error: Vec<f64>,
}

impl Marginal {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.density.len() as f64
    }

    /// Bins whose density lies more than three standard errors below zero.
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.density.len())
            .filter(|&b| self.density[b] < -3.0 * self.std_error[b])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSummary {
    pub t: f64,
    pub mean_x: Vec<f64>,
    pub mean_p: Vec<f64>,
    /// Signed covariance of `(x, p)`, row-major `2N x 2N`.
    pub covariance: Vec<Vec<f64>>,
    pub flagged_bins: usize,
    pub total_bins: usize,
    pub negative_fraction: f64,
    pub marginals: Vec<Marginal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateSummary {
    pub samples: usize,
    pub alpha: f64,
    pub times: Vec<TimeSummary>,
}

/// One signed sample: coordinates `x..., p...` and weight.
struct Weighted<'a> {
    z: Vec<&'a [f64]>,
    w: Vec<f64>,
}

fn weighted<'a>(
    plus: &'a PhaseBatch,
    minus: &'a PhaseBatch,
    a_plus: f64,
    a_minus: f64,
) -> Weighted<'a> {
    let mut z = Vec::with_capacity(plus.len() + minus.len());
    let mut w = Vec::with_capacity(plus.len() + minus.len());
    for (batch, weight) in [(plus, a_plus), (minus, -a_minus)] {
        for i in 0..batch.len() {
            z.push(batch.x(i));
            z.push(batch.p(i));
            w.push(weight);
        }
    }
    Weighted { z, w }
}

impl Weighted<'_> {
    fn coord(&self, i: usize, c: usize, n: usize) -> f64 {
        if c < n {
            self.z[2 * i][c]
        } else {
            self.z[2 * i + 1][c - n]
        }
    }
}

/// Signed means and covariance with `M` the per-branch batch size: every
/// expectation is `(1/M) sum_i w_i g(z_i)`.
fn moments(s: &Weighted<'_>, m: usize, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = 2 * n;
    let mf = m as f64;
    let mut mean = vec![0.0; d];
    for (i, &w) in s.w.iter().enumerate() {
        for (c, mu) in mean.iter_mut().enumerate() {
            *mu += w * s.coord(i, c, n);
        }
    }
    mean.iter_mut().for_each(|v| *v /= mf);
    let mut cov = vec![vec![0.0; d]; d];
    for (i, &w) in s.w.iter().enumerate() {
        for a in 0..d {
            let da = s.coord(i, a, n) - mean[a];
            for b in 0..d {
                cov[a][b] += w * da * (s.coord(i, b, n) - mean[b]);
            }
        }
    }
    cov.iter_mut().flatten().for_each(|v| *v /= mf);
    (mean, cov)
}

/// Signed histogram of coordinate `c` over `bins` bins spanning the sample
/// range. The per-bin standard error is that of the mean of
/// `w_i 1[z_i in bin] / width` over `M` draws per branch, the two branches
/// being independent.
fn marginal(
    s: &Weighted<'_>,
    m: usize,
    n: usize,
    c: usize,
    bins: usize,
    split: usize,
    name: String,
) -> Marginal {
    let values: Vec<f64> = (0..s.w.len()).map(|i| s.coord(i, c, n)).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let mf = m as f64;
    // Per branch and bin: sum of w and of w^2 over the branch's draws.
    let mut sums = vec![[0.0f64; 2]; bins];
    let mut sq = vec![[0.0f64; 2]; bins];
    for (i, (&v, &w)) in values.iter().zip(&s.w).enumerate() {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        let branch = usize::from(i >= split);
        sums[b][branch] += w;
        sq[b][branch] += w * w;
    }
    let mut density = Vec::with_capacity(bins);
    let mut std_error = Vec::with_capacity(bins);
    for b in 0..bins {
        density.push((sums[b][0] + sums[b][1]) / (mf * width));
        let var: f64 = (0..2)
            .map(|k| {
                let mean = sums[b][k] / mf;
                (sq[b][k] / mf - mean * mean).max(0.0) / mf
            })
            .sum();
        std_error.push(var.sqrt() / width);
    }
    Marginal {
        axis: name,
        lo,
        hi,
        density,
        std_error,
    }
}

/// `wigner evaluate`: signed sample clouds, marginal histograms with a
/// negativity report and signed moments at each requested time.
pub fn run(
    checkpoint: &Path,
    times: &[f64],
    samples: usize,
    bins: usize,
    seed: u64,
    out: &Path,
) -> Result<EvaluateSummary, CliError> {
    let bytes = std::fs::read(checkpoint).map_err(|e| CliError::io(checkpoint, e))?;
    let (ck, _) = decode_checkpoint::<f64>(&bytes)?;
    if samples == 0 || bins == 0 {
        return Err(CliError::Config(
            "samples and bins must be at least 1".into(),
        ));
    }
    if let Some(t) = times.iter().find(|t| !(0.0..=ck.horizon).contains(*t)) {
        return Err(CliError::Config(format!(
            "time {t} outside [0, {}]",
            ck.horizon
        )));
    }
    let n = ck.decomp.dim();
    let mut header = vec!["t".to_string(), "branch".into(), "weight".into()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    header.extend((0..n).map(|i| format!("p_{i}")));
    let mut sample_csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    let mut marginal_csv = Csv::new(&[
        "t",
        "axis",
        "bin_lo",
        "bin_hi",
        "density",
        "std_error",
        "flagged",
    ]);
    let root = StreamRng::new(seed).split(label::EVALUATION);
    let mut summaries = Vec::with_capacity(times.len());
    for (ti, &t) in times.iter().enumerate() {
        let s = sample_batch(
            &ck.sp,
            &ck.decomp,
            &vec![t; samples],
            &root.derive(&[ti as u64]),
        )?;
        for (batch, name, w) in [
            (&s.plus, "plus", s.alpha_plus),
            (&s.minus, "minus", -s.alpha_minus),
        ] {
            for i in 0..batch.len() {
                let mut cells = vec![num(t), name.to_string(), num(w)];
                cells.extend(batch.x(i).iter().chain(batch.p(i)).map(|&v| num(v)));
                sample_csv.row(&cells);
            }
        }
        let weighted = weighted(&s.plus, &s.minus, s.alpha_plus, s.alpha_minus);
        let (mean, covariance) = moments(&weighted, samples, n);
        let marginals: Vec<Marginal> = (0..2 * n)
            .map(|c| {
                let name = if c < n {
                    format!("x_{c}")
                } else {
                    format!("p_{}", c - n)
                };
                marginal(&weighted, samples, n, c, bins, s.plus.len(), name)
            })
            .collect();
        let mut flagged_bins = 0;
        for mg in &marginals {
            let flagged = mg.flagged();
            flagged_bins += flagged.len();
            let w = mg.width();
            for b in 0..mg.density.len() {
                let lo = mg.lo + b as f64 * w;
                marginal_csv.row(&[
                    num(t),
                    mg.axis.clone(),
                    num(lo),
                    num(lo + w),
                    num(mg.density[b]),
                    num(mg.std_error[b]),
                    u8::from(flagged.contains(&b)).to_string(),
                ]);
            }
        }
        let total_bins = bins * 2 * n;
        let summary = TimeSummary {
            t,
            mean_x: mean[..n].to_vec(),
            mean_p: mean[n..].to_vec(),
            covariance,
            flagged_bins,
            total_bins,
            negative_fraction: flagged_bins as f64 / total_bins as f64,
            marginals,
        };
        println!(
            "t {t:.4}: <x> {:.4?} <p> {:.4?}  flagged bins {flagged_bins}/{total_bins}",
            summary.mean_x, summary.mean_p
        );
        summaries.push(summary);
    }
    let summary = EvaluateSummary {
        samples,
        alpha: if ck.sp.alpha_frozen {
            0.0
        } else {
            wigner_core::pushforward::wigner_negativity_weight(&ck.sp)
        },
        times: summaries,
    };
    sample_csv.save(&out.join(SAMPLES_FILE))?;
    marginal_csv.save(&out.join(MARGINALS_FILE))?;
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(points: &[(f64, f64)]) -> PhaseBatch {
        let mut b = PhaseBatch::with_capacity(1, points.len());
        for &(x, p) in points {
            b.push(0.0, &[x], &[p]).unwrap();
        }
        b
    }

    #[test]
    fn signed_moments_cancel_the_minus_branch() {
        let plus = batch(&[(1.0, 0.0), (3.0, 2.0)]);
        let minus = batch(&[(1.0, 0.0), (1.0, 0.0)]);
        let s = weighted(&plus, &minus, 1.5, 0.5);
        let (mean, cov) = moments(&s, 2, 1);
        // (1.5 (1 + 3) - 0.5 (1 + 1)) / 2 and (1.5 * 2) / 2
        assert_eq!(mean, vec![2.5, 1.5]);
        assert_eq!(cov.len(), 2);
        assert_eq!(cov[0][1], cov[1][0]);
    }

    #[test]
    fn histogram_integrates_to_total_weight() {
        let plus = batch(&[(0.1, 0.0), (0.4, 0.0), (0.9, 0.0), (0.95, 1.0)]);
        let minus = batch(&[]);
        let s = weighted(&plus, &minus, 1.0, 0.0);
        let mg = marginal(&s, 4, 1, 0, 5, 4, "x_0".into());
        let total: f64 = mg.density.iter().map(|d| d * mg.width()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(mg.flagged().is_empty());
        assert!(mg.std_error.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn strongly_negative_bins_are_flagged() {
        let plus = batch(&[(0.0, 0.0); 50]);
        let minus = batch(&[(1.0, 0.0); 50]);
        let s = weighted(&plus, &minus, 1.2, 0.2);
        let mg = marginal(&s, 50, 1, 0, 2, 50, "x_0".into());
        assert_eq!(mg.flagged(), vec![1]);
    }
}
