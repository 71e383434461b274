use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::eval::{evaluate, EvalResult};
use super::two_phase::{train_phase_one, train_supervised_baseline, train_two_phase_with, TrainReport};
use crate::dataset::Scene;
use crate::error::{Error, Result};
use crate::head::Predictor;
use crate::nn::seeded;
use crate::scalar::Scalar;

/// Image-wise held-out split: floor(fraction·n) scenes (at least one) for
/// testing, the rest for training. Returns (test, pool) indices.
pub fn test_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 scenes to hold out a test split, got {n}")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must be in (0, 1), got {fraction}")));
    }
    let n_test = ((fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    // a stream distinct from the ratio split's
    idx.shuffle(&mut seeded(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    let pool = idx.split_off(n_test);
    Ok((idx, pool))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    SemiSupervised,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub accuracy: f64,
    pub n_labelled: usize,
    pub eval: EvalResult,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub mode: SweepMode,
    pub rows: Vec<SweepRow>,
    /// The ratio-1.0 control run.
    pub control: Option<SweepRow>,
    pub test_ids: Vec<String>,
    pub pool_size: usize,
}

impl SweepTable {
    /// (ratio, accuracy) pairs of the requested ratios.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.ratio, r.accuracy)).collect()
    }
}

/// Drop repeated ratios (keeping first occurrences) and reject values
/// outside (0, 1].
pub fn dedup_ratios(ratios: &[f64]) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(ratios.len());
    for &r in ratios {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Config(format!("ratio must be in (0, 1], got {r}")));
        }
        if out.iter().any(|&o| (o - r).abs() < 1e-12) {
            warn!("duplicate ratio {r} ignored");
        } else {
            out.push(r);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no ratios given".into()));
    }
    Ok(out)
}

/// Train and evaluate at every ratio on one fixed held-out split.
///
/// The representation phase sees the same image pool at every ratio, so it
/// is trained once and shared. Ratio run `i` uses seed `base.seed + i`.
/// With `control`, a ratio-1.0 run is added unless 1.0 is already listed.
/// Up to `threads` ratio runs execute concurrently.
pub fn ratio_sweep<T: Scalar>(
    scenes: &[Scene],
    ratios: &[f64],
    base: &TrainConfig,
    mode: SweepMode,
    control: bool,
    threads: usize,
) -> Result<SweepTable> {
    base.validate()?;
    let ratios = dedup_ratios(ratios)?;
    let (test_idx, pool_idx) = test_split(scenes.len(), base.test_fraction, base.seed)?;
    let test: Vec<Scene> = test_idx.iter().map(|&i| scenes[i].clone()).collect();
    let pool: Vec<Scene> = pool_idx.iter().map(|&i| scenes[i].clone()).collect();

    let mut jobs: Vec<f64> = ratios.clone();
    let has_full = ratios.contains(&1.0);
    if control && !has_full {
        jobs.push(1.0);
    }
    let vq = match mode {
        SweepMode::SemiSupervised => {
            info!("phase one on {} pool images", pool.len());
            Some(train_phase_one::<T>(&pool, base)?)
        }
        SweepMode::Baseline => None,
    };

    let run = |i: usize, ratio: f64| -> Result<SweepRow> {
        let cfg = TrainConfig {
            ratio,
            seed: base.seed + i as u64,
            ..base.clone()
        };
        let (model, report) = match &vq {
            Some((vq, log)) => {
                let (m, r) = train_two_phase_with(&pool, &cfg, vq, log.clone())?;
                (Predictor::Assembled(m), r)
            }
            None => {
                let (m, r) = train_supervised_baseline::<T>(&pool, &cfg)?;
                (Predictor::Net(m), r)
            }
        };
        let eval = evaluate(&model, &test, &cfg)?;
        info!("ratio {ratio}: accuracy {:.4}%", eval.accuracy);
        Ok(SweepRow {
            ratio,
            accuracy: eval.accuracy,
            n_labelled: report.labelled_ids.len(),
            eval,
            report,
        })
    };

    let threads = threads.max(1);
    let mut results: Vec<Option<Result<SweepRow>>> = (0..jobs.len()).map(|_| None).collect();
    for wave in (0..jobs.len()).collect::<Vec<_>>().chunks(threads) {
        if wave.len() == 1 {
            results[wave[0]] = Some(run(wave[0], jobs[wave[0]]));
            continue;
        }
        let (run, jobs) = (&run, &jobs);
        let out: Vec<(usize, Result<SweepRow>)> = std::thread::scope(|s| {
            let handles: Vec<_> = wave.iter().map(|&i| (i, s.spawn(move || run(i, jobs[i])))).collect();
            handles
                .into_iter()
                .map(|(i, h)| (i, h.join().unwrap_or_else(|_| Err(Error::State("ratio worker panicked".into())))))
                .collect()
        });
        for (i, r) in out {
            results[i] = Some(r);
        }
    }
    let mut rows = Vec::with_capacity(jobs.len());
    for r in results {
        rows.push(r.expect("every job ran")?);
    }
    let control_row = if control {
        if has_full {
            rows.iter().find(|r| r.ratio == 1.0).cloned()
        } else {
            rows.pop()
        }
    } else {
        None
    };
    Ok(SweepTable {
        mode,
        rows,
        control: control_row,
        test_ids: test.iter().map(|s| s.id.clone()).collect(),
        pool_size: pool.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_split_is_disjoint_and_fixed() {
        let (t, p) = test_split(200, 1.0 / 6.0, 4).unwrap();
        assert_eq!(t.len(), 33);
        assert_eq!(p.len(), 167);
        assert!(t.iter().all(|i| !p.contains(i)));
        assert_eq!(test_split(200, 1.0 / 6.0, 4).unwrap(), (t, p));
    }

    #[test]
    fn ratios_deduplicated() {
        assert_eq!(dedup_ratios(&[0.5, 0.1, 0.5]).unwrap(), vec![0.5, 0.1]);
        assert!(dedup_ratios(&[0.0]).is_err());
        assert!(dedup_ratios(&[]).is_err());
    }
}
