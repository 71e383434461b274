use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::error::{Error, Result};
use crate::nn::seeded;

/// Labelled fraction n1 / (n1 + n2) and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratio: f64,
    pub seed: u64,
}

/// Shuffle `0..n` by `seed` and cut after floor(ratio·n).
pub fn split_indices(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Config("cannot split an empty scene list".into()));
    }
    if !(spec.ratio > 0.0 && spec.ratio <= 1.0) {
        return Err(Error::Config(format!("ratio must be in (0, 1], got {}", spec.ratio)));
    }
    let n1 = (spec.ratio * n as f64).floor() as usize;
    if n1 == 0 {
        return Err(Error::Config(format!(
            "ratio {} of {n} scenes leaves no labelled scene",
            spec.ratio
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(spec.seed));
    let unlabelled = idx.split_off(n1);
    Ok((idx, unlabelled))
}

/// Image-wise split into labelled scenes and unlabelled copies whose
/// annotations are dropped.
pub fn split_by_ratio(scenes: &[Scene], spec: SplitSpec) -> Result<(Vec<Scene>, Vec<Scene>)> {
    let (lab, unl) = split_indices(scenes.len(), spec)?;
    Ok((
        lab.iter().map(|&i| scenes[i].clone()).collect(),
        unl.iter().map(|&i| scenes[i].unlabelled()).collect(),
    ))
}
