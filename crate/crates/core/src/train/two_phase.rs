use log::info;
use ndarray::{Array3, Array4, ArrayD, ArrayViewMutD, Axis};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::loss::grasp_loss_raw;
use crate::dataset::{rasterize_targets, split_indices, Scene, SplitSpec, TargetMaps};
use crate::error::{Error, Result};
use crate::head::{assemble_rggcnn2, build_ggcnn2, width_scale_for, AssembledModel, AssemblyTape, GraspNet, NetworkConfig};
use crate::nn::{seeded, Adam, Tape};
use crate::scalar::Scalar;
use crate::vq::{stack, train_vqvae, EpochLog, PhaseConfig, VqVae};

/// Mean phase-two loss over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadEpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub baseline: bool,
    pub labelled_ids: Vec<String>,
    pub n_unlabelled: usize,
    pub phase1: Vec<EpochLog>,
    pub phase2: Vec<HeadEpochLog>,
    /// Encoder + codebook checksum right after assembly and after phase two.
    pub frozen_checksum_before: Option<String>,
    pub frozen_checksum_after: Option<String>,
    pub trainable_params: usize,
    pub total_params: usize,
}

/// Anything phase two can fit: a forward pass with a tape, its backward pass,
/// and the trainable arrays in gradient order.
pub(crate) trait HeadModel<T: Scalar> {
    type Tape;
    fn forward_tape(&self, x: &Array4<T>) -> Result<(Array4<T>, Self::Tape)>;
    fn backward(&self, tape: &Self::Tape, g: &Array4<T>) -> Result<Vec<ArrayD<T>>>;
    fn trainable(&mut self) -> Vec<ArrayViewMutD<'_, T>>;
    fn width_scale(&self) -> f64;
}

impl<T: Scalar> HeadModel<T> for GraspNet<T> {
    type Tape = Tape<T>;
    fn forward_tape(&self, x: &Array4<T>) -> Result<(Array4<T>, Tape<T>)> {
        GraspNet::forward_tape(self, x)
    }
    fn backward(&self, tape: &Tape<T>, g: &Array4<T>) -> Result<Vec<ArrayD<T>>> {
        Ok(GraspNet::backward(self, tape, g)?.1)
    }
    fn trainable(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        self.params_mut()
    }
    fn width_scale(&self) -> f64 {
        self.config.heads.width_scale
    }
}

/// Inputs are precomputed quantized latents.
impl<T: Scalar> HeadModel<T> for AssembledModel<T> {
    type Tape = AssemblyTape<T>;
    fn forward_tape(&self, z_q: &Array4<T>) -> Result<(Array4<T>, AssemblyTape<T>)> {
        self.forward_latent_tape(z_q)
    }
    fn backward(&self, tape: &AssemblyTape<T>, g: &Array4<T>) -> Result<Vec<ArrayD<T>>> {
        AssembledModel::backward(self, tape, g)
    }
    fn trainable(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        self.trainable_mut()
    }
    fn width_scale(&self) -> f64 {
        self.head.config.heads.width_scale
    }
}

/// Minimize the grasp loss of `model` on (input, target) pairs.
pub(crate) fn fit_head<T: Scalar, M: HeadModel<T>>(
    model: &mut M,
    inputs: &[Array3<T>],
    targets: &[TargetMaps],
    phase: &PhaseConfig,
    seed: u64,
) -> Result<Vec<HeadEpochLog>> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Config("phase two needs at least one labelled scene".into()));
    }
    let mut rng = seeded(seed);
    let mut opt = Adam::new(T::of(phase.lr));
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut log = Vec::new();
    let mut step = 0usize;
    let capped = |s: usize| phase.max_steps.is_some_and(|m| s >= m);
    let total = phase.total_steps(inputs.len());
    for epoch in 0..phase.epochs {
        if capped(step) {
            break;
        }
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(phase.batch) {
            if capped(step) {
                break;
            }
            let x = stack(&chunk.iter().map(|&i| &inputs[i]).collect::<Vec<_>>());
            let t: Vec<&TargetMaps> = chunk.iter().map(|&i| &targets[i]).collect();
            let (raw, tape) = model.forward_tape(&x)?;
            let (loss, g) = grasp_loss_raw(&raw, &t, model.width_scale())?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step, value: loss.as_f64() });
            }
            let grads = model.backward(&tape, &g)?;
            opt.lr = T::of(phase.lr_at(step, total));
            opt.update(model.trainable(), &grads);
            sum += loss.as_f64();
            batches += 1;
            step += 1;
        }
        if batches > 0 {
            let loss = sum / batches as f64;
            info!("head epoch {epoch}: loss {loss:.5}");
            log.push(HeadEpochLog { epoch, steps: step, loss });
        }
    }
    Ok(log)
}

pub(crate) fn chw<T: Scalar>(scene: &Scene) -> Array3<T> {
    scene.chw().mapv(|v| T::of(v as f64))
}

/// The configured head with its width normalization set from the
/// resolution of the training images.
fn head_config_for(config: &TrainConfig, scenes: &[&Scene]) -> Result<NetworkConfig> {
    let mut head = config.model.head_config()?;
    if let Some(s) = scenes.first() {
        head.heads.width_scale = width_scale_for(s.height().max(s.width()));
    }
    Ok(head)
}

fn targets_of(scenes: &[&Scene]) -> Vec<TargetMaps> {
    scenes.iter().map(|s| rasterize_targets(s, s.height(), s.width())).collect()
}

/// Phase one only: the VQ-VAE over every image in `scenes`.
pub fn train_phase_one<T: Scalar>(scenes: &[Scene], config: &TrainConfig) -> Result<(VqVae<T>, Vec<EpochLog>)> {
    config.validate()?;
    let images: Vec<Array3<T>> = scenes.iter().map(chw).collect();
    train_vqvae(&images, &config.vq_config(), &config.phase1, phase_seeds(config.seed).0)
}

/// Sub-seeds for phase one, assembly and phase two, all drawn from one
/// generator seeded by the run seed.
fn phase_seeds(seed: u64) -> (u64, u64, u64) {
    let mut rng = seeded(seed);
    (rng.next_u64(), rng.next_u64(), rng.next_u64())
}

/// Two-phase semi-supervised training: the VQ-VAE on all images, then the
/// assembled decoder and head on the labelled split.
pub fn train_two_phase<T: Scalar>(scenes: &[Scene], config: &TrainConfig) -> Result<(AssembledModel<T>, TrainReport)> {
    let (vq, log) = train_phase_one(scenes, config)?;
    train_two_phase_with(scenes, config, &vq, log)
}

/// Phase two on top of an already trained phase-one model.
pub fn train_two_phase_with<T: Scalar>(
    scenes: &[Scene],
    config: &TrainConfig,
    vq: &VqVae<T>,
    phase1: Vec<EpochLog>,
) -> Result<(AssembledModel<T>, TrainReport)> {
    config.validate()?;
    let (lab, unl) = split_indices(scenes.len(), SplitSpec { ratio: config.ratio, seed: config.seed })?;
    let labelled: Vec<&Scene> = lab.iter().map(|&i| &scenes[i]).collect();
    let (_, s_assemble, s_phase2) = phase_seeds(config.seed);
    let mut model = assemble_rggcnn2(vq, &head_config_for(config, &labelled)?, &mut seeded(s_assemble))?;
    let before = model.frozen_checksum();
    let latents: Vec<Array3<T>> = labelled
        .iter()
        .map(|s| {
            let x = chw::<T>(s).insert_axis(Axis(0));
            Ok(model.latents(&x)?.index_axis_move(Axis(0), 0))
        })
        .collect::<Result<_>>()?;
    let targets = targets_of(&labelled);
    let phase2 = fit_head(&mut model, &latents, &targets, &config.phase2, s_phase2)?;
    let after = model.frozen_checksum();
    if after != before {
        return Err(Error::Integrity(format!(
            "frozen encoder/codebook changed during phase two ({before} -> {after})"
        )));
    }
    let report = TrainReport {
        config: config.clone(),
        baseline: false,
        labelled_ids: labelled.iter().map(|s| s.id.clone()).collect(),
        n_unlabelled: unl.len(),
        phase1,
        phase2,
        frozen_checksum_before: Some(before),
        frozen_checksum_after: Some(after),
        trainable_params: model.param_count(),
        total_params: model.total_param_count(),
    };
    Ok((model, report))
}

/// Supervised GGCNN2 on the labelled fraction only, no representation phase.
pub fn train_supervised_baseline<T: Scalar>(scenes: &[Scene], config: &TrainConfig) -> Result<(GraspNet<T>, TrainReport)> {
    config.validate()?;
    let (lab, unl) = split_indices(scenes.len(), SplitSpec { ratio: config.ratio, seed: config.seed })?;
    let labelled: Vec<&Scene> = lab.iter().map(|&i| &scenes[i]).collect();
    let (_, s_init, s_phase2) = phase_seeds(config.seed);
    let mut net = build_ggcnn2(&head_config_for(config, &labelled)?, &mut seeded(s_init))?;
    let inputs: Vec<Array3<T>> = labelled.iter().map(|s| chw(s)).collect();
    let targets = targets_of(&labelled);
    let phase2 = fit_head(&mut net, &inputs, &targets, &config.phase2, s_phase2)?;
    let report = TrainReport {
        config: config.clone(),
        baseline: true,
        labelled_ids: labelled.iter().map(|s| s.id.clone()).collect(),
        n_unlabelled: unl.len(),
        phase1: Vec::new(),
        phase2,
        frozen_checksum_before: None,
        frozen_checksum_after: None,
        trainable_params: net.param_count(),
        total_params: net.param_count(),
    };
    Ok((net, report))
}
