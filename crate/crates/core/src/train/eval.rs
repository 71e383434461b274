use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::two_phase::chw;
use crate::dataset::Scene;
use crate::error::Result;
use crate::geometry::{angle_diff, grasp_from_maps, iou, GraspMaps, GraspPose2D, GraspRect};
use crate::head::{maps_from_raw, Predictor};
use crate::scalar::Scalar;
use crate::vq::stack;

/// Outcome for one scored scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: String,
    pub grasp: GraspPose2D<f64>,
    pub best_iou: f64,
    /// Ground-truth rectangle that made the grasp succeed, or the one with
    /// the highest IOU otherwise.
    pub matched: Option<GraspRect<f64>>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n_scenes: usize,
    pub n_success: usize,
    /// Percent.
    pub accuracy: f64,
    /// Scenes without positive rectangles, not scored.
    pub excluded: Vec<String>,
    pub records: Vec<SceneRecord>,
}

/// Success iff some ground-truth rectangle has IOU above the threshold and
/// an angle difference below the threshold.
pub fn score_grasp(
    id: &str,
    grasp: &GraspPose2D<f64>,
    truth: &[GraspRect<f64>],
    iou_threshold: f64,
    angle_threshold: f64,
) -> Result<SceneRecord> {
    let rect = grasp.to_rect();
    let mut best: Option<(f64, GraspRect<f64>)> = None;
    let mut hit = None;
    for gt in truth {
        let v = iou(&rect, gt)?;
        if best.is_none_or(|b| v > b.0) {
            best = Some((v, *gt));
        }
        if hit.is_none() && v > iou_threshold && angle_diff(grasp.angle(), gt.angle()) < angle_threshold {
            hit = Some(*gt);
        }
    }
    Ok(SceneRecord {
        id: id.to_string(),
        grasp: *grasp,
        best_iou: best.map_or(0.0, |b| b.0),
        matched: hit.or(best.map(|b| b.1)),
        success: hit.is_some(),
    })
}

/// Score a scene from already predicted maps.
pub fn score_maps<T: Scalar>(maps: &GraspMaps<T>, scene: &Scene, config: &TrainConfig) -> Result<SceneRecord> {
    let g = grasp_from_maps(maps, T::of(config.smooth_sigma))?.grasp.cast::<f64>();
    score_grasp(&scene.id, &g, &scene.positive, config.iou_threshold, config.angle_threshold)
}

const EVAL_BATCH: usize = 16;

/// Top-1 rectangle accuracy of `model` on `scenes`.
pub fn evaluate<T: Scalar>(model: &Predictor<T>, scenes: &[Scene], config: &TrainConfig) -> Result<EvalResult> {
    let (scored, excluded): (Vec<&Scene>, Vec<&Scene>) = scenes.iter().partition(|s| !s.positive.is_empty());
    let mut records = Vec::with_capacity(scored.len());
    for chunk in scored.chunks(EVAL_BATCH) {
        let imgs: Vec<Array3<T>> = chunk.iter().map(|s| chw(s)).collect();
        let raw = model.forward_raw(&stack(&imgs.iter().collect::<Vec<_>>()))?;
        for (maps, scene) in maps_from_raw(&raw, model.width_scale()).iter().zip(chunk) {
            records.push(score_maps(maps, scene, config)?);
        }
    }
    let n_success = records.iter().filter(|r| r.success).count();
    let n = records.len();
    Ok(EvalResult {
        n_scenes: n,
        n_success,
        accuracy: if n == 0 { 0.0 } else { 100.0 * n_success as f64 / n as f64 },
        excluded: excluded.iter().map(|s| s.id.clone()).collect(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt() -> GraspRect<f64> {
        GraspPose2D::new(30.0, 30.0, 0.3, 20.0, 1.0).unwrap().to_rect()
    }

    #[test]
    fn identical_rect_succeeds() {
        let g = gt().to_grasp(1.0).unwrap();
        let r = score_grasp("a", &g, &[gt()], 0.25, std::f64::consts::FRAC_PI_6).unwrap();
        assert!(r.success);
        assert!((r.best_iou - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_rect_fails() {
        let g = GraspPose2D::new(100.0, 100.0, 0.3, 20.0, 1.0).unwrap();
        let r = score_grasp("a", &g, &[gt()], 0.25, std::f64::consts::FRAC_PI_6).unwrap();
        assert!(!r.success);
        assert_eq!(r.best_iou, 0.0);
    }

    #[test]
    fn angle_gate() {
        let g = GraspPose2D::new(30.0, 30.0, 0.3 + 0.6, 20.0, 1.0).unwrap();
        let r = score_grasp("a", &g, &[gt()], 0.1, std::f64::consts::FRAC_PI_6).unwrap();
        assert!(!r.success);
    }
}
