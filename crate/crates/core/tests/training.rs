//! Short training runs through the public API.

use std::path::Path;

use graspkit::dataset::synth_dataset;
use graspkit::head::{predict_maps, Predictor};
use graspkit::nn::WeightArchive;
use graspkit::train::{evaluate, train_supervised_baseline, train_two_phase, TrainConfig};

fn quick() -> TrainConfig {
    let mut cfg = TrainConfig { ratio: 0.5, seed: 4, ..TrainConfig::default() };
    cfg.phase1.batch = 4;
    cfg.phase1.max_steps = Some(3);
    cfg.phase2.max_steps = Some(3);
    cfg
}

#[test]
fn two_phase_run_is_reproducible_and_keeps_the_encoder_frozen() {
    let scenes = synth_dataset(8, 11, 64, 64);
    let cfg = quick();
    let (a, report) = train_two_phase::<f32>(&scenes, &cfg).unwrap();
    let (b, _) = train_two_phase::<f32>(&scenes, &cfg).unwrap();
    assert_eq!(report.frozen_checksum_before, report.frozen_checksum_after);
    assert_eq!(report.labelled_ids.len(), 4);
    assert_eq!(report.n_unlabelled, 4);
    assert_eq!(a.head.config.heads.width_scale, 32.0);

    let (pa, pb) = (Predictor::Assembled(a), Predictor::Assembled(b));
    assert_eq!(pa.to_archive().to_bytes(), pb.to_archive().to_bytes());

    let bytes = pa.to_archive().to_bytes();
    let reloaded = Predictor::<f32>::from_archive(&WeightArchive::from_bytes(&bytes, Path::new("mem")).unwrap()).unwrap();
    assert_eq!(reloaded.width_scale(), 32.0);
    let img = scenes[0].chw();
    assert_eq!(predict_maps(&pa, &img).unwrap(), predict_maps(&reloaded, &img).unwrap());

    let e = evaluate(&pa, &scenes, &cfg).unwrap();
    assert_eq!(e.n_scenes, 8);
    assert!((e.accuracy - 100.0 * e.n_success as f64 / 8.0).abs() < 1e-12);
}

#[test]
fn baseline_width_scale_follows_training_resolution() {
    let scenes = synth_dataset(4, 2, 32, 32);
    let cfg = TrainConfig { ratio: 1.0, ..quick() };
    let (net, report) = train_supervised_baseline::<f32>(&scenes, &cfg).unwrap();
    assert!(report.baseline && report.phase1.is_empty());
    assert_eq!(net.config.heads.width_scale, 16.0);
    assert_eq!(report.trainable_params, 70_548);
}
