//! Cross-module invariants checked on random inputs.

use graspkit::calib::{
    apply_mapping, plan_trajectory, rpy_to_quaternion, MappingMatrix, Matrix7, ObjectGeom, Pose7, TableGeom,
};
use graspkit::geometry::{iou, GraspPose2D, GraspRect};
use graspkit::vq::{quantize, vq_loss, Codebook};
use ndarray::{Array2, Array4};
use proptest::prelude::*;
use rand::Rng;

fn rect(u: f64, v: f64, a: f64, w: f64, h: f64) -> GraspRect<f64> {
    GraspPose2D::with_height(u, v, a, w, h, 1.0).unwrap().to_rect()
}

fn grasp() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
    (10.0..50.0, 10.0..50.0, -1.5..1.5, 2.0..30.0, 2.0..15.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn iou_is_symmetric_and_bounded(a in grasp(), b in grasp()) {
        let (ra, rb) = (rect(a.0, a.1, a.2, a.3, a.4), rect(b.0, b.1, b.2, b.3, b.4));
        let ab = iou(&ra, &rb).unwrap();
        let ba = iou(&rb, &ra).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((iou(&ra, &ra).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quantized_cells_are_codebook_rows(seed in 0u64..1000, k in 2usize..12) {
        let mut rng = graspkit::nn::seeded(seed);
        let cb = Codebook::new(Array2::from_shape_fn((k, 3), |_| rng.random_range(-1.0..1.0))).unwrap();
        let z_e = Array4::from_shape_fn((2, 3, 4, 5), |_| rng.random_range(-1.0..1.0));
        let (z_q, idx) = quantize(&z_e, &cb).unwrap();
        for ((n, i, j), &r) in idx.indexed_iter() {
            prop_assert!(r < k);
            for c in 0..3 {
                prop_assert_eq!(z_q[[n, c, i, j]], cb.embeddings()[[r, c]]);
            }
        }
        let img = Array4::from_shape_fn((2, 3, 8, 8), |_| rng.random_range(0.0..1.0));
        let rec = img.mapv(|v: f64| v * 0.5);
        let l = vq_loss(&img, &rec, &z_e, &z_q, 0.25).unwrap();
        prop_assert!(l.recon_term >= 0.0 && l.dict_term >= 0.0 && l.commit_term >= 0.0);
        prop_assert!((l.total - (l.recon_term + l.dict_term + 0.25 * l.commit_term)).abs() < 1e-12);
    }

    #[test]
    fn mapped_quaternions_are_unit_and_canonical(
        seed in 0u64..1000,
        r in -3.1..3.1f64, p in -1.5..1.5f64, y in -3.1..3.1f64,
    ) {
        let mut rng = graspkit::nn::seeded(seed);
        let t = Matrix7::identity() + Matrix7::from_fn(|_, _| rng.random_range(-0.1..0.1));
        let c = Pose7::new([0.1, -0.2, 0.9], rpy_to_quaternion(r, p, y)).unwrap();
        let out = apply_mapping(&MappingMatrix { t }, &c).unwrap();
        let q = out.quaternion();
        prop_assert!((q.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(q[3] >= 0.0);
    }

    #[test]
    fn plans_stay_above_transit_until_descent(
        x in 0.4..0.7f64, y in -0.2..0.2f64, z in 0.0..0.15f64,
        depth in 0.0..0.15f64, height in 0.0..0.15f64, home_z in 0.25..0.6f64,
    ) {
        let down = |x: f64, y: f64, z: f64| {
            Pose7::new([x, y, z], rpy_to_quaternion(std::f64::consts::PI, 0.0, 0.3)).unwrap()
        };
        let table = TableGeom::default();
        let object = ObjectGeom { depth_gpc: depth, height_gpc: height };
        let plan = plan_trajectory(&down(x, y, z), &object, &table, &down(x, y, home_z)).unwrap();
        let labels: Vec<&str> = plan.iter().map(|w| w.label.as_str()).collect();
        prop_assert_eq!(labels, vec!["home", "transit", "descend", "release"]);
        prop_assert!(plan[0].pose.z >= table.transit_z() && plan[1].pose.z >= table.transit_z());
        prop_assert!(plan.iter().all(|w| w.pose.z >= table.table_z));
        prop_assert!(plan.windows(2).all(|p| p[1].pose.z <= p[0].pose.z));
    }
}
