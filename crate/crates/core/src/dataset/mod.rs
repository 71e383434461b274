//! Scenes, Cornell ingestion, target rasterization, ratio splits,
//! augmentation and the synthetic desk-scale dataset.

mod augment;
mod cornell;
mod raster;
mod scene;
mod split;
mod synth;

pub use augment::{augment, inverse_params, AugmentParams};
pub use cornell::{load_cornell_dir, load_cornell_scene, parse_rect_file, ParsedRects};
pub use raster::{central_third_contains, rasterize_targets, TargetMaps, W_MAX};
pub use scene::{batch_of, center_crop_resize, export_scenes, import_scenes, load_dataset, read_rgb, to_rgb8, Scene};
pub use split::{split_by_ratio, split_indices, SplitSpec};
pub use synth::{synth_bar, synth_dataset, Shape, SynthObject};
