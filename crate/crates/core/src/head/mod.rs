//! Grasp networks: the standalone GGCNN/GGCNN2 and the RGGCNN2 assembly.

mod assembly;
mod network;

pub use assembly::{
    assemble_from_archive, assemble_rggcnn2, predict_maps, AssembledModel, AssemblyTape, HeadRef, Predictor,
    RggcnnConfig, RGGCNN2_CFG,
};
pub use network::{build_ggcnn2, maps_from_raw, GraspNet, HeadSpec, NetworkConfig, GGCNN2_CFG, GGCNN_CFG, width_scale_for};
