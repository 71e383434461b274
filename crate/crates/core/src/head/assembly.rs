use std::path::Path;

use ndarray::{Array3, Array4, ArrayD, ArrayViewMutD, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{build_ggcnn2, maps_from_raw, GraspNet, NetworkConfig};
use crate::error::{Error, Result};
use crate::geometry::GraspMaps;
use crate::nn::{hex, seeded, Sequential, Tape, WeightArchive};
use crate::scalar::Scalar;
use crate::vq::{init_decoder, quantize, Codebook, VqVae, VqVaeConfig};

pub const RGGCNN2_CFG: &str = include_str!("../../../../configs/rggcnn2.cfg");

/// Where the head table comes from: a shipped name or an inline table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HeadRef {
    Named(String),
    Inline(NetworkConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RggcnnConfig {
    pub name: String,
    pub head: HeadRef,
    pub vq: VqVaeConfig,
}

impl RggcnnConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("rggcnn2 config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        // file references resolve next to the config
        if let HeadRef::Named(name) = &cfg.head {
            let candidate = path.parent().unwrap_or(Path::new(".")).join(name);
            if candidate.is_file() {
                cfg.head = HeadRef::Inline(NetworkConfig::from_file(&candidate)?);
            }
        }
        Ok(cfg)
    }

    pub fn rggcnn2() -> Self {
        Self::parse(RGGCNN2_CFG).expect("shipped rggcnn2 config parses")
    }

    /// The head table, resolving shipped names.
    pub fn head_config(&self) -> Result<NetworkConfig> {
        match &self.head {
            HeadRef::Inline(c) => Ok(c.clone()),
            HeadRef::Named(n) => match n.trim_end_matches(".cfg") {
                "ggcnn2" => Ok(NetworkConfig::ggcnn2()),
                "ggcnn" => Ok(NetworkConfig::ggcnn()),
                other => Err(Error::Config(format!("unknown head network `{other}`"))),
            },
        }
    }
}

/// RGGCNN2: frozen encoder and codebook, a trainable decoder, and the grasp
/// head fed by the decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledModel<T> {
    pub vq_config: VqVaeConfig,
    pub encoder: Sequential<T>,
    pub codebook: Codebook<T>,
    pub decoder: Sequential<T>,
    pub head: GraspNet<T>,
    pub encoder_frozen: bool,
    pub codebook_frozen: bool,
}

/// Activations kept for one phase-two backward pass.
pub struct AssemblyTape<T> {
    decoder: Tape<T>,
    head: Tape<T>,
}

/// Copy the encoder and codebook of a trained VQ-VAE, freeze them, and
/// attach a freshly initialized decoder and head.
pub fn assemble_rggcnn2<T: Scalar, R: Rng>(
    vq: &VqVae<T>,
    head_config: &NetworkConfig,
    rng: &mut R,
) -> Result<AssembledModel<T>> {
    if head_config.input_channels != vq.config.input_channels {
        return Err(Error::Config(format!(
            "head expects {} channels but the decoder produces {}",
            head_config.input_channels, vq.config.input_channels
        )));
    }
    let decoder = init_decoder(&vq.config, rng)?;
    let head = build_ggcnn2(head_config, rng)?;
    Ok(AssembledModel {
        vq_config: vq.config.clone(),
        encoder: vq.encoder.clone(),
        codebook: vq.codebook.clone(),
        decoder,
        head,
        encoder_frozen: true,
        codebook_frozen: true,
    })
}

/// [`assemble_rggcnn2`] from a phase-one archive.
pub fn assemble_from_archive<T: Scalar, R: Rng>(
    archive: &WeightArchive,
    head_config: &NetworkConfig,
    rng: &mut R,
) -> Result<AssembledModel<T>> {
    if !archive.contains("codebook") || !archive.names().any(|n| n.starts_with("encoder.")) {
        return Err(Error::format("<weights>", "archive lacks encoder or codebook arrays"));
    }
    let vq = VqVae::from_archive(archive)?;
    assemble_rggcnn2(&vq, head_config, rng)
}

fn hash_arrays<'a, T: Scalar>(h: &mut Sha256, name: &str, values: impl Iterator<Item = &'a T>) {
    h.update(name.as_bytes());
    for v in values {
        h.update(v.as_f64().to_bits().to_le_bytes());
    }
}

impl<T: Scalar> AssembledModel<T> {
    /// Quantized latents of an N×C×H×W batch through the frozen path.
    pub fn latents(&self, images: &Array4<T>) -> Result<Array4<T>> {
        let (_, c, h, w) = images.dim();
        let f = self.vq_config.downsample;
        if c != self.vq_config.input_channels || h % f != 0 || w % f != 0 {
            return Err(Error::Config(format!(
                "input {c}x{h}x{w}: need {} channels and sides divisible by {f}",
                self.vq_config.input_channels
            )));
        }
        let z_e = self.encoder.forward(images)?;
        Ok(quantize(&z_e, &self.codebook)?.0)
    }

    pub fn forward_latent(&self, z_q: &Array4<T>) -> Result<Array4<T>> {
        let features = self.decoder.forward(z_q)?;
        self.head.body.forward(&features)
    }

    /// Raw 4-channel output for an image batch.
    pub fn forward_raw(&self, images: &Array4<T>) -> Result<Array4<T>> {
        self.forward_latent(&self.latents(images)?)
    }

    pub fn forward_latent_tape(&self, z_q: &Array4<T>) -> Result<(Array4<T>, AssemblyTape<T>)> {
        let (features, decoder) = self.decoder.forward_tape(z_q)?;
        let (raw, head) = self.head.body.forward_tape(&features)?;
        Ok((raw, AssemblyTape { decoder, head }))
    }

    /// Gradients of the trainable arrays (decoder, then head).
    pub fn backward(&self, tape: &AssemblyTape<T>, g: &Array4<T>) -> Result<Vec<ArrayD<T>>> {
        let (g_feat, head_grads) = self.head.body.backward(&tape.head, g)?;
        let (_, mut grads) = self.decoder.backward(&tape.decoder, &g_feat)?;
        grads.extend(head_grads);
        Ok(grads)
    }

    /// Trainable arrays, matching [`backward`](Self::backward).
    pub fn trainable_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut p = self.decoder.params_mut();
        p.extend(self.head.params_mut());
        p
    }

    /// Trainable parameters only; frozen arrays are excluded.
    pub fn param_count(&self) -> usize {
        let mut n = self.decoder.param_count() + self.head.param_count();
        if !self.encoder_frozen {
            n += self.encoder.param_count();
        }
        if !self.codebook_frozen {
            n += self.codebook.embeddings().len();
        }
        n
    }

    pub fn total_param_count(&self) -> usize {
        self.encoder.param_count() + self.codebook.embeddings().len() + self.decoder.param_count() + self.head.param_count()
    }

    /// SHA-256 over the exact bits of the encoder and codebook.
    pub fn frozen_checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in self.encoder.params("encoder.") {
            hash_arrays(&mut h, &name, p.iter());
        }
        hash_arrays(&mut h, "codebook", self.codebook.embeddings().iter());
        hex(&h.finalize())
    }

    pub fn to_archive(&self) -> WeightArchive {
        let mut a = WeightArchive::new();
        a.meta = serde_json::json!({
            "model": "rggcnn2",
            "vq": self.vq_config,
            "head": self.head.config,
            "frozen": ["encoder", "codebook"],
        });
        for (name, p) in self.encoder.params("encoder.") {
            a.insert(&name, p);
        }
        a.insert("codebook", self.codebook.embeddings().view().into_dyn());
        for (name, p) in self.decoder.params("decoder.") {
            a.insert(&name, p);
        }
        self.head.write_params(&mut a, "head.");
        a
    }

    pub fn from_archive(a: &WeightArchive) -> Result<Self> {
        let head_config: NetworkConfig = serde_json::from_value(a.meta["head"].clone())
            .map_err(|e| Error::format("<weights>", format!("head config: {e}")))?;
        let mut model = assemble_from_archive::<T, _>(a, &head_config, &mut seeded(0))?;
        model.decoder.load_params("decoder.", |n, s| a.require(n, s))?;
        model.head.read_params(a, "head.")?;
        Ok(model)
    }
}

/// A loaded grasp predictor of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor<T> {
    Net(GraspNet<T>),
    Assembled(AssembledModel<T>),
}

impl<T: Scalar> Predictor<T> {
    pub fn from_archive(a: &WeightArchive) -> Result<Self> {
        match a.meta.get("model").and_then(|m| m.as_str()) {
            Some("rggcnn2") => Ok(Predictor::Assembled(AssembledModel::from_archive(a)?)),
            Some("vqvae") => Err(Error::State(
                "archive holds a phase-one VQ-VAE only; assemble and train a head first".into(),
            )),
            Some(_) if a.meta.get("head").is_some() => Ok(Predictor::Net(GraspNet::from_archive(a)?)),
            _ => Err(Error::State("archive carries no grasp model".into())),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&WeightArchive::load(path)?)
    }

    pub fn to_archive(&self) -> WeightArchive {
        match self {
            Predictor::Net(n) => n.to_archive(),
            Predictor::Assembled(m) => m.to_archive(),
        }
    }

    /// Spatial sides must be multiples of this.
    pub fn divisor(&self) -> usize {
        match self {
            Predictor::Net(_) => 4,
            Predictor::Assembled(m) => m.vq_config.downsample.max(4),
        }
    }

    pub fn input_channels(&self) -> usize {
        match self {
            Predictor::Net(n) => n.config.input_channels,
            Predictor::Assembled(m) => m.vq_config.input_channels,
        }
    }

    /// Pixels per unit of the raw W channel.
    pub fn width_scale(&self) -> f64 {
        match self {
            Predictor::Net(n) => n.config.heads.width_scale,
            Predictor::Assembled(m) => m.head.config.heads.width_scale,
        }
    }

    pub fn forward_raw(&self, x: &Array4<T>) -> Result<Array4<T>> {
        match self {
            Predictor::Net(n) => n.forward_raw(x),
            Predictor::Assembled(m) => m.forward_raw(x),
        }
    }
}

/// Grasp maps for one C×H×W image.
pub fn predict_maps<T: Scalar>(model: &Predictor<T>, image: &Array3<T>) -> Result<GraspMaps<T>> {
    let (c, h, w) = image.dim();
    let f = model.divisor();
    if c != model.input_channels() || h % f != 0 || w % f != 0 {
        return Err(Error::Config(format!(
            "image {c}x{h}x{w}: expected {} channels and sides divisible by {f}",
            model.input_channels()
        )));
    }
    let raw = model.forward_raw(&image.view().insert_axis(Axis(0)).to_owned())?;
    Ok(maps_from_raw(&raw, model.width_scale()).remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_vq() -> VqVae<f32> {
        VqVae::init(&VqVaeConfig::standard(3, 8, 16, 4), &mut seeded(3)).unwrap()
    }

    #[test]
    fn shipped_config_resolves() {
        let cfg = RggcnnConfig::rggcnn2();
        assert_eq!(cfg.head_config().unwrap(), NetworkConfig::ggcnn2());
        assert_eq!(cfg.vq.embeddings, 128);
        assert_eq!(cfg.vq, VqVaeConfig::standard(3, 32, 128, 64));
        let from_file = RggcnnConfig::from_file(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/rggcnn2.cfg"))).unwrap();
        assert_eq!(from_file.head_config().unwrap(), NetworkConfig::ggcnn2());
    }

    #[test]
    fn assembly_freezes_and_reinitializes() {
        let vq = small_vq();
        let m = assemble_rggcnn2(&vq, &NetworkConfig::ggcnn2(), &mut seeded(9)).unwrap();
        assert_eq!(m.encoder, vq.encoder);
        assert_eq!(m.codebook, vq.codebook);
        let a = m.decoder.params("");
        let b = vq.decoder.params("");
        assert!(a.iter().zip(&b).filter(|(x, _)| x.0.ends_with("weight")).all(|(x, y)| x.1 != y.1));
        assert_eq!(m.param_count(), m.decoder.param_count() + 70_548);
        assert!(m.total_param_count() > m.param_count());
        let raw = m.forward_raw(&Array4::zeros((1, 3, 64, 64))).unwrap();
        assert_eq!(raw.dim(), (1, 4, 64, 64));
    }

    #[test]
    fn missing_encoder_is_format_error() {
        let mut a = small_vq().to_archive();
        a.meta = serde_json::json!({});
        let empty = WeightArchive::new();
        assert!(matches!(
            assemble_from_archive::<f32, _>(&empty, &NetworkConfig::ggcnn2(), &mut seeded(0)),
            Err(Error::Format { .. })
        ));
        assert!(assemble_from_archive::<f32, _>(&a, &NetworkConfig::ggcnn2(), &mut seeded(0)).is_err());
    }

    #[test]
    fn archive_round_trip_and_predict() {
        let m = assemble_rggcnn2(&small_vq(), &NetworkConfig::ggcnn2(), &mut seeded(2)).unwrap();
        let p = Predictor::from_archive(&m.to_archive()).unwrap();
        assert_eq!(p, Predictor::Assembled(m));
        let img = Array3::from_elem((3, 32, 32), 0.5f32);
        let a = predict_maps(&p, &img).unwrap();
        assert_eq!(a.dim(), (32, 32));
        assert_eq!(a, predict_maps(&p, &img).unwrap());
        assert!(a.quality.iter().all(|q| (0.0..=1.0).contains(q)));
        assert!(matches!(predict_maps(&p, &Array3::zeros((3, 30, 32))), Err(Error::Config(_))));
    }

    #[test]
    fn net_predictor_full_size() {
        let net = build_ggcnn2::<f32, _>(&NetworkConfig::ggcnn2(), &mut seeded(0)).unwrap();
        let p = Predictor::<f32>::from_archive(&net.to_archive()).unwrap();
        let maps = predict_maps(&p, &Array3::zeros((3, 300, 300))).unwrap();
        assert_eq!(maps.dim(), (300, 300));
    }

    #[test]
    fn unloaded_archive_is_state_error() {
        assert!(matches!(Predictor::<f32>::from_archive(&WeightArchive::new()), Err(Error::State(_))));
        assert!(matches!(Predictor::<f32>::from_archive(&small_vq().to_archive()), Err(Error::State(_))));
    }
}
