use log::info;
use ndarray::{Array3, Array4, ArrayD, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{vq_grads, vq_loss, VqLossBreakdown};
use super::quantizer::{quantize, Codebook};
use crate::error::{Error, Result};
use crate::nn::{seeded, Adam, LayerSpec, Sequential, WeightArchive};
use crate::scalar::Scalar;

/// Architecture and objective settings of the representation learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqVaeConfig {
    pub input_channels: usize,
    /// K
    pub embeddings: usize,
    /// D
    pub embedding_dim: usize,
    pub beta: f64,
    /// Total spatial downsampling of the encoder.
    pub downsample: usize,
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
}

impl VqVaeConfig {
    /// Two stride-2 blocks and two residual blocks each way.
    pub fn standard(input_channels: usize, hidden: usize, embeddings: usize, embedding_dim: usize) -> Self {
        let half = (hidden / 2).max(1);
        let res = LayerSpec::Residual {
            hidden: half,
            kernel: 3,
        };
        VqVaeConfig {
            input_channels,
            embeddings,
            embedding_dim,
            beta: 0.25,
            downsample: 4,
            encoder: vec![
                LayerSpec::Conv { filters: half, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Conv { filters: hidden, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Conv { filters: hidden, kernel: 3, stride: 1, padding: 1 },
                res.clone(),
                res.clone(),
                LayerSpec::Relu,
                LayerSpec::Conv { filters: embedding_dim, kernel: 1, stride: 1, padding: 0 },
            ],
            decoder: vec![
                LayerSpec::Conv { filters: hidden, kernel: 3, stride: 1, padding: 1 },
                res.clone(),
                res,
                LayerSpec::Relu,
                LayerSpec::TransposedConv { filters: half, kernel: 4, stride: 2, padding: 1, output_padding: 0 },
                LayerSpec::Relu,
                LayerSpec::TransposedConv {
                    filters: input_channels,
                    kernel: 4,
                    stride: 2,
                    padding: 1,
                    output_padding: 0,
                },
            ],
        }
    }
}

/// Encoder, codebook and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct VqVae<T> {
    pub config: VqVaeConfig,
    pub encoder: Sequential<T>,
    pub codebook: Codebook<T>,
    pub decoder: Sequential<T>,
}

/// Everything one forward pass produces.
#[derive(Debug, Clone)]
pub struct VqOutput<T> {
    pub z_e: Array4<T>,
    pub z_q: Array4<T>,
    pub indices: Array3<usize>,
    pub recon: Array4<T>,
}

/// Build a decoder for `config` with fresh weights.
pub fn init_decoder<T: Scalar, R: Rng>(config: &VqVaeConfig, rng: &mut R) -> Result<Sequential<T>> {
    let (dec, ch) = Sequential::build(&config.decoder, config.embedding_dim, rng)?;
    if ch != config.input_channels {
        return Err(Error::Config(format!(
            "decoder produces {ch} channels, expected {}",
            config.input_channels
        )));
    }
    Ok(dec)
}

impl<T: Scalar> VqVae<T> {
    pub fn init<R: Rng>(config: &VqVaeConfig, rng: &mut R) -> Result<Self> {
        let (encoder, ch) = Sequential::build(&config.encoder, config.input_channels, rng)?;
        if ch != config.embedding_dim {
            return Err(Error::Config(format!(
                "encoder produces {ch} channels but embedding_dim is {}",
                config.embedding_dim
            )));
        }
        let codebook = Codebook::init(config.embeddings, config.embedding_dim, rng)?;
        let decoder = init_decoder(config, rng)?;
        let model = VqVae {
            config: config.clone(),
            encoder,
            codebook,
            decoder,
        };
        let probe = 16 * config.downsample;
        model.check_spatial(probe, probe)?;
        Ok(model)
    }

    fn check_spatial(&self, h: usize, w: usize) -> Result<()> {
        let f = self.config.downsample;
        if f == 0 || !h.is_multiple_of(f) || !w.is_multiple_of(f) {
            return Err(Error::Config(format!(
                "image {h}x{w} is not divisible by the downsampling factor {f}"
            )));
        }
        let enc = self.encoder.shape_trace((self.config.input_channels, h, w))?;
        let latent = enc.last().map(|t| t.1).unwrap_or((self.config.input_channels, h, w));
        if latent != (self.config.embedding_dim, h / f, w / f) {
            return Err(Error::Config(format!(
                "encoder maps {h}x{w} to {latent:?}, expected ({}, {}, {})",
                self.config.embedding_dim,
                h / f,
                w / f
            )));
        }
        let dec = self.decoder.shape_trace(latent)?;
        let out = dec.last().map(|t| t.1).unwrap_or(latent);
        if out != (self.config.input_channels, h, w) {
            return Err(Error::Config(format!("decoder maps {latent:?} to {out:?}, expected ({}, {h}, {w})", self.config.input_channels)));
        }
        Ok(())
    }

    pub fn encode(&self, image: &Array4<T>) -> Result<Array4<T>> {
        let (_, c, h, w) = image.dim();
        if c != self.config.input_channels {
            return Err(Error::Config(format!("expected {} channels, got {c}", self.config.input_channels)));
        }
        self.check_spatial(h, w)?;
        self.encoder.forward(image)
    }

    pub fn quantize(&self, z_e: &Array4<T>) -> Result<(Array4<T>, Array3<usize>)> {
        quantize(z_e, &self.codebook)
    }

    pub fn decode(&self, z_q: &Array4<T>) -> Result<Array4<T>> {
        let (_, d, h, w) = z_q.dim();
        if d != self.config.embedding_dim {
            return Err(Error::Config(format!("expected {} latent channels, got {d}", self.config.embedding_dim)));
        }
        let f = self.config.downsample;
        self.check_spatial(h * f, w * f)?;
        self.decoder.forward(z_q)
    }

    pub fn forward(&self, image: &Array4<T>) -> Result<VqOutput<T>> {
        let z_e = self.encode(image)?;
        let (z_q, indices) = self.quantize(&z_e)?;
        let recon = self.decoder.forward(&z_q)?;
        Ok(VqOutput { z_e, z_q, indices, recon })
    }

    pub fn loss(&self, image: &Array4<T>) -> Result<VqLossBreakdown> {
        let out = self.forward(image)?;
        vq_loss(image, &out.recon, &out.z_e, &out.z_q, self.config.beta)
    }

    /// One optimization step on a batch; returns the loss before the update.
    pub fn train_step(&mut self, batch: &Array4<T>, opt: &mut Adam<T>) -> Result<VqLossBreakdown> {
        let (z_e, enc_tape) = self.encoder.forward_tape(batch)?;
        let (z_q, indices) = quantize(&z_e, &self.codebook)?;
        let (recon, dec_tape) = self.decoder.forward_tape(&z_q)?;
        let loss = vq_loss(batch, &recon, &z_e, &z_q, self.config.beta)?;
        let grads = vq_grads(batch, &recon, &z_e, &z_q, &indices, &self.codebook, self.config.beta)?;
        let (d_zq, dec_grads) = self.decoder.backward(&dec_tape, &grads.recon)?;
        // straight-through: the decoder-input gradient is copied onto z_e
        let d_ze = d_zq + &grads.commit_ze;
        let (_, enc_grads) = self.encoder.backward(&enc_tape, &d_ze)?;
        let mut all: Vec<ArrayD<T>> = enc_grads;
        all.push(grads.codebook.into_dyn());
        all.extend(dec_grads);
        opt.update(self.params_mut(), &all);
        Ok(loss)
    }

    /// Encoder, codebook, decoder parameters in archive order.
    pub fn params_mut(&mut self) -> Vec<ndarray::ArrayViewMutD<'_, T>> {
        let mut p = self.encoder.params_mut();
        p.push(self.codebook.embeddings_mut().view_mut().into_dyn());
        p.extend(self.decoder.params_mut());
        p
    }

    pub fn to_archive(&self) -> WeightArchive {
        let mut a = WeightArchive::new();
        a.meta = serde_json::json!({ "model": "vqvae", "vq": self.config });
        for (name, p) in self.encoder.params("encoder.") {
            a.insert(&name, p);
        }
        a.insert("codebook", self.codebook.embeddings().view().into_dyn());
        for (name, p) in self.decoder.params("decoder.") {
            a.insert(&name, p);
        }
        a
    }

    pub fn from_archive(archive: &WeightArchive) -> Result<Self> {
        let config: VqVaeConfig = serde_json::from_value(archive.meta["vq"].clone())
            .map_err(|e| Error::format("<weights>", format!("vq config: {e}")))?;
        let mut model = VqVae::<T>::init(&config, &mut seeded(0))?;
        model.encoder.load_params("encoder.", |n, s| archive.require(n, s))?;
        let cb = archive.require::<T>("codebook", &[config.embeddings, config.embedding_dim])?;
        model.codebook = Codebook::new(cb.into_dimensionality().expect("2-d"))?;
        model.decoder.load_params("decoder.", |n, s| archive.require(n, s))?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Optional hard cap on optimizer steps.
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Anneal the learning rate to zero along a half cosine over the run.
    #[serde(default)]
    pub cosine_decay: bool,
}

impl PhaseConfig {
    /// Learning rate at optimizer step `step` of a run with `total` steps.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if !self.cosine_decay || total == 0 {
            return self.lr;
        }
        let t = (step as f64 / total as f64).min(1.0);
        0.5 * self.lr * (1.0 + (std::f64::consts::PI * t).cos())
    }

    /// Steps the run will take over `n` samples.
    pub fn total_steps(&self, n: usize) -> usize {
        let per_epoch = n.div_ceil(self.batch.max(1));
        let full = self.epochs * per_epoch;
        self.max_steps.map_or(full, |m| m.min(full))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub loss: VqLossBreakdown,
}

/// Stack CHW images into an NCHW batch.
pub fn stack<T: Scalar>(images: &[&Array3<T>]) -> Array4<T> {
    let views: Vec<_> = images.iter().map(|a| a.view()).collect();
    ndarray::stack(Axis(0), &views).expect("images share a shape")
}

/// Phase one: fit encoder, codebook and decoder on every image, labelled or not.
///
/// `images` are CHW. Data order is drawn from `seed` only.
pub fn train_vqvae<T: Scalar>(
    images: &[Array3<T>],
    config: &VqVaeConfig,
    phase: &PhaseConfig,
    seed: u64,
) -> Result<(VqVae<T>, Vec<EpochLog>)> {
    if images.is_empty() {
        return Err(Error::Config("phase-one training needs at least one image".into()));
    }
    if phase.batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut rng = seeded(seed);
    let mut model = VqVae::init(config, &mut rng)?;
    let (_, h, w) = images[0].dim();
    model.check_spatial(h, w)?;
    let mut opt = Adam::new(T::of(phase.lr));
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut log = Vec::with_capacity(phase.epochs);
    let mut step = 0usize;
    let total = phase.total_steps(images.len());
    'epochs: for epoch in 0..phase.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 3];
        let mut batches = 0usize;
        for chunk in order.chunks(phase.batch) {
            if phase.max_steps.is_some_and(|m| step >= m) {
                break;
            }
            let batch = stack(&chunk.iter().map(|&i| &images[i]).collect::<Vec<_>>());
            opt.lr = T::of(phase.lr_at(step, total));
            let l = model.train_step(&batch, &mut opt)?;
            if !l.total.is_finite() {
                return Err(Error::Diverged { epoch, step, value: l.total });
            }
            sums[0] += l.recon_term;
            sums[1] += l.dict_term;
            sums[2] += l.commit_term;
            batches += 1;
            step += 1;
        }
        if batches > 0 {
            let b = batches as f64;
            let loss = VqLossBreakdown::new(sums[0] / b, sums[1] / b, sums[2] / b, config.beta);
            info!("vq epoch {epoch}: recon {:.5} dict {:.5} commit {:.5}", loss.recon_term, loss.dict_term, loss.commit_term);
            log.push(EpochLog { epoch, steps: step, loss });
        }
        if phase.max_steps.is_some_and(|m| step >= m) {
            break 'epochs;
        }
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VqVaeConfig {
        VqVaeConfig::standard(3, 8, 16, 4)
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let p = PhaseConfig { epochs: 10, batch: 4, lr: 0.01, max_steps: Some(20), cosine_decay: true };
        assert_eq!(p.total_steps(16), 20);
        assert_eq!(p.total_steps(6), 20);
        assert_eq!(p.lr_at(0, 20), 0.01);
        assert!((p.lr_at(10, 20) - 0.005).abs() < 1e-15);
        assert!(p.lr_at(20, 20).abs() < 1e-15);
        let flat = PhaseConfig { cosine_decay: false, ..p };
        assert_eq!(flat.lr_at(15, 20), 0.01);
    }

    #[test]
    fn encode_decode_shapes() {
        let cfg = VqVaeConfig::standard(3, 16, 128, 64);
        let m = VqVae::<f32>::init(&cfg, &mut seeded(0)).unwrap();
        let x = Array4::zeros((1, 3, 64, 64));
        let z = m.encode(&x).unwrap();
        assert_eq!(z.dim(), (1, 64, 16, 16));
        assert!(z.iter().all(|v| v.is_finite()));
        assert_eq!(m.decode(&z).unwrap().dim(), (1, 3, 64, 64));
        assert!(matches!(m.encode(&Array4::zeros((1, 3, 62, 64))), Err(Error::Config(_))));
        assert!(m.decode(&Array4::zeros((1, 64, 5, 4))).unwrap().dim() == (1, 3, 20, 16));
    }

    #[test]
    fn deterministic_forward() {
        let m = VqVae::<f32>::init(&small(), &mut seeded(5)).unwrap();
        let x = Array4::from_shape_fn((2, 3, 16, 16), |(a, b, c, d)| ((a + 2 * b + 3 * c + 5 * d) % 7) as f32 / 7.0);
        let a = m.forward(&x).unwrap();
        let b = m.forward(&x).unwrap();
        assert_eq!(a.z_e, b.z_e);
        assert_eq!(a.recon, b.recon);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let imgs = vec![Array3::<f32>::zeros((3, 16, 16))];
        let phase = PhaseConfig { epochs: 0, batch: 1, lr: 1e-3, max_steps: None, cosine_decay: false };
        let (m, log) = train_vqvae(&imgs, &small(), &phase, 9).unwrap();
        assert!(log.is_empty());
        assert_eq!(m, VqVae::init(&small(), &mut seeded(9)).unwrap());
    }

    #[test]
    fn straight_through_gradient() {
        // gradient of the reconstruction term reaching z_e equals the
        // decoder-input gradient at z_q
        let mut rng = seeded(2);
        let m = VqVae::<f64>::init(&small(), &mut rng).unwrap();
        let x = Array4::from_shape_simple_fn((1, 3, 16, 16), || rng.random_range(0.0..1.0));
        let z_e = m.encode(&x).unwrap();
        let (z_q, _) = m.quantize(&z_e).unwrap();
        let (recon, tape) = m.decoder.forward_tape(&z_q).unwrap();
        let g = recon.mapv(|v| v) - &x;
        let g = g * (2.0 / x.len() as f64);
        let (d_zq, _) = m.decoder.backward(&tape, &g).unwrap();
        // explicit z_e + sg[z_q - z_e]: perturb z_e with the offset held fixed
        let offset = &z_q - &z_e;
        let recon_of = |ze: &Array4<f64>| {
            let zq_st = ze + &offset;
            super::super::loss::mse(&x, &m.decoder.forward(&zq_st).unwrap()).unwrap()
        };
        let h = 1e-6;
        for flat in [0, 7, z_e.len() / 2, z_e.len() - 1] {
            let mut p = z_e.clone();
            let mut q = z_e.clone();
            p.as_slice_mut().unwrap()[flat] += h;
            q.as_slice_mut().unwrap()[flat] -= h;
            let fd = (recon_of(&p) - recon_of(&q)) / (2.0 * h);
            let an = d_zq.as_slice().unwrap()[flat];
            assert!((fd - an).abs() <= 1e-5 * fd.abs().max(1e-4), "{fd} vs {an}");
        }
    }

    #[test]
    fn codebook_gets_only_dictionary_gradient() {
        // recon and commitment terms never touch the codebook: with z_e on a
        // code, one step leaves every codebook row unchanged
        let mut rng = seeded(4);
        let mut m = VqVae::<f64>::init(&small(), &mut rng).unwrap();
        let x = Array4::from_shape_simple_fn((2, 3, 16, 16), || rng.random_range(0.0..1.0));
        let out = m.forward(&x).unwrap();
        let g = vq_grads(&x, &out.recon, &out.z_e, &out.z_q, &out.indices, &m.codebook, 0.25).unwrap();
        let used: std::collections::BTreeSet<usize> = out.indices.iter().copied().collect();
        for (k, row) in g.codebook.outer_iter().enumerate() {
            assert_eq!(row.iter().any(|v| *v != 0.0), used.contains(&k), "row {k}");
        }
        let before = m.codebook.clone();
        let mut opt = Adam::new(1e-2);
        m.train_step(&x, &mut opt).unwrap();
        for (k, (a, b)) in before.embeddings().outer_iter().zip(m.codebook.embeddings().outer_iter()).enumerate() {
            assert_eq!(a == b, !used.contains(&k), "row {k}");
        }
    }

    #[test]
    fn archive_round_trip() {
        let m = VqVae::<f32>::init(&small(), &mut seeded(1)).unwrap();
        let a = m.to_archive();
        let back = VqVae::<f32>::from_archive(&WeightArchive::from_bytes(&a.to_bytes(), std::path::Path::new("m")).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
