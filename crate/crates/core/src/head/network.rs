use std::path::Path;

use ndarray::{s, Array2, Array4, ArrayD};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GraspMaps;
use crate::nn::{seeded, sigmoid, LayerSpec, Sequential, Tape, WeightArchive};
use crate::scalar::Scalar;

/// Width normalization for networks trained on `side`-pixel images: half
/// the side, so 150 px for 300-pixel crops and 32 px for 64-pixel scenes.
pub fn width_scale_for(side: usize) -> f64 {
    0.5 * side as f64
}

fn default_width_scale() -> f64 {
    width_scale_for(300)
}

pub const GGCNN_CFG: &str = include_str!("../../../../configs/ggcnn.cfg");
pub const GGCNN2_CFG: &str = include_str!("../../../../configs/ggcnn2.cfg");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadSpec {
    pub kernel: usize,
    #[serde(default)]
    pub padding: usize,
    /// The W map is regressed as `W / width_scale`.
    #[serde(default = "default_width_scale")]
    pub width_scale: f64,
}

/// Layer table of a grasp network. The four output maps (Q, cos 2φ, sin 2φ,
/// W) come from one convolution with four filters appended after `layers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub name: String,
    pub input_channels: usize,
    /// Square input size at which shape preservation is verified.
    pub probe_size: usize,
    pub layers: Vec<LayerSpec>,
    pub heads: HeadSpec,
}

impl NetworkConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("network config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// The shipped GGCNN table (67,604 parameters).
    pub fn ggcnn() -> Self {
        Self::parse(GGCNN_CFG).expect("shipped ggcnn config parses")
    }

    /// The shipped GGCNN2 table (70,548 parameters).
    pub fn ggcnn2() -> Self {
        Self::parse(GGCNN2_CFG).expect("shipped ggcnn2 config parses")
    }

    pub fn with_input_channels(mut self, c: usize) -> Self {
        self.input_channels = c;
        self
    }

    fn all_layers(&self) -> Vec<LayerSpec> {
        let mut layers = self.layers.clone();
        layers.push(LayerSpec::Conv {
            filters: 4,
            kernel: self.heads.kernel,
            stride: 1,
            padding: self.heads.padding,
        });
        layers
    }
}

/// A built grasp network: body layers followed by the 4-channel output conv.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspNet<T> {
    pub config: NetworkConfig,
    pub body: Sequential<T>,
}

/// Build a grasp network, verifying it maps a `probe × probe` input to
/// `probe × probe` maps.
pub fn build_ggcnn2<T: Scalar, R: Rng>(config: &NetworkConfig, rng: &mut R) -> Result<GraspNet<T>> {
    let (body, out_ch) = Sequential::build(&config.all_layers(), config.input_channels, rng)?;
    debug_assert_eq!(out_ch, 4);
    let net = GraspNet {
        config: config.clone(),
        body,
    };
    net.check_shape(config.probe_size)?;
    Ok(net)
}

impl<T: Scalar> GraspNet<T> {
    pub fn check_shape(&self, size: usize) -> Result<()> {
        let input = (self.config.input_channels, size, size);
        let trace = self.body.shape_trace(input)?;
        let out = trace.last().map(|t| t.1).unwrap_or(input);
        if out != (4, size, size) {
            let lines: Vec<String> = std::iter::once(format!("input {input:?}"))
                .chain(trace.iter().map(|(n, s)| format!("{n} -> {s:?}")))
                .collect();
            return Err(Error::Config(format!(
                "network `{}` is not shape-preserving at {size}x{size}:\n  {}",
                self.config.name,
                lines.join("\n  ")
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.body.param_count()
    }

    /// Raw 4-channel output (pre-sigmoid quality, cos, sin, width / width_scale).
    pub fn forward_raw(&self, x: &Array4<T>) -> Result<Array4<T>> {
        let (_, c, h, w) = x.dim();
        if c != self.config.input_channels {
            return Err(Error::Config(format!(
                "network `{}` expects {} input channels, got {c}",
                self.config.name, self.config.input_channels
            )));
        }
        let y = self.body.forward(x)?;
        if y.dim().2 != h || y.dim().3 != w {
            self.check_shape(h)?;
            return Err(Error::Config(format!("output {:?} does not match input {h}x{w}", y.dim())));
        }
        Ok(y)
    }

    pub fn forward_tape(&self, x: &Array4<T>) -> Result<(Array4<T>, Tape<T>)> {
        self.body.forward_tape(x)
    }

    pub fn backward(&self, tape: &Tape<T>, g: &Array4<T>) -> Result<(Array4<T>, Vec<ArrayD<T>>)> {
        self.body.backward(tape, g)
    }
}

impl<T: Scalar> GraspNet<T> {
    pub fn params_mut(&mut self) -> Vec<ndarray::ArrayViewMutD<'_, T>> {
        self.body.params_mut()
    }

    pub fn to_archive(&self) -> WeightArchive {
        let mut a = WeightArchive::new();
        a.meta = serde_json::json!({ "model": self.config.name, "head": self.config });
        self.write_params(&mut a, "head.");
        a
    }

    pub(crate) fn write_params(&self, a: &mut WeightArchive, prefix: &str) {
        for (name, p) in self.body.params(prefix) {
            a.insert(&name, p);
        }
    }

    pub(crate) fn read_params(&mut self, a: &WeightArchive, prefix: &str) -> Result<()> {
        self.body.load_params(prefix, |n, s| a.require(n, s))
    }

    pub fn from_archive(a: &WeightArchive) -> Result<Self> {
        let config: NetworkConfig = serde_json::from_value(a.meta["head"].clone())
            .map_err(|e| Error::format("<weights>", format!("head config: {e}")))?;
        let mut net = build_ggcnn2(&config, &mut seeded(0))?;
        net.read_params(a, "head.")?;
        Ok(net)
    }
}

/// Turn raw network output into grasp maps, one per batch item.
pub fn maps_from_raw<T: Scalar>(raw: &Array4<T>, width_scale: f64) -> Vec<GraspMaps<T>> {
    let scale = T::of(width_scale);
    (0..raw.dim().0)
        .map(|n| {
            let ch = |c: usize| -> Array2<T> { raw.slice(s![n, c, .., ..]).to_owned() };
            GraspMaps {
                quality: ch(0).mapv(sigmoid),
                cos2: ch(1),
                sin2: ch(2),
                width: ch(3).mapv(|v| v * scale),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_param_counts() {
        let mut rng = seeded(0);
        let g2 = build_ggcnn2::<f32, _>(&NetworkConfig::ggcnn2(), &mut rng).unwrap();
        assert_eq!(g2.param_count(), 70_548);
        let g1 = build_ggcnn2::<f32, _>(&NetworkConfig::ggcnn(), &mut rng).unwrap();
        assert_eq!(g1.param_count(), 67_604);
    }

    #[test]
    fn ggcnn2_preserves_shape() {
        let mut rng = seeded(1);
        let net = build_ggcnn2::<f32, _>(&NetworkConfig::ggcnn2(), &mut rng).unwrap();
        for size in [32, 64, 100, 300] {
            net.check_shape(size).unwrap();
        }
        let y = net.forward_raw(&Array4::zeros((1, 3, 32, 48))).unwrap();
        assert_eq!(y.dim(), (1, 4, 32, 48));
    }

    #[test]
    fn non_preserving_config_reports_trace() {
        let mut cfg = NetworkConfig::ggcnn2();
        cfg.layers.pop();
        cfg.layers.pop();
        cfg.layers.pop(); // drop the last upsample stage
        let err = build_ggcnn2::<f32, _>(&cfg, &mut seeded(0)).unwrap_err().to_string();
        assert!(err.contains("not shape-preserving"), "{err}");
        assert!(err.contains("upsample"), "{err}");
    }

    #[test]
    fn single_conv_head_counts() {
        let cfg = NetworkConfig {
            name: "tiny".into(),
            input_channels: 3,
            probe_size: 8,
            layers: vec![],
            heads: HeadSpec { kernel: 1, padding: 0, width_scale: 150.0 },
        };
        let net = build_ggcnn2::<f64, _>(&cfg, &mut seeded(0)).unwrap();
        assert_eq!(net.param_count(), 16);
    }

    #[test]
    fn raw_to_maps() {
        let mut raw = Array4::<f64>::zeros((1, 4, 2, 2));
        raw[[0, 0, 0, 0]] = 100.0;
        raw[[0, 3, 1, 1]] = 0.2;
        let m = &maps_from_raw(&raw, 150.0)[0];
        assert!((m.quality[[0, 0]] - 1.0).abs() < 1e-12);
        assert_eq!(m.quality[[1, 0]], 0.5);
        assert!((m.width[[1, 1]] - 30.0).abs() < 1e-12);
    }
}
