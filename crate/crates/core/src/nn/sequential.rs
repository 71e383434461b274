use ndarray::{Array4, ArrayD, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    maxpool_backward, maxpool_forward, upsample_backward, upsample_forward, Conv2d, ConvTranspose2d,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn one() -> usize {
    1
}

/// One entry of a layer table, as written in network config files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    DilatedConv {
        filters: usize,
        kernel: usize,
        dilation: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    TransposedConv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        #[serde(default)]
        output_padding: usize,
    },
    Maxpool {
        size: usize,
    },
    /// Bilinear, corners aligned.
    Upsample {
        scale: usize,
    },
    Relu,
    /// `x + conv1x1(relu(conv_k(relu(x))))`, channel-preserving.
    Residual {
        hidden: usize,
        kernel: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    ConvTranspose(ConvTranspose2d<T>),
    MaxPool(usize),
    Upsample(usize),
    Relu,
    Residual(Sequential<T>),
}

/// A feed-forward stack of layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

enum Record<T> {
    Input(Array4<T>),
    Pool((usize, usize, usize, usize), Vec<usize>),
    Dim((usize, usize, usize, usize)),
    Nested(Tape<T>),
}

/// Activations saved by a forward pass for the matching backward pass.
pub struct Tape<T> {
    records: Vec<Record<T>>,
}

/// Shape of one feature map, channels × height × width.
pub type Chw = (usize, usize, usize);

impl<T: Scalar> Sequential<T> {
    /// Instantiate a layer table. Returns the network and its output channel count.
    pub fn build<R: Rng>(specs: &[LayerSpec], in_channels: usize, rng: &mut R) -> Result<(Self, usize)> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut ch = in_channels;
        for (i, spec) in specs.iter().enumerate() {
            let bad = |what: &str| Error::Config(format!("layer {i} ({spec:?}): {what}"));
            let layer = match *spec {
                LayerSpec::Conv { filters, kernel, stride, padding } => {
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return Err(bad("filters, kernel and stride must be positive"));
                    }
                    let l = Conv2d::init(ch, filters, kernel, stride, padding, 1, rng);
                    ch = filters;
                    Layer::Conv(l)
                }
                LayerSpec::DilatedConv { filters, kernel, dilation, stride, padding } => {
                    if filters == 0 || kernel == 0 || stride == 0 || dilation == 0 {
                        return Err(bad("filters, kernel, stride and dilation must be positive"));
                    }
                    let l = Conv2d::init(ch, filters, kernel, stride, padding, dilation, rng);
                    ch = filters;
                    Layer::Conv(l)
                }
                LayerSpec::TransposedConv { filters, kernel, stride, padding, output_padding } => {
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return Err(bad("filters, kernel and stride must be positive"));
                    }
                    let l = ConvTranspose2d::init(ch, filters, kernel, stride, padding, output_padding, rng);
                    ch = filters;
                    Layer::ConvTranspose(l)
                }
                LayerSpec::Maxpool { size } => {
                    if size == 0 {
                        return Err(bad("pool size must be positive"));
                    }
                    Layer::MaxPool(size)
                }
                LayerSpec::Upsample { scale } => {
                    if scale == 0 {
                        return Err(bad("scale must be positive"));
                    }
                    Layer::Upsample(scale)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Residual { hidden, kernel } => {
                    if hidden == 0 || kernel % 2 == 0 {
                        return Err(bad("residual blocks need hidden > 0 and an odd kernel"));
                    }
                    let inner = Sequential {
                        layers: vec![
                            Layer::Relu,
                            Layer::Conv(Conv2d::init(ch, hidden, kernel, 1, kernel / 2, 1, rng)),
                            Layer::Relu,
                            Layer::Conv(Conv2d::init(hidden, ch, 1, 1, 0, 1, rng)),
                        ],
                    };
                    Layer::Residual(inner)
                }
            };
            layers.push(layer);
        }
        Ok((Sequential { layers }, ch))
    }

    /// Per-layer output shapes for a given input, or an error naming the
    /// first layer that cannot accept its input.
    pub fn shape_trace(&self, input: Chw) -> Result<Vec<(String, Chw)>> {
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut cur = input;
        for (i, layer) in self.layers.iter().enumerate() {
            let (c, h, w) = cur;
            let fail = |name: &str| Error::Config(format!("layer {i} ({name}) cannot accept input {c}x{h}x{w}"));
            let (name, next) = match layer {
                Layer::Conv(l) => {
                    if l.in_channels() != c {
                        return Err(fail("conv"));
                    }
                    let (oh, ow) = l.out_hw(h, w).ok_or_else(|| fail("conv"))?;
                    let name = if l.dilation > 1 { "dilated-conv" } else { "conv" };
                    (format!("{name} {}x{} s{} d{}", l.kernel(), l.kernel(), l.stride, l.dilation), (l.out_channels(), oh, ow))
                }
                Layer::ConvTranspose(l) => {
                    if l.in_channels() != c {
                        return Err(fail("transposed-conv"));
                    }
                    let (oh, ow) = l.out_hw(h, w).ok_or_else(|| fail("transposed-conv"))?;
                    (format!("transposed-conv {}x{} s{}", l.kernel(), l.kernel(), l.stride), (l.out_channels(), oh, ow))
                }
                Layer::MaxPool(k) => {
                    if h < *k || w < *k {
                        return Err(fail("maxpool"));
                    }
                    (format!("maxpool {k}"), (c, h / k, w / k))
                }
                Layer::Upsample(k) => (format!("upsample x{k}"), (c, h * k, w * k)),
                Layer::Relu => ("relu".to_string(), cur),
                Layer::Residual(inner) => {
                    let t = inner.shape_trace(cur)?;
                    if t.last().map(|x| x.1) != Some(cur) {
                        return Err(fail("residual"));
                    }
                    ("residual".to_string(), cur)
                }
            };
            trace.push((name, next));
            cur = next;
        }
        Ok(trace)
    }

    pub fn forward(&self, x: &Array4<T>) -> Result<Array4<T>> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv(l) => l.forward(&cur)?,
                Layer::ConvTranspose(l) => l.forward(&cur)?,
                Layer::MaxPool(k) => maxpool_forward(&cur, *k).0,
                Layer::Upsample(k) => upsample_forward(&cur, *k),
                Layer::Relu => cur.mapv_into(|v| v.max(T::zero())),
                Layer::Residual(inner) => {
                    let r = inner.forward(&cur)?;
                    cur + r
                }
            };
        }
        Ok(cur)
    }

    /// Forward pass that keeps what the backward pass needs.
    pub fn forward_tape(&self, x: &Array4<T>) -> Result<(Array4<T>, Tape<T>)> {
        let mut records = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv(l) => {
                    let y = l.forward(&cur)?;
                    records.push(Record::Input(cur));
                    y
                }
                Layer::ConvTranspose(l) => {
                    let y = l.forward(&cur)?;
                    records.push(Record::Input(cur));
                    y
                }
                Layer::MaxPool(k) => {
                    let (y, arg) = maxpool_forward(&cur, *k);
                    records.push(Record::Pool(cur.dim(), arg));
                    y
                }
                Layer::Upsample(k) => {
                    records.push(Record::Dim(cur.dim()));
                    upsample_forward(&cur, *k)
                }
                Layer::Relu => {
                    let y = cur.mapv(|v| v.max(T::zero()));
                    records.push(Record::Input(cur));
                    y
                }
                Layer::Residual(inner) => {
                    let (r, tape) = inner.forward_tape(&cur)?;
                    records.push(Record::Nested(tape));
                    cur + r
                }
            };
        }
        Ok((cur, Tape { records }))
    }

    /// Backpropagate `gout`; returns the input gradient and parameter
    /// gradients in [`Sequential::params`] order.
    pub fn backward(&self, tape: &Tape<T>, gout: &Array4<T>) -> Result<(Array4<T>, Vec<ArrayD<T>>)> {
        if tape.records.len() != self.layers.len() {
            return Err(Error::State("tape does not belong to this network".into()));
        }
        let mut per_layer: Vec<Vec<ArrayD<T>>> = Vec::with_capacity(self.layers.len());
        let mut g = gout.clone();
        for (layer, rec) in self.layers.iter().zip(&tape.records).rev() {
            let mut grads = Vec::new();
            g = match (layer, rec) {
                (Layer::Conv(l), Record::Input(x)) => {
                    let mut dw = Array4::zeros(l.weight.dim());
                    let mut db = ndarray::Array1::zeros(l.bias.dim());
                    let dx = l.backward(x, &g, &mut dw, &mut db)?;
                    grads.push(dw.into_dyn());
                    grads.push(db.into_dyn());
                    dx
                }
                (Layer::ConvTranspose(l), Record::Input(x)) => {
                    let mut dw = Array4::zeros(l.weight.dim());
                    let mut db = ndarray::Array1::zeros(l.bias.dim());
                    let dx = l.backward(x, &g, &mut dw, &mut db)?;
                    grads.push(dw.into_dyn());
                    grads.push(db.into_dyn());
                    dx
                }
                (Layer::MaxPool(_), Record::Pool(dim, arg)) => maxpool_backward(*dim, arg, &g),
                (Layer::Upsample(k), Record::Dim(dim)) => upsample_backward(*dim, *k, &g),
                (Layer::Relu, Record::Input(x)) => {
                    ndarray::Zip::from(&mut g).and(x).for_each(|gv, &xv| {
                        if xv <= T::zero() {
                            *gv = T::zero();
                        }
                    });
                    g
                }
                (Layer::Residual(inner), Record::Nested(t)) => {
                    let (dx, inner_grads) = inner.backward(t, &g)?;
                    grads = inner_grads;
                    g + dx
                }
                _ => return Err(Error::State("tape record does not match layer".into())),
            };
            per_layer.push(grads);
        }
        per_layer.reverse();
        Ok((g, per_layer.into_iter().flatten().collect()))
    }

    /// Named parameter views, in a fixed order.
    pub fn params(&self, prefix: &str) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv(l) => {
                    out.push((format!("{prefix}{i}.weight"), l.weight.view().into_dyn()));
                    out.push((format!("{prefix}{i}.bias"), l.bias.view().into_dyn()));
                }
                Layer::ConvTranspose(l) => {
                    out.push((format!("{prefix}{i}.weight"), l.weight.view().into_dyn()));
                    out.push((format!("{prefix}{i}.bias"), l.bias.view().into_dyn()));
                }
                Layer::Residual(inner) => out.extend(inner.params(&format!("{prefix}{i}."))),
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out = Vec::new();
        for layer in self.layers.iter_mut() {
            match layer {
                Layer::Conv(l) => {
                    out.push(l.weight.view_mut().into_dyn());
                    out.push(l.bias.view_mut().into_dyn());
                }
                Layer::ConvTranspose(l) => {
                    out.push(l.weight.view_mut().into_dyn());
                    out.push(l.bias.view_mut().into_dyn());
                }
                Layer::Residual(inner) => out.extend(inner.params_mut()),
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params("").iter().map(|(_, p)| p.len()).sum()
    }

    /// Overwrite parameters from a name-matched source.
    pub fn load_params(&mut self, prefix: &str, mut lookup: impl FnMut(&str, &[usize]) -> Result<ArrayD<T>>) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = self
            .params(prefix)
            .into_iter()
            .map(|(n, p)| (n, p.shape().to_vec()))
            .collect();
        for ((name, shape), mut dst) in names.into_iter().zip(self.params_mut()) {
            let src = lookup(&name, &shape)?;
            if src.shape() != shape.as_slice() {
                return Err(Error::Config(format!("parameter {name}: expected shape {shape:?}, got {:?}", src.shape())));
            }
            dst.assign(&src);
        }
        Ok(())
    }
}
