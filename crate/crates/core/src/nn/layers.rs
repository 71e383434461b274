//! Differentiable layers over NCHW tensors.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array4, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use super::im2col::{conv_out, conv_transpose_out, PatchGeom};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// He-style uniform initialization, bound sqrt(6 / fan_in); biases start at zero.
fn fan_in_uniform<T: Scalar, R: Rng>(shape: [usize; 4], fan_in: usize, rng: &mut R) -> Array4<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Array4::from_shape_simple_fn(shape, || T::of(rng.random_range(-bound..bound)))
}

fn view2<T>(data: &[T], rows: usize, cols: usize) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((rows, cols), data).expect("contiguous buffer")
}

fn view2_mut<T>(data: &mut [T], rows: usize, cols: usize) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("contiguous buffer")
}

/// 2-D convolution; weight is `out × in × k × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Array4<T>,
    pub bias: Array1<T>,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn init<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Self {
        Conv2d {
            weight: fan_in_uniform([out_ch, in_ch, kernel, kernel], in_ch * kernel * kernel, rng),
            bias: Array1::zeros(out_ch),
            stride,
            pad,
            dilation,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim().1
    }
    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }
    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let k = self.kernel();
        Some((
            conv_out(h, k, self.stride, self.pad, self.dilation)?,
            conv_out(w, k, self.stride, self.pad, self.dilation)?,
        ))
    }

    fn geom(&self, h: usize, w: usize) -> Result<PatchGeom> {
        let (out_h, out_w) = self
            .out_hw(h, w)
            .ok_or_else(|| Error::Config(format!("convolution window does not fit a {h}x{w} input")))?;
        Ok(PatchGeom {
            channels: self.in_channels(),
            height: h,
            width: w,
            kernel: self.kernel(),
            stride: self.stride,
            pad: self.pad,
            dilation: self.dilation,
            out_h,
            out_w,
        })
    }

    pub fn forward(&self, x: &Array4<T>) -> Result<Array4<T>> {
        let (n, c, h, w) = x.dim();
        if c != self.in_channels() {
            return Err(Error::Config(format!("conv expects {} channels, got {c}", self.in_channels())));
        }
        let g = self.geom(h, w)?;
        let oc = self.out_channels();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let wmat = self.weight.as_standard_layout();
        let wmat = view2(wmat.as_slice().unwrap(), oc, g.rows());
        let mut out = Array4::zeros((n, oc, g.out_h, g.out_w));
        let mut cols = vec![T::zero(); g.rows() * g.cols()];
        let plane = c * h * w;
        let out_plane = oc * g.cols();
        {
            let os = out.as_slice_mut().unwrap();
            for s in 0..n {
                g.im2col(&xs[s * plane..(s + 1) * plane], &mut cols);
                let mut o = view2_mut(&mut os[s * out_plane..(s + 1) * out_plane], oc, g.cols());
                for (mut row, &b) in o.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
                    row.fill(b);
                }
                general_mat_mul(T::one(), &wmat, &view2(&cols, g.rows(), g.cols()), T::one(), &mut o);
            }
        }
        Ok(out)
    }

    /// Returns the input gradient; accumulates into `dw`, `db`.
    pub fn backward(
        &self,
        x: &Array4<T>,
        gout: &Array4<T>,
        dw: &mut Array4<T>,
        db: &mut Array1<T>,
    ) -> Result<Array4<T>> {
        let (n, c, h, w) = x.dim();
        let g = self.geom(h, w)?;
        let oc = self.out_channels();
        let x = x.as_standard_layout();
        let xs = x.as_slice().unwrap();
        let gout = gout.as_standard_layout();
        let gs = gout.as_slice().unwrap();
        let wmat = self.weight.as_standard_layout();
        let wmat = view2(wmat.as_slice().unwrap(), oc, g.rows());
        let mut dx = Array4::zeros((n, c, h, w));
        let dxs = dx.as_slice_mut().unwrap();
        let dws = dw.as_slice_mut().expect("gradient buffer is contiguous");
        let mut dwm = view2_mut(dws, oc, g.rows());
        let mut cols = vec![T::zero(); g.rows() * g.cols()];
        let mut dcols = vec![T::zero(); g.rows() * g.cols()];
        let plane = c * h * w;
        let out_plane = oc * g.cols();
        for s in 0..n {
            let go = view2(&gs[s * out_plane..(s + 1) * out_plane], oc, g.cols());
            for (b, row) in db.iter_mut().zip(go.axis_iter(Axis(0))) {
                *b += row.sum();
            }
            g.im2col(&xs[s * plane..(s + 1) * plane], &mut cols);
            general_mat_mul(T::one(), &go, &view2(&cols, g.rows(), g.cols()).t(), T::one(), &mut dwm);
            let mut dc = view2_mut(&mut dcols, g.rows(), g.cols());
            general_mat_mul(T::one(), &wmat.t(), &go, T::zero(), &mut dc);
            g.col2im(&dcols, &mut dxs[s * plane..(s + 1) * plane]);
        }
        Ok(dx)
    }
}

/// Transposed convolution; weight is `in × out × k × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub weight: Array4<T>,
    pub bias: Array1<T>,
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn init<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        output_pad: usize,
        rng: &mut R,
    ) -> Self {
        // each output pixel sees about in·k²/stride² taps
        let fan_in = (in_ch * kernel * kernel / (stride * stride)).max(1);
        ConvTranspose2d {
            weight: fan_in_uniform([in_ch, out_ch, kernel, kernel], fan_in, rng),
            bias: Array1::zeros(out_ch),
            stride,
            pad,
            output_pad,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim().0
    }
    pub fn out_channels(&self) -> usize {
        self.weight.dim().1
    }
    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let k = self.kernel();
        Some((
            conv_transpose_out(h, k, self.stride, self.pad, 1, self.output_pad)?,
            conv_transpose_out(w, k, self.stride, self.pad, 1, self.output_pad)?,
        ))
    }

    /// Patch geometry of the adjoint convolution: output image → input grid.
    fn geom(&self, h: usize, w: usize) -> Result<PatchGeom> {
        let (oh, ow) = self
            .out_hw(h, w)
            .ok_or_else(|| Error::Config(format!("transposed convolution undefined for {h}x{w} input")))?;
        Ok(PatchGeom {
            channels: self.out_channels(),
            height: oh,
            width: ow,
            kernel: self.kernel(),
            stride: self.stride,
            pad: self.pad,
            dilation: 1,
            out_h: h,
            out_w: w,
        })
    }

    pub fn forward(&self, x: &Array4<T>) -> Result<Array4<T>> {
        let (n, c, h, w) = x.dim();
        if c != self.in_channels() {
            return Err(Error::Config(format!(
                "transposed conv expects {} channels, got {c}",
                self.in_channels()
            )));
        }
        let g = self.geom(h, w)?;
        let oc = self.out_channels();
        let x = x.as_standard_layout();
        let xs = x.as_slice().unwrap();
        let wm = self.weight.as_standard_layout();
        let wmat = view2(wm.as_slice().unwrap(), c, g.rows());
        let mut out = Array4::zeros((n, oc, g.height, g.width));
        let mut cols = vec![T::zero(); g.rows() * g.cols()];
        let plane = c * h * w;
        let out_plane = oc * g.height * g.width;
        {
            let os = out.as_slice_mut().unwrap();
            for s in 0..n {
                let xin = view2(&xs[s * plane..(s + 1) * plane], c, h * w);
                general_mat_mul(T::one(), &wmat.t(), &xin, T::zero(), &mut view2_mut(&mut cols, g.rows(), g.cols()));
                let o = &mut os[s * out_plane..(s + 1) * out_plane];
                for (ch, &b) in self.bias.iter().enumerate() {
                    o[ch * g.height * g.width..(ch + 1) * g.height * g.width]
                        .iter_mut()
                        .for_each(|v| *v = b);
                }
                g.col2im(&cols, o);
            }
        }
        Ok(out)
    }

    pub fn backward(
        &self,
        x: &Array4<T>,
        gout: &Array4<T>,
        dw: &mut Array4<T>,
        db: &mut Array1<T>,
    ) -> Result<Array4<T>> {
        let (n, c, h, w) = x.dim();
        let g = self.geom(h, w)?;
        let oc = self.out_channels();
        let x = x.as_standard_layout();
        let xs = x.as_slice().unwrap();
        let gout = gout.as_standard_layout();
        let gs = gout.as_slice().unwrap();
        let wm = self.weight.as_standard_layout();
        let wmat = view2(wm.as_slice().unwrap(), c, g.rows());
        let mut dwm = view2_mut(dw.as_slice_mut().unwrap(), c, g.rows());
        let mut dx = Array4::zeros((n, c, h, w));
        let dxs = dx.as_slice_mut().unwrap();
        let mut gcols = vec![T::zero(); g.rows() * g.cols()];
        let plane = c * h * w;
        let out_hw = g.height * g.width;
        let out_plane = oc * out_hw;
        for s in 0..n {
            let go = &gs[s * out_plane..(s + 1) * out_plane];
            for (ch, b) in db.iter_mut().enumerate() {
                *b += go[ch * out_hw..(ch + 1) * out_hw].iter().copied().fold(T::zero(), |a, v| a + v);
            }
            g.im2col(go, &mut gcols);
            let gc = view2(&gcols, g.rows(), g.cols());
            let xin = view2(&xs[s * plane..(s + 1) * plane], c, h * w);
            general_mat_mul(T::one(), &xin, &gc.t(), T::one(), &mut dwm);
            general_mat_mul(T::one(), &wmat, &gc, T::zero(), &mut view2_mut(&mut dxs[s * plane..(s + 1) * plane], c, h * w));
        }
        Ok(dx)
    }
}

/// Non-overlapping max pooling; trailing rows/columns are dropped.
pub fn maxpool_forward<T: Scalar>(x: &Array4<T>, size: usize) -> (Array4<T>, Vec<usize>) {
    let (n, c, h, w) = x.dim();
    let (oh, ow) = (h / size, w / size);
    let mut out = Array4::zeros((n, c, oh, ow));
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for s in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut at = 0;
                    for dy in 0..size {
                        for dx in 0..size {
                            let (iy, ix) = (oy * size + dy, ox * size + dx);
                            let v = x[[s, ch, iy, ix]];
                            if v > best {
                                best = v;
                                at = iy * w + ix;
                            }
                        }
                    }
                    out[[s, ch, oy, ox]] = best;
                    arg.push(at);
                }
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward<T: Scalar>(in_dim: (usize, usize, usize, usize), arg: &[usize], gout: &Array4<T>) -> Array4<T> {
    let (n, c, _, w) = in_dim;
    let mut dx = Array4::zeros(in_dim);
    let mut k = 0;
    for s in 0..n {
        for ch in 0..c {
            for &g in gout.index_axis(Axis(0), s).index_axis(Axis(0), ch).iter() {
                let at = arg[k];
                dx[[s, ch, at / w, at % w]] += g;
                k += 1;
            }
        }
    }
    dx
}

/// Source index pairs and weights for align-corners bilinear resampling.
fn bilinear_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|o| {
            let src = if n_out > 1 {
                o as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
            } else {
                0.0
            };
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear upsampling by an integer factor with aligned corners.
pub fn upsample_forward<T: Scalar>(x: &Array4<T>, scale: usize) -> Array4<T> {
    let (n, c, h, w) = x.dim();
    let (oh, ow) = (h * scale, w * scale);
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut out = Array4::zeros((n, c, oh, ow));
    for s in 0..n {
        for ch in 0..c {
            let src = x.index_axis(Axis(0), s);
            let src = src.index_axis(Axis(0), ch);
            let mut dst = out.index_axis_mut(Axis(0), s);
            let mut dst = dst.index_axis_mut(Axis(0), ch);
            for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                let wy = T::of(wy);
                for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                    let wx = T::of(wx);
                    let top = src[[y0, x0]] * (T::one() - wx) + src[[y0, x1]] * wx;
                    let bot = src[[y1, x0]] * (T::one() - wx) + src[[y1, x1]] * wx;
                    dst[[oy, ox]] = top * (T::one() - wy) + bot * wy;
                }
            }
        }
    }
    out
}

pub fn upsample_backward<T: Scalar>(in_dim: (usize, usize, usize, usize), scale: usize, gout: &Array4<T>) -> Array4<T> {
    let (n, c, h, w) = in_dim;
    let ty = bilinear_taps(h, h * scale);
    let tx = bilinear_taps(w, w * scale);
    let mut dx = Array4::zeros(in_dim);
    for s in 0..n {
        for ch in 0..c {
            for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                let wy = T::of(wy);
                for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                    let wx = T::of(wx);
                    let g = gout[[s, ch, oy, ox]];
                    dx[[s, ch, y0, x0]] += g * (T::one() - wy) * (T::one() - wx);
                    dx[[s, ch, y0, x1]] += g * (T::one() - wy) * wx;
                    dx[[s, ch, y1, x0]] += g * wy * (T::one() - wx);
                    dx[[s, ch, y1, x1]] += g * wy * wx;
                }
            }
        }
    }
    dx
}
