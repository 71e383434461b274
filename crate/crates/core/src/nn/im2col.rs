//! Patch extraction for convolution-as-matrix-multiply.

use crate::scalar::Scalar;

/// Geometry of a (possibly strided, padded, dilated) convolution window
/// sliding over a `channels × height × width` image to produce an
/// `out_h × out_w` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// Output extent of a convolution, or `None` when the window does not fit.
pub fn conv_out(input: usize, kernel: usize, stride: usize, pad: usize, dilation: usize) -> Option<usize> {
    let span = dilation * (kernel - 1) + 1;
    let padded = input + 2 * pad;
    if padded < span || stride == 0 {
        None
    } else {
        Some((padded - span) / stride + 1)
    }
}

/// Output extent of a transposed convolution.
pub fn conv_transpose_out(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    dilation: usize,
    output_pad: usize,
) -> Option<usize> {
    let full = (input.checked_sub(1)?) * stride + dilation * (kernel - 1) + output_pad + 1;
    full.checked_sub(2 * pad).filter(|&n| n > 0)
}

impl PatchGeom {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source coordinate of window tap `k` at grid position `o`, if inside.
    #[inline]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let p = (o * self.stride + k * self.dilation) as isize - self.pad as isize;
        if p >= 0 && (p as usize) < extent {
            Some(p as usize)
        } else {
            None
        }
    }

    /// Unfold `image` (C·H·W, row-major) into `cols` (rows × cols, row-major).
    pub fn im2col<T: Scalar>(&self, image: &[T], cols: &mut [T]) {
        debug_assert_eq!(image.len(), self.channels * self.height * self.width);
        debug_assert_eq!(cols.len(), self.rows() * self.cols());
        let ncol = self.cols();
        let mut row = 0;
        for c in 0..self.channels {
            let plane = &image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..self.kernel {
                for kj in 0..self.kernel {
                    let dst = &mut cols[row * ncol..(row + 1) * ncol];
                    for oy in 0..self.out_h {
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        match self.src(oy, ki, self.height) {
                            None => line.iter_mut().for_each(|x| *x = T::zero()),
                            Some(iy) => {
                                let src_row = &plane[iy * self.width..(iy + 1) * self.width];
                                for (ox, x) in line.iter_mut().enumerate() {
                                    *x = match self.src(ox, kj, self.width) {
                                        Some(ix) => src_row[ix],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Fold `cols` back, accumulating overlapping taps into `image`.
    pub fn col2im<T: Scalar>(&self, cols: &[T], image: &mut [T]) {
        debug_assert_eq!(image.len(), self.channels * self.height * self.width);
        let ncol = self.cols();
        let mut row = 0;
        for c in 0..self.channels {
            let plane = &mut image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..self.kernel {
                for kj in 0..self.kernel {
                    let src = &cols[row * ncol..(row + 1) * ncol];
                    for oy in 0..self.out_h {
                        let Some(iy) = self.src(oy, ki, self.height) else {
                            continue;
                        };
                        let line = &src[oy * self.out_w..(oy + 1) * self.out_w];
                        let dst_row = &mut plane[iy * self.width..(iy + 1) * self.width];
                        for (ox, &x) in line.iter().enumerate() {
                            if let Some(ix) = self.src(ox, kj, self.width) {
                                dst_row[ix] += x;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}
