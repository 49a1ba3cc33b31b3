//! im2col / col2im: lowering a 2-D convolution to a matrix multiply.
//!
//! Row `r` of the column matrix is the kernel offset `(channel, ki, kj)` in
//! row-major order, which is the same order a `[C_out, C_in, kh, kw]` weight
//! flattens to. Column `j` is output position `(oy, ox)`, `j = oy * out_w + ox`.

use super::Tensor;
use crate::error::{shape_err, Result};

/// Geometry of one lowered convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Patches {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// Output length along one axis, or an error if the window does not tile it exactly.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(shape_err!("kernel and stride must be positive"));
    }
    let span = input + 2 * pad;
    if span < kernel {
        return Err(shape_err!("kernel {kernel} larger than padded input {span}"));
    }
    if !(span - kernel).is_multiple_of(stride) {
        return Err(shape_err!(
            "input {input} with kernel {kernel}, stride {stride}, pad {pad} gives a non-integral output size"
        ));
    }
    Ok((span - kernel) / stride + 1)
}

impl Patches {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let out_h = conv_out_dim(height, kernel_h, stride, pad)?;
        let out_w = conv_out_dim(width, kernel_w, stride, pad)?;
        Ok(Patches { channels, height, width, kernel_h, kernel_w, stride, pad, out_h, out_w })
    }

    /// Rows of the column matrix: `C · kh · kw`.
    pub fn rows(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    /// Columns contributed by one image: `out_h · out_w`.
    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Output columns `lo..hi` whose kernel column `kj` lands inside the image.
    fn valid_columns(&self, kj: usize) -> (usize, usize) {
        let (stride, pad, w) = (self.stride as isize, self.pad as isize, self.width as isize);
        let first = pad - kj as isize;
        let lo = if first <= 0 { 0 } else { (first + stride - 1) / stride };
        let last = w - 1 + pad - kj as isize;
        let hi = if last < 0 { 0 } else { last / stride + 1 };
        let hi = (hi as usize).min(self.out_w);
        let lo = (lo as usize).min(hi);
        (lo, hi)
    }

    /// Writes the patches of one `[C, H, W]` image into `cols`, a row-major
    /// matrix with `ld` columns, starting at column `offset`.
    pub(crate) fn lower_into(&self, x: &[f32], cols: &mut [f32], ld: usize, offset: usize) {
        debug_assert_eq!(x.len(), self.input_len());
        let h = self.height as isize;
        let pad = self.pad as isize;
        let stride = self.stride as isize;
        let mut row = 0;
        for ch in 0..self.channels {
            let plane = &x[ch * self.height * self.width..(ch + 1) * self.height * self.width];
            for ki in 0..self.kernel_h as isize {
                for kj in 0..self.kernel_w as isize {
                    let dst_row = &mut cols[row * ld + offset..row * ld + offset + self.positions()];
                    for oy in 0..self.out_h {
                        let iy = oy as isize * stride + ki - pad;
                        let dst = &mut dst_row[oy * self.out_w..(oy + 1) * self.out_w];
                        if iy < 0 || iy >= h {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        let (lo, hi) = self.valid_columns(kj as usize);
                        dst[..lo].fill(0.0);
                        dst[hi..].fill(0.0);
                        if self.stride == 1 {
                            let start = (lo as isize + kj - pad) as usize;
                            dst[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate().take(hi).skip(lo) {
                                *d = src[(ox as isize * stride + kj - pad) as usize];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Adjoint of [`Patches::lower_into`]: scatters columns back onto a
    /// `[C, H, W]` gradient, summing where receptive fields overlap.
    pub(crate) fn raise_into(&self, cols: &[f32], ld: usize, offset: usize, grad: &mut [f32]) {
        debug_assert_eq!(grad.len(), self.input_len());
        let h = self.height as isize;
        let pad = self.pad as isize;
        let stride = self.stride as isize;
        let mut row = 0;
        for ch in 0..self.channels {
            let plane_len = self.height * self.width;
            let plane = &mut grad[ch * plane_len..(ch + 1) * plane_len];
            for ki in 0..self.kernel_h as isize {
                for kj in 0..self.kernel_w as isize {
                    let src_row = &cols[row * ld + offset..row * ld + offset + self.positions()];
                    for oy in 0..self.out_h {
                        let iy = oy as isize * stride + ki - pad;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        let src = &src_row[oy * self.out_w..(oy + 1) * self.out_w];
                        let (lo, hi) = self.valid_columns(kj as usize);
                        if self.stride == 1 {
                            let start = (lo as isize + kj - pad) as usize;
                            for (d, &g) in dst[start..start + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                                *d += g;
                            }
                        } else {
                            for (ox, &g) in src.iter().enumerate().take(hi).skip(lo) {
                                dst[(ox as isize * stride + kj - pad) as usize] += g;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn chw(input: &Tensor) -> Result<(usize, usize, usize)> {
    match *input.dims() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(shape_err!("expected a [C, H, W] tensor, got {}", input.shape())),
    }
}

/// Unrolls the receptive fields of a `[C, H, W]` image into a
/// `[C·kh·kw, out_h·out_w]` matrix, zero-padded outside the image.
pub fn im2col(input: &Tensor, kernel_h: usize, kernel_w: usize, stride: usize, pad: usize) -> Result<Tensor> {
    let (c, h, w) = chw(input)?;
    let p = Patches::new(c, h, w, kernel_h, kernel_w, stride, pad)?;
    let mut cols = vec![0.0; p.rows() * p.positions()];
    p.lower_into(input.data(), &mut cols, p.positions(), 0);
    Tensor::from_vec(&[p.rows(), p.positions()], cols)
}

/// Folds a column matrix back onto an image of `input_dims = [C, H, W]`,
/// accumulating overlapping contributions.
pub fn col2im(
    cols: &Tensor,
    input_dims: [usize; 3],
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let [c, h, w] = input_dims;
    let p = Patches::new(c, h, w, kernel_h, kernel_w, stride, pad)?;
    if cols.dims() != [p.rows(), p.positions()] {
        return Err(shape_err!(
            "column matrix {} does not match [{}, {}] for input [{c}, {h}, {w}]",
            cols.shape(),
            p.rows(),
            p.positions()
        ));
    }
    let mut grad = vec![0.0; c * h * w];
    p.raise_into(cols.data(), p.positions(), 0, &mut grad);
    Tensor::from_vec(&[c, h, w], grad)
}
