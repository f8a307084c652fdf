//! im2col / col2im lowering for 2-D cross-correlation.

use crate::error::{Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if input.len() != 4 || kernel.len() != 4 || input[1] != kernel[1] {
            return Err(TensorError::Shape { op: "conv2d", lhs: input.to_vec(), rhs: kernel.to_vec() });
        }
        let geometry = |msg: String| TensorError::Geometry { op: "conv2d", msg };
        if stride == 0 {
            return Err(geometry("stride must be at least 1".into()));
        }
        let (n, c, h, w) = (input[0], input[1], input[2], input[3]);
        let (o, kh, kw) = (kernel[0], kernel[2], kernel[3]);
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(geometry(format!(
                "kernel {kh}x{kw} exceeds padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Ok(ConvGeom { n, c, h, w, o, kh, kw, stride, pad, ho, wo })
    }

    /// A 1x1, stride 1, unpadded convolution reads its input as the column matrix.
    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    pub fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.ho * self.wo
    }

    pub fn in_plane(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn out_plane(&self) -> usize {
        self.o * self.ho * self.wo
    }

    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// Lowers one sample `[C,H,W]` into `[C*kh*kw, ho*wo]`.
pub(crate) fn im2col<T: Copy + Default>(g: &ConvGeom, input: &[T], cols: &mut [T]) {
    let ncols = g.col_cols();
    let mut row = 0;
    for c in 0..g.c {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.ho {
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    match g.source(oy, ki, g.h) {
                        None => line.fill(T::default()),
                        Some(iy) => {
                            let src = &plane[iy * g.w..(iy + 1) * g.w];
                            for (ox, slot) in line.iter_mut().enumerate() {
                                *slot = match g.source(ox, kj, g.w) {
                                    Some(ix) => src[ix],
                                    None => T::default(),
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

/// Scatter-adds a column matrix back onto one sample `[C,H,W]`.
pub(crate) fn col2im<T: Copy + std::ops::AddAssign>(g: &ConvGeom, cols: &[T], input: &mut [T]) {
    let ncols = g.col_cols();
    let mut row = 0;
    for c in 0..g.c {
        let plane = &mut input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.ho {
                    if let Some(iy) = g.source(oy, ki, g.h) {
                        let line = &src[oy * g.wo..(oy + 1) * g.wo];
                        let dst = &mut plane[iy * g.w..(iy + 1) * g.w];
                        for (ox, &v) in line.iter().enumerate() {
                            if let Some(ix) = g.source(ox, kj, g.w) {
                                dst[ix] += v;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}
