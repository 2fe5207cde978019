//! Per-sample numeric kernels. All of them accumulate into their output.
//!
//! Convolution geometry: `input [ci, h, w]`, `weight [co, ci, k, k]`,
//! `output [co, ho, wo]` with `ho = (h + 2p - k) / s + 1`. The transposed
//! convolution reuses the same three primitives with the roles of input and
//! output exchanged, which makes it the exact adjoint of `conv_forward`.

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub ho: usize,
    pub wo: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn in_len(&self) -> usize {
        self.ci * self.h * self.w
    }
    pub fn out_len(&self) -> usize {
        self.co * self.ho * self.wo
    }
    pub fn weight_len(&self) -> usize {
        self.co * self.ci * self.k * self.k
    }
}

/// Output positions `o` in `[lo, hi)` for which `o * stride + koff - pad`
/// lands inside `[0, in_len)`.
#[inline]
fn valid_range(koff: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let koff = koff as isize;
    let pad = pad as isize;
    let s = stride as isize;
    let lo_num = pad - koff;
    let lo = if lo_num <= 0 { 0 } else { (lo_num + s - 1) / s };
    let hi_num = in_len as isize - 1 + pad - koff;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = (hi_num / s + 1).min(out_len as isize);
    if hi <= lo {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

pub(crate) fn conv_forward<S: Real>(g: &ConvGeom, x: &[S], wt: &[S], out: &mut [S]) {
    let kk = g.k * g.k;
    for co in 0..g.co {
        let out_c = &mut out[co * g.ho * g.wo..(co + 1) * g.ho * g.wo];
        for ci in 0..g.ci {
            let x_c = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            let w_base = (co * g.ci + ci) * kk;
            for kh in 0..g.k {
                let (oh_lo, oh_hi) = valid_range(kh, g.pad, g.stride, g.h, g.ho);
                for kw in 0..g.k {
                    let wv = wt[w_base + kh * g.k + kw];
                    if wv == S::zero() {
                        continue;
                    }
                    let (ow_lo, ow_hi) = valid_range(kw, g.pad, g.stride, g.w, g.wo);
                    for oh in oh_lo..oh_hi {
                        let ih = oh * g.stride + kh - g.pad;
                        let x_row = &x_c[ih * g.w..(ih + 1) * g.w];
                        let o_row = &mut out_c[oh * g.wo..(oh + 1) * g.wo];
                        for ow in ow_lo..ow_hi {
                            o_row[ow] += wv * x_row[ow * g.stride + kw - g.pad];
                        }
                    }
                }
            }
        }
    }
}

/// Scatters `dout [co, ho, wo]` back through the kernel into `dx [ci, h, w]`.
pub(crate) fn conv_backward_data<S: Real>(g: &ConvGeom, dout: &[S], wt: &[S], dx: &mut [S]) {
    let kk = g.k * g.k;
    for co in 0..g.co {
        let d_c = &dout[co * g.ho * g.wo..(co + 1) * g.ho * g.wo];
        for ci in 0..g.ci {
            let dx_c = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            let w_base = (co * g.ci + ci) * kk;
            for kh in 0..g.k {
                let (oh_lo, oh_hi) = valid_range(kh, g.pad, g.stride, g.h, g.ho);
                for kw in 0..g.k {
                    let wv = wt[w_base + kh * g.k + kw];
                    let (ow_lo, ow_hi) = valid_range(kw, g.pad, g.stride, g.w, g.wo);
                    for oh in oh_lo..oh_hi {
                        let ih = oh * g.stride + kh - g.pad;
                        let d_row = &d_c[oh * g.wo..(oh + 1) * g.wo];
                        let x_row = &mut dx_c[ih * g.w..(ih + 1) * g.w];
                        for ow in ow_lo..ow_hi {
                            x_row[ow * g.stride + kw - g.pad] += wv * d_row[ow];
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates `dw [co, ci, k, k]` from input `x` and output adjoint `dout`.
pub(crate) fn conv_backward_weight<S: Real>(g: &ConvGeom, x: &[S], dout: &[S], dw: &mut [S]) {
    let kk = g.k * g.k;
    for co in 0..g.co {
        let d_c = &dout[co * g.ho * g.wo..(co + 1) * g.ho * g.wo];
        for ci in 0..g.ci {
            let x_c = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            let w_base = (co * g.ci + ci) * kk;
            for kh in 0..g.k {
                let (oh_lo, oh_hi) = valid_range(kh, g.pad, g.stride, g.h, g.ho);
                for kw in 0..g.k {
                    let (ow_lo, ow_hi) = valid_range(kw, g.pad, g.stride, g.w, g.wo);
                    let mut acc = S::zero();
                    for oh in oh_lo..oh_hi {
                        let ih = oh * g.stride + kh - g.pad;
                        let d_row = &d_c[oh * g.wo..(oh + 1) * g.wo];
                        let x_row = &x_c[ih * g.w..(ih + 1) * g.w];
                        for ow in ow_lo..ow_hi {
                            acc += x_row[ow * g.stride + kw - g.pad] * d_row[ow];
                        }
                    }
                    dw[w_base + kh * g.k + kw] += acc;
                }
            }
        }
    }
}

/// `out[j] += sum_i x[i] * w[i, j]` for one sample.
pub(crate) fn dense_forward<S: Real>(x: &[S], w: &[S], fout: usize, out: &mut [S]) {
    for (i, &xv) in x.iter().enumerate() {
        if xv == S::zero() {
            continue;
        }
        let w_row = &w[i * fout..(i + 1) * fout];
        for (o, &wv) in out.iter_mut().zip(w_row) {
            *o += xv * wv;
        }
    }
}

/// `dx[i] += sum_j w[i, j] * dout[j]`
pub(crate) fn dense_backward_data<S: Real>(dout: &[S], w: &[S], fout: usize, dx: &mut [S]) {
    for (i, d) in dx.iter_mut().enumerate() {
        let w_row = &w[i * fout..(i + 1) * fout];
        let mut acc = S::zero();
        for (&wv, &g) in w_row.iter().zip(dout) {
            acc += wv * g;
        }
        *d += acc;
    }
}

/// `dw[i, j] += x[i] * dout[j]`
pub(crate) fn dense_backward_weight<S: Real>(x: &[S], dout: &[S], dw: &mut [S]) {
    let fout = dout.len();
    for (i, &xv) in x.iter().enumerate() {
        if xv == S::zero() {
            continue;
        }
        let row = &mut dw[i * fout..(i + 1) * fout];
        for (r, &g) in row.iter_mut().zip(dout) {
            *r += xv * g;
        }
    }
}
