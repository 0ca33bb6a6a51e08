//! Fully connected and grouped convolution layers over flat parameter slices.
//!
//! Dense activations are row-major `[batch, features]`. Convolution
//! activations are channel-major `[channels, batch, height, width]`, which
//! makes every group's im2col product a single matrix multiplication.

use serde::{Deserialize, Serialize};

use crate::scalar::{gemm, matmul_acc_nt, matmul_acc_rows, matmul_tn_rows, Scalar, SMALL_ROWS};

/// Fully connected layer `y = act(x·Wᵀ + b)`; weights `[n_out, n_in]` then bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseShape {
    pub n_in: usize,
    pub n_out: usize,
    pub offset: usize,
    pub relu: bool,
}

impl DenseShape {
    pub fn param_len(&self) -> usize {
        self.n_out * (self.n_in + 1)
    }

    fn w(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.n_out * self.n_in
    }

    fn b(&self) -> std::ops::Range<usize> {
        let s = self.offset + self.n_out * self.n_in;
        s..s + self.n_out
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        self.b()
    }

    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.w()
    }
}

pub fn dense_forward<T: Scalar>(shape: &DenseShape, params: &[T], x: &[T], batch: usize) -> Vec<T> {
    assert_eq!(x.len(), batch * shape.n_in, "dense input size");
    let (n_in, n_out) = (shape.n_in, shape.n_out);
    let w = &params[shape.w()];
    let b = &params[shape.b()];
    let mut y = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        y.extend_from_slice(b);
    }
    gemm(batch, n_in, n_out, T::one(), (x, n_in, 1), (w, 1, n_in), T::one(), &mut y, n_out, 1);
    if shape.relu {
        relu_in_place(&mut y);
    }
    y
}

/// Backpropagates `dy` (gradient w.r.t. the activated output `y`).
/// Parameter gradients are added into `grads`; the input gradient is returned
/// when requested.
pub fn dense_backward<T: Scalar>(shape: &DenseShape, params: &[T], x: &[T], y: &[T], dy: &mut [T], batch: usize, grads: &mut [T], need_dx: bool) -> Option<Vec<T>> {
    let (n_in, n_out) = (shape.n_in, shape.n_out);
    if shape.relu {
        relu_mask(y, dy);
    }
    gemm(n_out, batch, n_in, T::one(), (dy, 1, n_out), (x, n_in, 1), T::one(), &mut grads[shape.w()], n_in, 1);
    let gb = &mut grads[shape.b()];
    for row in dy.chunks_exact(n_out) {
        for (g, d) in gb.iter_mut().zip(row) {
            *g += *d;
        }
    }
    need_dx.then(|| {
        let mut dx = vec![T::zero(); batch * n_in];
        gemm(batch, n_out, n_in, T::one(), (dy, n_out, 1), (&params[shape.w()], n_in, 1), T::zero(), &mut dx, n_in, 1);
        dx
    })
}

/// Square-kernel grouped convolution without padding; weights
/// `[out_ch, in_ch / groups, k, k]` then bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub groups: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub offset: usize,
    pub relu: bool,
}

impl ConvShape {
    pub fn out_h(&self) -> usize {
        (self.in_h - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - self.kernel) / self.stride + 1
    }

    fn cin_g(&self) -> usize {
        self.in_ch / self.groups
    }

    fn cout_g(&self) -> usize {
        self.out_ch / self.groups
    }

    /// Rows of one group's im2col matrix.
    fn k_len(&self) -> usize {
        self.cin_g() * self.kernel * self.kernel
    }

    pub fn param_len(&self) -> usize {
        self.out_ch * self.k_len() + self.out_ch
    }

    fn w(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.out_ch * self.k_len()
    }

    fn b(&self) -> std::ops::Range<usize> {
        let s = self.offset + self.out_ch * self.k_len();
        s..s + self.out_ch
    }

    pub fn fan_in(&self) -> usize {
        self.k_len()
    }
}

fn im2col<T: Scalar>(s: &ConvShape, x: &[T], batch: usize) -> Vec<T> {
    let (k, st) = (s.kernel, s.stride);
    let (ho, wo) = (s.out_h(), s.out_w());
    let (kl, n) = (s.k_len(), batch * ho * wo);
    let hw = s.in_h * s.in_w;
    let mut col = vec![T::zero(); s.groups * kl * n];
    for g in 0..s.groups {
        for ci in 0..s.cin_g() {
            let channel = &x[(g * s.cin_g() + ci) * batch * hw..][..batch * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ci * k + ky) * k + kx;
                    let row = &mut col[(g * kl + r) * n..][..n];
                    for b in 0..batch {
                        let img = &channel[b * hw..][..hw];
                        for oy in 0..ho {
                            let src = &img[(oy * st + ky) * s.in_w + kx..];
                            let dst = &mut row[(b * ho + oy) * wo..][..wo];
                            if st == 1 {
                                dst.copy_from_slice(&src[..wo]);
                            } else {
                                for (d, v) in dst.iter_mut().zip(src.iter().step_by(st)) {
                                    *d = *v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(s: &ConvShape, col: &[T], batch: usize) -> Vec<T> {
    let (k, st) = (s.kernel, s.stride);
    let (ho, wo) = (s.out_h(), s.out_w());
    let (kl, n) = (s.k_len(), batch * ho * wo);
    let hw = s.in_h * s.in_w;
    let mut x = vec![T::zero(); s.in_ch * batch * hw];
    for g in 0..s.groups {
        for ci in 0..s.cin_g() {
            let channel = &mut x[(g * s.cin_g() + ci) * batch * hw..][..batch * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ci * k + ky) * k + kx;
                    let row = &col[(g * kl + r) * n..][..n];
                    for b in 0..batch {
                        let img = &mut channel[b * hw..][..hw];
                        for oy in 0..ho {
                            let base = (oy * st + ky) * s.in_w + kx;
                            let src = &row[(b * ho + oy) * wo..][..wo];
                            if st == 1 {
                                for (d, v) in img[base..base + wo].iter_mut().zip(src) {
                                    *d += *v;
                                }
                            } else {
                                for (d, v) in img[base..].iter_mut().step_by(st).zip(src) {
                                    *d += *v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Returns the im2col matrix (kept for the backward pass) and the activated output.
pub fn conv_forward<T: Scalar>(s: &ConvShape, params: &[T], x: &[T], batch: usize) -> (Vec<T>, Vec<T>) {
    assert_eq!(x.len(), s.in_ch * batch * s.in_h * s.in_w, "conv input size");
    let col = im2col(s, x, batch);
    let (kl, n, cg) = (s.k_len(), batch * s.out_h() * s.out_w(), s.cout_g());
    let w = &params[s.w()];
    let bias = &params[s.b()];
    let mut y = Vec::with_capacity(s.out_ch * n);
    for b in bias {
        y.extend(std::iter::repeat_n(*b, n));
    }
    for g in 0..s.groups {
        let (wg, cgl, yg) = (&w[g * cg * kl..][..cg * kl], &col[g * kl * n..][..kl * n], &mut y[g * cg * n..][..cg * n]);
        if cg <= SMALL_ROWS {
            matmul_acc_rows(cg, kl, n, wg, cgl, yg);
        } else {
            gemm(cg, kl, n, T::one(), (wg, kl, 1), (cgl, n, 1), T::one(), yg, n, 1);
        }
    }
    if s.relu {
        relu_in_place(&mut y);
    }
    (col, y)
}

pub fn conv_backward<T: Scalar>(s: &ConvShape, params: &[T], col: &[T], y: &[T], dy: &mut [T], batch: usize, grads: &mut [T], need_dx: bool) -> Option<Vec<T>> {
    if s.relu {
        relu_mask(y, dy);
    }
    let (kl, n, cg) = (s.k_len(), batch * s.out_h() * s.out_w(), s.cout_g());
    {
        let gw = &mut grads[s.w()];
        for g in 0..s.groups {
            let (dyg, cgl, gwg) = (&dy[g * cg * n..][..cg * n], &col[g * kl * n..][..kl * n], &mut gw[g * cg * kl..][..cg * kl]);
            if cg <= SMALL_ROWS {
                matmul_acc_nt(cg, kl, n, dyg, cgl, gwg);
            } else {
                gemm(cg, n, kl, T::one(), (dyg, n, 1), (cgl, 1, n), T::one(), gwg, kl, 1);
            }
        }
    }
    let gb = &mut grads[s.b()];
    for (c, g) in gb.iter_mut().enumerate() {
        *g += dy[c * n..][..n].iter().copied().sum();
    }
    need_dx.then(|| {
        let w = &params[s.w()];
        let mut dcol = vec![T::zero(); s.groups * kl * n];
        for g in 0..s.groups {
            let (wg, dyg, dcg) = (&w[g * cg * kl..][..cg * kl], &dy[g * cg * n..][..cg * n], &mut dcol[g * kl * n..][..kl * n]);
            if cg <= SMALL_ROWS {
                matmul_tn_rows(cg, kl, n, wg, dyg, dcg);
            } else {
                gemm(kl, cg, n, T::one(), (wg, 1, kl), (dyg, n, 1), T::zero(), dcg, n, 1);
            }
        }
        col2im(s, &dcol, batch)
    })
}

pub fn relu_in_place<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Zeroes gradient entries whose activated output is not positive.
pub fn relu_mask<T: Scalar>(y: &[T], dy: &mut [T]) {
    for (d, y) in dy.iter_mut().zip(y) {
        if *y <= T::zero() {
            *d = T::zero();
        }
    }
}
