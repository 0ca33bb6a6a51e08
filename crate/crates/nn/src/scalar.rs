//! Floating-point element type and the strided matrix product everything else
//! is built on.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Element type of network tensors: `f32` for training, `f64` for gradient checks.
pub trait Scalar: Float + Default + Debug + Display + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static {
    const NAME: &'static str;

    fn from_f64(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `C ← alpha·A·B + beta·C` for an `m×k` A, `k×n` B and `m×n` C given by
    /// row and column strides.
    ///
    /// # Safety
    /// Every addressed element must lie inside the pointed-to allocations.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn from_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// A strided matrix view: `(slice, row stride, column stride)`.
pub type MatRef<'a, T> = (&'a [T], usize, usize);

fn last_index(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs
    }
}

/// Bounds-checked `C ← alpha·A·B + beta·C`.
///
/// A is `m×k`, B is `k×n`, C is `m×n`. With `beta = 0` the previous contents of
/// C are ignored.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(m: usize, k: usize, n: usize, alpha: T, a: MatRef<T>, b: MatRef<T>, beta: T, c: &mut [T], rsc: usize, csc: usize) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || last_index(m, k, a.1, a.2) < a.0.len(), "gemm: A out of bounds");
    assert!(k == 0 || last_index(k, n, b.1, b.2) < b.0.len(), "gemm: B out of bounds");
    assert!(last_index(m, n, rsc, csc) < c.len(), "gemm: C out of bounds");
    if k == 0 {
        for r in 0..m {
            for col in 0..n {
                let v = &mut c[r * rsc + col * csc];
                *v = if beta == T::zero() { T::zero() } else { *v * beta };
            }
        }
        return;
    }
    // SAFETY: the asserts above keep every addressed element in bounds.
    unsafe {
        T::gemm_raw(m, k, n, alpha, a.0.as_ptr(), a.1 as isize, a.2 as isize, b.0.as_ptr(), b.1 as isize, b.2 as isize, beta, c.as_mut_ptr(), rsc as isize, csc as isize);
    }
}

/// Output rows below which the convolution layers use the row-update
/// products below instead of the packed gemm kernel.
pub const SMALL_ROWS: usize = 16;

/// `C += A·B` for contiguous row-major `A: m×k`, `B: k×n`, `C: m×n`.
/// Each step is an axpy over a full row of `B`, which vectorizes well when
/// `m` is a handful of output channels and `n` is large.
pub fn matmul_acc_rows<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "matmul_acc_rows: operand too small");
    for l in 0..k {
        let br = &b[l * n..][..n];
        for i in 0..m {
            let w = a[i * k + l];
            for (cv, bv) in c[i * n..][..n].iter_mut().zip(br) {
                *cv += w * *bv;
            }
        }
    }
}

/// `C += A·Bᵀ` for contiguous row-major `A: m×n`, `B: k×n`, `C: m×k`.
pub fn matmul_acc_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    assert!(a.len() >= m * n && b.len() >= k * n && c.len() >= m * k, "matmul_acc_nt: operand too small");
    for i in 0..m {
        let ar = &a[i * n..][..n];
        for l in 0..k {
            c[i * k + l] += dot(ar, &b[l * n..][..n]);
        }
    }
}

/// `C = Aᵀ·B` for contiguous row-major `A: m×k`, `B: m×n`, `C: k×n`.
pub fn matmul_tn_rows<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= m * n && c.len() >= k * n, "matmul_tn_rows: operand too small");
    c[..k * n].iter_mut().for_each(|v| *v = T::zero());
    for i in 0..m {
        let br = &b[i * n..][..n];
        for l in 0..k {
            let w = a[i * k + l];
            for (cv, bv) in c[l * n..][..n].iter_mut().zip(br) {
                *cv += w * *bv;
            }
        }
    }
}

/// Dot product with eight independent partial sums.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for j in 0..8 {
            acc[j] += a[j] * b[j];
        }
    }
    let mut tail = T::zero();
    for (a, b) in xr.iter().zip(yr) {
        tail += *a * *b;
    }
    acc.iter().copied().sum::<T>() + tail
}
