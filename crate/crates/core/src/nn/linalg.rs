//! Dense row-batched kernels.
//!
//! Weights are stored input-major (`w[i * dout + o]`), so the forward pass
//! and the weight gradient are both contiguous axpy loops over outputs.

use super::Real;

/// `y[r] = b + x[r] W` for `n` rows.
pub fn affine<T: Real>(x: &[T], n: usize, din: usize, dout: usize, w: &[T], b: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), n * din);
    debug_assert_eq!(w.len(), din * dout);
    debug_assert_eq!(y.len(), n * dout);
    for r in 0..n {
        let xr = &x[r * din..(r + 1) * din];
        let yr = &mut y[r * dout..(r + 1) * dout];
        yr.copy_from_slice(b);
        for (i, &xi) in xr.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let wi = &w[i * dout..(i + 1) * dout];
            for (yo, &wo) in yr.iter_mut().zip(wi) {
                *yo += xi * wo;
            }
        }
    }
}

/// Dot product with eight independent accumulators.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (ac, bc) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += ac[k] * bc[k];
        }
    }
    let mut tail = T::zero();
    for k in chunks * 8..a.len() {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Backward of [`affine`]. Weight and bias gradients accumulate; the input
/// gradient is overwritten.
#[allow(clippy::too_many_arguments)]
pub fn affine_backward<T: Real>(
    x: &[T],
    n: usize,
    din: usize,
    dout: usize,
    w: &[T],
    gy: &[T],
    grad_wb: Option<(&mut [T], &mut [T])>,
    gx: Option<&mut [T]>,
) {
    if let Some((gw, gb)) = grad_wb {
        for r in 0..n {
            let gr = &gy[r * dout..(r + 1) * dout];
            for (gbo, &g) in gb.iter_mut().zip(gr) {
                *gbo += g;
            }
            let xr = &x[r * din..(r + 1) * din];
            for (i, &xi) in xr.iter().enumerate() {
                if xi == T::zero() {
                    continue;
                }
                let gwi = &mut gw[i * dout..(i + 1) * dout];
                for (gwo, &g) in gwi.iter_mut().zip(gr) {
                    *gwo += xi * g;
                }
            }
        }
    }
    if let Some(gx) = gx {
        for r in 0..n {
            let gr = &gy[r * dout..(r + 1) * dout];
            let gxr = &mut gx[r * din..(r + 1) * din];
            for (i, gxi) in gxr.iter_mut().enumerate() {
                *gxi = dot(gr, &w[i * dout..(i + 1) * dout]);
            }
        }
    }
}
