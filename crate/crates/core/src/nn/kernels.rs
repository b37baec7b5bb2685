//! Gather-GEMM-scatter kernels behind sparse convolution.
//!
//! For each kernel offset `k`, the input rows named by `map.pairs[k]` are
//! gathered into a dense block, multiplied by `W[k]` (`C_in × C_out`) and
//! scattered onto their output rows. Offsets are visited in their fixed order
//! and each output row receives at most one pair per offset, so the summation
//! order of every output entry is fixed.

use super::coords::KernelMap;
use super::matrix::Matrix;
use crate::real::Real;

fn is_identity(pairs: &[(u32, u32)], n_in: usize, n_out: usize) -> bool {
    n_in == n_out
        && pairs.len() == n_out
        && pairs.iter().enumerate().all(|(r, &(i, o))| i as usize == r && o as usize == r)
}

fn gather<T: Real>(src: &Matrix<T>, rows: impl Iterator<Item = usize>, count: usize) -> Vec<T> {
    let c = src.cols();
    let mut buf = Vec::with_capacity(count * c);
    for r in rows {
        buf.extend_from_slice(src.row(r));
    }
    buf
}

/// `out[o] += Σ_k Σ_{(i,o) ∈ map[k]} x[i] · W[k]`.
pub fn conv_forward<T: Real>(x: &Matrix<T>, weights: &[T], map: &KernelMap, c_out: usize) -> Matrix<T> {
    let c_in = x.cols();
    debug_assert_eq!(weights.len(), map.num_offsets() * c_in * c_out);
    let mut out = Matrix::zeros(map.n_out, c_out);
    for (k, pairs) in map.pairs.iter().enumerate() {
        if pairs.is_empty() {
            continue;
        }
        let w = &weights[k * c_in * c_out..(k + 1) * c_in * c_out];
        if is_identity(pairs, map.n_in, map.n_out) {
            T::gemm(
                map.n_out,
                c_in,
                c_out,
                T::one(),
                x.data(),
                (c_in as isize, 1),
                w,
                (c_out as isize, 1),
                T::one(),
                out.data_mut(),
                (c_out as isize, 1),
            );
            continue;
        }
        let p = pairs.len();
        let xg = gather(x, pairs.iter().map(|&(i, _)| i as usize), p);
        let mut yg = vec![T::zero(); p * c_out];
        T::gemm(
            p,
            c_in,
            c_out,
            T::one(),
            &xg,
            (c_in as isize, 1),
            w,
            (c_out as isize, 1),
            T::zero(),
            &mut yg,
            (c_out as isize, 1),
        );
        for (j, &(_, o)) in pairs.iter().enumerate() {
            let dst = out.row_mut(o as usize);
            for (d, &v) in dst.iter_mut().zip(&yg[j * c_out..(j + 1) * c_out]) {
                *d += v;
            }
        }
    }
    out
}

/// Gradients of [`conv_forward`]: returns `(dx, dW)`; `dx` is skipped when
/// `need_dx` is false.
pub fn conv_backward<T: Real>(
    x: &Matrix<T>,
    weights: &[T],
    map: &KernelMap,
    dy: &Matrix<T>,
    need_dx: bool,
) -> (Option<Matrix<T>>, Vec<T>) {
    let c_in = x.cols();
    let c_out = dy.cols();
    let mut dw = vec![T::zero(); weights.len()];
    let mut dx = need_dx.then(|| Matrix::zeros(map.n_in, c_in));
    for (k, pairs) in map.pairs.iter().enumerate() {
        if pairs.is_empty() {
            continue;
        }
        let w = &weights[k * c_in * c_out..(k + 1) * c_in * c_out];
        let dwk = &mut dw[k * c_in * c_out..(k + 1) * c_in * c_out];
        let p = pairs.len();
        let identity = is_identity(pairs, map.n_in, map.n_out);
        let (xg, dyg);
        let (xs, dys): (&[T], &[T]) = if identity {
            (x.data(), dy.data())
        } else {
            xg = gather(x, pairs.iter().map(|&(i, _)| i as usize), p);
            dyg = gather(dy, pairs.iter().map(|&(_, o)| o as usize), p);
            (&xg, &dyg)
        };
        // dW[k] = Xg^T · dYg
        T::gemm(
            c_in,
            p,
            c_out,
            T::one(),
            xs,
            (1, c_in as isize),
            dys,
            (c_out as isize, 1),
            T::zero(),
            dwk,
            (c_out as isize, 1),
        );
        if let Some(dx) = dx.as_mut() {
            if identity {
                T::gemm(
                    p,
                    c_out,
                    c_in,
                    T::one(),
                    dys,
                    (c_out as isize, 1),
                    w,
                    (1, c_out as isize),
                    T::one(),
                    dx.data_mut(),
                    (c_in as isize, 1),
                );
            } else {
                let mut dxg = vec![T::zero(); p * c_in];
                T::gemm(
                    p,
                    c_out,
                    c_in,
                    T::one(),
                    dys,
                    (c_out as isize, 1),
                    w,
                    (1, c_out as isize),
                    T::zero(),
                    &mut dxg,
                    (c_in as isize, 1),
                );
                for (j, &(i, _)) in pairs.iter().enumerate() {
                    let dst = dx.row_mut(i as usize);
                    for (d, &v) in dst.iter_mut().zip(&dxg[j * c_in..(j + 1) * c_in]) {
                        *d += v;
                    }
                }
            }
        }
    }
    (dx, dw)
}

/// `y = x · W (+ b)` for `x: R × in`, `W: in × out`.
pub fn linear_forward<T: Real>(x: &Matrix<T>, w: &[T], b: Option<&[T]>, out_dim: usize) -> Matrix<T> {
    let (r, c_in) = x.shape();
    let mut y = Matrix::zeros(r, out_dim);
    if let Some(b) = b {
        for row in 0..r {
            y.row_mut(row).copy_from_slice(b);
        }
    }
    T::gemm(
        r,
        c_in,
        out_dim,
        T::one(),
        x.data(),
        (c_in as isize, 1),
        w,
        (out_dim as isize, 1),
        T::one(),
        y.data_mut(),
        (out_dim as isize, 1),
    );
    y
}
