//! Layer primitives: 3x3 same-padding convolution (as im2col + GEMM),
//! 2x2 max pooling, fully connected layers, ReLU, softmax.
//!
//! Convolution is cross-correlation (no kernel flip) with zero padding 1 and
//! stride 1, so spatial size is preserved until pooling halves it.

use ndarray::{Array1, Array2, Array3, Axis};

/// Unfold a (C, H, W) input into (C*9, H*W) patch columns for a 3x3 kernel
/// with padding 1. Column `y*W + x` holds the patch centered at `(y, x)`.
pub(crate) fn im2col_3x3(input: &Array3<f64>) -> Array2<f64> {
    let (c, h, w) = input.dim();
    let src = input.as_slice().expect("standard layout");
    let mut cols = Array2::zeros((c * 9, h * w));
    {
        let dst = cols.as_slice_mut().expect("standard layout");
        for ch in 0..c {
            for ky in 0..3 {
                // valid output rows for this kernel row
                let y_lo = 1usize.saturating_sub(ky);
                let y_hi = (h + 1 - ky).min(h);
                for kx in 0..3 {
                    let row = ch * 9 + ky * 3 + kx;
                    let x_lo = 1usize.saturating_sub(kx);
                    let x_hi = (w + 1 - kx).min(w);
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in y_lo..y_hi {
                        let iy = y + ky - 1;
                        let s = (ch * h + iy) * w + (x_lo + kx - 1);
                        let d = row * (h * w) + y * w + x_lo;
                        let n = x_hi - x_lo;
                        dst[d..d + n].copy_from_slice(&src[s..s + n]);
                    }
                }
            }
        }
    }
    cols
}

/// Fold (C*9, H*W) patch-column gradients back onto a (C, H, W) input
/// gradient (transpose of [`im2col_3x3`]).
pub(crate) fn col2im_3x3(cols: &Array2<f64>, c: usize, h: usize, w: usize) -> Array3<f64> {
    let src = cols.as_slice().expect("standard layout");
    let mut grad = Array3::zeros((c, h, w));
    {
        let dst = grad.as_slice_mut().expect("standard layout");
        for ch in 0..c {
            for ky in 0..3 {
                let y_lo = 1usize.saturating_sub(ky);
                let y_hi = (h + 1 - ky).min(h);
                for kx in 0..3 {
                    let row = ch * 9 + ky * 3 + kx;
                    let x_lo = 1usize.saturating_sub(kx);
                    let x_hi = (w + 1 - kx).min(w);
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in y_lo..y_hi {
                        let iy = y + ky - 1;
                        let d = (ch * h + iy) * w + (x_lo + kx - 1);
                        let s = row * (h * w) + y * w + x_lo;
                        for i in 0..(x_hi - x_lo) {
                            dst[d + i] += src[s + i];
                        }
                    }
                }
            }
        }
    }
    grad
}

/// Convolution forward pass. Returns the pre-activation output and the
/// im2col matrix (kept for the backward pass).
pub(crate) fn conv_forward(
    input: &Array3<f64>,
    weights: &Array2<f64>,
    bias: &Array1<f64>,
) -> (Array3<f64>, Array2<f64>) {
    let (_, h, w) = input.dim();
    let out_ch = weights.nrows();
    let cols = im2col_3x3(input);
    let mut out2 = weights.dot(&cols);
    for (mut row, &b) in out2.axis_iter_mut(Axis(0)).zip(bias.iter()) {
        row.mapv_inplace(|v| v + b);
    }
    let out = out2.into_shape_with_order((out_ch, h, w)).expect("conv output shape");
    (out, cols)
}

/// Convolution backward pass: gradients for weights, bias and input.
pub(crate) fn conv_backward(
    cols: &Array2<f64>,
    weights: &Array2<f64>,
    grad_out: &Array3<f64>,
    in_dim: (usize, usize, usize),
) -> (Array3<f64>, Array2<f64>, Array1<f64>) {
    let (oc, h, w) = grad_out.dim();
    let go2 = grad_out
        .view()
        .into_shape_with_order((oc, h * w))
        .expect("grad reshape");
    let grad_w = go2.dot(&cols.t());
    let grad_b = go2.sum_axis(Axis(1));
    let grad_cols = weights.t().dot(&go2);
    let grad_in = col2im_3x3(&grad_cols, in_dim.0, in_dim.1, in_dim.2);
    (grad_in, grad_w, grad_b)
}

/// 2x2 max pooling with stride 2. `idx` records which window position
/// (dy*2 + dx) won, for gradient routing; ties go to the first maximum.
pub(crate) fn maxpool2_forward(input: &Array3<f64>) -> (Array3<f64>, Array3<u8>) {
    let (c, h, w) = input.dim();
    debug_assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even spatial dims");
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Array3::zeros((c, ph, pw));
    let mut idx = Array3::zeros((c, ph, pw));
    for ch in 0..c {
        for y in 0..ph {
            for x in 0..pw {
                let mut best = input[[ch, 2 * y, 2 * x]];
                let mut best_at = 0u8;
                for (pos, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    let v = input[[ch, 2 * y + dy, 2 * x + dx]];
                    if v > best {
                        best = v;
                        best_at = pos as u8;
                    }
                }
                out[[ch, y, x]] = best;
                idx[[ch, y, x]] = best_at;
            }
        }
    }
    (out, idx)
}

/// Route pooled gradients back to the winning positions.
pub(crate) fn maxpool2_backward(
    grad_out: &Array3<f64>,
    idx: &Array3<u8>,
    in_dim: (usize, usize, usize),
) -> Array3<f64> {
    let (c, ph, pw) = grad_out.dim();
    let mut grad_in = Array3::zeros(in_dim);
    for ch in 0..c {
        for y in 0..ph {
            for x in 0..pw {
                let pos = idx[[ch, y, x]] as usize;
                let (dy, dx) = (pos / 2, pos % 2);
                grad_in[[ch, 2 * y + dy, 2 * x + dx]] += grad_out[[ch, y, x]];
            }
        }
    }
    grad_in
}

pub(crate) fn relu_inplace3(x: &mut Array3<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

pub(crate) fn relu_inplace1(x: &mut Array1<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Zero the gradient wherever the activation was clamped.
pub(crate) fn relu_mask3(grad: &mut Array3<f64>, activated: &Array3<f64>) {
    for (g, &a) in grad.iter_mut().zip(activated.iter()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn relu_mask1(grad: &mut Array1<f64>, activated: &Array1<f64>) {
    for (g, &a) in grad.iter_mut().zip(activated.iter()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn fc_forward(input: &Array1<f64>, weights: &Array2<f64>, bias: &Array1<f64>) -> Array1<f64> {
    weights.dot(input) + bias
}

/// Stable softmax probabilities and log-probabilities from logits.
pub(crate) fn log_softmax(logits: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let logp = logits.mapv(|v| v - lse);
    let p = logp.mapv(f64::exp);
    (p, logp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y.
        let mut rng = SplitMix64::new(1);
        let x = Array3::from_shape_fn((2, 4, 6), |_| rng.next_normal());
        let y = Array2::from_shape_fn((18, 24), |_| rng.next_normal());
        let lhs: f64 = im2col_3x3(&x).iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im_3x3(&y, 2, 4, 6).iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn conv_matches_direct_cross_correlation() {
        let mut rng = SplitMix64::new(2);
        let input = Array3::from_shape_fn((2, 5, 4), |_| rng.next_normal());
        let weights = Array2::from_shape_fn((3, 18), |_| rng.next_normal());
        let bias = Array1::from_shape_fn(3, |_| rng.next_normal());
        let (out, _) = conv_forward(&input, &weights, &bias);
        // Direct nested-loop oracle.
        for o in 0..3 {
            for y in 0..5i64 {
                for x in 0..4i64 {
                    let mut acc = bias[o];
                    for c in 0..2 {
                        for ky in 0..3i64 {
                            for kx in 0..3i64 {
                                let iy = y + ky - 1;
                                let ix = x + kx - 1;
                                if iy < 0 || iy >= 5 || ix < 0 || ix >= 4 {
                                    continue;
                                }
                                acc += weights[[o, c * 9 + (ky * 3 + kx) as usize]]
                                    * input[[c, iy as usize, ix as usize]];
                            }
                        }
                    }
                    assert!((out[[o, y as usize, x as usize]] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn maxpool_picks_window_maximum() {
        let input =
            Array3::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, idx) = maxpool2_forward(&input);
        assert_eq!(out[[0, 0, 0]], 4.0);
        assert_eq!(idx[[0, 0, 0]], 3);
    }

    #[test]
    fn maxpool_randomized_window_contract() {
        let mut rng = SplitMix64::new(3);
        let input = Array3::from_shape_fn((3, 8, 8), |_| rng.next_normal());
        let (out, _) = maxpool2_forward(&input);
        for ch in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    let window = [
                        input[[ch, 2 * y, 2 * x]],
                        input[[ch, 2 * y, 2 * x + 1]],
                        input[[ch, 2 * y + 1, 2 * x]],
                        input[[ch, 2 * y + 1, 2 * x + 1]],
                    ];
                    let max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    assert_eq!(out[[ch, y, x]], max);
                }
            }
        }
    }

    #[test]
    fn maxpool_backward_routes_to_argmax() {
        let input =
            Array3::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, idx) = maxpool2_forward(&input);
        let grad_out = Array3::from_elem((1, 1, 1), 5.0);
        let grad_in = maxpool2_backward(&grad_out, &idx, (1, 2, 2));
        assert_eq!(grad_in[[0, 1, 1]], 5.0);
        assert_eq!(grad_in.sum(), 5.0);
    }

    #[test]
    fn softmax_of_uniform_logits() {
        let (p, logp) = log_softmax(&Array1::zeros(2));
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
        assert!((logp[0] + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let (p, logp) = log_softmax(&Array1::from(vec![1000.0, -1000.0]));
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!(logp.iter().all(|v| v.is_finite()));
    }
}
