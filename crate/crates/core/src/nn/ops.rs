//! Layer kernels. Images are `H×W×C` row-major, convolution kernels
//! `k×k×C×F`, dense weights `n×m`. Sums are accumulated in `f64` and rounded
//! to the element type once per output.

use super::{NnError, Real, Result, Tensor};

/// Inputs are clamped to this magnitude before exponentiation; `exp(88)` is
/// close to the `f32` overflow point.
const SIGMOID_CLAMP: f64 = 88.0;

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise logistic function `(1 + e^-x)^-1`.
pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::narrow(sigmoid_scalar(v.widen())))
}

/// Elementwise `o·(1 − o)` for `o = sigmoid(z)`: the derivative of the
/// activation with respect to its pre-activation, expressed in the output.
pub fn sigmoid_derivative<T: Real>(o: &Tensor<T>) -> Tensor<T> {
    o.map(|v| v * (T::one() - v))
}

fn dims3<T: Real>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(NnError::ShapeMismatch {
            op,
            left: t.shape().to_vec(),
            right: vec![0, 0, 0],
        }),
    }
}

/// Valid cross-correlation with stride 1.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (h, w, c) = dims3(input, "conv2d")?;
    let (k, f) = match *kernels.shape() {
        [k1, k2, kc, f] if k1 == k2 && kc == c && k1 <= h && k1 <= w => (k1, f),
        _ => {
            return Err(NnError::ShapeMismatch {
                op: "conv2d",
                left: input.shape().to_vec(),
                right: kernels.shape().to_vec(),
            })
        }
    };
    if bias.shape() != [f] {
        return Err(NnError::ShapeMismatch {
            op: "conv2d bias",
            left: kernels.shape().to_vec(),
            right: bias.shape().to_vec(),
        });
    }
    let (oh, ow) = (h - k + 1, w - k + 1);
    let x = input.data();
    let kw = kernels.data();
    let mut out = Vec::with_capacity(oh * ow * f);
    let mut acc = vec![0.0f64; f];
    for y in 0..oh {
        for xo in 0..ow {
            for (a, b) in acc.iter_mut().zip(bias.data()) {
                *a = b.widen();
            }
            for ky in 0..k {
                for kx in 0..k {
                    let in_base = ((y + ky) * w + xo + kx) * c;
                    let k_base = (ky * k + kx) * c * f;
                    for ci in 0..c {
                        let v = x[in_base + ci].widen();
                        let row = &kw[k_base + ci * f..k_base + (ci + 1) * f];
                        for (a, &wt) in acc.iter_mut().zip(row) {
                            *a += v * wt.widen();
                        }
                    }
                }
            }
            out.extend(acc.iter().map(|&a| T::narrow(a)));
        }
    }
    Tensor::new(&[oh, ow, f], out)
}

/// Gradients of a convolution. `grad_input` is skipped (returned as `None`)
/// when `need_input_grad` is false, which saves the most expensive pass for
/// the first layer.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Tensor<T>)> {
    let (h, w, c) = dims3(input, "conv2d backward")?;
    let (k, f) = match *kernels.shape() {
        [k1, _, _, f] => (k1, f),
        _ => {
            return Err(NnError::ShapeMismatch {
                op: "conv2d backward",
                left: input.shape().to_vec(),
                right: kernels.shape().to_vec(),
            })
        }
    };
    let (oh, ow) = (h - k + 1, w - k + 1);
    if grad_out.shape() != [oh, ow, f] {
        return Err(NnError::ShapeMismatch {
            op: "conv2d backward",
            left: vec![oh, ow, f],
            right: grad_out.shape().to_vec(),
        });
    }
    let x = input.data();
    let g = grad_out.data();
    let kw = kernels.data();
    let mut gk = vec![0.0f64; kernels.len()];
    let mut gb = vec![0.0f64; f];
    let mut gx = if need_input_grad {
        Some(vec![0.0f64; input.len()])
    } else {
        None
    };
    for y in 0..oh {
        for xo in 0..ow {
            let gro = &g[(y * ow + xo) * f..(y * ow + xo + 1) * f];
            for (b, &gv) in gb.iter_mut().zip(gro) {
                *b += gv.widen();
            }
            for ky in 0..k {
                for kx in 0..k {
                    let in_base = ((y + ky) * w + xo + kx) * c;
                    let k_base = (ky * k + kx) * c * f;
                    for ci in 0..c {
                        let v = x[in_base + ci].widen();
                        let off = k_base + ci * f;
                        let mut dx = 0.0;
                        for fi in 0..f {
                            let gv = gro[fi].widen();
                            gk[off + fi] += v * gv;
                            dx += kw[off + fi].widen() * gv;
                        }
                        if let Some(gx) = gx.as_mut() {
                            gx[in_base + ci] += dx;
                        }
                    }
                }
            }
        }
    }
    let to_t = |v: Vec<f64>| v.into_iter().map(T::narrow).collect::<Vec<T>>();
    Ok((
        gx.map(|v| Tensor::new(input.shape(), to_t(v))).transpose()?,
        Tensor::new(kernels.shape(), to_t(gk))?,
        Tensor::new(&[f], to_t(gb))?,
    ))
}

/// Winner positions of a max-pool: for every output cell, the flat index of
/// the input element that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolMask {
    pub input_shape: Vec<usize>,
    pub winners: Vec<usize>,
}

/// Non-overlapping 2×2 max-pool. A trailing odd row or column is dropped.
/// Ties go to the first element in row-major window order.
pub fn maxpool2_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolMask)> {
    let (h, w, c) = dims3(input, "maxpool2")?;
    if h < 2 || w < 2 {
        return Err(NnError::PoolTooSmall {
            height: h,
            width: w,
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut winners = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for xo in 0..ow {
            for ci in 0..c {
                let mut best_idx = ((2 * y) * w + 2 * xo) * c + ci;
                let mut best = x[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * y + dy) * w + 2 * xo + dx) * c + ci;
                    if x[idx] > best {
                        best = x[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                winners.push(best_idx);
            }
        }
    }
    Ok((
        Tensor::new(&[oh, ow, c], out)?,
        PoolMask {
            input_shape: input.shape().to_vec(),
            winners,
        },
    ))
}

pub fn maxpool2_backward<T: Real>(mask: &PoolMask, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.len() != mask.winners.len() {
        return Err(NnError::ShapeMismatch {
            op: "maxpool2 backward",
            left: mask.input_shape.clone(),
            right: grad_out.shape().to_vec(),
        });
    }
    let mut gx = Tensor::zeros(&mask.input_shape)?;
    let data = gx.data_mut();
    for (&idx, &g) in mask.winners.iter().zip(grad_out.data()) {
        data[idx] = data[idx] + g;
    }
    Ok(gx)
}

/// Fully connected layer over the flattened input: `out_j = Σ_i x_i·W_ij + b_j`.
pub fn dense_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, m) = match *weights.shape() {
        [n, m] if n == input.len() && bias.shape() == [m] => (n, m),
        _ => {
            return Err(NnError::ShapeMismatch {
                op: "dense",
                left: input.shape().to_vec(),
                right: weights.shape().to_vec(),
            })
        }
    };
    let w = weights.data();
    let mut acc: Vec<f64> = bias.data().iter().map(|b| b.widen()).collect();
    for (i, &xi) in input.data().iter().enumerate() {
        let xi = xi.widen();
        if xi == 0.0 {
            continue;
        }
        for (a, &wij) in acc.iter_mut().zip(&w[i * m..(i + 1) * m]) {
            *a += xi * wij.widen();
        }
    }
    debug_assert_eq!(w.len(), n * m);
    Tensor::new(&[m], acc.into_iter().map(T::narrow).collect())
}

/// Returns `(grad_input, grad_weights, grad_bias)`; `grad_input` has the
/// input's (possibly multi-axis) shape.
pub fn dense_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, m) = match *weights.shape() {
        [n, m] if n == input.len() && grad_out.len() == m => (n, m),
        _ => {
            return Err(NnError::ShapeMismatch {
                op: "dense backward",
                left: weights.shape().to_vec(),
                right: grad_out.shape().to_vec(),
            })
        }
    };
    let w = weights.data();
    let g: Vec<f64> = grad_out.data().iter().map(|v| v.widen()).collect();
    let mut gw = Vec::with_capacity(n * m);
    let mut gx = Vec::with_capacity(n);
    for (i, &xi) in input.data().iter().enumerate() {
        let xi = xi.widen();
        let row = &w[i * m..(i + 1) * m];
        let mut dx = 0.0;
        for (j, &gj) in g.iter().enumerate() {
            gw.push(T::narrow(xi * gj));
            dx += row[j].widen() * gj;
        }
        gx.push(T::narrow(dx));
    }
    Ok((
        Tensor::new(input.shape(), gx)?,
        Tensor::new(&[n, m], gw)?,
        Tensor::new(&[m], grad_out.data().to_vec())?,
    ))
}

/// Max-shifted softmax in `f64`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLoss<T = f32> {
    pub probs: Vec<f64>,
    pub loss: f64,
    pub dlogits: Tensor<T>,
}

/// Softmax probabilities, cross-entropy against `true_class`, and the
/// gradient `probs − onehot` with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    true_class: usize,
) -> Result<SoftmaxLoss<T>> {
    let k = logits.len();
    if k < 2 {
        return Err(NnError::InvalidArgument(format!(
            "softmax needs at least 2 logits, got {k}"
        )));
    }
    if true_class >= k {
        return Err(NnError::ClassOutOfRange {
            class: true_class,
            classes: k,
        });
    }
    let l = logits.to_f64_vec();
    let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = l.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    let probs = softmax(&l);
    let loss = log_sum - l[true_class];
    let dlogits = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| T::narrow(if i == true_class { p - 1.0 } else { p }))
        .collect();
    Ok(SoftmaxLoss {
        probs,
        loss,
        dlogits: Tensor::new(&[k], dlogits)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64;

    fn t64(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64_slice(shape, v).unwrap()
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(sigmoid(&t64(&[1], &[0.0])).data()[0], 0.5);
    }

    #[test]
    fn sigmoid_of_two_matches_direct_formula() {
        // (1 + e^-2)^-1 evaluated independently
        let expected = 1.0 / (1.0 + std::f64::consts::E.powi(-2));
        let got = sigmoid(&t64(&[1], &[2.0])).data()[0];
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
        assert!((expected - 0.880_797_077_977_882_3).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_reflection_identity() {
        let mut rng = XorShift64::new(11);
        for _ in 0..1000 {
            let x = rng.uniform(-40.0, 40.0);
            let s = sigmoid_scalar(x);
            assert!((s - (1.0 - sigmoid_scalar(-x))).abs() < 1e-7);
        }
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        let big = Tensor::<f32>::new(&[4], vec![-1e30, -1000.0, 1000.0, 1e30]).unwrap();
        let s = sigmoid(&big);
        assert!(s.all_finite());
        assert!(s.data()[0] >= 0.0 && s.data()[0] < 1e-37);
        assert_eq!(s.data()[3], 1.0);
        let moderate = Tensor::<f64>::from_f64_slice(&[2], &[-36.0, 36.0]).unwrap();
        // strictly inside (0, 1) until 1 - σ drops below the f64 ulp
        assert!(sigmoid(&moderate).data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn sigmoid_derivative_values() {
        let d = sigmoid_derivative(&t64(&[3], &[0.5, 1e-9, 1.0 - 1e-9]));
        assert_eq!(d.data()[0], 0.25);
        assert!(d.data()[1] < 1e-8 && d.data()[2] < 1e-8);
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let input = t64(&[3, 4, 1], &(0..12).map(f64::from).collect::<Vec<_>>());
        let k = t64(&[1, 1, 1, 1], &[1.0]);
        let b = t64(&[1], &[0.0]);
        assert_eq!(conv2d_forward(&input, &k, &b).unwrap(), input);
    }

    #[test]
    fn conv_valid_shape() {
        let input = Tensor::<f32>::zeros(&[4, 4, 1]).unwrap();
        let k = Tensor::<f32>::zeros(&[3, 3, 1, 5]).unwrap();
        let b = Tensor::<f32>::zeros(&[5]).unwrap();
        assert_eq!(conv2d_forward(&input, &k, &b).unwrap().shape(), &[2, 2, 5]);
    }

    #[test]
    fn conv_channel_mismatch_names_shapes() {
        let input = Tensor::<f32>::zeros(&[4, 4, 2]).unwrap();
        let k = Tensor::<f32>::zeros(&[3, 3, 1, 5]).unwrap();
        let b = Tensor::<f32>::zeros(&[5]).unwrap();
        let err = conv2d_forward(&input, &k, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[4, 4, 2]") && msg.contains("[3, 3, 1, 5]"), "{msg}");
        let big = Tensor::<f32>::zeros(&[5, 5, 2, 1]).unwrap();
        let small = Tensor::<f32>::zeros(&[4, 4, 2]).unwrap();
        assert!(conv2d_forward(&small, &big, &Tensor::zeros(&[1]).unwrap()).is_err());
    }

    #[test]
    fn maxpool_ramp() {
        let input = t64(&[4, 4, 1], &(1..=16).map(f64::from).collect::<Vec<_>>());
        let (out, mask) = maxpool2_forward(&input).unwrap();
        assert_eq!(out.data(), &[6.0, 8.0, 14.0, 16.0]);
        assert_eq!(mask.winners, vec![5, 7, 13, 15]);
    }

    #[test]
    fn maxpool_ties_pick_first() {
        let input = t64(&[2, 2, 1], &[3.0; 4]);
        let (out, mask) = maxpool2_forward(&input).unwrap();
        assert_eq!(out.data(), &[3.0]);
        assert_eq!(mask.winners, vec![0]);
    }

    #[test]
    fn maxpool_floor_and_minimum() {
        let input = Tensor::<f32>::zeros(&[5, 5, 1]).unwrap();
        assert_eq!(maxpool2_forward(&input).unwrap().0.shape(), &[2, 2, 1]);
        let thin = Tensor::<f32>::zeros(&[1, 5, 1]).unwrap();
        assert_eq!(
            maxpool2_forward(&thin).unwrap_err(),
            NnError::PoolTooSmall {
                height: 1,
                width: 5
            }
        );
    }

    #[test]
    fn maxpool_backward_routes_to_winners() {
        let input = t64(&[2, 4, 1], &[1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 9.0]);
        let (_, mask) = maxpool2_forward(&input).unwrap();
        let g = maxpool2_backward(&mask, &t64(&[1, 2, 1], &[10.0, 20.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 10.0, 0.0, 0.0, 0.0, 0.0, 20.0, 0.0]);
    }

    #[test]
    fn dense_identity_and_bias() {
        let x = t64(&[3], &[1.0, -2.0, 3.0]);
        let eye = t64(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let zero_b = t64(&[3], &[0.0; 3]);
        assert_eq!(dense_forward(&x, &eye, &zero_b).unwrap(), x);
        let b = t64(&[3], &[0.5, 0.25, -1.0]);
        let zx = t64(&[3], &[0.0; 3]);
        assert_eq!(dense_forward(&zx, &eye, &b).unwrap(), b);
        assert!(dense_forward(&t64(&[2], &[1.0, 1.0]), &eye, &b).is_err());
    }

    #[test]
    fn softmax_uniform_case() {
        let l = t64(&[7], &[0.3; 7]);
        let s = softmax_cross_entropy(&l, 2).unwrap();
        for p in &s.probs {
            assert!((p - 1.0 / 7.0).abs() < 1e-15);
        }
        assert!((s.loss - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let l = t64(&[2], &[1000.0, 0.0]);
        let s = softmax_cross_entropy(&l, 1).unwrap();
        assert_eq!(s.probs[0], 1.0);
        assert!(s.probs[1] >= 0.0 && s.probs[1] < 1e-300);
        assert!((s.loss - 1000.0).abs() < 1e-9);
        assert!(s.dlogits.all_finite());
    }

    #[test]
    fn softmax_rejects_bad_arguments() {
        assert!(softmax_cross_entropy(&t64(&[1], &[0.0]), 0).is_err());
        assert_eq!(
            softmax_cross_entropy(&t64(&[3], &[0.0; 3]), 3).unwrap_err(),
            NnError::ClassOutOfRange {
                class: 3,
                classes: 3
            }
        );
    }

    #[test]
    fn softmax_gradient_matches_central_difference() {
        let mut rng = XorShift64::new(5);
        let eps = 1e-3;
        for _ in 0..20 {
            let logits: Vec<f64> = (0..7).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let class = rng.below(7);
            let s = softmax_cross_entropy(&t64(&[7], &logits), class).unwrap();
            for i in 0..7 {
                let mut up = logits.clone();
                up[i] += eps;
                let mut down = logits.clone();
                down[i] -= eps;
                let lu = softmax_cross_entropy(&t64(&[7], &up), class).unwrap().loss;
                let ld = softmax_cross_entropy(&t64(&[7], &down), class).unwrap().loss;
                let numeric = (lu - ld) / (2.0 * eps);
                assert!((numeric - s.dlogits.data()[i]).abs() < 1e-4);
            }
        }
    }
}
