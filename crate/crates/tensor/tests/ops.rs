use cbnr_tensor::{ReduceOp, Tape, Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Direct sliding-window cross-correlation.
fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) -> Vec<f64> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let mut out = Vec::new();
    for s in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let y = (oy * stride + i) as isize - pad as isize;
                                let xx = (ox * stride + j) as isize - pad as isize;
                                if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < w {
                                    acc += x.at(&[s, ic, y as usize, xx as usize]) * k.at(&[oc, ic, i, j]);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

#[test]
fn matmul_examples() {
    let mut tape = Tape::new();
    let a = tape.leaf(&t(&[2, 2], &[3.0, -1.0, 0.5, 2.0]));
    let eye = tape.leaf(&t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let r = tape.matmul(eye, a).unwrap();
    assert_eq!(tape.value(r), tape.value(a));

    let m = tape.leaf(&t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let v = tape.leaf(&t(&[2, 1], &[0.0, 1.0]));
    let r = tape.matmul(m, v).unwrap();
    assert_eq!(tape.shape(r), &[2, 1]);
    assert_eq!(tape.value(r), &[2.0, 4.0]);

    let z = tape.leaf(&Tensor::zeros(vec![3, 2]));
    let any = tape.leaf(&t(&[2, 4], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
    let r = tape.matmul(z, any).unwrap();
    assert!(tape.value(r).iter().all(|&v| v == 0.0));
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(&Tensor::zeros(vec![2, 3]));
    let b = tape.leaf(&Tensor::zeros(vec![2, 3]));
    let err = tape.matmul(a, b).unwrap_err();
    assert_eq!(err, TensorError::Shape { op: "matmul", lhs: vec![2, 3], rhs: vec![2, 3] });
    assert!(err.to_string().contains("[2, 3]"));
}

#[test]
fn conv_identity_and_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[1, 1, 4, 5], &mut rng);
    let mut tape = Tape::new();
    let xv = tape.leaf(&x);
    let one = tape.leaf(&Tensor::ones(vec![1, 1, 1, 1]));
    let y = tape.conv2d(xv, one, 1, 0).unwrap();
    assert_eq!(tape.value(y), x.data());

    let ones = tape.leaf(&Tensor::ones(vec![1, 1, 3, 3]));
    let k = tape.leaf(&Tensor::ones(vec![1, 1, 3, 3]));
    let y = tape.conv2d(ones, k, 1, 0).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 1, 1]);
    assert_eq!(tape.value(y), &[9.0]);
}

#[test]
fn conv_matches_sliding_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[1, 1, 4, 4], &mut rng);
    let k = random(&[1, 1, 3, 3], &mut rng);
    let mut tape = Tape::new();
    let (xv, kv) = (tape.leaf(&x), tape.leaf(&k));
    let y = tape.conv2d(xv, kv, 1, 0).unwrap();
    for (a, b) in tape.value(y).iter().zip(naive_conv(&x, &k, 1, 0)) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn conv_geometry_errors() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(&Tensor::zeros(vec![1, 1, 2, 2]));
    let k = tape.leaf(&Tensor::zeros(vec![1, 1, 3, 3]));
    assert!(matches!(tape.conv2d(x, k, 1, 0), Err(TensorError::Geometry { .. })));
    assert!(matches!(tape.conv2d(x, k, 0, 1), Err(TensorError::Geometry { .. })));
    let k2 = tape.leaf(&Tensor::zeros(vec![1, 2, 1, 1]));
    assert!(matches!(tape.conv2d(x, k2, 1, 0), Err(TensorError::Shape { .. })));
}

#[test]
fn elementwise_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t(&[2], &[-1.0, 2.0]));
    let r = tape.relu(x);
    assert_eq!(tape.value(r), &[0.0, 2.0]);
    let z = tape.leaf(&t(&[1], &[0.0]));
    let s = tape.sigmoid(z);
    let th = tape.tanh(z);
    assert_eq!(tape.value(s), &[0.5]);
    assert_eq!(tape.value(th), &[0.0]);
    let a = tape.leaf(&t(&[2], &[1.0, 2.0]));
    let b = tape.leaf(&t(&[2], &[3.0, 4.0]));
    let sum = tape.add(a, b).unwrap();
    assert_eq!(tape.value(sum), &[4.0, 6.0]);
    let bad = tape.leaf(&t(&[3], &[1.0, 2.0, 3.0]));
    assert!(matches!(tape.add(a, bad), Err(TensorError::Shape { .. })));
}

#[test]
fn per_channel_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[2, 3, 2, 2], &mut rng);
    let gamma = random(&[2, 3, 1, 1], &mut rng);
    let mut tape = Tape::new();
    let (xv, gv) = (tape.leaf(&x), tape.leaf(&gamma));
    let y = tape.mul(xv, gv).unwrap();
    for n in 0..2 {
        for c in 0..3 {
            for h in 0..2 {
                for w in 0..2 {
                    let flat = ((n * 3 + c) * 2 + h) * 2 + w;
                    assert_eq!(tape.value(y)[flat], x.at(&[n, c, h, w]) * gamma.at(&[n, c, 0, 0]));
                }
            }
        }
    }
}

#[test]
fn reduce_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t(&[3], &[1.0, 2.0, 3.0]));
    let m = tape.reduce(ReduceOp::Mean, x, &[0]).unwrap();
    assert_eq!(tape.value(m), &[2.0]);
    let v = tape.reduce(ReduceOp::Var, x, &[0]).unwrap();
    assert!((tape.value(v)[0] - 2.0 / 3.0).abs() < 1e-15);
    let ones = tape.leaf(&t(&[3], &[1.0, 1.0, 1.0]));
    let v = tape.reduce(ReduceOp::Var, ones, &[0]).unwrap();
    assert_eq!(tape.value(v), &[0.0]);
    assert!(matches!(tape.reduce(ReduceOp::Sum, x, &[]), Err(TensorError::Domain { .. })));
    assert!(matches!(tape.reduce(ReduceOp::Sum, x, &[1]), Err(TensorError::Index { .. })));

    let grid = tape.leaf(&t(&[2, 3], &[1.0, 5.0, 5.0, -2.0, 0.0, -1.0]));
    let mx = tape.reduce(ReduceOp::Max, grid, &[1]).unwrap();
    assert_eq!(tape.shape(mx), &[2, 1]);
    assert_eq!(tape.value(mx), &[5.0, 0.0]);
    let s = tape.reduce(ReduceOp::Sum, grid, &[0, 1]).unwrap();
    assert_eq!(tape.value(s), &[8.0]);
}

#[test]
fn max_gradient_goes_to_first_argmax() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t(&[4], &[1.0, 3.0, 3.0, 0.0]).with_grad());
    let m = tape.reduce(ReduceOp::Max, x, &[0]).unwrap();
    let g = tape.backward(m).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn global_max_pool_examples() {
    let mut tape = Tape::new();
    let c = tape.leaf(&Tensor::full(vec![1, 1, 3, 3], 2.5));
    let p = tape.global_max_pool(c).unwrap();
    assert_eq!(tape.value(p), &[2.5]);
    let mut spike = Tensor::zeros(vec![1, 1, 3, 3]);
    spike.data_mut()[5] = 5.0;
    let s = tape.leaf(&spike.with_grad());
    let p = tape.global_max_pool(s).unwrap();
    assert_eq!(tape.value(p), &[5.0]);
    let loss = tape.sum_all(p).unwrap();
    let g = tape.backward(loss).unwrap();
    let expected: Vec<f64> = (0..9).map(|i| if i == 5 { 1.0 } else { 0.0 }).collect();
    assert_eq!(g.wrt(s).unwrap(), expected.as_slice());
}

#[test]
fn softmax_cross_entropy_examples() {
    let mut tape = Tape::<f64>::new();
    let uniform = tape.leaf(&Tensor::zeros(vec![1, 4]));
    let l = tape.softmax_cross_entropy(uniform, &[2]).unwrap();
    assert!((tape.value(l)[0] - 4f64.ln()).abs() < 1e-12);

    let margin = tape.leaf(&t(&[1, 3], &[0.0, 200.0, 0.0]));
    let l = tape.softmax_cross_entropy(margin, &[1]).unwrap();
    assert!(tape.value(l)[0] < 1e-12);

    let rows: [[f64; 3]; 2] = [[0.3, -1.2, 2.0], [1.5, 0.1, -0.4]];
    let targets = [2usize, 1];
    let logits = tape.leaf(&t(&[2, 3], &[0.3, -1.2, 2.0, 1.5, 0.1, -0.4]));
    let l = tape.softmax_cross_entropy(logits, &targets).unwrap();
    let direct: f64 = rows
        .iter()
        .zip(targets)
        .map(|(r, t)| -(r[t].exp() / r.iter().map(|v: &f64| v.exp()).sum::<f64>()).ln())
        .sum::<f64>()
        / 2.0;
    assert!((tape.value(l)[0] - direct).abs() < 1e-6);

    assert!(matches!(tape.softmax_cross_entropy(logits, &[0, 3]), Err(TensorError::Index { .. })));
}

#[test]
fn backward_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t(&[3], &[0.5, -1.0, 4.0]).with_grad());
    let s = tape.sum_all(x).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[1.0, 1.0, 1.0]);

    let mut tape = Tape::new();
    let x = tape.leaf(&t(&[2], &[1.0, 2.0]).with_grad());
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum_all(sq).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[2.0, 4.0]);
}

#[test]
fn backward_rejects_non_scalar_and_empty() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t(&[2], &[1.0, 2.0]).with_grad());
    assert!(matches!(tape.backward(x), Err(TensorError::Contract(_))));
}

#[test]
fn named_params_bound_once_accumulate() {
    let w = t(&[1], &[3.0]).with_grad();
    let mut tape = Tape::new();
    let a = tape.param("w", &w);
    let b = tape.param("w", &w);
    assert_eq!(a, b);
    let p = tape.mul(a, b).unwrap();
    let mut g = tape.backward(p).unwrap();
    let mut target = w.clone();
    g.write_into("w", &mut target);
    assert_eq!(target.grad.unwrap(), vec![6.0]);
}

#[test]
fn forward_is_deterministic_and_never_aliases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[2, 3, 5, 5], &mut rng);
    let k = random(&[4, 3, 3, 3], &mut rng);
    let bias = random(&[1, 4, 1, 1], &mut rng);
    let run = || {
        let mut tape = Tape::new();
        let (xv, kv, bv) = (tape.leaf(&x), tape.leaf(&k), tape.leaf(&bias));
        let y = tape.conv2d(xv, kv, 2, 1).unwrap();
        let y = tape.add(y, bv).unwrap();
        let y = tape.relu(y);
        tape.value(y).iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());

    let mut tape = Tape::new();
    let xv = tape.leaf(&x);
    let r = tape.reshape(xv, &[2, 75]).unwrap();
    let mut out = tape.tensor(r);
    out.data_mut()[0] += 100.0;
    assert_eq!(tape.value(xv), x.data());
}

mod conv_reference {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn conv_equals_quadruple_loop(
            n in 1usize..=2, c in 1usize..=3, h in 1usize..=6, w in 1usize..=6,
            o in 1usize..=3, kh in 1usize..=3, kw in 1usize..=3,
            stride in 1usize..=2, pad in 0usize..=1, seed in any::<u64>(),
        ) {
            prop_assume!(kh <= h + 2 * pad && kw <= w + 2 * pad);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&[n, c, h, w], &mut rng);
            let k = random(&[o, c, kh, kw], &mut rng);
            let mut tape = Tape::new();
            let (xv, kv) = (tape.leaf(&x), tape.leaf(&k));
            let y = tape.conv2d(xv, kv, stride, pad).unwrap();
            let expected = naive_conv(&x, &k, stride, pad);
            prop_assert_eq!(tape.value(y).len(), expected.len());
            for (a, b) in tape.value(y).iter().zip(expected) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
