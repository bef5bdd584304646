use std::sync::Arc;

use gated_gin::finite_diff::{grad_finite_diff, gradient_error_ratio};
use gated_gin::mlp::{mlp_forward, MlpParams};
use gated_gin::tape::Tape;
use gated_gin::Tensor64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor64 {
    let n = shape.iter().product();
    Tensor64::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect()).unwrap()
}

/// A scalar built from every differentiable tape op.
fn composite(p: &[Tensor64], ops: &[u8], grad: bool) -> (f64, Vec<Tensor64>) {
    let mut tape = Tape::new();
    let vars: Vec<_> = p.iter().map(|t| tape.param(t.clone())).collect();
    let (x, w, b, s, other) = (vars[0], vars[1], vars[2], vars[3], vars[4]);
    let mut h = tape.linear(x, w, b).unwrap();
    for &op in ops {
        h = match op % 7 {
            0 => tape.sigmoid(h),
            1 => tape.tanh(h),
            2 => tape.relu(h),
            3 => tape.hadamard(h, other).unwrap(),
            4 => tape.scale(h, s).unwrap(),
            5 => {
                let one_minus = tape.one_minus(h);
                tape.sub(one_minus, other).unwrap()
            }
            _ => {
                let idx: Arc<[usize]> = vec![2, 0, 0].into();
                let g = tape.gather_rows(h, idx.clone()).unwrap();
                tape.scatter_add_rows(g, idx, 3).unwrap()
            }
        };
    }
    let both = tape.concat_cols(&[h, other]).unwrap();
    let rows = tape.sum_rows(both);
    let ce = tape.cross_entropy(rows, 1).unwrap();
    let mse = tape.mean_squared_error(h, &Tensor64::full(&[3, 2], 0.3)).unwrap();
    let loss = tape.add(ce, mse).unwrap();
    let value = tape.value(loss).data()[0];
    if !grad {
        return (value, vec![]);
    }
    let g = tape.backward(loss).unwrap();
    (value, vars.iter().zip(p).map(|(&v, t)| g.get_or_zeros(v, t)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tape_matches_central_differences(seed in any::<u64>(), ops in prop::collection::vec(any::<u8>(), 0..5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = vec![
            uniform(&mut rng, &[3, 2]),
            uniform(&mut rng, &[2, 2]),
            uniform(&mut rng, &[2]),
            uniform(&mut rng, &[1]),
            uniform(&mut rng, &[3, 2]),
        ];
        let (_, analytic) = composite(&params, &ops, true);
        let numeric = grad_finite_diff(|p: &[Tensor64]| composite(p, &ops, false).0, &params, 1e-5);
        let ratio = gradient_error_ratio(&analytic, &numeric, 1e-4, 1e-7, 1e-3);
        prop_assert!(ratio <= 1.0, "error ratio {}", ratio);
    }

    #[test]
    fn cross_entropy_gradient(logits in prop::collection::vec(-5.0f64..5.0, 2..6), pick in any::<usize>()) {
        let label = pick % logits.len();
        let x = Tensor64::from_vec(logits);
        let f = |p: &[Tensor64]| {
            let mut tape = Tape::new();
            let v = tape.constant(p[0].clone());
            let l = tape.cross_entropy(v, label).unwrap();
            tape.value(l).data()[0]
        };
        let mut tape = Tape::new();
        let v = tape.param(x.clone());
        let l = tape.cross_entropy(v, label).unwrap();
        let analytic = tape.backward(l).unwrap().get_or_zeros(v, &x);
        let numeric = grad_finite_diff(f, std::slice::from_ref(&x), 1e-5);
        let ratio = gradient_error_ratio(&[analytic], &numeric, 1e-6, 1e-9, 1e-3);
        prop_assert!(ratio <= 1.0, "error ratio {}", ratio);
    }

    #[test]
    fn sigmoid_symmetry(b in -50.0f64..=50.0) {
        let t = Tensor64::from_vec(vec![b, -b]).sigmoid();
        prop_assert!(t.data()[0] > 0.0 && t.data()[0] <= 1.0);
        prop_assert!((t.data()[0] + t.data()[1] - 1.0).abs() <= f64::EPSILON);
    }
}

#[test]
fn two_layer_mlp_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mlp = MlpParams::<f64>::glorot(&mut rng, &[3, 5, 2]).unwrap();
    let x = uniform(&mut rng, &[4, 3]);
    let mut params = Vec::new();
    mlp.for_each("m", &mut |_, t| params.push(t.clone()));
    let loss_of = |p: &[Tensor64]| {
        let mut m = mlp.clone();
        let mut i = 0;
        m.for_each_mut("m", &mut |_, t| {
            *t = p[i].clone();
            i += 1;
        });
        mlp_forward(&m, &x).unwrap().map(|v| v * v).sum()
    };
    let mut tape = Tape::new();
    let mut b = gated_gin::bind::Binder::params(&mut tape, None);
    let vars = mlp.bind(&mut b, "m");
    let bound = b.finish();
    let xv = tape.constant(x.clone());
    let out = vars.apply(&mut tape, xv).unwrap();
    let sq = tape.hadamard(out, out).unwrap();
    let loss = tape.sum_all(sq);
    let g = tape.backward(loss).unwrap();
    let analytic: Vec<_> = bound.iter().zip(&params).map(|((_, v), p)| g.get_or_zeros(*v, p)).collect();
    let numeric = grad_finite_diff(loss_of, &params, 1e-5);
    assert!(gradient_error_ratio(&analytic, &numeric, 1e-4, 1e-7, 1e-3) <= 1.0);
}
