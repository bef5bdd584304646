//! Central finite differences. A test oracle for the tape; training never calls it.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `(f(p + h·eᵢ) − f(p − h·eᵢ)) / 2h` for every coordinate of every tensor in `params`.
pub fn grad_finite_diff<T, F>(mut f: F, params: &[Tensor<T>], h: T) -> Vec<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&[Tensor<T>]) -> T,
{
    assert!(h > T::zero(), "finite-difference step must be positive");
    let mut work = params.to_vec();
    let two_h = h + h;
    let mut out = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut g = Tensor::zeros_like(&params[t]);
        for i in 0..params[t].len() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + h;
            let up = f(&work);
            work[t].data_mut()[i] = orig - h;
            let down = f(&work);
            work[t].data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / two_h;
        }
        out.push(g);
    }
    out
}

/// Worst mixed error between two gradient sets: relative error where the
/// reference magnitude is at least `abs_floor`, absolute error below it,
/// each normalized by its own tolerance. A value `<= 1` means "within tolerance".
pub fn gradient_error_ratio<T: Scalar>(
    analytic: &[Tensor<T>],
    numeric: &[Tensor<T>],
    rel_tol: T,
    abs_tol: T,
    abs_floor: T,
) -> T {
    let mut worst = T::zero();
    for (a, n) in analytic.iter().zip(numeric) {
        for (&x, &y) in a.data().iter().zip(n.data()) {
            let scale = x.abs().max(y.abs());
            let ratio = if scale < abs_floor {
                (x - y).abs() / abs_tol
            } else {
                (x - y).abs() / scale / rel_tol
            };
            worst = worst.max(ratio);
        }
    }
    worst
}
