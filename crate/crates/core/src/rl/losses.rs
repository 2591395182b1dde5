//! IQL losses with their gradients with respect to network parameters.
//! Every function takes already standardized inputs.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::nn::{Grads, Mlp};
use crate::policy::STD_FLOOR;
use crate::scalar::Scalar;

/// Mean over the batch of `|tau - 1(u < 0)| * u^2`.
pub fn expectile_loss<T: Scalar>(u: ArrayView1<T>, tau: T) -> T {
    if u.is_empty() {
        return T::zero();
    }
    let n = T::lit(u.len() as f64);
    u.iter()
        .map(|&x| expectile_weight(x, tau) * x * x)
        .sum::<T>()
        / n
}

#[inline]
fn expectile_weight<T: Scalar>(u: T, tau: T) -> T {
    if u < T::zero() {
        T::one() - tau
    } else {
        tau
    }
}

/// `min(exp(beta * adv), clip)`, floored at the smallest normal value so
/// weights stay strictly positive.
pub fn awr_weights<T: Scalar>(adv: ArrayView1<T>, beta: T, clip: T) -> Array1<T> {
    adv.mapv(|a| (beta * a).exp().min(clip).max(T::min_positive_value()))
}

/// Single-output network evaluated as a column.
pub fn scalar_head<T: Scalar>(net: &Mlp<T>, x: ArrayView2<T>) -> Array1<T> {
    net.forward(x).column(0).to_owned()
}

/// Observations with the action appended as the last column.
pub fn with_action<T: Scalar>(obs: ArrayView2<T>, actions: ArrayView1<T>) -> Array2<T> {
    let a = actions.insert_axis(Axis(1));
    ndarray::concatenate(Axis(1), &[obs, a]).expect("row counts match")
}

/// Expectile regression of `v(x)` toward `target`.
pub fn value_loss<T: Scalar>(
    v: &Mlp<T>,
    x: ArrayView2<T>,
    target: ArrayView1<T>,
    tau: T,
) -> (T, Grads<T>) {
    let tape = v.forward_tape(x);
    let pred = tape.output().column(0);
    let u = &target - &pred;
    let loss = expectile_loss(u.view(), tau);
    let n = T::lit(u.len() as f64);
    let two = T::lit(2.0);
    let grad = u
        .mapv(|ui| -two * expectile_weight(ui, tau) * ui / n)
        .insert_axis(Axis(1));
    (loss, v.backward(&tape, grad))
}

/// Mean squared error of `q(xa)` against `target`.
pub fn critic_loss<T: Scalar>(
    q: &Mlp<T>,
    xa: ArrayView2<T>,
    target: ArrayView1<T>,
) -> (T, Grads<T>) {
    let tape = q.forward_tape(xa);
    let diff = &tape.output().column(0) - &target;
    let n = T::lit(diff.len() as f64);
    let loss = diff.iter().map(|&d| d * d).sum::<T>() / n;
    let two = T::lit(2.0);
    let grad = diff.mapv(|d| two * d / n).insert_axis(Axis(1));
    (loss, q.backward(&tape, grad))
}

/// Advantage-weighted negative log-likelihood of `actions` under the
/// Gaussian head of `actor`.
pub fn actor_loss<T: Scalar>(
    actor: &Mlp<T>,
    x: ArrayView2<T>,
    actions: ArrayView1<T>,
    weights: ArrayView1<T>,
) -> (T, Grads<T>) {
    let tape = actor.forward_tape(x);
    let z = tape.output();
    let b = z.nrows();
    let n = T::lit(b as f64);
    let floor = T::lit(STD_FLOOR);
    let half_ln_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    let mut loss = T::zero();
    let mut grad = Array2::<T>::zeros((b, 2));
    for i in 0..b {
        let (z0, z1) = (z[[i, 0]], z[[i, 1]]);
        let mu = z0.tanh();
        let sp = z1.softplus();
        let sigma = sp.max(floor);
        let (a, w) = (actions[i], weights[i]);
        let d = a - mu;
        let s2 = sigma * sigma;
        let logp = -d * d / (T::lit(2.0) * s2) - sigma.ln() - half_ln_2pi;
        loss -= w * logp;
        let dmu = -w * d / s2 / n;
        let dsigma = -w * (d * d / (s2 * sigma) - T::one() / sigma) / n;
        grad[[i, 0]] = dmu * (T::one() - mu * mu);
        grad[[i, 1]] = if sp > floor {
            dsigma * z1.sigmoid()
        } else {
            T::zero()
        };
    }
    (loss / n, actor.backward(&tape, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn expectile_examples() {
        assert_eq!(expectile_loss(array![1.0].view(), 0.5), 0.5);
        assert!((expectile_loss(array![-1.0f64].view(), 0.7) - 0.3).abs() < 1e-15);
        assert_eq!(expectile_loss(array![0.0, 0.0, 0.0].view(), 0.9), 0.0);
    }

    #[test]
    fn awr_clip() {
        let w = awr_weights(array![10.0, 0.0, -100.0].view(), 8.0, 100.0);
        assert_eq!(w[0], 100.0);
        assert_eq!(w[1], 1.0);
        assert!(w[2] > 0.0);
    }

    #[test]
    fn action_column_appended() {
        let xa = with_action(
            array![[1.0, 2.0], [3.0, 4.0]].view(),
            array![0.5, -0.5].view(),
        );
        assert_eq!(xa, array![[1.0, 2.0, 0.5], [3.0, 4.0, -0.5]]);
    }
}
