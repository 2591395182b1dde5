//! Central finite-difference check of analytic parameter gradients.

use rand::Rng;

use crate::nn::{Grads, Mlp};

/// Step of the central difference.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Denominator floor of [`relative_error`], so gradients that are zero up to
/// rounding do not blow up the ratio.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Largest relative error between `loss`'s analytic gradient and central
/// differences over `samples` randomly chosen parameters (with replacement
/// when the network is smaller).
pub fn grad_check<R, F>(net: &Mlp<f64>, loss: F, samples: usize, rng: &mut R) -> f64
where
    R: Rng,
    F: Fn(&Mlp<f64>) -> (f64, Grads<f64>),
{
    let (_, grads) = loss(net);
    let n = net.num_params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let i = rng.random_range(0..n);
        let p = net.param(i);
        probe.set_param(i, p + GRAD_CHECK_STEP);
        let up = loss(&probe).0;
        probe.set_param(i, p - GRAD_CHECK_STEP);
        let down = loss(&probe).0;
        probe.set_param(i, p);
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        worst = worst.max(relative_error(grads.get(i), numeric));
    }
    worst
}
