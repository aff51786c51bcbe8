//! Classical fixed-step fourth-order Runge-Kutta.

/// Scratch buffers for [`rk4_step`], reused across steps.
#[derive(Debug, Clone, Default)]
pub struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// Advances `x` by `dt` under `f(x, dx)`.
pub fn rk4_step(x: &mut [f64], dt: f64, scratch: &mut Rk4Scratch, mut f: impl FnMut(&[f64], &mut [f64])) {
    let n = x.len();
    if scratch.k1.len() != n {
        *scratch = Rk4Scratch::new(n);
    }
    let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;
    f(x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(tmp, k4);
    for i in 0..n {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Index of the first non-finite entry.
pub fn first_non_finite(x: &[f64]) -> Option<usize> {
    x.iter().position(|v| !v.is_finite())
}
