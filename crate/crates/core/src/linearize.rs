//! Input-output linearization of the d-axis output voltage.
//!
//! With `y = v_od` the DG has relative degree two from the droop input `V_n`:
//! `d2y/dt2 = Lf2h(x) + g * V_n` with constant `g = K_Pc K_Pv / (C_f L_f)`.
//! The observer treats `xi = Lf2h + (g - g0) V_n` as an unknown extended
//! state and the controller inverts `V_n = (z - xi_hat) / g0`.

use nalgebra::{Matrix3, RowVector3, Vector3};

use crate::error::NumericalError;
use crate::plant::{DgParams, DgState};

/// `v_od`, its rate and the commanded second derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinearizedOutputs {
    pub y1: f64,
    pub y2: f64,
    pub z: f64,
}

/// Triple integrator `[v_od, v_od', xi]` driven by `g0 * u` on the second
/// channel and observed through the first.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedModel {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub c: RowVector3<f64>,
    pub g0: f64,
}

impl ExtendedModel {
    pub fn new(g0: f64) -> Result<Self, NumericalError> {
        if !(g0.is_finite() && g0 > 0.0) {
            return Err(NumericalError::BadInputGain(g0));
        }
        Ok(Self {
            a: Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0),
            b: Vector3::new(0.0, g0, 0.0),
            c: RowVector3::new(1.0, 0.0, 0.0),
            g0,
        })
    }

    /// Model built from nominal parameters.
    pub fn from_params(nominal: &DgParams) -> Result<Self, NumericalError> {
        Self::new(lie_lg_lf_h(nominal))
    }
}

/// Drift part of `d2 v_od / dt2` with the droop frequency `omega` frozen and
/// `V_n = 0`. `v_bd` is the d-axis bus voltage in the DG's own frame.
pub fn lie_lf2_h(p: &DgParams, x: &DgState, v_bd: f64, omega: f64) -> f64 {
    let cl = p.c_f * p.l_f;
    let cc = p.c_f * p.l_c;
    let kk = p.k_pc * p.k_pv;
    -omega * omega * x.v_od
        + (2.0 * omega - p.omega_b) / p.c_f * x.i_lq
        - 2.0 * omega / p.c_f * x.i_oq
        - (p.r_f + p.k_pc) / cl * x.i_ld
        - (kk + 1.0) / cl * x.v_od
        - 1.0 / cc * x.v_od
        - kk * p.n_q / cl * x.q
        + p.k_pc * p.k_iv / cl * x.phi_d
        + p.k_ic / cl * x.gamma_d
        - p.omega_b * p.k_pc / p.l_f * x.v_oq
        + p.r_c / cc * x.i_od
        + v_bd / cc
}

/// Input gain of `d2 v_od / dt2` with respect to `V_n`.
pub fn lie_lg_lf_h(p: &DgParams) -> f64 {
    p.k_pc * p.k_pv / (p.c_f * p.l_f)
}

/// `d v_od / dt` from measured states, without differentiating `v_od`.
pub fn vdot_od(p: &DgParams, x: &DgState, omega: f64) -> f64 {
    omega * x.v_oq + (x.i_ld - x.i_od) / p.c_f
}

/// Droop input for a commanded `z`, clamped to `[0, u_max]`. The flag is set
/// when the clamp is active.
pub fn invert_input(z: f64, xi_hat: f64, g0: f64, u_max: f64) -> (f64, bool) {
    let u = (z - xi_hat) / g0;
    if u.is_nan() {
        return (0.0, true);
    }
    if u < 0.0 {
        (0.0, true)
    } else if u > u_max {
        (u_max, true)
    } else {
        (u, false)
    }
}

/// True extended state for scoring the observer: plant drift plus the input
/// gain mismatch between plant and nominal parameters.
pub fn ground_truth_xi(plant: &DgParams, nominal: &DgParams, x: &DgState, v_bd: f64, omega: f64, u: f64) -> f64 {
    lie_lf2_h(plant, x, v_bd, omega) + (lie_lg_lf_h(plant) - lie_lg_lf_h(nominal)) * u
}
