//! Large-signal model of one grid-forming DG: droop power controller, PI
//! voltage and current loops, LC filter and RL coupling branch, all in the
//! DG's own rotating `dq` frame.
//!
//! dq pairs are carried as `Complex64` with `re = d`, `im = q`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Rated angular frequency of a 50 Hz system.
pub const OMEGA_50HZ: f64 = 2.0 * std::f64::consts::PI * 50.0;

/// Physical, droop and inner-loop parameters of one DG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgParams {
    /// Frequency droop gain (rad/s per W).
    pub m_p: f64,
    /// Voltage droop gain (V per var).
    pub n_q: f64,
    /// Power measurement filter cutoff (rad/s).
    pub omega_c: f64,
    pub r_f: f64,
    pub l_f: f64,
    pub c_f: f64,
    pub r_c: f64,
    pub l_c: f64,
    pub k_pv: f64,
    pub k_iv: f64,
    pub k_pc: f64,
    pub k_ic: f64,
    /// Rated angular frequency used by the decoupling feedforwards (rad/s).
    pub omega_b: f64,
    /// Primary frequency reference (rad/s).
    pub omega_n: f64,
}

impl DgParams {
    pub const FIELD_NAMES: [&'static str; 14] = [
        "m_p", "n_q", "omega_c", "r_f", "l_f", "c_f", "r_c", "l_c", "k_pv", "k_iv", "k_pc", "k_ic", "omega_b",
        "omega_n",
    ];

    pub fn values(&self) -> [f64; 14] {
        [
            self.m_p, self.n_q, self.omega_c, self.r_f, self.l_f, self.c_f, self.r_c, self.l_c, self.k_pv,
            self.k_iv, self.k_pc, self.k_ic, self.omega_b, self.omega_n,
        ]
    }

    /// Builds a parameter set from name/value lookups, used by the config loader.
    pub fn from_lookup(mut get: impl FnMut(&str) -> Option<f64>) -> Result<Self, String> {
        let mut v = [0.0; 14];
        for (slot, name) in v.iter_mut().zip(Self::FIELD_NAMES) {
            *slot = get(name).ok_or_else(|| name.to_string())?;
        }
        Ok(Self {
            m_p: v[0],
            n_q: v[1],
            omega_c: v[2],
            r_f: v[3],
            l_f: v[4],
            c_f: v[5],
            r_c: v[6],
            l_c: v[7],
            k_pv: v[8],
            k_iv: v[9],
            k_pc: v[10],
            k_ic: v[11],
            omega_b: v[12],
            omega_n: v[13],
        })
    }

    /// Every parameter strictly positive and finite.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in Self::FIELD_NAMES.iter().zip(self.values()) {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::new(*name, format!("must be positive and finite, got {value}")));
            }
        }
        let g0 = self.input_gain();
        if !(g0.is_finite() && g0 > 0.0) {
            return Err(ConfigError::new("k_pc/k_pv/c_f/l_f", format!("input gain {g0} is not positive")));
        }
        Ok(())
    }

    /// `K_Pc K_Pv / (C_f L_f)`, the gain from `V_n` to `d^2 v_od / dt^2`.
    pub fn input_gain(&self) -> f64 {
        self.k_pc * self.k_pv / (self.c_f * self.l_f)
    }

    /// The 40 kW unit of the 4-bus test system.
    pub fn testbed_dg1() -> Self {
        Self {
            m_p: 6.28e-5,
            n_q: 0.5e-3,
            ..Self::testbed_common()
        }
    }

    /// The 27 kW unit.
    pub fn testbed_dg2() -> Self {
        Self {
            m_p: 9.42e-5,
            n_q: 0.75e-3,
            ..Self::testbed_common()
        }
    }

    /// The 20 kW units (DG3 and DG4).
    pub fn testbed_dg34() -> Self {
        Self {
            m_p: 12.56e-5,
            n_q: 1e-3,
            k_pv: 0.1,
            k_iv: 420.0,
            k_pc: 15.0,
            k_ic: 2e4,
            ..Self::testbed_common()
        }
    }

    fn testbed_common() -> Self {
        Self {
            m_p: 0.0,
            n_q: 0.0,
            omega_c: 31.41,
            r_f: 0.1,
            l_f: 1.35e-3,
            c_f: 47e-6,
            r_c: 0.02,
            l_c: 2e-3,
            k_pv: 0.05,
            k_iv: 390.0,
            k_pc: 10.5,
            k_ic: 1.6e4,
            omega_b: OMEGA_50HZ,
            omega_n: OMEGA_50HZ,
        }
    }

    /// Looks up a named preset (`testbed-dg1`, `testbed-dg2`, `testbed-dg3`, `testbed-dg4`).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "testbed-dg1" => Some(Self::testbed_dg1()),
            "testbed-dg2" => Some(Self::testbed_dg2()),
            "testbed-dg3" | "testbed-dg4" | "testbed-dg34" => Some(Self::testbed_dg34()),
            _ => None,
        }
    }
}

/// Multiplicative factors applied to the simulated plant's physical
/// parameters. Observers and controllers keep the nominal values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub r_f: f64,
    pub l_f: f64,
    pub c_f: f64,
    pub r_c: f64,
    pub l_c: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            r_f: 1.0,
            l_f: 1.0,
            c_f: 1.0,
            r_c: 1.0,
            l_c: 1.0,
        }
    }
}

impl Perturbation {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, f) in [
            ("r_f", self.r_f),
            ("l_f", self.l_f),
            ("c_f", self.c_f),
            ("r_c", self.r_c),
            ("l_c", self.l_c),
        ] {
            if !(0.5..=1.5).contains(&f) {
                return Err(ConfigError::new(name, format!("perturbation factor {f} outside [0.5, 1.5]")));
            }
        }
        Ok(())
    }

    pub fn apply(&self, p: &DgParams) -> DgParams {
        DgParams {
            r_f: p.r_f * self.r_f,
            l_f: p.l_f * self.l_f,
            c_f: p.c_f * self.c_f,
            r_c: p.r_c * self.r_c,
            l_c: p.l_c * self.l_c,
            ..*p
        }
    }
}

/// The 13 states of one DG, in the canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DgState {
    /// Frame angle relative to the common frame (rad).
    pub delta: f64,
    /// Filtered active power (W).
    pub p: f64,
    /// Filtered reactive power (var).
    pub q: f64,
    pub phi_d: f64,
    pub phi_q: f64,
    pub gamma_d: f64,
    pub gamma_q: f64,
    pub i_ld: f64,
    pub i_lq: f64,
    pub v_od: f64,
    pub v_oq: f64,
    pub i_od: f64,
    pub i_oq: f64,
}

impl DgState {
    pub const LEN: usize = 13;
    pub const NAMES: [&'static str; 13] = [
        "delta", "P", "Q", "phi_d", "phi_q", "gamma_d", "gamma_q", "i_ld", "i_lq", "v_od", "v_oq", "i_od", "i_oq",
    ];
    pub const V_OD: usize = 9;

    pub fn to_array(&self) -> [f64; 13] {
        [
            self.delta,
            self.p,
            self.q,
            self.phi_d,
            self.phi_q,
            self.gamma_d,
            self.gamma_q,
            self.i_ld,
            self.i_lq,
            self.v_od,
            self.v_oq,
            self.i_od,
            self.i_oq,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            delta: x[0],
            p: x[1],
            q: x[2],
            phi_d: x[3],
            phi_q: x[4],
            gamma_d: x[5],
            gamma_q: x[6],
            i_ld: x[7],
            i_lq: x[8],
            v_od: x[9],
            v_oq: x[10],
            i_od: x[11],
            i_oq: x[12],
        }
    }

    pub fn write_to(&self, out: &mut [f64]) {
        out[..Self::LEN].copy_from_slice(&self.to_array());
    }

    pub fn v_o(&self) -> Complex64 {
        Complex64::new(self.v_od, self.v_oq)
    }

    pub fn i_o(&self) -> Complex64 {
        Complex64::new(self.i_od, self.i_oq)
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.to_array().iter().position(|v| !v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroopSetpoints {
    pub omega: f64,
    pub v_od_star: f64,
    pub v_oq_star: f64,
}

/// Droop references for input `v_n` (the secondary control input).
pub fn droop_setpoints(params: &DgParams, state: &DgState, v_n: f64) -> DroopSetpoints {
    DroopSetpoints {
        omega: params.omega_n - params.m_p * state.p,
        v_od_star: v_n - params.n_q * state.q,
        v_oq_star: 0.0,
    }
}

/// Unfiltered `(p, q)` from output voltage and current.
pub fn instantaneous_power(state: &DgState) -> (f64, f64) {
    (
        state.v_od * state.i_od + state.v_oq * state.i_oq,
        state.v_oq * state.i_od - state.v_od * state.i_oq,
    )
}

/// Time derivative of the DG state for input `v_n`, bus voltage `v_bus`
/// (local frame) and common-frame frequency `omega_com`.
pub fn dg_derivative(params: &DgParams, x: &DgState, v_n: f64, v_bus: Complex64, omega_com: f64) -> DgState {
    let p = params;
    let sp = droop_setpoints(p, x, v_n);
    let w = sp.omega;
    let (p_inst, q_inst) = instantaneous_power(x);

    let e_vd = sp.v_od_star - x.v_od;
    let e_vq = sp.v_oq_star - x.v_oq;
    let i_ld_ref = p.k_pv * e_vd + p.k_iv * x.phi_d - p.omega_b * p.c_f * x.v_oq;
    let i_lq_ref = p.k_pv * e_vq + p.k_iv * x.phi_q + p.omega_b * p.c_f * x.v_od;

    let e_id = i_ld_ref - x.i_ld;
    let e_iq = i_lq_ref - x.i_lq;
    let v_id = p.k_pc * e_id + p.k_ic * x.gamma_d - p.omega_b * p.l_f * x.i_lq;
    let v_iq = p.k_pc * e_iq + p.k_ic * x.gamma_q + p.omega_b * p.l_f * x.i_ld;

    DgState {
        delta: w - omega_com,
        p: p.omega_c * (p_inst - x.p),
        q: p.omega_c * (q_inst - x.q),
        phi_d: e_vd,
        phi_q: e_vq,
        gamma_d: e_id,
        gamma_q: e_iq,
        i_ld: (-p.r_f * x.i_ld + v_id - x.v_od) / p.l_f + w * x.i_lq,
        i_lq: (-p.r_f * x.i_lq + v_iq - x.v_oq) / p.l_f - w * x.i_ld,
        v_od: w * x.v_oq + (x.i_ld - x.i_od) / p.c_f,
        v_oq: -w * x.v_od + (x.i_lq - x.i_oq) / p.c_f,
        i_od: (-p.r_c * x.i_od + x.v_od - v_bus.re) / p.l_c + w * x.i_oq,
        i_oq: (-p.r_c * x.i_oq + x.v_oq - v_bus.im) / p.l_c - w * x.i_od,
    }
}

/// Rotates a local-frame dq pair into the common frame.
pub fn local_to_common(delta: f64, v: Complex64) -> Complex64 {
    v * Complex64::from_polar(1.0, delta)
}

/// Rotates a common-frame DQ pair into the local frame.
pub fn common_to_local(delta: f64, v: Complex64) -> Complex64 {
    v * Complex64::from_polar(1.0, -delta)
}

/// A fixed point of [`dg_derivative`] with the given output voltage and
/// current, running at frequency `omega` with `omega_com = omega`.
///
/// Returns the state, the droop input `V_n` and the (local-frame) bus
/// voltage that hold it there.
pub fn equilibrium(params: &DgParams, v_o: Complex64, i_o: Complex64) -> (DgState, f64, Complex64) {
    let p = params;
    let j = Complex64::i();
    let mut x = DgState {
        v_od: v_o.re,
        v_oq: v_o.im,
        i_od: i_o.re,
        i_oq: i_o.im,
        ..Default::default()
    };
    let (p_inst, q_inst) = instantaneous_power(&x);
    x.p = p_inst;
    x.q = q_inst;
    let w = p.omega_n - p.m_p * x.p;

    let i_l = i_o + j * w * p.c_f * v_o;
    let v_b = v_o - (p.r_c + j * w * p.l_c) * i_o;
    let v_i = v_o + (p.r_f + j * w * p.l_f) * i_l;
    x.i_ld = i_l.re;
    x.i_lq = i_l.im;
    // Zero loop errors: the integrators alone supply the references.
    x.phi_d = (i_l.re + p.omega_b * p.c_f * v_o.im) / p.k_iv;
    x.phi_q = (i_l.im - p.omega_b * p.c_f * v_o.re) / p.k_iv;
    x.gamma_d = (v_i.re + p.omega_b * p.l_f * i_l.im) / p.k_ic;
    x.gamma_q = (v_i.im - p.omega_b * p.l_f * i_l.re) / p.k_ic;
    // v_oq is held at its reference (zero) only if the caller asked for it;
    // the d-axis droop reference matches v_od through V_n.
    let v_n = v_o.re + p.n_q * x.q;
    (x, v_n, v_b)
}
