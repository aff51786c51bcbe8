//! Distributed secondary voltage control.
//!
//! Each DG forms neighbourhood tracking errors `(e1, e2)` of its voltage and
//! voltage rate, builds a fast terminal sliding surface `s`, and commands the
//! second derivative `z` of its voltage through a consensus law that uses the
//! neighbours' previous commands.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::graph::CommGraph;

/// Surface and reaching-law constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FtsmParams {
    pub c: f64,
    pub d: f64,
    pub m: u32,
    pub n: u32,
    pub p: u32,
    pub q: u32,
    pub alpha: f64,
    pub beta: f64,
    pub boundary_layer: f64,
    /// Floor on `|e1|` inside the negative-power derivative term.
    pub e1_floor: f64,
    /// Largest fraction of `|s|` the reaching term may remove in one
    /// control period; zero leaves the reaching term unbounded.
    pub reach_limit: f64,
    pub c_q: f64,
    pub d_q: f64,
    pub m1: u32,
    pub n1: u32,
    pub p1: u32,
    pub q1: u32,
}

impl Default for FtsmParams {
    fn default() -> Self {
        Self {
            c: 600.0,
            d: 100.0,
            m: 13,
            n: 11,
            p: 3,
            q: 5,
            alpha: 100.0,
            beta: 400.0,
            boundary_layer: 1.0,
            e1_floor: 1e-6,
            reach_limit: 0.5,
            c_q: 600.0,
            d_q: 100.0,
            m1: 13,
            n1: 11,
            p1: 3,
            q1: 5,
        }
    }
}

impl FtsmParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let loc = |k: &str| format!("controller.ftsm.{k}");
        for (k, v) in [("c", self.c), ("d", self.d), ("alpha", self.alpha), ("beta", self.beta), ("c_q", self.c_q), ("d_q", self.d_q), ("e1_floor", self.e1_floor)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::new(loc(k), format!("must be positive, got {v}")));
            }
        }
        if !(self.boundary_layer.is_finite() && self.boundary_layer >= 0.0) {
            return Err(ConfigError::new(loc("boundary_layer"), "must be nonnegative"));
        }
        if !(self.reach_limit.is_finite() && (0.0..=1.0).contains(&self.reach_limit)) {
            return Err(ConfigError::new(loc("reach_limit"), "must lie in [0, 1]"));
        }
        for (k, v) in [("m", self.m), ("n", self.n), ("p", self.p), ("q", self.q), ("m1", self.m1), ("n1", self.n1), ("p1", self.p1), ("q1", self.q1)] {
            if v % 2 == 0 {
                return Err(ConfigError::new(loc(k), format!("must be a positive odd integer, got {v}")));
            }
        }
        for (hi, lo, kh, kl) in [(self.m, self.n, "m", "n"), (self.m1, self.n1, "m1", "n1")] {
            if hi <= lo {
                return Err(ConfigError::new(loc(kh), format!("{kh} = {hi} must exceed {kl} = {lo}")));
            }
        }
        for (lo, hi, kl, kh) in [(self.p, self.q, "p", "q"), (self.p1, self.q1, "p1", "q1")] {
            if lo >= hi {
                return Err(ConfigError::new(loc(kl), format!("{kl} = {lo} must be less than {kh} = {hi}")));
            }
        }
        Ok(())
    }

    fn fast(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    fn slow(&self) -> f64 {
        self.p as f64 / self.q as f64
    }
}

/// Linear comparison law gains: a critically damped pair `k1 = w^2`,
/// `k2 = 2w` at `w = 2000 rad/s`, which matches the steady noise level of
/// the sliding-mode law at the default observer tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineGains {
    pub k1: f64,
    pub k2: f64,
}

impl Default for BaselineGains {
    fn default() -> Self {
        Self { k1: 4e6, k2: 4e3 }
    }
}

impl BaselineGains {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (k, v) in [("k1", self.k1), ("k2", self.k2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::new(format!("controller.baseline.{k}"), format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    #[default]
    Ftsm,
    Baseline,
}

impl FromStr for ControllerKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ftsm" => Ok(Self::Ftsm),
            "baseline" => Ok(Self::Baseline),
            other => Err(ConfigError::new("controller.kind", format!("unknown controller `{other}`"))),
        }
    }
}

/// How the neighbours' commands enter the law. They are only known from the
/// previous control period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborCommands {
    /// Left out of the sum: the neighbours' accelerations act as a bounded
    /// disturbance on the surface.
    #[default]
    Omitted,
    /// Last period's `z_j` used in place of the current one. Destabilizes
    /// the sampled loop at the default gains on bipartite graphs.
    Delayed,
}

impl FromStr for NeighborCommands {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "omitted" => Ok(Self::Omitted),
            "delayed" => Ok(Self::Delayed),
            other => Err(ConfigError::new("controller.neighbor_commands", format!("unknown option `{other}`"))),
        }
    }
}

/// What a DG publishes to its neighbours once per control period.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeighborMsg {
    pub sender: usize,
    pub y1_hat: f64,
    pub y2_hat: f64,
    pub z: f64,
    pub nq_times_q: f64,
    pub stale: bool,
    pub timestamp: f64,
}

/// Reference voltage; its rate is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSignal {
    pub y0: f64,
}

impl ReferenceSignal {
    pub fn y0_dot(&self) -> f64 {
        0.0
    }
}

/// Signed power `sgn(x) |x|^a`.
pub fn spow(x: f64, a: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(a)
    }
}

/// Weights actually used by node `me`: neighbours whose message is stale
/// are dropped.
pub fn live_neighbors<'a>(graph: &'a CommGraph, me: usize, msgs: &'a [NeighborMsg]) -> impl Iterator<Item = (usize, f64)> + 'a {
    graph.neighbors(me).filter(move |&(j, _)| !msgs[j].stale)
}

/// Gain `sum_j a_ij + b_i` over live neighbours, falling back to the full
/// graph gain if dropping stale neighbours would leave it zero.
pub fn live_gain(graph: &CommGraph, me: usize, msgs: &[NeighborMsg]) -> f64 {
    let g: f64 = live_neighbors(graph, me, msgs).map(|(_, a)| a).sum::<f64>() + graph.pinning(me);
    if g > 0.0 {
        g
    } else {
        graph.gain(me)
    }
}

/// Neighbourhood tracking errors.
///
/// `weight(j)` gives `a_ij` and `pin` gives `b_i`; `msgs[j]` holds node j's
/// published estimates.
pub fn tracking_errors_weighted(
    neighbors: impl Iterator<Item = (usize, f64)>,
    pin: f64,
    y1: f64,
    y2: f64,
    msgs: &[NeighborMsg],
    reference: ReferenceSignal,
) -> (f64, f64) {
    let (mut e1, mut e2) = (0.0, 0.0);
    for (j, a) in neighbors {
        e1 += a * (y1 - msgs[j].y1_hat);
        e2 += a * (y2 - msgs[j].y2_hat);
    }
    e1 += pin * (y1 - reference.y0);
    e2 += pin * (y2 - reference.y0_dot());
    (e1, e2)
}

pub fn tracking_errors(graph: &CommGraph, me: usize, y1: f64, y2: f64, msgs: &[NeighborMsg], reference: ReferenceSignal) -> (f64, f64) {
    tracking_errors_weighted(live_neighbors(graph, me, msgs), graph.pinning(me), y1, y2, msgs, reference)
}

pub fn ftsm_surface(p: &FtsmParams, e1: f64, e2: f64) -> f64 {
    e2 + p.c * spow(e1, p.fast()) + p.d * spow(e1, p.slow())
}

/// Surface with the reactive-sharing error terms added.
pub fn tradeoff_surface(p: &FtsmParams, e1: f64, e2: f64, e_q: f64) -> f64 {
    ftsm_surface(p, e1, e2)
        + p.c_q * spow(e_q, p.m1 as f64 / p.n1 as f64)
        + p.d_q * spow(e_q, p.p1 as f64 / p.q1 as f64)
}

/// `sgn(s)` smoothed to `s / phi` inside the boundary layer.
pub fn smoothed_sign(s: f64, phi: f64) -> f64 {
    if phi > 0.0 && s.abs() < phi {
        s / phi
    } else if s == 0.0 {
        0.0
    } else {
        s.signum()
    }
}

/// Derivative of the surface's error terms with respect to `e1`.
fn surface_slope(p: &FtsmParams, e1: f64) -> f64 {
    let a = e1.abs().max(p.e1_floor);
    p.c * p.fast() * a.powf(p.fast() - 1.0) + p.d * p.slow() * a.powf(p.slow() - 1.0)
}

/// Sliding-mode consensus law.
///
/// `gain` is `sum_j a_ij + b_i` and `neighbor_sum` is `sum_j a_ij z_j` over
/// the same neighbours.
pub fn ftsm_law(p: &FtsmParams, gain: f64, neighbor_sum: f64, s: f64, e1: f64, e2: f64) -> f64 {
    (neighbor_sum - reaching_term(p, s) - surface_slope(p, e1) * e2) / gain
}

fn reaching_term(p: &FtsmParams, s: f64) -> f64 {
    p.alpha * spow(s, 2.0) + p.beta * smoothed_sign(s, p.boundary_layer)
}

/// [`ftsm_law`] for a controller sampled every `period`: the reaching term
/// is capped at `reach_limit * |s| / period`, so one held command cannot
/// drive the surface past zero. Near the surface the cap is inactive.
pub fn ftsm_law_sampled(p: &FtsmParams, gain: f64, neighbor_sum: f64, s: f64, e1: f64, e2: f64, period: f64) -> f64 {
    let mut reach = reaching_term(p, s);
    if p.reach_limit > 0.0 && period > 0.0 {
        let cap = p.reach_limit * s.abs() / period;
        reach = reach.clamp(-cap, cap);
    }
    (neighbor_sum - reach - surface_slope(p, e1) * e2) / gain
}

/// Linear consensus law used as the comparison controller.
pub fn baseline_law(k: &BaselineGains, gain: f64, neighbor_sum: f64, e1: f64, e2: f64) -> f64 {
    (neighbor_sum - k.k1 * e1 - k.k2 * e2) / gain
}

/// `sum_j a_ij z_j` over live neighbours.
pub fn neighbor_z_sum(graph: &CommGraph, me: usize, msgs: &[NeighborMsg]) -> f64 {
    live_neighbors(graph, me, msgs).map(|(j, a)| a * msgs[j].z).sum()
}

/// `0.5 * sum s_i^2`.
pub fn lyapunov_diag(s: &[f64]) -> f64 {
    0.5 * s.iter().map(|v| v * v).sum::<f64>()
}

/// Reactive-sharing error `sum_j a_ij (nQ_i Q_i - nQ_j Q_j)`.
pub fn sharing_error(neighbors: impl Iterator<Item = (usize, f64)>, own: f64, msgs: &[NeighborMsg]) -> f64 {
    neighbors.map(|(j, a)| a * (own - msgs[j].nq_times_q)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn msgs(y1: &[f64], y2: &[f64]) -> Vec<NeighborMsg> {
        y1.iter()
            .zip(y2)
            .enumerate()
            .map(|(k, (&a, &b))| NeighborMsg { sender: k, y1_hat: a, y2_hat: b, ..Default::default() })
            .collect()
    }

    #[test]
    fn spow_examples() {
        assert_eq!(spow(-2.0, 2.0), -4.0);
        assert_relative_eq!(spow(-8.0, 1.0 / 3.0), -2.0, epsilon = 1e-12);
        assert_eq!(spow(1.0, 13.0 / 11.0), 1.0);
        assert_eq!(spow(0.0, 0.6), 0.0);
    }

    #[test]
    fn tracking_error_examples() {
        let r = ReferenceSignal { y0: 311.0 };
        let g = CommGraph::chain(4).unwrap();
        let m = msgs(&[311.0; 4], &[0.0; 4]);
        for i in 0..4 {
            assert_eq!(tracking_errors(&g, i, 311.0, 0.0, &m, r), (0.0, 0.0));
        }
        let g2 = CommGraph::chain(2).unwrap();
        let m = msgs(&[312.0, 310.0], &[0.0, 0.0]);
        assert_eq!(tracking_errors(&g2, 0, 312.0, 0.0, &m, r), (3.0, 0.0));

        // Scaling every weight scales both errors.
        let (e1, e2) = tracking_errors_weighted(g2.neighbors(0), 1.0, 312.0, 5.0, &m, r);
        let (f1, f2) = tracking_errors_weighted(g2.neighbors(0).map(|(j, a)| (j, 3.0 * a)), 3.0, 312.0, 5.0, &m, r);
        assert_relative_eq!(f1, 3.0 * e1);
        assert_relative_eq!(f2, 3.0 * e2);
    }

    #[test]
    fn stale_neighbors_dropped() {
        let r = ReferenceSignal { y0: 311.0 };
        let g = CommGraph::chain(4).unwrap();
        let mut m = msgs(&[311.0, 311.0, 311.0, 200.0], &[0.0; 4]);
        m[3].stale = true;
        m[3].z = 1e9;
        assert_eq!(tracking_errors(&g, 2, 311.0, 0.0, &m, r), (0.0, 0.0));
        assert_eq!(live_gain(&g, 2, &m), 1.0);
        assert_eq!(neighbor_z_sum(&g, 2, &m), 0.0);
    }

    #[test]
    fn surface_examples() {
        let p = FtsmParams::default();
        assert_eq!(ftsm_surface(&p, 0.0, 0.0), 0.0);
        assert_relative_eq!(ftsm_surface(&p, 1.0, 0.0), 700.0);
        assert_relative_eq!(ftsm_surface(&p, -0.3, -2.0), -ftsm_surface(&p, 0.3, 2.0));
        assert_eq!(tradeoff_surface(&p, 0.4, 1.0, 0.0), ftsm_surface(&p, 0.4, 1.0));
    }

    #[test]
    fn sharing_error_example() {
        let g = CommGraph::chain(2).unwrap();
        let mut m = msgs(&[0.0; 2], &[0.0; 2]);
        m[0].nq_times_q = 16.0;
        m[1].nq_times_q = 15.0;
        assert_eq!(sharing_error(g.neighbors(0), 16.0, &m), 1.0);
        assert_eq!(sharing_error(g.neighbors(1), 15.0, &m), -1.0);
    }

    #[test]
    fn law_examples() {
        let p = FtsmParams::default();
        assert_eq!(ftsm_law(&p, 2.0, 0.0, 0.0, 0.0, 0.0), 0.0);
        let pure = FtsmParams { boundary_layer: 0.0, ..p.clone() };
        assert_relative_eq!(ftsm_law(&pure, 2.0, 0.0, 0.01, 0.0, 0.0), -200.005, epsilon = 1e-9);
        let k = BaselineGains { k1: 600.0, k2: 10.0 };
        assert_eq!(baseline_law(&k, 2.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!(baseline_law(&k, 2.0, 0.0, 1.0, 0.0), -300.0);
    }

    #[test]
    fn equilibrium_fixed_point() {
        let p = FtsmParams::default();
        let g = CommGraph::chain(4).unwrap();
        let r = ReferenceSignal { y0: 311.0 };
        let m = msgs(&[311.0; 4], &[0.0; 4]);
        for i in 0..4 {
            let (e1, e2) = tracking_errors(&g, i, 311.0, 0.0, &m, r);
            let s = ftsm_surface(&p, e1, e2);
            assert_eq!(ftsm_law(&p, g.gain(i), neighbor_z_sum(&g, i, &m), s, e1, e2), 0.0);
        }
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov_diag(&[0.0; 4]), 0.0);
        assert_eq!(lyapunov_diag(&[1.0, -1.0, 0.0, 0.0]), 1.0);
        assert_eq!(lyapunov_diag(&[0.0, 1.0, 0.0, -1.0]), lyapunov_diag(&[-1.0, 0.0, 1.0, 0.0]));
    }

    #[test]
    fn parameter_validation() {
        assert!(FtsmParams::default().validate().is_ok());
        let bad = FtsmParams { m: 12, ..Default::default() };
        assert!(bad.validate().unwrap_err().location.ends_with(".m"));
        let bad = FtsmParams { m: 9, n: 11, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = FtsmParams { p: 7, q: 5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = FtsmParams { alpha: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!("baseline".parse::<ControllerKind>().is_ok());
        assert!("pid".parse::<ControllerKind>().is_err());
    }

    proptest! {
        #[test]
        fn law_is_odd(s in -1e3..1e3f64, e1 in -50.0..50.0f64, e2 in -1e4..1e4f64,
                      nz in -1e6..1e6f64, gain in 0.5..4.0f64, phi in prop::sample::select(vec![0.0, 1.0])) {
            let p = FtsmParams { boundary_layer: phi, ..Default::default() };
            prop_assert_eq!(ftsm_law(&p, gain, -nz, -s, -e1, -e2), -ftsm_law(&p, gain, nz, s, e1, e2));
        }

        #[test]
        fn baseline_is_linear(e1 in -50.0..50.0f64, e2 in -1e3..1e3f64, nz in -1e4..1e4f64,
                              f1 in -50.0..50.0f64, f2 in -1e3..1e3f64, mz in -1e4..1e4f64) {
            let k = BaselineGains::default();
            let sum = baseline_law(&k, 2.0, nz + mz, e1 + f1, e2 + f2);
            let parts = baseline_law(&k, 2.0, nz, e1, e2) + baseline_law(&k, 2.0, mz, f1, f2);
            prop_assert!((sum - parts).abs() <= 1e-9 * (1.0 + sum.abs()));
        }

        #[test]
        fn spow_is_odd(x in -1e3..1e3f64, a in 0.1..3.0f64) {
            prop_assert_eq!(spow(-x, a), -spow(x, a));
        }
    }
}
