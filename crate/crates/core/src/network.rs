//! Electrical coupling between DGs in the common DQ frame: RL lines, RL
//! loads, breakers, and bus-voltage resolution.
//!
//! Every branch is inductive, so bus voltages are not states. Two resolvers
//! are provided:
//!
//! * [`BusModel::VirtualResistor`]: a large resistor from every bus to ground,
//!   `v_bus = r_virtual * (injected - drawn)`. Stiff: the fastest mode is
//!   about `r_virtual * sum(1/L)` at the bus, so it needs sub-microsecond RK4
//!   steps for `r_virtual = 1000`.
//! * [`BusModel::Algebraic`]: Kirchhoff's current law on the inductor cutset
//!   differentiated once, `M v = g + kappa * residual`, where
//!   `M = A diag(1/L) A^T` is the inductance-weighted nodal matrix. This is the
//!   `r_virtual -> infinity` limit and is not stiff.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub name: String,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub name: String,
    pub bus: usize,
    pub r: f64,
    pub l: f64,
    pub connected: bool,
}

/// Where a DG's coupling branch lands, and its breaker.
#[derive(Debug, Clone, PartialEq)]
pub struct DgAttachment {
    pub name: String,
    pub bus: usize,
    pub closed: bool,
    /// Coupling branch resistance and inductance of the simulated plant.
    pub r_c: f64,
    pub l_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusModel {
    #[default]
    Algebraic,
    VirtualResistor,
}

/// Output voltage and current of a DG, rotated into the common frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DgTerminal {
    pub v_o: Complex64,
    pub i_o: Complex64,
}

/// Line and load currents in the common frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkState {
    pub lines: Vec<Complex64>,
    pub loads: Vec<Complex64>,
}

impl NetworkState {
    pub fn zeros(net: &NetworkModel) -> Self {
        Self {
            lines: vec![Complex64::default(); net.lines.len()],
            loads: vec![Complex64::default(); net.loads.len()],
        }
    }

    pub fn len(&self) -> usize {
        2 * (self.lines.len() + self.loads.len())
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty() && self.loads.is_empty()
    }

    /// Reads `[line0.D, line0.Q, ..., load0.D, load0.Q, ...]`.
    pub fn read(&mut self, x: &[f64]) {
        for (k, c) in self.lines.iter_mut().chain(self.loads.iter_mut()).enumerate() {
            *c = Complex64::new(x[2 * k], x[2 * k + 1]);
        }
    }

    pub fn write(&self, out: &mut [f64]) {
        for (k, c) in self.lines.iter().chain(self.loads.iter()).enumerate() {
            out[2 * k] = c.re;
            out[2 * k + 1] = c.im;
        }
    }
}

/// What a breaker operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakerTarget {
    Dg(usize),
    Load(usize),
}

impl fmt::Display for BreakerTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BreakerTarget::Dg(i) => write!(f, "dg#{i}"),
            BreakerTarget::Load(i) => write!(f, "load#{i}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub buses: Vec<String>,
    pub lines: Vec<Line>,
    pub loads: Vec<Load>,
    pub dgs: Vec<DgAttachment>,
    pub r_virtual: f64,
    pub model: BusModel,
    /// Decay rate (1/s) applied to KCL drift by the algebraic resolver.
    pub kcl_stabilization: f64,
    nodal: DMatrix<f64>,
    nodal_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl NetworkModel {
    pub fn new(
        buses: Vec<String>,
        lines: Vec<Line>,
        loads: Vec<Load>,
        dgs: Vec<DgAttachment>,
        r_virtual: f64,
        model: BusModel,
    ) -> Result<Self, ConfigError> {
        let nb = buses.len();
        if nb == 0 {
            return Err(ConfigError::new("network.buses", "at least one bus is required"));
        }
        if !(r_virtual.is_finite() && r_virtual > 0.0) {
            return Err(ConfigError::new("network.r_virtual", format!("must be positive, got {r_virtual}")));
        }
        let bad = |what: &str, name: &str, field: &str, v: f64, allow_zero: bool| {
            let ok = v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0));
            if ok {
                Ok(())
            } else {
                Err(ConfigError::new(format!("network.{what}[{name}].{field}"), format!("invalid value {v}")))
            }
        };
        for line in &lines {
            bad("lines", &line.name, "r", line.r, true)?;
            bad("lines", &line.name, "l", line.l, false)?;
            if line.from >= nb || line.to >= nb || line.from == line.to {
                return Err(ConfigError::new(format!("network.lines[{}]", line.name), "bad endpoints"));
            }
        }
        for load in &loads {
            bad("loads", &load.name, "r", load.r, true)?;
            bad("loads", &load.name, "l", load.l, false)?;
            if load.bus >= nb {
                return Err(ConfigError::new(format!("network.loads[{}].bus", load.name), "unknown bus"));
            }
        }
        for dg in &dgs {
            if dg.bus >= nb {
                return Err(ConfigError::new(format!("dgs[{}].bus", dg.name), "unknown bus"));
            }
        }

        // Every bus hosting a DG must be connected to the others through lines.
        let mut comp: Vec<usize> = (0..nb).collect();
        fn root(c: &mut [usize], mut i: usize) -> usize {
            while c[i] != i {
                c[i] = c[c[i]];
                i = c[i];
            }
            i
        }
        for line in &lines {
            let (a, b) = (root(&mut comp, line.from), root(&mut comp, line.to));
            comp[a] = b;
        }
        if let Some(first) = dgs.first() {
            let r0 = root(&mut comp, first.bus);
            for dg in &dgs {
                if root(&mut comp, dg.bus) != r0 {
                    return Err(ConfigError::new(
                        format!("dgs[{}].bus", dg.name),
                        format!("bus `{}` is not connected to bus `{}`", buses[dg.bus], buses[first.bus]),
                    ));
                }
            }
        }

        let nodal = DMatrix::<f64>::zeros(nb, nb);
        let nodal_lu = nodal.clone().lu();
        let mut net = Self {
            buses,
            lines,
            loads,
            dgs,
            r_virtual,
            model,
            kcl_stabilization: 2000.0,
            nodal,
            nodal_lu,
        };
        net.rebuild();
        Ok(net)
    }

    pub fn bus_index(&self, name: &str) -> Result<usize, ConfigError> {
        self.buses
            .iter()
            .position(|b| b == name)
            .ok_or_else(|| ConfigError::new("network.buses", format!("unknown bus `{name}`")))
    }

    /// Resolves a DG or load name to a breaker target.
    pub fn target(&self, name: &str) -> Result<BreakerTarget, ConfigError> {
        if let Some(i) = self.dgs.iter().position(|d| d.name == name) {
            return Ok(BreakerTarget::Dg(i));
        }
        if let Some(i) = self.loads.iter().position(|l| l.name == name) {
            return Ok(BreakerTarget::Load(i));
        }
        Err(ConfigError::new("breaker", format!("unknown DG or load `{name}`")))
    }

    pub fn state_len(&self) -> usize {
        2 * (self.lines.len() + self.loads.len())
    }

    pub fn dg_connected(&self, dg: usize) -> bool {
        self.dgs[dg].closed
    }

    /// Opens or closes a breaker. Returns whether anything changed.
    pub fn set_breaker(&mut self, target: BreakerTarget, closed: bool) -> Result<bool, ConfigError> {
        let flag = match target {
            BreakerTarget::Dg(i) => &mut self.dgs.get_mut(i).ok_or_else(|| unknown(target))?.closed,
            BreakerTarget::Load(i) => &mut self.loads.get_mut(i).ok_or_else(|| unknown(target))?.connected,
        };
        if *flag == closed {
            return Ok(false);
        }
        *flag = closed;
        self.rebuild();
        Ok(true)
    }

    /// Multiplies a load's admittance by `factor` (R and L divided by it).
    pub fn scale_load(&mut self, load: usize, factor: f64) -> Result<(), ConfigError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(ConfigError::new("load-scale", format!("factor must be positive, got {factor}")));
        }
        let l = self.loads.get_mut(load).ok_or_else(|| unknown(BreakerTarget::Load(load)))?;
        l.r /= factor;
        l.l /= factor;
        self.rebuild();
        Ok(())
    }

    fn rebuild(&mut self) {
        let nb = self.buses.len();
        let mut m = DMatrix::<f64>::zeros(nb, nb);
        for dg in self.dgs.iter().filter(|d| d.closed) {
            m[(dg.bus, dg.bus)] += 1.0 / dg.l_c;
        }
        for line in &self.lines {
            let y = 1.0 / line.l;
            m[(line.from, line.from)] += y;
            m[(line.to, line.to)] += y;
            m[(line.from, line.to)] -= y;
            m[(line.to, line.from)] -= y;
        }
        for load in self.loads.iter().filter(|l| l.connected) {
            m[(load.bus, load.bus)] += 1.0 / load.l;
        }
        // Keeps isolated buses (no active branch) solvable; they resolve to 0 V.
        let eps = 1e-12 * m.diagonal().amax().max(1.0);
        for i in 0..nb {
            m[(i, i)] += eps;
        }
        self.nodal_lu = m.clone().lu();
        self.nodal = m;
    }

    /// Inductance-weighted nodal matrix for the current breaker configuration.
    pub fn nodal_matrix(&self) -> &DMatrix<f64> {
        &self.nodal
    }

    /// Net current injected into each bus: closed DG outputs minus line and
    /// load currents leaving it.
    pub fn kcl_residuals(&self, dg_currents: &[Complex64], st: &NetworkState) -> Vec<Complex64> {
        let mut res = vec![Complex64::default(); self.buses.len()];
        for (dg, i) in self.dgs.iter().zip(dg_currents) {
            if dg.closed {
                res[dg.bus] += i;
            }
        }
        for (line, i) in self.lines.iter().zip(&st.lines) {
            res[line.from] -= i;
            res[line.to] += i;
        }
        for (load, i) in self.loads.iter().zip(&st.loads) {
            if load.connected {
                res[load.bus] -= i;
            }
        }
        res
    }

    /// Virtual-resistor bus voltages `r_virtual * (injected - drawn)`.
    pub fn bus_voltages_virtual(&self, dg_currents: &[Complex64], st: &NetworkState) -> Vec<Complex64> {
        self.kcl_residuals(dg_currents, st)
            .into_iter()
            .map(|r| r * self.r_virtual)
            .collect()
    }

    /// Bus voltages that make the derivative of every bus's KCL residual
    /// equal `-kcl_stabilization * residual`.
    pub fn bus_voltages_algebraic(&self, dgs: &[DgTerminal], st: &NetworkState, omega_com: f64) -> Vec<Complex64> {
        let nb = self.buses.len();
        let jw = Complex64::new(0.0, omega_com);
        let currents: Vec<Complex64> = dgs.iter().map(|d| d.i_o).collect();
        let res = self.kcl_residuals(&currents, st);
        let mut g: Vec<Complex64> = res.iter().map(|r| r * self.kcl_stabilization).collect();
        for (dg, t) in self.dgs.iter().zip(dgs) {
            if dg.closed {
                g[dg.bus] += t.v_o / dg.l_c - (dg.r_c / dg.l_c + jw) * t.i_o;
            }
        }
        for (line, i) in self.lines.iter().zip(&st.lines) {
            let h = -(line.r / line.l + jw) * i;
            g[line.from] -= h;
            g[line.to] += h;
        }
        for (load, i) in self.loads.iter().zip(&st.loads) {
            if load.connected {
                g[load.bus] -= -(load.r / load.l + jw) * i;
            }
        }
        let re = self.nodal_lu.solve(&DVector::from_iterator(nb, g.iter().map(|c| c.re)));
        let im = self.nodal_lu.solve(&DVector::from_iterator(nb, g.iter().map(|c| c.im)));
        match (re, im) {
            (Some(re), Some(im)) => (0..nb).map(|k| Complex64::new(re[k], im[k])).collect(),
            _ => vec![Complex64::new(f64::NAN, f64::NAN); nb],
        }
    }

    pub fn bus_voltages(&self, dgs: &[DgTerminal], st: &NetworkState, omega_com: f64) -> Vec<Complex64> {
        match self.model {
            BusModel::Algebraic => self.bus_voltages_algebraic(dgs, st, omega_com),
            BusModel::VirtualResistor => {
                let currents: Vec<Complex64> = dgs.iter().map(|d| d.i_o).collect();
                self.bus_voltages_virtual(&currents, st)
            }
        }
    }

    /// `L di/dt = v_from - v_to - R i - j omega_com L i` for every line and
    /// connected load; open branches are frozen at zero.
    pub fn network_derivative(&self, st: &NetworkState, v_bus: &[Complex64], omega_com: f64) -> NetworkState {
        let jw = Complex64::new(0.0, omega_com);
        let branch = |i: Complex64, r: f64, l: f64, dv: Complex64| (dv - r * i) / l - jw * i;
        NetworkState {
            lines: self
                .lines
                .iter()
                .zip(&st.lines)
                .map(|(line, &i)| branch(i, line.r, line.l, v_bus[line.from] - v_bus[line.to]))
                .collect(),
            loads: self
                .loads
                .iter()
                .zip(&st.loads)
                .map(|(load, &i)| {
                    if load.connected {
                        branch(i, load.r, load.l, v_bus[load.bus])
                    } else {
                        Complex64::default()
                    }
                })
                .collect(),
        }
    }

    /// Removes any KCL residual with the smallest change in stored magnetic
    /// energy, `sum L |di|^2`. Open branches are zeroed first.
    pub fn project_consistent(&self, dg_currents: &mut [Complex64], st: &mut NetworkState) {
        for (dg, i) in self.dgs.iter().zip(dg_currents.iter_mut()) {
            if !dg.closed {
                *i = Complex64::default();
            }
        }
        for (load, i) in self.loads.iter().zip(st.loads.iter_mut()) {
            if !load.connected {
                *i = Complex64::default();
            }
        }
        let res = self.kcl_residuals(dg_currents, st);
        let nb = self.buses.len();
        let solve = |v: DVector<f64>| self.nodal_lu.solve(&v).unwrap_or_else(|| DVector::zeros(nb));
        let lre = solve(DVector::from_iterator(nb, res.iter().map(|c| c.re)));
        let lim = solve(DVector::from_iterator(nb, res.iter().map(|c| c.im)));
        let lambda: Vec<Complex64> = (0..nb).map(|k| Complex64::new(lre[k], lim[k])).collect();
        // Branch k with incidence s_nk: di_k = -(1/L_k) sum_n s_nk lambda_n.
        for (dg, i) in self.dgs.iter().zip(dg_currents.iter_mut()) {
            if dg.closed {
                *i -= lambda[dg.bus] / dg.l_c;
            }
        }
        for (line, i) in self.lines.iter().zip(st.lines.iter_mut()) {
            *i -= (lambda[line.to] - lambda[line.from]) / line.l;
        }
        for (load, i) in self.loads.iter().zip(st.loads.iter_mut()) {
            if load.connected {
                *i += lambda[load.bus] / load.l;
            }
        }
    }
}

fn unknown(target: BreakerTarget) -> ConfigError {
    ConfigError::new("breaker", format!("unknown target {target}"))
}

/// Frequency of the common frame: the leader's droop frequency, or the
/// lowest-index connected DG when the leader is disconnected. Returns the
/// frequency and the DG that supplied it.
pub fn common_frequency(freqs: &[f64], connected: &[bool], leader: usize) -> (f64, usize) {
    let source = if connected[leader] {
        leader
    } else {
        connected.iter().position(|&c| c).unwrap_or(leader)
    };
    (freqs[source], source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_bus() -> NetworkModel {
        NetworkModel::new(
            vec!["B1".into(), "B2".into()],
            vec![Line { name: "Line1".into(), from: 0, to: 1, r: 0.23, l: 318e-6 }],
            vec![Load { name: "Load1".into(), bus: 1, r: 4.0, l: 9.6e-3, connected: true }],
            vec![DgAttachment { name: "DG1".into(), bus: 0, closed: true, r_c: 0.02, l_c: 2e-3 }],
            1000.0,
            BusModel::Algebraic,
        )
        .unwrap()
    }

    #[test]
    fn zero_currents_give_zero_voltages() {
        let net = one_bus();
        let st = NetworkState::zeros(&net);
        let dgs = [DgTerminal::default()];
        assert!(net.bus_voltages_virtual(&[Complex64::default()], &st).iter().all(|v| v.norm() == 0.0));
        assert!(net.bus_voltages_algebraic(&dgs, &st, 314.0).iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn virtual_resistor_formula() {
        let net = one_bus();
        let mut st = NetworkState::zeros(&net);
        st.lines[0] = Complex64::new(8.0, 0.0);
        let v = net.bus_voltages_virtual(&[Complex64::new(10.0, 0.0)], &st);
        assert_relative_eq!(v[0].re, 2000.0, epsilon = 1e-9);
        assert_eq!(v[0].im, 0.0);
    }

    #[test]
    fn load_branch_fixed_point() {
        // (R + j w L) i = v, solved as the real 2x2 system
        // [R -wL; wL R] [iD; iQ] = [vD; vQ].
        let (r, l, w, vd, vq) = (4.0, 9.6e-3, 314.159, 311.0, 0.0);
        let x = w * l;
        let det = r * r + x * x;
        let i_d = (r * vd + x * vq) / det;
        let i_q = (r * vq - x * vd) / det;

        let net = one_bus();
        let mut st = NetworkState::zeros(&net);
        st.loads[0] = Complex64::new(i_d, i_q);
        st.lines[0] = Complex64::new(0.0, 0.0);
        let v_bus = vec![Complex64::default(), Complex64::new(vd, vq)];
        let d = net.network_derivative(&st, &v_bus, w);
        assert!(d.loads[0].norm() < 1e-9, "{:?}", d.loads[0]);
    }

    #[test]
    fn open_load_is_frozen() {
        let mut net = one_bus();
        assert!(net.set_breaker(BreakerTarget::Load(0), false).unwrap());
        assert!(!net.set_breaker(BreakerTarget::Load(0), false).unwrap());
        let mut st = NetworkState::zeros(&net);
        st.loads[0] = Complex64::new(30.0, -10.0);
        let mut dg = [Complex64::new(30.0, -10.0)];
        net.project_consistent(&mut dg, &mut st);
        assert_eq!(st.loads[0], Complex64::default());
        let d = net.network_derivative(&st, &[Complex64::new(311.0, 0.0); 2], 314.0);
        assert_eq!(d.loads[0], Complex64::default());
        assert!(net.set_breaker(BreakerTarget::Dg(3), true).is_err());
    }

    #[test]
    fn projection_restores_kcl_with_least_energy() {
        let net = one_bus();
        let mut st = NetworkState::zeros(&net);
        st.lines[0] = Complex64::new(20.0, 1.0);
        st.loads[0] = Complex64::new(18.0, -2.0);
        let mut dg = [Complex64::new(25.0, 0.0)];
        let before = (dg, st.clone());
        net.project_consistent(&mut dg, &mut st);
        let res = net.kcl_residuals(&dg, &st);
        assert!(res.iter().all(|r| r.norm() < 1e-9), "{res:?}");

        // Any other KCL-consistent point has at least as much weighted change.
        let energy = |dg: &[Complex64], st: &NetworkState| {
            2e-3 * (dg[0] - before.0[0]).norm_sqr()
                + 318e-6 * (st.lines[0] - before.1.lines[0]).norm_sqr()
                + 9.6e-3 * (st.loads[0] - before.1.loads[0]).norm_sqr()
        };
        let best = energy(&dg, &st);
        for shift in [-1.0, -0.1, 0.1, 1.0] {
            // Series chain: a consistent point is a common current.
            let c = dg[0] + shift;
            let alt = NetworkState { lines: vec![c], loads: vec![c] };
            assert!(energy(&[c], &alt) >= best - 1e-12);
        }
    }

    #[test]
    fn algebraic_voltages_keep_kcl_derivative_at_zero() {
        let net = one_bus();
        let mut st = NetworkState::zeros(&net);
        let i = Complex64::new(40.0, -12.0);
        st.lines[0] = i;
        st.loads[0] = i;
        let t = DgTerminal { v_o: Complex64::new(311.0, 5.0), i_o: i };
        let w = 314.0;
        let v = net.bus_voltages_algebraic(&[t], &st, w);
        let d = net.network_derivative(&st, &v, w);
        let di_o = (t.v_o - v[0] - 0.02 * i) / 2e-3 - Complex64::new(0.0, w) * i;
        assert!((di_o - d.lines[0]).norm() < 1e-6 * di_o.norm().max(1.0));
        assert!((d.lines[0] - d.loads[0]).norm() < 1e-6 * di_o.norm().max(1.0));
    }

    #[test]
    fn common_frequency_selection() {
        let f = [314.0, 314.1, 313.9];
        assert_eq!(common_frequency(&f, &[true, true, true], 0), (314.0, 0));
        assert_eq!(common_frequency(&f, &[false, true, true], 0), (314.1, 1));
        // Follower's angle rate is its frequency offset from the leader.
        let (w, _) = common_frequency(&[314.159, 314.259], &[true, true], 0);
        assert_relative_eq!(314.259 - w, 0.1, epsilon = 1e-9);
    }

    #[test]
    fn rejects_dangling_dg_bus() {
        let err = NetworkModel::new(
            vec!["B1".into(), "B2".into()],
            vec![],
            vec![],
            vec![
                DgAttachment { name: "DG1".into(), bus: 0, closed: true, r_c: 0.02, l_c: 2e-3 },
                DgAttachment { name: "DG2".into(), bus: 1, closed: true, r_c: 0.02, l_c: 2e-3 },
            ],
            1000.0,
            BusModel::Algebraic,
        )
        .unwrap_err();
        assert!(err.location.contains("DG2"));
    }
}
