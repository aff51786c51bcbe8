//! The coupled plant: every DG's 13 states followed by the network branch
//! currents.

use std::ops::Range;

use num_complex::Complex64;

use crate::error::ConfigError;
use crate::network::{common_frequency, DgTerminal, NetworkModel, NetworkState};
use crate::plant::{common_to_local, dg_derivative, droop_setpoints, local_to_common, DgParams, DgState};

use super::Scenario;

/// Position of every state in the global vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_dg: usize,
    pub n_lines: usize,
    pub n_loads: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        DgState::LEN * self.n_dg + 2 * (self.n_lines + self.n_loads)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dg(&self, i: usize) -> Range<usize> {
        DgState::LEN * i..DgState::LEN * (i + 1)
    }

    pub fn network(&self) -> Range<usize> {
        DgState::LEN * self.n_dg..self.len()
    }

    /// Name of every state, in order.
    pub fn names(&self, net: &NetworkModel, dg_names: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for name in dg_names {
            out.extend(DgState::NAMES.iter().map(|s| format!("{name}.{s}")));
        }
        for l in &net.lines {
            out.push(format!("{}.i_D", l.name));
            out.push(format!("{}.i_Q", l.name));
        }
        for l in &net.loads {
            out.push(format!("{}.i_D", l.name));
            out.push(format!("{}.i_Q", l.name));
        }
        out
    }
}

/// Quantities derived from a state that are not states themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct Aux {
    /// Droop frequency of each DG.
    pub omega: Vec<f64>,
    pub omega_com: f64,
    /// DG whose frequency defines the common frame.
    pub frame_source: usize,
    /// Bus voltages in the common frame.
    pub v_bus: Vec<Complex64>,
    /// Each DG's bus voltage in its own frame.
    pub v_bus_local: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct System {
    pub layout: Layout,
    pub plant: Vec<DgParams>,
    pub network: NetworkModel,
    pub leader: usize,
}

/// Builds the plant of a scenario, cross-checking its parts.
pub fn assemble_system(s: &Scenario) -> Result<System, ConfigError> {
    let n = s.dgs.len();
    if s.graph.len() != n {
        return Err(ConfigError::new("graph", format!("graph has {} nodes but the scenario has {n} DGs", s.graph.len())));
    }
    if s.network.dgs.len() != n {
        return Err(ConfigError::new(
            "network",
            format!("network attaches {} DGs but the scenario has {n}", s.network.dgs.len()),
        ));
    }
    if s.leader >= n {
        return Err(ConfigError::new("simulation.leader", "out of range"));
    }
    Ok(System {
        layout: Layout { n_dg: n, n_lines: s.network.lines.len(), n_loads: s.network.loads.len() },
        plant: s.dgs.iter().map(|d| d.plant).collect(),
        network: s.network.clone(),
        leader: s.leader,
    })
}

impl System {
    pub fn dg_state(&self, x: &[f64], i: usize) -> DgState {
        DgState::from_slice(&x[self.layout.dg(i)])
    }

    pub fn network_state(&self, x: &[f64]) -> NetworkState {
        let mut st = NetworkState::zeros(&self.network);
        st.read(&x[self.layout.network()]);
        st
    }

    fn terminals(&self, states: &[DgState]) -> Vec<DgTerminal> {
        states
            .iter()
            .zip(&self.network.dgs)
            .map(|(s, a)| {
                if a.closed {
                    DgTerminal { v_o: local_to_common(s.delta, s.v_o()), i_o: local_to_common(s.delta, s.i_o()) }
                } else {
                    DgTerminal { v_o: local_to_common(s.delta, s.v_o()), i_o: Complex64::default() }
                }
            })
            .collect()
    }

    fn frequencies(&self, states: &[DgState], u: &[f64]) -> (Vec<f64>, f64, usize) {
        let omega: Vec<f64> = states
            .iter()
            .zip(&self.plant)
            .zip(u)
            .map(|((s, p), &u)| droop_setpoints(p, s, u).omega)
            .collect();
        let connected: Vec<bool> = self.network.dgs.iter().map(|d| d.closed).collect();
        let (w, src) = common_frequency(&omega, &connected, self.leader);
        (omega, w, src)
    }

    pub fn aux(&self, x: &[f64], u: &[f64]) -> Aux {
        let states: Vec<DgState> = (0..self.layout.n_dg).map(|i| self.dg_state(x, i)).collect();
        let net = self.network_state(x);
        let (omega, omega_com, frame_source) = self.frequencies(&states, u);
        let v_bus = self.network.bus_voltages(&self.terminals(&states), &net, omega_com);
        let v_bus_local = states
            .iter()
            .zip(&self.network.dgs)
            .map(|(s, a)| common_to_local(s.delta, v_bus[a.bus]))
            .collect();
        Aux { omega, omega_com, frame_source, v_bus, v_bus_local }
    }

    /// `dx = f(x, u)` with `u` the droop input of every DG.
    pub fn derivative(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let states: Vec<DgState> = (0..self.layout.n_dg).map(|i| self.dg_state(x, i)).collect();
        let net = self.network_state(x);
        let (_, omega_com, _) = self.frequencies(&states, u);
        let v_bus = self.network.bus_voltages(&self.terminals(&states), &net, omega_com);
        for (i, s) in states.iter().enumerate() {
            let a = &self.network.dgs[i];
            let vb = common_to_local(s.delta, v_bus[a.bus]);
            let mut d = dg_derivative(&self.plant[i], s, u[i], vb, omega_com);
            if !a.closed {
                d.i_od = 0.0;
                d.i_oq = 0.0;
            }
            d.write_to(&mut dx[self.layout.dg(i)]);
        }
        self.network
            .network_derivative(&net, &v_bus, omega_com)
            .write(&mut dx[self.layout.network()]);
    }

    /// Zeroes currents through open breakers and removes any KCL residual.
    pub fn make_consistent(&self, x: &mut [f64]) {
        let states: Vec<DgState> = (0..self.layout.n_dg).map(|i| self.dg_state(x, i)).collect();
        let mut net = self.network_state(x);
        let mut currents: Vec<Complex64> = states.iter().map(|s| local_to_common(s.delta, s.i_o())).collect();
        self.network.project_consistent(&mut currents, &mut net);
        for (i, (s, c)) in states.iter().zip(&currents).enumerate() {
            let mut s = *s;
            let local = common_to_local(s.delta, *c);
            s.i_od = local.re;
            s.i_oq = local.im;
            s.write_to(&mut x[self.layout.dg(i)]);
        }
        net.write(&mut x[self.layout.network()]);
    }

    /// Largest KCL residual over all buses (A).
    pub fn kcl_residual(&self, x: &[f64]) -> f64 {
        let states: Vec<DgState> = (0..self.layout.n_dg).map(|i| self.dg_state(x, i)).collect();
        let currents: Vec<Complex64> = states.iter().map(|s| local_to_common(s.delta, s.i_o())).collect();
        self.network
            .kcl_residuals(&currents, &self.network_state(x))
            .iter()
            .map(|r| r.norm())
            .fold(0.0, f64::max)
    }

    /// Power leaving the DG terminals, and what loads and branch resistances
    /// dissipate (W).
    pub fn power_balance(&self, x: &[f64]) -> (f64, f64, f64) {
        let net = self.network_state(x);
        let mut gen = 0.0;
        let mut coupling = 0.0;
        for i in 0..self.layout.n_dg {
            let s = self.dg_state(x, i);
            if self.network.dgs[i].closed {
                gen += s.v_od * s.i_od + s.v_oq * s.i_oq;
                coupling += self.plant[i].r_c * s.i_o().norm_sqr();
            }
        }
        let lines: f64 = self.network.lines.iter().zip(&net.lines).map(|(l, i)| l.r * i.norm_sqr()).sum();
        let loads: f64 = self
            .network
            .loads
            .iter()
            .zip(&net.loads)
            .filter(|(l, _)| l.connected)
            .map(|(l, i)| l.r * i.norm_sqr())
            .sum();
        (gen, loads, lines + coupling)
    }
}
