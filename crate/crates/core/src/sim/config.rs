//! Scenario documents (TOML) and their validation into a runnable
//! [`Scenario`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{BaselineGains, ControllerKind, FtsmParams, NeighborCommands};
use crate::error::{ConfigError, Error};
use crate::eskbf::ObserverConfig;
use crate::graph::{CommGraph, TradeoffMode};
use crate::network::{BusModel, DgAttachment, Line, Load, NetworkModel};
use crate::plant::{DgParams, Perturbation};

use super::{ControlMode, ControllerSettings, DgSetup, Event, EventKind, NoiseSettings, Scenario};

/// A scenario document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub simulation: SimulationSection,
    pub dgs: Vec<DgSection>,
    pub network: NetworkSection,
    pub graph: GraphSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub observer: ObserverConfig,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub events: Vec<EventSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub duration: f64,
    #[serde(default = "defaults::dt_plant")]
    pub dt_plant: f64,
    #[serde(default = "defaults::control_period")]
    pub control_period: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::v_ref")]
    pub v_ref: f64,
    /// Droop input while secondary control is inactive.
    #[serde(default = "defaults::v_ref")]
    pub v_n_initial: f64,
    /// DG whose frame is the common frame.
    #[serde(default)]
    pub leader: Option<String>,
    /// Droop input of a disconnected DG, as a fraction of `v_ref`.
    #[serde(default = "defaults::standby_fraction")]
    pub standby_fraction: f64,
    /// Duration of the droop-input ramp after a reconnection.
    #[serde(default = "defaults::reconnect_ramp")]
    pub reconnect_ramp: f64,
}

mod defaults {
    pub fn dt_plant() -> f64 {
        2e-5
    }
    pub fn control_period() -> f64 {
        1e-4
    }
    pub fn v_ref() -> f64 {
        311.0
    }
    pub fn standby_fraction() -> f64 {
        0.9
    }
    pub fn reconnect_ramp() -> f64 {
        0.05
    }
    pub fn weight() -> f64 {
        1.0
    }
    pub fn yes() -> bool {
        true
    }
    pub fn r_virtual() -> f64 {
        1000.0
    }
    pub fn u_max_factor() -> f64 {
        2.0
    }
    pub fn kcl_stabilization() -> f64 {
        2000.0
    }
}

/// One DG: a parameter preset, explicit overrides, and an optional plant
/// perturbation (the controller keeps the nominal values).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgSection {
    pub name: String,
    pub bus: String,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default = "defaults::yes")]
    pub connected: bool,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
    pub m_p: Option<f64>,
    pub n_q: Option<f64>,
    pub omega_c: Option<f64>,
    pub r_f: Option<f64>,
    pub l_f: Option<f64>,
    pub c_f: Option<f64>,
    pub r_c: Option<f64>,
    pub l_c: Option<f64>,
    pub k_pv: Option<f64>,
    pub k_iv: Option<f64>,
    pub k_pc: Option<f64>,
    pub k_ic: Option<f64>,
    pub omega_b: Option<f64>,
    pub omega_n: Option<f64>,
}

impl DgSection {
    fn explicit(&self, key: &str) -> Option<f64> {
        match key {
            "m_p" => self.m_p,
            "n_q" => self.n_q,
            "omega_c" => self.omega_c,
            "r_f" => self.r_f,
            "l_f" => self.l_f,
            "c_f" => self.c_f,
            "r_c" => self.r_c,
            "l_c" => self.l_c,
            "k_pv" => self.k_pv,
            "k_iv" => self.k_iv,
            "k_pc" => self.k_pc,
            "k_ic" => self.k_ic,
            "omega_b" => self.omega_b,
            "omega_n" => self.omega_n,
            _ => None,
        }
    }

    /// Nominal parameters: explicit keys override the preset.
    pub fn params(&self) -> Result<DgParams, ConfigError> {
        let loc = format!("dgs[{}]", self.name);
        let preset = match &self.preset {
            Some(p) => Some(
                DgParams::preset(p).ok_or_else(|| ConfigError::new(format!("{loc}.preset"), format!("unknown preset `{p}`")))?,
            ),
            None => None,
        };
        let base: BTreeMap<&str, f64> = preset
            .map(|p| DgParams::FIELD_NAMES.iter().copied().zip(p.values()).collect())
            .unwrap_or_default();
        let params = DgParams::from_lookup(|k| self.explicit(k).or_else(|| base.get(k).copied()))
            .map_err(|missing| ConfigError::new(format!("{loc}.{missing}"), "missing required DG parameter"))?;
        params
            .validate()
            .map_err(|e| ConfigError::new(format!("{loc}.{}", e.location), e.message))?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub buses: Vec<String>,
    #[serde(default = "defaults::r_virtual")]
    pub r_virtual: f64,
    #[serde(default)]
    pub bus_model: BusModel,
    #[serde(default = "defaults::kcl_stabilization")]
    pub kcl_stabilization: f64,
    #[serde(default)]
    pub lines: Vec<LineSection>,
    #[serde(default)]
    pub loads: Vec<LoadSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSection {
    pub name: String,
    pub from: String,
    pub to: String,
    pub r: f64,
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    pub name: String,
    pub bus: String,
    pub r: f64,
    pub l: f64,
    #[serde(default = "defaults::yes")]
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// Edges `j -> i` meaning DG `to` receives from DG `from`.
    #[serde(default)]
    pub edges: Vec<EdgeSection>,
    /// Add the reverse of every edge.
    #[serde(default = "defaults::yes")]
    pub undirected: bool,
    /// Pinning gains by DG name.
    pub pinning: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSection {
    pub from: String,
    pub to: String,
    #[serde(default = "defaults::weight")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: ControllerKind,
    pub mode: ControlMode,
    pub tradeoff_mode: TradeoffMode,
    /// Voltage pinning gains used in trade-off mode, by DG name. Missing
    /// names get zero; when the table is absent the graph's pinning is used.
    pub pinning_v: Option<BTreeMap<String, f64>>,
    /// Actuator range of the droop input, as a multiple of `v_ref`.
    pub u_max_factor: f64,
    pub neighbor_commands: NeighborCommands,
    pub ftsm: FtsmParams,
    pub baseline: BaselineGains,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Ftsm,
            mode: ControlMode::Voltage,
            tradeoff_mode: TradeoffMode::SharingWithTightRegulation,
            pinning_v: None,
            u_max_factor: defaults::u_max_factor(),
            neighbor_commands: NeighborCommands::default(),
            ftsm: FtsmParams::default(),
            baseline: BaselineGains::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Variance (V^2) of the measurement noise on `v_od`.
    pub variance: f64,
    /// Also corrupt the other states read by the observer-free path.
    pub all_measurements: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSection {
    pub time: f64,
    pub kind: String,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub factor: Option<f64>,
    #[serde(default)]
    pub variance: Option<f64>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                }
                None => "scenario".to_string(),
            };
            ConfigError::new(location, e.message().to_string())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| ConfigError::new(format!("{}: {}", path.display(), e.location), e.message).into())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Built-in four-DG reference scenario.
    pub fn reference() -> Self {
        Self::parse(REFERENCE).expect("built-in reference scenario parses")
    }

    /// Built-in reactive-sharing scenario.
    pub fn tradeoff() -> Self {
        Self::parse(TRADEOFF).expect("built-in trade-off scenario parses")
    }

    /// Synthesized `n`-DG chain: the four reference units repeated, with
    /// the reference line and load data cycled along the chain, and the same
    /// event timeline with the last DG plugged out and back in.
    pub fn chain(n: usize) -> Self {
        let base = Self::reference();
        let mut file = base.clone();
        file.dgs.clear();
        file.network.buses = (1..=n).map(|k| format!("B{k}")).collect();
        file.network.lines.clear();
        file.network.loads.clear();
        file.graph.edges.clear();
        for k in 0..n {
            let mut dg = base.dgs[k % base.dgs.len()].clone();
            dg.name = format!("DG{}", k + 1);
            dg.bus = format!("B{}", k + 1);
            file.dgs.push(dg);
            let mut load = base.network.loads[k % base.network.loads.len()].clone();
            load.name = format!("Load{}", k + 1);
            load.bus = format!("B{}", k + 1);
            file.network.loads.push(load);
            if k + 1 < n {
                let mut line = base.network.lines[k % base.network.lines.len()].clone();
                line.name = format!("Line{}", k + 1);
                line.from = format!("B{}", k + 1);
                line.to = format!("B{}", k + 2);
                file.network.lines.push(line);
                file.graph.edges.push(EdgeSection { from: format!("DG{}", k + 1), to: format!("DG{}", k + 2), weight: 1.0 });
            }
        }
        let last = format!("DG{n}");
        for ev in &mut file.events {
            if ev.kind.starts_with("dg-") {
                ev.target = Some(last.clone());
            }
        }
        file
    }

    pub fn build(&self) -> Result<Scenario, Error> {
        build(self)
    }
}

pub const REFERENCE: &str = include_str!("../../configs/reference.toml");
pub const TRADEOFF: &str = include_str!("../../configs/tradeoff.toml");

fn positive(loc: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(loc, format!("must be positive, got {v}")))
    }
}

fn build(f: &ScenarioFile) -> Result<Scenario, Error> {
    let sim = &f.simulation;
    positive("simulation.duration", sim.duration)?;
    positive("simulation.dt_plant", sim.dt_plant)?;
    positive("simulation.control_period", sim.control_period)?;
    positive("simulation.v_ref", sim.v_ref)?;
    positive("simulation.v_n_initial", sim.v_n_initial)?;
    positive("simulation.standby_fraction", sim.standby_fraction)?;
    positive("simulation.reconnect_ramp", sim.reconnect_ramp)?;
    if sim.dt_plant > sim.control_period {
        return Err(ConfigError::new("simulation.dt_plant", "must not exceed control_period").into());
    }
    let ratio = sim.control_period / sim.dt_plant;
    let substeps = ratio.round();
    if (ratio - substeps).abs() > 1e-9 * ratio {
        return Err(ConfigError::new(
            "simulation.control_period",
            format!("must be an integer multiple of dt_plant ({} / {} = {ratio})", sim.control_period, sim.dt_plant),
        )
        .into());
    }

    if f.dgs.is_empty() {
        return Err(ConfigError::new("dgs", "at least one DG is required").into());
    }
    let mut names = BTreeMap::new();
    for (k, dg) in f.dgs.iter().enumerate() {
        if names.insert(dg.name.clone(), k).is_some() {
            return Err(ConfigError::new(format!("dgs[{}]", dg.name), "duplicate DG name").into());
        }
    }
    let dg_index = |loc: &str, name: &str| -> Result<usize, ConfigError> {
        names.get(name).copied().ok_or_else(|| ConfigError::new(loc, format!("unknown DG `{name}`")))
    };

    let net = &f.network;
    let bus_index = |loc: &str, name: &str| -> Result<usize, ConfigError> {
        net.buses.iter().position(|b| b == name).ok_or_else(|| ConfigError::new(loc, format!("unknown bus `{name}`")))
    };

    let mut dgs = Vec::with_capacity(f.dgs.len());
    let mut attachments = Vec::with_capacity(f.dgs.len());
    for dg in &f.dgs {
        let nominal = dg.params()?;
        let pert = dg.perturbation.clone().unwrap_or_default();
        pert.validate()
            .map_err(|e| ConfigError::new(format!("dgs[{}].perturbation.{}", dg.name, e.location), e.message))?;
        let plant = pert.apply(&nominal);
        let bus = bus_index(&format!("dgs[{}].bus", dg.name), &dg.bus)?;
        attachments.push(DgAttachment { name: dg.name.clone(), bus, closed: dg.connected, r_c: plant.r_c, l_c: plant.l_c });
        dgs.push(DgSetup { name: dg.name.clone(), nominal, plant, initially_connected: dg.connected });
    }

    let mut lines = Vec::new();
    for l in &net.lines {
        let loc = format!("network.lines[{}]", l.name);
        lines.push(Line {
            name: l.name.clone(),
            from: bus_index(&format!("{loc}.from"), &l.from)?,
            to: bus_index(&format!("{loc}.to"), &l.to)?,
            r: l.r,
            l: l.l,
        });
    }
    let mut loads = Vec::new();
    for l in &net.loads {
        loads.push(Load {
            name: l.name.clone(),
            bus: bus_index(&format!("network.loads[{}].bus", l.name), &l.bus)?,
            r: l.r,
            l: l.l,
            connected: l.connected,
        });
    }
    let mut network = NetworkModel::new(net.buses.clone(), lines, loads, attachments, net.r_virtual, net.bus_model)?;
    positive("network.kcl_stabilization", net.kcl_stabilization)?;
    network.kcl_stabilization = net.kcl_stabilization;

    let n = dgs.len();
    let mut edges = Vec::new();
    for e in &f.graph.edges {
        let from = dg_index("graph.edges.from", &e.from)?;
        let to = dg_index("graph.edges.to", &e.to)?;
        edges.push((to, from, e.weight));
    }
    let mut pins = Vec::new();
    for (name, &b) in &f.graph.pinning {
        pins.push((dg_index("graph.pinning", name)?, b));
    }
    let graph = CommGraph::from_edges(n, &edges, f.graph.undirected, &pins).map_err(|e| ConfigError::new("graph", e.to_string()))?;
    if graph.len() != n {
        return Err(ConfigError::new("graph", format!("graph has {} nodes but there are {n} DGs", graph.len())).into());
    }

    let c = &f.controller;
    c.ftsm.validate()?;
    c.baseline.validate()?;
    positive("controller.u_max_factor", c.u_max_factor)?;
    let pinning_v = match &c.pinning_v {
        Some(map) => {
            let mut v = vec![0.0; n];
            for (name, &b) in map {
                if !(b.is_finite() && b >= 0.0) {
                    return Err(ConfigError::new(format!("controller.pinning_v.{name}"), "must be nonnegative").into());
                }
                v[dg_index("controller.pinning_v", name)?] = b;
            }
            Some(nalgebra::DVector::from_vec(v))
        }
        None => None,
    };
    let split = match c.mode {
        ControlMode::Voltage => graph.split_for_tradeoff(TradeoffMode::VoltageOnly),
        ControlMode::Tradeoff => graph.split_with_pinning(c.tradeoff_mode, pinning_v.as_ref()),
    };

    f.observer.validate()?;
    if !(f.noise.variance.is_finite() && f.noise.variance >= 0.0) {
        return Err(ConfigError::new("noise.variance", "must be nonnegative").into());
    }

    let leader = match &sim.leader {
        Some(name) => dg_index("simulation.leader", name)?,
        None => 0,
    };

    let mut events = Vec::with_capacity(f.events.len());
    let mut last = 0.0;
    for (k, e) in f.events.iter().enumerate() {
        let loc = format!("events[{k}]");
        if !(e.time.is_finite() && e.time >= 0.0 && e.time <= sim.duration) {
            return Err(ConfigError::new(format!("{loc}.time"), format!("{} is outside [0, {}]", e.time, sim.duration)).into());
        }
        if e.time < last {
            return Err(ConfigError::new(format!("{loc}.time"), "events must be sorted by time").into());
        }
        last = e.time;
        let target = || e.target.clone().ok_or_else(|| ConfigError::new(format!("{loc}.target"), "required for this event kind"));
        let load = |name: &str| -> Result<usize, ConfigError> {
            network
                .loads
                .iter()
                .position(|l| l.name == name)
                .ok_or_else(|| ConfigError::new(format!("{loc}.target"), format!("unknown load `{name}`")))
        };
        let kind = match e.kind.as_str() {
            "activate-secondary" => EventKind::ActivateSecondary,
            "deactivate-secondary" => EventKind::DeactivateSecondary,
            "load-connect" => EventKind::LoadConnect(load(&target()?)?),
            "load-disconnect" => EventKind::LoadDisconnect(load(&target()?)?),
            "load-scale" => {
                let factor = e.factor.ok_or_else(|| ConfigError::new(format!("{loc}.factor"), "required for load-scale"))?;
                positive(&format!("{loc}.factor"), factor)?;
                EventKind::LoadScale(load(&target()?)?, factor)
            }
            "dg-disconnect" => EventKind::DgDisconnect(dg_index(&format!("{loc}.target"), &target()?)?),
            "dg-reconnect" => EventKind::DgReconnect(dg_index(&format!("{loc}.target"), &target()?)?),
            "set-noise-variance" => {
                let v = e.variance.ok_or_else(|| ConfigError::new(format!("{loc}.variance"), "required for set-noise-variance"))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ConfigError::new(format!("{loc}.variance"), "must be nonnegative").into());
                }
                EventKind::SetNoiseVariance(v)
            }
            other => return Err(ConfigError::new(format!("{loc}.kind"), format!("unknown event kind `{other}`")).into()),
        };
        events.push(Event { time: e.time, kind });
    }

    Ok(Scenario {
        name: String::new(),
        duration: sim.duration,
        dt_plant: sim.dt_plant,
        control_period: sim.control_period,
        substeps: substeps as usize,
        seed: sim.seed,
        v_ref: sim.v_ref,
        v_n_initial: sim.v_n_initial,
        standby_fraction: sim.standby_fraction,
        reconnect_ramp: sim.reconnect_ramp,
        leader,
        dgs,
        network,
        graph,
        split,
        controller: ControllerSettings {
            kind: c.kind,
            mode: c.mode,
            ftsm: c.ftsm.clone(),
            baseline: c.baseline,
            u_max: c.u_max_factor * sim.v_ref,
            neighbor_commands: c.neighbor_commands,
        },
        observer: f.observer.clone(),
        noise: NoiseSettings { variance: f.noise.variance, all_measurements: f.noise.all_measurements },
        events,
    })
}
