//! Scenario engine: assembles the coupled DG and network ODE, runs the
//! distributed controllers and observers at their sampling period, applies
//! timed events, and records traces and metrics.

pub mod config;
pub mod engine;
pub mod integrate;
pub mod metrics;
pub mod system;
pub mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::control::{BaselineGains, ControllerKind, FtsmParams, NeighborCommands};
use crate::error::ConfigError;
use crate::eskbf::ObserverConfig;
use crate::graph::{CommGraph, TradeoffSplit};
use crate::network::NetworkModel;
use crate::plant::DgParams;

pub use config::ScenarioFile;
pub use engine::{run, run_noise_sweep, run_with_probe, Probe, Diagnostics, RunOutput, SweepPoint};
pub use metrics::{check_properties, compute_metrics, Metrics, WindowMetrics};
pub use system::{assemble_system, Layout, System};
pub use trace::{DgSample, Trace, TraceRecord};

/// Objective of the secondary layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// Voltage restoration only.
    #[default]
    Voltage,
    /// Voltage regulation traded against reactive-power sharing.
    Tradeoff,
}

impl FromStr for ControlMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "voltage" => Ok(Self::Voltage),
            "tradeoff" => Ok(Self::Tradeoff),
            other => Err(ConfigError::new("controller.mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgSetup {
    pub name: String,
    /// Parameters the controller and observer believe.
    pub nominal: DgParams,
    /// Parameters actually simulated.
    pub plant: DgParams,
    pub initially_connected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSettings {
    pub kind: ControllerKind,
    pub mode: ControlMode,
    pub ftsm: FtsmParams,
    pub baseline: BaselineGains,
    pub u_max: f64,
    pub neighbor_commands: NeighborCommands,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSettings {
    pub variance: f64,
    pub all_measurements: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    ActivateSecondary,
    DeactivateSecondary,
    LoadConnect(usize),
    LoadDisconnect(usize),
    /// Multiplies the load's admittance.
    LoadScale(usize, f64),
    DgDisconnect(usize),
    DgReconnect(usize),
    SetNoiseVariance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

impl Event {
    pub fn label(&self, s: &Scenario) -> String {
        match self.kind {
            EventKind::ActivateSecondary => "activate-secondary".into(),
            EventKind::DeactivateSecondary => "deactivate-secondary".into(),
            EventKind::LoadConnect(l) => format!("load-connect {}", s.network.loads[l].name),
            EventKind::LoadDisconnect(l) => format!("load-disconnect {}", s.network.loads[l].name),
            EventKind::LoadScale(l, f) => format!("load-scale {} x{f}", s.network.loads[l].name),
            EventKind::DgDisconnect(i) => format!("dg-disconnect {}", s.dgs[i].name),
            EventKind::DgReconnect(i) => format!("dg-reconnect {}", s.dgs[i].name),
            EventKind::SetNoiseVariance(v) => format!("set-noise-variance {v}"),
        }
    }
}

/// A validated, runnable scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub dt_plant: f64,
    pub control_period: f64,
    /// Plant steps per control period.
    pub substeps: usize,
    pub seed: u64,
    pub v_ref: f64,
    pub v_n_initial: f64,
    pub standby_fraction: f64,
    pub reconnect_ramp: f64,
    pub leader: usize,
    pub dgs: Vec<DgSetup>,
    pub network: NetworkModel,
    pub graph: CommGraph,
    pub split: TradeoffSplit,
    pub controller: ControllerSettings,
    pub observer: ObserverConfig,
    pub noise: NoiseSettings,
    pub events: Vec<Event>,
}

impl Scenario {
    pub fn activation_time(&self) -> Option<f64> {
        self.events.iter().find(|e| matches!(e.kind, EventKind::ActivateSecondary)).map(|e| e.time)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} DGs, {} buses, {} lines, {} loads, {} events, {:.3} s at dt = {:e} s (control period {:e} s)",
            self.dgs.len(),
            self.network.buses.len(),
            self.network.lines.len(),
            self.network.loads.len(),
            self.events.len(),
            self.duration,
            self.dt_plant,
            self.control_period
        )?;
        for e in &self.events {
            writeln!(f, "  t = {:.4} s: {}", e.time, e.label(self))?;
        }
        Ok(())
    }
}
