//! Time stepping of a scenario.
//!
//! At every control instant `t_k` each DG samples its noisy `v_od`, advances
//! its observer over the last period, publishes its estimates, and computes
//! the droop input held over `[t_k, t_k+1)`. The plant is integrated with RK4 at
//! `dt_plant`; steps are split so that events land exactly on their time.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::control::{
    baseline_law, ftsm_law_sampled, ftsm_surface, lyapunov_diag, sharing_error, tracking_errors_weighted, tradeoff_surface,
    ControllerKind, NeighborCommands, NeighborMsg, ReferenceSignal,
};
use crate::error::{Error, NumericalError};
use crate::eskbf::EskbfState;
use crate::linearize::{ground_truth_xi, invert_input, lie_lf2_h, lie_lg_lf_h, vdot_od, ExtendedModel};
use crate::network::BreakerTarget;
use crate::plant::{droop_setpoints, DgState};

use super::integrate::{first_non_finite, rk4_step, Rk4Scratch};
use super::metrics::{compute_metrics, Metrics};
use super::system::{assemble_system, System};
use super::trace::{DgSample, Trace, TraceRecord};
use super::{ControlMode, EventKind, Scenario};

/// Connection state of a DG as seen by its controller.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Online,
    Offline,
    /// Reconnected at `since`; the droop input is ramping to nominal.
    Ramping { since: f64 },
}

#[derive(Debug, Clone)]
struct DgController {
    phase: Phase,
    observer: EskbfState,
    g0: f64,
    u: f64,
    z: f64,
    s: f64,
    e1: f64,
    e2: f64,
    saturated: bool,
    y_meas: f64,
    y_meas_prev: Option<f64>,
    y1: f64,
    y2: f64,
    xi_hat: f64,
}

/// Events and anomalies recorded while running.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// `(time, description)` of every applied event.
    pub events: Vec<(f64, String)>,
    /// `(time, dg)` whenever the common frame changes source.
    pub frame_source: Vec<(f64, usize)>,
    /// `(time, dg)` of covariance resets forced by a loss of definiteness.
    pub covariance_resets: Vec<(f64, usize)>,
    /// Largest relative asymmetry of any covariance after a step.
    pub max_covariance_asymmetry: f64,
    /// Observer steps after which a covariance failed a Cholesky test.
    pub indefinite_covariances: usize,
    /// Control instants at which some DG's input was clamped.
    pub saturated_instants: usize,
    /// Largest KCL residual seen at a control instant (A).
    pub max_kcl_residual: f64,
    /// Largest KCL residual during the last 20% of the run (A).
    pub final_kcl_residual: f64,
    /// Relative mismatch between generated and dissipated power at the end.
    pub final_power_residual: f64,
    pub plant_steps: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub metrics: Metrics,
    pub diagnostics: Diagnostics,
    /// Set when integration stopped early; the trace is partial.
    pub blowup: Option<NumericalError>,
    /// Plant state at the end of the run.
    pub final_state: Vec<f64>,
}

struct Engine<'a> {
    sc: &'a Scenario,
    sys: System,
    ctl: Vec<DgController>,
    x: Vec<f64>,
    active: bool,
    variance: f64,
    rng: ChaCha8Rng,
    next_event: usize,
    diag: Diagnostics,
    activation_tick: Option<usize>,
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario) -> Result<Self, Error> {
        let sys = assemble_system(sc)?;
        let x = vec![0.0; sys.layout.len()];
        let noise = sc.observer.noise(sc.noise.variance, sc.control_period, sc.seed);
        let p0 = sc.observer.initial_covariance();
        let mut ctl = Vec::with_capacity(sc.dgs.len());
        for d in &sc.dgs {
            let model = ExtendedModel::from_params(&d.nominal)?;
            let observer = EskbfState::init(model, &noise, Vector3::zeros(), p0)?;
            let phase = if d.initially_connected { Phase::Online } else { Phase::Offline };
            let u = if d.initially_connected { sc.v_n_initial } else { sc.standby_fraction * sc.v_ref };
            ctl.push(DgController {
                phase,
                observer,
                g0: lie_lg_lf_h(&d.nominal),
                u,
                z: 0.0,
                s: 0.0,
                e1: 0.0,
                e2: 0.0,
                saturated: false,
                y_meas: 0.0,
                y_meas_prev: None,
                y1: 0.0,
                y2: 0.0,
                xi_hat: 0.0,
            });
        }
        Ok(Self {
            sc,
            sys,
            ctl,
            x,
            active: false,
            variance: sc.noise.variance,
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            next_event: 0,
            diag: Diagnostics::default(),
            activation_tick: None,
        })
    }

    fn inputs(&self) -> Vec<f64> {
        self.ctl.iter().map(|c| c.u).collect()
    }

    fn frame_source(&self) -> usize {
        self.sys.aux(&self.x, &self.inputs()).frame_source
    }

    fn apply_event(&mut self, t: f64, kind: EventKind) -> Result<(), Error> {
        let before = self.frame_source();
        match kind {
            EventKind::ActivateSecondary => {
                self.active = true;
                for c in &mut self.ctl {
                    c.z = 0.0;
                }
            }
            EventKind::DeactivateSecondary => self.active = false,
            EventKind::LoadConnect(l) => {
                self.sys.network.set_breaker(BreakerTarget::Load(l), true)?;
            }
            EventKind::LoadDisconnect(l) => {
                self.sys.network.set_breaker(BreakerTarget::Load(l), false)?;
            }
            EventKind::LoadScale(l, f) => self.sys.network.scale_load(l, f)?,
            EventKind::DgDisconnect(i) => {
                if self.sys.network.set_breaker(BreakerTarget::Dg(i), false)? {
                    let c = &mut self.ctl[i];
                    c.phase = Phase::Offline;
                    c.u = self.sc.standby_fraction * self.sc.v_ref;
                    c.z = 0.0;
                }
            }
            EventKind::DgReconnect(i) => {
                if !self.sys.network.dg_connected(i) {
                    self.synchronize(i);
                    self.sys.network.set_breaker(BreakerTarget::Dg(i), true)?;
                    let c = &mut self.ctl[i];
                    c.phase = Phase::Ramping { since: t };
                    c.u = self.sc.standby_fraction * self.sc.v_ref;
                    c.z = 0.0;
                    c.y_meas_prev = None;
                    let y = c.y_meas;
                    c.observer.reset_on_reconnect(y);
                }
            }
            EventKind::SetNoiseVariance(v) => {
                self.variance = v;
                let r = self.sc.observer.measurement_covariance(v, self.sc.control_period);
                for c in &mut self.ctl {
                    c.observer.set_measurement_covariance(r);
                }
            }
        }
        self.sys.make_consistent(&mut self.x);
        let after = self.frame_source();
        if after != before {
            log::info!("t = {t:.6} s: common frame now follows {}", self.sc.dgs[after].name);
            self.diag.frame_source.push((t, after));
        }
        Ok(())
    }

    /// Rotates a reconnecting DG's frame so its output voltage is in phase
    /// with the bus it closes onto, with zero current through the breaker.
    fn synchronize(&mut self, i: usize) {
        let aux = self.sys.aux(&self.x, &self.inputs());
        let bus = self.sys.network.dgs[i].bus;
        let v_bus = aux.v_bus[bus];
        let range = self.sys.layout.dg(i);
        let mut s = DgState::from_slice(&self.x[range.clone()]);
        if v_bus.norm() > 1e-6 && s.v_o().norm() > 1e-6 {
            s.delta = v_bus.arg() - s.v_o().arg();
        }
        s.i_od = 0.0;
        s.i_oq = 0.0;
        s.write_to(&mut self.x[range]);
    }

    fn apply_events_until(&mut self, t: f64) -> Result<(), Error> {
        while let Some(e) = self.sc.events.get(self.next_event).copied() {
            if e.time > t + 1e-9 {
                break;
            }
            let label = e.label(self.sc);
            log::debug!("t = {:.6} s: {label}", e.time);
            self.apply_event(e.time, e.kind)?;
            self.diag.events.push((e.time, label));
            self.next_event += 1;
        }
        Ok(())
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Measurements, observer updates, consensus and control at tick `k`.
    fn control(&mut self, k: usize, t: f64) -> TraceRecord {
        let sc = self.sc;
        let tc = sc.control_period;
        let n = sc.dgs.len();
        let sigma = self.variance.sqrt();
        let inputs = self.inputs();
        let aux = self.sys.aux(&self.x, &inputs);
        let states: Vec<DgState> = (0..n).map(|i| self.sys.dg_state(&self.x, i)).collect();

        // Sampling and estimation.
        for i in 0..n {
            let noise = sigma * self.normal();
            let extra: Option<[f64; 13]> = if sc.noise.all_measurements && !sc.observer.enabled {
                let mut v = [0.0; 13];
                for e in &mut v {
                    *e = sigma * self.normal();
                }
                Some(v)
            } else {
                None
            };
            let c = &mut self.ctl[i];
            let nominal = &sc.dgs[i].nominal;
            c.y_meas = states[i].v_od + noise;
            if k > 0 {
                c.observer.step(c.y_meas, c.u, tc);
                if c.observer.forced_resets > 0 && self.diag.covariance_resets.iter().filter(|r| r.1 == i).count() < c.observer.forced_resets {
                    self.diag.covariance_resets.push((t, i));
                }
                self.diag.max_covariance_asymmetry =
                    self.diag.max_covariance_asymmetry.max(crate::eskbf::asymmetry(&c.observer.p));
                if c.observer.p.cholesky().is_none() {
                    self.diag.indefinite_covariances += 1;
                }
            } else {
                c.observer.reset_with(Vector3::new(c.y_meas, 0.0, 0.0));
                c.observer.reconnect_resets = 0;
            }
            if sc.observer.enabled {
                c.y1 = c.observer.x_hat[0];
                c.y2 = c.observer.x_hat[1];
                c.xi_hat = c.observer.x_hat[2];
            } else {
                // Raw measurement, first difference and the drift evaluated
                // on measured states.
                c.y1 = c.y_meas;
                c.y2 = c.y_meas_prev.map_or(0.0, |prev| (c.y_meas - prev) / tc);
                let mut measured = states[i];
                if let Some(extra) = extra {
                    let mut arr = measured.to_array();
                    for (a, e) in arr.iter_mut().zip(extra) {
                        *a += e;
                    }
                    measured = DgState::from_slice(&arr);
                }
                measured.v_od = c.y_meas;
                let w = droop_setpoints(nominal, &measured, c.u).omega;
                c.xi_hat = lie_lf2_h(nominal, &measured, aux.v_bus_local[i].re, w);
            }
            c.y_meas_prev = Some(c.y_meas);
        }

        // Messages published this period; z is last period's command.
        let msgs: Vec<NeighborMsg> = (0..n)
            .map(|i| {
                let c = &self.ctl[i];
                NeighborMsg {
                    sender: i,
                    y1_hat: c.y1,
                    y2_hat: c.y2,
                    z: c.z,
                    nq_times_q: sc.dgs[i].nominal.n_q * states[i].q,
                    stale: c.phase != Phase::Online,
                    timestamp: t,
                }
            })
            .collect();

        let reference = ReferenceSignal { y0: sc.v_ref };
        let split = &sc.split;
        let tradeoff = sc.controller.mode == ControlMode::Tradeoff;
        let mut z_new = vec![0.0; n];
        let mut surfaces = Vec::with_capacity(n);
        for i in 0..n {
            let c = &mut self.ctl[i];
            if let Phase::Ramping { since } = c.phase {
                let frac = ((t - since) / sc.reconnect_ramp).clamp(0.0, 1.0);
                let start = sc.standby_fraction * sc.v_ref;
                c.u = start + (sc.v_n_initial - start) * frac;
                c.saturated = false;
                if frac >= 1.0 {
                    c.phase = Phase::Online;
                }
                continue;
            }
            if c.phase == Phase::Offline {
                c.u = sc.standby_fraction * sc.v_ref;
                c.saturated = false;
                continue;
            }
            if !self.active {
                c.s = 0.0;
                c.e1 = 0.0;
                c.e2 = 0.0;
                continue;
            }
            let live_v = (0..n).filter(|&j| j != i && !msgs[j].stale).map(|j| (j, split.weight_v(i, j))).filter(|&(_, a)| a > 0.0);
            let pin = split.pinning_v[i];
            let (e1, e2) = tracking_errors_weighted(live_v.clone(), pin, c.y1, c.y2, &msgs, reference);
            let mut gain: f64 = live_v.clone().map(|(_, a)| a).sum::<f64>() + pin;
            if gain <= 0.0 {
                gain = sc.graph.gain(i);
            }
            let nsum: f64 = match sc.controller.neighbor_commands {
                NeighborCommands::Delayed => live_v.map(|(j, a)| a * msgs[j].z).sum(),
                NeighborCommands::Omitted => 0.0,
            };
            let p = &sc.controller.ftsm;
            let s = if tradeoff {
                let live_q = (0..n).filter(|&j| j != i && !msgs[j].stale).map(|j| (j, split.weight_q(i, j))).filter(|&(_, a)| a > 0.0);
                let e_q = sharing_error(live_q, msgs[i].nq_times_q, &msgs);
                tradeoff_surface(p, e1, e2, e_q)
            } else {
                ftsm_surface(p, e1, e2)
            };
            let z = match sc.controller.kind {
                ControllerKind::Ftsm => ftsm_law_sampled(p, gain, nsum, s, e1, e2, tc),
                ControllerKind::Baseline => baseline_law(&sc.controller.baseline, gain, nsum, e1, e2),
            };
            let (u, sat) = invert_input(z, c.xi_hat, c.g0, sc.controller.u_max);
            c.u = u;
            c.saturated = sat;
            c.s = s;
            c.e1 = e1;
            c.e2 = e2;
            z_new[i] = z;
            surfaces.push(s);
        }
        for (c, z) in self.ctl.iter_mut().zip(z_new) {
            c.z = z;
        }
        if self.active && self.activation_tick.is_none() {
            self.activation_tick = Some(k);
        }
        if self.ctl.iter().any(|c| c.saturated) {
            self.diag.saturated_instants += 1;
        }

        let dgs = (0..n)
            .map(|i| {
                let c = &self.ctl[i];
                let s = &states[i];
                let plant = &sc.dgs[i].plant;
                let w = aux.omega[i];
                let controlled = self.active && c.phase == Phase::Online;
                DgSample {
                    v_od: s.v_od,
                    v_oq: s.v_oq,
                    p: s.p,
                    q: s.q,
                    v_n: c.u,
                    s: if controlled { c.s } else { 0.0 },
                    e1: if controlled { c.e1 } else { 0.0 },
                    e2: if controlled { c.e2 } else { 0.0 },
                    x_hat: [c.observer.x_hat[0], c.observer.x_hat[1], c.observer.x_hat[2]],
                    vdot_true: vdot_od(plant, s, w),
                    xi_true: ground_truth_xi(plant, &sc.dgs[i].nominal, s, aux.v_bus_local[i].re, w, c.u),
                    saturated: c.saturated,
                    connected: self.sys.network.dg_connected(i),
                    controlled,
                    p_diag: [c.observer.p[(0, 0)], c.observer.p[(1, 1)], c.observer.p[(2, 2)]],
                    innovation: c.observer.innovation,
                }
            })
            .collect();
        TraceRecord { t, dgs, lyapunov: lyapunov_diag(&surfaces), omega_com: aux.omega_com }
    }

    fn step_plant(&mut self, t0: f64, dt: f64, scratch: &mut Rk4Scratch) -> Result<(), NumericalError> {
        let u = self.inputs();
        let sys = &self.sys;
        rk4_step(&mut self.x, dt, scratch, |x, dx| sys.derivative(x, &u, dx));
        self.diag.plant_steps += 1;
        if let Some(idx) = first_non_finite(&self.x).or_else(|| self.x.iter().position(|v| v.abs() > 1e9)) {
            let names = self.sys.layout.names(&self.sys.network, &self.sc.dgs.iter().map(|d| d.name.clone()).collect::<Vec<_>>());
            let (component, name) = match names[idx].split_once('.') {
                Some((a, b)) => (a.to_string(), b.to_string()),
                None => (names[idx].clone(), String::new()),
            };
            return Err(NumericalError::Blowup { time: t0 + dt, component, name, value: self.x[idx] });
        }
        Ok(())
    }
}

/// Runs a scenario to completion (or until the state blows up).
/// Plant state at a control instant, after the inputs for the next period
/// were computed.
pub struct Probe<'a> {
    pub tick: usize,
    pub t: f64,
    pub system: &'a System,
    pub x: &'a [f64],
    /// Droop inputs held over the next period.
    pub u: &'a [f64],
}

pub fn run(sc: &Scenario) -> Result<RunOutput, Error> {
    run_with_probe(sc, |_| {})
}

/// [`run`], calling `probe` at every control instant.
pub fn run_with_probe(sc: &Scenario, mut probe: impl FnMut(&Probe)) -> Result<RunOutput, Error> {
    let mut eng = Engine::new(sc)?;
    eng.apply_events_until(0.0)?;
    eng.diag.frame_source.push((0.0, eng.frame_source()));
    let tc = sc.control_period;
    let ticks = (sc.duration / tc).round() as usize;
    let dt = sc.dt_plant;
    let mut trace = Trace {
        dg_names: sc.dgs.iter().map(|d| d.name.clone()).collect(),
        n_q: sc.dgs.iter().map(|d| d.nominal.n_q).collect(),
        records: Vec::with_capacity(ticks + 1),
    };
    let mut scratch = Rk4Scratch::new(eng.x.len());
    let mut blowup = None;
    let tail_start = 0.8 * sc.duration;
    'outer: for k in 0..=ticks {
        let t = k as f64 * tc;
        eng.apply_events_until(t)?;
        let rec = eng.control(k, t);
        let kcl = eng.sys.kcl_residual(&eng.x);
        eng.diag.max_kcl_residual = eng.diag.max_kcl_residual.max(kcl);
        if t >= tail_start {
            eng.diag.final_kcl_residual = eng.diag.final_kcl_residual.max(kcl);
        }
        trace.records.push(rec);
        let u = eng.inputs();
        probe(&Probe { tick: k, t, system: &eng.sys, x: &eng.x, u: &u });
        if k == ticks {
            break;
        }
        for j in 0..sc.substeps {
            let t0 = t + j as f64 * dt;
            let t1 = if j + 1 == sc.substeps { (k + 1) as f64 * tc } else { t0 + dt };
            let mut cur = t0;
            // Events strictly inside this plant step split it.
            while let Some(e) = sc.events.get(eng.next_event).copied() {
                if e.time <= cur + 1e-9 || e.time >= t1 - 1e-9 {
                    break;
                }
                if let Err(err) = eng.step_plant(cur, e.time - cur, &mut scratch) {
                    blowup = Some(err);
                    break 'outer;
                }
                cur = e.time;
                eng.apply_events_until(cur)?;
            }
            if let Err(err) = eng.step_plant(cur, t1 - cur, &mut scratch) {
                blowup = Some(err);
                break 'outer;
            }
        }
    }
    if let Some(err) = &blowup {
        log::error!("{err}");
    }
    let (gen, load, loss) = eng.sys.power_balance(&eng.x);
    eng.diag.final_power_residual = (gen - load - loss).abs() / load.abs().max(1.0);
    let metrics = compute_metrics(&trace, sc);
    Ok(RunOutput { trace, metrics, diagnostics: eng.diag, blowup, final_state: eng.x })
}

/// Metrics for one noise level, with and without the observer.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub variance: f64,
    pub with_observer: RunOutput,
    pub without_observer: RunOutput,
}

/// Runs `sc` at every variance, with and without the observer path. Runs
/// are independent and execute on separate threads.
pub fn run_noise_sweep(sc: &Scenario, variances: &[f64]) -> Result<Vec<SweepPoint>, Error> {
    let jobs: Vec<(f64, bool)> = variances.iter().flat_map(|&v| [(v, true), (v, false)]).collect();
    let results: Vec<Result<RunOutput, Error>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(v, obs)| {
                let mut s = sc.clone();
                s.noise.variance = v;
                s.observer.enabled = obs;
                scope.spawn(move || run(&s))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(variances.len());
    let mut it = results.into_iter();
    for &v in variances {
        let with_observer = it.next().expect("paired result")?;
        let without_observer = it.next().expect("paired result")?;
        out.push(SweepPoint { variance: v, with_observer, without_observer });
    }
    Ok(out)
}
