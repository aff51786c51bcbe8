//! Summary statistics of a trace, computed per inter-event window.

use serde::Serialize;

use super::trace::Trace;
use super::Scenario;

/// Windows shorter than this carry no statistics.
pub const MIN_WINDOW: f64 = 0.15;
/// Band around the reference counted as settled (V).
pub const SETTLING_BAND: f64 = 1.0;
/// Time the voltages must stay in the band (s).
pub const SETTLING_HOLD: f64 = 0.1;
/// Fraction of a window, at its end, treated as steady state.
pub const STEADY_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DgWindowStats {
    pub name: String,
    /// Breaker closed throughout the steady part of the window.
    pub connected: bool,
    pub mean_v_od: f64,
    /// `|mean(v_od) - v_ref|` over the steady part (V).
    pub mean_error: f64,
    /// `max |v_od - v_ref|` over the steady part (V).
    pub peak_error: f64,
    pub std_v_od: f64,
    /// `max |v_od - v_ref|` over the whole window, transient included, at
    /// instants where the breaker is closed (V).
    pub transient_peak: f64,
    /// Breaker closed at every instant of the window.
    pub connected_throughout: bool,
    /// Mean of `n_Q * Q` over the steady part (V).
    pub mean_nq_q: f64,
    /// Observer derivative estimate: RMSE over the steady part divided by
    /// the RMS of the true derivative there.
    pub rmse_vdot_rel: f64,
    /// Same for the lumped drift estimate.
    pub rmse_xi_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowMetrics {
    pub start: f64,
    pub end: f64,
    /// Event that opened the window.
    pub label: String,
    pub available: bool,
    /// Seconds from window start until every connected DG stays within the
    /// band for the hold time; absent when it never does.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settling: Option<f64>,
    pub dgs: Vec<DgWindowStats>,
    /// `max - min` of the mean `n_Q * Q` over connected DGs (V).
    pub dispersion: f64,
    /// Dispersion divided by `|mean(n_Q * Q)|`.
    pub dispersion_rel: f64,
    /// Samples, after every surface entered the boundary layer, where the
    /// Lyapunov function increased beyond tolerance.
    pub lyapunov_violations: usize,
    /// Samples after reaching with some `|s_i|` above twice the boundary
    /// layer.
    pub surface_excursions: usize,
    /// Whether the surfaces reached the boundary layer in this window.
    pub reached: bool,
}

impl WindowMetrics {
    fn connected(&self) -> impl Iterator<Item = &DgWindowStats> {
        self.dgs.iter().filter(|d| d.connected)
    }

    pub fn max_mean_error(&self) -> f64 {
        self.connected().map(|d| d.mean_error).fold(0.0, f64::max)
    }

    pub fn max_peak_error(&self) -> f64 {
        self.connected().map(|d| d.peak_error).fold(0.0, f64::max)
    }

    pub fn max_std(&self) -> f64 {
        self.connected().map(|d| d.std_v_od).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub v_ref: f64,
    /// Lyapunov value at the activation instant, the scale of its tolerance.
    pub lyapunov_at_activation: f64,
    pub windows: Vec<WindowMetrics>,
}

impl Metrics {
    pub fn available(&self) -> impl Iterator<Item = &WindowMetrics> {
        self.windows.iter().filter(|w| w.available)
    }

    /// Window opened by the event at `t`, if any.
    pub fn window_at(&self, t: f64) -> Option<&WindowMetrics> {
        self.windows.iter().find(|w| (w.start - t).abs() < 1e-9)
    }

    /// Windows from `t` on.
    pub fn windows_after(&self, t: f64) -> impl Iterator<Item = &WindowMetrics> {
        self.windows.iter().filter(move |w| w.start >= t - 1e-9)
    }

    pub fn lyapunov_violations(&self) -> usize {
        self.windows.iter().map(|w| w.lyapunov_violations).sum()
    }

    pub fn surface_excursions(&self) -> usize {
        self.windows.iter().map(|w| w.surface_excursions).sum()
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    if v.len() < 2 {
        return 0.0;
    }
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn relative_rmse(est: impl Iterator<Item = f64>, truth: &[f64]) -> f64 {
    let err = rms(est.zip(truth).map(|(e, t)| e - t));
    let scale = rms(truth.iter().copied());
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// First time, measured from `times[0]`, after which `inside` holds for
/// `hold` seconds without interruption.
pub fn settling_time(times: &[f64], inside: &[bool], hold: f64) -> Option<f64> {
    let t0 = *times.first()?;
    let mut entered: Option<usize> = None;
    for (k, (&t, &ok)) in times.iter().zip(inside).enumerate() {
        if !ok {
            entered = None;
            continue;
        }
        let start = *entered.get_or_insert(k);
        if t - times[start] >= hold - 1e-9 {
            return Some(times[start] - t0);
        }
    }
    None
}

/// Splits the trace at event times and summarizes every window.
pub fn compute_metrics(trace: &Trace, sc: &Scenario) -> Metrics {
    let v_ref = sc.v_ref;
    let end = trace.records.last().map_or(0.0, |r| r.t);
    let mut bounds: Vec<(f64, String)> = vec![(0.0, "start".into())];
    for e in &sc.events {
        let label = e.label(sc);
        match bounds.last_mut() {
            Some(last) if (last.0 - e.time).abs() < 1e-9 => {
                if last.1 == "start" {
                    last.1 = label;
                } else {
                    last.1 = format!("{}; {label}", last.1);
                }
            }
            _ => bounds.push((e.time, label)),
        }
    }
    bounds.retain(|b| b.0 <= end + 1e-9);

    let activation = sc.activation_time();
    let lyapunov_at_activation = activation
        .and_then(|t| trace.records.get(trace.index_at(t)))
        .map_or(0.0, |r| r.lyapunov);
    let tol = 1e-6 * lyapunov_at_activation;
    let phi = sc.controller.ftsm.boundary_layer;

    let mut windows = Vec::with_capacity(bounds.len());
    for (w, (start, label)) in bounds.iter().enumerate() {
        let stop = bounds.get(w + 1).map_or(end, |b| b.0);
        let lo = trace.index_at(*start);
        let hi = if w + 1 < bounds.len() { trace.index_at(stop) } else { trace.records.len() };
        let recs = &trace.records[lo..hi.max(lo)];
        let available = stop - start >= MIN_WINDOW - 1e-9 && recs.len() >= 2;
        let mut wm = WindowMetrics {
            start: *start,
            end: stop,
            label: label.clone(),
            available,
            settling: None,
            dgs: Vec::new(),
            dispersion: 0.0,
            dispersion_rel: 0.0,
            lyapunov_violations: 0,
            surface_excursions: 0,
            reached: false,
        };
        if !available {
            windows.push(wm);
            continue;
        }

        let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
        let inside: Vec<bool> = recs
            .iter()
            .map(|r| r.dgs.iter().filter(|d| d.connected).all(|d| (d.v_od - v_ref).abs() <= SETTLING_BAND))
            .collect();
        wm.settling = settling_time(&times, &inside, SETTLING_HOLD);

        let steady_from = stop - STEADY_FRACTION * (stop - start);
        let steady = &recs[recs.partition_point(|r| r.t < steady_from - 1e-9)..];
        for (i, name) in trace.dg_names.iter().enumerate() {
            let v: Vec<f64> = steady.iter().map(|r| r.dgs[i].v_od).collect();
            let m = mean(&v);
            let nq = trace.n_q.get(i).copied().unwrap_or(0.0);
            let vdot_true: Vec<f64> = steady.iter().map(|r| r.dgs[i].vdot_true).collect();
            let xi_true: Vec<f64> = steady.iter().map(|r| r.dgs[i].xi_true).collect();
            wm.dgs.push(DgWindowStats {
                name: name.clone(),
                connected: steady.iter().all(|r| r.dgs[i].connected),
                mean_v_od: m,
                mean_error: (m - v_ref).abs(),
                peak_error: v.iter().map(|x| (x - v_ref).abs()).fold(0.0, f64::max),
                std_v_od: std(&v),
                transient_peak: recs
                    .iter()
                    .filter(|r| r.dgs[i].connected)
                    .map(|r| (r.dgs[i].v_od - v_ref).abs())
                    .fold(0.0, f64::max),
                connected_throughout: recs.iter().all(|r| r.dgs[i].connected),
                mean_nq_q: nq * mean(&steady.iter().map(|r| r.dgs[i].q).collect::<Vec<_>>()),
                rmse_vdot_rel: relative_rmse(steady.iter().map(|r| r.dgs[i].x_hat[1]), &vdot_true),
                rmse_xi_rel: relative_rmse(steady.iter().map(|r| r.dgs[i].x_hat[2]), &xi_true),
            });
        }
        let shares: Vec<f64> = wm.connected().map(|d| d.mean_nq_q).collect();
        if !shares.is_empty() {
            let hi = shares.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = shares.iter().copied().fold(f64::INFINITY, f64::min);
            wm.dispersion = hi - lo;
            let m = mean(&shares).abs();
            wm.dispersion_rel = if m > 0.0 { wm.dispersion / m } else { 0.0 };
        }

        // Every connected DG must be under secondary control: a unit still
        // ramping in after a reconnection has not started its reaching phase.
        let reach = recs.iter().position(|r| {
            r.dgs.iter().any(|d| d.controlled)
                && r.dgs.iter().all(|d| d.connected == d.controlled)
                && r.dgs.iter().filter(|d| d.controlled).all(|d| d.s.abs() < phi)
        });
        if let Some(k0) = reach {
            wm.reached = true;
            for pair in recs[k0..].windows(2) {
                if pair[1].lyapunov > pair[0].lyapunov + tol {
                    wm.lyapunov_violations += 1;
                }
            }
            wm.surface_excursions =
                recs[k0..].iter().filter(|r| r.dgs.iter().any(|d| d.controlled && d.s.abs() > 2.0 * phi)).count();
        }
        windows.push(wm);
    }
    Metrics { v_ref, lyapunov_at_activation, windows }
}

/// Steady-state properties a run with active secondary control must meet:
/// in voltage mode every connected DG within the settling band in every
/// steady window after activation and settling after activation within
/// `max_settling`; in trade-off mode reactive-sharing dispersion below
/// `max_dispersion_rel`. Returns one line per violation.
pub fn check_properties(m: &Metrics, sc: &Scenario, max_settling: f64, max_dispersion_rel: f64) -> Vec<String> {
    let mut out = Vec::new();
    let Some(t_act) = sc.activation_time() else {
        return out;
    };
    let t_off = sc
        .events
        .iter()
        .find(|e| e.time > t_act && matches!(e.kind, super::EventKind::DeactivateSecondary))
        .map_or(f64::INFINITY, |e| e.time);
    for w in m.windows_after(t_act).filter(|w| w.available && w.start < t_off - 1e-9) {
        match sc.controller.mode {
            super::ControlMode::Voltage => {
                if (w.start - t_act).abs() < 1e-9 && w.settling.is_none_or(|ts| ts >= max_settling) {
                    out.push(format!("window at {:.3} s: not settled within {max_settling} s", w.start));
                }
                for d in w.connected().filter(|d| d.peak_error >= SETTLING_BAND) {
                    out.push(format!(
                        "window at {:.3} s: {} deviates {:.3} V from the reference",
                        w.start, d.name, d.peak_error
                    ));
                }
            }
            super::ControlMode::Tradeoff => {
                if w.dispersion_rel >= max_dispersion_rel {
                    out.push(format!(
                        "window at {:.3} s: sharing dispersion {:.2}% of the mean",
                        w.start,
                        100.0 * w.dispersion_rel
                    ));
                }
            }
        }
    }
    out
}
