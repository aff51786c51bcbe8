//! Extended-state Kalman-Bucy filter on the triple integrator
//! `[v_od, v_od', xi]`.
//!
//! The filter ODE and the Riccati equation are integrated together with
//! RK4. The Riccati equation gets stiff while `P11 / R` is large (right after
//! initialization or a reset), so a step is split into as many substeps as
//! needed to keep `h * 2 P11 / R` below one.
//!
//! Within a step the measurement is interpolated linearly from the previous
//! sample to the current one. Holding it instead shifts it by half a step,
//! which the high extended-state gain turns into a large bias on `xi_hat`.

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, NumericalError};
use crate::linearize::ExtendedModel;

/// Process and measurement covariances plus the injected noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub q_x: Matrix2<f64>,
    pub q_xi: f64,
    pub r_x: f64,
    pub sigma2_meas: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let q = (self.q_x + self.q_x.transpose()) * 0.5;
        let eig = q.symmetric_eigenvalues();
        if !q.iter().all(|v| v.is_finite()) || eig.min() < 0.0 {
            return Err(ConfigError::new("observer.q_x", "must be positive semidefinite"));
        }
        if !(self.q_xi.is_finite() && self.q_xi > 0.0) {
            return Err(ConfigError::new("observer.q_xi", format!("must be positive, got {}", self.q_xi)));
        }
        if !(self.r_x.is_finite() && self.r_x > 0.0) {
            return Err(ConfigError::new("observer.r", format!("must be positive, got {}", self.r_x)));
        }
        if !(self.sigma2_meas.is_finite() && self.sigma2_meas >= 0.0) {
            return Err(ConfigError::new("noise.variance", format!("must be nonnegative, got {}", self.sigma2_meas)));
        }
        Ok(())
    }

    /// `blockdiag(Q_x, Q_xi)`.
    pub fn process_covariance(&self) -> Matrix3<f64> {
        let mut q = Matrix3::zeros();
        q.fixed_view_mut::<2, 2>(0, 0).copy_from(&self.q_x);
        q[(2, 2)] = self.q_xi;
        q
    }
}

/// Tuning block of a scenario.
///
/// `r` overrides the measurement covariance. Otherwise it is matched to the
/// injected noise: a sample held for one period `T` of variance `sigma2` has
/// spectral density `sigma2 * T`, floored at `r_floor * T` so that
/// noise-free runs keep a finite gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig {
    pub enabled: bool,
    pub q_x: [f64; 2],
    pub q_xi: f64,
    pub p0: [f64; 3],
    pub r: Option<f64>,
    pub r_floor: f64,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            q_x: [1e-2, 1e2],
            q_xi: 1e18,
            p0: [1.0, 1e4, 1e12],
            r: None,
            r_floor: 1e-2,
        }
    }
}

impl ObserverConfig {
    pub fn measurement_covariance(&self, sigma2: f64, period: f64) -> f64 {
        self.r.unwrap_or(period * sigma2.max(self.r_floor))
    }

    pub fn noise(&self, sigma2: f64, period: f64, seed: u64) -> NoiseConfig {
        NoiseConfig {
            q_x: Matrix2::from_diagonal(&nalgebra::Vector2::new(self.q_x[0], self.q_x[1])),
            q_xi: self.q_xi,
            r_x: self.measurement_covariance(sigma2, period),
            sigma2_meas: sigma2,
            seed,
        }
    }

    pub fn initial_covariance(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.p0))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (k, v) in self.p0.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(ConfigError::new(format!("observer.p0[{k}]"), format!("must be positive, got {v}")));
            }
        }
        if !(self.r_floor.is_finite() && self.r_floor > 0.0) {
            return Err(ConfigError::new("observer.r_floor", "must be positive"));
        }
        self.noise(0.0, 1e-4, 0).validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EskbfState {
    pub x_hat: Vector3<f64>,
    pub p: Matrix3<f64>,
    pub k: Vector3<f64>,
    pub model: ExtendedModel,
    pub p0: Matrix3<f64>,
    pub q: Matrix3<f64>,
    pub r: f64,
    /// Innovation `y - x_hat1` at the start of the last step.
    pub innovation: f64,
    /// Covariance resets forced by a loss of positive definiteness.
    pub forced_resets: usize,
    /// Resets requested by a reconnection.
    pub reconnect_resets: usize,
    pub last_substeps: usize,
    y_prev: Option<f64>,
}

/// Smallest eigenvalue of the symmetric part of `p`.
pub fn min_eigenvalue(p: &Matrix3<f64>) -> f64 {
    ((p + p.transpose()) * 0.5).symmetric_eigenvalues().min()
}

/// Positive definiteness of a covariance whose diagonal spans many orders of
/// magnitude: checked on the correlation matrix so that the test is
/// insensitive to the scale of each state.
pub fn is_spd(p: &Matrix3<f64>) -> bool {
    if !p.iter().all(|v| v.is_finite()) {
        return false;
    }
    let d = p.diagonal();
    if d.iter().any(|&v| v <= 0.0) {
        return false;
    }
    let s = d.map(|v| 1.0 / v.sqrt());
    let corr = Matrix3::from_fn(|i, j| p[(i, j)] * s[i] * s[j]);
    let corr = (corr + corr.transpose()) * 0.5;
    corr.cholesky().is_some()
}

/// Relative asymmetry `max|P - P^T| / max|P|`.
pub fn asymmetry(p: &Matrix3<f64>) -> f64 {
    (p - p.transpose()).amax() / p.amax().max(f64::MIN_POSITIVE)
}

const MAX_SUBSTEPS: usize = 1 << 16;

impl EskbfState {
    pub fn init(
        model: ExtendedModel,
        noise: &NoiseConfig,
        x0: Vector3<f64>,
        p0: Matrix3<f64>,
    ) -> Result<Self, crate::Error> {
        noise.validate()?;
        let sym = (p0 + p0.transpose()) * 0.5;
        if asymmetry(&p0) > 1e-9 || !is_spd(&sym) {
            return Err(NumericalError::NotPositiveDefinite { min_eigenvalue: min_eigenvalue(&p0) }.into());
        }
        let mut fs = Self {
            x_hat: x0,
            p: sym,
            k: Vector3::zeros(),
            model,
            p0: sym,
            q: noise.process_covariance(),
            r: noise.r_x,
            innovation: 0.0,
            forced_resets: 0,
            reconnect_resets: 0,
            last_substeps: 0,
            y_prev: None,
        };
        fs.k = fs.gain(&fs.p);
        Ok(fs)
    }

    fn gain(&self, p: &Matrix3<f64>) -> Vector3<f64> {
        p * self.model.c.transpose() / self.r
    }

    fn rhs(&self, x: &Vector3<f64>, p: &Matrix3<f64>, y: f64, u: f64) -> (Vector3<f64>, Matrix3<f64>) {
        let m = &self.model;
        let k = self.gain(p);
        let innov = y - (m.c * x)[0];
        let dx = m.a * x + m.b * u + k * innov;
        let dp = m.a * p + p * m.a.transpose() - k * (m.c * p) + self.q;
        (dx, dp)
    }

    /// Advances the estimate over `dt` to the instant of measurement `y`,
    /// with input `u` held. Returns `true` if the covariance had to be reset.
    pub fn step(&mut self, y: f64, u: f64, dt: f64) -> bool {
        debug_assert!(dt > 0.0);
        let y0 = self.y_prev.unwrap_or(y);
        self.y_prev = Some(y);
        self.innovation = y - self.x_hat[0];
        let stiff = 2.0 * self.p[(0, 0)].abs() / self.r;
        let n = ((dt * stiff).ceil() as usize).clamp(1, MAX_SUBSTEPS);
        let h = dt / n as f64;
        let dy = (y - y0) / n as f64;
        let (mut x, mut p) = (self.x_hat, self.p);
        for k in 0..n {
            let ya = y0 + dy * k as f64;
            let (yb, yc) = (ya + 0.5 * dy, ya + dy);
            let (k1x, k1p) = self.rhs(&x, &p, ya, u);
            let (k2x, k2p) = self.rhs(&(x + k1x * (h / 2.0)), &(p + k1p * (h / 2.0)), yb, u);
            let (k3x, k3p) = self.rhs(&(x + k2x * (h / 2.0)), &(p + k2p * (h / 2.0)), yb, u);
            let (k4x, k4p) = self.rhs(&(x + k3x * h), &(p + k3p * h), yc, u);
            x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
            p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
            p = (p + p.transpose()) * 0.5;
        }
        self.last_substeps = n;
        self.x_hat = x;
        let reset = !is_spd(&p);
        if reset {
            log::warn!("observer covariance lost positive definiteness; resetting to P0");
            self.forced_resets += 1;
            self.p = self.p0;
        } else {
            self.p = p;
        }
        self.k = self.gain(&self.p);
        reset
    }

    /// Restart after a reconnection: `P = P0`, `x_hat = (y, 0, 0)`.
    pub fn reset_on_reconnect(&mut self, y: f64) {
        self.y_prev = Some(y);
        self.p = self.p0;
        self.x_hat = Vector3::new(y, 0.0, 0.0);
        self.k = self.gain(&self.p);
        self.reconnect_resets += 1;
    }

    /// Same, but seeds the extended state with a known value.
    pub fn reset_with(&mut self, x0: Vector3<f64>) {
        self.reset_on_reconnect(x0[0]);
        self.x_hat = x0;
    }

    /// Replaces the measurement covariance (noise level change).
    pub fn set_measurement_covariance(&mut self, r: f64) {
        self.r = r;
        self.k = self.gain(&self.p);
    }
}
