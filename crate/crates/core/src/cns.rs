//! Unidirectional compressible Navier–Stokes reduction with viscous heating.
//!
//! On `−1/4 ≤ x₁ ≤ 1/4` with uniform density:
//!
//! ```text
//! ∂ₜu₂ = (1/ρ) ∂ₓ(μ(θ) ∂ₓu₂) + g₀ sin 2πx₁
//! ∂ₜθ  = (2/3ρ) ∂ₓ(κ(θ) ∂ₓθ) + (2/3)(μ(θ)/ρ)(∂ₓu₂)²
//! ```
//!
//! with `∂ₓu₂ = ∂ₓθ = 0` at both ends, `μ = C_μ θ^δ` and `κ = C_κ θ^δ`.
//! Diffusion is backward Euler with coefficients frozen at the old
//! temperature; the heating uses the face gradients of the new velocity.

use std::f64::consts::PI;

use thiserror::Error;

use crate::diagnostics::{log_times, loglog_slope};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CnsError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("step failed at t = {time}: {detail}")]
    Step { time: f64, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnsConfig {
    pub g0: f64,
    pub delta: f64,
    pub c_mu: f64,
    pub c_kappa: f64,
    pub rho0: f64,
    pub n_cells: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Log-spaced samples per decade of `t`, starting where the spacing
    /// first exceeds `dt`.
    pub samples_per_decade: usize,
}

impl CnsConfig {
    /// Transport coefficients of the dimensionless BGK model:
    /// `C_μ = (π/8)^{1/2}`, `C_κ = (5/2)(π/8)^{1/2}`.
    pub fn new(g0: f64, delta: f64) -> Self {
        let c = (PI / 8.0).sqrt();
        Self {
            g0,
            delta,
            c_mu: c,
            c_kappa: 2.5 * c,
            rho0: 1.0,
            n_cells: 64,
            dt: 0.01,
            t_end: 1000.0,
            samples_per_decade: 20,
        }
    }

    pub fn validate(&self) -> Result<(), CnsError> {
        let bad = |m: String| Err(CnsError::Config(m));
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad(format!("delta = {} (must be >= 0)", self.delta));
        }
        if !(self.c_mu > 0.0 && self.c_kappa > 0.0) {
            return bad(format!("c_mu = {}, c_kappa = {} (must be > 0)", self.c_mu, self.c_kappa));
        }
        if !(self.rho0 > 0.0) {
            return bad(format!("rho0 = {} (must be > 0)", self.rho0));
        }
        if !self.g0.is_finite() {
            return bad(format!("g0 = {}", self.g0));
        }
        if self.n_cells < 4 {
            return bad(format!("n_cells = {} (need at least 4)", self.n_cells));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} (must be > 0)", self.dt));
        }
        if !(self.t_end > self.dt) {
            return bad(format!("t_end = {} (must exceed dt)", self.t_end));
        }
        if self.samples_per_decade < 1 {
            return bad("samples_per_decade must be >= 1".into());
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        0.5 / self.n_cells as f64
    }

    pub fn center(&self, cell: usize) -> f64 {
        -0.25 + (cell as f64 + 0.5) * self.dx()
    }

    pub fn mu(&self, theta: f64) -> f64 {
        self.c_mu * theta.powf(self.delta)
    }

    pub fn kappa(&self, theta: f64) -> f64 {
        self.c_kappa * theta.powf(self.delta)
    }

    /// `C₁ = (1+δ) g₀² ρ / (12π² C_μ)`.
    pub fn c1(&self) -> f64 {
        (1.0 + self.delta) * self.g0 * self.g0 * self.rho0 / (12.0 * PI * PI * self.c_mu)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnsState {
    pub u2: Vec<f64>,
    pub theta: Vec<f64>,
    pub rho: f64,
    pub time: f64,
}

impl CnsState {
    /// `u₂ = 0`, `θ = 1`.
    pub fn initial(cfg: &CnsConfig) -> Self {
        Self {
            u2: vec![0.0; cfg.n_cells],
            theta: vec![1.0; cfg.n_cells],
            rho: cfg.rho0,
            time: 0.0,
        }
    }

    /// Mean over cells, i.e. `2∫θ dx₁`.
    pub fn theta_av(&self) -> f64 {
        self.theta.iter().sum::<f64>() / self.theta.len() as f64
    }

    /// Coefficient of `sin 2πx₁` in `u₂`: `4∫u₂ sin 2πx₁ dx₁`.
    pub fn u2_amplitude(&self, cfg: &CnsConfig) -> f64 {
        let dx = cfg.dx();
        4.0 * (0..self.u2.len())
            .map(|c| self.u2[c] * (2.0 * PI * cfg.center(c)).sin() * dx)
            .sum::<f64>()
    }

    /// `∫(½u₂² + (3/2)θ)ρ dx₁`.
    pub fn energy(&self, cfg: &CnsConfig) -> f64 {
        let dx = cfg.dx();
        self.u2
            .iter()
            .zip(&self.theta)
            .map(|(u, t)| (0.5 * u * u + 1.5 * t) * self.rho * dx)
            .sum()
    }
}

/// Solves `a[k] x[k−1] + b[k] x[k] + c[k] x[k+1] = d[k]` in place of `d`.
fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) {
    let n = d.len();
    let mut cp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    d[0] /= b[0];
    for k in 1..n {
        let m = b[k] - a[k] * cp[k - 1];
        cp[k] = c[k] / m;
        d[k] = (d[k] - a[k] * d[k - 1]) / m;
    }
    for k in (0..n - 1).rev() {
        d[k] -= cp[k] * d[k + 1];
    }
}

/// Backward-Euler step of `∂ₜy = s ∂ₓ(D ∂ₓy) + q` with zero flux at both
/// ends; `face[k]` is `D` between cells `k` and `k+1`.
fn implicit_diffusion(y: &mut [f64], face: &[f64], scale: f64, q: &[f64], dt: f64, dx: f64) {
    let n = y.len();
    let r = scale * dt / (dx * dx);
    let mut a = vec![0.0; n];
    let mut b = vec![1.0; n];
    let mut c = vec![0.0; n];
    for k in 0..n - 1 {
        let w = r * face[k];
        b[k] += w;
        c[k] = -w;
        b[k + 1] += w;
        a[k + 1] = -w;
    }
    for k in 0..n {
        y[k] += dt * q[k];
    }
    solve_tridiagonal(&a, &b, &c, y);
}

/// Advances one step of length `cfg.dt`. Returns the largest `|∂ₜu₂|`
/// seen over the step.
pub fn cns_step(s: &mut CnsState, cfg: &CnsConfig) -> Result<f64, CnsError> {
    let n = cfg.n_cells;
    if s.u2.len() != n || s.theta.len() != n {
        return Err(CnsError::Config("state does not match n_cells".into()));
    }
    let (dt, dx) = (cfg.dt, cfg.dx());
    let face_theta: Vec<f64> = (0..n - 1).map(|k| 0.5 * (s.theta[k] + s.theta[k + 1])).collect();
    let mu_f: Vec<f64> = face_theta.iter().map(|&t| cfg.mu(t)).collect();
    let kappa_f: Vec<f64> = face_theta.iter().map(|&t| cfg.kappa(t)).collect();

    let old_u = s.u2.clone();
    let force: Vec<f64> = (0..n).map(|c| cfg.g0 * (2.0 * PI * cfg.center(c)).sin()).collect();
    implicit_diffusion(&mut s.u2, &mu_f, 1.0 / s.rho, &force, dt, dx);
    let du_dt = s
        .u2
        .iter()
        .zip(&old_u)
        .map(|(a, b)| ((a - b) / dt).abs())
        .fold(0.0, f64::max);

    // heating from face gradients, shared equally by the two neighbours
    let mut heat = vec![0.0; n];
    for k in 0..n - 1 {
        let g = (s.u2[k + 1] - s.u2[k]) / dx;
        let q = (2.0 / 3.0) * mu_f[k] * g * g / s.rho;
        heat[k] += 0.5 * q;
        heat[k + 1] += 0.5 * q;
    }
    implicit_diffusion(&mut s.theta, &kappa_f, 2.0 / (3.0 * s.rho), &heat, dt, dx);
    s.time += dt;
    if let Some(c) = (0..n).find(|&c| !(s.theta[c] > 0.0 && s.theta[c].is_finite() && s.u2[c].is_finite())) {
        return Err(CnsError::Step {
            time: s.time,
            detail: format!("cell {c}: u2 = {}, theta = {}", s.u2[c], s.theta[c]),
        });
    }
    Ok(du_dt)
}

/// `(C₁t + 1)^{1/(1+δ)}`.
pub fn closed_form_theta_av(t: f64, cfg: &CnsConfig) -> f64 {
    (cfg.c1() * t + 1.0).powf(1.0 / (1.0 + cfg.delta))
}

/// Quasi-steady `u₂ = (g₀ρ/4π²μ) sin 2πx₁` and `∂ₓu₂ = (g₀ρ/2πμ) cos 2πx₁`
/// at the given points, with `μ = C_μ θ_av^δ`.
pub fn quasi_steady_profile(theta_av: f64, cfg: &CnsConfig, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mu = cfg.mu(theta_av);
    let a = cfg.g0 * cfg.rho0 / (4.0 * PI * PI * mu);
    let b = cfg.g0 * cfg.rho0 / (2.0 * PI * mu);
    (
        x.iter().map(|&x| a * (2.0 * PI * x).sin()).collect(),
        x.iter().map(|&x| b * (2.0 * PI * x).cos()).collect(),
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CnsSeries {
    pub times: Vec<f64>,
    pub theta_av: Vec<f64>,
    pub u2_amplitude: Vec<f64>,
    /// `max|θ − θ_av| / θ_av`.
    pub theta_spread: Vec<f64>,
    /// Largest `|∂ₜu₂|` over the preceding step.
    pub du2_dt: Vec<f64>,
    pub closed_form: Vec<f64>,
    /// Local log-log slope of `θ_av`, filled after the run.
    pub slope: Vec<f64>,
}

impl CnsSeries {
    /// Relative deviation from the closed form at each sample.
    pub fn relative_error(&self) -> Vec<f64> {
        self.theta_av
            .iter()
            .zip(&self.closed_form)
            .map(|(a, b)| (a - b).abs() / b)
            .collect()
    }

    /// Header `t,theta_av,u2_amplitude,slope_estimate,theta_closed_form,rel_error,theta_spread,du2_dt`.
    pub fn to_csv(&self) -> String {
        let rel = self.relative_error();
        let mut out = String::from(
            "t,theta_av,u2_amplitude,slope_estimate,theta_closed_form,rel_error,theta_spread,du2_dt\n",
        );
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:.8e},{:.10e},{:.10e},{},{:.10e},{:.4e},{:.4e},{:.4e}\n",
                self.times[k],
                self.theta_av[k],
                self.u2_amplitude[k],
                self.slope.get(k).map(|s| format!("{s:.6}")).unwrap_or_default(),
                self.closed_form[k],
                rel[k],
                self.theta_spread[k],
                self.du2_dt[k],
            ));
        }
        out
    }
}

/// Slope window, in decades, used for `CnsSeries::slope`.
pub const SLOPE_WINDOW: f64 = 0.25;

pub fn run(cfg: &CnsConfig) -> Result<CnsSeries, CnsError> {
    cfg.validate()?;
    let mut s = CnsState::initial(cfg);
    let ratio = 10f64.powf(1.0 / cfg.samples_per_decade as f64) - 1.0;
    let t_first = (cfg.dt / ratio).max(cfg.dt).min(0.1 * cfg.t_end);
    let samples = log_times(t_first, cfg.t_end, cfg.samples_per_decade);
    let mut series = CnsSeries::default();
    let mut next = 0;
    let total = (cfg.t_end / cfg.dt).round() as u64;
    for step in 1..=total {
        let du = cns_step(&mut s, cfg)?;
        s.time = step as f64 * cfg.dt;
        while next < samples.len() && samples[next] <= s.time + 0.5 * cfg.dt {
            let av = s.theta_av();
            series.times.push(s.time);
            series.theta_av.push(av);
            series.u2_amplitude.push(s.u2_amplitude(cfg));
            series
                .theta_spread
                .push(s.theta.iter().map(|t| (t - av).abs()).fold(0.0, f64::max) / av);
            series.du2_dt.push(du);
            series.closed_form.push(closed_form_theta_av(s.time, cfg));
            next += 1;
        }
    }
    // coarse dt can land several samples on one step
    let mut keep = vec![true; series.times.len()];
    for k in 1..series.times.len() {
        keep[k] = series.times[k] > series.times[k - 1];
    }
    let filter = |v: &mut Vec<f64>| {
        let mut it = keep.iter();
        v.retain(|_| *it.next().unwrap());
    };
    for v in [
        &mut series.times,
        &mut series.theta_av,
        &mut series.u2_amplitude,
        &mut series.theta_spread,
        &mut series.du2_dt,
        &mut series.closed_form,
    ] {
        filter(v);
    }
    if let Ok((_, slope)) = loglog_slope(&series.times, &series.theta_av, SLOPE_WINDOW, "theta_av") {
        series.slope = slope;
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(g0: f64, delta: f64) -> CnsConfig {
        let mut c = CnsConfig::new(g0, delta);
        c.n_cells = 32;
        c.dt = 0.01;
        c.t_end = 1.0;
        c
    }

    #[test]
    fn uniform_state_is_steady_without_force() {
        let cfg = quick(0.0, 1.0);
        let mut s = CnsState::initial(&cfg);
        for _ in 0..50 {
            cns_step(&mut s, &cfg).unwrap();
        }
        assert!(s.u2.iter().all(|&u| u == 0.0));
        assert!(s.theta.iter().all(|&t| (t - 1.0).abs() < 1e-14));
    }

    #[test]
    fn insulated_heat_equation_decays_and_conserves() {
        let mut cfg = quick(0.0, 1.0);
        cfg.dt = 1e-3;
        let mut s = CnsState::initial(&cfg);
        // cos 4πx₁ has zero slope at x₁ = ±1/4
        for c in 0..cfg.n_cells {
            s.theta[c] = 1.0 + 0.1 * (4.0 * PI * cfg.center(c)).cos();
        }
        let total = s.theta.iter().sum::<f64>();
        let mut spread = f64::INFINITY;
        for _ in 0..100 {
            cns_step(&mut s, &cfg).unwrap();
            let sp = s.theta.iter().cloned().fold(f64::MIN, f64::max)
                - s.theta.iter().cloned().fold(f64::MAX, f64::min);
            assert!(sp < spread);
            spread = sp;
            assert!((s.theta.iter().sum::<f64>() - total).abs() < 1e-12);
        }
        assert!(spread < 1e-3);
    }

    #[test]
    fn heating_raises_mean_temperature() {
        let cfg = quick(1.0, 0.5);
        let mut s = CnsState::initial(&cfg);
        let mut last = s.theta_av();
        for _ in 0..100 {
            cns_step(&mut s, &cfg).unwrap();
            let now = s.theta_av();
            assert!(now > last);
            last = now;
        }
    }

    #[test]
    fn energy_balance_follows_force_work() {
        let mut cfg = quick(1.0, 1.0);
        cfg.dt = 1e-4;
        cfg.n_cells = 64;
        let mut s = CnsState::initial(&cfg);
        for _ in 0..2000 {
            cns_step(&mut s, &cfg).unwrap();
        }
        let dx = cfg.dx();
        let work = |s: &CnsState| -> f64 {
            (0..cfg.n_cells)
                .map(|c| s.rho * cfg.g0 * (2.0 * PI * cfg.center(c)).sin() * s.u2[c] * dx)
                .sum()
        };
        let e0 = s.energy(&cfg);
        let w0 = work(&s);
        let steps = 200;
        let mut w_int = 0.0;
        for _ in 0..steps {
            let before = work(&s);
            cns_step(&mut s, &cfg).unwrap();
            w_int += 0.5 * (before + work(&s)) * cfg.dt;
        }
        let de = s.energy(&cfg) - e0;
        assert!(w0 > 0.0);
        assert!((de - w_int).abs() < 0.01 * w_int, "{de} vs {w_int}");
    }

    #[test]
    fn closed_form_values() {
        let cfg = CnsConfig::new(1.0, 1.0);
        assert_eq!(closed_form_theta_av(0.0, &cfg), 1.0);
        let c1 = 2.0 / (12.0 * PI * PI * (PI / 8.0).sqrt());
        assert!((cfg.c1() - c1).abs() < 1e-15);
        for (delta, p) in [(1.0, 0.5), (0.5, 2.0 / 3.0)] {
            let cfg = CnsConfig::new(1.0, delta);
            let (t1, t2) = (1e12, 1e13);
            let s = (closed_form_theta_av(t2, &cfg) / closed_form_theta_av(t1, &cfg)).ln() / 10f64.ln();
            assert!((s - p).abs() < 1e-9);
        }
    }

    #[test]
    fn quasi_steady_amplitudes() {
        let mut cfg = CnsConfig::new(1.0, 1.0);
        cfg.c_mu = 1.0;
        let (u, du) = quasi_steady_profile(1.0, &cfg, &[0.25, -0.25, 0.0]);
        assert!((u[0] - 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
        assert!((u[0] - 0.025330).abs() < 1e-6);
        assert!(du[0].abs() < 1e-15 && du[1].abs() < 1e-15);
        assert!((du[2] - 1.0 / (2.0 * PI)).abs() < 1e-15);
        // amplitude scales as θ_av^{−δ}
        let (u4, _) = quasi_steady_profile(4.0, &cfg, &[0.25]);
        assert!((u4[0] * 4.0 - u[0]).abs() < 1e-15);
    }

    #[test]
    fn velocity_relaxes_to_quasi_steady_profile() {
        let mut cfg = CnsConfig::new(1.0, 1.0);
        cfg.n_cells = 128;
        cfg.dt = 1e-3;
        cfg.t_end = 1.0;
        let mut s = CnsState::initial(&cfg);
        for _ in 0..1000 {
            cns_step(&mut s, &cfg).unwrap();
        }
        let expect = cfg.g0 * s.rho / (4.0 * PI * PI * cfg.mu(s.theta_av()));
        let got = s.u2_amplitude(&cfg);
        assert!((got - expect).abs() < 0.02 * expect, "{got} vs {expect}");
    }

    #[test]
    fn validation() {
        let mut c = CnsConfig::new(1.0, -1.0);
        assert!(c.validate().is_err());
        c.delta = 1.0;
        assert!(c.validate().is_ok());
        c.c_kappa = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn tridiagonal_solver() {
        let a = [0.0, -1.0, -1.0];
        let b = [2.0, 2.0, 2.0];
        let c = [-1.0, -1.0, 0.0];
        let mut d = [1.0, 0.0, 1.0];
        solve_tridiagonal(&a, &b, &c, &mut d);
        for x in d {
            assert!((x - 1.0).abs() < 1e-15);
        }
    }
}
