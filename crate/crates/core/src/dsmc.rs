//! Direct simulation Monte Carlo for hard spheres on `−1/4 ≤ x₁ ≤ 1/4`
//! with specular walls and the body force `(0, f₀ sin 2πx₁, 0)`.
//!
//! Units match the kinetic solver: velocities in `(RT₀)^{1/2}`, density in
//! `n₀`, length in `L₀`. With the hard-sphere mean free path
//! `(√2 π d² n₀)⁻¹ = Kn L₀`, the dimensionless cross section is
//! `σ = 1/(√2 Kn)` and the equilibrium collision frequency per particle is
//! `ρ (8θ/π)^{1/2} / Kn`, the same prefactor as the BGK model.
//!
//! Each step is kick-drift-kick for the force and free flight, followed by
//! no-time-counter collisions in each cell: `½ N(N−1) w σ g_max Δt / Δx`
//! candidate pairs (fraction carried to the next step), each accepted with
//! probability `g/g_max`, where `w` is the number of molecules per
//! simulator particle in units of `n₀L₀` and `g_max` is a per-cell majorant
//! of the relative speed raised whenever a larger one is drawn.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::kinetic::{X_MAX, X_MIN};

const LENGTH: f64 = X_MAX - X_MIN;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DsmcError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run with seed {seed} failed at t = {time}: {detail}")]
    Blowup { seed: u64, time: f64, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsmcConfig {
    pub kn: f64,
    pub f0: f64,
    pub n_cells: usize,
    pub particles_per_cell: usize,
    /// Base step. The step used is `dt / max(1, θ_max)^{1/2}` so that the
    /// thermal displacement and collision probability per step stay bounded
    /// as the gas heats up.
    pub dt: f64,
    pub t_end: f64,
    pub n_ensemble: usize,
    pub sample_interval: f64,
    /// Half-width of the centered moving time average; 0 disables it.
    pub time_avg_window: f64,
    pub rng_seed: u64,
}

impl DsmcConfig {
    pub fn new(kn: f64, f0: f64) -> Self {
        Self {
            kn,
            f0,
            n_cells: 50,
            particles_per_cell: 100,
            dt: 0.2 * kn,
            t_end: 300.0 / SQRT_2,
            n_ensemble: 8,
            sample_interval: 1.0 / SQRT_2,
            time_avg_window: 0.0,
            rng_seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), DsmcError> {
        let bad = |m: String| Err(DsmcError::Config(m));
        let positive = [
            ("kn", self.kn),
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("sample_interval", self.sample_interval),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} (must be positive and finite)"));
            }
        }
        if !self.f0.is_finite() {
            return bad(format!("f0 = {} (must be finite)", self.f0));
        }
        if !(self.time_avg_window >= 0.0 && self.time_avg_window.is_finite()) {
            return bad(format!("time_avg_window = {} (must be >= 0)", self.time_avg_window));
        }
        if self.n_cells == 0 {
            return bad("n_cells must be >= 1".into());
        }
        if self.particles_per_cell < 20 {
            return bad(format!(
                "particles_per_cell = {} (must be >= 20)",
                self.particles_per_cell
            ));
        }
        if self.n_ensemble < 2 {
            return bad(format!(
                "n_ensemble = {} (standard errors need >= 2 runs)",
                self.n_ensemble
            ));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        LENGTH / self.n_cells as f64
    }

    /// Dimensionless hard-sphere cross section `1/(√2 Kn)`.
    pub fn cross_section(&self) -> f64 {
        1.0 / (SQRT_2 * self.kn)
    }

    pub fn seed(&self, run: usize) -> u64 {
        self.rng_seed.wrapping_add(run as u64)
    }
}

/// Analytic hard-sphere equilibrium collision frequency per particle.
pub fn equilibrium_collision_rate(kn: f64, rho: f64, theta: f64) -> f64 {
    rho * (8.0 * theta / PI).sqrt() / kn
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: Vec<f64>,
    pub velocities: Vec<[f64; 3]>,
    /// Molecules per simulator particle, in units of `n₀ L₀` per unit area.
    pub weight: f64,
}

impl ParticleEnsemble {
    /// `particles_per_cell` particles stratified in each cell, velocities
    /// drawn from the unit Maxwellian.
    pub fn maxwellian<R: Rng>(n_cells: usize, particles_per_cell: usize, rng: &mut R) -> Self {
        let dx = LENGTH / n_cells as f64;
        let n = n_cells * particles_per_cell;
        let mut positions = Vec::with_capacity(n);
        let mut velocities = Vec::with_capacity(n);
        for c in 0..n_cells {
            for _ in 0..particles_per_cell {
                positions.push(X_MIN + dx * (c as f64 + rng.random::<f64>()));
                velocities.push([
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ]);
            }
        }
        Self {
            positions,
            velocities,
            weight: LENGTH / n as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn cell_of(x: f64, n_cells: usize) -> usize {
        (((x - X_MIN) / LENGTH * n_cells as f64) as usize).min(n_cells - 1)
    }

    pub fn momentum(&self) -> [f64; 3] {
        let mut p = [0.0; 3];
        for v in &self.velocities {
            for d in 0..3 {
                p[d] += v[d];
            }
        }
        p
    }

    /// `Σ |v|²`.
    pub fn energy(&self) -> f64 {
        self.velocities.iter().map(norm2).sum()
    }
}

fn norm2(v: &[f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

/// Folds a free flight into the wall-bounded interval: the specular walls
/// unfold into a period `2L` line, and an odd number of reflections flips
/// `v₁`.
fn reflect(x: f64, v1: f64) -> (f64, f64) {
    let y = (x - X_MIN).rem_euclid(2.0 * LENGTH);
    if y <= LENGTH {
        (X_MIN + y, v1)
    } else {
        (X_MIN + (2.0 * LENGTH - y), -v1)
    }
}

/// Kick-drift-kick: half force kick, free flight with specular walls, half
/// kick at the new position.
pub fn move_and_reflect(p: &mut ParticleEnsemble, f0: f64, dt: f64) {
    let half = 0.5 * dt * f0;
    for (x, v) in p.positions.iter_mut().zip(p.velocities.iter_mut()) {
        if f0 != 0.0 {
            v[1] += half * (2.0 * PI * *x).sin();
        }
        let (xn, v1) = reflect(*x + dt * v[0], v[0]);
        *x = xn.clamp(X_MIN, X_MAX);
        v[0] = v1;
        if f0 != 0.0 {
            v[1] += half * (2.0 * PI * *x).sin();
        }
    }
}

/// Per-cell NTC bookkeeping carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionState {
    pub g_max: Vec<f64>,
    pub remainder: Vec<f64>,
    pub collisions: u64,
}

impl CollisionState {
    pub fn new(n_cells: usize) -> Self {
        Self {
            // a few thermal speeds at θ = 1; raised adaptively
            g_max: vec![5.0; n_cells],
            remainder: vec![0.0; n_cells],
            collisions: 0,
        }
    }
}

/// Elastic hard-sphere collision: the relative velocity is redirected
/// uniformly on the sphere about the centre-of-mass velocity.
pub fn scatter<R: Rng>(a: &mut [f64; 3], b: &mut [f64; 3], rng: &mut R) {
    let g = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let speed = norm2(&g).sqrt();
    let cm = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
    let cos_t = 2.0 * rng.random::<f64>() - 1.0;
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    let half = 0.5 * speed;
    let n = [sin_t * phi.cos(), sin_t * phi.sin(), cos_t];
    for d in 0..3 {
        a[d] = cm[d] + half * n[d];
        b[d] = cm[d] - half * n[d];
    }
}

/// Particle indices grouped by cell.
pub fn cell_lists(p: &ParticleEnsemble, n_cells: usize) -> Vec<Vec<usize>> {
    let mut lists = vec![Vec::new(); n_cells];
    for (i, &x) in p.positions.iter().enumerate() {
        lists[ParticleEnsemble::cell_of(x, n_cells)].push(i);
    }
    lists
}

/// One NTC collision step. Returns the number of accepted collisions.
pub fn collide_cells<R: Rng>(
    p: &mut ParticleEnsemble,
    state: &mut CollisionState,
    kn: f64,
    dt: f64,
    rng: &mut R,
) -> Result<u64, DsmcError> {
    let n_cells = state.g_max.len();
    if n_cells == 0 || state.remainder.len() != n_cells {
        return Err(DsmcError::Config("collision state has no cells".into()));
    }
    if !(kn > 0.0 && dt >= 0.0 && dt.is_finite()) {
        return Err(DsmcError::Config(format!("kn = {kn}, dt = {dt}")));
    }
    let dx = LENGTH / n_cells as f64;
    let sigma = 1.0 / (SQRT_2 * kn);
    let lists = cell_lists(p, n_cells);
    let mut accepted = 0;
    for (c, list) in lists.iter().enumerate() {
        let m = list.len();
        if m < 2 {
            continue;
        }
        let expected = 0.5 * (m * (m - 1)) as f64 * p.weight * sigma * state.g_max[c] * dt / dx
            + state.remainder[c];
        let candidates = expected.floor();
        state.remainder[c] = expected - candidates;
        for _ in 0..candidates as u64 {
            let i = list[rng.random_range(0..m)];
            let mut j = list[rng.random_range(0..m - 1)];
            if j == i {
                j = list[m - 1];
            }
            let (a, b) = (p.velocities[i], p.velocities[j]);
            let g = norm2(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]]).sqrt();
            if g > state.g_max[c] {
                state.g_max[c] = g;
            }
            if rng.random::<f64>() * state.g_max[c] < g {
                let (mut va, mut vb) = (a, b);
                scatter(&mut va, &mut vb, rng);
                p.velocities[i] = va;
                p.velocities[j] = vb;
                accepted += 1;
            }
        }
    }
    state.collisions += accepted;
    Ok(accepted)
}

/// Cell moments. `θ` uses the unbiased variance estimate
/// `Σ|v − ū|² / 3(N−1)`; cells with fewer than two particles get `θ = NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMoments {
    pub rho: Vec<f64>,
    pub u: Vec<[f64; 3]>,
    pub theta: Vec<f64>,
}

impl CellMoments {
    pub fn compute(p: &ParticleEnsemble, n_cells: usize) -> Self {
        let dx = LENGTH / n_cells as f64;
        let mut count = vec![0usize; n_cells];
        let mut sum = vec![[0.0; 3]; n_cells];
        for (x, v) in p.positions.iter().zip(&p.velocities) {
            let c = ParticleEnsemble::cell_of(*x, n_cells);
            count[c] += 1;
            for d in 0..3 {
                sum[c][d] += v[d];
            }
        }
        let u: Vec<[f64; 3]> = sum
            .iter()
            .zip(&count)
            .map(|(s, &n)| {
                let n = n.max(1) as f64;
                [s[0] / n, s[1] / n, s[2] / n]
            })
            .collect();
        let mut dev = vec![0.0; n_cells];
        for (x, v) in p.positions.iter().zip(&p.velocities) {
            let c = ParticleEnsemble::cell_of(*x, n_cells);
            dev[c] += norm2(&[v[0] - u[c][0], v[1] - u[c][1], v[2] - u[c][2]]);
        }
        let theta = dev
            .iter()
            .zip(&count)
            .map(|(&d, &n)| if n >= 2 { d / (3.0 * (n - 1) as f64) } else { f64::NAN })
            .collect();
        Self {
            rho: count.iter().map(|&n| n as f64 * p.weight / dx).collect(),
            u,
            theta,
        }
    }

    /// Mean of `θ` over cells that have one.
    pub fn theta_av(&self) -> f64 {
        let valid: Vec<f64> = self.theta.iter().copied().filter(|t| t.is_finite()).collect();
        valid.iter().sum::<f64>() / valid.len().max(1) as f64
    }

    pub fn theta_max(&self) -> f64 {
        self.theta.iter().copied().filter(|t| t.is_finite()).fold(0.0, f64::max)
    }

    /// Cell average of `|u₂|`.
    pub fn u2_av(&self) -> f64 {
        self.u.iter().map(|u| u[1].abs()).sum::<f64>() / self.u.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub seed: u64,
    pub times: Vec<f64>,
    pub theta_av: Vec<f64>,
    pub u2_av: Vec<f64>,
    pub collisions: u64,
    pub steps: usize,
}

impl RunSeries {
    /// Header `t,theta_av,u2_av`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,theta_av,u2_av\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:.10e},{:.12e},{:.12e}\n",
                self.times[k], self.theta_av[k], self.u2_av[k]
            ));
        }
        out
    }
}

/// One independent run on the shared sample schedule.
pub fn run_single(cfg: &DsmcConfig, run: usize) -> Result<RunSeries, DsmcError> {
    cfg.validate()?;
    let seed = cfg.seed(run);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParticleEnsemble::maxwellian(cfg.n_cells, cfg.particles_per_cell, &mut rng);
    let mut state = CollisionState::new(cfg.n_cells);
    let schedule = sample_times(cfg);
    let mut out = RunSeries {
        seed,
        times: Vec::with_capacity(schedule.len()),
        theta_av: Vec::with_capacity(schedule.len()),
        u2_av: Vec::with_capacity(schedule.len()),
        collisions: 0,
        steps: 0,
    };
    let mut time = 0.0;
    let mut moments = CellMoments::compute(&p, cfg.n_cells);
    let blowup = |time: f64, detail: String| DsmcError::Blowup { seed, time, detail };
    for &target in &schedule {
        while time < target - 1e-12 * target.max(1.0) {
            let theta_max = moments.theta_max().max(1.0);
            let dt = (cfg.dt / theta_max.sqrt()).min(target - time);
            move_and_reflect(&mut p, cfg.f0, dt);
            collide_cells(&mut p, &mut state, cfg.kn, dt, &mut rng)?;
            time += dt;
            out.steps += 1;
            // θ_max is refreshed every few steps; it only sets the step size
            if out.steps % 16 == 0 {
                moments = CellMoments::compute(&p, cfg.n_cells);
            }
        }
        time = target;
        moments = CellMoments::compute(&p, cfg.n_cells);
        let (theta, u2) = (moments.theta_av(), moments.u2_av());
        if !theta.is_finite() || !u2.is_finite() {
            return Err(blowup(time, format!("theta_av = {theta}, u2_av = {u2}")));
        }
        out.times.push(time);
        out.theta_av.push(theta);
        out.u2_av.push(u2);
    }
    out.collisions = state.collisions;
    Ok(out)
}

/// `0, Δ, 2Δ, …` up to and including `t_end`.
pub fn sample_times(cfg: &DsmcConfig) -> Vec<f64> {
    let n = (cfg.t_end / cfg.sample_interval + 1e-9).floor() as usize;
    let mut t: Vec<f64> = (0..=n).map(|k| k as f64 * cfg.sample_interval).collect();
    if cfg.t_end - t[n] > 1e-9 * cfg.t_end {
        t.push(cfg.t_end);
    }
    t
}

/// Centered moving average over `[t − w, t + w]`, clipped to the sampled range.
pub fn centered_average(times: &[f64], values: &[f64], half_width: f64) -> Vec<f64> {
    if half_width <= 0.0 {
        return values.to_vec();
    }
    let mut out = Vec::with_capacity(values.len());
    let (mut lo, mut hi) = (0, 0);
    let mut sum = 0.0;
    for &t in times {
        while hi < times.len() && times[hi] <= t + half_width {
            sum += values[hi];
            hi += 1;
        }
        while times[lo] < t - half_width {
            sum -= values[lo];
            lo += 1;
        }
        out.push(sum / (hi - lo) as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunAverager {
    pub times: Vec<f64>,
    pub runs: Vec<RunSeries>,
    pub theta_av_mean: Vec<f64>,
    pub theta_av_se: Vec<f64>,
    pub u2_av_mean: Vec<f64>,
    pub u2_av_se: Vec<f64>,
    pub time_avg_window: f64,
}

fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl RunAverager {
    /// Aggregates runs sampled on a shared schedule, after the optional
    /// centered time average of each run.
    pub fn aggregate(runs: Vec<RunSeries>, time_avg_window: f64) -> Result<Self, DsmcError> {
        if runs.len() < 2 {
            return Err(DsmcError::Config("standard errors need >= 2 runs".into()));
        }
        let times = runs[0].times.clone();
        if runs.iter().any(|r| r.times != times) {
            return Err(DsmcError::Config("runs do not share a sample schedule".into()));
        }
        let smooth = |r: &RunSeries| {
            (
                centered_average(&times, &r.theta_av, time_avg_window),
                centered_average(&times, &r.u2_av, time_avg_window),
            )
        };
        let smoothed: Vec<_> = runs.iter().map(smooth).collect();
        let mut out = Self {
            times,
            runs,
            theta_av_mean: Vec::new(),
            theta_av_se: Vec::new(),
            u2_av_mean: Vec::new(),
            u2_av_se: Vec::new(),
            time_avg_window,
        };
        for k in 0..out.times.len() {
            let th: Vec<f64> = smoothed.iter().map(|s| s.0[k]).collect();
            let u2: Vec<f64> = smoothed.iter().map(|s| s.1[k]).collect();
            let (m, s) = mean_se(&th);
            out.theta_av_mean.push(m);
            out.theta_av_se.push(s);
            let (m, s) = mean_se(&u2);
            out.u2_av_mean.push(m);
            out.u2_av_se.push(s);
        }
        Ok(out)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }

    /// Header `t,theta_av_mean,theta_av_se,u2_av_mean,u2_av_se`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,theta_av_mean,theta_av_se,u2_av_mean,u2_av_se\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:.10e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                self.times[k],
                self.theta_av_mean[k],
                self.theta_av_se[k],
                self.u2_av_mean[k],
                self.u2_av_se[k]
            ));
        }
        out
    }
}

/// Runs the ensemble in parallel on the current rayon pool.
pub fn run_ensemble(cfg: &DsmcConfig) -> Result<RunAverager, DsmcError> {
    cfg.validate()?;
    let runs = (0..cfg.n_ensemble)
        .into_par_iter()
        .map(|i| run_single(cfg, i))
        .collect::<Result<Vec<_>, _>>()?;
    RunAverager::aggregate(runs, cfg.time_avg_window)
}
