//! Finite-difference solver for the BGK equation
//!
//! `∂ₜF + v₁∂ₓF + f₀ sin(2πx₁) ∂_{v₂}F = (1/Kn)(8/π)^{1/2} ρ (M − F)`
//!
//! on `−1/4 ≤ x₁ ≤ 1/4` with specular walls, starting from `M_(1,0,1)`.
//!
//! Each step is Strang split: half transport, half force, full collision,
//! half force, half transport. Collisions use exact exponential relaxation
//! toward the moment-matched grid Maxwellian, so they conserve mass,
//! momentum and energy to rounding.
//!
//! Transport uses the specular unfolding: for a pair `(v₁, −v₁)` the row at
//! `v₁ > 0` followed by the mirrored row at `−v₁` is one periodic strip of
//! `2n` cells moving at `|v₁|`. A step is an integer rotation of the strip
//! followed by a minmod-limited second-order upwind update for the
//! fractional Courant number, so the wall fluxes vanish identically and the
//! step is stable for any `dt`.

use std::f64::consts::PI;

use log::{debug, info};
use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

use crate::kinetic::{
    cell_sums, discrete_maxwellian, discrete_equilibrium, entropy, moments, KineticError,
    MacroFields, MaxwellianParams, ReducedDistributionPair, SpatialGrid1D, VelocityGrid2D,
    THERMAL_COVERAGE,
};

/// `(8/π)^{1/2}`, the collision-frequency prefactor of the dimensionless model.
pub fn collision_prefactor() -> f64 {
    (8.0 / PI).sqrt()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BgkError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Kinetic(#[from] KineticError),
    #[error("step size error: {0}")]
    StepSize(String),
    #[error("velocity grid does not cover cell {cell}: boundary mass fraction {fraction:e}")]
    Coverage { cell: usize, fraction: f64 },
    #[error("numerical blowup at t = {time} (step {step}): {detail}")]
    Blowup { time: f64, step: u64, detail: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BgkConfig {
    pub kn: f64,
    pub f0: f64,
    pub grid: SpatialGrid1D,
    pub vgrid: VelocityGrid2D,
    /// Safety factor applied to the collision time and the `v₂` Courant limit.
    pub dt_cfl: f64,
    pub t_end: f64,
    pub sample_interval: f64,
    pub remap_trigger: f64,
    pub snapshot_times: Vec<f64>,
}

impl BgkConfig {
    /// Default resolution: 100 cells, 64×64 velocity nodes, `v_max = 6`.
    pub fn new(kn: f64, f0: f64) -> Self {
        Self {
            kn,
            f0,
            grid: SpatialGrid1D { n_cells: 100 },
            vgrid: VelocityGrid2D {
                n_v1: 64,
                n_v2: 64,
                v_max: 6.0,
                scale: 1.0,
            },
            dt_cfl: 0.5,
            t_end: 1000.0 / std::f64::consts::SQRT_2,
            sample_interval: 0.5 / std::f64::consts::SQRT_2,
            remap_trigger: 1.15,
            snapshot_times: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BgkError> {
        let bad = |msg: String| Err(BgkError::Config(msg));
        if !(self.kn > 0.0 && self.kn.is_finite()) {
            return bad(format!("kn = {} (must be > 0)", self.kn));
        }
        if !self.f0.is_finite() {
            return bad(format!("f0 = {} (must be finite)", self.f0));
        }
        if !(self.dt_cfl > 0.0 && self.dt_cfl <= 1.0) {
            return bad(format!("dt_cfl = {} (must be in (0, 1])", self.dt_cfl));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} (must be > 0)", self.t_end));
        }
        if !(self.sample_interval > 0.0) {
            return bad(format!("sample_interval = {} (must be > 0)", self.sample_interval));
        }
        if !(self.remap_trigger > 1.0) {
            return bad(format!("remap_trigger = {} (must be > 1)", self.remap_trigger));
        }
        if self.grid.n_cells < 2 {
            return bad(format!("n_cells = {} (need at least 2)", self.grid.n_cells));
        }
        self.vgrid.validate()?;
        if !self.vgrid.is_symmetric() {
            return bad("velocity grid must be symmetric about 0".into());
        }
        if self.vgrid.v_max < THERMAL_COVERAGE {
            return bad(format!(
                "v_max = {} (must cover {THERMAL_COVERAGE} thermal speeds)",
                self.vgrid.v_max
            ));
        }
        if self.snapshot_times.iter().any(|&t| !(t >= 0.0)) {
            return bad("snapshot_times must be nonnegative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemapEvent {
    pub time: f64,
    pub old_scale: f64,
    pub new_scale: f64,
    /// Largest relative change of mass, momentum or energy in any cell.
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub f: ReducedDistributionPair,
    pub vgrid: VelocityGrid2D,
    pub time: f64,
    pub step_count: u64,
    pub scale_history: Vec<(f64, f64)>,
    pub remaps: Vec<RemapEvent>,
    pub clipped: u64,
}

impl SolverState {
    /// Uniform equilibrium `M_(1,0,1)` on the configured grids.
    pub fn initial(config: &BgkConfig) -> Result<Self, BgkError> {
        let p = MaxwellianParams::new(1.0, [0.0; 3], 1.0)?;
        let f = discrete_maxwellian(&p, &config.vgrid, config.grid.n_cells)?;
        Ok(Self {
            f,
            vgrid: config.vgrid,
            time: 0.0,
            step_count: 0,
            scale_history: vec![(0.0, config.vgrid.scale)],
            remaps: Vec::new(),
            clipped: 0,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub theta_av: Vec<f64>,
    pub u2_av: Vec<f64>,
    pub entropy: Vec<f64>,
    pub mass: Vec<f64>,
    pub snapshots: Vec<(f64, MacroFields)>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Series CSV with header `t,theta_av,u2_av,entropy,mass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,theta_av,u2_av,entropy,mass\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{:.10e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                self.times[k], self.theta_av[k], self.u2_av[k], self.entropy[k], self.mass[k]
            ));
        }
        out
    }

    /// Linear interpolation of `θ_av` at `t`.
    pub fn theta_av_at(&self, t: f64) -> Option<f64> {
        interpolate(&self.times, &self.theta_av, t)
    }
}

pub(crate) fn interpolate(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    if times.is_empty() || t < times[0] || t > *times.last()? {
        return None;
    }
    let k = times.partition_point(|&s| s < t);
    if k == 0 {
        return Some(values[0]);
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
    Some(values[k - 1] * (1.0 - w) + values[k] * w)
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    let same_sign = (a * b > 0.0) as u8 as f64;
    same_sign * a.abs().min(b.abs()).copysign(a)
}

/// Advances a periodic strip of `len` rows, each `width` wide, by `shift`
/// rows (`shift ≥ 0`). Rows are independent and stored contiguously.
fn advect_ring(ring: &mut [f64], scratch: &mut [f64], width: usize, shift: f64) {
    let len = ring.len() / width;
    let whole = shift.floor();
    let c = shift - whole;
    let m = (whole as usize) % len;
    for k in 0..len {
        let dst = (k + m) % len;
        scratch[dst * width..(dst + 1) * width].copy_from_slice(&ring[k * width..(k + 1) * width]);
    }
    if c == 0.0 {
        ring.copy_from_slice(scratch);
        return;
    }
    let half = 0.5 * (1.0 - c);
    let row = |k: usize| &scratch[k * width..(k + 1) * width];
    // flux[j] holds the flux through the left face of the current row
    let mut flux = vec![0.0; width];
    let mut next_flux = vec![0.0; width];
    let face = |out: &mut [f64], prev: &[f64], cur: &[f64], next: &[f64]| {
        for j in 0..width {
            let x = cur[j];
            out[j] = c * (x + half * minmod(x - prev[j], next[j] - x));
        }
    };
    face(&mut flux, row(len - 2), row(len - 1), row(0));
    for k in 0..len {
        let prev = row((k + len - 1) % len);
        let next = row((k + 1) % len);
        let cur = row(k);
        face(&mut next_flux, prev, cur, next);
        let out = &mut ring[k * width..(k + 1) * width];
        for j in 0..width {
            out[j] = cur[j] - (next_flux[j] - flux[j]);
        }
        std::mem::swap(&mut flux, &mut next_flux);
    }
}

/// Workspace for [`advect_rows_closed`].
struct RowAdvection {
    width: usize,
    // 0 at the first (last) entry of each row, 1 elsewhere
    has_left: Vec<f64>,
    has_right: Vec<f64>,
    padded: Vec<f64>,
    flux: Vec<f64>,
}

impl RowAdvection {
    fn new(width: usize, len: usize) -> Self {
        Self {
            width,
            has_left: (0..len).map(|k| (k % width != 0) as u8 as f64).collect(),
            has_right: (0..len).map(|k| (k % width != width - 1) as u8 as f64).collect(),
            padded: vec![0.0; len + 2],
            flux: vec![0.0; len + 1],
        }
    }

    /// Advances every row of `block` along its index with zero flux through
    /// both row ends. `c` is the signed Courant number, `|c| ≤ 1`.
    fn advect_rows_closed(&mut self, block: &mut [f64], c: f64) {
        let len = block.len();
        debug_assert_eq!(len % self.width, 0);
        let x = &mut self.padded;
        x[1..=len].copy_from_slice(block);
        let half = 0.5 * (1.0 - c.abs());
        // flux[k + 1] crosses the face between entries k and k + 1
        let flux = &mut self.flux;
        let (prev, cur, next) = (&x[0..len], &x[1..=len], &x[2..len + 2]);
        if c > 0.0 {
            for k in 0..len {
                let slope = minmod(
                    cur[k] - self.has_left[k] * prev[k],
                    self.has_right[k] * next[k] - cur[k],
                );
                flux[k + 1] = self.has_right[k] * c * (cur[k] + half * slope);
            }
        } else {
            // upwind entry is k + 1
            for k in 0..len - 1 {
                let up = next[k];
                let slope = minmod(
                    up - self.has_left[k + 1] * cur[k],
                    self.has_right[k + 1] * x[k + 3] - up,
                );
                flux[k + 1] = self.has_right[k] * c * (up - half * slope);
            }
            flux[len] = 0.0;
        }
        flux[0] = 0.0;
        for k in 0..len {
            block[k] = cur[k] - (flux[k + 1] - flux[k]);
        }
    }
}

/// `v₁∂ₓ` advection over `dt` with specular walls.
pub fn transport_step(
    f: &mut ReducedDistributionPair,
    grid: &SpatialGrid1D,
    vgrid: &VelocityGrid2D,
    dt: f64,
) -> Result<(), BgkError> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(BgkError::StepSize(format!("dt = {dt}")));
    }
    f.check_shape(vgrid)?;
    if !vgrid.is_symmetric() {
        return Err(BgkError::Config("velocity grid must be symmetric in v1".into()));
    }
    let n = grid.n_cells;
    let n2 = vgrid.n_v2;
    let stride = f.nodes_per_cell();
    let mut ring = vec![0.0; 2 * n * n2];
    let mut scratch = vec![0.0; 2 * n * n2];
    for i1 in 0..vgrid.n_v1 {
        let v1 = vgrid.v1(i1);
        if v1 <= 0.0 {
            continue;
        }
        let fwd = i1 * n2;
        let back = vgrid.mirror_v1(i1) * n2;
        let shift = v1 * dt / grid.dx();
        for arr in [&mut f.g, &mut f.h] {
            for c in 0..n {
                ring[c * n2..(c + 1) * n2].copy_from_slice(&arr[c * stride + fwd..][..n2]);
                let src = (n - 1 - c) * stride + back;
                ring[(n + c) * n2..(n + c + 1) * n2].copy_from_slice(&arr[src..src + n2]);
            }
            advect_ring(&mut ring, &mut scratch, n2, shift);
            for c in 0..n {
                arr[c * stride + fwd..][..n2].copy_from_slice(&ring[c * n2..(c + 1) * n2]);
                let dst = (n - 1 - c) * stride + back;
                arr[dst..dst + n2].copy_from_slice(&ring[(n + c) * n2..(n + c + 1) * n2]);
            }
        }
    }
    Ok(())
}

/// Largest fraction of the cell's `G` mass on either outermost `v₂` node line.
pub fn v2_boundary_fraction(g: &[f64], vgrid: &VelocityGrid2D) -> f64 {
    let n2 = vgrid.n_v2;
    let (mut low, mut high, mut total) = (0.0, 0.0, 0.0);
    for row in g.chunks_exact(n2) {
        low += row[0].abs();
        high += row[n2 - 1].abs();
        total += row.iter().sum::<f64>();
    }
    low.max(high) / total
}

/// Maximum relative boundary mass tolerated by the force step.
pub const COVERAGE_TOLERANCE: f64 = 1e-8;

/// `f₀ sin(2πx₁) ∂_{v₂}` advection over `dt`, zero flux at the `v₂` ends.
pub fn force_step(
    f: &mut ReducedDistributionPair,
    grid: &SpatialGrid1D,
    vgrid: &VelocityGrid2D,
    f0: f64,
    dt: f64,
) -> Result<(), BgkError> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(BgkError::StepSize(format!("dt = {dt}")));
    }
    f.check_shape(vgrid)?;
    let dv2 = vgrid.dv2();
    let mut work = RowAdvection::new(vgrid.n_v2, f.nodes_per_cell());
    for cell in 0..grid.n_cells {
        let accel = f0 * (2.0 * PI * grid.center(cell)).sin();
        let c = accel * dt / dv2;
        if c.abs() > 1.0 + 1e-12 {
            return Err(BgkError::StepSize(format!(
                "v2 Courant number {c:.3} exceeds 1 in cell {cell}"
            )));
        }
        if c == 0.0 {
            continue;
        }
        let (g, h) = f.cell_mut(cell);
        let fraction = v2_boundary_fraction(g, vgrid);
        if fraction > COVERAGE_TOLERANCE {
            return Err(BgkError::Coverage { cell, fraction });
        }
        work.advect_rows_closed(g, c);
        work.advect_rows_closed(h, c);
    }
    Ok(())
}

/// Ghost layers behind each wall, `ghost_cells` deep.
///
/// Ghost cell `k` behind a wall at velocity `v` holds the interior cell `k`
/// away from the same wall at `Rv = (−v₁, v₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WallGhosts {
    pub left: ReducedDistributionPair,
    pub right: ReducedDistributionPair,
}

pub fn specular_walls(
    f: &ReducedDistributionPair,
    vgrid: &VelocityGrid2D,
    ghost_cells: usize,
) -> Result<WallGhosts, BgkError> {
    f.check_shape(vgrid)?;
    if !vgrid.is_symmetric() {
        return Err(BgkError::Config("velocity grid must be symmetric in v1".into()));
    }
    if ghost_cells > f.n_cells {
        return Err(BgkError::Config(format!(
            "{ghost_cells} ghost cells requested for {} interior cells",
            f.n_cells
        )));
    }
    let mut left = ReducedDistributionPair::zeros(ghost_cells, vgrid);
    let mut right = ReducedDistributionPair::zeros(ghost_cells, vgrid);
    for k in 0..ghost_cells {
        let inner_left = k;
        let inner_right = f.n_cells - 1 - k;
        for i1 in 0..vgrid.n_v1 {
            let m = vgrid.mirror_v1(i1);
            for i2 in 0..vgrid.n_v2 {
                let dst = left.index(k, i1, i2);
                let src = f.index(inner_left, m, i2);
                left.g[dst] = f.g[src];
                left.h[dst] = f.h[src];
                let src = f.index(inner_right, m, i2);
                right.g[dst] = f.g[src];
                right.h[dst] = f.h[src];
            }
        }
    }
    Ok(WallGhosts { left, right })
}

/// Net upwind mass flux `∬ v₁ G` through the wall between the outermost
/// interior cell and its ghost; positive means out through the right wall.
pub fn wall_mass_flux(
    interior: &[f64],
    ghost: &[f64],
    vgrid: &VelocityGrid2D,
    right_wall: bool,
) -> f64 {
    let mut flux = 0.0;
    for i1 in 0..vgrid.n_v1 {
        let v1 = vgrid.v1(i1);
        let outgoing = if right_wall { v1 > 0.0 } else { v1 < 0.0 };
        let src = if outgoing { interior } else { ghost };
        let row = &src[i1 * vgrid.n_v2..(i1 + 1) * vgrid.n_v2];
        flux += v1 * row.iter().sum::<f64>();
    }
    flux * vgrid.cell_area()
}

/// Exact relaxation `F ← M + (F − M) e^{−ν dt}`, `ν = (8/π)^{1/2} ρ / Kn`.
pub fn collision_relax(
    f: &mut ReducedDistributionPair,
    macro_fields: &MacroFields,
    vgrid: &VelocityGrid2D,
    kn: f64,
    dt: f64,
) -> Result<(), BgkError> {
    if !(dt >= 0.0) {
        return Err(BgkError::StepSize(format!("dt = {dt}")));
    }
    f.check_shape(vgrid)?;
    let n = f.nodes_per_cell();
    let mut eq_g = vec![0.0; n];
    let mut eq_h = vec![0.0; n];
    for cell in 0..f.n_cells {
        let rho = macro_fields.rho[cell];
        let decay = (-collision_prefactor() * rho / kn * dt).exp();
        let (g, h) = f.cell_mut(cell);
        let target = cell_sums(g, h, vgrid);
        discrete_equilibrium(&target, vgrid, &mut eq_g, &mut eq_h).map_err(|e| match e {
            KineticError::Equilibrium { residual, .. } => {
                KineticError::Equilibrium { cell, residual }
            }
            KineticError::Degenerate { rho, theta, .. } => KineticError::Degenerate { cell, rho, theta },
            other => other,
        })?;
        for (x, &m) in g.iter_mut().zip(&eq_g) {
            *x = m + (*x - m) * decay;
        }
        for (x, &m) in h.iter_mut().zip(&eq_h) {
            *x = m + (*x - m) * decay;
        }
    }
    Ok(())
}

/// Multiplies one cell by `a₀ + a₁ξ₁ + a₂ξ₂ + a₃|ξ|²`, with `ξ` the
/// velocity relative to the target state in thermal units, so that its
/// discrete mass, momentum and energy equal `target`. Returns the largest
/// relative residual defect.
pub fn correct_moments(
    g: &mut [f64],
    h: &mut [f64],
    vgrid: &VelocityGrid2D,
    target: &[f64; 4],
    cell: usize,
) -> Result<f64, BgkError> {
    let v1 = vgrid.v1_nodes();
    let v2 = vgrid.v2_nodes();
    let (rho, u1, u2, theta) = crate::kinetic::primitive_from_sums(target);
    let s = theta.sqrt();
    let basis = |i: usize, j: usize| -> [f64; 4] {
        let x1 = (v1[i] - u1) / s;
        let x2 = (v2[j] - u2) / s;
        [1.0, x1, x2, x1 * x1 + x2 * x2]
    };
    let da = vgrid.cell_area();
    let mut m = Matrix4::<f64>::zeros();
    for i in 0..vgrid.n_v1 {
        for j in 0..vgrid.n_v2 {
            let k = i * vgrid.n_v2 + j;
            let phi = basis(i, j);
            let row = [g[k], v1[i] * g[k], v2[j] * g[k], (v1[i] * v1[i] + v2[j] * v2[j]) * g[k] + h[k]];
            for r in 0..4 {
                for c in 0..4 {
                    m[(r, c)] += row[r] * phi[c] * da;
                }
            }
        }
    }
    let rhs = Vector4::from_column_slice(target);
    let coef = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| BgkError::Config(format!("singular moment correction in cell {cell}")))?;
    for i in 0..vgrid.n_v1 {
        for j in 0..vgrid.n_v2 {
            let k = i * vgrid.n_v2 + j;
            let phi = basis(i, j);
            let p: f64 = (0..4).map(|r| coef[r] * phi[r]).sum();
            g[k] = (g[k] * p).max(0.0);
            h[k] = (h[k] * p).max(0.0);
        }
    }
    let after = cell_sums(g, h, vgrid);
    let scale = [rho, rho * s, rho * s, target[3]];
    Ok((0..4).map(|q| (after[q] - target[q]).abs() / scale[q]).fold(0.0, f64::max))
}

/// Cell sums after shifting each cell exactly by `f₀ sin(2πx₁) dt` in `v₂`:
/// `P₂ += ρs` and `E += 2sP₂ + s²ρ`.
pub fn shifted_sums(
    f: &ReducedDistributionPair,
    grid: &SpatialGrid1D,
    vgrid: &VelocityGrid2D,
    f0: f64,
    dt: f64,
) -> Vec<[f64; 4]> {
    (0..f.n_cells)
        .map(|cell| {
            let (g, h) = f.cell(cell);
            let mut t = cell_sums(g, h, vgrid);
            let shift = f0 * (2.0 * PI * grid.center(cell)).sin() * dt;
            t[3] += 2.0 * shift * t[2] + shift * shift * t[0];
            t[2] += shift * t[0];
            t
        })
        .collect()
}

/// Bilinear transfer onto `new`, then a per-cell multiplicative correction
/// `a₀ + a₁ξ₁ + a₂ξ₂ + a₃|ξ|²` restoring the discrete mass, momentum and
/// energy of each cell. Returns the largest relative residual defect.
pub fn remap(
    f: &ReducedDistributionPair,
    old: &VelocityGrid2D,
    new: &VelocityGrid2D,
) -> Result<(ReducedDistributionPair, f64), BgkError> {
    f.check_shape(old)?;
    if old.n_v1 != new.n_v1 || old.n_v2 != new.n_v2 {
        return Err(BgkError::Config("remap keeps the node count".into()));
    }
    // per-axis stencil: (lower old index or -1, weight of upper)
    let stencil = |old_nodes: &[f64], new_nodes: &[f64], dv: f64| -> Vec<(isize, f64)> {
        new_nodes
            .iter()
            .map(|&v| {
                let p = (v - old_nodes[0]) / dv;
                let i0 = p.floor();
                (i0 as isize, p - i0)
            })
            .collect()
    };
    let s1 = stencil(&old.v1_nodes(), &new.v1_nodes(), old.dv1());
    let s2 = stencil(&old.v2_nodes(), &new.v2_nodes(), old.dv2());
    let (n1, n2) = (old.n_v1 as isize, old.n_v2 as isize);
    let mut out = ReducedDistributionPair::zeros(f.n_cells, new);
    let mut defect: f64 = 0.0;
    for cell in 0..f.n_cells {
        let (g_old, h_old) = f.cell(cell);
        let target = cell_sums(g_old, h_old, old);
        let at = |arr: &[f64], i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= n1 || j >= n2 {
                0.0
            } else {
                arr[(i * n2 + j) as usize]
            }
        };
        let (g, h) = out.cell_mut(cell);
        for (a, &(i0, w1)) in s1.iter().enumerate() {
            for (b, &(j0, w2)) in s2.iter().enumerate() {
                let k = a * new.n_v2 + b;
                for (dst, src) in [(&mut *g, g_old), (&mut *h, h_old)] {
                    dst[k] = (1.0 - w1) * ((1.0 - w2) * at(src, i0, j0) + w2 * at(src, i0, j0 + 1))
                        + w1 * ((1.0 - w2) * at(src, i0 + 1, j0) + w2 * at(src, i0 + 1, j0 + 1));
                }
            }
        }
        defect = defect.max(correct_moments(g, h, new, &target, cell)?);
    }
    Ok((out, defect))
}

/// Half-width in velocity needed to cover every cell: `max(|u|) + 6√θ`.
pub fn required_extent(m: &MacroFields) -> f64 {
    (0..m.n_cells())
        .map(|c| m.u1[c].abs().max(m.u2[c].abs()) + THERMAL_COVERAGE * m.theta[c].sqrt())
        .fold(0.0, f64::max)
}

/// Time step: `dt_cfl` times the smaller of the collision time and the
/// `v₂` Courant limit of the force.
pub fn stable_dt(config: &BgkConfig, vgrid: &VelocityGrid2D, m: &MacroFields) -> f64 {
    let rho_max = m.rho.iter().cloned().fold(0.0, f64::max);
    let collision_time = config.kn / (collision_prefactor() * rho_max);
    let force_limit = if config.f0 == 0.0 {
        f64::INFINITY
    } else {
        vgrid.dv2() / config.f0.abs()
    };
    config.dt_cfl * collision_time.min(force_limit)
}

fn sanitize(state: &mut SolverState) -> Result<(), BgkError> {
    let n = state.f.nodes_per_cell();
    let mut clipped = 0;
    for cell in 0..state.f.n_cells {
        let (g, h) = state.f.cell_mut(cell);
        let gmax = g.iter().cloned().fold(0.0, f64::max);
        let hmax = h.iter().cloned().fold(0.0, f64::max);
        for k in 0..n {
            let (gv, hv) = (g[k], h[k]);
            if !gv.is_finite() || !hv.is_finite() {
                return Err(BgkError::Blowup {
                    time: state.time,
                    step: state.step_count,
                    detail: format!("non-finite value in cell {cell}, node {k}: G = {gv}, H = {hv}"),
                });
            }
            if gv <= 0.0 || hv <= 0.0 {
                if gv < -1e-14 * gmax || hv < -1e-14 * hmax {
                    return Err(BgkError::Blowup {
                        time: state.time,
                        step: state.step_count,
                        detail: format!(
                            "negative value in cell {cell}, node {k}: G = {gv:e} (max {gmax:e}), H = {hv:e} (max {hmax:e})"
                        ),
                    });
                }
                if gv != 0.0 || hv != 0.0 {
                    clipped += 1;
                }
                g[k] = 0.0;
                h[k] = 0.0;
            }
        }
    }
    if clipped > 0 {
        debug!("t = {:.4}: clipped {clipped} nodes", state.time);
    }
    state.clipped += clipped;
    Ok(())
}

/// Boundary mass fraction at which a remap is scheduled, ahead of the
/// hard coverage error in the force step.
const REMAP_EDGE_FRACTION: f64 = 0.25 * COVERAGE_TOLERANCE;

/// True when some cell needs more than the current extent or, under a
/// nonzero force, carries noticeable mass on the outermost `v₂` nodes.
pub fn needs_remap(
    f: &ReducedDistributionPair,
    vgrid: &VelocityGrid2D,
    m: &MacroFields,
    forced: bool,
) -> bool {
    if required_extent(m) > vgrid.extent() * (1.0 + 1e-9) {
        return true;
    }
    forced && (0..f.n_cells).any(|c| v2_boundary_fraction(f.cell(c).0, vgrid) > REMAP_EDGE_FRACTION)
}

fn maybe_remap(config: &BgkConfig, state: &mut SolverState, m: &MacroFields) -> Result<bool, BgkError> {
    if !needs_remap(&state.f, &state.vgrid, m, config.f0 != 0.0) {
        return Ok(false);
    }
    let need = required_extent(m);
    let new_scale = (config.remap_trigger * need / state.vgrid.v_max)
        .max(config.remap_trigger * state.vgrid.scale);
    let new_grid = state.vgrid.with_scale(new_scale);
    let (f, defect) = remap(&state.f, &state.vgrid, &new_grid)?;
    info!(
        "t = {:.4}: velocity remap, scale {:.4} -> {:.4}, conservation defect {:.2e}",
        state.time, state.vgrid.scale, new_scale, defect
    );
    state.remaps.push(RemapEvent {
        time: state.time,
        old_scale: state.vgrid.scale,
        new_scale,
        defect,
    });
    state.scale_history.push((state.time, new_scale));
    state.f = f;
    state.vgrid = new_grid;
    Ok(true)
}

fn record(
    series: &mut TimeSeries,
    state: &SolverState,
    grid: &SpatialGrid1D,
    m: &MacroFields,
) -> Result<(), BgkError> {
    series.times.push(state.time);
    series.theta_av.push(m.theta_av());
    series.u2_av.push(m.u2_av());
    series.entropy.push(entropy(&state.f, &state.vgrid, grid)?);
    series.mass.push(state.f.total_mass(&state.vgrid, grid));
    Ok(())
}

fn blowup_from(state: &SolverState, e: KineticError) -> BgkError {
    BgkError::Blowup {
        time: state.time,
        step: state.step_count,
        detail: e.to_string(),
    }
}

fn kinetic_to_blowup(state: &SolverState, e: BgkError) -> BgkError {
    match e {
        BgkError::Kinetic(k) => blowup_from(state, k),
        other => other,
    }
}

/// Force, collision, force: the middle of a Strang step. Returns the
/// moments seen by the collision, which it leaves unchanged.
fn local_step(config: &BgkConfig, state: &mut SolverState, dt: f64) -> Result<MacroFields, BgkError> {
    let grid = config.grid;
    let vg = state.vgrid;
    let half = 0.5 * dt;
    // the limiter's numerical diffusion in v₂ would otherwise add heat
    let targets = (config.f0 != 0.0).then(|| shifted_sums(&state.f, &grid, &vg, config.f0, dt));
    force_step(&mut state.f, &grid, &vg, config.f0, half)?;
    let m = moments(&state.f, &vg).map_err(|e| blowup_from(state, e))?;
    collision_relax(&mut state.f, &m, &vg, config.kn, dt)?;
    force_step(&mut state.f, &grid, &vg, config.f0, half)?;
    if let Some(targets) = targets {
        for (cell, t) in targets.iter().enumerate() {
            let (g, h) = state.f.cell_mut(cell);
            correct_moments(g, h, &vg, t, cell)?;
        }
    }
    Ok(m)
}

/// One Strang step of length `dt`.
pub fn strang_step(config: &BgkConfig, state: &mut SolverState, dt: f64) -> Result<(), BgkError> {
    advance(config, state, dt, 1).map(|_| ())
}

/// Up to `steps` Strang steps of length `dt`, fusing the trailing half
/// transport of each step with the leading half of the next. Stops early
/// once the velocity grid needs a remap; returns the steps taken.
pub fn advance(
    config: &BgkConfig,
    state: &mut SolverState,
    dt: f64,
    steps: usize,
) -> Result<usize, BgkError> {
    let grid = config.grid;
    let vg = state.vgrid;
    transport_step(&mut state.f, &grid, &vg, 0.5 * dt)?;
    for s in 0..steps {
        let m = local_step(config, state, dt).map_err(|e| kinetic_to_blowup(state, e))?;
        let stop = s + 1 == steps || needs_remap(&state.f, &vg, &m, config.f0 != 0.0);
        transport_step(&mut state.f, &grid, &vg, if stop { 0.5 * dt } else { dt })?;
        state.time += dt;
        state.step_count += 1;
        sanitize(state)?;
        if stop {
            return Ok(s + 1);
        }
    }
    Ok(steps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BgkRun {
    pub series: TimeSeries,
    pub state: SolverState,
}

pub fn run(config: &BgkConfig) -> Result<BgkRun, BgkError> {
    config.validate()?;
    let state = SolverState::initial(config)?;
    run_from(config, state)
}

/// Continues `state` to `config.t_end`, sampling on multiples of
/// `sample_interval` and at the configured snapshot times.
pub fn run_from(config: &BgkConfig, mut state: SolverState) -> Result<BgkRun, BgkError> {
    config.validate()?;
    if state.f.n_cells != config.grid.n_cells
        || state.vgrid.n_v1 != config.vgrid.n_v1
        || state.vgrid.n_v2 != config.vgrid.n_v2
    {
        return Err(BgkError::Config("state does not match the configured grids".into()));
    }
    let grid = config.grid;
    let mut series = TimeSeries::default();
    let mut snapshots: Vec<f64> = config
        .snapshot_times
        .iter()
        .cloned()
        .filter(|&t| t >= state.time && t <= config.t_end)
        .collect();
    snapshots.sort_by(f64::total_cmp);
    snapshots.dedup();
    let mut next_snapshot = 0;

    let eps = 1e-12 * config.t_end.max(1.0);
    let mut m = moments(&state.f, &state.vgrid).map_err(|e| blowup_from(&state, e))?;
    let mut sample_index = (state.time / config.sample_interval - 1e-9).ceil().max(0.0) as u64;
    loop {
        let t_sample = sample_index as f64 * config.sample_interval;
        if (state.time - t_sample).abs() <= eps {
            record(&mut series, &state, &grid, &m)?;
            sample_index += 1;
        }
        while next_snapshot < snapshots.len() && (state.time - snapshots[next_snapshot]).abs() <= eps {
            series.snapshots.push((state.time, m.clone()));
            next_snapshot += 1;
        }
        if state.time >= config.t_end - eps {
            break;
        }
        if maybe_remap(config, &mut state, &m)? {
            m = moments(&state.f, &state.vgrid).map_err(|e| blowup_from(&state, e))?;
        }
        let mut target = (sample_index as f64 * config.sample_interval).min(config.t_end);
        if next_snapshot < snapshots.len() {
            target = target.min(snapshots[next_snapshot]);
        }
        let dt_max = stable_dt(config, &state.vgrid, &m);
        let remaining = target - state.time;
        // land exactly on the next event without a sliver step
        let steps = (remaining / dt_max).ceil().max(1.0);
        advance(config, &mut state, remaining / steps, steps as usize)?;
        if (state.time - target).abs() <= eps {
            state.time = target;
        }
        m = moments(&state.f, &state.vgrid).map_err(|e| blowup_from(&state, e))?;
    }
    Ok(BgkRun { series, state })
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"VHBGKCK1";

/// Checkpoint layout, all little-endian:
///
/// ```text
/// magic    8 bytes  "VHBGKCK1"
/// n_cells  u64
/// n_v1     u64
/// n_v2     u64
/// v_max    f64
/// scale    f64
/// time     f64
/// step     u64
/// G        f64 × n_cells·n_v1·n_v2, row-major over (cell, v1, v2)
/// H        f64 × n_cells·n_v1·n_v2, same order
/// ```
pub fn write_checkpoint(state: &SolverState) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 16 * state.f.g.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [state.f.n_cells, state.f.n_v1, state.f.n_v2] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for v in [state.vgrid.v_max, state.vgrid.scale, state.time] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&state.step_count.to_le_bytes());
    for v in state.f.g.iter().chain(&state.f.h) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<SolverState, BgkError> {
    let err = |m: &str| BgkError::Checkpoint(m.to_string());
    if bytes.len() < 64 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(err("missing header"));
    }
    let word = |k: usize| -> [u8; 8] { bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap() };
    let n_cells = u64::from_le_bytes(word(0)) as usize;
    let n_v1 = u64::from_le_bytes(word(1)) as usize;
    let n_v2 = u64::from_le_bytes(word(2)) as usize;
    let v_max = f64::from_le_bytes(word(3));
    let scale = f64::from_le_bytes(word(4));
    let time = f64::from_le_bytes(word(5));
    let step_count = u64::from_le_bytes(word(6));
    let n = n_cells
        .checked_mul(n_v1)
        .and_then(|x| x.checked_mul(n_v2))
        .ok_or_else(|| err("dimensions overflow"))?;
    if bytes.len() != 64 + 16 * n {
        return Err(err("payload length does not match header"));
    }
    let read = |offset: usize| -> Vec<f64> {
        bytes[offset..offset + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let vgrid = VelocityGrid2D {
        n_v1,
        n_v2,
        v_max,
        scale,
    };
    vgrid.validate()?;
    Ok(SolverState {
        f: ReducedDistributionPair {
            n_cells,
            n_v1,
            n_v2,
            g: read(64),
            h: read(64 + 8 * n),
        },
        vgrid,
        time,
        step_count,
        scale_history: vec![(time, scale)],
        remaps: Vec::new(),
        clipped: 0,
    })
}
