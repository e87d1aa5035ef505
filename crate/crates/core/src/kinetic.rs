//! Phase-space storage shared by the deterministic kinetic solver.
//!
//! The force acts only on `v₂` and the walls only touch `v₁`, so the
//! distribution is stored in reduced form over `(x₁, v₁, v₂)`:
//! `G = ∫ F dv₃` and `H = ∫ v₃² F dv₃`. BGK relaxation closes on this pair.
//! Velocity integrals use the midpoint rule on a uniform grid centered at 0.

use std::f64::consts::PI;

use thiserror::Error;

pub const X_MIN: f64 = -0.25;
pub const X_MAX: f64 = 0.25;

/// Number of local thermal speeds the velocity grid must cover.
pub const THERMAL_COVERAGE: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KineticError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate state in cell {cell}: rho = {rho}, theta = {theta}")]
    Degenerate { cell: usize, rho: f64, theta: f64 },
    #[error("support error in cell {cell} at velocity node ({i1}, {i2}): G = {g}, H = {h}")]
    Support {
        cell: usize,
        i1: usize,
        i2: usize,
        g: f64,
        h: f64,
    },
    #[error("discrete equilibrium did not match moments in cell {cell} (residual {residual:e})")]
    Equilibrium { cell: usize, residual: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Uniform cell-centered grid on `[-1/4, 1/4]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid1D {
    pub n_cells: usize,
}

impl SpatialGrid1D {
    pub fn new(n_cells: usize) -> Result<Self, KineticError> {
        if n_cells < 2 {
            return Err(KineticError::InvalidParameter(format!(
                "n_cells = {n_cells} (need at least 2)"
            )));
        }
        Ok(Self { n_cells })
    }

    pub fn length(&self) -> f64 {
        X_MAX - X_MIN
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n_cells as f64
    }

    pub fn center(&self, cell: usize) -> f64 {
        X_MIN + (cell as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|c| self.center(c)).collect()
    }
}

/// Midpoint velocity grid on `[-v_max·scale, v_max·scale]²`.
///
/// `v_max` is in thermal-speed units of the reference state; `scale` tracks
/// the growth of the thermal speed and is raised by the solver's remap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityGrid2D {
    pub n_v1: usize,
    pub n_v2: usize,
    pub v_max: f64,
    pub scale: f64,
}

impl VelocityGrid2D {
    pub fn new(n_v1: usize, n_v2: usize, v_max: f64) -> Result<Self, KineticError> {
        let grid = Self {
            n_v1,
            n_v2,
            v_max,
            scale: 1.0,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), KineticError> {
        if self.n_v1 < 2 || self.n_v2 < 2 {
            return Err(KineticError::InvalidParameter(format!(
                "velocity grid {}x{} (need at least 2 nodes per axis)",
                self.n_v1, self.n_v2
            )));
        }
        if !(self.v_max > 0.0 && self.scale > 0.0 && (self.v_max * self.scale).is_finite()) {
            return Err(KineticError::InvalidParameter(format!(
                "v_max = {}, scale = {} (both must be positive)",
                self.v_max, self.scale
            )));
        }
        Ok(())
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn extent(&self) -> f64 {
        self.v_max * self.scale
    }

    pub fn dv1(&self) -> f64 {
        2.0 * self.extent() / self.n_v1 as f64
    }

    pub fn dv2(&self) -> f64 {
        2.0 * self.extent() / self.n_v2 as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dv1() * self.dv2()
    }

    pub fn v1(&self, i: usize) -> f64 {
        -self.extent() + (i as f64 + 0.5) * self.dv1()
    }

    pub fn v2(&self, j: usize) -> f64 {
        -self.extent() + (j as f64 + 0.5) * self.dv2()
    }

    pub fn v1_nodes(&self) -> Vec<f64> {
        (0..self.n_v1).map(|i| self.v1(i)).collect()
    }

    pub fn v2_nodes(&self) -> Vec<f64> {
        (0..self.n_v2).map(|j| self.v2(j)).collect()
    }

    /// Index of `-v₁` for node `i`.
    pub fn mirror_v1(&self, i: usize) -> usize {
        self.n_v1 - 1 - i
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.n_v1 * self.n_v2
    }

    /// True when the node sets are symmetric about zero to rounding.
    pub fn is_symmetric(&self) -> bool {
        let tol = 1e-12 * self.extent();
        (0..self.n_v1).all(|i| (self.v1(i) + self.v1(self.mirror_v1(i))).abs() <= tol)
            && (0..self.n_v2).all(|j| (self.v2(j) + self.v2(self.n_v2 - 1 - j)).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxwellianParams {
    pub rho: f64,
    pub u: [f64; 3],
    pub theta: f64,
}

impl MaxwellianParams {
    pub fn new(rho: f64, u: [f64; 3], theta: f64) -> Result<Self, KineticError> {
        let p = Self { rho, u, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), KineticError> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(KineticError::InvalidParameter(format!("rho = {}", self.rho)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(KineticError::InvalidParameter(format!("theta = {}", self.theta)));
        }
        if self.u[2] != 0.0 {
            return Err(KineticError::InvalidParameter(format!(
                "u3 = {} (the reduced model has u3 = 0)",
                self.u[2]
            )));
        }
        Ok(())
    }

    /// Exact `v₃`-integrals `(G, H)` of the Maxwellian at `(v₁, v₂)`.
    pub fn reduced_density(&self, v1: f64, v2: f64) -> (f64, f64) {
        let d1 = v1 - self.u[0];
        let d2 = v2 - self.u[1];
        let g = self.rho / (2.0 * PI * self.theta) * (-(d1 * d1 + d2 * d2) / (2.0 * self.theta)).exp();
        (g, self.theta * g)
    }
}

/// `G` and `H` over `(cell, v₁, v₂)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDistributionPair {
    pub n_cells: usize,
    pub n_v1: usize,
    pub n_v2: usize,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl ReducedDistributionPair {
    pub fn zeros(n_cells: usize, vgrid: &VelocityGrid2D) -> Self {
        let n = n_cells * vgrid.nodes_per_cell();
        Self {
            n_cells,
            n_v1: vgrid.n_v1,
            n_v2: vgrid.n_v2,
            g: vec![0.0; n],
            h: vec![0.0; n],
        }
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.n_v1 * self.n_v2
    }

    #[inline]
    pub fn index(&self, cell: usize, i1: usize, i2: usize) -> usize {
        (cell * self.n_v1 + i1) * self.n_v2 + i2
    }

    pub fn cell(&self, cell: usize) -> (&[f64], &[f64]) {
        let n = self.nodes_per_cell();
        let r = cell * n..(cell + 1) * n;
        (&self.g[r.clone()], &self.h[r])
    }

    pub fn cell_mut(&mut self, cell: usize) -> (&mut [f64], &mut [f64]) {
        let n = self.nodes_per_cell();
        let r = cell * n..(cell + 1) * n;
        (&mut self.g[r.clone()], &mut self.h[r])
    }

    pub fn check_shape(&self, vgrid: &VelocityGrid2D) -> Result<(), KineticError> {
        if self.n_v1 != vgrid.n_v1 || self.n_v2 != vgrid.n_v2 {
            return Err(KineticError::Shape(format!(
                "distribution has {}x{} velocity nodes, grid has {}x{}",
                self.n_v1, self.n_v2, vgrid.n_v1, vgrid.n_v2
            )));
        }
        if self.g.len() != self.n_cells * self.nodes_per_cell() || self.h.len() != self.g.len() {
            return Err(KineticError::Shape("array length does not match dimensions".into()));
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.g.iter_mut().for_each(|x| *x *= c);
        self.h.iter_mut().for_each(|x| *x *= c);
    }

    pub fn add(&mut self, other: &Self) {
        self.g.iter_mut().zip(&other.g).for_each(|(a, b)| *a += b);
        self.h.iter_mut().zip(&other.h).for_each(|(a, b)| *a += b);
    }

    pub fn min_value(&self) -> f64 {
        self.g.iter().chain(&self.h).fold(f64::INFINITY, |m, &x| m.min(x))
    }

    /// `Δx · Σ_cells ∬ G`.
    pub fn total_mass(&self, vgrid: &VelocityGrid2D, grid: &SpatialGrid1D) -> f64 {
        self.g.iter().sum::<f64>() * vgrid.cell_area() * grid.dx()
    }
}

/// Pointwise samples of the reduced Maxwellian, identical in every cell.
pub fn maxwellian_reduced(
    p: &MaxwellianParams,
    vgrid: &VelocityGrid2D,
    n_cells: usize,
) -> Result<ReducedDistributionPair, KineticError> {
    p.validate()?;
    vgrid.validate()?;
    let mut f = ReducedDistributionPair::zeros(n_cells, vgrid);
    for cell in 0..n_cells {
        for i1 in 0..vgrid.n_v1 {
            for i2 in 0..vgrid.n_v2 {
                let (g, h) = p.reduced_density(vgrid.v1(i1), vgrid.v2(i2));
                let k = f.index(cell, i1, i2);
                f.g[k] = g;
                f.h[k] = h;
            }
        }
    }
    Ok(f)
}

/// Discrete conserved sums of one cell: `[∬G, ∬v₁G, ∬v₂G, ∬(|v|²G + H)]`.
pub fn cell_sums(g: &[f64], h: &[f64], vgrid: &VelocityGrid2D) -> [f64; 4] {
    let v1 = vgrid.v1_nodes();
    let v2 = vgrid.v2_nodes();
    let mut s = [0.0; 4];
    for (i1, &a) in v1.iter().enumerate() {
        let row_g = &g[i1 * vgrid.n_v2..(i1 + 1) * vgrid.n_v2];
        let row_h = &h[i1 * vgrid.n_v2..(i1 + 1) * vgrid.n_v2];
        let (mut m0, mut m2, mut e) = (0.0, 0.0, 0.0);
        for ((&gv, &hv), &b) in row_g.iter().zip(row_h).zip(&v2) {
            m0 += gv;
            m2 += b * gv;
            e += b * b * gv + hv;
        }
        s[0] += m0;
        s[1] += a * m0;
        s[2] += m2;
        s[3] += a * a * m0 + e;
    }
    let da = vgrid.cell_area();
    s.map(|x| x * da)
}

/// Converts conserved sums to `(ρ, u₁, u₂, θ)`.
pub fn primitive_from_sums(s: &[f64; 4]) -> (f64, f64, f64, f64) {
    let rho = s[0];
    let u1 = s[1] / rho;
    let u2 = s[2] / rho;
    let theta = (s[3] / rho - u1 * u1 - u2 * u2) / 3.0;
    (rho, u1, u2, theta)
}

/// Macroscopic profiles on the spatial grid (`u₃ ≡ 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct MacroFields {
    pub rho: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub theta: Vec<f64>,
}

impl MacroFields {
    pub fn n_cells(&self) -> usize {
        self.rho.len()
    }

    /// `2 ∫ θ dx` over the half period, i.e. the cell mean on a uniform grid.
    pub fn theta_av(&self) -> f64 {
        self.theta.iter().sum::<f64>() / self.n_cells() as f64
    }

    /// `2 ∫ |u₂| dx`.
    pub fn u2_av(&self) -> f64 {
        self.u2.iter().map(|u| u.abs()).sum::<f64>() / self.n_cells() as f64
    }

    /// Profile CSV with header `x1,rho,u1,u2,theta`.
    pub fn to_csv(&self, grid: &SpatialGrid1D) -> String {
        let mut out = String::from("x1,rho,u1,u2,theta\n");
        for c in 0..self.n_cells() {
            out.push_str(&format!(
                "{:.10e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                grid.center(c),
                self.rho[c],
                self.u1[c],
                self.u2[c],
                self.theta[c]
            ));
        }
        out
    }
}

pub fn moments(
    f: &ReducedDistributionPair,
    vgrid: &VelocityGrid2D,
) -> Result<MacroFields, KineticError> {
    f.check_shape(vgrid)?;
    let n = f.n_cells;
    let mut m = MacroFields {
        rho: vec![0.0; n],
        u1: vec![0.0; n],
        u2: vec![0.0; n],
        theta: vec![0.0; n],
    };
    for cell in 0..n {
        let (g, h) = f.cell(cell);
        let (rho, u1, u2, theta) = primitive_from_sums(&cell_sums(g, h, vgrid));
        if !(rho > 0.0 && theta > 0.0 && u1.is_finite() && u2.is_finite()) {
            return Err(KineticError::Degenerate { cell, rho, theta });
        }
        m.rho[cell] = rho;
        m.u1[cell] = u1;
        m.u2[cell] = u2;
        m.theta[cell] = theta;
    }
    Ok(m)
}

/// Reduced H-functional `Δx Σ ∬ [G ln G − ½ G ln(2πe H/G)]`.
///
/// This is `∫∫ F ln F` for the distribution that is Gaussian in `v₃` with
/// variance `H/G` at every `(x₁, v₁, v₂)`, which BGK dynamics preserves from
/// Maxwellian data. Nodes with `G = H = 0` contribute nothing.
pub fn entropy(
    f: &ReducedDistributionPair,
    vgrid: &VelocityGrid2D,
    grid: &SpatialGrid1D,
) -> Result<f64, KineticError> {
    f.check_shape(vgrid)?;
    let two_pi_e = 2.0 * PI * std::f64::consts::E;
    let mut total = 0.0;
    for cell in 0..f.n_cells {
        let (g, h) = f.cell(cell);
        let mut s = 0.0;
        for (k, (&gv, &hv)) in g.iter().zip(h).enumerate() {
            if gv > 0.0 && hv > 0.0 {
                s += gv * gv.ln() - 0.5 * gv * (two_pi_e * hv / gv).ln();
            } else if gv != 0.0 || hv != 0.0 {
                return Err(KineticError::Support {
                    cell,
                    i1: k / f.n_v2,
                    i2: k % f.n_v2,
                    g: gv,
                    h: hv,
                });
            }
        }
        total += s;
    }
    Ok(total * vgrid.cell_area() * grid.dx())
}

/// Fills `(g, h)` with the grid Maxwellian whose discrete sums equal
/// `target`, and returns the shifted parameters used.
///
/// The shape stays `exp(a + b·v − |v|²/2θ')` with `H = θ'G`, which makes it
/// the minimizer of the discrete reduced H-functional at fixed sums. The
/// parameters are found by fixed-point correction from the continuous
/// values; on a grid that resolves the state the error contracts by the
/// quadrature defect each pass.
pub fn discrete_equilibrium(
    target: &[f64; 4],
    vgrid: &VelocityGrid2D,
    g: &mut [f64],
    h: &mut [f64],
) -> Result<(f64, f64, f64, f64), KineticError> {
    let v1 = vgrid.v1_nodes();
    let v2 = vgrid.v2_nodes();
    let da = vgrid.cell_area();
    let want = primitive_from_sums(target);
    if !(want.0 > 0.0 && want.3 > 0.0) {
        return Err(KineticError::Degenerate {
            cell: 0,
            rho: want.0,
            theta: want.3,
        });
    }
    let mut e1 = vec![0.0; v1.len()];
    let mut e2 = vec![0.0; v2.len()];
    let (mut rho, mut u1, mut u2, mut theta) = want;
    let mut residual = f64::INFINITY;
    let mut amp = 0.0;
    for _ in 0..30 {
        if !(rho > 0.0 && theta > 0.0) {
            break;
        }
        let inv = 0.5 / theta;
        let mut s1 = [0.0; 3];
        for (e, &v) in e1.iter_mut().zip(&v1) {
            *e = (-(v - u1) * (v - u1) * inv).exp();
            s1[0] += *e;
            s1[1] += v * *e;
            s1[2] += v * v * *e;
        }
        let mut s2 = [0.0; 3];
        for (e, &v) in e2.iter_mut().zip(&v2) {
            *e = (-(v - u2) * (v - u2) * inv).exp();
            s2[0] += *e;
            s2[1] += v * *e;
            s2[2] += v * v * *e;
        }
        amp = rho / (2.0 * PI * theta);
        let c = amp * da;
        let sums = [
            c * s1[0] * s2[0],
            c * s1[1] * s2[0],
            c * s1[0] * s2[1],
            c * (s1[2] * s2[0] + s1[0] * s2[2] + theta * s1[0] * s2[0]),
        ];
        let got = primitive_from_sums(&sums);
        let d = (
            want.0 - got.0,
            want.1 - got.1,
            want.2 - got.2,
            want.3 - got.3,
        );
        residual = (d.0 / want.0)
            .abs()
            .max(d.1.abs() / want.3.sqrt())
            .max(d.2.abs() / want.3.sqrt())
            .max((d.3 / want.3).abs());
        if residual < 4e-16 {
            break;
        }
        rho += d.0;
        u1 += d.1;
        u2 += d.2;
        theta += d.3;
    }
    if !(residual < 1e-12) {
        return Err(KineticError::Equilibrium { cell: 0, residual });
    }
    for (i1, &a) in e1.iter().enumerate() {
        let row = i1 * v2.len();
        for (i2, &b) in e2.iter().enumerate() {
            let gv = amp * a * b;
            g[row + i2] = gv;
            h[row + i2] = theta * gv;
        }
    }
    Ok((rho, u1, u2, theta))
}

/// Grid Maxwellian with exactly the discrete moments `p` in every cell.
pub fn discrete_maxwellian(
    p: &MaxwellianParams,
    vgrid: &VelocityGrid2D,
    n_cells: usize,
) -> Result<ReducedDistributionPair, KineticError> {
    p.validate()?;
    vgrid.validate()?;
    let target = [
        p.rho,
        p.rho * p.u[0],
        p.rho * p.u[1],
        p.rho * (p.u[0] * p.u[0] + p.u[1] * p.u[1] + 3.0 * p.theta),
    ];
    let mut f = ReducedDistributionPair::zeros(n_cells, vgrid);
    for cell in 0..n_cells {
        let (g, h) = f.cell_mut(cell);
        discrete_equilibrium(&target, vgrid, g, h)?;
    }
    Ok(f)
}
