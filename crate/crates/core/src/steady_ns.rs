//! Steady incompressible Navier–Stokes on the unit 3-torus.
//!
//! Fields are truncated Fourier series `u(x) = Σ c_k e^{2πik·x}` over
//! `|k|∞ ≤ N`, mean zero. The steady problem
//! `div(u⊗u) + ∇p = νΔu + f` is solved by the damped Picard iteration
//!
//! ```text
//! u ← (1−λ)u + λ[(−νΔ)⁻¹Πf − ν⁻¹T(u)],   T(v) = (−Δ)⁻¹Π div(v⊗v)
//! ```
//!
//! with the quadratic term evaluated on a grid of at least `3N+1` points per
//! axis, which leaves the retained modes free of aliasing.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

type C3 = [Complex64; 3];

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteadyNsError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("temperature sweep did not vanish: |theta| = {norm:e} after {sweeps} sweeps")]
    Inconsistent { norm: f64, sweeps: usize },
}

/// Mean-zero truncated Fourier vector field, stored on the full cube
/// `|k|∞ ≤ N`; the `k = 0` entry is kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierVectorField {
    pub n: usize,
    pub coeffs: Vec<C3>,
}

impl FourierVectorField {
    pub fn zeros(n: usize) -> Self {
        let side = 2 * n + 1;
        Self {
            n,
            coeffs: vec![[ZERO; 3]; side * side * side],
        }
    }

    fn side(&self) -> usize {
        2 * self.n + 1
    }

    pub fn index(&self, k: [i64; 3]) -> Option<usize> {
        let n = self.n as i64;
        if k.iter().any(|&x| x.abs() > n) {
            return None;
        }
        let s = self.side() as i64;
        Some((((k[0] + n) * s + (k[1] + n)) * s + (k[2] + n)) as usize)
    }

    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        let s = self.side();
        let n = self.n as i64;
        [
            (idx / (s * s)) as i64 - n,
            ((idx / s) % s) as i64 - n,
            (idx % s) as i64 - n,
        ]
    }

    pub fn get(&self, k: [i64; 3]) -> C3 {
        self.index(k).map(|i| self.coeffs[i]).unwrap_or([ZERO; 3])
    }

    /// Sets `c_k` and `c_{−k} = conj(c_k)`.
    pub fn set_mode(&mut self, k: [i64; 3], c: C3) -> Result<(), SteadyNsError> {
        if k == [0, 0, 0] {
            return Err(SteadyNsError::Config("the k = 0 mode is fixed at zero".into()));
        }
        let i = self
            .index(k)
            .ok_or_else(|| SteadyNsError::Config(format!("mode {k:?} exceeds truncation {}", self.n)))?;
        let j = self.index([-k[0], -k[1], -k[2]]).unwrap();
        self.coeffs[i] = c;
        self.coeffs[j] = [c[0].conj(), c[1].conj(), c[2].conj()];
        Ok(())
    }

    /// Copy at a different truncation.
    pub fn resized(&self, n: usize) -> Self {
        let mut out = Self::zeros(n);
        for (idx, c) in self.coeffs.iter().enumerate() {
            if let Some(j) = out.index(self.wavevector(idx)) {
                out.coeffs[j] = *c;
            }
        }
        out
    }

    /// Largest `|c_{−k} − conj(c_k)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (idx, c) in self.coeffs.iter().enumerate() {
            let k = self.wavevector(idx);
            let m = self.get([-k[0], -k[1], -k[2]]);
            for d in 0..3 {
                worst = worst.max((m[d] - c[d].conj()).norm());
            }
        }
        worst
    }

    /// Largest `|k·c_k|`.
    pub fn divergence_defect(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let k = self.wavevector(idx);
                (0..3).map(|d| c[d] * k[d] as f64).sum::<Complex64>().norm()
            })
            .fold(0.0, f64::max)
    }

    fn map_modes(&self, f: impl Fn([f64; 3], C3) -> C3) -> Self {
        let mut out = self.clone();
        for (idx, c) in out.coeffs.iter_mut().enumerate() {
            let k = self.wavevector(idx);
            *c = if k == [0, 0, 0] {
                [ZERO; 3]
            } else {
                f([k[0] as f64, k[1] as f64, k[2] as f64], *c)
            };
        }
        out
    }

    /// Weighted `(Σ w(|2πk|²) |c_k|²)^{1/2}`.
    fn weighted_norm(&self, w: impl Fn(f64) -> f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let k = self.wavevector(idx);
                if k == [0, 0, 0] {
                    return 0.0;
                }
                let k2 = 4.0 * PI * PI * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
                w(k2) * c.iter().map(|z| z.norm_sqr()).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `‖u‖_{L²}`.
    pub fn l2_norm(&self) -> f64 {
        self.weighted_norm(|_| 1.0)
    }

    /// `‖∇u‖_{L²}`.
    pub fn grad_norm(&self) -> f64 {
        self.weighted_norm(|k2| k2)
    }

    /// `‖(−Δ)^{−1/2}u‖_{L²}`.
    pub fn inv_sqrt_laplacian_norm(&self) -> f64 {
        self.weighted_norm(|k2| 1.0 / k2)
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map_modes(|_, c| [c[0] * a, c[1] * a, c[2] * a])
    }

    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        let mut out = self.clone();
        for (x, y) in out.coeffs.iter_mut().zip(&other.coeffs) {
            for d in 0..3 {
                x[d] += y[d] * a;
            }
        }
        out
    }

    /// Solution CSV with header `kx,ky,kz,re1,im1,re2,im2,re3,im3`;
    /// modes that are exactly zero are omitted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kx,ky,kz,re1,im1,re2,im2,re3,im3\n");
        for (idx, c) in self.coeffs.iter().enumerate() {
            if c.iter().all(|z| *z == ZERO) {
                continue;
            }
            let k = self.wavevector(idx);
            out.push_str(&format!(
                "{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                k[0], k[1], k[2], c[0].re, c[0].im, c[1].re, c[1].im, c[2].re, c[2].im
            ));
        }
        out
    }
}

/// `c_k ← c_k − k(k·c_k)/|k|²`.
pub fn leray_project(v: &FourierVectorField) -> FourierVectorField {
    v.map_modes(|k, c| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        let dot: Complex64 = (0..3).map(|d| c[d] * k[d]).sum();
        [c[0] - dot * (k[0] / k2), c[1] - dot * (k[1] / k2), c[2] - dot * (k[2] / k2)]
    })
}

/// `(−Δ)⁻¹`, division by `|2πk|²`.
pub fn inverse_neg_laplacian(v: &FourierVectorField) -> FourierVectorField {
    v.map_modes(|k, c| {
        let k2 = 4.0 * PI * PI * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
        [c[0] / k2, c[1] / k2, c[2] / k2]
    })
}

/// `Δ`, multiplication by `−|2πk|²`.
pub fn laplacian(v: &FourierVectorField) -> FourierVectorField {
    v.map_modes(|k, c| {
        let k2 = -4.0 * PI * PI * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
        [c[0] * k2, c[1] * k2, c[2] * k2]
    })
}

/// Transform workspace for one truncation: grid of `m ≥ 3N+1` points per axis.
pub struct Spectral {
    pub n: usize,
    pub m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Spectral {{ n: {}, m: {} }}", self.n, self.m)
    }
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let m = 3 * n + 1;
        let mut planner = FftPlanner::new();
        Self {
            n,
            m,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
        }
    }

    fn grid_index(&self, k: i64) -> usize {
        k.rem_euclid(self.m as i64) as usize
    }

    fn fft3(&self, data: &mut [Complex64], inverse: bool) {
        let m = self.m;
        let plan = if inverse { &self.inv } else { &self.fwd };
        // last axis is contiguous
        plan.process(data);
        let mut line = vec![ZERO; m];
        for a in 0..m {
            for c in 0..m {
                for b in 0..m {
                    line[b] = data[(a * m + b) * m + c];
                }
                plan.process(&mut line);
                for b in 0..m {
                    data[(a * m + b) * m + c] = line[b];
                }
            }
        }
        for b in 0..m {
            for c in 0..m {
                for a in 0..m {
                    line[a] = data[(a * m + b) * m + c];
                }
                plan.process(&mut line);
                for a in 0..m {
                    data[(a * m + b) * m + c] = line[a];
                }
            }
        }
    }

    /// Grid values of component `d` at `x = j/m`.
    fn to_grid(&self, v: &FourierVectorField, d: usize) -> Vec<Complex64> {
        let m = self.m;
        let mut data = vec![ZERO; m * m * m];
        for (idx, c) in v.coeffs.iter().enumerate() {
            let k = v.wavevector(idx);
            let (a, b, e) = (self.grid_index(k[0]), self.grid_index(k[1]), self.grid_index(k[2]));
            data[(a * m + b) * m + e] = c[d];
        }
        self.fft3(&mut data, true);
        data
    }

    /// Coefficients of grid data on `|k|∞ ≤ n`.
    fn from_grid(&self, mut data: Vec<Complex64>) -> impl Fn([i64; 3]) -> Complex64 {
        self.fft3(&mut data, false);
        let m = self.m;
        let norm = 1.0 / (m * m * m) as f64;
        move |k: [i64; 3]| {
            let g = |x: i64| x.rem_euclid(m as i64) as usize;
            data[(g(k[0]) * m + g(k[1])) * m + g(k[2])] * norm
        }
    }

    /// Real part of each grid component of `v`, plus the largest imaginary part.
    pub fn real_grid(&self, v: &FourierVectorField) -> ([Vec<f64>; 3], f64) {
        let mut imag: f64 = 0.0;
        let comps = [0, 1, 2].map(|d| {
            let g = self.to_grid(v, d);
            imag = imag.max(g.iter().map(|z| z.im.abs()).fold(0.0, f64::max));
            g.iter().map(|z| z.re).collect::<Vec<f64>>()
        });
        (comps, imag)
    }

    /// `Π div(v⊗v)`, dealiased.
    pub fn projected_advection(&self, v: &FourierVectorField) -> FourierVectorField {
        let (u, _) = self.real_grid(v);
        let mut prod = Vec::with_capacity(6);
        let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        for &(i, j) in &pairs {
            let data: Vec<Complex64> = u[i].iter().zip(&u[j]).map(|(a, b)| Complex64::new(a * b, 0.0)).collect();
            prod.push(self.from_grid(data));
        }
        let pair_index = |i: usize, j: usize| pairs.iter().position(|&p| p == (i.min(j), i.max(j))).unwrap();
        let mut out = FourierVectorField::zeros(v.n);
        for idx in 0..out.coeffs.len() {
            let k = out.wavevector(idx);
            if k == [0, 0, 0] {
                continue;
            }
            let mut c = [ZERO; 3];
            for (i, ci) in c.iter_mut().enumerate() {
                for j in 0..3 {
                    *ci += prod[pair_index(i, j)](k) * Complex64::new(0.0, 2.0 * PI * k[j] as f64);
                }
            }
            out.coeffs[idx] = c;
        }
        leray_project(&out)
    }

    /// `T(v) = (−Δ)⁻¹Π div(v⊗v)`.
    pub fn bilinear_t(&self, v: &FourierVectorField) -> FourierVectorField {
        inverse_neg_laplacian(&self.projected_advection(v))
    }

    /// Coefficients of `div(u θ)` for a scalar field given as a one-component
    /// vector field (component 0).
    fn divergence_of_product(&self, u: &FourierVectorField, theta: &FourierVectorField) -> FourierVectorField {
        let (ug, _) = self.real_grid(u);
        let tg = self.to_grid(theta, 0);
        let flux: Vec<_> = (0..3)
            .map(|d| {
                let data = ug[d].iter().zip(&tg).map(|(a, t)| Complex64::new(a * t.re, 0.0)).collect();
                self.from_grid(data)
            })
            .collect();
        let mut out = FourierVectorField::zeros(u.n);
        for idx in 0..out.coeffs.len() {
            let k = out.wavevector(idx);
            if k == [0, 0, 0] {
                continue;
            }
            let c: Complex64 = (0..3)
                .map(|d| flux[d](k) * Complex64::new(0.0, 2.0 * PI * k[d] as f64))
                .sum();
            out.coeffs[idx][0] = c;
        }
        out
    }
}

/// Random real divergence-free field on modes `|k|∞ ≤ k_max`, scaled so
/// that `‖(−Δ)^{−1/2}f‖ = size`.
pub fn random_solenoidal<R: Rng>(n: usize, k_max: usize, size: f64, rng: &mut R) -> FourierVectorField {
    let mut f = FourierVectorField::zeros(n);
    let km = k_max.min(n) as i64;
    for idx in 0..f.coeffs.len() {
        let k = f.wavevector(idx);
        if k == [0, 0, 0] || k.iter().any(|x| x.abs() > km) {
            continue;
        }
        // fill one of each ±k pair
        if (k[0], k[1], k[2]) < (-k[0], -k[1], -k[2]) {
            continue;
        }
        let c = [0, 1, 2].map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        f.set_mode(k, c).unwrap();
    }
    let f = leray_project(&f);
    let norm = f.inv_sqrt_laplacian_norm();
    f.scale(size / norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyNsConfig {
    pub nu: f64,
    pub force: FourierVectorField,
    pub damping: f64,
    pub max_iter: usize,
    pub residual_tol: f64,
    /// Constant `C` of the smallness condition `‖(−Δ)^{−1/2}f‖ < ν²/4C²`.
    pub sobolev_c: f64,
}

impl SteadyNsConfig {
    pub fn new(nu: f64, force: FourierVectorField) -> Self {
        Self {
            nu,
            force,
            damping: 1.0,
            max_iter: 200,
            residual_tol: 1e-10,
            sobolev_c: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SteadyNsError> {
        let bad = |m: String| Err(SteadyNsError::Config(m));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu = {} (must be > 0)", self.nu));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping = {} (must be in (0, 1])", self.damping));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be >= 1".into());
        }
        if !(self.residual_tol > 0.0) {
            return bad(format!("residual_tol = {} (must be > 0)", self.residual_tol));
        }
        if !(self.sobolev_c > 0.0) {
            return bad(format!("sobolev_c = {} (must be > 0)", self.sobolev_c));
        }
        if self.force.n == 0 {
            return bad("truncation must be >= 1".into());
        }
        let scale = self.force.l2_norm().max(1e-300);
        let div = leray_project(&self.force).axpy(-1.0, &self.force).l2_norm();
        if div > 1e-12 * scale.max(1.0) {
            return bad(format!("force is not divergence-free (defect {div:e})"));
        }
        let herm = self.force.hermitian_defect();
        if herm > 1e-12 * scale.max(1.0) {
            return bad(format!("force is not real-valued (defect {herm:e})"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub u: FourierVectorField,
    pub residual: f64,
    pub iterations: usize,
    /// `‖u_{j+1} − u_j‖ / ‖u_j − u_{j−1}‖` per iteration.
    pub update_ratios: Vec<f64>,
    pub residual_history: Vec<f64>,
    /// `‖(−Δ)^{−1/2}f‖`.
    pub force_norm: f64,
    /// `ν²/4C²`.
    pub smallness_bound: f64,
    pub smallness_held: bool,
    /// `ν⁻¹‖(−Δ)^{−1/2}f‖ − ‖∇u‖`.
    pub energy_margin: f64,
    pub obstruction: f64,
    pub max_divergence: f64,
}

impl SolveReport {
    pub fn certificate(&self) -> String {
        format!(
            "smallness_held: {}\nforce_norm: {:.6e}\nsmallness_bound: {:.6e}\nsmallness_note: heuristic, C = configured constant\nenergy_bound_margin: {:.6e}\nobstruction: {:.12e}\nresidual: {:.3e}\niterations: {}\n",
            if self.smallness_held { "yes" } else { "no" },
            self.force_norm,
            self.smallness_bound,
            self.energy_margin,
            self.obstruction,
            self.residual,
            self.iterations
        )
    }
}

/// `‖νΔu − Πdiv(u⊗u) + Πf‖_{L²}`.
pub fn residual(sp: &Spectral, u: &FourierVectorField, nu: f64, force: &FourierVectorField) -> f64 {
    laplacian(u)
        .scale(nu)
        .axpy(-1.0, &sp.projected_advection(u))
        .axpy(1.0, &leray_project(force))
        .l2_norm()
}

pub fn solve_steady(cfg: &SteadyNsConfig) -> Result<SolveReport, SteadyNsError> {
    cfg.validate()?;
    let n = cfg.force.n;
    let sp = Spectral::new(n);
    let forced = inverse_neg_laplacian(&leray_project(&cfg.force)).scale(1.0 / cfg.nu);
    let mut u = FourierVectorField::zeros(n);
    let mut last_step = f64::NAN;
    let mut ratios = Vec::new();
    let mut history = Vec::new();
    let mut max_div: f64 = 0.0;
    let mut res = residual(&sp, &u, cfg.nu, &cfg.force);
    let mut iterations = 0;
    while res > cfg.residual_tol && iterations < cfg.max_iter {
        let target = forced.axpy(-1.0 / cfg.nu, &sp.bilinear_t(&u));
        let next = u.scale(1.0 - cfg.damping).axpy(cfg.damping, &target);
        let step = next.axpy(-1.0, &u).l2_norm();
        if last_step.is_finite() && last_step > 0.0 {
            ratios.push(step / last_step);
        }
        last_step = step;
        u = next;
        max_div = max_div.max(u.divergence_defect());
        iterations += 1;
        res = residual(&sp, &u, cfg.nu, &cfg.force);
        history.push(res);
        if !res.is_finite() {
            break;
        }
    }
    if !(res <= cfg.residual_tol) {
        return Err(SteadyNsError::NonConvergence {
            iterations,
            residual: res,
        });
    }
    let force_norm = cfg.force.inv_sqrt_laplacian_norm();
    let bound = cfg.nu * cfg.nu / (4.0 * cfg.sobolev_c * cfg.sobolev_c);
    Ok(SolveReport {
        residual: res,
        iterations,
        update_ratios: ratios,
        residual_history: history,
        force_norm,
        smallness_bound: bound,
        smallness_held: force_norm < bound,
        energy_margin: force_norm / cfg.nu - u.grad_norm(),
        obstruction: viscous_heating_obstruction(&u),
        max_divergence: max_div,
        u,
    })
}

/// `∫|∇u + (∇u)ᵀ|² dx` by Parseval.
pub fn viscous_heating_obstruction(u: &FourierVectorField) -> f64 {
    let mut total = 0.0;
    for (idx, c) in u.coeffs.iter().enumerate() {
        let k = u.wavevector(idx);
        for i in 0..3 {
            for j in 0..3 {
                let s = (c[i] * k[j] as f64 + c[j] * k[i] as f64) * (2.0 * PI);
                total += s.norm_sqr();
            }
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaReport {
    /// Coefficients of `θ`, stored in component 0.
    pub theta: FourierVectorField,
    pub norm: f64,
    pub initial_norm: f64,
    pub sweeps: usize,
}

/// Solves `(5/2) div(uθ) = κΔθ` for mean-zero `θ` by the sweeps
/// `θ ← (κΔ)⁻¹(5/2) div(uθ)` from a nonzero start, and checks that the
/// result is zero to `tol`.
pub fn nsf_theta(u: &FourierVectorField, kappa: f64, tol: f64) -> Result<ThetaReport, SteadyNsError> {
    if !(kappa > 0.0) {
        return Err(SteadyNsError::Config(format!("kappa = {kappa} (must be > 0)")));
    }
    let sp = Spectral::new(u.n);
    let mut theta = FourierVectorField::zeros(u.n);
    for k in [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0]] {
        theta
            .set_mode(k, [Complex64::new(0.5, 0.25), ZERO, ZERO])
            .unwrap();
    }
    let initial = theta.l2_norm();
    let max_sweeps = 500;
    let mut sweeps = 0;
    let mut norm = initial;
    while norm > tol && sweeps < max_sweeps {
        let src = sp.divergence_of_product(u, &theta);
        theta = inverse_neg_laplacian(&src).scale(-2.5 / kappa);
        norm = theta.l2_norm();
        sweeps += 1;
        if !norm.is_finite() || norm > 1e6 * initial {
            break;
        }
    }
    if !(norm <= tol) {
        return Err(SteadyNsError::Inconsistent { norm, sweeps });
    }
    Ok(ThetaReport {
        theta,
        norm,
        initial_norm: initial,
        sweeps,
    })
}

/// Force `(0, 0, a sin 2πx₁)`.
pub fn shear_force(n: usize, a: f64) -> FourierVectorField {
    let mut f = FourierVectorField::zeros(n);
    // sin 2πx = (e^{2πix} − e^{−2πix}) / 2i
    f.set_mode([1, 0, 0], [ZERO, ZERO, Complex64::new(0.0, -0.5 * a)])
        .unwrap();
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn projection_kills_gradients_and_keeps_solenoidal() {
        let mut g = FourierVectorField::zeros(3);
        g.set_mode([1, 2, 0], [c(1.0, 0.5), c(2.0, 1.0), ZERO]).unwrap();
        assert!(leray_project(&g).l2_norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_solenoidal(3, 2, 1.0, &mut rng);
        assert!(f.divergence_defect() < 1e-14);
        let p = leray_project(&f);
        assert!(p.axpy(-1.0, &f).l2_norm() < 1e-14);

        let mut v = FourierVectorField::zeros(3);
        v.set_mode([1, -1, 2], [c(0.3, 0.1), c(-0.7, 0.2), c(0.4, -0.9)]).unwrap();
        let once = leray_project(&v);
        let twice = leray_project(&once);
        assert!(twice.axpy(-1.0, &once).l2_norm() < 1e-14);
        assert!(once.divergence_defect() < 1e-14);
    }

    #[test]
    fn t_vanishes_on_shears_and_zero() {
        let sp = Spectral::new(4);
        assert_eq!(sp.bilinear_t(&FourierVectorField::zeros(4)).l2_norm(), 0.0);
        let mut u = FourierVectorField::zeros(4);
        // U(x₁, x₂) e₃
        u.set_mode([1, 2, 0], [ZERO, ZERO, c(0.3, -0.2)]).unwrap();
        u.set_mode([2, -1, 0], [ZERO, ZERO, c(0.1, 0.4)]).unwrap();
        assert!(sp.bilinear_t(&u).l2_norm() < 1e-15);
        // (0, sin 2πx₁, 0)
        let mut w = FourierVectorField::zeros(4);
        w.set_mode([1, 0, 0], [ZERO, c(0.0, -0.5), ZERO]).unwrap();
        assert!(sp.bilinear_t(&w).l2_norm() < 1e-15);
    }

    #[test]
    fn advection_matches_hand_convolution() {
        // u = (sin 2πx₂, sin 2πx₁, 0): (u·∇)u = (2π sin2πx₁ cos2πx₂, 2π sin2πx₂ cos2πx₁, 0)
        //   = ∇(sin 2πx₁ sin 2πx₂), a pure gradient, so Π div(u⊗u) = 0
        let sp = Spectral::new(3);
        let mut u = FourierVectorField::zeros(3);
        u.set_mode([0, 1, 0], [c(0.0, -0.5), ZERO, ZERO]).unwrap();
        u.set_mode([1, 0, 0], [ZERO, c(0.0, -0.5), ZERO]).unwrap();
        assert!(sp.projected_advection(&u).l2_norm() < 1e-14);

        // u = (0, sin 2πx₁, sin 2πx₂): (u·∇)u = (0, 0, 2π sin2πx₁ cos2πx₂)
        // which is solenoidal; its (1,±1,0) coefficients are ∓2π·i/4 ... check directly
        let mut v = FourierVectorField::zeros(3);
        v.set_mode([1, 0, 0], [ZERO, c(0.0, -0.5), ZERO]).unwrap();
        v.set_mode([0, 1, 0], [ZERO, ZERO, c(0.0, -0.5)]).unwrap();
        let a = sp.projected_advection(&v);
        // sin a cos b = [sin(a+b) + sin(a−b)]/2, sin θ ↔ coefficient −i/2 at +k
        let expect = c(0.0, -0.5 * 0.5 * 2.0 * PI);
        for k in [[1, 1, 0], [1, -1, 0]] {
            let got = a.get(k)[2];
            assert!((got - expect).norm() < 1e-13, "{k:?}: {got}");
            assert!(a.get(k)[0].norm() < 1e-14 && a.get(k)[1].norm() < 1e-14);
        }
        let total: f64 = a.l2_norm();
        assert!((total - (4.0 * expect.norm_sqr()).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn shear_solution_is_poisson_mode() {
        let cfg = SteadyNsConfig::new(1.0, shear_force(4, 1.0));
        let r = solve_steady(&cfg).unwrap();
        let amp = 1.0 / (4.0 * PI * PI);
        let coef = r.u.get([1, 0, 0])[2];
        assert!((coef - c(0.0, -0.5 * amp)).norm() < 1e-15);
        assert!((2.0 * coef.norm() - 0.025330).abs() < 1e-6);
        assert!(r.iterations <= 2);
        assert!(r.residual < 1e-12);
        assert!((r.obstruction - amp).abs() < 1e-12);
        assert!(r.energy_margin >= -1e-15);
        assert!(r.smallness_held);
    }

    #[test]
    fn zero_force_gives_zero() {
        let cfg = SteadyNsConfig::new(0.7, FourierVectorField::zeros(3));
        let r = solve_steady(&cfg).unwrap();
        assert_eq!(r.u.l2_norm(), 0.0);
        assert_eq!(r.iterations, 0);
        assert_eq!(viscous_heating_obstruction(&r.u), 0.0);
    }

    #[test]
    fn random_small_forces_converge_geometrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nu = 1.0;
        for _ in 0..3 {
            let f = random_solenoidal(6, 2, 0.1 * nu * nu, &mut rng);
            let r = solve_steady(&SteadyNsConfig::new(nu, f)).unwrap();
            assert!(r.residual < 1e-10);
            assert!(r.update_ratios.iter().all(|&q| q < 1.0), "{:?}", r.update_ratios);
            assert!(r.energy_margin >= 0.0);
            assert!(r.max_divergence < 1e-12);
            let sp = Spectral::new(6);
            let (_, imag) = sp.real_grid(&r.u);
            assert!(imag < 1e-12);
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_solenoidal(4, 2, 1.0, &mut rng);
        let mut cfg = SteadyNsConfig::new(1.0, f);
        cfg.max_iter = 2;
        match solve_steady(&cfg) {
            Err(SteadyNsError::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_compressible_force() {
        let mut f = FourierVectorField::zeros(2);
        f.set_mode([1, 0, 0], [c(1.0, 0.0), ZERO, ZERO]).unwrap();
        assert!(matches!(
            SteadyNsConfig::new(1.0, f).validate(),
            Err(SteadyNsError::Config(_))
        ));
    }

    #[test]
    fn doubling_truncation_keeps_shear_solution() {
        let a = solve_steady(&SteadyNsConfig::new(1.0, shear_force(3, 1.0))).unwrap();
        let b = solve_steady(&SteadyNsConfig::new(1.0, shear_force(6, 1.0))).unwrap();
        assert!(a.u.resized(6).axpy(-1.0, &b.u).l2_norm() < 1e-12);
    }

    #[test]
    fn temperature_vanishes() {
        let shear = solve_steady(&SteadyNsConfig::new(1.0, shear_force(4, 1.0))).unwrap();
        let r = nsf_theta(&shear.u, 1.0, 1e-10).unwrap();
        assert!(r.norm <= 1e-10 && r.initial_norm > 0.5);
        let r = nsf_theta(&FourierVectorField::zeros(4), 1.0, 1e-10).unwrap();
        assert_eq!(r.sweeps, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_solenoidal(4, 2, 0.05, &mut rng);
        assert!(nsf_theta(&u, 1.0, 1e-10).unwrap().norm <= 1e-10);
    }

    #[test]
    fn obstruction_positive_on_single_modes() {
        let mut u = FourierVectorField::zeros(2);
        u.set_mode([0, 1, 1], [c(0.2, 0.1), ZERO, ZERO]).unwrap();
        assert!(viscous_heating_obstruction(&u) > 0.0);
    }

    #[test]
    fn csv_lists_nonzero_modes() {
        let csv = shear_force(2, 1.0).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "kx,ky,kz,re1,im1,re2,im2,re3,im3");
        assert_eq!(lines.len(), 3);
    }
}
