//! Gaussian brackets `<phi> = ∫ phi(v) M(v) dv` against the standard
//! Maxwellian `M = (2π)^{-3/2} exp(-|v|²/2)`, and a checker for the closure
//! identities satisfied by the traceless stress tensor `A`, the heat-flux
//! vector `B` and the third-order tensor `C`.
//!
//! The weighted fields `Â = α(|v|) A` and `B̂ = β(|v|) B` stand in for the
//! solutions of the linearized collision problem. Any radial `α` keeps `Â`
//! orthogonal to the collision invariants; for `B̂` this only holds for a
//! one-parameter family of `β`, so the surrogate is taken as `βB` minus its
//! projection onto `span{1, v, |v|²}`. That projection has no effect on
//! `⟨B̂ᵢBⱼ⟩` because `B` is itself orthogonal to the invariants.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentsError {
    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),
    #[error("integrand is not finite at node ({0}, {1}, {2})")]
    NonFinite(f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureScheme {
    GaussHermite,
    TrapezoidTruncated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub nodes_per_axis: usize,
    pub scheme: QuadratureScheme,
    /// Half-width of the velocity box, only read by the trapezoid scheme.
    pub truncation_radius: f64,
}

impl QuadratureSpec {
    pub fn gauss_hermite(nodes_per_axis: usize) -> Self {
        Self {
            nodes_per_axis,
            scheme: QuadratureScheme::GaussHermite,
            truncation_radius: 0.0,
        }
    }

    pub fn trapezoid(nodes_per_axis: usize, truncation_radius: f64) -> Self {
        Self {
            nodes_per_axis,
            scheme: QuadratureScheme::TrapezoidTruncated,
            truncation_radius,
        }
    }

    pub fn validate(&self) -> Result<(), MomentsError> {
        if self.nodes_per_axis < 4 {
            return Err(MomentsError::InvalidQuadrature(format!(
                "nodes_per_axis = {} (need at least 4)",
                self.nodes_per_axis
            )));
        }
        if self.scheme == QuadratureScheme::TrapezoidTruncated
            && !(self.truncation_radius > 0.0 && self.truncation_radius.is_finite())
        {
            return Err(MomentsError::InvalidQuadrature(format!(
                "truncation_radius = {} (must be positive)",
                self.truncation_radius
            )));
        }
        Ok(())
    }

    /// One-dimensional nodes and weights for the unit normal density.
    pub fn axis_rule(&self) -> Result<(Vec<f64>, Vec<f64>), MomentsError> {
        self.validate()?;
        Ok(match self.scheme {
            QuadratureScheme::GaussHermite => gauss_hermite_rule(self.nodes_per_axis),
            QuadratureScheme::TrapezoidTruncated => {
                trapezoid_rule(self.nodes_per_axis, self.truncation_radius)
            }
        })
    }
}

/// Gauss–Hermite rule for the weight `exp(-x²/2)/√(2π)`.
///
/// Roots of the physicists' Hermite polynomial by Newton iteration on the
/// normalized three-term recurrence, then rescaled by √2.
pub fn gauss_hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let nodes: Vec<f64> = x.iter().rev().map(|&z| std::f64::consts::SQRT_2 * z).collect();
    let weights: Vec<f64> = w.iter().rev().map(|&wi| wi / sqrt_pi).collect();
    (nodes, weights)
}

/// Composite trapezoid rule on `[-radius, radius]` with the normal density
/// folded into the weights.
pub fn trapezoid_rule(n: usize, radius: f64) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 * radius / (n - 1) as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let nodes: Vec<f64> = (0..n).map(|i| -radius + i as f64 * h).collect();
    let weights = nodes
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            end * h * norm * (-0.5 * x * x).exp()
        })
        .collect();
    (nodes, weights)
}

/// Calls `visit(v, weight)` for every node of the tensor-product rule.
fn for_each_node(
    quad: &QuadratureSpec,
    mut visit: impl FnMut([f64; 3], f64) -> Result<(), MomentsError>,
) -> Result<(), MomentsError> {
    let (x, w) = quad.axis_rule()?;
    for (a, &wa) in x.iter().zip(&w) {
        for (b, &wb) in x.iter().zip(&w) {
            let wab = wa * wb;
            for (c, &wc) in x.iter().zip(&w) {
                visit([*a, *b, *c], wab * wc)?;
            }
        }
    }
    Ok(())
}

/// `∫ phi(v) M(v) dv` by tensor-product quadrature.
pub fn bracket<F>(phi: F, quad: &QuadratureSpec) -> Result<f64, MomentsError>
where
    F: Fn(&[f64; 3]) -> f64,
{
    let mut acc = 0.0;
    for_each_node(quad, |v, w| {
        let p = phi(&v);
        if !p.is_finite() {
            return Err(MomentsError::NonFinite(v[0], v[1], v[2]));
        }
        acc += w * p;
        Ok(())
    })?;
    Ok(acc)
}

pub type Mat3 = [[f64; 3]; 3];
pub type Tensor3 = [[[f64; 3]; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorFields {
    pub a: Mat3,
    pub b: [f64; 3],
    pub c: Tensor3,
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// `A = v⊗v − |v|²I/3`, `B = (|v|² − 5) v / 2`,
/// `C_{jkl} = (v_j v_k v_l − 3 v_j δ_{kl}) / 2`.
pub fn tensor_fields(v: &[f64; 3]) -> TensorFields {
    let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let mut a = [[0.0; 3]; 3];
    let mut c = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = v[i] * v[j] - r2 * delta(i, j) / 3.0;
            for k in 0..3 {
                c[i][j][k] = 0.5 * (v[i] * v[j] * v[k] - 3.0 * v[i] * delta(j, k));
            }
        }
    }
    let b = [
        0.5 * (r2 - 5.0) * v[0],
        0.5 * (r2 - 5.0) * v[1],
        0.5 * (r2 - 5.0) * v[2],
    ];
    TensorFields { a, b, c }
}

/// Radial weight `w(|v|)` multiplying `A` or `B`.
#[derive(Clone)]
pub struct IsotropicWeight {
    pub label: String,
    radial: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    polynomial: bool,
}

impl fmt::Debug for IsotropicWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IsotropicWeight")
            .field("label", &self.label)
            .field("polynomial", &self.polynomial)
            .finish()
    }
}

impl IsotropicWeight {
    pub fn new(
        label: impl Into<String>,
        polynomial: bool,
        radial: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            radial: Arc::new(radial),
            polynomial,
        }
    }

    pub fn constant() -> Self {
        Self::new("1", true, |_| 1.0)
    }

    /// `r^(2p)`, a polynomial in `v`.
    pub fn even_power(p: u32) -> Self {
        Self::new(format!("r^{}", 2 * p), true, move |r| r.powi(2 * p as i32))
    }

    pub fn exp_decay() -> Self {
        Self::new("exp(-r)", false, |r| (-r).exp())
    }

    pub fn eval(&self, r: f64) -> f64 {
        (self.radial)(r)
    }

    /// True when `w(|v|)` is a polynomial in the velocity components, so
    /// Gauss–Hermite brackets are exact.
    pub fn is_polynomial(&self) -> bool {
        self.polynomial
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub identity_name: String,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub nu_value: f64,
    pub kappa_value: f64,
    pub c_value: f64,
    /// Index tuple with the largest deviation, padded with zeros for lower
    /// order identities.
    pub worst_index: [usize; 4],
}

#[inline]
fn idx4(i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * 3 + j) * 3 + k) * 3 + l
}

fn unpack4(n: usize) -> [usize; 4] {
    [n / 27, (n / 9) % 3, (n / 3) % 3, n % 3]
}

/// `δ_ik δ_jl + δ_il δ_jk − (2/3) δ_ij δ_kl`
pub fn traceless_isotropic(i: usize, j: usize, k: usize, l: usize) -> f64 {
    delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k) - 2.0 / 3.0 * delta(i, j) * delta(k, l)
}

/// `δ_ij δ_kl + δ_ik δ_jl + δ_il δ_jk`
pub fn symmetric_isotropic(i: usize, j: usize, k: usize, l: usize) -> f64 {
    delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k)
}

/// Largest deviation of a 4-index array from `scale * pattern`.
fn worst4(arr: &[f64; 81], scale: f64, pattern: fn(usize, usize, usize, usize) -> f64) -> (f64, [usize; 4]) {
    let mut worst = (0.0, [0; 4]);
    for (n, &val) in arr.iter().enumerate() {
        let [i, j, k, l] = unpack4(n);
        let err = (val - scale * pattern(i, j, k, l)).abs();
        if err > worst.0 || err.is_nan() {
            worst = (err, [i, j, k, l]);
        }
    }
    worst
}

fn worst2(arr: &Mat3, scale: f64) -> (f64, [usize; 4]) {
    let mut worst = (0.0, [0; 4]);
    for i in 0..3 {
        for j in 0..3 {
            let err = (arr[i][j] - scale * delta(i, j)).abs();
            if err > worst.0 || err.is_nan() {
                worst = (err, [i, j, 0, 0]);
            }
        }
    }
    worst
}

/// Projection coefficient `m` with `βB − m v ⊥ span{1, v, |v|²}`.
fn heat_flux_projection(beta: &IsotropicWeight, quad: &QuadratureSpec) -> Result<f64, MomentsError> {
    // ⟨β B_i v_i⟩ summed over i, divided by ⟨|v|²⟩ = 3.
    let num = bracket(
        |v| {
            let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            beta.eval(r2.sqrt()) * 0.5 * (r2 - 5.0) * r2
        },
        quad,
    )?;
    Ok(num / 3.0)
}

#[derive(Default)]
struct Accumulators {
    bb: Mat3,
    bhb: Mat3,
    aa: Vec<f64>,
    aha: Vec<f64>,
    bhva: Vec<f64>,
    bhvah: Vec<f64>,
    bc: Vec<f64>,
    iso_alpha: Vec<f64>,
    iso_beta: Vec<f64>,
    r4_alpha: f64,
    ahat_dot_a: f64,
    kappa_direct: f64,
    bhat_dot_b: f64,
    bhat_v_ahat: f64,
    /// Max |bracket| over the orthogonality relations.
    ortho: f64,
    ortho_hat: f64,
    ortho_terms: Vec<f64>,
}

const N_ORTHO: usize = 2 * (9 * 5 + 3 * 5) + 27;

/// Checks every closure identity for the pair of radial weights.
pub fn verify_appendix(
    weights_alpha: &IsotropicWeight,
    weights_beta: &IsotropicWeight,
    quad: &QuadratureSpec,
    tol: f64,
) -> Result<Vec<LemmaReport>, MomentsError> {
    let m_proj = heat_flux_projection(weights_beta, quad)?;
    let mut acc = Accumulators {
        aa: vec![0.0; 81],
        aha: vec![0.0; 81],
        bhva: vec![0.0; 81],
        bhvah: vec![0.0; 81],
        bc: vec![0.0; 81],
        iso_alpha: vec![0.0; 81],
        iso_beta: vec![0.0; 81],
        ortho_terms: vec![0.0; N_ORTHO],
        ..Default::default()
    };

    for_each_node(quad, |v, w| {
        let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let r = r2.sqrt();
        let alpha = weights_alpha.eval(r);
        let beta = weights_beta.eval(r);
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(MomentsError::NonFinite(v[0], v[1], v[2]));
        }
        let TensorFields { a, b, c } = tensor_fields(&v);
        let mut ah = a;
        for row in ah.iter_mut() {
            for x in row.iter_mut() {
                *x *= alpha;
            }
        }
        let bh = [
            beta * b[0] - m_proj * v[0],
            beta * b[1] - m_proj * v[1],
            beta * b[2] - m_proj * v[2],
        ];

        let mut ahat_a = 0.0;
        let mut bv_ah = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc.bb[i][j] += w * b[i] * b[j];
                acc.bhb[i][j] += w * bh[i] * b[j];
                ahat_a += ah[i][j] * a[i][j];
                bv_ah += bh[i] * v[j] * ah[i][j];
                let wa = w * a[i][j];
                let wah = w * ah[i][j];
                let wbv = w * bh[i] * v[j];
                let wb = w * b[i];
                let wvv_a = w * alpha * v[i] * v[j];
                let wvv_b = w * beta * 0.5 * (r2 - 5.0) * v[i] * v[j];
                let base = (i * 3 + j) * 9;
                for k in 0..3 {
                    for l in 0..3 {
                        let n = base + k * 3 + l;
                        acc.aa[n] += wa * a[k][l];
                        acc.aha[n] += wah * a[k][l];
                        acc.bhva[n] += wbv * a[k][l];
                        acc.bhvah[n] += wbv * ah[k][l];
                        acc.iso_alpha[n] += wvv_a * v[k] * v[l];
                        acc.iso_beta[n] += wvv_b * v[k] * v[l];
                        // B_i C_{jkl}: reuse the (i, j, k, l) slot
                        acc.bc[n] += wb * c[j][k][l];
                    }
                }
            }
        }
        acc.r4_alpha += w * r2 * r2 * alpha;
        acc.ahat_dot_a += w * ahat_a;
        acc.kappa_direct += w * (r2 - 5.0) * (r2 - 5.0) * r2 * beta / 12.0;
        acc.bhat_dot_b += w * (bh[0] * b[0] + bh[1] * b[1] + bh[2] * b[2]);
        acc.bhat_v_ahat += w * bv_ah;

        // Orthogonality against {1, v, |v|²} for A, Â, B, B̂, plus A ⊥ B.
        let inv = [1.0, v[0], v[1], v[2], r2];
        let mut t = 0;
        for (fields_a, fields_b) in [(&a, &b), (&ah, &bh)] {
            for i in 0..3 {
                for j in 0..3 {
                    for phi in &inv {
                        acc.ortho_terms[t] += w * fields_a[i][j] * phi;
                        t += 1;
                    }
                }
            }
            for bi in fields_b.iter() {
                for phi in &inv {
                    acc.ortho_terms[t] += w * bi * phi;
                    t += 1;
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                for bk in &b {
                    acc.ortho_terms[t] += w * a[i][j] * bk;
                    t += 1;
                }
            }
        }
        Ok(())
    })?;

    // First 2·(45 + 15) = 120 slots hold plain and weighted fields in turn.
    let half = 9 * 5 + 3 * 5;
    acc.ortho = acc.ortho_terms[..half]
        .iter()
        .chain(&acc.ortho_terms[2 * half..])
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    acc.ortho_hat = acc.ortho_terms[half..2 * half]
        .iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()));

    let nu = acc.r4_alpha / 15.0;
    let kappa = acc.kappa_direct;
    let c_value = acc.bhat_v_ahat / 10.0;

    let arr = |v: &Vec<f64>| -> [f64; 81] { v.as_slice().try_into().expect("81 entries") };
    let mut reports = Vec::new();
    let mut push = |name: &str, (err, worst): (f64, [usize; 4])| {
        reports.push(LemmaReport {
            identity_name: name.to_string(),
            max_abs_error: err,
            tolerance: tol,
            passed: err <= tol,
            nu_value: nu,
            kappa_value: kappa,
            c_value,
            worst_index: worst,
        });
    };

    push("<B_i B_j> = 5/2 delta_ij", worst2(&acc.bb, 2.5));
    push(
        "<A_ij A_kl> = traceless isotropic",
        worst4(&arr(&acc.aa), 1.0, traceless_isotropic),
    );
    let (e, w) = worst4(&arr(&acc.aha), nu, traceless_isotropic);
    push(
        "<Ahat_ij A_kl> = nu (traceless isotropic), nu = <|v|^4 alpha>/15 = <Ahat:A>/10",
        (e.max((nu - acc.ahat_dot_a / 10.0).abs()), w),
    );
    let (e, w) = worst2(&acc.bhb, kappa);
    push(
        "<Bhat_i B_j> = kappa delta_ij, kappa = <(|v|^2-5)^2 |v|^2 beta>/12 = <Bhat.B>/3",
        (e.max((kappa - acc.bhat_dot_b / 3.0).abs()), w),
    );
    push(
        "<Bhat_i v_j A_kl> = (2/5) kappa (traceless isotropic)",
        worst4(&arr(&acc.bhva), 0.4 * kappa, traceless_isotropic),
    );
    push(
        "<Bhat_i v_j Ahat_kl> = c (traceless isotropic), c = <(Bhat x v):Ahat>/10",
        worst4(&arr(&acc.bhvah), c_value, traceless_isotropic),
    );
    push(
        "<B_i C_jkl> = 1/2 (symmetric isotropic)",
        worst4(&arr(&acc.bc), 0.5, symmetric_isotropic),
    );
    push("A, B orthogonal to {1, v, |v|^2}; A orthogonal to B", (acc.ortho, [0; 4]));
    push("Ahat, Bhat orthogonal to {1, v, |v|^2}", (acc.ortho_hat, [0; 4]));
    let iso = |a: &Vec<f64>| {
        let a = arr(a);
        // full contraction of λ(δδ+δδ+δδ) is 15λ
        let trace: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |k| (i, k)))
            .map(|(i, k)| a[idx4(i, i, k, k)])
            .sum();
        worst4(&a, trace / 15.0, symmetric_isotropic)
    };
    let (ea, wa) = iso(&acc.iso_alpha);
    let (eb, wb) = iso(&acc.iso_beta);
    push(
        "<w(|v|) v_i v_j v_k v_l> = lambda (symmetric isotropic)",
        if ea >= eb { (ea, wa) } else { (eb, wb) },
    );
    Ok(reports)
}

/// Weight pairs and quadratures exercised by `moments-verify`.
pub fn standard_suite() -> Vec<(IsotropicWeight, IsotropicWeight, QuadratureSpec, f64)> {
    let gh = QuadratureSpec::gauss_hermite(12);
    let tr = QuadratureSpec::trapezoid(161, 10.0);
    vec![
        (IsotropicWeight::constant(), IsotropicWeight::constant(), gh, 1e-10),
        (IsotropicWeight::even_power(1), IsotropicWeight::even_power(1), gh, 1e-10),
        (IsotropicWeight::constant(), IsotropicWeight::even_power(1), gh, 1e-10),
        (IsotropicWeight::exp_decay(), IsotropicWeight::exp_decay(), tr, 1e-6),
    ]
}
