//! Sectional curvature of the three metrics, the commutator oracle and the
//! explicit Dirichlet curvature bound.

use serde::Serialize;

use crate::error::{KahlerError, Result};
use crate::kahler::{c_tensor, laplacian, mat_mul, project_tangent, GreenOptions, KahlerPotential, TangentVector};
use crate::metrics::{a_solve, christoffel, dirichlet_pairing, gradient_pairing, gram_schmidt, inner, MetricKind};
use crate::spectral::{pairwise_sum, random_field, ScalarField};

/// Norms and cosine of the input pair under the chosen metric.
#[derive(Clone, Debug, Serialize)]
pub struct PlaneDescriptor {
    pub norm_psi: f64,
    pub norm_chi: f64,
    pub cosine: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    pub kind: MetricKind,
    pub value: f64,
    pub plane: PlaneDescriptor,
    /// Largest relative weak residual among the auxiliary solves.
    pub residual: f64,
    pub iterations: usize,
    pub bound: Option<f64>,
    pub seed: Option<u64>,
}

impl CurvatureReport {
    pub const CSV_HEADER: &'static str = "kind,n,N,seed,value,bound,residual";

    pub fn csv_row(&self, n: usize, grid: usize) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.kind.name(),
            n,
            grid,
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            fmt17(self.value),
            self.bound.map(fmt17).unwrap_or_default(),
            fmt17(self.residual)
        )
    }
}

/// Seventeen significant digits, round-trip exact.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn describe(kind: MetricKind, phi: &KahlerPotential, psi: &TangentVector, chi: &TangentVector) -> Result<PlaneDescriptor> {
    let a = inner(kind, phi, psi, psi)?;
    let b = inner(kind, phi, chi, chi)?;
    let c = inner(kind, phi, psi, chi)?;
    let cosine = if a > 0.0 && b > 0.0 { c / (a * b).sqrt() } else { 0.0 };
    Ok(PlaneDescriptor { norm_psi: a.max(0.0).sqrt(), norm_chi: b.max(0.0).sqrt(), cosine })
}

/// Sectional curvature of the plane spanned by `ψ, χ` under `kind`.
pub fn sectional(
    kind: MetricKind,
    phi: &KahlerPotential,
    psi: &TangentVector,
    chi: &TangentVector,
) -> Result<CurvatureReport> {
    sectional_with(kind, phi, psi, chi, &GreenOptions::default())
}

pub fn sectional_with(
    kind: MetricKind,
    phi: &KahlerPotential,
    psi: &TangentVector,
    chi: &TangentVector,
    opts: &GreenOptions,
) -> Result<CurvatureReport> {
    let plane = describe(kind, phi, psi, chi)?;
    let mut report = CurvatureReport {
        kind,
        value: 0.0,
        plane,
        residual: 0.0,
        iterations: 0,
        bound: None,
        seed: None,
    };
    match kind {
        MetricKind::Calabi => {
            gram_schmidt(kind, phi, &[psi.clone(), chi.clone()])?;
            report.value = 1.0 / (4.0 * phi.spec().volume());
        }
        MetricKind::Mabuchi => {
            let ss = inner(kind, phi, psi, psi)?;
            let tt = inner(kind, phi, chi, chi)?;
            let st = inner(kind, phi, psi, chi)?;
            let gram = ss * tt - st * st;
            let ratio = if ss * tt > 0.0 { gram / (ss * tt) } else { 0.0 };
            if !(ratio >= 1e-12) {
                return Err(KahlerError::DegeneratePlane { ratio });
            }
            let z = gradient_pairing(phi, psi.field(), chi.field());
            let terms: Vec<f64> =
                z.iter().zip(phi.density().values()).map(|(z, m)| z.im * z.im * m).collect();
            let num = pairwise_sum(&terms) / terms.len() as f64;
            report.value = -num / gram;
        }
        MetricKind::Dirichlet => {
            let e = gram_schmidt(kind, phi, &[psi.clone(), chi.clone()])?;
            let (s, t) = (e[0].field(), e[1].field());
            let ss = a_solve(phi, s, s, None, opts)?;
            let st = a_solve(phi, s, t, None, opts)?;
            let tt = a_solve(phi, t, t, None, opts)?;
            report.residual = ss.residual.max(st.residual).max(tt.residual);
            report.iterations = ss.iterations + st.iterations + tt.iterations;
            report.value = 0.25
                * (dirichlet_pairing(phi, &st.field, &st.field)
                    - dirichlet_pairing(phi, &ss.field, &tt.field));
        }
    }
    Ok(report)
}

/// Curvature numerator by nested central differences of the connection over
/// `φ + sψ + tχ`, paired as `2 ∫ (D_s D_t φ_s − D_t D_s φ_s) Δ_φ χ e^u`.
pub fn commutator_fd(
    phi: &KahlerPotential,
    psi: &ScalarField,
    chi: &ScalarField,
    h: f64,
    opts: &GreenOptions,
) -> Result<f64> {
    let spec = phi.spec();
    let shifted = |dir: &ScalarField, s: f64| KahlerPotential::new(spec, &phi.phi().axpy(s, dir));
    let (ps_p, ps_m) = (shifted(psi, h)?, shifted(psi, -h)?);
    let (pt_p, pt_m) = (shifted(chi, h)?, shifted(chi, -h)?);
    // V(s) = D_t φ_s on the s-line, W(t) = D_s φ_s on the t-line.
    let v_p = christoffel(&ps_p, chi, psi, opts)?;
    let v_m = christoffel(&ps_m, chi, psi, opts)?;
    let v_0 = christoffel(phi, chi, psi, opts)?;
    let w_p = christoffel(&pt_p, psi, psi, opts)?;
    let w_m = christoffel(&pt_m, psi, psi, opts)?;
    let w_0 = christoffel(phi, psi, psi, opts)?;
    let ds_v = v_p.sub(&v_m).scale(0.5 / h).add(&christoffel(phi, psi, &v_0, opts)?);
    let dt_w = w_p.sub(&w_m).scale(0.5 / h).add(&christoffel(phi, chi, &w_0, opts)?);
    let lap_chi = laplacian(phi, chi);
    let r = ds_v.sub(&dt_w);
    Ok(2.0 * phi.integrate(&r.zip(&lap_chi, |a, b| a * b)))
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleEstimate {
    pub h: f64,
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
}

/// Commutator oracle at `h` and `h/2` with Richardson extrapolation, after
/// Dirichlet orthonormalization of the plane.
pub fn commutator_oracle(
    phi: &KahlerPotential,
    psi: &TangentVector,
    chi: &TangentVector,
    h: f64,
    opts: &GreenOptions,
) -> Result<OracleEstimate> {
    let e = gram_schmidt(MetricKind::Dirichlet, phi, &[psi.clone(), chi.clone()])?;
    let coarse = commutator_fd(phi, e[0].field(), e[1].field(), h, opts)?;
    let fine = commutator_fd(phi, e[0].field(), e[1].field(), 0.5 * h, opts)?;
    Ok(OracleEstimate { h, coarse, fine, extrapolated: (4.0 * fine - coarse) / 3.0 })
}

/// Largest `|λ|` over nodes of the eigenvalues of `g_φ^{-1} C[f]`.
pub fn c_spectral_sup(phi: &KahlerPotential, f: &ScalarField) -> f64 {
    if phi.spec().complex_dim() == 1 {
        return 0.0;
    }
    let c = c_tensor(phi, f);
    let ginv = phi.inverse_metric();
    let mut worst: f64 = 0.0;
    for node in 0..c.len() {
        let b = mat_mul(&ginv.local(node), &c.local(node));
        let t = (b[0][0] + b[1][1]).re;
        let d = (b[0][0] * b[1][1] - b[0][1] * b[1][0]).re;
        let disc = (0.25 * t * t - d).max(0.0).sqrt();
        worst = worst.max((0.5 * t + disc).abs()).max((0.5 * t - disc).abs());
    }
    worst
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub bound: f64,
    /// Pointwise spectral sup of `C[ψ]` for the unit vector `ψ`.
    pub c_psi: f64,
    /// Pointwise spectral sup of `C[a(ψ,ψ)]`.
    pub c_a: f64,
}

/// Explicit `K(ω_φ, dψ)` with `|K_D(ψ, χ)| ≤ K` for every Dirichlet-unit `χ ⟂ ψ`.
pub fn dirichlet_bound(phi: &KahlerPotential, psi: &TangentVector) -> Result<f64> {
    dirichlet_bound_detailed(phi, psi, &GreenOptions::default()).map(|b| b.bound)
}

pub fn dirichlet_bound_detailed(
    phi: &KahlerPotential,
    psi: &TangentVector,
    opts: &GreenOptions,
) -> Result<BoundReport> {
    let norm2 = inner(MetricKind::Dirichlet, phi, psi, psi)?;
    if !(norm2 > 0.0) {
        return Ok(BoundReport { bound: 0.0, c_psi: 0.0, c_a: 0.0 });
    }
    let unit = psi.field().scale(1.0 / norm2.sqrt());
    let c_psi = c_spectral_sup(phi, &unit);
    let a = a_solve(phi, &unit, &unit, None, opts)?.field;
    let c_a = c_spectral_sup(phi, &a);
    // ‖a(ψ,χ)‖ ≤ c_psi ‖χ‖ and |⟨a(ψ,ψ), a(χ,χ)⟩| ≤ c_a ‖χ‖²
    Ok(BoundReport { bound: 0.25 * (c_psi * c_psi + c_a), c_psi, c_a })
}

/// Smallest nonzero eigenvalue of `−Δ_φ` on `e^u`-mean-zero functions, by
/// inverse power iteration (at most 50 steps, relative tolerance `1e-8`).
pub fn poincare_constant(phi: &KahlerPotential, opts: &GreenOptions) -> Result<f64> {
    let spec = phi.spec();
    let mut x = project_tangent(phi, &random_field(spec, 0x5eed, 2.0)).into_field();
    let mut lambda = f64::NAN;
    let mut guess: Option<ScalarField> = None;
    for _ in 0..50 {
        let rhs: Vec<f64> = x.values().iter().zip(phi.density().values()).map(|(a, m)| a * m).collect();
        let w = phi.solve_weighted(&rhs, guess.as_ref(), opts)?.field;
        let xx = phi.integrate(&x.zip(&x, |a, b| a * b));
        let xw = phi.integrate(&x.zip(&w, |a, b| a * b));
        let next = -xx / xw;
        let ww = phi.integrate(&w.zip(&w, |a, b| a * b)).sqrt();
        x = w.scale(1.0 / ww);
        guess = Some(x.scale(-1.0 / next));
        let done = (next - lambda).abs() <= 1e-8 * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    Ok(lambda)
}

#[derive(Clone, Debug, Serialize)]
pub struct SignProbe {
    pub ss_constant: bool,
    pub st_constant: bool,
    pub tt_constant: bool,
    pub curvature: f64,
    /// `a(s,s)` or `a(t,t)` constant, which forces `K_D ≥ 0`.
    pub nonnegative_predicted: bool,
    /// `a(s,t)` constant, which forces `K_D ≤ 0`.
    pub nonpositive_predicted: bool,
    pub consistent: bool,
}

impl SignProbe {
    pub fn classification(&self) -> &'static str {
        match (self.ss_constant, self.st_constant, self.tt_constant) {
            (true, true, true) => "all constant",
            (false, false, false) => "none constant",
            _ => "partially constant",
        }
    }
}

/// Report which auxiliary potentials are numerically constant and whether the
/// implied curvature sign holds.
pub fn sign_probe(phi: &KahlerPotential, psi: &TangentVector, chi: &TangentVector) -> Result<SignProbe> {
    const CONST_TOL: f64 = 1e-9;
    const SIGN_TOL: f64 = 1e-7;
    let opts = GreenOptions::default();
    let e = gram_schmidt(MetricKind::Dirichlet, phi, &[psi.clone(), chi.clone()])?;
    let (s, t) = (e[0].field(), e[1].field());
    let ss = a_solve(phi, s, s, None, &opts)?.field;
    let st = a_solve(phi, s, t, None, &opts)?.field;
    let tt = a_solve(phi, t, t, None, &opts)?.field;
    let curvature = 0.25 * (dirichlet_pairing(phi, &st, &st) - dirichlet_pairing(phi, &ss, &tt));
    let ss_constant = ss.oscillation() < CONST_TOL;
    let st_constant = st.oscillation() < CONST_TOL;
    let tt_constant = tt.oscillation() < CONST_TOL;
    let nonnegative_predicted = ss_constant || tt_constant;
    let nonpositive_predicted = st_constant;
    let consistent = (!nonnegative_predicted || curvature >= -SIGN_TOL)
        && (!nonpositive_predicted || curvature <= SIGN_TOL);
    Ok(SignProbe {
        ss_constant,
        st_constant,
        tt_constant,
        curvature,
        nonnegative_predicted,
        nonpositive_predicted,
        consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_spec, TorusSpec};
    use std::f64::consts::PI;

    fn potential(spec: &TorusSpec, seed: u64, amp: f64) -> KahlerPotential {
        let f = random_field(spec, seed, 3.0);
        let h = KahlerPotential::flat(spec).hessian(&f).max_abs();
        KahlerPotential::new(spec, &f.scale(amp / h)).unwrap()
    }

    fn tangent(p: &KahlerPotential, seed: u64) -> TangentVector {
        project_tangent(p, &random_field(p.spec(), seed, 3.0))
    }

    #[test]
    fn calabi_is_constant() {
        let s = build_spec(1, 16).unwrap();
        let p = potential(&s, 1, 0.3);
        let r = sectional(MetricKind::Calabi, &p, &tangent(&p, 2), &tangent(&p, 3)).unwrap();
        assert_eq!(r.value, 0.25);
    }

    #[test]
    fn dimension_one_is_flat() {
        let s = build_spec(1, 32).unwrap();
        let p = potential(&s, 4, 0.3);
        let (a, b) = (tangent(&p, 5), tangent(&p, 6));
        let r = sectional(MetricKind::Dirichlet, &p, &a, &b).unwrap();
        assert!(r.value.abs() <= 1e-7);
        let fd = commutator_fd(&p, a.field(), b.field(), 1e-3, &GreenOptions::default()).unwrap();
        assert_eq!(fd, 0.0);
        let probe = sign_probe(&p, &a, &b).unwrap();
        assert_eq!(probe.classification(), "all constant");
        assert!(probe.consistent);
        assert!(dirichlet_bound(&p, &a).unwrap() >= r.value.abs());
    }

    #[test]
    fn mabuchi_sign() {
        let s = build_spec(2, 16).unwrap();
        let p = potential(&s, 7, 0.3);
        let r = sectional(MetricKind::Mabuchi, &p, &tangent(&p, 8), &tangent(&p, 9)).unwrap();
        assert!(r.value < 0.0);
    }

    #[test]
    fn commutator_antisymmetry() {
        let s = build_spec(2, 16).unwrap();
        let p = potential(&s, 10, 0.2);
        let a = tangent(&p, 11);
        let n = inner(MetricKind::Dirichlet, &p, &a, &a).unwrap().sqrt();
        let a = a.scale(0.05 / n);
        let v = commutator_fd(&p, a.field(), a.field(), 1e-2, &GreenOptions::default()).unwrap();
        assert!(v.abs() <= 1e-8, "{v}");
    }

    #[test]
    fn flat_poincare_constant() {
        let s = build_spec(1, 32).unwrap();
        let p = KahlerPotential::flat(&s);
        let l = poincare_constant(&p, &GreenOptions::default()).unwrap();
        assert!((l - 2.0 * PI * PI).abs() < 1e-6 * l, "{l}");
    }

    #[test]
    fn engineered_nonnegative_plane() {
        let s = build_spec(2, 16).unwrap();
        let base = ScalarField::from_fn(&s, |x| {
            0.01 * ((2.0 * PI * x[0]).cos() + 0.5 * (2.0 * PI * (x[0] + x[1])).sin())
        });
        let p = KahlerPotential::new(&s, &base).unwrap();
        let psi = project_tangent(&p, &ScalarField::from_fn(&s, |x| (2.0 * PI * x[1]).sin() + (4.0 * PI * x[0]).cos()));
        let chi = tangent(&p, 12);
        let probe = sign_probe(&p, &psi, &chi).unwrap();
        assert!(probe.ss_constant);
        assert!(probe.curvature >= -1e-7);
        assert!(probe.consistent);
        let generic = sign_probe(&p, &tangent(&p, 13), &tangent(&p, 14)).unwrap();
        assert_eq!(generic.classification(), "none constant");
    }
}
