//! Mabuchi, Calabi and Dirichlet pairings on `T_φ𝓗` and the Dirichlet connection.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KahlerError, Result};
use crate::kahler::{check_mean, laplacian, GreenOptions, GreenSolution, KahlerPotential, TangentVector};
use crate::spectral::{gradient, pairwise_sum, ScalarField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Mabuchi,
    Calabi,
    Dirichlet,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Mabuchi, MetricKind::Calabi, MetricKind::Dirichlet];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Mabuchi => "mabuchi",
            MetricKind::Calabi => "calabi",
            MetricKind::Dirichlet => "dirichlet",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = KahlerError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mabuchi" => Ok(MetricKind::Mabuchi),
            "calabi" => Ok(MetricKind::Calabi),
            "dirichlet" => Ok(MetricKind::Dirichlet),
            other => Err(KahlerError::Config(format!("unknown metric kind {other:?}"))),
        }
    }
}

/// Pointwise `g^{ij̄} ∂_i ψ ∂̄_j χ`.
pub fn gradient_pairing(phi: &KahlerPotential, psi: &ScalarField, chi: &ScalarField) -> Vec<Complex64> {
    let spec = phi.spec();
    let n = spec.complex_dim();
    let gp = gradient(spec, psi);
    let gc = gradient(spec, chi);
    let ginv = phi.inverse_metric();
    (0..spec.len())
        .map(|node| {
            let mut z = Complex64::default();
            for i in 0..n {
                for j in 0..n {
                    z += ginv.at(j, i, node) * gp[i][node] * gc[j][node].conj();
                }
            }
            z
        })
        .collect()
}

/// Dirichlet pairing of two real fields, `2 Re ∫ g^{ij̄} ψ_i χ_j̄ e^u`.
pub fn dirichlet_pairing(phi: &KahlerPotential, psi: &ScalarField, chi: &ScalarField) -> f64 {
    let z = gradient_pairing(phi, psi, chi);
    let terms: Vec<f64> = z.iter().zip(phi.density().values()).map(|(z, m)| 2.0 * z.re * m).collect();
    pairwise_sum(&terms) / terms.len() as f64
}

fn raw_inner(kind: MetricKind, phi: &KahlerPotential, psi: &ScalarField, chi: &ScalarField) -> f64 {
    match kind {
        MetricKind::Mabuchi => phi.integrate(&psi.zip(chi, |a, b| a * b)),
        MetricKind::Calabi => {
            phi.integrate(&laplacian(phi, psi).zip(&laplacian(phi, chi), |a, b| a * b))
        }
        MetricKind::Dirichlet => dirichlet_pairing(phi, psi, chi),
    }
}

fn check_anchor(phi: &KahlerPotential, v: &TangentVector) -> Result<()> {
    if v.is_anchored_at(phi) {
        Ok(())
    } else {
        Err(KahlerError::AnchorMismatch)
    }
}

/// The `kind` pairing of two tangent vectors at `φ`.
pub fn inner(
    kind: MetricKind,
    phi: &KahlerPotential,
    psi: &TangentVector,
    chi: &TangentVector,
) -> Result<f64> {
    check_anchor(phi, psi)?;
    check_anchor(phi, chi)?;
    Ok(raw_inner(kind, phi, psi.field(), chi.field()))
}

/// Orthonormalize under the `kind` pairing.
pub fn gram_schmidt(
    kind: MetricKind,
    phi: &KahlerPotential,
    vectors: &[TangentVector],
) -> Result<Vec<TangentVector>> {
    let mut out: Vec<TangentVector> = Vec::with_capacity(vectors.len());
    for v in vectors {
        check_anchor(phi, v)?;
        let norm2 = raw_inner(kind, phi, v.field(), v.field());
        let mut w = v.clone();
        for e in &out {
            let c = raw_inner(kind, phi, w.field(), e.field());
            w = w.axpy(-c, e);
        }
        let r2 = raw_inner(kind, phi, w.field(), w.field());
        let ratio = if norm2 > 0.0 { r2 / norm2 } else { 0.0 };
        if !(ratio >= 1e-12) || !(r2 > 0.0) {
            return Err(KahlerError::DegeneratePlane { ratio });
        }
        out.push(w.scale(1.0 / r2.sqrt()));
    }
    Ok(out)
}

/// Solve `Δ_φ a = Q(x,y) = Δx Δy − Hx * Hy` on the band, mean-zero for `e^u`.
pub fn a_solve(
    phi: &KahlerPotential,
    x: &ScalarField,
    y: &ScalarField,
    guess: Option<&ScalarField>,
    opts: &GreenOptions,
) -> Result<GreenSolution> {
    let spec = phi.spec();
    if spec.complex_dim() == 1 {
        return Ok(GreenSolution { field: ScalarField::zeros(spec), iterations: 0, residual: 0.0 });
    }
    let rhs = phi.weighted_q(x, y);
    check_mean(rhs.values(), opts.mean_tolerance)?;
    phi.solve_weighted(rhs.values(), guess, opts)
}

/// Auxiliary potential `a(ψ, χ)`.
pub fn a_field(phi: &KahlerPotential, psi: &TangentVector, chi: &TangentVector) -> Result<ScalarField> {
    a_field_detailed(phi, psi, chi, &GreenOptions::default()).map(|s| s.field)
}

pub fn a_field_detailed(
    phi: &KahlerPotential,
    psi: &TangentVector,
    chi: &TangentVector,
    opts: &GreenOptions,
) -> Result<GreenSolution> {
    check_anchor(phi, psi)?;
    check_anchor(phi, chi)?;
    a_solve(phi, psi.field(), chi.field(), None, opts)
}

/// `Γ_φ(x, y) = ½ a(x, y)`, so that `D_t ψ = ψ_t + Γ(φ_t, ψ)`.
pub fn christoffel(
    phi: &KahlerPotential,
    x: &ScalarField,
    y: &ScalarField,
    opts: &GreenOptions,
) -> Result<ScalarField> {
    Ok(a_solve(phi, x, y, None, opts)?.field.scale(0.5))
}

/// Levi-Civita derivative of `ψ` along a curve with analytic velocities `φ_t`, `ψ_t`.
pub fn covariant_derivative(
    phi: &KahlerPotential,
    phi_t: &ScalarField,
    psi: &ScalarField,
    psi_t: &ScalarField,
    opts: &GreenOptions,
) -> Result<TangentVector> {
    let gamma = christoffel(phi, phi_t, psi, opts)?;
    let d = psi_t.add(&gamma);
    Ok(crate::kahler::project_tangent(phi, &d))
}

/// Covariant derivative at the middle of three samples spaced by `h`, using
/// central differences for both velocities.
pub fn covariant_derivative_sampled(
    phis: [&KahlerPotential; 3],
    psis: [&ScalarField; 3],
    h: f64,
    opts: &GreenOptions,
) -> Result<TangentVector> {
    let phi_t = phis[2].phi().sub(phis[0].phi()).scale(0.5 / h);
    let psi_t = psis[2].sub(psis[0]).scale(0.5 / h);
    covariant_derivative(phis[1], &phi_t, psis[1], &psi_t, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kahler::project_tangent;
    use crate::spectral::{build_spec, random_field, TorusSpec};
    use std::f64::consts::PI;

    fn potential(spec: &TorusSpec, seed: u64, amp: f64) -> KahlerPotential {
        let f = random_field(spec, seed, 3.0);
        let h = KahlerPotential::flat(spec).hessian(&f).max_abs();
        KahlerPotential::new(spec, &f.scale(amp / h)).unwrap()
    }

    #[test]
    fn single_mode_pairings() {
        let s = build_spec(1, 32).unwrap();
        let p = KahlerPotential::flat(&s);
        let c = project_tangent(&p, &ScalarField::from_fn(&s, |x| (2.0 * PI * x[0]).cos()));
        let ma = inner(MetricKind::Mabuchi, &p, &c, &c).unwrap();
        let ca = inner(MetricKind::Calabi, &p, &c, &c).unwrap();
        let di = inner(MetricKind::Dirichlet, &p, &c, &c).unwrap();
        assert!((ma - 0.5).abs() < 1e-14);
        assert!((ca - 2.0 * PI.powi(4)).abs() < 1e-10);
        assert!((di - 2.0 * PI * PI).abs() < 1e-12);
        let z = project_tangent(&p, &ScalarField::zeros(&s));
        for k in MetricKind::ALL {
            assert_eq!(inner(k, &p, &z, &z).unwrap(), 0.0);
        }
    }

    #[test]
    fn dirichlet_is_weighted_laplacian_pairing() {
        for n in [1, 2] {
            let s = build_spec(n, 16).unwrap();
            let p = potential(&s, 4, 0.3);
            let psi = project_tangent(&p, &random_field(&s, 5, 3.0));
            let chi = project_tangent(&p, &random_field(&s, 6, 3.0));
            let d = inner(MetricKind::Dirichlet, &p, &psi, &chi).unwrap();
            let alt = -2.0 * p.integrate(&psi.field().zip(&laplacian(&p, chi.field()), |a, b| a * b));
            assert!((d - alt).abs() <= 1e-9 * d.abs().max(1.0), "{d} {alt}");
            let back = inner(MetricKind::Dirichlet, &p, &chi, &psi).unwrap();
            assert!((d - back).abs() <= 1e-12 * d.abs().max(1.0));
        }
    }

    #[test]
    fn anchor_is_checked() {
        let s = build_spec(1, 16).unwrap();
        let p = potential(&s, 1, 0.2);
        let q = potential(&s, 2, 0.2);
        let v = project_tangent(&q, &random_field(&s, 3, 3.0));
        assert!(matches!(
            inner(MetricKind::Mabuchi, &p, &v, &v),
            Err(KahlerError::AnchorMismatch)
        ));
    }

    #[test]
    fn gram_schmidt_cases() {
        let s = build_spec(1, 32).unwrap();
        let p = KahlerPotential::flat(&s);
        let a = project_tangent(&p, &ScalarField::from_fn(&s, |x| (2.0 * PI * x[0]).cos()));
        let b = project_tangent(
            &p,
            &ScalarField::from_fn(&s, |x| (2.0 * PI * x[0]).cos() + (2.0 * PI * x[0]).sin()),
        );
        let e = gram_schmidt(MetricKind::Dirichlet, &p, &[a.clone(), b]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let g = inner(MetricKind::Dirichlet, &p, &e[i], &e[j]).unwrap();
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((g - id).abs() < 1e-10);
            }
        }
        let again = gram_schmidt(MetricKind::Dirichlet, &p, &e).unwrap();
        for (x, y) in again.iter().zip(&e) {
            assert!(x.field().sub(y.field()).max_abs() < 1e-12);
        }
        assert!(matches!(
            gram_schmidt(MetricKind::Dirichlet, &p, &[a.clone(), a]),
            Err(KahlerError::DegeneratePlane { .. })
        ));
    }

    #[test]
    fn a_field_cases() {
        let s1 = build_spec(1, 16).unwrap();
        let p1 = potential(&s1, 1, 0.3);
        let v = project_tangent(&p1, &random_field(&s1, 2, 3.0));
        assert_eq!(a_field(&p1, &v, &v).unwrap().max_abs(), 0.0);

        let s = build_spec(2, 16).unwrap();
        let p = potential(&s, 3, 0.3);
        let psi = project_tangent(&p, &random_field(&s, 4, 3.0).scale(0.01));
        let chi = project_tangent(&p, &random_field(&s, 5, 3.0).scale(0.01));
        let z = project_tangent(&p, &ScalarField::zeros(&s));
        assert_eq!(a_field(&p, &z, &z).unwrap().max_abs(), 0.0);
        let ab = a_field(&p, &psi, &chi).unwrap();
        let ba = a_field(&p, &chi, &psi).unwrap();
        assert!(ab.sub(&ba).max_abs() <= 1e-9 * ab.max_abs());
        let rhs = p.weighted_q(psi.field(), chi.field());
        assert!(p.weak_residual_weighted(&ab, rhs.values()) <= 1e-8);
    }

    #[test]
    fn frozen_curve_has_zero_derivative() {
        let s = build_spec(2, 16).unwrap();
        let p = potential(&s, 8, 0.3);
        let psi = random_field(&s, 9, 3.0);
        let zero = ScalarField::zeros(&s);
        let d = covariant_derivative(&p, &zero, &psi, &zero, &GreenOptions::default()).unwrap();
        assert_eq!(d.field().max_abs(), 0.0);
    }
}
