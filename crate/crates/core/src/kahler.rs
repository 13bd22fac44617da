//! Points of the space of Kähler potentials and the operators living at a point.
//!
//! Elliptic problems are posed on the dealiased band `V` (modes with
//! `|k_a| < N/3` on every axis). The divergence-form operator
//! `S w = Re Σ ∂̄_k (e^u g^{ik̄} ∂_i w)` satisfies `S w = e^u Δ_φ w` in the
//! continuum, and the Green solve finds `w ∈ V` with `P_V(S w) = P_V(e^u v)`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{KahlerError, Result};
use crate::spectral::{
    complex_hessian, gradient_from_spectrum, hessian_from_spectrum, mask_in_place, pairwise_sum,
    random_field, weighted_mean, HermitianMatrixField, ScalarField, TorusSpec,
};

/// Smallest admissible eigenvalue of `g_φ`.
pub const EPS_POS: f64 = 1e-8;

pub(crate) type Mat2 = [[Complex64; 2]; 2];

pub(crate) fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[Complex64::default(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub(crate) fn trace(a: &Mat2) -> Complex64 {
    a[0][0] + a[1][1]
}

/// `tr(a b)` without forming the product.
pub(crate) fn trace_mul(a: &Mat2, b: &Mat2) -> Complex64 {
    a[0][0] * b[0][0] + a[0][1] * b[1][0] + a[1][0] * b[0][1] + a[1][1] * b[1][1]
}

struct PotInner {
    phi: ScalarField,
    metric: HermitianMatrixField,
    inverse: HermitianMatrixField,
    flux: HermitianMatrixField,
    u: ScalarField,
    density: ScalarField,
    margin: f64,
    id: u64,
}

/// A point of `𝓗`: potential with cached metric, inverse metric, `u` and `e^u`.
#[derive(Clone)]
pub struct KahlerPotential {
    inner: Arc<PotInner>,
}

impl std::fmt::Debug for KahlerPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KahlerPotential")
            .field("spec", self.spec())
            .field("margin", &self.inner.margin)
            .field("id", &self.inner.id)
            .finish()
    }
}

fn fingerprint(values: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    values.len().hash(&mut h);
    for v in values {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Build the point `ω_φ = ω + i∂∂̄φ`. `φ` is dealiased and recentred to Lebesgue mean zero.
pub fn make_potential(spec: &TorusSpec, phi: &ScalarField) -> Result<KahlerPotential> {
    KahlerPotential::new(spec, phi)
}

impl KahlerPotential {
    pub fn new(spec: &TorusSpec, phi: &ScalarField) -> Result<Self> {
        if phi.spec() != spec {
            return Err(KahlerError::GridMismatch);
        }
        if !phi.is_finite() {
            return Err(KahlerError::NonFinite("potential"));
        }
        let mut ph = phi.spectrum();
        mask_in_place(spec, &mut ph);
        ph[0] = Complex64::default();
        let hess = hessian_from_spectrum(spec, &ph);
        let phi = ScalarField::from_vec(spec, spec.inverse_real(ph));
        let n = spec.complex_dim();
        let len = spec.len();
        let mut g = vec![vec![Complex64::default(); len]; n * n];
        let mut ginv = vec![vec![Complex64::default(); len]; n * n];
        let mut flux = vec![vec![Complex64::default(); len]; n * n];
        let mut m = vec![0.0; len];
        let mut margin = f64::INFINITY;
        for i in 0..len {
            if n == 1 {
                let a = 0.5 + hess.at(0, 0, i).re;
                margin = margin.min(a);
                g[0][i] = Complex64::new(a, 0.0);
                ginv[0][i] = Complex64::new(1.0 / a, 0.0);
                m[i] = 2.0 * a;
                flux[0][i] = Complex64::new(2.0, 0.0);
            } else {
                let a = 0.5 + hess.at(0, 0, i).re;
                let d = 0.5 + hess.at(1, 1, i).re;
                let b = hess.at(0, 1, i);
                let det = a * d - b.norm_sqr();
                let half_tr = 0.5 * (a + d);
                let disc = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
                margin = margin.min(half_tr - disc);
                g[0][i] = Complex64::new(a, 0.0);
                g[1][i] = b;
                g[2][i] = b.conj();
                g[3][i] = Complex64::new(d, 0.0);
                ginv[0][i] = Complex64::new(d / det, 0.0);
                ginv[1][i] = -b / det;
                ginv[2][i] = -b.conj() / det;
                ginv[3][i] = Complex64::new(a / det, 0.0);
                m[i] = 4.0 * det;
                // e^u g^{-1} = 4 adj(g), linear in the metric
                flux[0][i] = Complex64::new(4.0 * d, 0.0);
                flux[1][i] = -4.0 * b;
                flux[2][i] = -4.0 * b.conj();
                flux[3][i] = Complex64::new(4.0 * a, 0.0);
            }
        }
        if !(margin > EPS_POS) {
            return Err(KahlerError::PositivityViolation { margin, time: None });
        }
        let u: Vec<f64> = m.iter().map(|x| x.ln()).collect();
        let id = fingerprint(phi.values());
        Ok(KahlerPotential {
            inner: Arc::new(PotInner {
                phi,
                metric: HermitianMatrixField::from_entries(n, g),
                inverse: HermitianMatrixField::from_entries(n, ginv),
                flux: HermitianMatrixField::from_entries(n, flux),
                u: ScalarField::from_vec(spec, u),
                density: ScalarField::from_vec(spec, m),
                margin,
                id,
            }),
        })
    }

    /// The flat point `φ = 0`.
    pub fn flat(spec: &TorusSpec) -> Self {
        Self::new(spec, &ScalarField::zeros(spec)).expect("flat metric is positive")
    }

    pub fn spec(&self) -> &TorusSpec {
        self.inner.phi.spec()
    }

    pub fn phi(&self) -> &ScalarField {
        &self.inner.phi
    }

    /// `g_φ` with entry `(l, k)` equal to `g_{lk̄}`.
    pub fn metric(&self) -> &HermitianMatrixField {
        &self.inner.metric
    }

    /// Matrix inverse of [`Self::metric`]; `g^{jk̄}` is entry `(k, j)`.
    pub fn inverse_metric(&self) -> &HermitianMatrixField {
        &self.inner.inverse
    }

    /// `u = log(ω_φⁿ / ωⁿ)`.
    pub fn u(&self) -> &ScalarField {
        &self.inner.u
    }

    /// `e^u`, the density of `ω_φⁿ/n!` against Lebesgue measure.
    pub fn density(&self) -> &ScalarField {
        &self.inner.density
    }

    pub fn positivity_margin(&self) -> f64 {
        self.inner.margin
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    /// `∫ f e^u`.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        weighted_mean(f.values(), self.inner.density.values())
    }

    pub fn hessian(&self, f: &ScalarField) -> HermitianMatrixField {
        hessian_from_spectrum(self.spec(), &f.spectrum())
    }

    /// `g_φ^{-1}` at a node, zero-padded to 2×2.
    pub(crate) fn ginv_local(&self, node: usize) -> Mat2 {
        self.inner.inverse.local(node)
    }

    /// Pointwise `g^{jk̄} f_{jk̄}` from a precomputed Hessian.
    pub fn contract(&self, h: &HermitianMatrixField) -> ScalarField {
        let spec = self.spec();
        let vals = (0..spec.len())
            .map(|i| trace_mul(&self.ginv_local(i), &h.local(i)).re)
            .collect();
        ScalarField::from_vec(spec, vals)
    }

    /// Pointwise `Hf * Hh` and `Q(f,h) = Δf Δh − Hf * Hh` from precomputed Hessians.
    pub fn star_and_q(
        &self,
        hf: &HermitianMatrixField,
        hh: &HermitianMatrixField,
    ) -> (ScalarField, ScalarField) {
        let spec = self.spec();
        let n = spec.complex_dim();
        let len = spec.len();
        let mut star = vec![0.0; len];
        let mut q = vec![0.0; len];
        for i in 0..len {
            let a = self.ginv_local(i);
            let af = mat_mul(&a, &hf.local(i));
            let ah = mat_mul(&a, &hh.local(i));
            let s = trace_mul(&af, &ah).re;
            star[i] = s;
            q[i] = if n == 1 {
                0.0
            } else {
                (trace(&af) * trace(&ah)).re - s
            };
        }
        (ScalarField::from_vec(spec, star), ScalarField::from_vec(spec, q))
    }

    /// `Q(f,h)` weighted by `e^u`; in complex dimension two this equals
    /// `4 (det(F+H) − det F − det H)` independently of the metric.
    pub fn weighted_q(&self, f: &ScalarField, h: &ScalarField) -> ScalarField {
        let (_, q) = self.star_and_q(&self.hessian(f), &self.hessian(h));
        q.zip(self.density(), |a, b| a * b)
    }

    /// `e^u g_φ^{-1}`, stored like [`Self::inverse_metric`].
    pub fn flux(&self) -> &HermitianMatrixField {
        &self.inner.flux
    }

    /// Spectrum of `S w` for a real field given by its spectrum, before projection.
    fn apply_divergence_spectrum(&self, wh: &[Complex64]) -> Vec<Complex64> {
        let spec = self.spec();
        let n = spec.complex_dim();
        let len = spec.len();
        let grads = gradient_from_spectrum(spec, wh);
        let mut acc = vec![Complex64::default(); len];
        for k in 0..n {
            let mut t = vec![Complex64::default(); len];
            for (node, tv) in t.iter_mut().enumerate() {
                let mut s = Complex64::default();
                for (i, gi) in grads.iter().enumerate() {
                    s += self.inner.flux.at(k, i, node) * gi[node];
                }
                *tv = s;
            }
            let th = spec.forward_complex(t);
            let dzk = spec.dz(k);
            for ((a, x), d) in acc.iter_mut().zip(&th).zip(dzk) {
                *a += x * (-d.conj());
            }
        }
        spec.real_part_spectrum(&acc)
    }

    /// `P_V(S w)` as a spectrum with the mean mode removed.
    fn apply_projected(&self, wh: &[Complex64]) -> Vec<Complex64> {
        let mut x = self.apply_divergence_spectrum(wh);
        mask_in_place(self.spec(), &mut x);
        x[0] = Complex64::default();
        x
    }

    /// Divergence-form operator `S w = Re Σ ∂̄_k(e^u g^{ik̄} ∂_i w)` on the full grid.
    pub fn divergence_operator(&self, w: &ScalarField) -> ScalarField {
        let spec = self.spec();
        ScalarField::from_vec(spec, spec.inverse_real(self.apply_divergence_spectrum(&w.spectrum())))
    }

    /// Band projection of a weighted quantity with its mean removed.
    pub(crate) fn project_rhs(&self, weighted: &[f64]) -> Vec<Complex64> {
        let spec = self.spec();
        let mut b = spec.forward(weighted);
        mask_in_place(spec, &mut b);
        b[0] = Complex64::default();
        b
    }

    /// Solve `P_V(S w) = P_V(rhs)` for `w ∈ V`, returning `w` with `∫ w e^u = 0`.
    pub fn solve_weighted(
        &self,
        rhs: &[f64],
        guess: Option<&ScalarField>,
        opts: &GreenOptions,
    ) -> Result<GreenSolution> {
        let spec = self.spec();
        let b = self.project_rhs(rhs);
        let bnorm = spectral_norm(&b);
        if bnorm == 0.0 {
            return Ok(GreenSolution { field: ScalarField::zeros(spec), iterations: 0, residual: 0.0 });
        }
        let mut x = match guess {
            Some(g) => {
                let mut gh = g.spectrum();
                mask_in_place(spec, &mut gh);
                gh[0] = Complex64::default();
                gh
            }
            None => vec![Complex64::default(); spec.len()],
        };
        // CG on A = −P_V S (symmetric positive definite on V without constants).
        let ax = self.apply_projected(&x);
        let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| -(bi - ai)).collect();
        let sym = spec.flat_symbol();
        let precondition = |r: &[Complex64]| -> Vec<Complex64> {
            r.iter()
                .zip(sym)
                .map(|(z, s)| if *s > 0.0 { z / s } else { Complex64::default() })
                .collect()
        };
        let cap = opts
            .max_iterations
            .unwrap_or_else(|| 10 * spec.len());
        let mut z = precondition(&r);
        let mut p = z.clone();
        let mut rz = spectral_dot(&r, &z);
        let mut rnorm = spectral_norm(&r);
        let mut it = 0;
        while rnorm > opts.tolerance * bnorm {
            if it >= cap {
                return Err(KahlerError::NoConvergence { iterations: it, residual: rnorm / bnorm });
            }
            let ap: Vec<Complex64> = self.apply_projected(&p).into_iter().map(|v| -v).collect();
            let pap = spectral_dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(KahlerError::NoConvergence { iterations: it, residual: rnorm / bnorm });
            }
            let alpha = rz / pap;
            for (xi, pi) in x.iter_mut().zip(&p) {
                *xi += alpha * pi;
            }
            for (ri, api) in r.iter_mut().zip(&ap) {
                *ri -= alpha * api;
            }
            rnorm = spectral_norm(&r);
            z = precondition(&r);
            let rz_new = spectral_dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
            it += 1;
        }
        let w = ScalarField::from_vec(spec, spec.inverse_real(x));
        let field = self.regauge(&w);
        if !field.is_finite() {
            return Err(KahlerError::NonFinite("green solve"));
        }
        Ok(GreenSolution { field, iterations: it, residual: rnorm / bnorm })
    }

    /// `f − ∫ f e^u`.
    pub fn regauge(&self, f: &ScalarField) -> ScalarField {
        let m = self.integrate(f);
        f.map(|v| v - m)
    }

    /// Band-projected weak residual `‖P_V(S w − rhs)‖ / ‖P_V(rhs)‖` (absolute when rhs vanishes).
    pub fn weak_residual_weighted(&self, w: &ScalarField, rhs: &[f64]) -> f64 {
        let sw = self.apply_projected(&w.spectrum());
        let b = self.project_rhs(rhs);
        let diff: Vec<Complex64> = sw.iter().zip(&b).map(|(a, c)| a - c).collect();
        let bn = spectral_norm(&b);
        let dn = spectral_norm(&diff);
        if bn > 0.0 {
            dn / bn
        } else {
            dn
        }
    }

    /// Root-mean-square of `P_V(f)` with the mean removed.
    pub fn band_norm(&self, f: &[f64]) -> f64 {
        spectral_norm(&self.project_rhs(f)) / self.spec().len() as f64
    }
}

fn spectral_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    let terms: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).collect();
    pairwise_sum(&terms)
}

fn spectral_norm(a: &[Complex64]) -> f64 {
    spectral_dot(a, a).sqrt()
}

/// Options for the Green solve.
#[derive(Clone, Debug)]
pub struct GreenOptions {
    /// Relative weak residual target.
    pub tolerance: f64,
    /// Iteration cap; `None` means `10 · N^{2n}`.
    pub max_iterations: Option<usize>,
    /// Allowed `|∫ v e^u|` relative to the root-mean-square of `v e^u`.
    pub mean_tolerance: f64,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions { tolerance: 1e-10, max_iterations: None, mean_tolerance: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct GreenSolution {
    pub field: ScalarField,
    pub iterations: usize,
    pub residual: f64,
}

/// Mean-zero (for `ω_φⁿ/n!`) scalar field anchored at a potential.
#[derive(Clone, Debug)]
pub struct TangentVector {
    anchor: u64,
    field: ScalarField,
}

impl TangentVector {
    /// Wrap a field already satisfying the tangent condition.
    pub fn new(phi: &KahlerPotential, field: ScalarField) -> Result<Self> {
        let mean = phi.integrate(&field);
        let scale = field.max_abs().max(1.0);
        if mean.abs() > 1e-10 * scale {
            return Err(KahlerError::MeanNotZero { mean });
        }
        Ok(TangentVector { anchor: phi.id(), field })
    }

    pub(crate) fn raw(anchor: u64, field: ScalarField) -> Self {
        TangentVector { anchor, field }
    }

    pub fn anchor(&self) -> u64 {
        self.anchor
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn into_field(self) -> ScalarField {
        self.field
    }

    pub fn is_anchored_at(&self, phi: &KahlerPotential) -> bool {
        self.anchor == phi.id()
    }

    pub fn scale(&self, s: f64) -> Self {
        TangentVector { anchor: self.anchor, field: self.field.scale(s) }
    }

    pub fn axpy(&self, s: f64, other: &TangentVector) -> Self {
        TangentVector { anchor: self.anchor, field: self.field.axpy(s, &other.field) }
    }
}

/// Pointwise `Δ_φ f = g^{jk̄} f_{jk̄}`.
pub fn laplacian(phi: &KahlerPotential, f: &ScalarField) -> ScalarField {
    phi.contract(&phi.hessian(f))
}

/// `Hf * Hh = g^{jk̄} g^{pq̄} f_{jq̄} h_{pk̄}`.
pub fn hess_star(phi: &KahlerPotential, f: &ScalarField, h: &ScalarField) -> ScalarField {
    phi.star_and_q(&phi.hessian(f), &phi.hessian(h)).0
}

/// `Q(f,h) = Δf Δh − Hf * Hh`; identically zero in complex dimension one.
pub fn q_form(phi: &KahlerPotential, f: &ScalarField, h: &ScalarField) -> ScalarField {
    phi.star_and_q(&phi.hessian(f), &phi.hessian(h)).1
}

/// `C[f]_{ij̄} = Δ_φ f · g_{ij̄} − f_{ij̄}`.
pub fn c_tensor(phi: &KahlerPotential, f: &ScalarField) -> HermitianMatrixField {
    let n = phi.spec().complex_dim();
    if n == 1 {
        let len = phi.spec().len();
        return HermitianMatrixField::from_entries(1, vec![vec![Complex64::default(); len]]);
    }
    let h = phi.hessian(f);
    let lap = phi.contract(&h);
    let g = phi.metric();
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let e = (0..lap.values().len())
                .map(|node| lap.values()[node] * g.at(i, j, node) - h.at(i, j, node))
                .collect();
            entries.push(e);
        }
    }
    HermitianMatrixField::from_entries(n, entries)
}

/// Raised tensor `C^{ij̄}`, stored with entry `(j, i)` holding `C^{ij̄}`.
pub fn raise(phi: &KahlerPotential, c: &HermitianMatrixField) -> HermitianMatrixField {
    let n = c.dim();
    let len = c.len();
    let mut entries = vec![vec![Complex64::default(); len]; n * n];
    for node in 0..len {
        let a = phi.ginv_local(node);
        let r = mat_mul(&mat_mul(&a, &c.local(node)), &a);
        for j in 0..n {
            for i in 0..n {
                entries[j * n + i][node] = r[j][i];
            }
        }
    }
    HermitianMatrixField::from_entries(n, entries)
}

/// Covariant divergence `(1/e^u) Σ_j ∂̄_j(e^u C^{ij̄})` for each `i`.
pub fn c_divergence(phi: &KahlerPotential, f: &ScalarField) -> Vec<Vec<Complex64>> {
    let spec = phi.spec();
    let n = spec.complex_dim();
    let up = raise(phi, &c_tensor(phi, f));
    let m = phi.density().values();
    (0..n)
        .map(|i| {
            let mut acc = vec![Complex64::default(); spec.len()];
            for j in 0..n {
                let t: Vec<Complex64> =
                    up.entry(j, i).iter().zip(m).map(|(z, w)| z * w).collect();
                let th = spec.forward_complex(t);
                for ((a, x), d) in acc.iter_mut().zip(&th).zip(spec.dz(j)) {
                    *a += x * (-d.conj());
                }
            }
            spec.inverse(acc).into_iter().zip(m).map(|(z, w)| z / w).collect()
        })
        .collect()
}

/// `w` with `Δ_φ w = v` and `∫ w e^u = 0`.
pub fn green_solve(
    phi: &KahlerPotential,
    v: &ScalarField,
    opts: &GreenOptions,
) -> Result<ScalarField> {
    green_solve_detailed(phi, v, None, opts).map(|s| s.field)
}

/// Green solve with an optional initial guess and solver diagnostics.
pub fn green_solve_detailed(
    phi: &KahlerPotential,
    v: &ScalarField,
    guess: Option<&ScalarField>,
    opts: &GreenOptions,
) -> Result<GreenSolution> {
    let weighted: Vec<f64> =
        v.values().iter().zip(phi.density().values()).map(|(a, b)| a * b).collect();
    check_mean(&weighted, opts.mean_tolerance)?;
    phi.solve_weighted(&weighted, guess, opts)
}

pub(crate) fn check_mean(weighted: &[f64], tol: f64) -> Result<()> {
    let mean = pairwise_sum(weighted) / weighted.len() as f64;
    let sq: Vec<f64> = weighted.iter().map(|x| x * x).collect();
    let rms = (pairwise_sum(&sq) / sq.len() as f64).sqrt();
    if mean.abs() > tol * rms {
        return Err(KahlerError::MeanNotZero { mean });
    }
    Ok(())
}

/// Weak residual of a Green solve, `‖P_V(e^u(Δ_φ w − v))‖ / ‖P_V(e^u v)‖`.
pub fn weak_residual(phi: &KahlerPotential, w: &ScalarField, v: &ScalarField) -> f64 {
    let weighted: Vec<f64> =
        v.values().iter().zip(phi.density().values()).map(|(a, b)| a * b).collect();
    phi.weak_residual_weighted(w, &weighted)
}

/// `f − ∫ f e^u / Vol`.
pub fn project_tangent(phi: &KahlerPotential, f: &ScalarField) -> TangentVector {
    let vol = phi.spec().volume();
    let m = phi.integrate(f) / vol;
    TangentVector::raw(phi.id(), f.map(|x| x - m))
}

/// Seeded band-limited field rescaled so that its flat complex Hessian has sup-norm `amplitude`.
pub fn random_hessian_scaled(spec: &TorusSpec, seed: u64, amplitude: f64) -> ScalarField {
    let f = random_field(spec, seed, 3.0);
    let h = complex_hessian(spec, &f).max_abs();
    if h > 0.0 {
        f.scale(amplitude / h)
    } else {
        f
    }
}

/// Seeded potential with flat Hessian sup-norm `amplitude`; admissible whenever `amplitude < 1/2`.
pub fn random_potential(spec: &TorusSpec, seed: u64, amplitude: f64) -> Result<KahlerPotential> {
    KahlerPotential::new(spec, &random_hessian_scaled(spec, seed, amplitude))
}

/// Seeded tangent vector at `phi`, projected to `e^u`-mean zero.
pub fn random_tangent(phi: &KahlerPotential, seed: u64, amplitude: f64) -> TangentVector {
    project_tangent(phi, &random_hessian_scaled(phi.spec(), seed, amplitude))
}

/// `∂_t(Δ_φ ψ) = Δ_φ ψ_t − Hφ_t * Hψ`.
pub fn laplacian_rate(
    phi: &KahlerPotential,
    phi_t: &ScalarField,
    psi: &ScalarField,
    psi_t: &ScalarField,
) -> ScalarField {
    laplacian(phi, psi_t).sub(&hess_star(phi, phi_t, psi))
}
