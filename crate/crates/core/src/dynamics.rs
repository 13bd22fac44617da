//! Paths, Dirichlet geodesics, the K-energy and its gradient flow.

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{KahlerError, Result};
use crate::kahler::{check_mean, laplacian, project_tangent, GreenOptions, KahlerPotential, TangentVector};
use crate::metrics::{dirichlet_pairing, inner, MetricKind};
use crate::spectral::{gradient_from_spectrum, pairwise_sum, weighted_mean, ScalarField, TorusSpec};

/// Time-sampled path with velocities. Potentials are rebuilt on demand.
#[derive(Clone, Debug)]
pub struct Curve {
    pub times: Vec<f64>,
    pub potentials: Vec<ScalarField>,
    pub velocities: Vec<ScalarField>,
    pub diagnostics: CurveDiagnostics,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CurveDiagnostics {
    /// Time of every integration step, including those not recorded.
    pub step_times: Vec<f64>,
    /// Dirichlet speed `⟨dφ_t, dφ_t⟩` at every step.
    pub speeds: Vec<f64>,
    /// Largest constant removed from a velocity by re-projection.
    pub max_gauge_shift: f64,
    pub solver_iterations: usize,
}

impl Curve {
    /// `φ(t) = φ₀ + t ψ` sampled at `samples` uniform times in `[t0, t1]`.
    pub fn linear(phi0: &ScalarField, psi: &ScalarField, t0: f64, t1: f64, samples: usize) -> Self {
        let samples = samples.max(2);
        let dt = (t1 - t0) / (samples - 1) as f64;
        let times: Vec<f64> = (0..samples).map(|i| t0 + dt * i as f64).collect();
        let potentials = times.iter().map(|&t| phi0.axpy(t, psi)).collect();
        let velocities = vec![psi.clone(); samples];
        Curve { times, potentials, velocities, diagnostics: CurveDiagnostics::default() }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn potential(&self, i: usize) -> Result<KahlerPotential> {
        let f = &self.potentials[i];
        KahlerPotential::new(f.spec(), f).map_err(|e| e.at_time(self.times[i]))
    }

    pub fn velocity(&self, i: usize, at: &KahlerPotential) -> TangentVector {
        project_tangent(at, &self.velocities[i])
    }

    fn speeds(&self, kind: MetricKind) -> Result<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                let p = self.potential(i)?;
                let v = self.velocity(i, &p);
                inner(kind, &p, &v, &v)
            })
            .collect()
    }
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    let terms: Vec<f64> = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .collect();
    pairwise_sum(&terms)
}

/// `∫ ⟨dφ_t, dφ_t⟩ dt` by the composite trapezoid rule.
pub fn path_energy(kind: MetricKind, curve: &Curve) -> Result<f64> {
    Ok(trapezoid(&curve.times, &curve.speeds(kind)?))
}

/// `∫ ⟨dφ_t, dφ_t⟩^{1/2} dt` by the composite trapezoid rule.
pub fn path_length(kind: MetricKind, curve: &Curve) -> Result<f64> {
    let s: Vec<f64> = curve.speeds(kind)?.into_iter().map(|x| x.max(0.0).sqrt()).collect();
    Ok(trapezoid(&curve.times, &s))
}

fn geodesic_acceleration(
    phi: &KahlerPotential,
    phi_t: &ScalarField,
    guess: Option<&ScalarField>,
    opts: &GreenOptions,
) -> Result<(ScalarField, usize)> {
    if phi.spec().complex_dim() == 1 {
        return Ok((ScalarField::zeros(phi.spec()), 0));
    }
    // e^u · ½(Hφ_t*Hφ_t − (Δφ_t)²) = −½ e^u Q(φ_t, φ_t)
    let rhs = phi.weighted_q(phi_t, phi_t).scale(-0.5);
    check_mean(rhs.values(), opts.mean_tolerance)?;
    let sol = phi.solve_weighted(rhs.values(), guess, opts)?;
    Ok((sol.field, sol.iterations))
}

/// `φ_tt` solving `2 Δ_φ φ_tt = Hφ_t*Hφ_t − (Δ_φ φ_t)²`.
pub fn geodesic_rhs(phi: &KahlerPotential, phi_t: &TangentVector) -> Result<TangentVector> {
    if !phi_t.is_anchored_at(phi) {
        return Err(KahlerError::AnchorMismatch);
    }
    let (acc, _) = geodesic_acceleration(phi, phi_t.field(), None, &GreenOptions::default())?;
    Ok(project_tangent(phi, &acc))
}

#[derive(Clone, Debug)]
pub struct GeodesicOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Keep every `record_every`-th state in the curve; the last state is always kept.
    pub record_every: usize,
    pub green: GreenOptions,
}

impl GeodesicOptions {
    pub fn new(t_final: f64, dt: f64) -> Self {
        GeodesicOptions { t_final, dt, record_every: 1, green: GreenOptions::default() }
    }
}

/// Classical RK4 for `D_t dφ_t = 0` from `(φ₀, ψ₀)`.
pub fn integrate_geodesic(phi0: &KahlerPotential, psi0: &TangentVector, t_final: f64, dt: f64) -> Result<Curve> {
    integrate_geodesic_with(phi0, psi0, &GeodesicOptions::new(t_final, dt))
}

pub fn integrate_geodesic_with(
    phi0: &KahlerPotential,
    psi0: &TangentVector,
    opts: &GeodesicOptions,
) -> Result<Curve> {
    if !psi0.is_anchored_at(phi0) {
        return Err(KahlerError::AnchorMismatch);
    }
    if !(opts.dt > 0.0) || !(opts.t_final >= opts.dt) {
        return Err(KahlerError::Config(format!(
            "need 0 < dt <= T, got dt = {}, T = {}",
            opts.dt, opts.t_final
        )));
    }
    let spec = phi0.spec().clone();
    let steps = (opts.t_final / opts.dt).round() as usize;
    let h = opts.t_final / steps as f64;
    let every = opts.record_every.max(1);
    let g = &opts.green;

    let mut p = phi0.clone();
    let mut v = psi0.field().clone();
    let mut guess: Option<ScalarField> = None;
    let mut diag = CurveDiagnostics::default();
    let mut curve = Curve {
        times: vec![0.0],
        potentials: vec![p.phi().clone()],
        velocities: vec![v.clone()],
        diagnostics: CurveDiagnostics::default(),
    };
    diag.step_times.push(0.0);
    diag.speeds.push(dirichlet_pairing(&p, &v, &v));

    let build = |f: &ScalarField, t: f64| KahlerPotential::new(&spec, f).map_err(|e| e.at_time(t));
    for step in 0..steps {
        let t = step as f64 * h;
        let phi = p.phi();
        let (a1, i1) = geodesic_acceleration(&p, &v, guess.as_ref(), g)?;
        let v2 = v.axpy(0.5 * h, &a1);
        let p2 = build(&phi.axpy(0.5 * h, &v), t + 0.5 * h)?;
        let (a2, i2) = geodesic_acceleration(&p2, &v2, Some(&a1), g)?;
        let v3 = v.axpy(0.5 * h, &a2);
        let p3 = build(&phi.axpy(0.5 * h, &v2), t + 0.5 * h)?;
        let (a3, i3) = geodesic_acceleration(&p3, &v3, Some(&a2), g)?;
        let v4 = v.axpy(h, &a3);
        let p4 = build(&phi.axpy(h, &v3), t + h)?;
        let (a4, i4) = geodesic_acceleration(&p4, &v4, Some(&a3), g)?;
        diag.solver_iterations += i1 + i2 + i3 + i4;

        let dphi = v.axpy(2.0, &v2).axpy(2.0, &v3).add(&v4);
        let dv = a1.axpy(2.0, &a2).axpy(2.0, &a3).add(&a4);
        let next_phi = phi.axpy(h / 6.0, &dphi);
        let next_v = v.axpy(h / 6.0, &dv);
        p = build(&next_phi, t + h)?;
        let shift = p.integrate(&next_v);
        diag.max_gauge_shift = diag.max_gauge_shift.max(shift.abs());
        v = next_v.map(|x| x - shift);
        guess = Some(a4);

        let t_next = (step + 1) as f64 * h;
        diag.step_times.push(t_next);
        diag.speeds.push(dirichlet_pairing(&p, &v, &v));
        if (step + 1) % every == 0 || step + 1 == steps {
            curve.times.push(t_next);
            curve.potentials.push(p.phi().clone());
            curve.velocities.push(v.clone());
        }
    }
    curve.diagnostics = diag;
    Ok(curve)
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualSample {
    pub time: f64,
    pub value: f64,
}

struct GeodesicJets {
    u_t: ScalarField,
    u_tt: ScalarField,
    hess_vel: crate::spectral::HermitianMatrixField,
}

fn jets(p: &KahlerPotential, v: &ScalarField, opts: &GreenOptions) -> Result<GeodesicJets> {
    let (acc, _) = geodesic_acceleration(p, v, None, opts)?;
    let hv = p.hessian(v);
    let u_t = p.contract(&hv);
    let (star, _) = p.star_and_q(&hv, &hv);
    let u_tt = laplacian(p, &acc).sub(&star);
    Ok(GeodesicJets { u_t, u_tt, hess_vel: hv })
}

/// Residual of the geodesic equation written on volume conformal factors.
///
/// Dirichlet: `2u_tt + u_t² + Δ_φ[(∂_t Δ_u^{-1}) u_t]`, with the operator
/// derivative taken by central differences of Green solves at the neighbouring
/// samples; reported as the root-mean-square of its band projection weighted
/// by `e^u`. Calabi: sup-norm of `2u_tt + u_t² + 1`. Interior samples only.
pub fn geodesic_residual(kind: MetricKind, curve: &Curve) -> Result<Vec<ResidualSample>> {
    geodesic_residual_with(kind, curve, &GreenOptions::default())
}

pub fn geodesic_residual_with(
    kind: MetricKind,
    curve: &Curve,
    opts: &GreenOptions,
) -> Result<Vec<ResidualSample>> {
    let mut out = Vec::new();
    if curve.len() < 3 {
        return Ok(out);
    }
    for i in 1..curve.len() - 1 {
        let p = curve.potential(i)?;
        let v = &curve.velocities[i];
        let j = jets(&p, v, opts)?;
        let base = j.u_tt.scale(2.0).add(&j.u_t.map(|x| x * x));
        let value = match kind {
            MetricKind::Calabi => base.map(|x| x + 1.0).max_abs(),
            MetricKind::Mabuchi => {
                return Err(KahlerError::Config("no residual form for the Mabuchi metric".into()))
            }
            MetricKind::Dirichlet => {
                let dt = curve.times[i + 1] - curve.times[i - 1];
                let solve_at = |q: &KahlerPotential| -> Result<ScalarField> {
                    let c = q.integrate(&j.u_t);
                    let rhs: Vec<f64> = j
                        .u_t
                        .values()
                        .iter()
                        .zip(q.density().values())
                        .map(|(x, m)| (x - c) * m)
                        .collect();
                    Ok(q.solve_weighted(&rhs, None, opts)?.field)
                };
                let wp = solve_at(&curve.potential(i + 1)?)?;
                let wm = solve_at(&curve.potential(i - 1)?)?;
                let y = wp.sub(&wm).scale(1.0 / dt);
                let sy = p.divergence_operator(&y);
                // the recentring constant moves with t at rate ∫ u_t² e^u
                let c_rate = p.integrate(&j.u_t.map(|x| x * x));
                let total = base.map(|a| a + c_rate).zip(p.density(), |a, m| a * m).add(&sy);
                p.band_norm(total.values())
            }
        };
        out.push(ResidualSample { time: curve.times[i], value });
    }
    Ok(out)
}

/// The same residual with the operator term written as `−(∂_t Δ_φ) Δ_u^{-1} u_t = Hφ_t * H(Δ_u^{-1} u_t)`.
pub fn geodesic_residual_operator_form(curve: &Curve, opts: &GreenOptions) -> Result<Vec<ResidualSample>> {
    let mut out = Vec::new();
    for i in 0..curve.len() {
        let p = curve.potential(i)?;
        let j = jets(&p, &curve.velocities[i], opts)?;
        let rhs: Vec<f64> = j.u_t.values().iter().zip(p.density().values()).map(|(x, m)| x * m).collect();
        let w = p.solve_weighted(&rhs, None, opts)?.field;
        let (star, _) = p.star_and_q(&j.hess_vel, &p.hessian(&w));
        let r = j.u_tt.scale(2.0).add(&j.u_t.map(|x| x * x)).add(&star);
        let weighted = r.zip(p.density(), |a, m| a * m);
        out.push(ResidualSample { time: curve.times[i], value: p.band_norm(weighted.values()) });
    }
    Ok(out)
}

/// `S = −Δ_φ u` on the flat torus.
pub fn scalar_curvature(phi: &KahlerPotential) -> ScalarField {
    laplacian(phi, phi.u()).scale(-1.0)
}

/// `2 ∫ u e^u`, the K-energy relative to the flat potential.
pub fn kenergy_entropy(phi: &KahlerPotential) -> f64 {
    2.0 * weighted_mean(phi.u().values(), phi.density().values())
}

/// Exact directional derivative of [`kenergy_entropy`] along `ψ`.
pub fn kenergy_differential(phi: &KahlerPotential, psi: &ScalarField) -> f64 {
    let lap = laplacian(phi, psi);
    let w: Vec<f64> = phi.u().values().iter().zip(phi.density().values()).map(|(u, m)| (u + 1.0) * m).collect();
    2.0 * weighted_mean(lap.values(), &w)
}

/// Dirichlet gradient `f` of the K-energy, `Δ_φ f = S − S̄` with `∫ f e^u = 0`.
pub fn kenergy_gradient(phi: &KahlerPotential) -> Result<TangentVector> {
    kenergy_gradient_with(phi, None, &GreenOptions::default()).map(|(f, _)| f)
}

pub fn kenergy_gradient_with(
    phi: &KahlerPotential,
    guess: Option<&ScalarField>,
    opts: &GreenOptions,
) -> Result<(TangentVector, usize)> {
    let spec = phi.spec();
    let n = spec.complex_dim();
    let flux = phi.flux();
    let u = phi.u().values();
    let mut acc = vec![Complex64::default(); spec.len()];
    for j in 0..n {
        for k in 0..n {
            // A_{jk} = (u + 1) e^u g^{jk̄}; accumulate ∂_j ∂̄_k A_{jk}
            let a: Vec<Complex64> = flux.entry(k, j).iter().zip(u).map(|(z, u)| z * (u + 1.0)).collect();
            let ah = spec.forward_complex(a);
            for (((x, z), dj), dk) in acc.iter_mut().zip(&ah).zip(spec.dz(j)).zip(spec.dz(k)) {
                *x += z * dj * (-dk.conj());
            }
        }
    }
    // The weak form of Δ_φ f = −Δ_φ u is P_V(S f) = −Re Σ ∂_j ∂̄_k A_{jk}.
    let rhs: Vec<f64> = spec.inverse_real(spec.real_part_spectrum(&acc)).into_iter().map(|x| -x).collect();
    let sol = phi.solve_weighted(&rhs, guess, opts)?;
    Ok((TangentVector::raw(phi.id(), sol.field), sol.iterations))
}

fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// K-energy at `φ` by Gauss–Legendre quadrature of `∫(dφ, df)` along `t ↦ tφ`.
pub fn kenergy(phi: &KahlerPotential, steps: usize) -> Result<f64> {
    kenergy_along(&[ScalarField::zeros(phi.spec()), phi.phi().clone()], steps, &GreenOptions::default())
}

/// K-energy accumulated along the polygon through `points`, `steps` nodes per segment.
pub fn kenergy_along(points: &[ScalarField], steps: usize, opts: &GreenOptions) -> Result<f64> {
    let (x, w) = gauss_legendre(steps.max(1));
    let mut total = 0.0;
    for seg in points.windows(2) {
        let dir = seg[1].sub(&seg[0]);
        for (xi, wi) in x.iter().zip(&w) {
            let t = 0.5 * (xi + 1.0);
            let f = seg[0].axpy(t, &dir);
            let p = KahlerPotential::new(f.spec(), &f)?;
            let (grad, _) = kenergy_gradient_with(&p, None, opts)?;
            total += 0.5 * wi * dirichlet_pairing(&p, grad.field(), &dir);
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    pub kenergy: Vec<f64>,
    pub gradient_norm: Vec<f64>,
    pub solver_iterations: Vec<usize>,
    /// Largest per-step increase of the K-energy (non-positive for a monotone run).
    pub max_increase: f64,
}

/// Forward-Euler pseudo-Calabi flow `φ_t = −f(φ)`.
pub fn pseudo_calabi_flow(phi0: &KahlerPotential, t_final: f64, dt: f64) -> Result<FlowTrace> {
    pseudo_calabi_flow_with(phi0, t_final, dt, &GreenOptions::default())
}

pub fn pseudo_calabi_flow_with(
    phi0: &KahlerPotential,
    t_final: f64,
    dt: f64,
    opts: &GreenOptions,
) -> Result<FlowTrace> {
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(KahlerError::Config(format!("need dt > 0 and T >= 0, got {dt}, {t_final}")));
    }
    let spec = phi0.spec().clone();
    let steps = (t_final / dt).round() as usize;
    let mut trace = FlowTrace { max_increase: f64::NEG_INFINITY, ..Default::default() };
    let mut p = phi0.clone();
    let mut guess: Option<ScalarField> = None;
    for step in 0..=steps {
        let t = step as f64 * dt;
        let (f, its) = kenergy_gradient_with(&p, guess.as_ref(), opts)?;
        let nu = kenergy_entropy(&p);
        if let Some(&prev) = trace.kenergy.last() {
            trace.max_increase = trace.max_increase.max(nu - prev);
        }
        trace.times.push(t);
        trace.kenergy.push(nu);
        trace.gradient_norm.push(dirichlet_pairing(&p, f.field(), f.field()).max(0.0).sqrt());
        trace.solver_iterations.push(its);
        if step == steps {
            break;
        }
        let next = p.phi().axpy(-dt, f.field());
        p = KahlerPotential::new(&spec, &next).map_err(|e| e.at_time(t + dt))?;
        guess = Some(f.into_field());
    }
    if trace.kenergy.len() < 2 {
        trace.max_increase = 0.0;
    }
    Ok(trace)
}

fn holomorphic_second(spec: &TorusSpec, fh: &[Complex64]) -> Vec<Vec<Complex64>> {
    let n = spec.complex_dim();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let sym = fh
                .iter()
                .zip(spec.dz(i).iter().zip(spec.dz(j)))
                .map(|(f, (a, b))| f * a * b)
                .collect();
            out.push(spec.inverse(sym));
        }
    }
    out
}

/// Second variation of the K-energy along the geodesic with initial velocity `φ_t`:
/// `∫ {2|D²φ_t|² + [f_{ij̄} + (S − S̄) g_{ij̄}] φ_t^i φ_t^{j̄}} e^u`.
pub fn kenergy_second_derivative(phi: &KahlerPotential, phi_t: &TangentVector) -> Result<f64> {
    if !phi_t.is_anchored_at(phi) {
        return Err(KahlerError::AnchorMismatch);
    }
    let spec = phi.spec();
    let n = spec.complex_dim();
    let len = spec.len();
    let psi = phi_t.field();
    let ph = psi.spectrum();
    let grad = gradient_from_spectrum(spec, &ph);
    let second = holomorphic_second(spec, &ph);
    // ∂_i g_{jl̄} = ∂_i ∂_j ∂̄_l φ
    let phih = phi.phi().spectrum();
    let mut third = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let sym = phih
                    .iter()
                    .zip(spec.dz(i).iter().zip(spec.dz(j)).zip(spec.dz(l)))
                    .map(|(f, ((a, b), c))| f * a * b * (-c.conj()))
                    .collect();
                third.push(spec.inverse(sym));
            }
        }
    }
    let f = kenergy_gradient(phi)?;
    let fhess = phi.hessian(f.field());
    let s = scalar_curvature(phi);
    let s_bar = phi.integrate(&s) / spec.volume();
    let ginv = phi.inverse_metric();
    let g = phi.metric();
    let mut integrand = vec![0.0; len];
    for node in 0..len {
        let a = |r: usize, c: usize| ginv.at(r, c, node);
        // ∇_i∇_j ψ = ∂_i∂_j ψ − Γ^k_{ij} ∂_k ψ with Γ^k_{ij} = g^{kl̄} ∂_i g_{jl̄}
        let mut d2 = [[Complex64::default(); 2]; 2];
        for i in 0..n {
            for j in 0..n {
                let mut v = second[i * n + j][node];
                for k in 0..n {
                    let mut gamma = Complex64::default();
                    for l in 0..n {
                        gamma += a(l, k) * third[(i * n + j) * n + l][node];
                    }
                    v -= gamma * grad[k][node];
                }
                d2[i][j] = v;
            }
        }
        let mut norm2 = Complex64::default();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        norm2 += a(k, i) * a(l, j) * d2[i][j] * d2[k][l].conj();
                    }
                }
            }
        }
        // φ_t^i = g^{ij̄} ∂̄_j φ_t
        let mut up = [Complex64::default(); 2];
        for i in 0..n {
            for j in 0..n {
                up[i] += a(j, i) * grad[j][node].conj();
            }
        }
        let mut term = Complex64::default();
        for i in 0..n {
            for j in 0..n {
                let t = fhess.at(i, j, node) + (s.values()[node] - s_bar) * g.at(i, j, node);
                term += t * up[i] * up[j].conj();
            }
        }
        integrand[node] = 2.0 * norm2.re + term.re;
    }
    Ok(weighted_mean(&integrand, phi.density().values()))
}
