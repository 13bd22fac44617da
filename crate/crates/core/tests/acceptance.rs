//! Acceptance suite: one line per criterion, tolerances pinned below.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use kahler_dirichlet::curvature::{commutator_oracle, dirichlet_bound, sectional, sectional_with};
use kahler_dirichlet::dynamics::{
    geodesic_residual, integrate_geodesic, integrate_geodesic_with, kenergy_entropy, kenergy_gradient,
    kenergy_second_derivative, pseudo_calabi_flow, GeodesicOptions,
};
use kahler_dirichlet::kahler::{
    c_divergence, c_tensor, green_solve_detailed, hess_star, laplacian, project_tangent, random_hessian_scaled,
    random_potential, random_tangent, GreenOptions, KahlerPotential,
};
use kahler_dirichlet::metrics::{covariant_derivative, covariant_derivative_sampled, dirichlet_pairing, gram_schmidt, MetricKind};
use kahler_dirichlet::spectral::{build_spec, random_field, ScalarField, TorusSpec};

const DIM1_FLATNESS: f64 = 1e-7;
const DIM1_RUNTIME: Duration = Duration::from_secs(60);
const MABUCHI_SIGN: f64 = 1e-12;
const CONNECTION_FLOOR: f64 = 1e-6;
const CONNECTION_C: f64 = 0.01;
const ORACLE_FLOOR: f64 = 1e-5;
const ORACLE_C: f64 = 10.0;
const ORACLE_H: f64 = 1e-2;
const MIN_ORDER_2: f64 = 1.8;
const SPEED_DRIFT: f64 = 1e-6;
const MIN_ORDER_4: f64 = 3.8;
const DIRICHLET_RESIDUAL: f64 = 1e-5;
const KENERGY_FD_C: f64 = 1.0;
const KENERGY_FD_H: f64 = 1e-3;
const CONVEXITY_FLOOR: f64 = -1e-10;
const FLOW_STEP: f64 = 1e-10;
const MEAN_ZERO: f64 = 1e-9;
const DIVERGENCE_FREE: f64 = 1e-9;
const GREEN_ROUND_TRIP: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn spec(n: usize, grid: usize) -> TorusSpec {
    build_spec(n, grid).unwrap()
}

fn dim1_flatness() -> Outcome {
    let start = Instant::now();
    let s = spec(1, 32);
    let green = GreenOptions::default();
    let mut worst: f64 = 0.0;
    let mut worst_generic: f64 = 0.0;
    for pot in 0..10u64 {
        let p = random_potential(&s, 100 + pot, 0.3).unwrap();
        for plane in 0..5u64 {
            let seed = 1000 * pot + plane;
            let x = random_tangent(&p, seed, 0.3);
            let y = random_tangent(&p, seed + 500, 0.3);
            worst = worst.max(sectional(MetricKind::Dirichlet, &p, &x, &y).unwrap().value.abs());
            // the same numerator with Q assembled from the general-dimension formula
            let e = gram_schmidt(MetricKind::Dirichlet, &p, &[x, y]).unwrap();
            let (u, v) = (e[0].field(), e[1].field());
            let solve = |a: &ScalarField, b: &ScalarField| {
                let q = laplacian(&p, a).zip(&laplacian(&p, b), |x, y| x * y).sub(&hess_star(&p, a, b));
                let rhs: Vec<f64> = q.values().iter().zip(p.density().values()).map(|(q, m)| q * m).collect();
                p.solve_weighted(&rhs, None, &green).unwrap().field
            };
            let (ss, st, tt) = (solve(u, u), solve(u, v), solve(v, v));
            let k = 0.25 * (dirichlet_pairing(&p, &st, &st) - dirichlet_pairing(&p, &ss, &tt));
            worst_generic = worst_generic.max(k.abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= DIM1_FLATNESS && worst_generic <= DIM1_FLATNESS && elapsed < DIM1_RUNTIME;
    outcome(
        pass,
        format!("max |K_D| = {worst:.3e}, generic Q path {worst_generic:.3e} (tol {DIM1_FLATNESS:.0e}), {:.1}s", elapsed.as_secs_f64()),
    )
}

fn calabi_constant() -> Outcome {
    let mut bad = 0;
    let mut count = 0;
    for n in [1, 2] {
        let s = spec(n, 16);
        for i in 0..25u64 {
            let p = random_potential(&s, 200 + i, 0.3).unwrap();
            let x = random_tangent(&p, 2 * i, 0.3);
            let y = random_tangent(&p, 2 * i + 1, 0.3);
            let k = sectional(MetricKind::Calabi, &p, &x, &y).unwrap().value;
            if k != 1.0 / (4.0 * s.volume()) {
                bad += 1;
            }
            count += 1;
        }
    }
    outcome(bad == 0, format!("{count} planes, {bad} differ from 1/(4 Vol) = 0.25"))
}

fn mabuchi_sign() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for n in [1, 2] {
        let s = spec(n, 16);
        for i in 0..50u64 {
            let p = random_potential(&s, 300 + i, 0.3).unwrap();
            let x = random_tangent(&p, 7 * i, 0.3);
            let y = random_tangent(&p, 7 * i + 3, 0.3);
            worst = worst.max(sectional(MetricKind::Mabuchi, &p, &x, &y).unwrap().value);
        }
    }
    outcome(worst <= MABUCHI_SIGN, format!("100 planes, max K_M = {worst:.3e} (tol {MABUCHI_SIGN:.0e})"))
}

struct Family {
    base: ScalarField,
    dirs: [ScalarField; 5],
}

impl Family {
    // φ(s,t) = φ₀ + sψ + tχ + stη + st³ζ + t³ρ
    fn at(&self, s: f64, t: f64) -> ScalarField {
        let [psi, chi, eta, zeta, rho] = &self.dirs;
        self.base
            .axpy(s, psi)
            .axpy(t, chi)
            .axpy(s * t, eta)
            .axpy(s * t.powi(3), zeta)
            .axpy(t.powi(3), rho)
    }
}

fn connection_axioms() -> Outcome {
    let s = spec(2, 16);
    let green = GreenOptions::default();
    let hs = [4e-2, 2e-2, 1e-2];
    let (s0, t0) = (0.3, 0.4);
    let mut worst_ratio: f64 = 0.0;
    let mut min_order = f64::INFINITY;
    let mut worst_fine = (0.0f64, 0.0f64);
    for c in 0..10u64 {
        let fam = Family {
            base: random_hessian_scaled(&s, 400 + c, 0.15),
            dirs: [0, 1, 2, 3, 4].map(|k| random_hessian_scaled(&s, 410 + 10 * c + k, 0.05)),
        };
        let pot = |a: f64, b: f64| KahlerPotential::new(&s, &fam.at(a, b)).unwrap();
        // vector fields along t ↦ φ(s0, t): ψ(t) = ψ₀ + tψ₁, χ(t) = χ₀ + t²χ₁
        let f = |k: u64| random_hessian_scaled(&s, 470 + 10 * c + k, 0.1);
        let (p0, p1, q0, q1) = (f(0), f(1), f(2), f(3));
        let psi = |t: f64| p0.axpy(t, &p1);
        let chi = |t: f64| q0.axpy(t * t, &q1);
        let phi_t = |t: f64| fam.dirs[1].axpy(s0, &fam.dirs[2]).axpy(3.0 * s0 * t * t, &fam.dirs[3]).axpy(3.0 * t * t, &fam.dirs[4]);
        let phi_s = |t: f64| fam.dirs[0].axpy(t, &fam.dirs[2]).axpy(t.powi(3), &fam.dirs[3]);
        let phi_st = |t: f64| fam.dirs[2].axpy(3.0 * t * t, &fam.dirs[3]);
        let pairing = |t: f64| dirichlet_pairing(&pot(s0, t), &psi(t), &chi(t));
        let p_mid = pot(s0, t0);
        let d_psi = covariant_derivative(&p_mid, &phi_t(t0), &psi(t0), &p1, &green).unwrap();
        let d_chi = covariant_derivative(&p_mid, &phi_t(t0), &chi(t0), &q1.scale(2.0 * t0), &green).unwrap();
        let rhs = dirichlet_pairing(&p_mid, d_psi.field(), &chi(t0)) + dirichlet_pairing(&p_mid, &psi(t0), d_chi.field());

        let mut compat = Vec::new();
        let mut torsion = Vec::new();
        for &h in &hs {
            let lhs = (pairing(t0 + h) - pairing(t0 - h)) / (2.0 * h);
            compat.push((lhs - rhs).abs());

            let grid = |b: f64| fam.at(s0 + h, t0 + b * h).sub(&fam.at(s0 - h, t0 + b * h)).scale(0.5 / h);
            let along_t = [pot(s0, t0 - h), pot(s0, t0), pot(s0, t0 + h)];
            let (a0, a1, a2) = (grid(-1.0), grid(0.0), grid(1.0));
            let dt_phi_s = covariant_derivative_sampled(
                [&along_t[0], &along_t[1], &along_t[2]],
                [&a0, &a1, &a2],
                h,
                &green,
            )
            .unwrap();
            let ds_phi_t = covariant_derivative(&p_mid, &phi_s(t0), &phi_t(t0), &phi_st(t0), &green).unwrap();
            let diff = dt_phi_s.field().sub(ds_phi_t.field());
            torsion.push(dirichlet_pairing(&p_mid, &diff, &diff).max(0.0).sqrt());
        }
        for series in [&compat, &torsion] {
            let fine = series[2];
            let h = hs[2];
            worst_ratio = worst_ratio.max(fine / CONNECTION_FLOOR.max(CONNECTION_C * h * h));
            min_order = min_order.min(order(series[1], series[2]));
        }
        if std::env::var_os("ACCEPTANCE_VERBOSE").is_some() {
            println!("  curve {c}: compatibility {compat:?}, torsion {torsion:?}");
        }
        worst_fine.0 = worst_fine.0.max(compat[2]);
        worst_fine.1 = worst_fine.1.max(torsion[2]);
    }
    let pass = worst_ratio <= 1.0 && min_order >= MIN_ORDER_2;
    outcome(
        pass,
        format!(
            "compatibility {:.3e}, torsion {:.3e} at h = 1e-2 (tol max({CONNECTION_FLOOR:.0e}, {CONNECTION_C}·h²)), min order {min_order:.2}",
            worst_fine.0, worst_fine.1
        ),
    )
}

fn curvature_oracle() -> Outcome {
    let s = spec(2, 16);
    let green = GreenOptions::default();
    let tol = ORACLE_FLOOR.max(ORACLE_C * ORACLE_H * ORACLE_H);
    let mut worst: f64 = 0.0;
    let mut min_order = f64::INFINITY;
    for i in 0..20u64 {
        let p = random_potential(&s, 500 + i, 0.25).unwrap();
        let x = random_tangent(&p, 2 * i + 5000, 0.3);
        let y = random_tangent(&p, 2 * i + 5001, 0.3);
        let k = sectional_with(MetricKind::Dirichlet, &p, &x, &y, &green).unwrap().value;
        let o = commutator_oracle(&p, &x, &y, ORACLE_H, &green).unwrap();
        worst = worst.max((o.extrapolated - k).abs());
        min_order = min_order.min(order((o.coarse - k).abs(), (o.fine - k).abs()));
    }
    outcome(
        worst <= tol && min_order >= MIN_ORDER_2,
        format!("20 planes, max |closed − Richardson| = {worst:.3e} (tol {tol:.0e}), min order {min_order:.2}"),
    )
}

fn bound_domination() -> Outcome {
    let s = spec(2, 16);
    let mut violations = 0;
    let mut tightest: f64 = 0.0;
    for i in 0..50u64 {
        let p = random_potential(&s, 600 + i, 0.3).unwrap();
        let x = random_tangent(&p, 3 * i + 6000, 0.3);
        let y = random_tangent(&p, 3 * i + 6001, 0.3);
        let k = sectional(MetricKind::Dirichlet, &p, &x, &y).unwrap().value;
        let b = dirichlet_bound(&p, &x).unwrap();
        if b < k.abs() {
            violations += 1;
        }
        tightest = tightest.max(k.abs() / b);
    }
    outcome(violations == 0, format!("50 triples, {violations} violations, max |K_D|/bound = {tightest:.3e}"))
}

fn geodesic_conservation() -> Outcome {
    let s = spec(2, 16);
    let p = random_potential(&s, 700, 0.2).unwrap();
    let v = random_tangent(&p, 701, 0.3);
    let curve = integrate_geodesic(&p, &v, 0.5, 1e-3).unwrap();
    let sp = &curve.diagnostics.speeds;
    let drift = sp.iter().map(|x| (x - sp[0]).abs()).fold(0.0, f64::max) / sp[0];

    let v2 = random_tangent(&p, 702, 0.5);
    let ends: Vec<ScalarField> = [4e-2, 2e-2, 1e-2]
        .iter()
        .map(|&dt| integrate_geodesic(&p, &v2, 0.2, dt).unwrap().potentials.pop().unwrap())
        .collect();
    let conv = order(ends[0].sub(&ends[1]).max_abs(), ends[1].sub(&ends[2]).max_abs());
    outcome(
        drift <= SPEED_DRIFT && conv >= MIN_ORDER_4,
        format!("speed drift {drift:.3e} over T=0.5, dt=1e-3 (tol {SPEED_DRIFT:.0e}); self-convergence order {conv:.2}"),
    )
}

fn geodesic_equation_equivalence() -> Outcome {
    let s = spec(2, 16);
    let p = random_potential(&s, 800, 0.2).unwrap();
    let v = random_tangent(&p, 801, 0.5);
    let res: Vec<f64> = [4e-2, 2e-2, 1e-2]
        .iter()
        .map(|&dt| {
            let c = integrate_geodesic_with(&p, &v, &GeodesicOptions::new(0.2, dt)).unwrap();
            geodesic_residual(MetricKind::Dirichlet, &c).unwrap().iter().map(|r| r.value).fold(0.0, f64::max)
        })
        .collect();
    let o = order(res[1], res[2]);
    outcome(
        o >= MIN_ORDER_2 && res[2] <= DIRICHLET_RESIDUAL,
        format!("residuals {:.3e} → {:.3e} → {:.3e}, order {o:.2} (final tol {DIRICHLET_RESIDUAL:.0e})", res[0], res[1], res[2]),
    )
}

fn kenergy_checks() -> Outcome {
    let mut worst_fd_ratio: f64 = 0.0;
    for i in 0..10u64 {
        let n = 1 + (i % 2) as usize;
        let s = spec(n, 16);
        let p = random_potential(&s, 900 + i, 0.25).unwrap();
        let psi = random_hessian_scaled(&s, 950 + i, 0.1);
        let f = kenergy_gradient(&p).unwrap();
        let exact = dirichlet_pairing(&p, f.field(), &psi);
        let h = KENERGY_FD_H;
        let nu = |t: f64| kenergy_entropy(&KahlerPotential::new(&s, &p.phi().axpy(t, &psi)).unwrap());
        let fd = (nu(h) - nu(-h)) / (2.0 * h);
        worst_fd_ratio = worst_fd_ratio.max((fd - exact).abs() / (KENERGY_FD_C * h * h * exact.abs().max(1.0)));
    }
    let mut min_second = f64::INFINITY;
    for i in 0..20u64 {
        let n = 1 + (i % 2) as usize;
        let s = spec(n, 16);
        let flat = KahlerPotential::flat(&s);
        let v = project_tangent(&flat, &random_field(&s, 990 + i, 2.0));
        min_second = min_second.min(kenergy_second_derivative(&flat, &v).unwrap());
    }
    let mut max_increase = f64::NEG_INFINITY;
    for (n, t_final) in [(1, 1.0), (2, 0.05)] {
        let s = spec(n, 16);
        let p = random_potential(&s, 980 + n as u64, 0.3).unwrap();
        let tr = pseudo_calabi_flow(&p, t_final, 1e-3).unwrap();
        max_increase = max_increase.max(tr.max_increase);
    }
    let pass = worst_fd_ratio <= 1.0 && min_second >= CONVEXITY_FLOOR && max_increase <= FLOW_STEP;
    outcome(
        pass,
        format!(
            "dν FD error / ({KENERGY_FD_C}·h²) = {worst_fd_ratio:.3e}; min second variation at csc {min_second:.3e}; max flow step increase {max_increase:.3e}"
        ),
    )
}

fn structural_identities() -> Outcome {
    let green = GreenOptions::default();
    let (mut mean, mut div, mut trip) = (0.0f64, 0.0f64, 0.0f64);
    for n in [1, 2] {
        let s = spec(n, 16);
        for i in 0..10u64 {
            let p = random_potential(&s, 1100 + i, 0.3).unwrap();
            let f = random_field(&s, 1200 + i, 3.0);
            let h = random_field(&s, 1300 + i, 3.0);
            let q = p.weighted_q(&f, &h);
            mean = mean.max(q.mean().abs() / q.rms().max(1.0));
            if n == 2 {
                let scale = c_tensor(&p, &f).max_abs();
                let d = c_divergence(&p, &f).iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
                div = div.max(d / scale);
            }
            let w = project_tangent(&p, &f).into_field();
            let sol = green_solve_detailed(&p, &laplacian(&p, &w), None, &green).unwrap();
            trip = trip.max(sol.field.sub(&w).max_abs() / w.max_abs());
        }
    }
    let pass = mean <= MEAN_ZERO && div <= DIVERGENCE_FREE && trip <= GREEN_ROUND_TRIP;
    outcome(pass, format!("mean-zero {mean:.3e}, divergence {div:.3e}, Green round-trip {trip:.3e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("dim-1 Dirichlet flatness", dim1_flatness),
        ("Calabi constant", calabi_constant),
        ("Mabuchi non-positivity", mabuchi_sign),
        ("connection axioms", connection_axioms),
        ("curvature oracle agreement", curvature_oracle),
        ("curvature bound domination", bound_domination),
        ("geodesic conservation", geodesic_conservation),
        ("geodesic equation equivalence", geodesic_equation_equivalence),
        ("K-energy gradient and convexity", kenergy_checks),
        ("structural identities", structural_identities),
    ];
    let filter: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if filter.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let r = run();
        println!(
            "criterion {:>2} {}: {} [{}] ({:.1}s)",
            i + 1,
            if r.pass { "PASS" } else { "FAIL" },
            name,
            r.detail,
            start.elapsed().as_secs_f64()
        );
        if !r.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
