//! Experiment harness behind the `kgeo` binary.
//!
//! Every command reads a [`RunConfig`], writes its artifacts into the output
//! directory and returns a process exit code: 0 on success, 1 when an
//! invariant or experiment fails, 2 when the configuration is unusable.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::curvature::{commutator_oracle, dirichlet_bound_detailed, fmt17, sectional_with};
use crate::dynamics::{
    geodesic_residual_with, integrate_geodesic_with, kenergy, kenergy_differential, kenergy_entropy,
    kenergy_gradient_with, path_energy, path_length, pseudo_calabi_flow_with, Curve, GeodesicOptions,
};
use crate::error::KahlerError;
use crate::kahler::{
    c_divergence, green_solve_detailed, laplacian, project_tangent, random_potential, random_tangent,
    GreenOptions, KahlerPotential,
};
use crate::metrics::{a_solve, dirichlet_pairing, MetricKind};
use crate::spectral::{build_spec, random_field, ScalarField, TorusSpec};

pub const SCHEMA: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

fn default_schema() -> u32 {
    SCHEMA
}
fn default_experiment() -> String {
    "run".into()
}
fn default_n() -> usize {
    1
}
fn default_grid() -> usize {
    16
}
fn default_samples() -> usize {
    5
}
fn default_amplitude() -> f64 {
    0.2
}
fn default_green_tolerance() -> f64 {
    1e-10
}
fn default_velocity_amplitude() -> f64 {
    0.5
}
fn default_t_final() -> f64 {
    0.2
}
fn default_dt() -> f64 {
    4e-2
}
fn default_flow_t_final() -> f64 {
    0.05
}
fn default_flow_dt() -> f64 {
    1e-3
}
fn default_refinements() -> usize {
    3
}
fn default_oracle_h() -> f64 {
    1e-2
}
fn default_kenergy_steps() -> usize {
    8
}
fn default_kinds() -> Vec<MetricKind> {
    MetricKind::ALL.to_vec()
}

/// Complete description of a run; equal configs give byte-identical artifacts.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default = "default_experiment")]
    pub experiment: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_grid", rename = "N")]
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of seeded potentials, planes or directions.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Sup-norm of the flat complex Hessian of the base potential.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Same normalization for initial velocities and path directions.
    #[serde(default = "default_velocity_amplitude")]
    pub velocity_amplitude: f64,
    /// Overrides every invariant tolerance of `check` when present.
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default = "default_green_tolerance")]
    pub green_tolerance: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Forward-Euler flow settings; explicit steps need `dt` well below `1/(π² k_max²)`.
    #[serde(default = "default_flow_t_final")]
    pub flow_t_final: f64,
    #[serde(default = "default_flow_dt")]
    pub flow_dt: f64,
    /// Number of geodesic runs, halving `dt` each time.
    #[serde(default = "default_refinements")]
    pub refinements: usize,
    #[serde(default = "default_oracle_h")]
    pub oracle_h: f64,
    #[serde(default = "default_kenergy_steps")]
    pub kenergy_steps: usize,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<MetricKind>,
    /// Mutation hook for the check suite; `"laplacian"` breaks self-adjointness.
    #[serde(default)]
    pub tamper: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<TorusSpec, String> {
        if self.schema != SCHEMA {
            return Err(format!("unsupported schema {}, expected {SCHEMA}", self.schema));
        }
        let spec = build_spec(self.n, self.grid).map_err(|e| e.to_string())?;
        let positive = [
            ("flow_t_final", self.flow_t_final),
            ("flow_dt", self.flow_dt),
            ("t_final", self.t_final),
            ("dt", self.dt),
            ("oracle_h", self.oracle_h),
            ("green_tolerance", self.green_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.velocity_amplitude.is_finite() && self.velocity_amplitude >= 0.0) {
            return Err(format!("velocity_amplitude must be non-negative, got {}", self.velocity_amplitude));
        }
        if !(self.amplitude >= 0.0 && self.amplitude < 0.5) {
            return Err(format!("amplitude must lie in [0, 0.5) for positivity, got {}", self.amplitude));
        }
        if let Some(t) = self.tolerance {
            if !(t.is_finite() && t >= 0.0) {
                return Err(format!("tolerance must be non-negative, got {t}"));
            }
        }
        if self.dt > self.t_final {
            return Err(format!("dt = {} exceeds t_final = {}", self.dt, self.t_final));
        }
        if self.samples == 0 || self.refinements == 0 || self.kenergy_steps == 0 {
            return Err("samples, refinements and kenergy_steps must be positive".into());
        }
        match self.tamper.as_deref() {
            None | Some("laplacian") => {}
            Some(other) => return Err(format!("unknown tamper target {other:?}")),
        }
        Ok(spec)
    }

    fn green(&self) -> GreenOptions {
        GreenOptions { tolerance: self.green_tolerance, ..GreenOptions::default() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "kgeo", version, about = "Dirichlet geometry of Kähler potentials on flat tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the invariant suite and write report.json.
    Check(CommonArgs),
    /// Sectional-curvature sweep over seeded planes.
    Curvature(CommonArgs),
    /// Geodesic shooting with dt refinement.
    Geodesic(CommonArgs),
    /// Pseudo-Calabi flow of a seeded potential.
    Flow(CommonArgs),
    /// Path energies, lengths and the K-energy of a seeded segment.
    Energy(CommonArgs),
}

impl Command {
    fn parts(&self) -> (&'static str, &CommonArgs) {
        match self {
            Command::Check(a) => ("check", a),
            Command::Curvature(a) => ("curvature", a),
            Command::Geodesic(a) => ("geodesic", a),
            Command::Flow(a) => ("flow", a),
            Command::Energy(a) => ("energy", a),
        }
    }
}

/// Load the config file (if any) and apply command-line overrides.
pub fn load_config(args: &CommonArgs) -> Result<RunConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(g) = args.grid {
        cfg.grid = g;
    }
    Ok(cfg)
}

/// Parse arguments, run the command and return the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, common) = cli.command.parts();
    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("kgeo: config error: {msg}");
            return EXIT_CONFIG;
        }
    };
    match run(name, &cfg, &common.out) {
        Ok(code) => code,
        Err(RunError::Config(msg)) => {
            eprintln!("kgeo: config error: {msg}");
            EXIT_CONFIG
        }
        Err(RunError::Failed(msg)) => {
            eprintln!("kgeo: {name} failed: {msg}");
            EXIT_FAILURE
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Failed(String),
}

impl From<KahlerError> for RunError {
    fn from(e: KahlerError) -> Self {
        match e {
            KahlerError::InvalidSpec(m) | KahlerError::Config(m) => RunError::Config(m),
            other => RunError::Failed(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Failed(e.to_string())
    }
}

/// Run a named command against a config, writing into `out`.
pub fn run(command: &str, cfg: &RunConfig, out: &Path) -> Result<i32, RunError> {
    let spec = cfg.validate().map_err(RunError::Config)?;
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let code = match command {
        "check" => cmd_check(cfg, &spec, out, &mut files)?,
        "curvature" => cmd_curvature(cfg, &spec, out, &mut files)?,
        "geodesic" => cmd_geodesic(cfg, &spec, out, &mut files)?,
        "flow" => cmd_flow(cfg, &spec, out, &mut files)?,
        "energy" => cmd_energy(cfg, &spec, out, &mut files)?,
        other => return Err(RunError::Config(format!("unknown command {other}"))),
    };
    let manifest = json!({
        "schema": SCHEMA,
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "files": files,
        "exit_code": code,
    });
    write_json(out, "manifest.json", &manifest, &mut Vec::new())?;
    Ok(code)
}

fn write_text(out: &Path, name: &str, text: &str, files: &mut Vec<String>) -> std::io::Result<()> {
    fs::write(out.join(name), text)?;
    files.push(name.to_string());
    Ok(())
}

fn write_json(out: &Path, name: &str, value: &serde_json::Value, files: &mut Vec<String>) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    write_text(out, name, &text, files)
}

fn csv(header: &str, rows: &[String]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(header);
    s.push('\n');
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    s
}

fn opt17(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

/// One invariant of the check suite.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn relative(a: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        a / scale
    } else {
        a
    }
}

fn tampered_laplacian(phi: &KahlerPotential, f: &ScalarField) -> ScalarField {
    // adds a first-order drift, which is not symmetric for e^u
    let spec = phi.spec();
    let fh = f.spectrum();
    let d = spec.dz(0);
    let sym: Vec<Complex64> = fh.iter().zip(d).map(|(a, b)| a * b * 2.0).collect();
    let drift = ScalarField::new(spec, spec.inverse_real(spec.real_part_spectrum(&sym)))
        .unwrap_or_else(|_| ScalarField::zeros(spec));
    laplacian(phi, f).add(&drift.scale(0.3))
}

fn check_suite(cfg: &RunConfig, spec: &TorusSpec) -> Result<Vec<InvariantResult>, RunError> {
    let green = cfg.green();
    let mut out = Vec::new();
    let mut push = |name: &str, value: f64, default_tol: f64| {
        let tolerance = cfg.tolerance.unwrap_or(default_tol);
        out.push(InvariantResult { name: name.into(), value, tolerance, pass: value.is_finite() && value <= tolerance });
    };
    let lap: fn(&KahlerPotential, &ScalarField) -> ScalarField = match cfg.tamper.as_deref() {
        Some("laplacian") => tampered_laplacian,
        _ => laplacian,
    };

    let mut adj: f64 = 0.0;
    let mut mean_zero: f64 = 0.0;
    let mut div: f64 = 0.0;
    let mut round_trip: f64 = 0.0;
    let mut kgrad: f64 = 0.0;
    for i in 0..cfg.samples as u64 {
        let s = cfg.seed.wrapping_add(i);
        let p = random_potential(spec, s, cfg.amplitude)?;
        let f = random_field(spec, s ^ 0x51, 3.0);
        let h = random_field(spec, s ^ 0xa2, 3.0);
        let a = p.integrate(&lap(&p, &f).zip(&h, |x, y| x * y));
        let b = p.integrate(&lap(&p, &h).zip(&f, |x, y| x * y));
        adj = adj.max(relative((a - b).abs(), a.abs().max(b.abs())));

        let q = p.weighted_q(&f, &h);
        mean_zero = mean_zero.max(relative(q.mean().abs(), q.rms()));

        let dv = c_divergence(&p, &f);
        let c_scale = crate::kahler::c_tensor(&p, &f).max_abs();
        let worst = dv.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        div = div.max(relative(worst, c_scale));

        let w = project_tangent(&p, &f).into_field();
        let v = laplacian(&p, &w);
        let sol = green_solve_detailed(&p, &v, None, &green)?;
        round_trip = round_trip.max(relative(sol.field.sub(&w).max_abs(), w.max_abs()));

        if i == 0 {
            let psi = random_tangent(&p, s ^ 0x7f, cfg.velocity_amplitude.max(1e-3)).into_field();
            let exact = kenergy_differential(&p, &psi);
            let (grad, _) = kenergy_gradient_with(&p, None, &green)?;
            let pairing = dirichlet_pairing(&p, grad.field(), &psi);
            kgrad = relative((exact - pairing).abs(), exact.abs());
        }
    }
    push("laplacian_self_adjoint", adj, 1e-9);
    push("q_mean_zero", mean_zero, 1e-9);
    push("c_divergence_free", div, 1e-9);
    push("green_round_trip", round_trip, 1e-8);
    push("kenergy_gradient_identity", kgrad, 1e-8);

    // curvature identities
    let s1 = build_spec(1, spec.grid_size())?;
    let mut flat1: f64 = 0.0;
    let mut calabi: f64 = 0.0;
    let mut mabuchi: f64 = f64::NEG_INFINITY;
    for i in 0..cfg.samples as u64 {
        let s = cfg.seed.wrapping_add(1000 + i);
        let p1 = random_potential(&s1, s, cfg.amplitude)?;
        let x1 = random_tangent(&p1, s ^ 1, 0.2);
        let y1 = random_tangent(&p1, s ^ 2, 0.2);
        flat1 = flat1.max(sectional_with(MetricKind::Dirichlet, &p1, &x1, &y1, &green)?.value.abs());
        let p = random_potential(spec, s, cfg.amplitude)?;
        let x = random_tangent(&p, s ^ 1, 0.2);
        let y = random_tangent(&p, s ^ 2, 0.2);
        let c = sectional_with(MetricKind::Calabi, &p, &x, &y, &green)?.value;
        calabi = calabi.max((c - 0.25 / spec.volume()).abs());
        mabuchi = mabuchi.max(sectional_with(MetricKind::Mabuchi, &p, &x, &y, &green)?.value);
    }
    push("dirichlet_dim1_flatness", flat1, 1e-7);
    push("calabi_constant", calabi, 0.0);
    push("mabuchi_nonpositive", mabuchi.max(0.0), 1e-12);

    // Q-solve consistency at the base point
    let p = random_potential(spec, cfg.seed, cfg.amplitude)?;
    let x = random_tangent(&p, cfg.seed ^ 3, 0.2).into_field();
    let sol = a_solve(&p, &x, &x, None, &green)?;
    push("a_solve_residual", sol.residual, 1e-8);
    Ok(out)
}

fn cmd_check(cfg: &RunConfig, spec: &TorusSpec, out: &Path, files: &mut Vec<String>) -> Result<i32, RunError> {
    let results = check_suite(cfg, spec)?;
    let failing: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    let pass = failing.is_empty();
    for r in &results {
        println!("{}: {} ({} vs {})", r.name, if r.pass { "pass" } else { "FAIL" }, fmt17(r.value), fmt17(r.tolerance));
    }
    let report = json!({
        "schema": SCHEMA,
        "command": "check",
        "n": spec.complex_dim(),
        "N": spec.grid_size(),
        "pass": pass,
        "failing": failing,
        "invariants": results,
    });
    write_json(out, "report.json", &report, files)?;
    Ok(if pass { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_curvature(cfg: &RunConfig, spec: &TorusSpec, out: &Path, files: &mut Vec<String>) -> Result<i32, RunError> {
    let green = cfg.green();
    let header = "seed,index,kind,n,N,value,bound,oracle,abs_diff,residual,error";
    let mut rows = Vec::new();
    let mut errors = 0usize;
    let mut violations = 0usize;
    let mut max_diff: f64 = 0.0;
    let mut max_abs = std::collections::BTreeMap::new();
    for index in 0..cfg.samples {
        let seed = cfg.seed.wrapping_add(index as u64);
        let p = random_potential(spec, seed, cfg.amplitude)?;
        let x = random_tangent(&p, seed ^ 0x11, cfg.velocity_amplitude);
        let y = random_tangent(&p, seed ^ 0x22, cfg.velocity_amplitude);
        for &kind in &cfg.kinds {
            let row = (|| -> crate::Result<(f64, Option<f64>, Option<f64>, f64)> {
                let r = sectional_with(kind, &p, &x, &y, &green)?;
                if kind != MetricKind::Dirichlet {
                    return Ok((r.value, None, None, r.residual));
                }
                let bound = dirichlet_bound_detailed(&p, &x, &green)?.bound;
                let oracle = if spec.complex_dim() == 2 {
                    Some(commutator_oracle(&p, &x, &y, cfg.oracle_h, &green)?.extrapolated)
                } else {
                    Some(0.0)
                };
                Ok((r.value, Some(bound), oracle, r.residual))
            })();
            match row {
                Ok((value, bound, oracle, residual)) => {
                    let diff = oracle.map(|o| (o - value).abs());
                    if let Some(d) = diff {
                        max_diff = max_diff.max(d);
                    }
                    if bound.is_some_and(|b| b < value.abs()) {
                        violations += 1;
                    }
                    let e: &mut f64 = max_abs.entry(kind.name()).or_insert(0.0);
                    *e = e.max(value.abs());
                    rows.push(format!(
                        "{seed},{index},{},{},{},{},{},{},{},{},",
                        kind.name(),
                        spec.complex_dim(),
                        spec.grid_size(),
                        fmt17(value),
                        opt17(bound),
                        opt17(oracle),
                        opt17(diff),
                        fmt17(residual)
                    ));
                }
                Err(e) => {
                    errors += 1;
                    let msg = e.to_string().replace([',', '\n'], ";");
                    rows.push(format!(
                        "{seed},{index},{},{},{},,,,,,{msg}",
                        kind.name(),
                        spec.complex_dim(),
                        spec.grid_size()
                    ));
                }
            }
        }
    }
    write_text(out, "curvature.csv", &csv(header, &rows), files)?;
    let summary = json!({
        "schema": SCHEMA,
        "command": "curvature",
        "rows": rows.len(),
        "errors": errors,
        "bound_violations": violations,
        "max_oracle_abs_diff": max_diff,
        "max_abs_value": max_abs,
    });
    write_json(out, "summary.json", &summary, files)?;
    Ok(if errors == 0 && violations == 0 { EXIT_OK } else { EXIT_FAILURE })
}

fn terminal_difference(a: &Curve, b: &Curve) -> f64 {
    let (pa, pb) = (a.potentials.last(), b.potentials.last());
    match (pa, pb) {
        (Some(x), Some(y)) => x.sub(y).max_abs(),
        _ => f64::NAN,
    }
}

fn order(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0).then(|| (coarse / fine).log2())
}

fn cmd_geodesic(cfg: &RunConfig, spec: &TorusSpec, out: &Path, files: &mut Vec<String>) -> Result<i32, RunError> {
    let green = cfg.green();
    let p = random_potential(spec, cfg.seed, cfg.amplitude)?;
    let v = random_tangent(&p, cfg.seed ^ 0x33, cfg.velocity_amplitude);
    let header = "dt,t,speed_dirichlet,residual_dirichlet_band_rms,residual_calabi_sup";
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut runs = Vec::new();
    let mut failure = None;
    for r in 0..cfg.refinements {
        let dt = cfg.dt / f64::powi(2.0, r as i32);
        let mut opts = GeodesicOptions::new(cfg.t_final, dt);
        opts.green = green.clone();
        let curve = match integrate_geodesic_with(&p, &v, &opts) {
            Ok(c) => c,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let dir = geodesic_residual_with(MetricKind::Dirichlet, &curve, &green)?;
        let cal = geodesic_residual_with(MetricKind::Calabi, &curve, &green)?;
        let speeds = &curve.diagnostics.speeds;
        for (i, &t) in curve.times.iter().enumerate() {
            let speed = speeds[i];
            let (rd, rc) = if i == 0 || i + 1 == curve.len() {
                (None, None)
            } else {
                (Some(dir[i - 1].value), Some(cal[i - 1].value))
            };
            rows.push(format!("{},{},{},{},{}", fmt17(dt), fmt17(t), fmt17(speed), opt17(rd), opt17(rc)));
        }
        let s0 = speeds[0];
        let drift = speeds.iter().map(|s| (s - s0).abs()).fold(0.0, f64::max);
        runs.push(json!({
            "dt": dt,
            "steps": speeds.len() - 1,
            "speed_relative_drift": relative(drift, s0),
            "max_residual_dirichlet": dir.iter().map(|r| r.value).fold(0.0, f64::max),
            "max_residual_calabi": cal.iter().map(|r| r.value).fold(0.0, f64::max),
            "solver_iterations": curve.diagnostics.solver_iterations,
            "max_gauge_shift": curve.diagnostics.max_gauge_shift,
        }));
        curves.push(curve);
    }
    let diffs: Vec<f64> = curves.windows(2).map(|w| terminal_difference(&w[0], &w[1])).collect();
    let conv = if diffs.len() >= 2 { order(diffs[diffs.len() - 2], diffs[diffs.len() - 1]) } else { None };
    let res: Vec<f64> =
        runs.iter().map(|r| r["max_residual_dirichlet"].as_f64().unwrap_or(f64::NAN)).collect();
    let res_order = if res.len() >= 2 { order(res[res.len() - 2], res[res.len() - 1]) } else { None };
    write_text(out, "geodesic.csv", &csv(header, &rows), files)?;
    let summary = json!({
        "schema": SCHEMA,
        "command": "geodesic",
        "runs": runs,
        "terminal_differences": diffs,
        "convergence_order": conv,
        "residual_order": res_order,
        "failure": failure,
    });
    write_json(out, "summary.json", &summary, files)?;
    Ok(if failure.is_none() { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_flow(cfg: &RunConfig, spec: &TorusSpec, out: &Path, files: &mut Vec<String>) -> Result<i32, RunError> {
    let p = random_potential(spec, cfg.seed, cfg.amplitude)?;
    let (trace, failure) = match pseudo_calabi_flow_with(&p, cfg.flow_t_final, cfg.flow_dt, &cfg.green()) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let header = "t,kenergy_rel_flat,gradient_norm_dirichlet,solver_iterations";
    let mut monotone = true;
    let mut rows = Vec::new();
    if let Some(tr) = &trace {
        for i in 0..tr.times.len() {
            rows.push(format!(
                "{},{},{},{}",
                fmt17(tr.times[i]),
                fmt17(tr.kenergy[i]),
                fmt17(tr.gradient_norm[i]),
                tr.solver_iterations[i]
            ));
        }
        monotone = tr.max_increase <= 1e-10;
    }
    write_text(out, "flow.csv", &csv(header, &rows), files)?;
    let summary = json!({
        "schema": SCHEMA,
        "command": "flow",
        "steps": rows.len().saturating_sub(1),
        "kenergy_initial": trace.as_ref().and_then(|t| t.kenergy.first().copied()),
        "kenergy_final": trace.as_ref().and_then(|t| t.kenergy.last().copied()),
        "gradient_norm_initial": trace.as_ref().and_then(|t| t.gradient_norm.first().copied()),
        "gradient_norm_final": trace.as_ref().and_then(|t| t.gradient_norm.last().copied()),
        "max_increase": trace.as_ref().map(|t| t.max_increase),
        "monotone": monotone,
        "failure": failure,
    });
    write_json(out, "summary.json", &summary, files)?;
    Ok(if failure.is_none() && monotone { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_energy(cfg: &RunConfig, spec: &TorusSpec, out: &Path, files: &mut Vec<String>) -> Result<i32, RunError> {
    let p = random_potential(spec, cfg.seed, cfg.amplitude)?;
    let psi = random_tangent(&p, cfg.seed ^ 0x44, cfg.velocity_amplitude).into_field();
    let samples = ((cfg.t_final / cfg.dt).round() as usize).max(1) + 1;
    let curve = Curve::linear(p.phi(), &psi, 0.0, cfg.t_final, samples);
    let header = "kind,samples,t_final,energy,length";
    let mut rows = Vec::new();
    let mut values = serde_json::Map::new();
    for &kind in &cfg.kinds {
        let e = path_energy(kind, &curve)?;
        let l = path_length(kind, &curve)?;
        rows.push(format!("{},{samples},{},{},{}", kind.name(), fmt17(cfg.t_final), fmt17(e), fmt17(l)));
        values.insert(kind.name().into(), json!({"energy": e, "length": l}));
    }
    write_text(out, "energy.csv", &csv(header, &rows), files)?;
    let closed = kenergy_entropy(&p);
    let quad = kenergy(&p, cfg.kenergy_steps)?;
    let summary = json!({
        "schema": SCHEMA,
        "command": "energy",
        "paths": values,
        "kenergy_closed_form": closed,
        "kenergy_quadrature": quad,
        "kenergy_abs_diff": (closed - quad).abs(),
    });
    write_json(out, "summary.json", &summary, files)?;
    Ok(EXIT_OK)
}
