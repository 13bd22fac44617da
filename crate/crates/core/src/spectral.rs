//! Fourier calculus on the flat torus `C^n / (Z + iZ)^n`.
//!
//! Real axes are ordered `(x1, y1, x2, y2)` and nodes are stored row-major with
//! axis 0 slowest. Node `m` along an axis sits at `m / N`. The background metric
//! is `g_{jk̄} = δ_{jk} / 2`, so the flat volume form is Lebesgue measure and the
//! torus has unit volume.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{KahlerError, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

struct Inner {
    n: usize,
    grid: usize,
    dim: usize,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<i64>,
    dz: Vec<Vec<Complex64>>,
    mask: Vec<bool>,
    neg: Vec<usize>,
    flat_symbol: Vec<f64>,
}

/// Discretized flat complex torus of complex dimension 1 or 2.
#[derive(Clone)]
pub struct TorusSpec {
    inner: Arc<Inner>,
}

impl fmt::Debug for TorusSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusSpec")
            .field("n", &self.inner.n)
            .field("grid", &self.inner.grid)
            .finish()
    }
}

impl PartialEq for TorusSpec {
    fn eq(&self, other: &Self) -> bool {
        self.inner.n == other.inner.n && self.inner.grid == other.inner.grid
    }
}

/// Build a torus with complex dimension `n` and `grid` nodes per real axis.
pub fn build_spec(n: usize, grid: usize) -> Result<TorusSpec> {
    TorusSpec::new(n, grid)
}

impl TorusSpec {
    pub fn new(n: usize, grid: usize) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(KahlerError::InvalidSpec(format!(
                "complex dimension must be 1 or 2, got {n}"
            )));
        }
        if grid < 16 || !grid.is_power_of_two() {
            return Err(KahlerError::InvalidSpec(format!(
                "grid size must be a power of two >= 16, got {grid}"
            )));
        }
        let dim = 2 * n;
        let len = grid.pow(dim as u32);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid);
        let inv = planner.plan_fft_inverse(grid);
        let half = (grid / 2) as i64;
        let wavenumbers: Vec<i64> = (0..grid as i64)
            .map(|m| if m < half { m } else { m - grid as i64 })
            .collect();

        let mut dz = vec![vec![Complex64::default(); len]; n];
        let mut mask = vec![false; len];
        let mut neg = vec![0usize; len];
        let mut flat_symbol = vec![0.0; len];
        let mut digits = vec![0usize; dim];
        for idx in 0..len {
            let mut rem = idx;
            for a in (0..dim).rev() {
                digits[a] = rem % grid;
                rem /= grid;
            }
            let k: Vec<i64> = digits.iter().map(|&m| wavenumbers[m]).collect();
            mask[idx] = k.iter().all(|&ka| 3 * ka.unsigned_abs() < grid as u64);
            let mut nidx = 0;
            for &m in &digits {
                nidx = nidx * grid + (grid - m) % grid;
            }
            neg[idx] = nidx;
            // Nyquist wavenumbers carry a zero derivative symbol.
            let d = |a: usize| -> f64 {
                if k[a].abs() == half {
                    0.0
                } else {
                    TWO_PI * k[a] as f64
                }
            };
            for j in 0..n {
                let (dx, dy) = (d(2 * j), d(2 * j + 1));
                // ½(∂x − i∂y) with ∂ ↦ i·2πk
                dz[j][idx] = Complex64::new(0.5 * dy, 0.5 * dx);
                flat_symbol[idx] += 2.0 * dz[j][idx].norm_sqr();
            }
        }
        Ok(TorusSpec {
            inner: Arc::new(Inner {
                n,
                grid,
                dim,
                len,
                fwd,
                inv,
                wavenumbers,
                dz,
                mask,
                neg,
                flat_symbol,
            }),
        })
    }

    pub fn complex_dim(&self) -> usize {
        self.inner.n
    }

    pub fn grid_size(&self) -> usize {
        self.inner.grid
    }

    pub fn real_dim(&self) -> usize {
        self.inner.dim
    }

    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        1.0
    }

    /// Integer frequencies per axis in FFT order, covering `[-N/2, N/2)`.
    pub fn wavenumbers(&self) -> &[i64] {
        &self.inner.wavenumbers
    }

    /// Symbol of `∂/∂z^j`.
    pub fn dz(&self, j: usize) -> &[Complex64] {
        &self.inner.dz[j]
    }

    /// Modes kept by the 2/3 rule.
    pub fn mask(&self) -> &[bool] {
        &self.inner.mask
    }

    /// Index of the mode `-k`.
    pub fn neg_index(&self) -> &[usize] {
        &self.inner.neg
    }

    /// Symbol of `-Δ_0` scaled by the flat density, i.e. `2 Σ_j |dz_j|²`.
    pub fn flat_symbol(&self) -> &[f64] {
        &self.inner.flat_symbol
    }

    /// Coordinates of a node in `[0,1)^{2n}`.
    pub fn coords(&self, idx: usize) -> [f64; 4] {
        let g = self.inner.grid;
        let mut out = [0.0; 4];
        let mut rem = idx;
        for a in (0..self.inner.dim).rev() {
            out[a] = (rem % g) as f64 / g as f64;
            rem /= g;
        }
        out
    }

    /// Wavenumber vector of a spectral index.
    pub fn wavevector(&self, idx: usize) -> [i64; 4] {
        let g = self.inner.grid;
        let mut out = [0; 4];
        let mut rem = idx;
        for a in (0..self.inner.dim).rev() {
            out[a] = self.inner.wavenumbers[rem % g];
            rem /= g;
        }
        out
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let g = self.inner.grid;
        let dim = self.inner.dim;
        let len = data.len();
        debug_assert_eq!(len, self.inner.len);
        let fft = if inverse {
            &self.inner.inv
        } else {
            &self.inner.fwd
        };
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut lines = vec![Complex64::default(); len];
        for axis in 0..dim {
            let stride = g.pow((dim - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = stride * g;
            let mut p = 0;
            for outer in (0..len).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for m in 0..g {
                        lines[p] = data[base + m * stride];
                        p += 1;
                    }
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            let mut p = 0;
            for outer in (0..len).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for m in 0..g {
                        data[base + m * stride] = lines[p];
                        p += 1;
                    }
                }
            }
        }
        if inverse {
            let s = 1.0 / len as f64;
            data.iter_mut().for_each(|z| *z *= s);
        }
    }

    /// Unnormalized forward transform of real node values.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    pub fn forward_complex(&self, mut data: Vec<Complex64>) -> Vec<Complex64> {
        self.transform(&mut data, false);
        data
    }

    /// Inverse transform (divides by the node count).
    pub fn inverse(&self, mut data: Vec<Complex64>) -> Vec<Complex64> {
        self.transform(&mut data, true);
        data
    }

    pub fn inverse_real(&self, data: Vec<Complex64>) -> Vec<f64> {
        self.inverse(data).into_iter().map(|z| z.re).collect()
    }

    /// Spectrum of the real part of the field whose spectrum is `x`.
    pub fn real_part_spectrum(&self, x: &[Complex64]) -> Vec<Complex64> {
        let neg = &self.inner.neg;
        (0..x.len()).map(|i| 0.5 * (x[i] + x[neg[i]].conj())).collect()
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Real function on the grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    spec: TorusSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: &TorusSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(KahlerError::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KahlerError::NonFinite("scalar field"));
        }
        Ok(ScalarField { spec: spec.clone(), values })
    }

    pub(crate) fn from_vec(spec: &TorusSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        ScalarField { spec: spec.clone(), values }
    }

    pub fn zeros(spec: &TorusSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: &TorusSpec, c: f64) -> Self {
        ScalarField { spec: spec.clone(), values: vec![c; spec.len()] }
    }

    /// Sample `f` at every node; `f` receives `(x1, y1, x2, y2)`.
    pub fn from_fn(spec: &TorusSpec, f: impl Fn(&[f64; 4]) -> f64) -> Self {
        let values = (0..spec.len()).map(|i| f(&spec.coords(i))).collect();
        ScalarField { spec: spec.clone(), values }
    }

    pub fn spec(&self) -> &TorusSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Lebesgue mean.
    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.values) / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn rms(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        (pairwise_sum(&sq) / sq.len() as f64).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip(other, |a, b| a - b)
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &ScalarField) -> Self {
        self.zip(other, |a, b| a + s * b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField { spec: self.spec.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.values.len(), other.values.len(), "grid mismatch");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        ScalarField { spec: self.spec.clone(), values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.spec.forward(&self.values)
    }

    pub fn dealias(&self) -> Self {
        dealias(&self.spec, self)
    }

    /// Largest deviation from the Lebesgue mean.
    pub fn oscillation(&self) -> f64 {
        let m = self.mean();
        self.values.iter().fold(0.0, |acc, v| acc.max((v - m).abs()))
    }
}

/// Per-node `n × n` complex matrices, stored as one array per entry `(j, k)`.
#[derive(Clone, Debug)]
pub struct HermitianMatrixField {
    n: usize,
    entries: Vec<Vec<Complex64>>,
}

impl HermitianMatrixField {
    pub(crate) fn from_entries(n: usize, entries: Vec<Vec<Complex64>>) -> Self {
        debug_assert_eq!(entries.len(), n * n);
        HermitianMatrixField { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries[0].is_empty()
    }

    pub fn entry(&self, j: usize, k: usize) -> &[Complex64] {
        &self.entries[j * self.n + k]
    }

    pub fn at(&self, j: usize, k: usize, node: usize) -> Complex64 {
        self.entries[j * self.n + k][node]
    }

    /// 2×2 matrix at a node, zero-padded when `n = 1`.
    pub fn local(&self, node: usize) -> [[Complex64; 2]; 2] {
        let mut m = [[Complex64::default(); 2]; 2];
        for j in 0..self.n {
            for k in 0..self.n {
                m[j][k] = self.at(j, k, node);
            }
        }
        m
    }

    /// Largest `|A_{jk} - conj(A_{kj})|` over all nodes.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.n {
            for k in 0..self.n {
                for (a, b) in self.entry(j, k).iter().zip(self.entry(k, j)) {
                    worst = worst.max((a - b.conj()).norm());
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.iter())
            .fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// `f_{jk̄} = ∂_j ∂̄_k f`, Hermitian by construction.
pub fn complex_hessian(spec: &TorusSpec, f: &ScalarField) -> HermitianMatrixField {
    hessian_from_spectrum(spec, &f.spectrum())
}

pub(crate) fn hessian_from_spectrum(spec: &TorusSpec, fh: &[Complex64]) -> HermitianMatrixField {
    let n = spec.complex_dim();
    let mut entries = vec![Vec::new(); n * n];
    for j in 0..n {
        for k in j..n {
            let (dj, dk) = (spec.dz(j), spec.dz(k));
            let sym: Vec<Complex64> = fh
                .iter()
                .zip(dj.iter().zip(dk))
                .map(|(f, (a, b))| f * a * (-b.conj()))
                .collect();
            let mut e = spec.inverse(sym);
            if j == k {
                e.iter_mut().for_each(|z| z.im = 0.0);
            } else {
                entries[k * n + j] = e.iter().map(|z| z.conj()).collect();
            }
            entries[j * n + k] = e;
        }
    }
    HermitianMatrixField::from_entries(n, entries)
}

/// Holomorphic gradient `∂_j f` for each `j`.
pub fn gradient(spec: &TorusSpec, f: &ScalarField) -> Vec<Vec<Complex64>> {
    gradient_from_spectrum(spec, &f.spectrum())
}

pub(crate) fn gradient_from_spectrum(spec: &TorusSpec, fh: &[Complex64]) -> Vec<Vec<Complex64>> {
    (0..spec.complex_dim())
        .map(|j| {
            let sym = fh.iter().zip(spec.dz(j)).map(|(f, d)| f * d).collect();
            spec.inverse(sym)
        })
        .collect()
}

/// Real-axis gradient `∂_{x_a} f` for each of the `2n` axes.
pub fn real_gradient(spec: &TorusSpec, f: &ScalarField) -> Vec<ScalarField> {
    let fh = f.spectrum();
    let half = (spec.grid_size() / 2) as i64;
    (0..spec.real_dim())
        .map(|a| {
            let sym = fh
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    let k = spec.wavevector(i)[a];
                    if k.abs() == half {
                        Complex64::default()
                    } else {
                        z * Complex64::new(0.0, TWO_PI * k as f64)
                    }
                })
                .collect();
            ScalarField::from_vec(spec, spec.inverse_real(sym))
        })
        .collect()
}

/// Flat real Laplacian `∇² f`.
pub fn real_laplacian(spec: &TorusSpec, f: &ScalarField) -> ScalarField {
    let fh = f.spectrum();
    let sym = fh
        .iter()
        .zip(spec.flat_symbol())
        .map(|(z, s)| -2.0 * s * z)
        .collect();
    ScalarField::from_vec(spec, spec.inverse_real(sym))
}

/// `(1/N^{2n}) Σ f · density`, rejecting non-positive densities.
pub fn integrate(spec: &TorusSpec, f: &ScalarField, density: &ScalarField) -> Result<f64> {
    if f.values.len() != spec.len() || density.values.len() != spec.len() {
        return Err(KahlerError::GridMismatch);
    }
    let min = density.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        return Err(KahlerError::NonPositiveDensity { min });
    }
    Ok(weighted_mean(&f.values, &density.values))
}

pub(crate) fn weighted_mean(f: &[f64], w: &[f64]) -> f64 {
    let prod: Vec<f64> = f.iter().zip(w).map(|(a, b)| a * b).collect();
    pairwise_sum(&prod) / prod.len() as f64
}

/// Zero every mode outside the 2/3-rule band.
pub fn dealias(spec: &TorusSpec, f: &ScalarField) -> ScalarField {
    let mut fh = f.spectrum();
    mask_in_place(spec, &mut fh);
    ScalarField::from_vec(spec, spec.inverse_real(fh))
}

pub(crate) fn mask_in_place(spec: &TorusSpec, fh: &mut [Complex64]) {
    for (z, &keep) in fh.iter_mut().zip(spec.mask()) {
        if !keep {
            *z = Complex64::default();
        }
    }
}

/// Seeded band-limited random field with spectral amplitude `(1+|k|)^(-decay)`,
/// zero Lebesgue mean and unit root-mean-square.
pub fn random_field(spec: &TorusSpec, seed: u64, decay: f64) -> ScalarField {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut fh = vec![Complex64::default(); spec.len()];
    for (i, z) in fh.iter_mut().enumerate() {
        if !spec.mask()[i] {
            continue;
        }
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        let k = spec.wavevector(i);
        let kmag = k.iter().map(|&a| (a * a) as f64).sum::<f64>().sqrt();
        if i != 0 {
            *z = Complex64::new(re, im) * (1.0 + kmag).powf(-decay);
        }
    }
    let sym = spec.real_part_spectrum(&fh);
    let f = ScalarField::from_vec(spec, spec.inverse_real(sym));
    let r = f.rms();
    if r > 0.0 {
        f.scale(1.0 / r)
    } else {
        f
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    n: usize,
    #[serde(rename = "N")]
    grid: usize,
    role: &'a str,
}

/// Write `stem.bin` (little-endian f64, row-major) and `stem.json`.
pub fn dump_field(stem: &Path, f: &ScalarField, role: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(stem.with_extension("bin"))?);
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let side = Sidecar { n: f.spec.complex_dim(), grid: f.spec.grid_size(), role };
    let json = serde_json::to_string(&side).map_err(|e| KahlerError::Config(e.to_string()))?;
    std::fs::write(stem.with_extension("json"), json + "\n")?;
    Ok(())
}

/// Read a field written by [`dump_field`], returning it with its role.
pub fn load_field(stem: &Path) -> Result<(ScalarField, String)> {
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(
        stem.with_extension("json"),
    )?)
    .map_err(|e| KahlerError::Config(e.to_string()))?;
    let n = side["n"].as_u64().ok_or_else(|| KahlerError::Config("missing n".into()))? as usize;
    let grid = side["N"].as_u64().ok_or_else(|| KahlerError::Config("missing N".into()))? as usize;
    let role = side["role"].as_str().unwrap_or_default().to_string();
    let spec = TorusSpec::new(n, grid)?;
    let bytes = std::fs::read(stem.with_extension("bin"))?;
    if bytes.len() != 8 * spec.len() {
        return Err(KahlerError::GridMismatch);
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((ScalarField::new(&spec, values)?, role))
}
