//! Flat spin tori `R^n / L Z^n`, spinor fields on sampling grids and the
//! Dirac operator as a Fourier multiplier.
//!
//! Grid point `j` sits at lattice coordinates `s = j / N` (per axis), i.e. at
//! `x = L s`. A spin structure is an offset `delta` in `{0, 1/2}^n`: spinor
//! modes are `exp(2 pi i (b + delta) . s)` with `b` integer, whose Euclidean
//! frequency is `k = L^{-T} (b + delta)`. Fields store physical samples; the
//! twist is removed by demodulation before transforming, so no phase
//! bookkeeping happens on the grid.
//!
//! Frequencies follow FFT order; index `N/2` is taken as `b = -N/2`. With
//! `delta_j = 1/2` the grid's modes are symmetric about zero, with
//! `delta_j = 0` the Nyquist plane is the one place where `J`-equivariance of
//! the multiplier is not exact (band-limited fields never touch it).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::clifford::{make_fiber, Spinor, SpinorFiber, FIBER_DIM};
use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Multidimensional FFT over a row-major grid (last axis fastest).
struct GridFft {
    dims: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl GridFft {
    fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        GridFft {
            dims: dims.to_vec(),
            forward: dims.iter().map(|&d| planner.plan_fft_forward(d)).collect(),
            inverse: dims.iter().map(|&d| planner.plan_fft_inverse(d)).collect(),
        }
    }

    /// In-place unnormalized transform of one scalar grid.
    fn process(&self, data: &mut [Complex64], inverse: bool) {
        let plans = if inverse { &self.inverse } else { &self.forward };
        let total: usize = self.dims.iter().product();
        debug_assert_eq!(data.len(), total);
        let mut stride = 1;
        let mut line = Vec::new();
        for axis in (0..self.dims.len()).rev() {
            let len = self.dims[axis];
            let plan = &plans[axis];
            if stride == 1 {
                plan.process(data);
            } else {
                line.resize(len, Complex64::default());
                let block = stride * len;
                for base in (0..total).step_by(block) {
                    for offset in 0..stride {
                        let start = base + offset;
                        for (i, v) in line.iter_mut().enumerate() {
                            *v = data[start + i * stride];
                        }
                        plan.process(&mut line);
                        for (i, v) in line.iter().enumerate() {
                            data[start + i * stride] = *v;
                        }
                    }
                }
            }
            stride *= len;
        }
    }
}

/// Integer frequency for FFT index `idx` on an axis of length `len`.
pub fn frequency_index(idx: usize, len: usize) -> i64 {
    if idx < len / 2 {
        idx as i64
    } else {
        idx as i64 - len as i64
    }
}

/// A flat torus with a spin structure and a sampling grid.
#[derive(Clone)]
pub struct TorusSpinGeometry {
    n: usize,
    lattice: DMatrix<f64>,
    dual: DMatrix<f64>,
    delta: Vec<f64>,
    grid: Vec<usize>,
    fiber: SpinorFiber,
    fft: Arc<GridFft>,
    /// Per grid index: spin frequency `L^{-T}(b + delta)`, row-major `n` entries.
    spin_freqs: Vec<f64>,
    /// Per grid index: scalar frequency `L^{-T} b`.
    scalar_freqs: Vec<f64>,
    /// `exp(2 pi i delta . s)` per grid point.
    modulation: Vec<Complex64>,
}

impl fmt::Debug for TorusSpinGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusSpinGeometry")
            .field("n", &self.n)
            .field("lattice", &self.lattice)
            .field("delta", &self.delta)
            .field("grid", &self.grid)
            .finish()
    }
}

impl PartialEq for TorusSpinGeometry {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.lattice == other.lattice
            && self.delta == other.delta
            && self.grid == other.grid
    }
}

impl TorusSpinGeometry {
    /// `lattice` holds the basis vectors as columns.
    pub fn new(lattice: DMatrix<f64>, delta: &[f64], grid: &[usize]) -> Result<Self> {
        let n = lattice.nrows();
        let fiber = make_fiber(n)?;
        if lattice.ncols() != n || delta.len() != n || grid.len() != n {
            return Err(Error::InvalidGeometry(format!(
                "lattice {}x{}, {} offsets and {} grid sizes for n = {n}",
                lattice.nrows(),
                lattice.ncols(),
                delta.len(),
                grid.len()
            )));
        }
        if let Some(d) = delta.iter().find(|&&d| d != 0.0 && d != 0.5) {
            return Err(Error::InvalidGeometry(format!("spin offset {d} not in {{0, 1/2}}")));
        }
        if let Some(g) = grid.iter().find(|&&g| g < 8 || g % 2 != 0) {
            return Err(Error::InvalidGeometry(format!("grid size {g} must be even and >= 8")));
        }
        let det = lattice.determinant();
        if !det.is_finite() || det.abs() < 1e-12 {
            return Err(Error::InvalidGeometry("lattice is singular".into()));
        }
        let dual = lattice
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidGeometry("lattice is singular".into()))?
            .transpose();
        let total: usize = grid.iter().product();
        let mut spin_freqs = Vec::with_capacity(total * n);
        let mut scalar_freqs = Vec::with_capacity(total * n);
        let mut modulation = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let b: Vec<f64> = (0..n).map(|a| frequency_index(idx[a], grid[a]) as f64).collect();
            for r in 0..n {
                let mut ks = 0.0;
                let mut kb = 0.0;
                for c in 0..n {
                    ks += dual[(r, c)] * (b[c] + delta[c]);
                    kb += dual[(r, c)] * b[c];
                }
                spin_freqs.push(ks);
                scalar_freqs.push(kb);
            }
            let phase: f64 = (0..n).map(|a| delta[a] * idx[a] as f64 / grid[a] as f64).sum();
            modulation.push(Complex64::from_polar(1.0, TWO_PI * phase));
            advance(&mut idx, grid);
        }
        Ok(TorusSpinGeometry {
            n,
            lattice,
            dual,
            delta: delta.to_vec(),
            grid: grid.to_vec(),
            fiber,
            fft: Arc::new(GridFft::new(grid)),
            spin_freqs,
            scalar_freqs,
            modulation,
        })
    }

    /// Unit cube lattice.
    pub fn unit(n: usize, delta: &[f64], grid: &[usize]) -> Result<Self> {
        Self::new(DMatrix::identity(n, n), delta, grid)
    }

    /// Same torus and spin structure on another grid.
    pub fn with_grid(&self, grid: &[usize]) -> Result<Self> {
        Self::new(self.lattice.clone(), &self.delta, grid)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lattice(&self) -> &DMatrix<f64> {
        &self.lattice
    }

    /// `L^{-T}`.
    pub fn dual(&self) -> &DMatrix<f64> {
        &self.dual
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn fiber(&self) -> &SpinorFiber {
        &self.fiber
    }

    pub fn num_points(&self) -> usize {
        self.grid.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.lattice.determinant().abs()
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.num_points() as f64
    }

    pub fn is_trivial_spin(&self) -> bool {
        self.delta.iter().all(|&d| d == 0.0)
    }

    /// Multi-index of flat grid index `p`.
    pub fn grid_index(&self, mut p: usize) -> Vec<usize> {
        let mut idx = vec![0; self.n];
        for a in (0..self.n).rev() {
            idx[a] = p % self.grid[a];
            p /= self.grid[a];
        }
        idx
    }

    /// Flat index of a (wrapped) multi-index.
    pub fn flat_index(&self, idx: &[i64]) -> usize {
        idx.iter().zip(&self.grid).fold(0, |acc, (&i, &g)| {
            acc * g + i.rem_euclid(g as i64) as usize
        })
    }

    /// Lattice coordinates `s` of grid point `p`.
    pub fn lattice_coords(&self, p: usize) -> Vec<f64> {
        self.grid_index(p)
            .iter()
            .zip(&self.grid)
            .map(|(&i, &g)| i as f64 / g as f64)
            .collect()
    }

    /// Physical position `x = L s`.
    pub fn to_physical(&self, s: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| (0..self.n).map(|c| self.lattice[(r, c)] * s[c]).sum())
            .collect()
    }

    /// Lattice coordinates `s = L^{-1} x`.
    pub fn to_lattice(&self, x: &[f64]) -> Vec<f64> {
        // L^{-1} = dual^T
        (0..self.n)
            .map(|r| (0..self.n).map(|c| self.dual[(c, r)] * x[c]).sum())
            .collect()
    }

    pub fn point(&self, p: usize) -> Vec<f64> {
        self.to_physical(&self.lattice_coords(p))
    }

    /// Euclidean frequency of spinor mode `b`: `L^{-T}(b + delta)`.
    pub fn mode_frequency(&self, b: &[i64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                (0..self.n)
                    .map(|c| self.dual[(r, c)] * (b[c] as f64 + self.delta[c]))
                    .sum()
            })
            .collect()
    }

    fn spin_freq(&self, p: usize) -> &[f64] {
        &self.spin_freqs[p * self.n..(p + 1) * self.n]
    }

    fn scalar_freq(&self, p: usize) -> &[f64] {
        &self.scalar_freqs[p * self.n..(p + 1) * self.n]
    }

    /// Grid spacing: the largest distance between neighbouring samples.
    pub fn grid_spacing(&self) -> f64 {
        (0..self.n)
            .map(|c| {
                let col: f64 = (0..self.n).map(|r| self.lattice[(r, c)].powi(2)).sum();
                col.sqrt() / self.grid[c] as f64
            })
            .fold(0.0, f64::max)
    }

    /// All closed-form flat eigenvalues `+-2 pi |b + delta|` with modulus at
    /// most `max_abs`, ascending, one entry per complex dimension.
    pub fn flat_spectrum(&self, max_abs: f64) -> Vec<f64> {
        let reach = self.lattice.norm() * max_abs / TWO_PI;
        let radius = reach.ceil() as i64 + 1;
        let mut values = Vec::new();
        let mut b = vec![-radius; self.n];
        loop {
            let k = self.mode_frequency(&b);
            let lam = TWO_PI * k.iter().map(|v| v * v).sum::<f64>().sqrt();
            if lam <= max_abs {
                values.push(lam);
                values.push(-lam);
            }
            let mut a = self.n;
            loop {
                if a == 0 {
                    values.sort_by(f64::total_cmp);
                    return values;
                }
                a -= 1;
                b[a] += 1;
                if b[a] <= radius {
                    break;
                }
                b[a] = -radius;
            }
        }
    }

    /// Distance from `lambda` to the flat spectrum.
    pub fn distance_to_flat_spectrum(&self, lambda: f64) -> f64 {
        self.flat_spectrum(lambda.abs() + 2.0 * TWO_PI)
            .iter()
            .map(|v| (v - lambda).abs())
            .fold(f64::INFINITY, f64::min)
    }

    fn check(&self, field: &SpinorField) -> Result<()> {
        if field.grid != self.grid {
            Err(Error::GeometryMismatch)
        } else {
            Ok(())
        }
    }

    /// Forward transform of a spinor field into mode coefficients
    /// (normalized so that `psi(s) = mod(s) sum_b c_b exp(2 pi i b.s)`).
    pub fn spinor_coefficients(&self, psi: &SpinorField) -> Result<SpinorField> {
        self.check(psi)?;
        let g = self.num_points();
        let mut out = psi.clone();
        for c in 0..FIBER_DIM {
            let comp = &mut out.data[c * g..(c + 1) * g];
            for (v, m) in comp.iter_mut().zip(&self.modulation) {
                *v *= m.conj();
            }
            self.fft.process(comp, false);
            let scale = 1.0 / g as f64;
            comp.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(out)
    }

    /// Inverse of [`Self::spinor_coefficients`].
    pub fn spinor_from_coefficients(&self, coeffs: &SpinorField) -> Result<SpinorField> {
        self.check(coeffs)?;
        let g = self.num_points();
        let mut out = coeffs.clone();
        for c in 0..FIBER_DIM {
            let comp = &mut out.data[c * g..(c + 1) * g];
            self.fft.process(comp, true);
            for (v, m) in comp.iter_mut().zip(&self.modulation) {
                *v *= m;
            }
        }
        Ok(out)
    }

    /// Applies a per-mode 2x2 matrix `symbol(k)` (Euclidean spin frequency).
    pub fn apply_spin_multiplier<F>(&self, psi: &SpinorField, symbol: F) -> Result<SpinorField>
    where
        F: Fn(&[f64]) -> [[Complex64; 2]; 2],
    {
        let mut coeffs = self.spinor_coefficients(psi)?;
        let g = self.num_points();
        for p in 0..g {
            let m = symbol(self.spin_freq(p));
            let a = coeffs.data[p];
            let b = coeffs.data[g + p];
            coeffs.data[p] = m[0][0] * a + m[0][1] * b;
            coeffs.data[g + p] = m[1][0] * a + m[1][1] * b;
        }
        self.spinor_from_coefficients(&coeffs)
    }

    fn dirac_symbol(&self, k: &[f64]) -> [[Complex64; 2]; 2] {
        let m = self.fiber.vector_matrix(k) * Complex64::new(0.0, TWO_PI);
        [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
    }

    /// Flat Dirac operator: mode `k` maps `sigma` to `2 pi i k . sigma`.
    pub fn dirac_flat(&self, psi: &SpinorField) -> Result<SpinorField> {
        self.apply_spin_multiplier(psi, |k| self.dirac_symbol(k))
    }

    /// Moore-Penrose inverse of the flat Dirac operator (zero on the
    /// constant modes when `delta = 0`).
    pub fn dirac_flat_pinv(&self, psi: &SpinorField) -> Result<SpinorField> {
        self.apply_spin_multiplier(psi, |k| {
            let k2: f64 = k.iter().map(|v| v * v).sum();
            if k2 == 0.0 {
                return [[Complex64::default(); 2]; 2];
            }
            let s = self.dirac_symbol(k);
            let scale = 1.0 / (4.0 * PI * PI * k2);
            [[s[0][0] * scale, s[0][1] * scale], [s[1][0] * scale, s[1][1] * scale]]
        })
    }

    /// `-Laplacian` as the multiplier `4 pi^2 |k|^2`.
    pub fn neg_laplacian(&self, psi: &SpinorField) -> Result<SpinorField> {
        self.apply_spin_multiplier(psi, |k| {
            let v = Complex64::from(4.0 * PI * PI * k.iter().map(|x| x * x).sum::<f64>());
            [[v, Complex64::default()], [Complex64::default(), v]]
        })
    }

    /// `exp(2 pi i <b + delta, s>) sigma` on the grid.
    pub fn plane_wave(&self, b: &[i64], sigma: &Spinor) -> SpinorField {
        assert_eq!(b.len(), self.n, "mode dimension mismatch");
        let g = self.num_points();
        let mut field = SpinorField::zeros(&self.grid);
        for p in 0..g {
            let s = self.lattice_coords(p);
            let phase: f64 = (0..self.n).map(|a| (b[a] as f64 + self.delta[a]) * s[a]).sum();
            let e = Complex64::from_polar(1.0, TWO_PI * phase);
            field.data[p] = e * sigma[0];
            field.data[g + p] = e * sigma[1];
        }
        field
    }

    /// Samples a spinor-valued function of the physical position.
    pub fn sample_spinor<F: Fn(&[f64]) -> Spinor>(&self, f: F) -> SpinorField {
        let g = self.num_points();
        let mut field = SpinorField::zeros(&self.grid);
        for p in 0..g {
            let v = f(&self.point(p));
            field.data[p] = v[0];
            field.data[g + p] = v[1];
        }
        field
    }

    /// Samples a real function of the physical position.
    pub fn sample_real<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.num_points()).map(|p| f(&self.point(p))).collect()
    }

    /// `L^2` inner product, complex-linear in the first slot.
    pub fn l2_inner(&self, psi: &SpinorField, phi: &SpinorField) -> Result<Complex64> {
        self.check(psi)?;
        self.check(phi)?;
        Ok(psi.dot(phi) * self.cell_volume())
    }

    pub fn l2_norm(&self, psi: &SpinorField) -> Result<f64> {
        Ok(self.l2_inner(psi, psi)?.re.max(0.0).sqrt())
    }

    /// Gradient of a real periodic grid function, one vector per point.
    pub fn gradient(&self, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        let g = self.num_points();
        if f.len() != g {
            return Err(Error::GeometryMismatch);
        }
        let mut coeffs: Vec<Complex64> = f.iter().map(|&v| Complex64::from(v)).collect();
        self.fft.process(&mut coeffs, false);
        let mut out = vec![vec![0.0; self.n]; g];
        let mut buf = vec![Complex64::default(); g];
        for axis in 0..self.n {
            for p in 0..g {
                let idx = self.grid_index(p);
                // Nyquist modes of a real function carry no derivative.
                let nyquist = idx.iter().zip(&self.grid).any(|(&i, &n)| 2 * i == n);
                let k = self.scalar_freq(p)[axis];
                buf[p] = if nyquist {
                    Complex64::default()
                } else {
                    coeffs[p] * Complex64::new(0.0, TWO_PI * k) / g as f64
                };
            }
            self.fft.process(&mut buf, true);
            for p in 0..g {
                out[p][axis] = buf[p].re;
            }
        }
        Ok(out)
    }

    /// `grad(f) . psi` pointwise.
    pub fn grad_mul(&self, f: &[f64], psi: &SpinorField) -> Result<SpinorField> {
        self.check(psi)?;
        let grad = self.gradient(f)?;
        let g = self.num_points();
        let mut out = SpinorField::zeros(&self.grid);
        for p in 0..g {
            let v = self.fiber.clifford_mul(&grad[p], &psi.at(p));
            out.set(p, &v);
        }
        Ok(out)
    }

    /// Fiberwise quaternionic structure.
    pub fn quaternionic(&self, psi: &SpinorField) -> SpinorField {
        let g = psi.num_points();
        let mut out = SpinorField::zeros(&psi.grid);
        for p in 0..g {
            out.set(p, &self.fiber.quaternionic(&psi.at(p)));
        }
        out
    }

    /// `(1 + t f)^{-1/4} D ((1 + t f)^{-1/4} psi)`.
    pub fn dirac_conformal(&self, fam: &ConformalFamily, psi: &SpinorField) -> Result<SpinorField> {
        self.check(psi)?;
        if fam.len() != self.num_points() {
            return Err(Error::GeometryMismatch);
        }
        let a = fam.weight();
        let mut inner = psi.clone();
        inner.scale_pointwise(&a);
        let mut out = self.dirac_flat(&inner)?;
        out.scale_pointwise(&a);
        Ok(out)
    }

    /// Evaluates the trigonometric interpolant of `psi` at lattice
    /// coordinates `s`, given its coefficients from
    /// [`Self::spinor_coefficients`].
    pub fn interpolate(&self, coeffs: &SpinorField, s: &[f64]) -> Spinor {
        let g = self.num_points();
        let mut v = Spinor::zeros();
        for p in 0..g {
            let idx = self.grid_index(p);
            let phase: f64 = (0..self.n)
                .map(|a| (frequency_index(idx[a], self.grid[a]) as f64 + self.delta[a]) * s[a])
                .sum();
            let e = Complex64::from_polar(1.0, TWO_PI * phase);
            v[0] += coeffs.data[p] * e;
            v[1] += coeffs.data[g + p] * e;
        }
        v
    }

    /// Value and lattice-coordinate gradient of the interpolant at `s`:
    /// returns `(psi(s), [d psi / d s_a])`.
    pub fn interpolate_with_gradient(&self, coeffs: &SpinorField, s: &[f64]) -> (Spinor, Vec<Spinor>) {
        let g = self.num_points();
        let mut v = Spinor::zeros();
        let mut grad = vec![Spinor::zeros(); self.n];
        for p in 0..g {
            let idx = self.grid_index(p);
            let freqs: Vec<f64> = (0..self.n)
                .map(|a| frequency_index(idx[a], self.grid[a]) as f64 + self.delta[a])
                .collect();
            let phase: f64 = freqs.iter().zip(s).map(|(f, x)| f * x).sum();
            let e = Complex64::from_polar(1.0, TWO_PI * phase);
            let term = Spinor::new(coeffs.data[p] * e, coeffs.data[g + p] * e);
            v += term;
            for a in 0..self.n {
                grad[a] += term * Complex64::new(0.0, TWO_PI * freqs[a]);
            }
        }
        (v, grad)
    }

    /// Euclidean spin frequency of flat grid index `p` (FFT ordering).
    pub fn spin_frequency_at(&self, p: usize) -> Vec<f64> {
        self.spin_freq(p).to_vec()
    }
}

fn advance(idx: &mut [usize], grid: &[usize]) {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < grid[a] {
            return;
        }
        idx[a] = 0;
    }
}

/// Spinor samples on a grid, component-major: `data[c * points + p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    grid: Vec<usize>,
    data: Vec<Complex64>,
}

impl SpinorField {
    pub fn zeros(grid: &[usize]) -> Self {
        let g: usize = grid.iter().product();
        SpinorField {
            grid: grid.to_vec(),
            data: vec![Complex64::default(); FIBER_DIM * g],
        }
    }

    pub fn from_data(grid: &[usize], data: Vec<Complex64>) -> Result<Self> {
        let g: usize = grid.iter().product();
        if data.len() != FIBER_DIM * g {
            return Err(Error::GeometryMismatch);
        }
        Ok(SpinorField { grid: grid.to_vec(), data })
    }

    /// Constant field.
    pub fn constant(grid: &[usize], sigma: &Spinor) -> Self {
        let mut f = Self::zeros(grid);
        let g = f.num_points();
        for p in 0..g {
            f.set(p, sigma);
        }
        f
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn num_points(&self) -> usize {
        self.data.len() / FIBER_DIM
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn at(&self, p: usize) -> Spinor {
        let g = self.num_points();
        Spinor::new(self.data[p], self.data[g + p])
    }

    pub fn set(&mut self, p: usize, v: &Spinor) {
        let g = self.num_points();
        self.data[p] = v[0];
        self.data[g + p] = v[1];
    }

    pub fn modulus_at(&self, p: usize) -> f64 {
        self.at(p).norm()
    }

    /// Euclidean (unweighted) inner product, linear in `self`.
    pub fn dot(&self, other: &SpinorField) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, a: Complex64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: Complex64) -> SpinorField {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: Complex64, other: &SpinorField) {
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(x, y)| *x += a * y);
    }

    pub fn sub(&self, other: &SpinorField) -> SpinorField {
        let mut out = self.clone();
        out.axpy(Complex64::from(-1.0), other);
        out
    }

    pub fn add(&self, other: &SpinorField) -> SpinorField {
        let mut out = self.clone();
        out.axpy(Complex64::from(1.0), other);
        out
    }

    /// Multiplies each point by a real weight.
    pub fn scale_pointwise(&mut self, w: &[f64]) {
        let g = self.num_points();
        assert_eq!(w.len(), g, "weight length mismatch");
        for c in 0..FIBER_DIM {
            for (v, &x) in self.data[c * g..(c + 1) * g].iter_mut().zip(w) {
                *v *= x;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &SpinorField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Conformal factor samples `1 + t f` of the metric `g_t = (1 + t f) g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalFamily {
    f: Vec<f64>,
    t: f64,
}

impl ConformalFamily {
    pub fn new(f: Vec<f64>, t: f64) -> Result<Self> {
        if let Some(v) = f.iter().map(|&x| 1.0 + t * x).find(|&v| !(v > 0.0)) {
            return Err(Error::Positivity { value: v });
        }
        Ok(ConformalFamily { f, t })
    }

    /// The undeformed metric on a grid with `points` samples.
    pub fn flat(points: usize) -> Self {
        ConformalFamily { f: vec![0.0; points], t: 0.0 }
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn with_t(&self, t: f64) -> Result<Self> {
        Self::new(self.f.clone(), t)
    }

    /// `(1 + t f)^{-1/4}` per point.
    pub fn weight(&self) -> Vec<f64> {
        self.f.iter().map(|&x| (1.0 + self.t * x).powf(-0.25)).collect()
    }

    pub fn is_flat(&self) -> bool {
        self.t == 0.0 || self.f.iter().all(|&x| x == 0.0)
    }
}

/// Real trigonometric polynomial in lattice coordinates:
/// `f(s) = sum_j a_j cos(2 pi b_j . s) + c_j sin(2 pi b_j . s)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrigPolynomial {
    pub terms: Vec<TrigTerm>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrigTerm {
    pub mode: Vec<i64>,
    pub cos: f64,
    pub sin: f64,
}

impl TrigPolynomial {
    pub fn constant(c: f64, n: usize) -> Self {
        TrigPolynomial {
            terms: vec![TrigTerm { mode: vec![0; n], cos: c, sin: 0.0 }],
        }
    }

    pub fn cosine(mode: &[i64]) -> Self {
        TrigPolynomial {
            terms: vec![TrigTerm { mode: mode.to_vec(), cos: 1.0, sin: 0.0 }],
        }
    }

    pub fn eval_lattice(&self, s: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let phase: f64 = TWO_PI * t.mode.iter().zip(s).map(|(&b, &x)| b as f64 * x).sum::<f64>();
                t.cos * phase.cos() + t.sin * phase.sin()
            })
            .sum()
    }

    /// Samples on the grid of `geom`.
    pub fn sample(&self, geom: &TorusSpinGeometry) -> Vec<f64> {
        (0..geom.num_points())
            .map(|p| self.eval_lattice(&geom.lattice_coords(p)))
            .collect()
    }

    pub fn scaled(&self, a: f64) -> Self {
        TrigPolynomial {
            terms: self
                .terms
                .iter()
                .map(|t| TrigTerm { mode: t.mode.clone(), cos: a * t.cos, sin: a * t.sin })
                .collect(),
        }
    }

    /// Random polynomial with every mode of `|b|_inf <= bandwidth` (one of
    /// each `+-b` pair) and cosine/sine coefficients uniform in `[-1, 1]`.
    pub fn random<R: rand::Rng + ?Sized>(n: usize, bandwidth: i64, rng: &mut R) -> Self {
        let side = (2 * bandwidth + 1) as usize;
        let mut terms = Vec::new();
        for mut p in 0..side.pow(n as u32) {
            let mut mode = vec![0i64; n];
            for b in mode.iter_mut() {
                *b = (p % side) as i64 - bandwidth;
                p /= side;
            }
            // keep the representative whose first nonzero entry is positive
            match mode.iter().find(|b| **b != 0) {
                Some(b) if *b < 0 => continue,
                None => {
                    let cos = rng.random_range(-1.0..=1.0);
                    terms.push(TrigTerm { mode, cos, sin: 0.0 });
                    continue;
                }
                _ => {}
            }
            let cos = rng.random_range(-1.0..=1.0);
            let sin = rng.random_range(-1.0..=1.0);
            terms.push(TrigTerm { mode, cos, sin });
        }
        TrigPolynomial { terms }
    }

    /// Largest `|f|` over the grid of `geom`.
    pub fn grid_sup(&self, geom: &TorusSpinGeometry) -> f64 {
        self.sample(geom).iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Rescaled so that the grid maximum of `|f|` equals `target`.
    pub fn normalized(&self, geom: &TorusSpinGeometry, target: f64) -> Self {
        let sup = self.grid_sup(geom);
        if sup == 0.0 {
            self.clone()
        } else {
            self.scaled(target / sup)
        }
    }

    /// Largest `|b_j|` over all modes.
    pub fn bandwidth(&self) -> i64 {
        self.terms
            .iter()
            .flat_map(|t| t.mode.iter().map(|b| b.abs()))
            .max()
            .unwrap_or(0)
    }
}
