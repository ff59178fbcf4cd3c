//! Eigenvalues of the conformally deformed Dirac operator nearest zero.
//!
//! The operator `H = A D A`, `A = (1 + t f)^{-1/4}`, is Hermitian on the grid
//! and has the exact inverse `A^{-1} D^{-1} A^{-1}`. When the spin structure
//! is trivial its kernel is spanned by `A^{-1} e_1, A^{-1} e_2`; the solver
//! then works on the orthogonal complement with the pseudo-inverse
//! `T r = P [A^{-1} D^+ A^{-1} P r]`, `P` the projector off the kernel.
//!
//! Eigenvalues of `H` closest to zero are the largest of `T`; they come from
//! a restarted block Krylov iteration with full reorthogonalization and
//! Rayleigh-Ritz extraction. A pair counts as converged when
//! `|H y - lambda y| <= tol |y|`.
//!
//! Enumeration: positive eigenvalues are `lambda_1 <= lambda_2 <= ...`,
//! negative ones `lambda_{-1} >= lambda_{-2} >= ...`, each repeated half its
//! complex multiplicity. Records sorted by magnitude list the negative
//! eigenvalue first at equal `|lambda|`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::clifford::Spinor;
use crate::error::{Error, Result};
use crate::torus::{ConformalFamily, SpinorField, TorusSpinGeometry};

/// Relative gap below which eigenvalues belong to one eigenspace.
pub const CLUSTER_RELATIVE_GAP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Residual tolerance for unit vectors.
    pub tol: f64,
    /// Extra block vectors beyond the requested count; must exceed the
    /// largest expected multiplicity.
    pub guard: usize,
    /// Krylov blocks per restart cycle.
    pub krylov_steps: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            guard: 12,
            krylov_steps: 5,
            max_restarts: 80,
            seed: 0x5eed_d1ac,
        }
    }
}

impl SolverOptions {
    /// Defaults adjusted for the grid size (fewer stored blocks in 3D).
    pub fn for_geometry(geom: &TorusSpinGeometry) -> Self {
        let mut opts = Self::default();
        if geom.num_points() > 1 << 14 {
            opts.krylov_steps = 3;
            opts.max_restarts = 150;
        }
        opts
    }
}

/// `H = A D A` together with its (pseudo-)inverse.
pub struct ConformalOperator<'g> {
    geom: &'g TorusSpinGeometry,
    weight: Vec<f64>,
    inv_weight: Vec<f64>,
    kernel: Vec<SpinorField>,
}

impl<'g> ConformalOperator<'g> {
    pub fn new(geom: &'g TorusSpinGeometry, fam: &ConformalFamily) -> Result<Self> {
        if fam.len() != geom.num_points() {
            return Err(Error::GeometryMismatch);
        }
        let weight = fam.weight();
        let inv_weight: Vec<f64> = weight.iter().map(|w| 1.0 / w).collect();
        let mut kernel = Vec::new();
        if geom.is_trivial_spin() {
            for c in 0..2 {
                let mut e = Spinor::zeros();
                e[c] = Complex64::from(1.0);
                let mut v = SpinorField::constant(geom.grid(), &e);
                v.scale_pointwise(&inv_weight);
                let norm = v.norm();
                v.scale(Complex64::from(1.0 / norm));
                kernel.push(v);
            }
        }
        Ok(ConformalOperator { geom, weight, inv_weight, kernel })
    }

    pub fn geometry(&self) -> &TorusSpinGeometry {
        self.geom
    }

    /// Euclidean-orthonormal kernel basis known in closed form.
    pub fn kernel(&self) -> &[SpinorField] {
        &self.kernel
    }

    pub fn apply(&self, v: &SpinorField) -> SpinorField {
        let mut x = v.clone();
        x.scale_pointwise(&self.weight);
        let mut y = self.geom.dirac_flat(&x).expect("grid matches");
        y.scale_pointwise(&self.weight);
        y
    }

    pub fn apply_pinv(&self, v: &SpinorField) -> SpinorField {
        let mut x = v.clone();
        self.project_out_kernel(&mut x);
        x.scale_pointwise(&self.inv_weight);
        let mut y = self.geom.dirac_flat_pinv(&x).expect("grid matches");
        y.scale_pointwise(&self.inv_weight);
        self.project_out_kernel(&mut y);
        y
    }

    pub fn project_out_kernel(&self, v: &mut SpinorField) {
        for k in &self.kernel {
            let c = v.dot(k);
            v.axpy(-c, k);
        }
    }
}

/// Converged Ritz pair with a Euclidean-unit vector.
#[derive(Debug, Clone)]
pub struct RitzPair {
    pub lambda: f64,
    pub vector: SpinorField,
    pub residual: f64,
}

fn random_field(grid: &[usize], rng: &mut ChaCha8Rng) -> SpinorField {
    let g: usize = grid.iter().product();
    let data = (0..2 * g)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    SpinorField::from_data(grid, data).expect("sized to grid")
}

/// Two-pass Gram-Schmidt of `v` against `basis`; returns the remaining norm.
fn orthogonalize(v: &mut SpinorField, basis: &[SpinorField]) -> f64 {
    for _ in 0..2 {
        let coeffs: Vec<Complex64> = basis.par_iter().map(|b| v.dot(b)).collect();
        for (b, c) in basis.iter().zip(coeffs) {
            v.axpy(-c, b);
        }
    }
    v.norm()
}

/// Verdict of an acceptance rule on the current Ritz pairs.
pub enum Acceptance {
    /// Stop and return the pairs.
    Accept,
    /// Keep iterating.
    Continue,
    /// Every pair converged but the block is too small.
    Grow,
}

/// Block Krylov iteration for the eigenpairs of `H` nearest zero (outside
/// the known kernel). After every restart all `block` Ritz pairs, sorted by
/// `|lambda|`, are handed to `accept`; the returned flag is `false` when the
/// rule asked for a larger block.
pub fn nearest_eigenpairs<F>(
    op: &ConformalOperator<'_>,
    block: usize,
    opts: &SolverOptions,
    warm_start: &[SpinorField],
    accept: F,
) -> Result<(Vec<RitzPair>, bool)>
where
    F: Fn(&[RitzPair]) -> Acceptance,
{
    let grid = op.geom.grid().to_vec();
    let dim = 2 * op.geom.num_points() - op.kernel.len();
    let block = block.min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut x: Vec<SpinorField> = Vec::with_capacity(block);
    let mut candidates = warm_start.to_vec().into_iter();
    while x.len() < block {
        let mut v = candidates.next().unwrap_or_else(|| random_field(&grid, &mut rng));
        op.project_out_kernel(&mut v);
        let mut against = op.kernel.clone();
        against.extend(x.iter().cloned());
        let norm = orthogonalize(&mut v, &against);
        if norm > 1e-8 {
            v.scale(Complex64::from(1.0 / norm));
            x.push(v);
        }
    }

    let mut worst = f64::INFINITY;
    for _ in 0..opts.max_restarts {
        let mut basis = x.clone();
        let mut images: Vec<SpinorField> = x.par_iter().map(|v| op.apply_pinv(v)).collect();
        let mut last_start = 0;
        for _ in 1..opts.krylov_steps {
            if basis.len() + block > dim {
                break;
            }
            let next: Vec<SpinorField> = images[last_start..].to_vec();
            last_start = basis.len();
            let mut added = Vec::new();
            for mut v in next {
                let mut against = op.kernel.clone();
                against.extend(basis.iter().cloned());
                let before = v.norm();
                let mut norm = orthogonalize(&mut v, &against);
                if norm <= 1e-10 * before.max(1e-300) {
                    // Krylov space exhausted in this direction: refill randomly.
                    v = random_field(&grid, &mut rng);
                    norm = orthogonalize(&mut v, &against);
                }
                v.scale(Complex64::from(1.0 / norm));
                basis.push(v.clone());
                added.push(v);
            }
            let added_images: Vec<SpinorField> = added.par_iter().map(|v| op.apply_pinv(v)).collect();
            images.extend(added_images);
        }

        let d = basis.len();
        let entries: Vec<Complex64> = (0..d * d)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / d, idx % d);
                if j < i {
                    Complex64::default()
                } else {
                    images[j].dot(&basis[i])
                }
            })
            .collect();
        let mut small = DMatrix::<Complex64>::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = entries[i * d + j];
                small[(i, j)] = v;
                small[(j, i)] = v.conj();
            }
            small[(i, i)] = Complex64::from(small[(i, i)].re);
        }
        let eig = small.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));

        let ritz: Vec<SpinorField> = order[..block]
            .par_iter()
            .map(|&col| {
                let mut y = SpinorField::zeros(&grid);
                for (i, b) in basis.iter().enumerate() {
                    y.axpy(eig.eigenvectors[(i, col)], b);
                }
                let norm = y.norm();
                y.scale(Complex64::from(1.0 / norm));
                y
            })
            .collect();
        let mut pairs: Vec<RitzPair> = ritz
            .par_iter()
            .map(|y| {
                let hy = op.apply(y);
                let lambda = hy.dot(y).re;
                let mut r = hy;
                r.axpy(Complex64::from(-lambda), y);
                RitzPair { lambda, vector: y.clone(), residual: r.norm() }
            })
            .collect();
        pairs.sort_by(|a, b| a.lambda.abs().total_cmp(&b.lambda.abs()));
        worst = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
        match accept(&pairs) {
            Acceptance::Accept => return Ok((pairs, true)),
            Acceptance::Grow => return Ok((pairs, false)),
            Acceptance::Continue => {}
        }
        x = ritz;
    }
    Err(Error::NoConvergence { worst_residual: worst })
}

/// Splits converged pairs (sorted by `|lambda|`) into kernel count and
/// nonzero eigenvalue groups, dropping groups that may be incomplete
/// because they reach the edge of the converged window. `next` is the first
/// unconverged Ritz pair, if any.
fn resolve_groups(prefix: &[RitzPair], next: Option<&RitzPair>, tol: f64) -> (usize, Vec<Vec<RitzPair>>) {
    let zero_tol = 1e3 * tol;
    let kernel = prefix.iter().filter(|p| p.lambda.abs() <= zero_tol).count();
    let mut nonzero: Vec<RitzPair> = prefix
        .iter()
        .filter(|p| p.lambda.abs() > zero_tol)
        .cloned()
        .collect();
    nonzero.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut groups: Vec<Vec<RitzPair>> = Vec::new();
    for p in nonzero {
        match groups.last_mut() {
            Some(g)
                if (p.lambda - g.last().expect("nonempty").lambda).abs()
                    <= CLUSTER_RELATIVE_GAP * p.lambda.abs().max(1.0) =>
            {
                g.push(p)
            }
            _ => groups.push(vec![p]),
        }
    }
    let edge = match next {
        Some(q) => q.lambda.abs() - 100.0 * q.residual,
        None => prefix.last().map_or(0.0, |p| p.lambda.abs()),
    };
    let margin = 2.0 * CLUSTER_RELATIVE_GAP * edge.abs().max(1.0) + 10.0 * tol;
    groups.retain(|g| g.iter().all(|p| p.lambda.abs() < edge - margin));
    (kernel, groups)
}

/// Simplicity classification of a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Simplicity {
    Simple,
    Multiple,
    Indeterminate,
}

impl Simplicity {
    pub fn as_option(self) -> Option<bool> {
        match self {
            Simplicity::Simple => Some(true),
            Simplicity::Multiple => Some(false),
            Simplicity::Indeterminate => None,
        }
    }
}

/// One numerically resolved eigenspace.
#[derive(Debug, Clone)]
pub struct Cluster {
    /// Mean eigenvalue.
    pub lambda: f64,
    pub eigenvalues: Vec<f64>,
    /// `L^2`-orthonormal basis ordered `psi_1, J psi_1, psi_2, J psi_2, ...`.
    pub basis: Vec<SpinorField>,
    /// `L^2` residuals `|(H - lambda) psi|` of the basis vectors.
    pub residuals: Vec<f64>,
    /// Distance to the nearest other computed eigenvalue.
    pub gap: f64,
    /// Spread of the grouped eigenvalues.
    pub spread: f64,
    pub simplicity: Simplicity,
}

impl Cluster {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// An enumerated eigenvalue `lambda_index`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub index: i64,
    pub lambda: f64,
    /// `L^2`-normalized eigenspinor.
    pub psi: SpinorField,
    pub residual: f64,
    /// Position in [`SpectrumReport::clusters`].
    pub cluster: usize,
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub m: usize,
    pub kernel_dim: usize,
    /// Resolved clusters in ascending order of eigenvalue.
    pub clusters: Vec<Cluster>,
    /// `lambda_{-m}, ..., lambda_{-1}, lambda_1, ..., lambda_m`.
    pub pairs: Vec<EigenPair>,
    pub tolerance: f64,
}

/// One JSON-lines record of a spectrum report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRecord {
    pub index: i64,
    pub lambda: f64,
    #[serde(rename = "dimC")]
    pub dim_c: usize,
    pub simple: Option<bool>,
    pub residual: f64,
}

impl SpectrumReport {
    /// Records ordered by `|lambda|`, negative first at equal magnitude.
    pub fn records(&self) -> Vec<SpectrumRecord> {
        let mut recs: Vec<SpectrumRecord> = self
            .pairs
            .iter()
            .map(|p| {
                let c = &self.clusters[p.cluster];
                SpectrumRecord {
                    index: p.index,
                    lambda: p.lambda,
                    dim_c: c.dim(),
                    simple: c.simplicity.as_option(),
                    residual: p.residual,
                }
            })
            .collect();
        // |lambda| ties (up to the solver tolerance) put the negative side first
        let tie = 10.0 * self.tolerance;
        recs.sort_by(|a, b| {
            let (x, y) = (a.lambda.abs(), b.lambda.abs());
            if (x - y).abs() > tie {
                x.total_cmp(&y)
            } else {
                a.lambda
                    .signum()
                    .total_cmp(&b.lambda.signum())
                    .then(a.index.abs().cmp(&b.index.abs()))
            }
        });
        recs
    }

    /// The enumerated pair with the given signed index.
    pub fn pair(&self, index: i64) -> Option<&EigenPair> {
        self.pairs.iter().find(|p| p.index == index)
    }

    /// Clusters touched by the enumerated pairs.
    pub fn enumerated_clusters(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.pairs.iter().map(|p| p.cluster).collect();
        ids.dedup();
        ids
    }
}

/// Per enumerated eigenvalue: its index and simplicity.
pub fn check_simple(report: &SpectrumReport) -> Vec<(i64, Simplicity)> {
    report
        .pairs
        .iter()
        .map(|p| (p.index, report.clusters[p.cluster].simplicity))
        .collect()
}

/// Builds the J-adapted orthonormal basis `psi_1, J psi_1, ...` of the span.
fn j_basis(geom: &TorusSpinGeometry, span: &[SpinorField]) -> Vec<SpinorField> {
    let mut out: Vec<SpinorField> = Vec::new();
    let pool: Vec<SpinorField> = span.to_vec();
    while out.len() < span.len() {
        // pick the pool vector with the largest component outside `out`
        let mut best: Option<(f64, SpinorField)> = None;
        for v in &pool {
            let mut w = v.clone();
            let norm = orthogonalize(&mut w, &out);
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, w));
            }
        }
        let (norm, mut psi) = best.expect("nonempty pool");
        if norm < 1e-6 {
            break;
        }
        psi.scale(Complex64::from(1.0 / norm));
        let mut jpsi = geom.quaternionic(&psi);
        let jnorm = orthogonalize(&mut jpsi, &out);
        out.push(psi);
        if out.len() < span.len() && jnorm > 1e-6 {
            jpsi.scale(Complex64::from(1.0 / jnorm));
            let extra = orthogonalize(&mut jpsi, &out[out.len() - 1..]);
            jpsi.scale(Complex64::from(1.0 / extra));
            out.push(jpsi);
        }
    }
    out
}

/// Eigenvalues `lambda_{-m}..lambda_{-1}, lambda_1..lambda_m` of the
/// conformal Dirac operator, the kernel dimension and resolved clusters.
pub fn eigensolve(
    geom: &TorusSpinGeometry,
    fam: &ConformalFamily,
    m: usize,
    opts: &SolverOptions,
) -> Result<SpectrumReport> {
    eigensolve_warm(geom, fam, m, opts, &[])
}

/// [`eigensolve`] seeded with approximate eigenvectors.
pub fn eigensolve_warm(
    geom: &TorusSpinGeometry,
    fam: &ConformalFamily,
    m: usize,
    opts: &SolverOptions,
    warm_start: &[SpinorField],
) -> Result<SpectrumReport> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    ConformalFamily::new(fam.f().to_vec(), fam.t())?;
    let op = ConformalOperator::new(geom, fam)?;
    let scale = geom.cell_volume().sqrt();
    let mut block = 4 * m + 4 + opts.guard;
    let mut warm: Vec<SpinorField> = warm_start.to_vec();
    let tol = opts.tol;
    let converged = |pairs: &[RitzPair]| pairs.iter().take_while(|p| p.residual <= tol).count();
    let enough = |groups: &[Vec<RitzPair>]| {
        let pos: usize = groups.iter().filter(|g| g[0].lambda > 0.0).map(Vec::len).sum();
        let neg: usize = groups.iter().filter(|g| g[0].lambda < 0.0).map(Vec::len).sum();
        pos >= 2 * m && neg >= 2 * m
    };
    loop {
        let accepted = nearest_eigenpairs(&op, block, opts, &warm, |pairs| {
            let j = converged(pairs);
            let (_, groups) = resolve_groups(&pairs[..j], pairs.get(j), tol);
            if enough(&groups) {
                Acceptance::Accept
            } else if j == pairs.len() {
                Acceptance::Grow
            } else {
                Acceptance::Continue
            }
        })?;
        let (ritz, done) = accepted;
        if !done {
            if block >= 2 * geom.num_points() {
                return Err(Error::NoConvergence { worst_residual: f64::NAN });
            }
            block += opts.guard.max(4);
            warm = ritz.into_iter().map(|p| p.vector).collect();
            continue;
        }

        // kernel: closed-form part verified by residual, plus any computed
        // eigenvalue that is numerically zero
        let mut kernel_dim = 0;
        for k in op.kernel() {
            let r = op.apply(k).norm();
            if r <= opts.tol {
                kernel_dim += 1;
            } else {
                return Err(Error::NoConvergence { worst_residual: r });
            }
        }
        let j = converged(&ritz);
        let (extra_kernel, groups) = resolve_groups(&ritz[..j], ritz.get(j), tol);
        kernel_dim += extra_kernel;
        let all_values: Vec<f64> = ritz.iter().map(|p| p.lambda).collect();

        let mut clusters = Vec::with_capacity(groups.len());
        for g in &groups {
            let values: Vec<f64> = g.iter().map(|p| p.lambda).collect();
            let lambda = values.iter().sum::<f64>() / values.len() as f64;
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut others: Vec<f64> = all_values
                .iter()
                .copied()
                .filter(|v| *v < lo - 1e-15 || *v > hi + 1e-15)
                .collect();
            if kernel_dim > 0 {
                others.push(0.0);
            }
            let gap = others
                .iter()
                .map(|v| if *v < lo { lo - v } else { v - hi })
                .fold(f64::INFINITY, f64::min);
            let spread = hi - lo;
            let span: Vec<SpinorField> = g.iter().map(|p| p.vector.clone()).collect();
            let basis_unit = j_basis(geom, &span);
            let mut residuals = Vec::with_capacity(basis_unit.len());
            for v in &basis_unit {
                let mut r = op.apply(v);
                r.axpy(Complex64::from(-lambda), v);
                residuals.push(r.norm());
            }
            let basis: Vec<SpinorField> = basis_unit
                .into_iter()
                .map(|v| v.scaled(Complex64::from(1.0 / scale)))
                .collect();
            let dim = values.len();
            let resolved = gap > 10.0 * opts.tol && spread <= 10.0 * opts.tol.max(1e-12 * lambda.abs());
            let simplicity = if !resolved || dim % 2 == 1 || basis.len() != dim {
                Simplicity::Indeterminate
            } else if dim == 2 {
                Simplicity::Simple
            } else {
                Simplicity::Multiple
            };
            clusters.push(Cluster {
                lambda,
                eigenvalues: values,
                basis,
                residuals,
                gap,
                spread,
                simplicity,
            });
        }

        let mut pairs = Vec::with_capacity(2 * m);
        // negative side, walking away from zero
        let mut neg: Vec<EigenPair> = Vec::new();
        for (ci, c) in clusters.iter().enumerate().rev().filter(|(_, c)| c.lambda < 0.0) {
            push_enumerated(&mut neg, ci, c, -1, m);
        }
        neg.reverse();
        pairs.extend(neg);
        let mut pos: Vec<EigenPair> = Vec::new();
        for (ci, c) in clusters.iter().enumerate().filter(|(_, c)| c.lambda > 0.0) {
            push_enumerated(&mut pos, ci, c, 1, m);
        }
        pairs.extend(pos);
        return Ok(SpectrumReport {
            m,
            kernel_dim,
            clusters,
            pairs,
            tolerance: opts.tol,
        });
    }
}

fn push_enumerated(out: &mut Vec<EigenPair>, ci: usize, c: &Cluster, sign: i64, m: usize) {
    let repeats = c.dim().div_ceil(2);
    for r in 0..repeats {
        let taken = out.len();
        if taken >= m {
            return;
        }
        let v = (2 * r).min(c.basis.len().saturating_sub(1));
        out.push(EigenPair {
            index: sign * (taken as i64 + 1),
            lambda: c.lambda,
            psi: c.basis[v].clone(),
            residual: c.residuals[v],
            cluster: ci,
        });
    }
}

/// Kernel dimension of the conformal Dirac operator.
pub fn kernel_dim(geom: &TorusSpinGeometry, fam: &ConformalFamily, opts: &SolverOptions) -> Result<usize> {
    Ok(eigensolve(geom, fam, 1, opts)?.kernel_dim)
}

/// `L^2` residual `|(H - lambda) psi|` for an `L^2`-normalized field.
pub fn l2_residual(geom: &TorusSpinGeometry, fam: &ConformalFamily, lambda: f64, psi: &SpinorField) -> Result<f64> {
    let mut r = geom.dirac_conformal(fam, psi)?;
    r.axpy(Complex64::from(-lambda), psi);
    geom.l2_norm(&r)
}
