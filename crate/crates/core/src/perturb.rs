//! First-order eigenvalue perturbation under the conformal family
//! `g_t = (1 + t f) g`, finite-difference validation, and splitting of
//! multiple eigenvalues.
//!
//! With `H_t = A D A`, `A = (1 + t f)^{-1/4}`, the derivative at `t = 0` is
//! `-(1/2) f D psi - (1/4) grad f . psi`. On an eigenspinor the Clifford term
//! contributes a purely imaginary pairing, leaving
//! `d lambda = -(lambda/2) int f |psi|^2`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spectral::{eigensolve, Cluster, EigenPair, Simplicity, SolverOptions, SpectrumReport};
use crate::torus::{ConformalFamily, SpinorField, TorusSpinGeometry};
use crate::{Error, Result};

/// Smallest gap at which a tracked cluster counts as split off.
pub const SPLIT_GAP: f64 = 1e-4;

/// Overlap below which branch matching is reported as ambiguous.
pub const MIN_OVERLAP: f64 = 0.9;

/// `dH/dt` at `t = 0` applied to `psi`.
pub fn dirac_t_derivative(geom: &TorusSpinGeometry, f: &[f64], psi: &SpinorField) -> Result<SpinorField> {
    if f.len() != geom.num_points() {
        return Err(Error::GeometryMismatch);
    }
    let mut out = geom.dirac_flat(psi)?;
    out.scale_pointwise(f);
    out.scale(Complex64::from(-0.5));
    out.axpy(Complex64::from(-0.25), &geom.grad_mul(f, psi)?);
    Ok(out)
}

/// `-(lambda/2) int f |psi|^2` for an `L^2`-normalized eigenspinor.
pub fn eigenvalue_derivative(geom: &TorusSpinGeometry, f: &[f64], pair: &EigenPair) -> Result<f64> {
    weighted_density(geom, f, &pair.psi).map(|w| -0.5 * pair.lambda * w)
}

fn weighted_density(geom: &TorusSpinGeometry, f: &[f64], psi: &SpinorField) -> Result<f64> {
    if f.len() != geom.num_points() || psi.grid() != geom.grid() {
        return Err(Error::GeometryMismatch);
    }
    let sum: f64 = (0..geom.num_points())
        .map(|p| f[p] * psi.modulus_at(p).powi(2))
        .sum();
    Ok(sum * geom.cell_volume())
}

/// One quaternionic branch leaving a cluster: derivative and limiting
/// eigenspace at `t = 0`.
#[derive(Debug, Clone)]
pub struct Branch {
    pub derivative: f64,
    pub basis: Vec<SpinorField>,
}

/// Branches of a cluster from the reduced form `<dH psi_b, psi_a>` on its
/// eigenspace, sorted by derivative. Each branch is a quaternionic pair.
pub fn cluster_branches(geom: &TorusSpinGeometry, f: &[f64], cluster: &Cluster) -> Result<Vec<Branch>> {
    let d = cluster.basis.len();
    let images: Vec<SpinorField> = cluster
        .basis
        .iter()
        .map(|v| dirac_t_derivative(geom, f, v))
        .collect::<Result<_>>()?;
    let mut form = DMatrix::<Complex64>::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            form[(a, b)] = geom.l2_inner(&images[b], &cluster.basis[a])?;
        }
    }
    // symmetrize away rounding before the Hermitian solver
    let form = (&form + form.adjoint()) * Complex64::from(0.5);
    let eig = form.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let combine = |col: usize| {
        let mut v = SpinorField::zeros(geom.grid());
        for (b, psi) in cluster.basis.iter().enumerate() {
            v.axpy(eig.eigenvectors[(b, col)], psi);
        }
        v
    };
    Ok(order
        .chunks(2)
        .map(|pair| Branch {
            derivative: pair.iter().map(|&i| eig.eigenvalues[i]).sum::<f64>() / pair.len() as f64,
            basis: pair.iter().map(|&i| combine(i)).collect(),
        })
        .collect())
}

/// Selects a branch: the cluster holding the enumerated pair `index` at
/// `t = 0`, and the branch position (ascending derivative) within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSelector {
    pub index: i64,
    pub branch: usize,
}

impl BranchSelector {
    pub fn pair(index: i64) -> Self {
        Self { index, branch: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FdDerivative {
    pub lambda0: f64,
    pub analytic: f64,
    pub fd: f64,
    pub h: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// Worst subspace overlap used in branch matching.
    pub overlap: f64,
    pub cluster_dim: usize,
}

impl FdDerivative {
    pub fn error(&self) -> f64 {
        (self.fd - self.analytic).abs()
    }
}

/// Solver depth needed so the selected cluster and its neighbours resolve.
fn depth_for(index: i64) -> usize {
    index.unsigned_abs() as usize + 2
}

fn family(geom: &TorusSpinGeometry, f: &[f64], t: f64) -> Result<ConformalFamily> {
    if f.len() != geom.num_points() {
        return Err(Error::GeometryMismatch);
    }
    ConformalFamily::new(f.to_vec(), t)
}

/// `sqrt(sum_u |P_C u|^2 / |B|)` for an orthonormal `basis` against the
/// cluster subspace.
fn subspace_overlap(geom: &TorusSpinGeometry, basis: &[SpinorField], cluster: &Cluster) -> Result<f64> {
    let mut total = 0.0;
    for u in basis {
        for v in &cluster.basis {
            total += geom.l2_inner(u, v)?.norm_sqr();
        }
    }
    Ok((total / basis.len() as f64).sqrt())
}

fn best_match<'a>(geom: &TorusSpinGeometry, basis: &[SpinorField], report: &'a SpectrumReport) -> Result<(&'a Cluster, f64)> {
    let mut best: Option<(&Cluster, f64)> = None;
    for c in &report.clusters {
        let ov = subspace_overlap(geom, basis, c)?;
        if best.is_none_or(|(_, b)| ov > b) {
            best = Some((c, ov));
        }
    }
    best.ok_or(Error::BranchTracking { overlap: 0.0 })
}

/// Central difference `(lambda(h) - lambda(-h)) / 2h` along the selected
/// branch, matched by eigenspace overlap with the branch limit at `t = 0`.
pub fn fd_derivative(
    geom: &TorusSpinGeometry,
    f: &[f64],
    sel: BranchSelector,
    h: f64,
    opts: &SolverOptions,
) -> Result<FdDerivative> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveArgument(h));
    }
    let m = depth_for(sel.index);
    let base = eigensolve(geom, &family(geom, f, 0.0)?, m, opts)?;
    let pair = base
        .pair(sel.index)
        .ok_or_else(|| Error::InvalidArgument(format!("no eigenpair with index {}", sel.index)))?;
    let cluster = &base.clusters[pair.cluster];
    let branches = cluster_branches(geom, f, cluster)?;
    let branch = branches
        .get(sel.branch)
        .ok_or_else(|| Error::InvalidArgument(format!("cluster has {} branches", branches.len())))?;
    let sides: Vec<Result<(f64, f64)>> = [h, -h]
        .par_iter()
        .map(|&t| {
            let report = eigensolve(geom, &family(geom, f, t)?, m, opts)?;
            let (c, ov) = best_match(geom, &branch.basis, &report)?;
            if ov < MIN_OVERLAP {
                return Err(Error::BranchTracking { overlap: ov });
            }
            Ok((c.lambda, ov))
        })
        .collect();
    let mut sides = sides.into_iter();
    let (plus, ov_plus) = sides.next().expect("two sides")?;
    let (minus, ov_minus) = sides.next().expect("two sides")?;
    Ok(FdDerivative {
        lambda0: cluster.lambda,
        analytic: branch.derivative,
        fd: (plus - minus) / (2.0 * h),
        h,
        lambda_plus: plus,
        lambda_minus: minus,
        overlap: ov_plus.min(ov_minus),
        cluster_dim: cluster.dim(),
    })
}

/// FD derivative at `h` and `h/2` with the measured constant
/// `C = |fd(h) - analytic| / h^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Richardson {
    pub coarse: FdDerivative,
    pub fine: FdDerivative,
    pub constant: f64,
    /// `|fd(h) - analytic| / |fd(h/2) - analytic|`, about 4 for
    /// second-order agreement.
    pub ratio: f64,
}

pub fn richardson_check(
    geom: &TorusSpinGeometry,
    f: &[f64],
    sel: BranchSelector,
    h: f64,
    opts: &SolverOptions,
) -> Result<Richardson> {
    let coarse = fd_derivative(geom, f, sel, h, opts)?;
    let fine = fd_derivative(geom, f, sel, 0.5 * h, opts)?;
    let constant = coarse.error() / (h * h);
    let ratio = coarse.error() / fine.error().max(f64::MIN_POSITIVE);
    Ok(Richardson { coarse, fine, constant, ratio })
}

/// One CSV row of a splitting experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub t: f64,
    pub branch: usize,
    pub lambda: f64,
    pub simple: bool,
    pub min_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitReport {
    pub initial_lambda: f64,
    pub initial_dim: usize,
    pub rows: Vec<SplitRow>,
    /// Smallest gap seen among tracked clusters over the grid.
    pub min_gap: f64,
    /// First grid value from which on every tracked branch is simple.
    pub split_t: Option<f64>,
    pub final_all_simple: bool,
}

impl SplitReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,branch,lambda,simple,min_gap\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.12},{},{:.6e}\n", r.t, r.branch, r.lambda, r.simple, r.min_gap));
        }
        out
    }
}

/// Tracks the cluster holding pair `index` at the first grid value along the
/// `t`-grid, by eigenspace overlap with the previous step.
pub fn split_experiment(
    geom: &TorusSpinGeometry,
    f: &[f64],
    index: i64,
    t_grid: &[f64],
    opts: &SolverOptions,
) -> Result<SplitReport> {
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("empty t-grid".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("t-grid must be increasing".into()));
    }
    let families: Vec<ConformalFamily> = t_grid.iter().map(|&t| family(geom, f, t)).collect::<Result<_>>()?;
    let m = depth_for(index) + 1;
    let reports: Vec<SpectrumReport> = families
        .par_iter()
        .map(|fam| eigensolve(geom, fam, m, opts))
        .collect::<Result<_>>()?;

    let first = &reports[0];
    let pair = first
        .pair(index)
        .ok_or_else(|| Error::InvalidArgument(format!("no eigenpair with index {index}")))?;
    let start = &first.clusters[pair.cluster];
    if start.dim() <= 2 {
        return Err(Error::InvalidArgument(format!(
            "cluster at lambda = {} is already simple",
            start.lambda
        )));
    }
    let dim0 = start.dim();
    let mut span: Vec<SpinorField> = start.basis.clone();
    let mut rows = Vec::new();
    let mut all_simple = Vec::with_capacity(t_grid.len());
    let mut min_gap = f64::INFINITY;

    for (step, report) in reports.iter().enumerate() {
        let tracked: Vec<&Cluster> = if step == 0 {
            vec![start]
        } else {
            let mut scored: Vec<(f64, &Cluster)> = report
                .clusters
                .iter()
                .map(|c| {
                    let mut total = 0.0;
                    for v in &c.basis {
                        for u in &span {
                            total += geom.l2_inner(v, u)?.norm_sqr();
                        }
                    }
                    Ok((total / c.dim() as f64, c))
                })
                .collect::<Result<_>>()?;
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut chosen = Vec::new();
            let mut dims = 0;
            for (ov, c) in scored {
                if dims >= dim0 {
                    break;
                }
                if ov < 0.5 {
                    return Err(Error::BranchTracking { overlap: ov });
                }
                dims += c.dim();
                chosen.push(c);
            }
            if dims != dim0 {
                return Err(Error::BranchTracking { overlap: 0.0 });
            }
            chosen
        };
        let mut tracked = tracked;
        tracked.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        let gap = tracked.iter().map(|c| c.gap).fold(f64::INFINITY, f64::min);
        let is_simple = |c: &Cluster| c.simplicity == Simplicity::Simple && c.gap > SPLIT_GAP;
        if step > 0 || t_grid[0] > 0.0 {
            min_gap = min_gap.min(gap);
        }
        let mut branch = 0;
        for c in &tracked {
            for _ in 0..c.dim().div_ceil(2) {
                rows.push(SplitRow { t: t_grid[step], branch, lambda: c.lambda, simple: is_simple(c), min_gap: gap });
                branch += 1;
            }
        }
        all_simple.push(tracked.iter().all(|c| is_simple(c)));
        span = tracked.iter().flat_map(|c| c.basis.iter().cloned()).collect();
    }

    let mut split_t = None;
    for (i, ok) in all_simple.iter().enumerate().rev() {
        if *ok {
            split_t = Some(t_grid[i]);
        } else {
            break;
        }
    }
    Ok(SplitReport {
        initial_lambda: start.lambda,
        initial_dim: dim0,
        rows,
        min_gap,
        split_t,
        final_all_simple: *all_simple.last().expect("nonempty grid"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TrigPolynomial;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn square(delta: &[f64], n: usize) -> TorusSpinGeometry {
        TorusSpinGeometry::unit(delta.len(), delta, &vec![n; delta.len()]).unwrap()
    }

    fn random_f(geom: &TorusSpinGeometry, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TrigPolynomial::random(geom.dim(), 3, &mut rng).normalized(geom, 1.0).sample(geom)
    }

    #[test]
    fn derivative_operator_trivial_cases() {
        let geom = square(&[0.0, 0.0], 16);
        let sigma = crate::clifford::Spinor::new(Complex64::new(1.0, 0.5), Complex64::new(-0.2, 0.0));
        let c = SpinorField::constant(geom.grid(), &sigma);
        let f = vec![2.5; geom.num_points()];
        assert!(dirac_t_derivative(&geom, &f, &c).unwrap().norm() < 1e-12);
        let wave = geom.plane_wave(&[1, 2], &sigma);
        let lhs = dirac_t_derivative(&geom, &f, &wave).unwrap();
        let rhs = geom.dirac_flat(&wave).unwrap().scaled(Complex64::from(-1.25));
        assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn homothety_derivative_is_minus_half_lambda() {
        let geom = square(&[0.5, 0.5], 16);
        let f = vec![1.0; geom.num_points()];
        let opts = SolverOptions::default();
        let report = eigensolve(&geom, &ConformalFamily::flat(geom.num_points()), 1, &opts).unwrap();
        let pair = report.pair(1).unwrap();
        let d = eigenvalue_derivative(&geom, &f, pair).unwrap();
        assert!((d + pair.lambda / 2.0).abs() < 1e-12);
        let fd = fd_derivative(&geom, &f, BranchSelector::pair(1), 1e-3, &opts).unwrap();
        assert!((fd.fd + PI * 2f64.sqrt() / 2.0).abs() < 1e-4);
    }

    #[test]
    fn plane_wave_density_integrates_cosine_to_zero() {
        let geom = square(&[0.5, 0.0], 16);
        let report = eigensolve(&geom, &ConformalFamily::flat(geom.num_points()), 1, &SolverOptions::default()).unwrap();
        // the lowest eigenspace is spanned by modes (+-1/2, 0) with constant density
        let f = TrigPolynomial::cosine(&[0, 1]).sample(&geom);
        let d = eigenvalue_derivative(&geom, &f, report.pair(1).unwrap()).unwrap();
        assert!(d.abs() < 1e-10);
    }

    #[test]
    fn analytic_matches_fd_on_simple_branch() {
        let geom = square(&[0.5, 0.0], 32);
        let opts = SolverOptions::default();
        for seed in [1, 2] {
            let f = random_f(&geom, seed);
            let report = eigensolve(&geom, &ConformalFamily::new(f.clone(), 0.0).unwrap(), 2, &opts).unwrap();
            let pair = report.pair(1).unwrap();
            let an = eigenvalue_derivative(&geom, &f, pair).unwrap();
            let fd = fd_derivative(&geom, &f, BranchSelector::pair(1), 1e-3, &opts).unwrap();
            assert_eq!(fd.cluster_dim, 2);
            assert!((fd.analytic - an).abs() < 1e-9);
            let tol = 1e-6f64.max(5.0 * 1e-6 * pair.lambda.abs());
            assert!(fd.error() <= tol, "seed {seed}: {fd:?}");
            // Hellmann-Feynman: the pairing with dH reproduces the derivative
            let dh = dirac_t_derivative(&geom, &f, &pair.psi).unwrap();
            assert!((geom.l2_inner(&dh, &pair.psi).unwrap().re - an).abs() < 1e-9);
        }
    }

    #[test]
    fn nonnegative_f_lowers_positive_eigenvalues() {
        let geom = square(&[0.5, 0.5], 16);
        let f: Vec<f64> = random_f(&geom, 9).iter().map(|v| v + 1.0).collect();
        let report = eigensolve(&geom, &ConformalFamily::new(f.clone(), 0.0).unwrap(), 2, &SolverOptions::default()).unwrap();
        for p in report.pairs.iter().filter(|p| p.lambda > 0.0) {
            assert!(eigenvalue_derivative(&geom, &f, p).unwrap() < 0.0);
        }
    }

    #[test]
    fn degenerate_cluster_splits_by_reduced_form() {
        let geom = square(&[0.5, 0.5], 16);
        let f = TrigPolynomial::cosine(&[1, 0]).sample(&geom);
        let opts = SolverOptions::default();
        let report = eigensolve(&geom, &ConformalFamily::new(f.clone(), 0.0).unwrap(), 2, &opts).unwrap();
        let cluster = &report.clusters[report.pair(1).unwrap().cluster];
        let branches = cluster_branches(&geom, &f, cluster).unwrap();
        assert_eq!(branches.len(), 2);
        assert!(branches[1].derivative - branches[0].derivative > 0.1);
        for (b, branch) in branches.iter().enumerate() {
            let fd = fd_derivative(&geom, &f, BranchSelector { index: 1, branch: b }, 1e-3, &opts).unwrap();
            assert!((fd.fd - branch.derivative).abs() < 1e-4, "{fd:?}");
        }
    }

    #[test]
    fn first_order_consistency_along_simple_branch() {
        let geom = square(&[0.5, 0.0], 16);
        let f = random_f(&geom, 4);
        let opts = SolverOptions::default();
        let base = eigensolve(&geom, &ConformalFamily::new(f.clone(), 0.0).unwrap(), 2, &opts).unwrap();
        let p0 = base.pair(1).unwrap();
        let d = eigenvalue_derivative(&geom, &f, p0).unwrap();
        let mut defects = Vec::new();
        for t in [1e-2, 5e-3] {
            let fam = ConformalFamily::new(f.clone(), t).unwrap();
            let rep = eigensolve(&geom, &fam, 2, &opts).unwrap();
            let (c, _) = best_match(&geom, &[p0.psi.clone()], &rep).unwrap();
            let psi = &c.basis[0];
            let mut r = geom.dirac_conformal(&fam, psi).unwrap();
            r.axpy(Complex64::from(-(p0.lambda + t * d)), psi);
            defects.push(geom.l2_norm(&r).unwrap());
        }
        // second order: halving t quarters the defect
        assert!(defects[0] / defects[1] > 3.0, "{defects:?}");
    }

    #[test]
    fn homothety_never_splits() {
        let geom = square(&[0.5, 0.5], 16);
        let f = vec![1.0; geom.num_points()];
        let rep = split_experiment(&geom, &f, 1, &[0.0, 0.1, 0.2], &SolverOptions::default()).unwrap();
        assert_eq!(rep.split_t, None);
        assert!(!rep.final_all_simple);
        assert!(rep.rows.iter().all(|r| !r.simple));
        let last = rep.rows.last().unwrap();
        assert!((last.lambda - PI * 2f64.sqrt() / 1.2f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn random_f_splits_four_dimensional_cluster() {
        let geom = square(&[0.5, 0.5], 16);
        let f = random_f(&geom, 11);
        let grid: Vec<f64> = (0..=4).map(|i| 0.05 * i as f64).collect();
        let rep = split_experiment(&geom, &f, 1, &grid, &SolverOptions::default()).unwrap();
        assert_eq!(rep.initial_dim, 4);
        assert!(rep.final_all_simple, "{}", rep.to_csv());
        assert!(rep.split_t.unwrap() <= 0.2);
        assert!(rep.to_csv().starts_with("t,branch,lambda,simple,min_gap\n"));
    }
}
