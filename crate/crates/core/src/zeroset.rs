//! Zeros of eigenspinors on flat tori, the genericity experiment, and two
//! closed formulas: the zero-order budget of harmonic spinors on surfaces
//! and the Â-genus of even-dimensional complete intersections.
//!
//! A grid can only certify quantitative lower bounds on `|psi|`, so every
//! candidate zero carries its refined minimum and a resolution caveat.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::Spinor;
use crate::spectral::{eigensolve, Simplicity, SolverOptions};
use crate::torus::{ConformalFamily, SpinorField, TorusSpinGeometry, TrigPolynomial};
use crate::{Error, Result};

/// Bandwidth of the random conformal factors.
pub const TRIAL_BANDWIDTH: i64 = 3;

/// Sup norm of `t0 f` for the random conformal factors.
pub const TRIAL_AMPLITUDE: f64 = 0.3;

/// Refined minimum of `|psi|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinModulus {
    pub value: f64,
    /// Grid multi-index of the sampled minimum.
    pub grid_index: Vec<usize>,
    pub grid_value: f64,
    /// Refined location in lattice coordinates.
    pub location: Vec<f64>,
}

fn stencil(n: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::with_capacity(3usize.pow(n as u32));
    for mut p in 0..3usize.pow(n as u32) {
        let mut o = vec![0i64; n];
        for slot in o.iter_mut().rev() {
            *slot = (p % 3) as i64 - 1;
            p /= 3;
        }
        out.push(o);
    }
    out
}

/// Field samples with the trigonometric coefficients needed for
/// off-grid evaluation.
struct Sampled<'a> {
    geom: &'a TorusSpinGeometry,
    psi: &'a SpinorField,
    coeffs: SpinorField,
    offsets: Vec<Vec<i64>>,
}

impl<'a> Sampled<'a> {
    fn new(geom: &'a TorusSpinGeometry, psi: &'a SpinorField) -> Result<Self> {
        Ok(Self { geom, psi, coeffs: geom.spinor_coefficients(psi)?, offsets: stencil(geom.dim()) })
    }

    fn neighbour(&self, idx: &[usize], o: &[i64]) -> usize {
        let shifted: Vec<i64> = idx.iter().zip(o).map(|(&i, &d)| i as i64 + d).collect();
        self.geom.flat_index(&shifted)
    }

    fn is_local_min(&self, p: usize) -> bool {
        let idx = self.geom.grid_index(p);
        let v = self.psi.modulus_at(p);
        self.offsets.iter().all(|o| self.psi.modulus_at(self.neighbour(&idx, o)) >= v)
    }

    /// Quadratic least-squares fit of `|psi|^2` on the stencil around grid
    /// point `p`, followed by damped Gauss-Newton steps on the
    /// trigonometric interpolant, confined to the surrounding cells.
    fn refine(&self, p: usize) -> MinModulus {
        let geom = self.geom;
        let n = geom.dim();
        let idx = geom.grid_index(p);
        let step: Vec<f64> = geom.grid().iter().map(|&g| 1.0 / g as f64).collect();
        let base: Vec<f64> = geom.lattice_coords(p);
        let grid_value = self.psi.modulus_at(p);

        // quadratic model q(u) = c + g.u + 1/2 u^T H u in grid-step units
        let params = 1 + n + n * (n + 1) / 2;
        let rows = self.offsets.len();
        let mut a = DMatrix::<f64>::zeros(rows, params);
        let mut rhs = DVector::<f64>::zeros(rows);
        for (r, o) in self.offsets.iter().enumerate() {
            let u: Vec<f64> = o.iter().map(|&d| d as f64).collect();
            let mut c = 0;
            a[(r, c)] = 1.0;
            c += 1;
            for ui in &u {
                a[(r, c)] = *ui;
                c += 1;
            }
            for i in 0..n {
                for j in i..n {
                    a[(r, c)] = if i == j { 0.5 * u[i] * u[i] } else { u[i] * u[j] };
                    c += 1;
                }
            }
            rhs[r] = self.psi.modulus_at(self.neighbour(&idx, o)).powi(2);
        }
        let mut start = base.clone();
        if let Ok(sol) = a.clone().svd(true, true).solve(&rhs, 1e-12) {
            let g = DVector::from_iterator(n, (0..n).map(|i| sol[1 + i]));
            let mut h = DMatrix::<f64>::zeros(n, n);
            let mut c = 1 + n;
            for i in 0..n {
                for j in i..n {
                    h[(i, j)] = sol[c];
                    h[(j, i)] = sol[c];
                    c += 1;
                }
            }
            if let Some(chol) = h.cholesky() {
                let u = chol.solve(&(-g));
                if u.iter().all(|v| v.abs() <= 1.0) {
                    start = (0..n).map(|i| base[i] + u[i] * step[i]).collect();
                }
            }
        }

        let eval = |s: &[f64]| geom.interpolate(&self.coeffs, s).norm();
        let mut s = start;
        let mut value = eval(&s);
        if value > grid_value {
            s = base.clone();
            value = grid_value;
        }
        for _ in 0..12 {
            let (v, grad) = geom.interpolate_with_gradient(&self.coeffs, &s);
            // real least squares: residual in R^4, Jacobian 4 x n
            let mut jac = DMatrix::<f64>::zeros(4, n);
            let res = DVector::from_vec(vec![v[0].re, v[0].im, v[1].re, v[1].im]);
            for (k, gk) in grad.iter().enumerate() {
                jac[(0, k)] = gk[0].re;
                jac[(1, k)] = gk[0].im;
                jac[(2, k)] = gk[1].re;
                jac[(3, k)] = gk[1].im;
            }
            let Ok(delta) = jac.clone().svd(true, true).solve(&(-&res), 1e-14) else {
                break;
            };
            let mut damping = 1.0;
            let mut improved = false;
            while damping > 1e-3 {
                let trial: Vec<f64> = (0..n).map(|i| s[i] + damping * delta[i]).collect();
                let inside = (0..n).all(|i| (trial[i] - base[i]).abs() <= step[i]);
                if inside {
                    let tv = eval(&trial);
                    if tv < value {
                        s = trial;
                        value = tv;
                        improved = true;
                        break;
                    }
                }
                damping *= 0.5;
            }
            if !improved || value < 1e-15 {
                break;
            }
        }
        MinModulus { value, grid_index: idx, grid_value, location: s }
    }

    /// Bound on `|grad psi|` from the Fourier coefficients.
    fn lipschitz(&self) -> f64 {
        let g = self.geom.num_points();
        (0..g)
            .map(|p| {
                let k = self.geom.spin_frequency_at(p);
                let kn = k.iter().map(|v| v * v).sum::<f64>().sqrt();
                let c = Spinor::new(self.coeffs.data()[p], self.coeffs.data()[g + p]).norm();
                2.0 * std::f64::consts::PI * kn * c
            })
            .sum()
    }
}

/// Grid minimum of `|psi|` (ties broken by lexicographic grid order) with a
/// sub-grid refinement around it.
pub fn min_modulus(geom: &TorusSpinGeometry, psi: &SpinorField) -> Result<MinModulus> {
    if psi.grid() != geom.grid() {
        return Err(Error::GeometryMismatch);
    }
    let sampled = Sampled::new(geom, psi)?;
    let mut best = 0;
    for p in 1..geom.num_points() {
        // flat order is lexicographic, so strict comparison keeps the first
        if psi.modulus_at(p) < psi.modulus_at(best) {
            best = p;
        }
    }
    Ok(sampled.refine(best))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroCandidate {
    pub grid_index: Vec<usize>,
    /// Lattice coordinates.
    pub location: Vec<f64>,
    pub physical: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroReport {
    pub threshold: f64,
    /// Bound on `|grad psi|` used for the default threshold.
    pub lipschitz: f64,
    pub grid_spacing: f64,
    pub candidates: Vec<ZeroCandidate>,
    /// Always set: the report certifies only grid-scale lower bounds.
    pub grid_resolution_limited: bool,
}

impl ZeroReport {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Default threshold: `1e-4` times the grid-scale Lipschitz bound.
pub fn default_threshold(geom: &TorusSpinGeometry, psi: &SpinorField) -> Result<f64> {
    let sampled = Sampled::new(geom, psi)?;
    Ok(1e-4 * sampled.lipschitz() * geom.grid_spacing())
}

/// Refined local minima of `|psi|` below `threshold` (default when `None`).
pub fn zero_report(geom: &TorusSpinGeometry, psi: &SpinorField, threshold: Option<f64>) -> Result<ZeroReport> {
    if psi.grid() != geom.grid() {
        return Err(Error::GeometryMismatch);
    }
    let sampled = Sampled::new(geom, psi)?;
    let lipschitz = sampled.lipschitz();
    let spacing = geom.grid_spacing();
    let threshold = threshold.unwrap_or(1e-4 * lipschitz * spacing);
    // a minimum inside the surrounding cells can undercut the sample by at
    // most the Lipschitz bound times the cell diameter
    let reach = threshold + lipschitz * spacing * (geom.dim() as f64).sqrt();
    let seeds: Vec<usize> = (0..geom.num_points())
        .filter(|&p| psi.modulus_at(p) < reach && sampled.is_local_min(p))
        .collect();
    let mut candidates: Vec<ZeroCandidate> = seeds
        .par_iter()
        .map(|&p| sampled.refine(p))
        .filter(|m| m.value < threshold)
        .map(|m| ZeroCandidate {
            physical: geom.to_physical(&m.location),
            grid_index: m.grid_index,
            location: m.location,
            value: m.value,
        })
        .collect();
    candidates.sort_by(|a, b| a.grid_index.cmp(&b.grid_index));
    Ok(ZeroReport { threshold, lipschitz, grid_spacing: spacing, candidates, grid_resolution_limited: true })
}

/// Positive eigenvector of `i k.gamma` (eigenvalue `|k|`).
fn positive_spinor(geom: &TorusSpinGeometry, k: &[f64]) -> Spinor {
    let m = geom.fiber().vector_matrix(k) * Complex64::new(0.0, 1.0);
    let mu = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let v1 = Spinor::new(b, Complex64::from(mu) - a);
    let v2 = Spinor::new(Complex64::from(mu) - d, m[(1, 0)]);
    let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
    v / Complex64::from(v.norm())
}

/// An eigenspinor of the flat 2-torus that vanishes at the lattice point
/// `zero`, built from three plane waves of equal `|k|`.
///
/// Two waves cannot do this: their positive spinors are never parallel, so
/// their sum has no zeros. With three, the condition `psi(zero) = 0` is two
/// complex equations in three coefficients, solved by the vector of signed
/// 2x2 minors.
pub fn three_wave_eigenspinor(geom: &TorusSpinGeometry, modes: &[[i64; 2]; 3], zero: &[f64]) -> Result<(SpinorField, f64)> {
    if geom.dim() != 2 || zero.len() != 2 {
        return Err(Error::UnsupportedDimension(geom.dim()));
    }
    let ks: Vec<Vec<f64>> = modes.iter().map(|b| geom.mode_frequency(b)).collect();
    let norms: Vec<f64> = ks.iter().map(|k| k.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if norms.iter().any(|r| (r - norms[0]).abs() > 1e-12 * norms[0].max(1.0)) || norms[0] == 0.0 {
        return Err(Error::InvalidArgument("modes need equal nonzero |k|".into()));
    }
    let sigmas: Vec<Spinor> = ks.iter().map(|k| positive_spinor(geom, k)).collect();
    let cols: Vec<Spinor> = modes
        .iter()
        .zip(&sigmas)
        .map(|(b, s)| {
            let phase: f64 = (0..2).map(|a| (b[a] as f64 + geom.delta()[a]) * zero[a]).sum();
            s * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase)
        })
        .collect();
    let det = |u: &Spinor, v: &Spinor| u[0] * v[1] - u[1] * v[0];
    let coeffs = [det(&cols[1], &cols[2]), -det(&cols[0], &cols[2]), det(&cols[0], &cols[1])];
    let mut psi = SpinorField::zeros(geom.grid());
    for ((b, s), c) in modes.iter().zip(&sigmas).zip(coeffs) {
        psi.axpy(c, &geom.plane_wave(b, s));
    }
    let norm = geom.l2_norm(&psi)?;
    if norm == 0.0 {
        return Err(Error::ZeroSpinor);
    }
    psi.scale(Complex64::from(1.0 / norm));
    Ok((psi, 2.0 * std::f64::consts::PI * norms[0]))
}

/// Outcome of one genericity trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub all_simple: bool,
    pub nowhere_zero: bool,
    /// Refined minimum of `|psi|` per enumerated pair, `lambda_{-m}` first.
    pub min_moduli: Vec<f64>,
    pub candidates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericityStats {
    pub trials: usize,
    pub solver_failures: usize,
    pub all_simple_count: usize,
    pub all_nowhere_zero_count: usize,
    /// Trials that are both all-simple and all-nowhere-zero.
    pub generic_count: usize,
    pub per_trial: Vec<TrialRecord>,
}

impl GenericityStats {
    fn from_records(per_trial: Vec<TrialRecord>) -> Self {
        let ok = |r: &&TrialRecord| r.error.is_none();
        Self {
            trials: per_trial.len(),
            solver_failures: per_trial.iter().filter(|r| r.error.is_some()).count(),
            all_simple_count: per_trial.iter().filter(ok).filter(|r| r.all_simple).count(),
            all_nowhere_zero_count: per_trial.iter().filter(ok).filter(|r| r.nowhere_zero).count(),
            generic_count: per_trial.iter().filter(ok).filter(|r| r.all_simple && r.nowhere_zero).count(),
            per_trial,
        }
    }
}

/// Checks simplicity and zero-freeness of the eigenspinors to
/// `lambda_{-m}, ..., lambda_m` for one conformal factor.
pub fn evaluate_trial(
    geom: &TorusSpinGeometry,
    fam: &ConformalFamily,
    m: usize,
    opts: &SolverOptions,
    trial: usize,
) -> Result<TrialRecord> {
    let report = eigensolve(geom, fam, m, opts)?;
    let all_simple = report
        .pairs
        .iter()
        .all(|p| report.clusters[p.cluster].simplicity == Simplicity::Simple);
    let mut min_moduli = Vec::with_capacity(report.pairs.len());
    let mut candidates = 0;
    for p in &report.pairs {
        min_moduli.push(min_modulus(geom, &p.psi)?.value);
        candidates += zero_report(geom, &p.psi, None)?.candidates.len();
    }
    Ok(TrialRecord { trial, all_simple, nowhere_zero: candidates == 0, min_moduli, candidates, error: None })
}

/// Random conformal factor of trial `trial`: the master seed seeds a
/// ChaCha8 generator whose stream is set to the trial number, so trials can
/// run in any order. The factor is rescaled to `t0 max|f| = 0.3`.
pub fn trial_factor(geom: &TorusSpinGeometry, seed: u64, trial: usize, t0: f64) -> TrigPolynomial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    TrigPolynomial::random(geom.dim(), TRIAL_BANDWIDTH, &mut rng).normalized(geom, TRIAL_AMPLITUDE / t0)
}

/// Runs `trials` seeded random conformal deformations at `t0`.
pub fn genericity_trial(
    geom: &TorusSpinGeometry,
    m: usize,
    trials: usize,
    seed: u64,
    t0: f64,
    opts: &SolverOptions,
) -> Result<GenericityStats> {
    if !(t0 > 0.0) {
        return Err(Error::NonPositiveArgument(t0));
    }
    let records: Vec<TrialRecord> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let f = trial_factor(geom, seed, i, t0).sample(geom);
            let outcome = ConformalFamily::new(f, t0).and_then(|fam| evaluate_trial(geom, &fam, m, opts, i));
            outcome.unwrap_or_else(|e| TrialRecord {
                trial: i,
                all_simple: false,
                nowhere_zero: false,
                min_moduli: Vec::new(),
                candidates: 0,
                error: Some(e.to_string()),
            })
        })
        .collect();
    Ok(GenericityStats::from_records(records))
}

/// Total zero order `genus - 1` of a positive harmonic spinor on a closed
/// spin surface of the given genus. For genus 2 with the hyperelliptic spin
/// structure this means a single simple zero; a negative budget means no
/// positive harmonic spinor exists.
pub fn poincare_hopf_budget(genus: u64) -> i64 {
    genus as i64 - 1
}

/// Â-genus `2^{-2k} d / (2k+1)! prod_{j=1}^k (d^2 - 4 j^2)` of a
/// complete intersection `V^{2k}(d)`; its absolute value bounds
/// `dim_C ker D` from below.
pub fn a_hat_complete_intersection(k: u32, d: u64) -> Result<BigRational> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if d < 2 || d % 2 == 1 {
        return Err(Error::InvalidArgument(format!("d must be even and at least 2, got {d}")));
    }
    let d = BigInt::from(d);
    let mut num = d.clone();
    for j in 1..=k {
        let jj = BigInt::from(j);
        num *= &d * &d - BigInt::from(4) * &jj * &jj;
    }
    let mut den = BigInt::one() << (2 * k as usize);
    for i in 2..=(2 * k + 1) {
        den *= BigInt::from(i);
    }
    if den.is_zero() {
        return Err(Error::InvalidArgument("degenerate denominator".into()));
    }
    Ok(BigRational::new(num, den))
}
