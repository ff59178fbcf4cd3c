//! Clifford multiplication on the spinor fiber for dimensions 2 and 3.
//!
//! Both dimensions use the complex fiber `C^2` (`2^[n/2] = 2`). The gamma
//! matrices are fixed once for the whole crate:
//!
//! ```text
//! gamma_1 = i sigma_1 = [[0, i], [i, 0]]
//! gamma_2 = i sigma_2 = [[0, 1], [-1, 0]]
//! gamma_3 = i sigma_3 = [[i, 0], [0, -i]]      (n = 3 only)
//! ```
//!
//! so the `n = 2` fiber is the `n = 3` fiber with `gamma_3` dropped. Each
//! gamma is skew-Hermitian and `gamma_i gamma_j + gamma_j gamma_i = -2 delta_ij`.
//! The `n = 3` volume element `gamma_1 gamma_2 gamma_3` equals `+Id`.
//!
//! The quaternionic structure is `J(phi) = Q * conj(phi)` with
//! `Q = [[0, -1], [1, 0]]`: it satisfies `J^2 = -Id` and commutes with every
//! gamma.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex dimension of the spinor fiber for `n` in {2, 3}.
pub const FIBER_DIM: usize = 2;

pub type Spinor = Vector2<Complex64>;
pub type FiberMatrix = Matrix2<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn gamma_matrix(index: usize) -> FiberMatrix {
    match index {
        0 => FiberMatrix::new(ZERO, I, I, ZERO),
        1 => FiberMatrix::new(ZERO, ONE, -ONE, ZERO),
        2 => FiberMatrix::new(I, ZERO, ZERO, -I),
        _ => unreachable!("gamma index out of range"),
    }
}

/// Matrix part of the quaternionic structure.
pub fn quaternionic_matrix() -> FiberMatrix {
    FiberMatrix::new(ZERO, -ONE, ONE, ZERO)
}

/// Clifford data for one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorFiber {
    dim: usize,
    gammas: Vec<FiberMatrix>,
    j_matrix: FiberMatrix,
}

/// Builds the fiber for `n` in {2, 3}.
pub fn make_fiber(n: usize) -> Result<SpinorFiber> {
    if !(2..=3).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    Ok(SpinorFiber {
        dim: n,
        gammas: (0..n).map(gamma_matrix).collect(),
        j_matrix: quaternionic_matrix(),
    })
}

impl SpinorFiber {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fiber_dim(&self) -> usize {
        FIBER_DIM
    }

    pub fn gamma(&self, i: usize) -> &FiberMatrix {
        &self.gammas[i]
    }

    pub fn gammas(&self) -> &[FiberMatrix] {
        &self.gammas
    }

    pub fn j_matrix(&self) -> &FiberMatrix {
        &self.j_matrix
    }

    /// The matrix `sum_i x_i gamma_i`.
    pub fn vector_matrix(&self, x: &[f64]) -> FiberMatrix {
        assert_eq!(x.len(), self.dim, "vector dimension mismatch");
        self.gammas
            .iter()
            .zip(x)
            .fold(FiberMatrix::zeros(), |acc, (g, &xi)| acc + g * Complex64::from(xi))
    }

    /// `X . phi`.
    pub fn clifford_mul(&self, x: &[f64], phi: &Spinor) -> Spinor {
        self.vector_matrix(x) * phi
    }

    /// Quaternionic structure `J`.
    pub fn quaternionic(&self, phi: &Spinor) -> Spinor {
        self.j_matrix * phi.map(|z| z.conj())
    }

    /// `gamma_1 ... gamma_n`.
    pub fn volume_element(&self) -> FiberMatrix {
        self.gammas
            .iter()
            .fold(FiberMatrix::identity(), |acc, g| acc * g)
    }

    /// Real-orthogonal basis of the fiber built from a nonzero spinor:
    /// `(phi, e1.phi, e2.phi, e1.e2.phi)` for `n = 2` and
    /// `(phi, e1.phi, e2.phi, e3.phi)` for `n = 3`.
    pub fn real_orthogonal_basis(&self, phi: &Spinor) -> Result<Vec<Spinor>> {
        if phi.norm() == 0.0 {
            return Err(Error::ZeroSpinor);
        }
        let mut basis = vec![*phi];
        basis.extend(self.gammas.iter().map(|g| g * phi));
        if self.dim == 2 {
            basis.push(self.gammas[0] * self.gammas[1] * phi);
        }
        Ok(basis)
    }
}

/// Hermitian inner product, complex-linear in the first slot.
pub fn inner(a: &Spinor, b: &Spinor) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// `Re <a, b>`.
pub fn real_inner(a: &Spinor, b: &Spinor) -> f64 {
    inner(a, b).re
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spinor(a: f64, b: f64, c: f64, d: f64) -> Spinor {
        Spinor::new(Complex64::new(a, b), Complex64::new(c, d))
    }

    #[test]
    fn clifford_relations_are_exact() {
        for n in 2..=3 {
            let fiber = make_fiber(n).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let anti = fiber.gamma(i) * fiber.gamma(j) + fiber.gamma(j) * fiber.gamma(i);
                    let expected = if i == j {
                        FiberMatrix::identity() * Complex64::from(-2.0)
                    } else {
                        FiberMatrix::zeros()
                    };
                    assert_eq!(anti, expected, "n={n} i={i} j={j}");
                }
                assert_eq!(fiber.gamma(i).adjoint(), -fiber.gamma(i));
            }
        }
    }

    #[test]
    fn quaternionic_structure() {
        let fiber = make_fiber(2).unwrap();
        let phi = spinor(1.0, 0.0, 0.0, 0.0);
        assert_eq!(fiber.quaternionic(&fiber.quaternionic(&phi)), -phi);
        for n in 2..=3 {
            let fiber = make_fiber(n).unwrap();
            let q = fiber.j_matrix();
            assert_eq!(q * q.map(|z| z.conj()), -FiberMatrix::identity());
            for g in fiber.gammas() {
                assert_eq!(q * g.map(|z| z.conj()), g * q);
            }
        }
    }

    /// The commutation constraints `Q conj(gamma_i) = gamma_i Q` (i = 1..3)
    /// cut out a one-dimensional complex line; the frozen matrix spans it.
    #[test]
    fn frozen_j_matrix_solves_the_constraints() {
        let fiber = make_fiber(3).unwrap();
        // Unknown Q as 8 real parameters; each constraint is real-linear.
        let basis: Vec<FiberMatrix> = (0..8)
            .map(|k| {
                let mut m = FiberMatrix::zeros();
                let v = if k % 2 == 0 { ONE } else { I };
                m[(k / 4, (k / 2) % 2)] = v;
                m
            })
            .collect();
        let mut rows = Vec::new();
        for g in fiber.gammas() {
            let cols: Vec<FiberMatrix> = basis
                .iter()
                .map(|b| b * g.map(|z| z.conj()) - g * b)
                .collect();
            for r in 0..2 {
                for c in 0..2 {
                    rows.push(cols.iter().map(|m| m[(r, c)].re).collect::<Vec<_>>());
                    rows.push(cols.iter().map(|m| m[(r, c)].im).collect::<Vec<_>>());
                }
            }
        }
        let a = nalgebra::DMatrix::from_fn(rows.len(), 8, |i, j| rows[i][j]);
        let svd = a.svd(false, false);
        let null_dim = svd.singular_values.iter().filter(|s| **s < 1e-12).count();
        assert_eq!(null_dim, 2);
        let q = quaternionic_matrix();
        for g in fiber.gammas() {
            assert_eq!(q * g.map(|z| z.conj()), g * q);
        }
    }

    #[test]
    fn volume_element_is_scalar() {
        let fiber = make_fiber(3).unwrap();
        assert_eq!(fiber.volume_element(), FiberMatrix::identity());
    }

    #[test]
    fn unsupported_dimension() {
        assert!(matches!(make_fiber(4), Err(Error::UnsupportedDimension(4))));
        assert!(make_fiber(1).is_err());
    }

    #[test]
    fn zero_vector_acts_as_zero() {
        let fiber = make_fiber(3).unwrap();
        let phi = spinor(0.3, -1.0, 2.0, 0.5);
        assert_eq!(fiber.clifford_mul(&[0.0; 3], &phi), Spinor::zeros());
    }

    #[test]
    fn real_basis_examples() {
        let fiber = make_fiber(3).unwrap();
        let phi = spinor(1.0, 0.0, 0.0, 0.0);
        let basis = fiber.real_orthogonal_basis(&phi).unwrap();
        assert_eq!(basis.len(), 4);
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_eq!(real_inner(a, b), expected);
            }
        }

        // n = 2: the four spinors span C^2 = R^4.
        let fiber = make_fiber(2).unwrap();
        let phi = spinor(0.0, 0.0, 1.0, 0.0);
        let basis = fiber.real_orthogonal_basis(&phi).unwrap();
        let m = nalgebra::Matrix4::from_fn(|r, c| {
            let s = basis[c];
            [s[0].re, s[0].im, s[1].re, s[1].im][r]
        });
        assert!(m.determinant().abs() > 0.5);

        let doubled = fiber.real_orthogonal_basis(&(phi * Complex64::from(2.0))).unwrap();
        for (a, b) in doubled.iter().zip(&basis) {
            assert_eq!(*a, b * Complex64::from(2.0));
        }
        assert!(matches!(
            fiber.real_orthogonal_basis(&Spinor::zeros()),
            Err(Error::ZeroSpinor)
        ));
    }

    fn arb_spinor() -> impl Strategy<Value = Spinor> {
        prop::array::uniform4(-2.0f64..2.0).prop_map(|v| spinor(v[0], v[1], v[2], v[3]))
    }

    proptest! {
        #[test]
        fn square_of_vector_is_minus_norm(x in prop::array::uniform3(-3.0f64..3.0), phi in arb_spinor()) {
            let fiber = make_fiber(3).unwrap();
            let xx = fiber.clifford_mul(&x, &fiber.clifford_mul(&x, &phi));
            let norm2: f64 = x.iter().map(|v| v * v).sum();
            prop_assert!((xx + phi * Complex64::from(norm2)).norm() <= 1e-12 * (1.0 + norm2) * (1.0 + phi.norm()));
        }

        #[test]
        fn polarized_norm_identity(
            x in prop::array::uniform3(-3.0f64..3.0),
            y in prop::array::uniform3(-3.0f64..3.0),
            phi in arb_spinor(),
        ) {
            let fiber = make_fiber(3).unwrap();
            let lhs = real_inner(&fiber.clifford_mul(&x, &phi), &fiber.clifford_mul(&y, &phi));
            let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs = xy * phi.norm_squared();
            prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + rhs.abs() + phi.norm_squared() * 9.0));
            // Skew symmetry: Re <X.phi, phi> = 0.
            prop_assert!(real_inner(&fiber.clifford_mul(&x, &phi), &phi).abs() <= 1e-11 * (1.0 + phi.norm_squared() * 3.0));
        }

        #[test]
        fn unit_vectors_act_isometrically(theta in 0.0f64..std::f64::consts::TAU, phi in arb_spinor()) {
            let fiber = make_fiber(2).unwrap();
            let x = [theta.cos(), theta.sin()];
            prop_assert!((fiber.clifford_mul(&x, &phi).norm() - phi.norm()).abs() <= 1e-12 * (1.0 + phi.norm()));
        }

        #[test]
        fn j_is_antilinear_isometry(phi in arb_spinor(), psi in arb_spinor()) {
            let fiber = make_fiber(3).unwrap();
            let jphi = fiber.quaternionic(&phi);
            let jpsi = fiber.quaternionic(&psi);
            prop_assert!((real_inner(&jphi, &jpsi) - real_inner(&phi, &psi)).abs() <= 1e-12 * (1.0 + phi.norm() * psi.norm()));
            let j_i_phi = fiber.quaternionic(&(phi * I));
            prop_assert!((j_i_phi + jphi * I).norm() <= 1e-12 * (1.0 + phi.norm()));
        }
    }
}
