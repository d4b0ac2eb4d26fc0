//! Small dense linear-algebra helpers shared by the analysis modules.
//!
//! Matrices in this crate are tiny (the system dimension `d` is typically
//! 1 to 4), so everything here favours clarity over blocking or reuse of
//! workspaces.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Induced matrix norm used for total variations and growth bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MatrixNorm {
    /// Largest singular value.
    #[default]
    #[serde(rename = "op2")]
    Op2,
    /// Maximum absolute column sum.
    #[serde(rename = "op1")]
    Op1,
    /// Maximum absolute row sum.
    #[serde(rename = "opinf")]
    OpInf,
}

impl MatrixNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixNorm::Op2 => "op2",
            MatrixNorm::Op1 => "op1",
            MatrixNorm::OpInf => "opinf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "op2" => Some(MatrixNorm::Op2),
            "op1" => Some(MatrixNorm::Op1),
            "opinf" => Some(MatrixNorm::OpInf),
            _ => None,
        }
    }

    pub fn of(self, m: &Mat) -> f64 {
        if m.nrows() == 1 && m.ncols() == 1 {
            return m[(0, 0)].abs();
        }
        match self {
            MatrixNorm::Op2 => {
                if m.iter().all(|v| *v == 0.0) {
                    0.0
                } else if m.iter().any(|v| !v.is_finite()) {
                    non_finite_norm(m.iter().any(|v| v.is_nan()))
                } else {
                    m.clone()
                        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITER)
                        .map(|svd| svd.singular_values.max())
                        .unwrap_or_else(|| m.norm())
                }
            }
            MatrixNorm::Op1 => (0..m.ncols())
                .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            MatrixNorm::OpInf => (0..m.nrows())
                .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }

    pub fn of_complex(self, m: &CMat) -> f64 {
        if m.nrows() == 1 && m.ncols() == 1 {
            return m[(0, 0)].norm();
        }
        match self {
            MatrixNorm::Op2 => {
                if m.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
                    0.0
                } else if m.iter().any(|v| !v.is_finite()) {
                    non_finite_norm(m.iter().any(|v| v.is_nan()))
                } else {
                    m.clone()
                        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITER)
                        .map(|svd| svd.singular_values.max())
                        .unwrap_or_else(|| frobenius(m))
                }
            }
            MatrixNorm::Op1 => (0..m.ncols())
                .map(|j| m.column(j).iter().map(|v| v.norm()).sum::<f64>())
                .fold(0.0, f64::max),
            MatrixNorm::OpInf => (0..m.nrows())
                .map(|i| m.row(i).iter().map(|v| v.norm()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }
}

/// Iteration cap for SVD and Schur; an unconverged SVD falls back to the
/// Frobenius norm, which bounds the operator 2-norm from above.
const SVD_MAX_ITER: usize = 10_000;

fn non_finite_norm(has_nan: bool) -> f64 {
    if has_nan {
        f64::NAN
    } else {
        f64::INFINITY
    }
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn is_zero(m: &Mat) -> bool {
    m.iter().all(|v| *v == 0.0)
}

pub fn det(m: &CMat) -> Complex64 {
    match m.nrows() {
        0 => Complex64::new(1.0, 0.0),
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().lu().determinant(),
    }
}

/// Adjugate (transposed cofactor matrix); well defined for singular input.
pub fn adjugate(m: &CMat) -> CMat {
    let n = m.nrows();
    match n {
        0 => CMat::zeros(0, 0),
        1 => CMat::from_element(1, 1, Complex64::new(1.0, 0.0)),
        2 => CMat::from_row_slice(2, 2, &[m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]]),
        _ => {
            let mut adj = CMat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let minor = m.clone().remove_row(i).remove_column(j);
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    adj[(j, i)] = det(&minor) * sign;
                }
            }
            adj
        }
    }
}

/// All eigenvalues of a complex square matrix.
pub fn eigenvalues(m: &CMat) -> Vec<Complex64> {
    match m.nrows() {
        0 => Vec::new(),
        1 => vec![m[(0, 0)]],
        2 => {
            let half_tr = (m[(0, 0)] + m[(1, 1)]) * 0.5;
            let d = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = (half_tr * half_tr - d).sqrt();
            let l1 = half_tr + disc;
            let l2 = half_tr - disc;
            // Recover the smaller root from the product to avoid cancellation.
            if l1.norm() >= l2.norm() && l1.norm() > 0.0 {
                vec![l1, d / l1]
            } else if l2.norm() > 0.0 {
                vec![d / l2, l2]
            } else {
                vec![l1, l2]
            }
        }
        n => {
            let nan = Complex64::new(f64::NAN, f64::NAN);
            if m.iter().any(|v| !v.is_finite()) {
                return vec![nan; n];
            }
            match m.clone().try_schur(f64::EPSILON, SVD_MAX_ITER) {
                // Complex Schur yields a triangular factor; read the diagonal.
                Some(schur) => schur.unpack().1.diagonal().iter().copied().collect(),
                None => vec![nan; n],
            }
        }
    }
}

pub fn spectral_radius(m: &CMat) -> f64 {
    eigenvalues(m).iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Dominant eigenvalue with right/left eigenvectors and the modulus gap to the
/// next eigenvalue.
#[derive(Debug, Clone)]
pub struct DominantEigen {
    pub value: Complex64,
    pub right: CVec,
    pub left: CVec,
    pub gap: f64,
}

pub fn dominant_eigen(m: &CMat) -> DominantEigen {
    let n = m.nrows();
    let mut eig = eigenvalues(m);
    eig.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let value = eig[0];
    let gap = if n > 1 { eig[0].norm() - eig[1].norm() } else { f64::INFINITY };
    let right = null_vector(&(m - CMat::identity(n, n) * value));
    let left = null_vector(&(m.adjoint() - CMat::identity(n, n) * value.conj()));
    DominantEigen { value, right, left, gap }
}

/// Approximate null vector of a (numerically) singular matrix: the right
/// singular vector of the smallest singular value.
pub fn null_vector(a: &CMat) -> CVec {
    let n = a.ncols();
    if n == 1 {
        return CVec::from_element(1, Complex64::new(1.0, 0.0));
    }
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc });
    v_t.row(imin).adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn norms_of_simple_matrix() {
        let m = Mat::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(MatrixNorm::Op1.of(&m), 6.0);
        assert_eq!(MatrixNorm::OpInf.of(&m), 7.0);
        let s = MatrixNorm::Op2.of(&m);
        // sigma_max^2 is the largest eigenvalue of M^T M = [[10,10],[10,20]].
        let expected = (15.0 + (25.0f64 + 100.0).sqrt()).sqrt();
        assert!((s - expected).abs() < 1e-12);
    }

    #[test]
    fn eigenvalue_paths_agree() {
        let m = CMat::from_row_slice(
            3,
            3,
            &[
                Complex64::new(0.1, 0.3),
                c(0.5),
                c(0.0),
                c(-0.2),
                c(0.4),
                Complex64::new(0.0, 1.0),
                c(0.3),
                c(0.0),
                c(-0.7),
            ],
        );
        let sum: Complex64 = eigenvalues(&m).iter().sum();
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        assert!((sum - tr).norm() < 1e-12);
        let prod: Complex64 = eigenvalues(&m).iter().product();
        assert!((prod - det(&m)).norm() < 1e-12);
    }

    #[test]
    fn adjugate_identity() {
        let m = CMat::from_row_slice(
            3,
            3,
            &[c(2.0), c(1.0), c(0.0), c(0.0), c(3.0), c(1.0), c(1.0), c(0.0), c(1.0)],
        );
        let prod = &m * adjugate(&m);
        let d = det(&m);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { d } else { c(0.0) };
                assert!((prod[(i, j)] - e).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dominant_eigenvectors() {
        let m = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.25), c(0.0)]);
        let de = dominant_eigen(&m);
        assert!((de.value.norm() - 0.5).abs() < 1e-12);
        let r = &m * &de.right - &de.right * de.value;
        assert!(r.norm() < 1e-10);
        let l = m.adjoint() * &de.left - &de.left * de.value.conj();
        assert!(l.norm() < 1e-10);
    }
}
