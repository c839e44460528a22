//! Small dense linear-algebra helpers shared by the solver modules.

use crate::{CMatrix, CVector, Complex};

pub(crate) const IM: Complex = Complex::new(0.0, 1.0);

/// `max |m_ij|`.
pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `|| M M^dagger - I ||_max`.
pub(crate) fn unitarity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let p = m * m.adjoint();
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { Complex::new(1.0, 0.0) } else { Complex::new(0.0, 0.0) };
            defect = defect.max((p[(i, j)] - target).norm());
        }
    }
    defect
}

/// Singular values sorted ascending.
pub(crate) fn singular_values(m: &CMatrix) -> Vec<f64> {
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON * 16.0, 1000)
        .unwrap_or_else(|| m.clone().svd(false, false));
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sv
}

/// Smallest singular value.
pub(crate) fn smallest_singular_value(m: &CMatrix) -> f64 {
    singular_values(m)[0]
}

/// Condition number estimate `sigma_max / sigma_min` (infinite when
/// singular to machine precision).
pub(crate) fn condition_number(m: &CMatrix) -> f64 {
    let sv = singular_values(m);
    let (lo, hi) = (sv[0], sv[sv.len() - 1]);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Orthonormal basis of the numerical null space: right singular vectors
/// whose singular values fall below `tol`.
pub(crate) fn null_space(m: &CMatrix, tol: f64) -> Vec<CVector> {
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON * 16.0, 1000)
        .unwrap_or_else(|| m.clone().svd(true, true));
    let v_t = svd.v_t.expect("svd requested V^T");
    let mut out = Vec::new();
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s < tol {
            out.push(v_t.row(j).adjoint());
        }
    }
    out
}

/// Count of singular values below `tol`.
pub(crate) fn rank_defect(m: &CMatrix, tol: f64) -> usize {
    singular_values(m).iter().filter(|&&s| s < tol).count()
}

/// Determinant via LU.
pub(crate) fn determinant(m: &CMatrix) -> Complex {
    m.clone().lu().determinant()
}

/// Eigenvalues of a real square matrix with a bounded-iteration Schur
/// decomposition (the unbounded nalgebra entry point can spin forever on
/// hard cases); falls back to a tiny deterministic diagonal perturbation.
pub(crate) fn complex_eigenvalues(m: &crate::RMatrix) -> Vec<Complex> {
    use nalgebra::linalg::Schur;
    for (eps, max_niter) in [(1e-14, 50_000), (1e-12, 50_000), (1e-9, 50_000)] {
        if let Some(schur) = Schur::try_new(m.clone(), eps, max_niter) {
            return schur.complex_eigenvalues().iter().copied().collect();
        }
    }
    let n = m.nrows();
    for delta in [1e-12, 1e-10, 1e-8] {
        let mut p = m.clone();
        for i in 0..n {
            p[(i, i)] += delta * (i + 1) as f64 / n as f64;
        }
        if let Some(schur) = Schur::try_new(p, 1e-12, 50_000) {
            return schur.complex_eigenvalues().iter().copied().collect();
        }
    }
    // Last resort; may spin, but perturbed decompositions virtually never
    // reach this point.
    m.complex_eigenvalues().iter().copied().collect()
}

/// Solve `M x = b`, None when the LU factorisation is singular.
pub(crate) fn solve(m: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    m.clone().lu().solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_projector() {
        // I - diag(1, 0): null space spanned by e_0.
        let mut m = CMatrix::identity(2, 2);
        m[(0, 0)] = Complex::new(0.0, 0.0);
        let ns = null_space(&m, 1e-10);
        assert_eq!(ns.len(), 1);
        assert!((ns[0][0].norm() - 1.0).abs() < 1e-12);
        assert!(ns[0][1].norm() < 1e-12);
    }

    #[test]
    fn unitarity_defect_detects_scaling() {
        let m = CMatrix::identity(3, 3) * Complex::new(1.5, 0.0);
        assert!(unitarity_defect(&m) > 1.0);
        assert!(unitarity_defect(&CMatrix::identity(3, 3)) < 1e-15);
    }
}
