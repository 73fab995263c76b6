//! Inversion of symmetric matrices with a pseudo-inverse fallback.

use nalgebra::DMatrix;

/// Eigenvalue ratio below which a symmetric matrix is treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SymInverse {
    pub inverse: DMatrix<f64>,
    /// True when the pseudo-inverse fallback was used.
    pub pseudo: bool,
}

/// Inverts a symmetric matrix, via Cholesky when well conditioned and via an
/// eigenvalue pseudo-inverse when the smallest eigenvalue magnitude is below
/// `SINGULAR_RATIO` times the largest. Returns `None` for non-finite input
/// or the zero matrix.
pub fn sym_inverse(m: &DMatrix<f64>) -> Option<SymInverse> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    if max_abs == 0.0 {
        return None;
    }
    let min_abs = eig.eigenvalues.iter().fold(f64::INFINITY, |a, l| a.min(l.abs()));
    if min_abs >= SINGULAR_RATIO * max_abs {
        if let Some(ch) = sym.clone().cholesky() {
            return Some(SymInverse {
                inverse: ch.inverse(),
                pseudo: false,
            });
        }
        if let Some(inv) = sym.clone().try_inverse() {
            return Some(SymInverse {
                inverse: (&inv + inv.transpose()) * 0.5,
                pseudo: false,
            });
        }
    }
    let cutoff = SINGULAR_RATIO * max_abs;
    let inv_vals = eig
        .eigenvalues
        .map(|l| if l.abs() > cutoff { 1.0 / l } else { 0.0 });
    let inverse = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    Some(SymInverse {
        inverse,
        pseudo: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_matrix_inverts_exactly() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = sym_inverse(&m).unwrap();
        assert!(!r.pseudo);
        let id = &m * &r.inverse;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn singular_matrix_falls_back_to_pseudo_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let r = sym_inverse(&m).unwrap();
        assert!(r.pseudo);
        // Moore–Penrose: M M+ M = M
        let back = &m * &r.inverse * &m;
        assert!((back - m).abs().max() < 1e-12);
        assert!(sym_inverse(&DMatrix::zeros(2, 2)).is_none());
    }

    #[test]
    fn negative_definite_matrix_inverts() {
        let m = DMatrix::from_row_slice(2, 2, &[-2.0, 0.5, 0.5, -1.0]);
        let r = sym_inverse(&m).unwrap();
        assert!(!r.pseudo);
        assert!((&m * &r.inverse - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }
}
