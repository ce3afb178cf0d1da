//! Construction and validation of the target matrix toward which the
//! subset covariance is shrunk.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::univariate::kendall_tau;

/// Maximum allowed ratio of extreme eigenvalues for a well-conditioned matrix.
pub const CONDITION_MAX: f64 = 1000.0;

/// Upper clamp on the equicorrelation parameter, keeping the target away
/// from the singular c = 1 boundary.
pub const EQUICORR_MAX: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    Identity,
    Equicorrelation { c: f64 },
    Custom,
}

/// A symmetric positive definite target matrix with its cached
/// eigendecomposition T = Q diag(lambda) Q'.
#[derive(Debug, Clone)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub matrix: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub lambda: DVector<f64>,
}

impl TargetSpec {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn condition_number(&self) -> f64 {
        let max = self.lambda.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.lambda.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }
}

/// The identity target. The eigenbasis is pinned to Q = I, lambda = 1 so
/// that downstream transforms are exact identity maps.
pub fn identity_target(p: usize) -> Result<TargetSpec> {
    if p == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: 0,
        });
    }
    Ok(TargetSpec {
        kind: TargetKind::Identity,
        matrix: DMatrix::identity(p, p),
        q: DMatrix::identity(p, p),
        lambda: DVector::from_element(p, 1.0),
    })
}

/// Equicorrelation target c J + (1 - c) I estimated from standardized data.
///
/// The parameter c is the average over all variable pairs of
/// sin(pi/2 * tau), clamped to [-1/(p-1) + 0.1, 0.99]. The eigenstructure
/// is closed form: eigenvalue 1 + (p-1)c once and 1 - c with multiplicity
/// p - 1.
pub fn equicorrelation_target(u: &DMatrix<f64>) -> Result<TargetSpec> {
    let p = u.ncols();
    if p < 2 {
        return identity_target(p.max(1));
    }
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| u.column(j).iter().copied().collect())
        .collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for j in 0..p {
        for k in (j + 1)..p {
            let tau = kendall_tau(&cols[j], &cols[k])?;
            sum += (std::f64::consts::FRAC_PI_2 * tau.value).sin();
            pairs += 1;
        }
    }
    let raw = sum / pairs as f64;
    let lower = -1.0 / (p as f64 - 1.0) + 0.1;
    let c = raw.clamp(lower, EQUICORR_MAX);
    Ok(equicorrelation_from_c(p, c))
}

/// Builds the equicorrelation target for a given parameter c, with its
/// closed-form eigendecomposition.
pub fn equicorrelation_from_c(p: usize, c: f64) -> TargetSpec {
    let mut matrix = DMatrix::from_element(p, p, c);
    for j in 0..p {
        matrix[(j, j)] = 1.0;
    }
    // Householder reflection mapping e1 to the unit ones vector: its columns
    // form an orthonormal basis whose first column is 1/sqrt(p) * ones.
    let mut q = DMatrix::identity(p, p);
    if p > 1 {
        let mut v = DVector::from_element(p, -1.0 / (p as f64).sqrt());
        v[0] += 1.0;
        let norm2 = v.norm_squared();
        if norm2 > 0.0 {
            q -= (&v * v.transpose()) * (2.0 / norm2);
        }
    }
    let mut lambda = DVector::from_element(p, 1.0 - c);
    lambda[0] = 1.0 + (p as f64 - 1.0) * c;
    TargetSpec {
        kind: TargetKind::Equicorrelation { c },
        matrix,
        q,
        lambda,
    }
}

/// Validates a user-supplied target: symmetry, positive definiteness, and
/// condition number at most 1000. Caches the eigendecomposition.
pub fn validate_target(matrix: DMatrix<f64>) -> Result<TargetSpec> {
    let p = matrix.nrows();
    if p == 0 || matrix.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p.max(1),
            actual: matrix.ncols(),
        });
    }
    let scale = matrix.amax().max(1.0);
    for i in 0..p {
        for j in (i + 1)..p {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    let eig = matrix.clone().symmetric_eigen();
    let mut min = f64::MAX;
    let mut max = f64::MIN;
    for &l in eig.eigenvalues.iter() {
        min = min.min(l);
        max = max.max(l);
    }
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { eigenvalue: min });
    }
    let condition = max / min;
    if condition > CONDITION_MAX {
        return Err(Error::IllConditioned {
            condition,
            max: CONDITION_MAX,
        });
    }
    Ok(TargetSpec {
        kind: TargetKind::Custom,
        matrix,
        q: eig.eigenvectors,
        lambda: eig.eigenvalues,
    })
}

/// Loads a custom target from a square, header-free CSV matrix file.
pub fn target_from_csv(path: &Path) -> Result<TargetSpec> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(|c| c.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|_| Error::NonNumericCell {
            row: i + 1,
            column: String::from("<matrix>"),
        })?);
    }
    let p = rows.len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::Csv(format!("target matrix file is not square ({p} rows)")));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    validate_target(DMatrix::from_row_slice(p, p, &flat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_target_basics() {
        let t = identity_target(3).unwrap();
        assert_eq!(t.matrix, DMatrix::identity(3, 3));
        assert_eq!(t.condition_number(), 1.0);
        assert_eq!(t.matrix.determinant(), 1.0);
    }

    #[test]
    fn equicorrelation_zero_tau_gives_identity_matrix() {
        let t = equicorrelation_from_c(4, 0.0);
        assert_eq!(t.matrix, DMatrix::identity(4, 4));
    }

    #[test]
    fn equicorrelation_lower_clamp() {
        // p = 11: a raw average of -0.5 clamps to -1/10 + 0.1 = 0.
        let lower = -1.0 / 10.0 + 0.1;
        let c = (-0.5f64).clamp(lower, EQUICORR_MAX);
        assert_eq!(c, 0.0);
        // Built from strongly anti-correlated two-column data, p = 2 clamps
        // at -1 + 0.1 = -0.9.
        let n = 40;
        let u = DMatrix::from_fn(n, 2, |i, j| if j == 0 { i as f64 } else { -(i as f64) });
        let t = equicorrelation_target(&u).unwrap();
        match t.kind {
            TargetKind::Equicorrelation { c } => assert!((c - (-0.9)).abs() < 1e-12),
            _ => panic!("expected equicorrelation target"),
        }
    }

    #[test]
    fn equicorrelation_sine_transform_p2() {
        // tau = 0.5 -> c = sin(pi/4).
        let expected = std::f64::consts::FRAC_PI_4.sin();
        let t = equicorrelation_from_c(2, expected);
        assert!((t.matrix[(0, 1)] - 0.70710678).abs() < 1e-7);
        // 2x2 eigenvalues are 1 +/- c, both positive.
        let mut eigs: Vec<f64> = t.lambda.iter().copied().collect();
        eigs.sort_by(|a, b| a.total_cmp(b));
        assert!((eigs[0] - (1.0 - expected)).abs() < 1e-12);
        assert!((eigs[1] - (1.0 + expected)).abs() < 1e-12);
    }

    #[test]
    fn equicorrelation_closed_form_matches_numeric_eigen() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let p = rng.gen_range(2..=50);
            let lower = -1.0 / (p as f64 - 1.0) + 0.1;
            let c = rng.gen_range(lower..0.95);
            let t = equicorrelation_from_c(p, c);
            // Orthonormality of the closed-form basis.
            let qq = t.q.transpose() * &t.q;
            assert!((qq - DMatrix::identity(p, p)).amax() < 1e-10);
            // Reconstruction Q diag(lambda) Q' = R_c.
            let recon = &t.q * DMatrix::from_diagonal(&t.lambda) * t.q.transpose();
            assert!((recon - &t.matrix).amax() < 1e-10);
            // Eigenvalue multiset matches a numeric decomposition.
            let mut numeric: Vec<f64> = t.matrix.symmetric_eigenvalues().iter().copied().collect();
            let mut closed: Vec<f64> = t.lambda.iter().copied().collect();
            numeric.sort_by(|a, b| a.total_cmp(b));
            closed.sort_by(|a, b| a.total_cmp(b));
            for (a, b) in numeric.iter().zip(closed.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
            // PD by construction.
            assert!(closed[0] > 0.0);
        }
    }

    #[test]
    fn validate_rejects_ill_conditioned() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-4]));
        match validate_target(m) {
            Err(Error::IllConditioned { condition, .. }) => {
                assert!((condition - 10000.0).abs() < 1e-6)
            }
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }

    #[test]
    fn validate_accepts_moderate_condition() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let t = validate_target(m).unwrap();
        assert!((t.condition_number() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match validate_target(m) {
            Err(Error::NotPositiveDefinite { eigenvalue }) => {
                assert!((eigenvalue - (-1.0)).abs() < 1e-10)
            }
            other => panic!("expected PD error, got {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(validate_target(m), Err(Error::NotSymmetric)));
    }
}
