//! Exact minimum 2-norm solves via the SVD.
//!
//! Given inputs `X` (m x r, independent columns) and targets `Y` (n x r) with
//! `r <= n < m`, the matrix `A = Y X^+` maps every `X_i` to `Y_i`, each of its
//! rows is the minimum-norm solution of `a X = Y`, and the minimum-norm
//! solution of `A x = Y_i` is `X_i` itself. This module builds `A`, solves
//! minimum-norm systems and checks those claims numerically.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PcError, PcResult};

/// Relative cutoff applied to the largest singular value, scaled by the
/// larger matrix dimension.
pub const RANK_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MinNormSolution {
    pub x: DVector<f64>,
    /// `|A x - b|_2`.
    pub residual: f64,
    pub solution_norm: f64,
    /// Numerical rank used in the solve.
    pub rank: usize,
}

fn rank_cutoff(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * RANK_RTOL
}

/// Full SVD `a = U diag(s) V^T`, with `U` square in the rows and `V` square
/// in the columns. Singular values are sorted descending.
struct Svd {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
}

impl Svd {
    fn of(a: &DMatrix<f64>) -> PcResult<Svd> {
        let (rows, cols) = a.shape();
        let m = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a[(i, j)]);
        let svd = m
            .svd()
            .map_err(|e| PcError::Domain(format!("SVD did not converge: {e:?}")))?;
        let (u, v) = (svd.U(), svd.V());
        let s = svd.S().column_vector();
        Ok(Svd {
            u: DMatrix::from_fn(rows, rows, |i, j| u[(i, j)]),
            s: DVector::from_fn(rows.min(cols), |k, _| s[k]),
            v: DMatrix::from_fn(cols, cols, |i, j| v[(i, j)]),
        })
    }

    fn sigma_max(&self) -> f64 {
        self.s.iter().copied().fold(0.0, f64::max)
    }
}

/// The minimum-norm least-squares solution of `A x = b`.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> PcResult<MinNormSolution> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Err(PcError::Domain("min-norm solve of an empty matrix".into()));
    }
    if b.len() != rows {
        return Err(PcError::ShapeMismatch(format!(
            "right-hand side has {} entries, matrix has {rows} rows",
            b.len()
        )));
    }
    let svd = Svd::of(a)?;
    let cutoff = rank_cutoff(rows, cols, svd.sigma_max());

    let mut x = DVector::zeros(cols);
    let mut rank = 0;
    for (k, &s) in svd.s.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let coeff = svd.u.column(k).dot(b) / s;
            x.axpy(coeff, &svd.v.column(k), 1.0);
            rank += 1;
        }
    }
    let residual = (a * &x - b).norm();
    Ok(MinNormSolution {
        solution_norm: x.norm(),
        x,
        residual,
        rank,
    })
}

/// Numerical rank of `a` under the module's cutoff.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let Ok(svd) = Svd::of(a) else {
        return 0;
    };
    let cutoff = rank_cutoff(a.nrows(), a.ncols(), svd.sigma_max());
    svd.s.iter().filter(|&&v| v > cutoff && v > 0.0).count()
}

/// Orthonormal basis of `null(a)`, one basis vector per column.
pub fn null_space_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if a.is_empty() {
        return DMatrix::identity(cols, cols);
    }
    let Ok(svd) = Svd::of(a) else {
        return DMatrix::zeros(cols, 0);
    };
    let cutoff = rank_cutoff(rows, cols, svd.sigma_max());
    // Columns of V past min(rows, cols) have no singular value and span null(a).
    let null: Vec<DVector<f64>> = (0..cols)
        .filter(|&k| !svd.s.get(k).is_some_and(|&s| s > cutoff && s > 0.0))
        .map(|k| svd.v.column(k).into_owned())
        .collect();
    if null.is_empty() {
        DMatrix::zeros(cols, 0)
    } else {
        DMatrix::from_columns(&null)
    }
}

fn check_hypotheses(x: &DMatrix<f64>, y: &DMatrix<f64>) -> PcResult<()> {
    let (m, r) = x.shape();
    let n = y.nrows();
    if y.ncols() != r {
        return Err(PcError::ShapeMismatch(format!(
            "X has {r} columns but Y has {}",
            y.ncols()
        )));
    }
    if r == 0 {
        return Err(PcError::Hypothesis("need at least one column".into()));
    }
    if !(r <= n && n < m) {
        return Err(PcError::Hypothesis(format!(
            "need r <= n < m, got m={m}, n={n}, r={r}"
        )));
    }
    Ok(())
}

/// `A = Y X^+` built from the SVD of `X^T`; rows of `A` are minimum-norm
/// solutions of `a X = Y`.
pub fn construct_a(x: &DMatrix<f64>, y: &DMatrix<f64>) -> PcResult<DMatrix<f64>> {
    check_hypotheses(x, y)?;
    let r = x.ncols();
    let svd = Svd::of(&x.transpose())?;
    let sigma = &svd.s;
    let cutoff = rank_cutoff(r, x.nrows(), svd.sigma_max());
    if sigma.iter().any(|&s| !(s > cutoff)) {
        return Err(PcError::IllPosed(format!(
            "columns of X are linearly dependent (rank {} < {r})",
            sigma.iter().filter(|&&s| s > cutoff).count()
        )));
    }
    // X^T = U S V_r^T with U square (r x r), so A^T = V_r S^-1 U^T Y^T.
    let s_inv = DMatrix::from_diagonal(&sigma.map(|s| 1.0 / s));
    let v_r = svd.v.columns(0, r);
    let a_t = v_r * s_inv * svd.u.transpose() * y.transpose();
    Ok(a_t.transpose())
}

/// Outcome of numerically checking the minimum-norm property of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub passed: bool,
    /// `max |A X - Y|`.
    pub reconstruction_error: f64,
    /// Worst relative L2 distance between `min_norm_solve(A, Y_i)` and `X_i`.
    pub worst_recovery_error: f64,
    /// Smallest `|X_i + z| - |X_i|` over random nonzero `z` in `null(A)`.
    pub worst_norm_margin: f64,
    /// Largest `|X_i . z| / (|X_i| |z|)` over the same perturbations.
    pub worst_orthogonality: f64,
    pub perturbations: usize,
}

pub const RECONSTRUCTION_TOL: f64 = 1e-10;
pub const RECOVERY_TOL: f64 = 1e-8;

/// Builds `A` from `(X, Y)` and checks that every `X_i` is the minimum-norm
/// solution of `A x = Y_i`, probing `n_perturbations` random null-space
/// directions per column.
pub fn verify_theorem(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n_perturbations: usize,
    seed: u64,
) -> PcResult<TheoremReport> {
    check_hypotheses(x, y)?;
    let r = x.ncols();
    if numerical_rank(y) < r {
        return Err(PcError::Hypothesis(format!(
            "Y must have rank {r} for each X_i to be recoverable"
        )));
    }
    let a = construct_a(x, y)?;
    let reconstruction_error = (&a * x - y).amax();

    let null = null_space_basis(&a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_recovery_error = 0.0_f64;
    let mut worst_norm_margin = f64::INFINITY;
    let mut worst_orthogonality = 0.0_f64;
    let mut perturbations = 0;

    for i in 0..r {
        let xi = x.column(i).into_owned();
        let sol = min_norm_solve(&a, &y.column(i).into_owned())?;
        worst_recovery_error = worst_recovery_error.max((&sol.x - &xi).norm() / xi.norm());

        if null.ncols() == 0 {
            continue;
        }
        for _ in 0..n_perturbations {
            let coeffs = DVector::from_fn(null.ncols(), |_, _| {
                StandardNormal.sample(&mut rng)
            });
            let z: DVector<f64> = &null * coeffs;
            if z.norm() == 0.0 {
                continue;
            }
            let margin = (&xi + &z).norm() - xi.norm();
            worst_norm_margin = worst_norm_margin.min(margin);
            worst_orthogonality = worst_orthogonality.max(xi.dot(&z).abs() / (xi.norm() * z.norm()));
            perturbations += 1;
        }
    }

    let passed = reconstruction_error < RECONSTRUCTION_TOL
        && worst_recovery_error < RECOVERY_TOL
        && (perturbations == 0 || worst_norm_margin > 0.0);
    Ok(TheoremReport {
        passed,
        reconstruction_error,
        worst_recovery_error,
        worst_norm_margin,
        worst_orthogonality,
        perturbations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    /// Independent cross-check: x = A^T (A A^T)^-1 b for full row rank A.
    fn normal_equations(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        let gram = a * a.transpose();
        a.transpose() * gram.lu().solve(b).expect("full row rank")
    }

    #[test]
    fn min_norm_examples() {
        let s = min_norm_solve(&DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), &DVector::from_element(1, 2.0)).unwrap();
        assert!((&s.x - DVector::from_row_slice(&[1.0, 1.0])).norm() < 1e-14);

        let a = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let b = DVector::from_element(1, 25.0);
        let s = min_norm_solve(&a, &b).unwrap();
        // A^T (A A^T)^-1 b = [3,4]^T * 25 / 25
        assert!((&s.x - DVector::from_row_slice(&[3.0, 4.0])).norm() < 1e-13);
        assert!(s.residual < 1e-12);
        assert_eq!(s.rank, 1);
        assert!((s.solution_norm - 5.0).abs() < 1e-13);

        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let s = min_norm_solve(&a, &DVector::from_row_slice(&[1.0, 0.0])).unwrap();
        assert!((&s.x - DVector::from_row_slice(&[1.0, 0.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn min_norm_rejects_empty() {
        let a = DMatrix::<f64>::zeros(0, 3);
        assert!(matches!(min_norm_solve(&a, &DVector::zeros(0)), Err(PcError::Domain(_))));
    }

    #[test]
    fn rank_deficient_system_reports_rank() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let s = min_norm_solve(&a, &DVector::from_row_slice(&[1.0, 2.0])).unwrap();
        assert_eq!(s.rank, 1);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn construct_a_examples() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let a = construct_a(&x, &DMatrix::identity(2, 2)).unwrap();
        let expected = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!((a - expected).amax() < 1e-14);
    }

    #[test]
    fn construct_a_rows_are_min_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_matrix(5, 2, &mut rng);
        let y = DMatrix::<f64>::identity(2, 2);
        let a = construct_a(&x, &y).unwrap();
        assert!((&a * &x - &y).amax() < 1e-10);
        let null = null_space_basis(&x.transpose());
        assert_eq!(null.ncols(), 3);
        for j in 0..a.nrows() {
            let row = a.row(j).transpose();
            for _ in 0..100 {
                let z: DVector<f64> = &null * DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
                assert!(row.norm() <= (&row + &z).norm());
            }
        }
    }

    #[test]
    fn dependent_columns_are_ill_posed() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        let y = DMatrix::identity(2, 2);
        assert!(matches!(construct_a(&x, &y), Err(PcError::IllPosed(_))));
        assert!(verify_theorem(&x, &y, 5, 0).is_err());
    }

    #[test]
    fn hypothesis_violations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // r > n
        let x = random_matrix(6, 3, &mut rng);
        assert!(matches!(
            verify_theorem(&x, &random_matrix(2, 3, &mut rng), 5, 0),
            Err(PcError::Hypothesis(_))
        ));
        // n >= m
        let x = random_matrix(3, 2, &mut rng);
        assert!(matches!(
            construct_a(&x, &random_matrix(3, 2, &mut rng)),
            Err(PcError::Hypothesis(_))
        ));
    }

    #[test]
    fn scaled_orthonormal_columns_pass() {
        let x = DMatrix::from_row_slice(4, 2, &[3.0, 0.0, 0.0, 0.0, 0.0, -0.5, 0.0, 0.0]);
        let report = verify_theorem(&x, &DMatrix::identity(2, 2), 50, 1).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.worst_norm_margin > 0.0);
    }

    #[test]
    fn random_10x3_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(10, 3, &mut rng);
        let report = verify_theorem(&x, &DMatrix::identity(3, 3), 100, 2).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.worst_orthogonality < 1e-10);
    }

    proptest! {
        #[test]
        fn agrees_with_normal_equations(seed in any::<u64>(), rows in 1usize..5, extra in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(rows, rows + extra, &mut rng);
            let b = DVector::from_fn(rows, |_, _| StandardNormal.sample(&mut rng));
            let s = min_norm_solve(&a, &b).unwrap();
            let reference = normal_equations(&a, &b);
            prop_assert!((&s.x - &reference).norm() <= 1e-8 * reference.norm().max(1.0));
        }

        #[test]
        fn recovers_rowspace_vectors_and_is_orthogonal_to_null(seed in any::<u64>(), rows in 1usize..5, extra in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(rows, rows + extra, &mut rng);
            let v = a.transpose() * DVector::from_fn(rows, |_, _| StandardNormal.sample(&mut rng));
            let s = min_norm_solve(&a, &(&a * &v)).unwrap();
            prop_assert!((&s.x - &v).norm() < 1e-10 * v.norm().max(1.0));
            let null = null_space_basis(&a);
            prop_assert_eq!(null.ncols(), extra);
            for k in 0..null.ncols() {
                prop_assert!(null.column(k).dot(&s.x).abs() < 1e-10 * s.x.norm().max(1.0));
            }
        }

        #[test]
        fn construct_then_solve_recovers_columns(seed in any::<u64>(), r in 1usize..4, dn in 0usize..3, dm in 1usize..4) {
            let n = r + dn;
            let m = n + dm;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_matrix(m, r, &mut rng);
            let y = random_matrix(n, r, &mut rng);
            let a = construct_a(&x, &y).unwrap();
            for i in 0..r {
                let s = min_norm_solve(&a, &y.column(i).into_owned()).unwrap();
                let xi = x.column(i).into_owned();
                prop_assert!((&s.x - &xi).norm() / xi.norm() < 1e-8);
            }
        }
    }
}
