//! Sparse CSR storage, Jacobi-preconditioned conjugate gradients, and a
//! small dense LU solver for local element systems.

use crate::{Error, Result};

/// Compressed sparse row matrix. Rows are ordered, column indices within a
/// row are strictly increasing, duplicates have been merged.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidParams(format!(
                    "triplet index ({i}, {j}) outside {n} x {n} matrix"
                )));
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (i, j, v) = triplets[t];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            col_idx.push(j);
            values.push(v);
            row_ptr[i + 1] = col_idx.len();
        }
        // rows without entries inherit the previous offset
        for i in 0..n {
            if row_ptr[i + 1] < row_ptr[i] {
                row_ptr[i + 1] = row_ptr[i];
            }
        }
        Ok(CsrMatrix { n, row_ptr, col_idx, values })
    }

    /// Matrix dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entry values in row-major CSR order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[idx] * x[self.col_idx[idx]];
            }
            y[i] = acc;
        }
    }

    /// Entry (i, j), zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    /// The diagonal as a vector (missing entries are zero).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// max |A_ij - A_ji|, for symmetry checks.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[idx];
                worst = worst.max((self.values[idx] - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Outcome of a converged CG solve.
#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual |r|_2 / |b|_2.
    pub residual: f64,
    /// Preconditioned residual norm sqrt(r' M^-1 r) after each iteration.
    pub history: Vec<f64>,
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
///
/// Starts from x = 0 and stops when |r|_2 <= rel_tol * |b|_2. A zero right
/// hand side returns immediately with x = 0. Fails if the diagonal has a
/// non-positive entry or if max_iter is exhausted.
pub fn cg_solve(a: &CsrMatrix, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Result<CgResult> {
    let n = a.n();
    if rhs.len() != n {
        return Err(Error::InvalidParams(format!(
            "rhs length {} does not match matrix dimension {n}",
            rhs.len()
        )));
    }
    let diag = a.diagonal();
    for (i, &d) in diag.iter().enumerate() {
        if d <= 0.0 {
            return Err(Error::Singular(format!(
                "non-positive diagonal entry {d:.3e} at row {i}; matrix is not SPD"
            )));
        }
    }
    let b_norm = norm2(rhs);
    if b_norm == 0.0 {
        return Ok(CgResult { x: vec![0.0; n], iterations: 0, residual: 0.0, history: Vec::new() });
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut history = Vec::new();
    for it in 1..=max_iter {
        a.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(Error::Singular(format!(
                "non-positive curvature p'Ap = {pq:.3e} at iteration {it}; matrix is not SPD"
            )));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        history.push(rz_new.max(0.0).sqrt());
        let res = norm2(&r);
        if res <= rel_tol * b_norm {
            return Ok(CgResult { x, iterations: it, residual: res / b_norm, history });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm2(&r) / b_norm;
    Err(Error::NoConvergence { iterations: max_iter, residual: res })
}

/// Solve a dense system by LU with partial pivoting. `a` is row-major n x n.
/// Used for local element systems and as a reference in tests.
pub fn dense_solve(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix shape mismatch");
    let mut lu = a.to_vec();
    let mut x = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut piv = col;
        let mut best = lu[perm[col] * n + col].abs();
        for row in col + 1..n {
            let v = lu[perm[row] * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 {
            return Err(Error::Singular(format!("zero pivot in column {col}")));
        }
        perm.swap(col, piv);
        let prow = perm[col];
        for row in col + 1..n {
            let r = perm[row];
            let factor = lu[r * n + col] / lu[prow * n + col];
            lu[r * n + col] = factor;
            for j in col + 1..n {
                lu[r * n + j] -= factor * lu[prow * n + j];
            }
        }
    }
    // forward/back substitution on the permuted system
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut acc = x[perm[i]];
        for j in 0..i {
            acc -= lu[perm[i] * n + j] * y[j];
        }
        y[i] = acc;
    }
    for i in (0..n).rev() {
        let mut acc = y[i];
        for j in i + 1..n {
            acc -= lu[perm[i] * n + j] * x[j];
        }
        x[i] = acc / lu[perm[i] * n + i];
    }
    Ok(x)
}

/// LU factorization of a dense matrix, reusable across right hand sides.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Factor a row-major n x n matrix.
    pub fn new(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix shape mismatch");
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut piv = col;
            let mut best = lu[perm[col] * n + col].abs();
            for row in col + 1..n {
                let v = lu[perm[row] * n + col].abs();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular(format!("zero pivot in column {col}")));
            }
            perm.swap(col, piv);
            let prow = perm[col];
            for row in col + 1..n {
                let r = perm[row];
                let factor = lu[r * n + col] / lu[prow * n + col];
                lu[r * n + col] = factor;
                for j in col + 1..n {
                    lu[r * n + j] -= factor * lu[prow * n + j];
                }
            }
        }
        Ok(DenseLu { n, lu, perm })
    }

    /// Solve A x = b for one right hand side.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[self.perm[i]];
            for j in 0..i {
                acc -= self.lu[self.perm[i] * n + j] * y[j];
            }
            y[i] = acc;
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.lu[self.perm[i] * n + j] * x[j];
            }
            x[i] = acc / self.lu[self.perm[i] * n + i];
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn triplets_merge_duplicates_and_sort() {
        let a = CsrMatrix::from_triplets(
            3,
            &[(1, 2, 1.0), (0, 0, 2.0), (1, 2, 0.5), (1, 0, -1.0), (2, 2, 3.0)],
        )
        .unwrap();
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.get(1, 2), 1.5);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(a.get(2, 2), 3.0);
        assert_eq!(a.get(0, 1), 0.0);
        let mut y = vec![0.0; 3];
        a.matvec(&[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![2.0, 0.5, 3.0]);
    }

    #[test]
    fn triplet_out_of_range_is_error() {
        assert!(CsrMatrix::from_triplets(2, &[(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn cg_diagonal_system() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 2.0), (1, 1, 3.0)]).unwrap();
        let res = cg_solve(&a, &[2.0, 3.0], 1e-12, 10).unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-12);
        assert!((res.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cg_identity_converges_in_one_iteration() {
        let a = CsrMatrix::from_triplets(4, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0)])
            .unwrap();
        let res = cg_solve(&a, &[1.0, -2.0, 3.0, 4.0], 1e-14, 10).unwrap();
        assert!(res.iterations <= 1);
    }

    #[test]
    fn cg_zero_rhs_returns_zero() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let res = cg_solve(&a, &[0.0, 0.0], 1e-12, 10).unwrap();
        assert_eq!(res.x, vec![0.0, 0.0]);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn cg_rejects_non_positive_diagonal() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        assert!(matches!(cg_solve(&a, &[1.0, 1.0], 1e-12, 10), Err(Error::Singular(_))));
        let b = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        assert!(cg_solve(&b, &[1.0, 1.0], 1e-12, 10).is_err());
    }

    #[test]
    fn cg_reports_history_on_failure() {
        // SPD but forced to fail by max_iter = 1
        let tri = spd_tridiagonal(12, &mut ChaCha8Rng::seed_from_u64(7));
        let a = CsrMatrix::from_triplets(12, &tri).unwrap();
        let rhs = vec![1.0; 12];
        match cg_solve(&a, &rhs, 1e-14, 1) {
            Err(Error::NoConvergence { iterations, residual }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 0.0);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    fn spd_tridiagonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, f64)> {
        // diagonally dominant symmetric tridiagonal, hence SPD
        let off: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut t = Vec::new();
        for i in 0..n {
            let mut d = 0.5 + rng.gen_range(0.0..1.0);
            if i > 0 {
                d += off[i - 1].abs();
                t.push((i, i - 1, off[i - 1]));
            }
            if i + 1 < n {
                d += off[i].abs();
                t.push((i, i + 1, off[i]));
            }
            t.push((i, i, d));
        }
        t
    }

    #[test]
    fn cg_matches_dense_solve_on_random_spd_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..20 {
            let n = 2 + (trial % 7) * 7;
            let tri = spd_tridiagonal(n, &mut rng);
            let a = CsrMatrix::from_triplets(n, &tri).unwrap();
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = cg_solve(&a, &rhs, 1e-13, 20 * n).unwrap();
            let mut dense = vec![0.0; n * n];
            for &(i, j, v) in &tri {
                dense[i * n + j] += v;
            }
            let want = dense_solve(&dense, &rhs).unwrap();
            let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                assert!(
                    (got.x[i] - want[i]).abs() <= 1e-10 * scale,
                    "trial {trial}, entry {i}: {} vs {}",
                    got.x[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn cg_history_is_monotone_on_well_conditioned_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = 30;
            let tri = spd_tridiagonal(n, &mut rng);
            let a = CsrMatrix::from_triplets(n, &tri).unwrap();
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let res = cg_solve(&a, &rhs, 1e-13, 20 * n).unwrap();
            for w in res.history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "history not non-increasing: {w:?}");
            }
        }
    }

    #[test]
    fn dense_solve_known_system() {
        // [[2,1],[1,3]] x = [3,5] -> x = [4/5, 7/5]
        let x = dense_solve(&[2.0, 1.0, 1.0, 3.0], &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn dense_solve_needs_pivoting() {
        // zero leading pivot requires a row swap
        let x = dense_solve(&[0.0, 1.0, 1.0, 0.0], &[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn dense_singular_is_error() {
        assert!(dense_solve(&[1.0, 2.0, 2.0, 4.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dense_lu_reuse_matches_dense_solve() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 5.0];
        let lu = DenseLu::new(&a, 3).unwrap();
        for b in [[1.0, 0.0, 0.0], [0.2, -0.4, 1.0]] {
            let x1 = lu.solve(&b);
            let x2 = dense_solve(&a, &b).unwrap();
            for i in 0..3 {
                assert!((x1[i] - x2[i]).abs() < 1e-13);
            }
        }
    }
}
