//! Sparse symmetric positive-definite solves by Jacobi-preconditioned
//! conjugate gradients.

use super::SubsurfaceError;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.cols[k] == i)
                    .map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }

    /// Structural and numerical symmetry within a relative tolerance.
    pub fn is_symmetric(&self, rel: f64) -> bool {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let a = self.vals[k];
                let b = (self.row_ptr[j]..self.row_ptr[j + 1]).find(|&m| self.cols[m] == i).map(|m| self.vals[m]);
                match b {
                    Some(b) if (a - b).abs() <= rel * a.abs().max(b.abs()) => {}
                    _ => return false,
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b`, starting from the contents of `x`. Stops when
/// `|b - A x| <= tol * |b|`; fails after `max_iter` iterations.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats, SubsurfaceError> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(SubsurfaceError::NotPositiveDefinite { row: i, diagonal: diag[i] });
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rel = norm(&r) / b_norm;
    let mut history = vec![rel];
    if rel <= tol {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: rel,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SubsurfaceError::NotPositiveDefinite { row: usize::MAX, diagonal: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / b_norm;
        history.push(rel);
        if rel <= tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: rel,
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SubsurfaceError::NoConvergence {
        iterations: max_iter,
        residual: rel,
        history: thin(&history),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// At most ~20 evenly spaced entries of a residual history.
fn thin(h: &[f64]) -> Vec<f64> {
    let stride = h.len().div_ceil(20).max(1);
    let mut out: Vec<f64> = h.iter().step_by(stride).copied().collect();
    if let Some(&last) = h.last() {
        if out.last() != Some(&last) {
            out.push(last);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn identity_returns_rhs() {
        let a = CsrMatrix::from_triplets(4, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0)]);
        let b = [1.0, -2.0, 3.5, 0.25];
        let mut x = [0.0; 4];
        solve_spd(&a, &b, &mut x, 1e-10, 40).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0)]);
        assert_eq!(a.diagonal(), vec![3.0, 1.0]);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn laplacian_matches_direct_solve() {
        let n = 10;
        let a = laplacian(n);
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 1.0).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&exact, &mut b);
        // Thomas algorithm as an independent reference.
        let (mut c, mut d) = (vec![0.0; n], vec![0.0; n]);
        c[0] = -1.0 / 2.0;
        d[0] = b[0] / 2.0;
        for i in 1..n {
            let m = 2.0 + c[i - 1];
            c[i] = -1.0 / m;
            d[i] = (b[i] + d[i - 1]) / m;
        }
        let mut direct = vec![0.0; n];
        direct[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            direct[i] = d[i] - c[i] * direct[i + 1];
        }
        let mut x = vec![0.0; n];
        let stats = solve_spd(&a, &b, &mut x, 1e-12, 100).unwrap();
        assert!(stats.iterations <= n);
        for i in 0..n {
            assert!((x[i] - direct[i]).abs() < 1e-10);
            assert!((x[i] - exact[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn random_gram_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let bm: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in 0..n {
                    s += bm[k * n + i] * bm[k * n + j];
                }
                t.push((i, j, s));
            }
        }
        let a = CsrMatrix::from_triplets(n, &t);
        assert!(a.is_symmetric(1e-14));
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut x = vec![0.0; n];
        solve_spd(&a, &b, &mut x, 1e-10, 10 * n).unwrap();
        let mut ax = vec![0.0; n];
        a.mul_vec(&x, &mut ax);
        let r: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(r <= 1e-10 * norm(&b));
    }

    #[test]
    fn iteration_cap_reports_history() {
        let a = laplacian(200);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        match solve_spd(&a, &b, &mut x, 1e-14, 3) {
            Err(SubsurfaceError::NoConvergence { iterations, history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_nonpositive_diagonal() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, 0.0)]);
        let mut x = [0.0; 2];
        assert!(solve_spd(&a, &[1.0, 1.0], &mut x, 1e-10, 10).is_err());
    }
}
