use nalgebra::DMatrix;

use super::OdeSystem;
use crate::error::Result;

/// Greedy grouping of columns whose row sets are pairwise disjoint.
pub fn color_columns(pattern: &[Vec<usize>], n_rows: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut used: Vec<Vec<bool>> = Vec::new();
    for (col, rows) in pattern.iter().enumerate() {
        let slot = used.iter().position(|u| rows.iter().all(|&r| !u[r]));
        let g = match slot {
            Some(g) => g,
            None => {
                groups.push(Vec::new());
                used.push(vec![false; n_rows]);
                groups.len() - 1
            }
        };
        for &r in rows {
            used[g][r] = true;
        }
        groups[g].push(col);
    }
    groups
}

/// Forward-difference Jacobian, optionally grouped by a sparsity pattern.
#[derive(Debug, Clone)]
pub struct FdJacobian {
    n: usize,
    groups: Vec<Vec<usize>>,
    pattern: Option<Vec<Vec<usize>>>,
}

impl FdJacobian {
    pub fn new(n: usize, pattern: Option<Vec<Vec<usize>>>) -> Self {
        let groups = match &pattern {
            Some(p) => color_columns(p, n),
            None => (0..n).map(|j| vec![j]).collect(),
        };
        FdJacobian { n, groups, pattern }
    }

    pub fn evaluations(&self) -> usize {
        self.groups.len()
    }

    /// Evaluate the Jacobian at `(t, y)` given `f0 = f(t, y)`.
    pub fn eval<S: OdeSystem>(
        &self,
        system: &mut S,
        t: f64,
        y: &[f64],
        f0: &[f64],
        scale: &[f64],
    ) -> Result<DMatrix<f64>> {
        let n = self.n;
        let mut jac = DMatrix::zeros(n, n);
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        let mut steps = vec![0.0; n];
        let sqrt_eps = f64::EPSILON.sqrt();
        for group in &self.groups {
            for &j in group {
                let h = sqrt_eps * y[j].abs().max(scale[j]);
                // exact representable step
                let yj = y[j] + h;
                steps[j] = yj - y[j];
                yp[j] = yj;
            }
            system.rhs(t, &yp, &mut fp)?;
            for &j in group {
                let h = steps[j];
                match &self.pattern {
                    Some(p) => {
                        for &i in &p[j] {
                            jac[(i, j)] = (fp[i] - f0[i]) / h;
                        }
                    }
                    None => {
                        for i in 0..n {
                            jac[(i, j)] = (fp[i] - f0[i]) / h;
                        }
                    }
                }
                yp[j] = y[j];
            }
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tridiagonal test system y_i' = y_{i-1} - 2 y_i^2 + 3 y_{i+1}.
    struct Tri(usize);

    impl OdeSystem for Tri {
        fn dim(&self) -> usize {
            self.0
        }
        fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            let n = self.0;
            for i in 0..n {
                let left = if i > 0 { y[i - 1] } else { 0.0 };
                let right = if i + 1 < n { y[i + 1] } else { 0.0 };
                dy[i] = left - 2.0 * y[i] * y[i] + 3.0 * right;
            }
            Ok(())
        }
        fn sparsity(&self) -> Option<Vec<Vec<usize>>> {
            let n = self.0;
            Some((0..n).map(|j| (j.saturating_sub(1)..(j + 2).min(n)).collect()).collect())
        }
    }

    #[test]
    fn grouped_matches_dense() {
        let mut sys = Tri(12);
        let y: Vec<f64> = (0..12).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut f0 = vec![0.0; 12];
        sys.rhs(0.0, &y, &mut f0).unwrap();
        let scale = vec![1e-8; 12];
        let dense = FdJacobian::new(12, None).eval(&mut sys, 0.0, &y, &f0, &scale).unwrap();
        let fd = FdJacobian::new(12, sys.sparsity());
        assert_eq!(fd.evaluations(), 3);
        let grouped = fd.eval(&mut sys, 0.0, &y, &f0, &scale).unwrap();
        assert!((&dense - &grouped).amax() < 1e-12);
        for i in 0..12 {
            assert!((grouped[(i, i)] + 4.0 * y[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn coloring_is_valid() {
        let pattern = vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![0, 3]];
        let groups = color_columns(&pattern, 4);
        for g in &groups {
            let mut rows: Vec<usize> = g.iter().flat_map(|&c| pattern[c].clone()).collect();
            let len = rows.len();
            rows.sort_unstable();
            rows.dedup();
            assert_eq!(rows.len(), len);
        }
    }
}
