//! Compressed sparse row matrices and a Jacobi-preconditioned conjugate
//! gradient solver.
//!
//! Assembly goes through symmetric triplet accumulation so A == A^T holds
//! exactly by construction. The solver tracks the quadratic energy
//! E(x) = 1/2 x^T A x - b^T x at every iterate; for an SPD system CG is
//! energy-monotone, and the recorded trace lets callers assert it.

use crate::error::{Error, Result};

/// Symmetric sparse matrix in CSR layout.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Triplet accumulator for building a [`CsrMatrix`].
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    /// Add `v` at (i, j). Duplicates are summed.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i as u32, j as u32, v));
    }

    /// Add `v` at (i, j) and (j, i) (or once on the diagonal).
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.add(i, j, v);
        if i != j {
            self.add(j, i, v);
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|&(i, j, _)| ((i as u64) << 32) | j as u64);
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut prev: Option<(u32, u32)> = None;
        for &(i, j, v) in &self.entries {
            if prev == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j as usize);
                vals.push(v);
                row_ptr[i as usize + 1] = cols.len();
                prev = Some((i, j));
            }
        }
        // forward-fill row ends so empty rows stay empty
        for i in 1..=self.n {
            row_ptr[i] = row_ptr[i].max(row_ptr[i - 1]);
        }
        CsrMatrix { n: self.n, row_ptr, cols, vals }
    }
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// y = A x (sequential: the reduction order is fixed for determinism).
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] == i {
                    d[i] += self.vals[k];
                }
            }
        }
        d
    }

    /// Exact structural + value symmetry check.
    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let v = self.vals[k];
                let mut found = false;
                for k2 in self.row_ptr[j]..self.row_ptr[j + 1] {
                    if self.cols[k2] == i {
                        if self.vals[k2] != v {
                            return false;
                        }
                        found = true;
                        break;
                    }
                }
                if !found {
                    return false;
                }
            }
        }
        true
    }

    /// Dense copy, for small direct-solve oracles in tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k])] += self.vals[k];
            }
        }
        m
    }
}

/// Iteration report from [`solve_cg`].
#[derive(Debug, Clone)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    /// Quadratic energy at each iterate, starting from the initial guess.
    pub energy_trace: Vec<f64>,
}

/// Solve A x = b with Jacobi-preconditioned conjugate gradient.
///
/// Stops when ||A x - b|| / ||b|| <= tol or after `max_iter` iterations;
/// non-finite values abort with the offending iteration index.
pub fn solve_cg(
    a: &CsrMatrix,
    b: &[f64],
    init: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgStats)> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::Shape(format!("rhs has {} entries for an {n}-unknown system", b.len())));
    }
    let mut x = match init {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::Shape("initial guess length mismatch".into()));
            }
            x0.to_vec()
        }
        None => vec![0.0; n],
    };

    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            CgStats { iterations: 0, relative_residual: 0.0, converged: true, energy_trace: vec![0.0] },
        ));
    }

    let mut ax = vec![0.0; n];
    a.mul_vec(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(ri, zi)| ri * zi).sum();

    let energy = |x: &[f64], r: &[f64]| -> f64 {
        // E = 1/2 x^T A x - b^T x = -1/2 (x^T b + x^T r), using r = b - A x
        let xb: f64 = x.iter().zip(b).map(|(xi, bi)| xi * bi).sum();
        let xr: f64 = x.iter().zip(r).map(|(xi, ri)| xi * ri).sum();
        -0.5 * (xb + xr)
    };

    let mut trace = vec![energy(&x, &r)];
    let mut res_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut iterations = 0;

    for it in 0..max_iter {
        if res_norm / b_norm <= tol {
            break;
        }
        let mut ap = vec![0.0; n];
        a.mul_vec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(pi, api)| pi * api).sum();
        if !pap.is_finite() || pap <= 0.0 {
            return Err(Error::Numeric {
                msg: format!("p^T A p = {pap}; system is not SPD"),
                iteration: it,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric { msg: "non-finite iterate".into(), iteration: it });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(ri, zi)| ri * zi).sum();
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
        res_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        iterations = it + 1;
        trace.push(energy(&x, &r));
    }

    Ok((
        x,
        CgStats {
            iterations,
            relative_residual: res_norm / b_norm,
            converged: res_norm / b_norm <= tol,
            energy_trace: trace,
        },
    ))
}

/// True when the energy trace never increases beyond floating-point jitter.
pub fn energy_non_increasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> CsrMatrix {
        let mut t = TripletBuilder::new(n);
        for i in 0..n {
            t.add(i, i, 1.0);
        }
        t.build()
    }

    #[test]
    fn identity_system_converges_in_one_iteration() {
        let a = identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 4.0];
        let (x, stats) = solve_cg(&a, &b, None, 1e-12, 100).unwrap();
        assert_eq!(stats.iterations, 1);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_triplets_are_merged() {
        let mut t = TripletBuilder::new(2);
        t.add(0, 0, 1.0);
        t.add(0, 0, 2.0);
        t.add(1, 1, 1.0);
        t.add(0, 1, 0.5);
        t.add(1, 0, 0.5);
        let a = t.build();
        assert_eq!(a.nnz(), 4);
        assert!(a.is_symmetric());
        let d = a.to_dense();
        assert_eq!(d[(0, 0)], 3.0);
        assert_eq!(d[(0, 1)], 0.5);
    }

    #[test]
    fn matches_dense_solve_on_random_spd() {
        let mut state = 42u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let n = 30;
        // A = L L^T + n I, assembled symmetrically
        let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                dense[(i, j)] = next();
            }
        }
        let spd = &dense * dense.transpose() + nalgebra::DMatrix::identity(n, n) * n as f64;
        let mut t = TripletBuilder::new(n);
        for i in 0..n {
            for j in 0..n {
                t.add(i, j, spd[(i, j)]);
            }
        }
        let a = t.build();
        assert!(a.is_symmetric());
        let b: Vec<f64> = (0..n).map(|_| next()).collect();
        let (x, stats) = solve_cg(&a, &b, None, 1e-12, 10_000).unwrap();
        assert!(stats.converged);
        assert!(energy_non_increasing(&stats.energy_trace));
        let xd = spd
            .clone()
            .lu()
            .solve(&nalgebra::DVector::from_vec(b.clone()))
            .unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-8, "component {i}");
        }
    }

    #[test]
    fn energy_monotone_over_20_seeds() {
        for seed in 0..20u64 {
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            let mut next = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            let n = 40;
            let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    dense[(i, j)] = next();
                }
            }
            let spd = &dense * dense.transpose() + nalgebra::DMatrix::identity(n, n) * 0.5;
            let mut t = TripletBuilder::new(n);
            for i in 0..n {
                for j in 0..n {
                    t.add(i, j, spd[(i, j)]);
                }
            }
            let a = t.build();
            let b: Vec<f64> = (0..n).map(|_| next()).collect();
            let (_, stats) = solve_cg(&a, &b, None, 1e-10, 5_000).unwrap();
            assert!(energy_non_increasing(&stats.energy_trace), "seed {seed}");
        }
    }

    #[test]
    fn non_spd_reports_iteration() {
        let mut t = TripletBuilder::new(2);
        t.add(0, 0, 1.0);
        t.add(1, 1, -1.0);
        let a = t.build();
        match solve_cg(&a, &[1.0, 1.0], None, 1e-10, 10) {
            Err(Error::Numeric { iteration, .. }) => assert_eq!(iteration, 0),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }
}
