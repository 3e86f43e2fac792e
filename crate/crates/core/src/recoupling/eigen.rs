use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};

use super::BandedOperator;
use crate::error::{Error, Result};

/// Residual bound for joint eigenvectors and commutators.
pub const TAU_EIG: f64 = 1e-9;

/// Half-width of the spectral window that must contain exactly one eigenvalue.
const WINDOW: f64 = 1e-7;

/// Real symmetric band matrix with lower bandwidth `bw`.
#[derive(Clone, Debug)]
pub struct BandSym {
    n: usize,
    bw: usize,
    /// Row `i` holds columns `i - bw ..= i + 2 bw` (room for pivoting fill-in).
    rows: Vec<Vec<f64>>,
}

impl BandSym {
    pub fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> BandSym {
        let bw = entries.iter().map(|&(i, j, _)| i.abs_diff(j)).max().unwrap_or(0).max(1);
        let mut m = BandSym { n, bw, rows: vec![vec![0.0; 3 * bw + 1]; n] };
        for &(i, j, v) in entries {
            let avg = 0.5 * v;
            m.add(i, j, avg);
            m.add(j, i, avg);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.bw as isize;
        (0..(3 * self.bw + 1) as isize).contains(&off).then_some(off as usize)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map(|s| self.rows[i][s]).unwrap_or(0.0)
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry inside the band");
        self.rows[i][s] += v;
    }

    fn shifted(&self, shift: f64) -> BandSym {
        let mut m = self.clone();
        for i in 0..self.n {
            m.add(i, i, -shift);
        }
        m
    }

    /// Number of eigenvalues strictly below `shift` (Sylvester inertia of an LDLᵀ factorization).
    pub fn count_below(&self, shift: f64) -> usize {
        let mut m = self.shifted(shift);
        let tiny = f64::EPSILON * (1.0 + shift.abs());
        let mut negatives = 0;
        for k in 0..self.n {
            let mut d = m.get(k, k);
            if d == 0.0 {
                d = tiny;
            }
            if d < 0.0 {
                negatives += 1;
            }
            for i in k + 1..(k + self.bw + 1).min(self.n) {
                let l = m.get(i, k) / d;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..(k + self.bw + 1).min(self.n) {
                    let v = m.get(k, j);
                    m.add(i, j, -l * v);
                }
            }
        }
        negatives
    }

    /// Solves `(A - shift) x = rhs` by banded LU with partial pivoting.
    pub fn solve_shifted(&self, shift: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let bw = self.bw;
        let mut m = self.shifted(shift);
        let mut b = rhs.to_vec();
        let tiny = f64::EPSILON * self.max_abs().max(1.0);
        for k in 0..n {
            let last = (k + bw).min(n - 1);
            let piv = (k..=last).max_by(|&x, &y| m.get(x, k).abs().total_cmp(&m.get(y, k).abs())).unwrap();
            if piv != k {
                let hi = (k + 2 * bw).min(n - 1);
                for j in k..=hi {
                    let (a, c) = (m.get(k, j), m.get(piv, j));
                    m.set(k, j, c);
                    m.set(piv, j, a);
                }
                b.swap(k, piv);
            }
            let mut d = m.get(k, k);
            if d.abs() < tiny {
                d = tiny.copysign(if d == 0.0 { 1.0 } else { d });
                m.set(k, k, d);
            }
            for i in k + 1..=last {
                let l = m.get(i, k) / d;
                if l == 0.0 {
                    continue;
                }
                m.set(i, k, 0.0);
                for j in k + 1..=(k + 2 * bw).min(n - 1) {
                    let v = m.get(k, j);
                    if v != 0.0 {
                        m.add(i, j, -l * v);
                    }
                }
                b[i] -= l * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + 2 * bw).min(n - 1) {
                s -= m.get(k, j) * x[j];
            }
            x[k] = s / m.get(k, k);
        }
        x
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        if let Some(s) = self.slot(i, j) {
            self.rows[i][s] = v;
        } else {
            debug_assert!(v == 0.0, "fill-in outside the band");
        }
    }

    fn max_abs(&self) -> f64 {
        self.rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * v[j]).sum()
            })
            .collect()
    }

    /// Unit eigenvector for an isolated eigenvalue `lambda` by shifted inverse iteration.
    pub fn inverse_iteration(&self, lambda: f64) -> Result<Vec<f64>> {
        let count = self.count_below(lambda + WINDOW) - self.count_below(lambda - WINDOW);
        if count != 1 {
            return Err(Error::EigenspaceDimension(count));
        }
        let shift = lambda + 1e-13 * (1.0 + lambda.abs());
        let mut v: Vec<f64> = (0..self.n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64 / 13.0).collect();
        normalize(&mut v);
        for _ in 0..4 {
            v = self.solve_shifted(shift, &v);
            normalize(&mut v);
        }
        Ok(v)
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn residual(op: &BandedOperator, v: &[f64], lambda: f64) -> f64 {
    op.apply(v).iter().zip(v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt()
}

/// Frobenius norm of `[A, B]` from sparse entries.
fn commutator_norm(a: &BandedOperator, b: &BandedOperator) -> f64 {
    let ea = a.entries();
    let eb = b.entries();
    let by_row = |e: &[(usize, usize, f64)]| {
        let mut m: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
        for &(i, j, v) in e {
            m.entry(i).or_default().push((j, v));
        }
        m
    };
    let (rb, ra) = (by_row(&eb), by_row(&ea));
    let mut acc: HashMap<(usize, usize), f64> = HashMap::new();
    // (AB)_ik = Σ_j A_ij B_jk
    for &(i, j, x) in &ea {
        for &(k, y) in rb.get(&j).map(Vec::as_slice).unwrap_or(&[]) {
            *acc.entry((i, k)).or_default() += x * y;
        }
    }
    for &(i, j, x) in &eb {
        for &(k, y) in ra.get(&j).map(Vec::as_slice).unwrap_or(&[]) {
            *acc.entry((i, k)).or_default() -= x * y;
        }
    }
    acc.values().map(|v| v * v).sum::<f64>().sqrt()
}

/// Unit joint eigenvector of commuting operators on a common basis.
///
/// Diagonal operators select the colorings carrying the requested
/// eigenvalues; the remaining operators are solved on that subspace by banded
/// inverse iteration (one operator) or a dense null-space computation
/// (several). The largest-modulus coefficient is made positive.
pub fn joint_eigenvector(ops: &[&BandedOperator], eigenvalues: &[f64]) -> Result<Vec<f64>> {
    if ops.is_empty() || ops.len() != eigenvalues.len() {
        return Err(Error::DimensionMismatch { expected: ops.len(), got: eigenvalues.len() });
    }
    let dim = ops[0].dim();
    if ops.iter().any(|op| op.basis.colorings != ops[0].basis.colorings) {
        return Err(Error::Config("operators act on different bases".into()));
    }
    for (i, a) in ops.iter().enumerate() {
        for b in &ops[i + 1..] {
            let c = commutator_norm(a, b);
            if c > TAU_EIG {
                return Err(Error::NonCommuting(c));
            }
        }
    }
    let mut keep: Vec<usize> = (0..dim).collect();
    let mut banded = Vec::new();
    for (op, &lambda) in ops.iter().zip(eigenvalues) {
        if op.is_diagonal() {
            let d = op.diagonal();
            keep.retain(|&i| (d[i] - lambda).abs() < WINDOW);
        } else {
            banded.push((*op, lambda));
        }
    }
    let local: HashMap<usize, usize> = keep.iter().enumerate().map(|(l, &g)| (g, l)).collect();
    let restrict = |op: &BandedOperator| -> Vec<(usize, usize, f64)> {
        op.entries()
            .into_iter()
            .filter_map(|(i, j, v)| Some((*local.get(&i)?, *local.get(&j)?, v)))
            .collect()
    };
    let sub: Vec<f64> = match banded.len() {
        _ if keep.is_empty() => return Err(Error::EigenspaceDimension(0)),
        0 if keep.len() == 1 => vec![1.0],
        0 => return Err(Error::EigenspaceDimension(keep.len())),
        1 => BandSym::from_entries(keep.len(), &restrict(banded[0].0)).inverse_iteration(banded[0].1)?,
        _ => {
            let m = keep.len();
            let mut acc = DMatrix::<f64>::zeros(m, m);
            for (op, lambda) in &banded {
                let mut t = DMatrix::<f64>::zeros(m, m);
                for (i, j, v) in restrict(op) {
                    t[(i, j)] += v;
                }
                for i in 0..m {
                    t[(i, i)] -= lambda;
                }
                acc += t.transpose() * &t;
            }
            let eig = SymmetricEigen::new(acc);
            let null: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i].abs() < WINDOW).collect();
            if null.len() != 1 {
                return Err(Error::EigenspaceDimension(null.len()));
            }
            eig.eigenvectors.column(null[0]).iter().copied().collect()
        }
    };
    let mut v = vec![0.0; dim];
    for (l, &g) in keep.iter().enumerate() {
        v[g] = sub[l];
    }
    fix_phase(&mut v);
    for (op, &lambda) in ops.iter().zip(eigenvalues) {
        let res = residual(op, &v, lambda);
        if res > TAU_EIG {
            return Err(Error::NonConvergent(format!("joint eigenvector residual {res:.3e} for {}", op.curve)));
        }
    }
    Ok(v)
}

/// First index whose modulus is within a relative `1e-9` of the maximum, so
/// that near-ties resolve identically across backends.
pub(crate) fn dominant_index(moduli: &[f64]) -> usize {
    let max = moduli.iter().copied().fold(0.0, f64::max);
    moduli.iter().position(|&m| m >= max * (1.0 - 1e-9)).unwrap_or(0)
}

/// Makes the largest-modulus coefficient (first on ties) positive.
pub(crate) fn fix_phase(v: &mut [f64]) {
    let moduli: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let best = dominant_index(&moduli);
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
