//! Kauffman–Lins recoupling at the root `A = -exp(iπ/2r)`: curve operators on
//! the coloring basis, joint eigenvectors and exact change-of-basis pairings.
//!
//! Internal formulas use unshifted (twice-spin) labels `a = c - 1`; the public
//! operations take shifted colors.

mod eigen;
mod operators;
mod pairing;

pub use eigen::{joint_eigenvector, BandSym, TAU_EIG};
pub use operators::{
    band_offsets, curve_coefficient, curve_operator, curve_operator_on, curve_rule, operator_spectrum_check, BandedOperator,
    CurveRule, MultiplicityRow, SpectrumReport,
};
pub use pairing::{
    exact_pairing, move_block, pair_relation, pairing_matrix, psi_column, Backend, PairRelation, PairingMatrix,
    TAU_PAIR,
};

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct RecouplingContext {
    pub level: u32,
    /// `ζ_r = -exp(iπ/2r)`, the Kauffman parameter `A`.
    pub root: Complex64,
    quantum_integers: Vec<f64>,
    /// `ln [n]!` for `0 <= n < r`; `[n]! = 0` for `n >= r`.
    log_factorials: Vec<f64>,
}

impl RecouplingContext {
    pub fn new(r: u32) -> Result<Self> {
        if r < 2 {
            return Err(Error::OutOfRange(format!("level {r} < 2")));
        }
        let s = (PI / r as f64).sin();
        let quantum_integers: Vec<f64> = (0..=r)
            .map(|m| if m == r { 0.0 } else { (m as f64 * PI / r as f64).sin() / s })
            .collect();
        let mut log_factorials = vec![0.0; r as usize];
        for n in 1..r as usize {
            log_factorials[n] = log_factorials[n - 1] + quantum_integers[n].ln();
        }
        Ok(RecouplingContext {
            level: r,
            root: -Complex64::from_polar(1.0, PI / (2.0 * r as f64)),
            quantum_integers,
            log_factorials,
        })
    }

    /// `[m] = sin(mπ/r)/sin(π/r)` for `0 <= m <= r`.
    pub fn quantum_integer(&self, m: u32) -> Result<f64> {
        self.quantum_integers
            .get(m as usize)
            .copied()
            .ok_or_else(|| Error::OutOfRange(format!("quantum integer [{m}] at level {}", self.level)))
    }

    fn log_fact(&self, n: i64) -> Option<f64> {
        if n < 0 {
            panic!("negative factorial argument {n}");
        }
        self.log_factorials.get(n as usize).copied()
    }

    /// Loop value of an unshifted color: `Δ_a = (-1)^a [a+1]`.
    pub fn delta(&self, a: u32) -> f64 {
        let v = self.quantum_integers[(a + 1).min(self.level) as usize];
        if a % 2 == 0 {
            v
        } else {
            -v
        }
    }

    /// `r`-admissibility of an unshifted triple.
    pub fn admissible(&self, a: u32, b: u32, c: u32) -> bool {
        (a + b + c) % 2 == 0 && a <= b + c && b <= a + c && c <= a + b && a + b + c <= 2 * (self.level - 2)
    }

    /// Theta network evaluation `θ(a, b, c)`.
    pub fn theta(&self, a: u32, b: u32, c: u32) -> f64 {
        let (a, b, c) = (a as i64, b as i64, c as i64);
        let m = (a + b - c) / 2;
        let n = (b + c - a) / 2;
        let p = (a + c - b) / 2;
        let lf = |k| self.log_fact(k).expect("theta of an admissible triple");
        let log = lf(m + n + p + 1) + lf(m) + lf(n) + lf(p) - lf(m + n) - lf(n + p) - lf(m + p);
        let sign = if (m + n + p) % 2 == 0 { 1.0 } else { -1.0 };
        sign * log.exp()
    }

    /// Tetrahedral network `Tet[A B E; C D F]` with faces `(A,D,E)`, `(B,C,E)`,
    /// `(A,B,F)`, `(C,D,F)`.
    pub fn tet(&self, a: u32, b: u32, e: u32, c: u32, d: u32, f: u32) -> f64 {
        let (a, b, e, c, d, f) = (a as i64, b as i64, e as i64, c as i64, d as i64, f as i64);
        let ai = [(a + d + e) / 2, (b + c + e) / 2, (a + b + f) / 2, (c + d + f) / 2];
        let bj = [(b + d + e + f) / 2, (a + c + e + f) / 2, (a + b + c + d) / 2];
        let mut log_prefactor = 0.0;
        for &x in &bj {
            for &y in &ai {
                match self.log_fact(x - y) {
                    Some(v) => log_prefactor += v,
                    None => return 0.0,
                }
            }
        }
        for edge in [a, b, c, d, e, f] {
            log_prefactor -= self.log_fact(edge).expect("edge colors are below the level");
        }
        let lo = *ai.iter().max().unwrap();
        let hi = *bj.iter().min().unwrap();
        let mut sum = 0.0;
        for s in lo..=hi {
            let Some(mut log) = self.log_fact(s + 1) else { continue };
            for &y in &ai {
                log -= self.log_fact(s - y).expect("bounded by an admissible face");
            }
            for &x in &bj {
                log -= self.log_fact(x - s).expect("bounded by an admissible face");
            }
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (log + log_prefactor).exp();
        }
        sum
    }

    /// Half-twist eigenvalue `λ^{ab}_c = (-1)^{(a+b-c)/2} A^{[c(c+2)-a(a+2)-b(b+2)]/2}`.
    pub fn half_twist(&self, a: u32, b: u32, c: u32) -> Complex64 {
        let (a, b, c) = (a as i64, b as i64, c as i64);
        let exponent = (c * (c + 2) - a * (a + 2) - b * (b + 2)) / 2;
        let sign = if ((a + b - c) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sign * self.root.powi(exponent as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantum_integer_examples() {
        for r in [3, 5, 8] {
            let ctx = RecouplingContext::new(r).unwrap();
            assert_eq!(ctx.quantum_integer(1).unwrap(), 1.0);
            assert_eq!(ctx.quantum_integer(r).unwrap(), 0.0);
        }
        let ctx = RecouplingContext::new(4).unwrap();
        assert!((ctx.quantum_integer(2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(ctx.quantum_integer(5).is_err());
        assert!(RecouplingContext::new(1).is_err());
    }

    #[test]
    fn root_and_loop_value() {
        let ctx = RecouplingContext::new(7).unwrap();
        let a = ctx.root;
        let loop_value = -(a * a) - (a * a).inv();
        assert!((loop_value.re - ctx.delta(1)).abs() < 1e-14 && loop_value.im.abs() < 1e-14);
        assert!((ctx.delta(1) + 2.0 * (PI / 7.0).cos()).abs() < 1e-14);
    }

    #[test]
    fn theta_with_trivial_edge_is_the_loop_value() {
        let ctx = RecouplingContext::new(9).unwrap();
        for a in 0..7 {
            assert!((ctx.theta(a, a, 0) - ctx.delta(a)).abs() < 1e-12);
        }
        // θ(1,1,0) = Δ_1, θ(1,1,2) = Δ_2 · ... symmetric in arguments
        assert!((ctx.theta(2, 3, 1) - ctx.theta(3, 1, 2)).abs() < 1e-12);
    }

    #[test]
    fn tet_with_trivial_edge_reduces_to_theta() {
        // Tet with F = 0 forces A = B and C = D and collapses to θ(A, D, E).
        let ctx = RecouplingContext::new(11).unwrap();
        for (a, c, e) in [(2, 3, 1), (4, 4, 2), (1, 1, 0), (3, 5, 4)] {
            let t = ctx.tet(a, a, e, c, c, 0);
            assert!((t - ctx.theta(a, c, e)).abs() < 1e-10 * t.abs().max(1.0), "{a} {c} {e}: {t}");
        }
    }

    #[test]
    fn six_j_orthogonality() {
        // Σ_i {a b i; c d j}{d a k; b c i}-type identity in the form
        // Σ_i Δ_i Tet(a,b,i,c,d,j) Tet(a,b,i,c,d,k) / (θ(a,d,i) θ(b,c,i)) = δ_jk θ(a,b,j) θ(c,d,j) / Δ_j
        let ctx = RecouplingContext::new(10).unwrap();
        let (a, b, c, d) = (2, 3, 3, 2);
        let adm_j: Vec<u32> = (0..9).filter(|&j| ctx.admissible(a, b, j) && ctx.admissible(c, d, j)).collect();
        let adm_i: Vec<u32> = (0..9).filter(|&i| ctx.admissible(a, d, i) && ctx.admissible(b, c, i)).collect();
        for &j in &adm_j {
            for &k in &adm_j {
                let s: f64 = adm_i
                    .iter()
                    .map(|&i| {
                        ctx.delta(i) * ctx.tet(a, b, i, c, d, j) * ctx.tet(a, b, i, c, d, k)
                            / (ctx.theta(a, d, i) * ctx.theta(b, c, i))
                    })
                    .sum();
                let expect = if j == k { ctx.theta(a, b, j) * ctx.theta(c, d, j) / ctx.delta(j) } else { 0.0 };
                assert!((s - expect).abs() < 1e-9 * expect.abs().max(1.0), "j={j} k={k}: {s} vs {expect}");
            }
        }
    }
}
