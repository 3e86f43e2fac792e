use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eigen::{dominant_index, fix_phase};
use super::{curve_operator_on, joint_eigenvector, BandedOperator, RecouplingContext};
use crate::error::{Error, Result};
use crate::surfaces::{enumerate_admissible, enumerate_restricted, ColoringSet, SurfaceModel};

/// Entrywise agreement required between the two pairing backends.
pub const TAU_PAIR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    MoveComposition,
    JointEigenvector,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "move-composition" | "move" => Ok(Backend::MoveComposition),
            "joint-eigenvector" | "eigen" => Ok(Backend::JointEigenvector),
            _ => Err(Error::Config(format!("unknown backend `{s}`"))),
        }
    }
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::MoveComposition => "move-composition",
            Backend::JointEigenvector => "joint-eigenvector",
        }
    }
}

/// How the decomposition curves of `b` sit relative to the coloring basis of `a`.
#[derive(Clone, Debug)]
pub struct PairRelation {
    /// Edges whose decomposition curves coincide.
    pub shared: Vec<usize>,
    /// Edges of `b` whose curve is a shipped extra curve of `a`, with its name.
    pub moved: Vec<(usize, String)>,
}

pub fn pair_relation(a: &SurfaceModel, b: &SurfaceModel) -> Result<PairRelation> {
    if a.vertices != b.vertices {
        return Err(Error::Unsupported("pairs must share the dual graph".into()));
    }
    let mut shared = Vec::new();
    let mut moved = Vec::new();
    for e in 0..a.n() {
        let wb = &b.decomposition_curves[e];
        if &a.decomposition_curves[e] == wb {
            shared.push(e);
        } else if let Some(extra) = a.extra_curve_by_word(wb).or_else(|| a.extra_curve_by_word(&wb.inverse())) {
            moved.push((e, extra.name.clone()));
        } else {
            return Err(Error::Unsupported(format!(
                "curve {} of {} is not a shipped curve of {}",
                b.edges[e], b.preset, a.preset
            )));
        }
    }
    Ok(PairRelation { shared, moved })
}

/// `ψ_β` expanded in the `φ` basis of `a`, on the block of colorings fixed by the shared curves.
pub fn psi_column(a: &SurfaceModel, b: &SurfaceModel, beta: &[u32], r: u32) -> Result<(ColoringSet, Vec<f64>)> {
    if !b.is_admissible(beta, r) {
        return Err(Error::Config(format!("{beta:?} is not admissible for {} at r = {r}", b.preset)));
    }
    let rel = pair_relation(a, b)?;
    let mut fixed = vec![None; a.n()];
    for &e in &rel.shared {
        fixed[e] = Some(beta[e]);
    }
    let basis = enumerate_restricted(a, r, &fixed);
    let eig = |x: u32| -2.0 * (PI * x as f64 / r as f64).cos();
    let mut ops: Vec<BandedOperator> = Vec::new();
    let mut values = Vec::new();
    for &e in &rel.shared {
        ops.push(curve_operator_on(a, &a.edges[e], basis.clone())?);
        values.push(eig(beta[e]));
    }
    for (e, name) in &rel.moved {
        ops.push(curve_operator_on(a, name, basis.clone())?);
        values.push(eig(beta[*e]));
    }
    let refs: Vec<&BandedOperator> = ops.iter().collect();
    let v = joint_eigenvector(&refs, &values)?;
    Ok((basis, v))
}

/// One-holed-torus change of basis for the handle with loop `loop_edge`.
///
/// Rows are the loop colors of the first decomposition, columns those of the
/// re-cut one, both shifted and ascending; the boundary color is `boundary`.
/// Columns carry the largest-modulus-positive phase convention.
pub fn move_block(r: u32, boundary: u32) -> Result<(Vec<u32>, DMatrix<Complex64>)> {
    let ctx = RecouplingContext::new(r)?;
    let b = boundary
        .checked_sub(1)
        .filter(|b| b % 2 == 0)
        .ok_or_else(|| Error::Config(format!("boundary color {boundary} has the wrong parity")))?;
    let labels: Vec<u32> = (0..r - 1).filter(|&a| ctx.admissible(a, a, b)).collect();
    let m = labels.len();
    let norm = |a: u32| (ctx.theta(a, a, b) / ctx.delta(a)).abs().sqrt();
    let mut h = DMatrix::<Complex64>::zeros(m, m);
    for (i, &a) in labels.iter().enumerate() {
        for (j, &c) in labels.iter().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for k in (a.abs_diff(c)..=a + c).step_by(2) {
                if !ctx.admissible(a, c, k) {
                    continue;
                }
                let tw = ctx.half_twist(a, c, k);
                s += tw * tw * (ctx.delta(k) / ctx.theta(a, c, k) * ctx.tet(a, a, k, c, c, b));
            }
            h[(i, j)] = s / (norm(a) * norm(c));
        }
    }
    let frob: f64 = h.iter().map(|z| z.norm_sqr()).sum();
    h *= Complex64::new((m as f64 / frob).sqrt(), 0.0);
    // The alternating Tet sums lose digits to cancellation at large levels.
    let defect = (h.adjoint() * &h - DMatrix::<Complex64>::identity(m, m)).camax();
    if defect > TAU_PAIR {
        return Err(Error::NonConvergent(format!("move block at r = {r} is not unitary (defect {defect:.3e})")));
    }
    for j in 0..m {
        let col: Vec<f64> = (0..m).map(|i| h[(i, j)].norm()).collect();
        let best = dominant_index(&col);
        let phase = h[(best, j)].conj() / h[(best, j)].norm();
        for i in 0..m {
            h[(i, j)] *= phase;
        }
    }
    Ok((labels.iter().map(|a| a + 1).collect(), h))
}

/// `⟨φ_α, ψ_β⟩` for a shipped pair of decompositions.
pub fn exact_pairing(
    a: &SurfaceModel,
    b: &SurfaceModel,
    alpha: &[u32],
    beta: &[u32],
    r: u32,
    backend: Backend,
) -> Result<Complex64> {
    if !a.is_admissible(alpha, r) {
        return Err(Error::Config(format!("{alpha:?} is not admissible for {} at r = {r}", a.preset)));
    }
    if !b.is_admissible(beta, r) {
        return Err(Error::Config(format!("{beta:?} is not admissible for {} at r = {r}", b.preset)));
    }
    let rel = pair_relation(a, b)?;
    if rel.shared.iter().any(|&e| alpha[e] != beta[e]) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    match backend {
        Backend::JointEigenvector => {
            let (basis, v) = psi_column(a, b, beta, r)?;
            Ok(Complex64::new(basis.position(alpha).map(|i| v[i]).unwrap_or(0.0), 0.0))
        }
        Backend::MoveComposition => {
            let mut value = Complex64::new(1.0, 0.0);
            for (e, name) in &rel.moved {
                let extra = a.extra_curve(name)?;
                debug_assert_eq!(extra.loop_edge, *e);
                let (labels, block) = move_block(r, alpha[extra.boundary_edge])?;
                let i = labels.iter().position(|&x| x == alpha[*e]);
                let j = labels.iter().position(|&x| x == beta[*e]);
                value *= match (i, j) {
                    (Some(i), Some(j)) => block[(i, j)],
                    _ => Complex64::new(0.0, 0.0),
                };
            }
            if rel.moved.is_empty() {
                value = Complex64::new(if alpha == beta { 1.0 } else { 0.0 }, 0.0);
            }
            Ok(value)
        }
    }
}

#[derive(Clone, Debug)]
pub struct PairingMatrix {
    pub level: u32,
    pub backend: Backend,
    pub rows: Vec<Vec<u32>>,
    pub cols: Vec<Vec<u32>>,
    pub entries: DMatrix<Complex64>,
}

impl PairingMatrix {
    /// `max |M^*M - I|` and `max |MM^* - I|`.
    pub fn unitarity_residual(&self) -> f64 {
        let m = &self.entries;
        let n = m.nrows();
        let id = DMatrix::<Complex64>::identity(n, n);
        let a = (m.adjoint() * m - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let b = (m * m.adjoint() - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
        a.max(b)
    }

    /// CSV rows `r,alpha...,beta...,re,im,modulus` for nonzero entries.
    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map(Vec::len).unwrap_or(0);
        let mut out = String::from("r");
        for i in 1..=n {
            out.push_str(&format!(",alpha{i}"));
        }
        for i in 1..=n {
            out.push_str(&format!(",beta{i}"));
        }
        out.push_str(",re,im,modulus\n");
        for (i, a) in self.rows.iter().enumerate() {
            for (j, b) in self.cols.iter().enumerate() {
                let z = self.entries[(i, j)];
                if z.norm() == 0.0 {
                    continue;
                }
                let join = |v: &[u32]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
                out.push_str(&format!(
                    "{},{},{},{:.17e},{:.17e},{:.17e}\n",
                    self.level,
                    join(a),
                    join(b),
                    z.re,
                    z.im,
                    z.norm()
                ));
            }
        }
        out
    }
}

pub fn pairing_matrix(a: &SurfaceModel, b: &SurfaceModel, r: u32, backend: Backend) -> Result<PairingMatrix> {
    let rows = enumerate_admissible(a, r).colorings;
    let cols = enumerate_admissible(b, r).colorings;
    let columns: Vec<Vec<Complex64>> = cols
        .par_iter()
        .map(|beta| -> Result<Vec<Complex64>> {
            match backend {
                Backend::JointEigenvector => {
                    let (basis, v) = psi_column(a, b, beta, r)?;
                    Ok(rows
                        .iter()
                        .map(|alpha| Complex64::new(basis.position(alpha).map(|i| v[i]).unwrap_or(0.0), 0.0))
                        .collect())
                }
                Backend::MoveComposition => {
                    rows.iter().map(|alpha| exact_pairing(a, b, alpha, beta, r, backend)).collect()
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut entries = DMatrix::<Complex64>::zeros(rows.len(), cols.len());
    for (j, col) in columns.iter().enumerate() {
        let mut col = col.clone();
        let mut re: Vec<f64> = col.iter().map(|z| z.re).collect();
        if col.iter().all(|z| z.im == 0.0) {
            fix_phase(&mut re);
            col = re.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
        }
        for (i, z) in col.into_iter().enumerate() {
            entries[(i, j)] = z;
        }
    }
    Ok(PairingMatrix { level: r, backend, rows, cols, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recoupling::curve_operator;
    use crate::surfaces::build_preset_surface;

    fn pair() -> (SurfaceModel, SurfaceModel) {
        (build_preset_surface(2, "dumbbell2").unwrap(), build_preset_surface(2, "smove-dumbbell2").unwrap())
    }

    #[test]
    fn relation_of_the_shipped_pair() {
        let (d, s) = pair();
        let rel = pair_relation(&d, &s).unwrap();
        assert_eq!(rel.shared, vec![1, 2]);
        assert_eq!(rel.moved, vec![(0, "b1".to_string())]);
        let back = pair_relation(&s, &d).unwrap();
        assert_eq!(back.moved, vec![(0, "a1".to_string())]);
    }

    #[test]
    fn level_two_pairing_has_modulus_one() {
        let (d, s) = pair();
        for backend in [Backend::JointEigenvector, Backend::MoveComposition] {
            let z = exact_pairing(&d, &s, &[1, 1, 1], &[1, 1, 1], 2, backend).unwrap();
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn move_block_columns_are_longitude_eigenvectors() {
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        for r in [5, 8, 11] {
            for boundary in (1..r).step_by(2) {
                let (labels, block) = move_block(r, boundary).unwrap();
                let c3 = (boundary + 1) / 2;
                let basis = enumerate_restricted(&d, r, &[None, Some(boundary), Some(c3)]);
                if basis.is_empty() {
                    continue;
                }
                let op = curve_operator_on(&d, "b1", basis.clone()).unwrap().to_dense();
                for (j, &c) in labels.iter().enumerate() {
                    let lambda = -2.0 * (PI * c as f64 / r as f64).cos();
                    let v: Vec<Complex64> = labels
                        .iter()
                        .map(|&a| {
                            let i = labels.iter().position(|&x| x == a).unwrap();
                            block[(i, j)]
                        })
                        .collect();
                    for (row, &a) in labels.iter().enumerate() {
                        let gi = basis.position(&[a, boundary, c3]).unwrap();
                        let tv: Complex64 = labels
                            .iter()
                            .enumerate()
                            .map(|(col, &a2)| v[col] * op[(gi, basis.position(&[a2, boundary, c3]).unwrap())])
                            .sum();
                        assert!((tv - lambda * v[row]).norm() < 1e-10, "r={r} b={boundary} c={c}");
                    }
                }
            }
        }
    }

    #[test]
    fn backends_agree_and_are_unitary() {
        let (d, s) = pair();
        for r in [3, 5, 8] {
            let je = pairing_matrix(&d, &s, r, Backend::JointEigenvector).unwrap();
            let mc = pairing_matrix(&d, &s, r, Backend::MoveComposition).unwrap();
            assert!(je.unitarity_residual() < 1e-10);
            assert!(mc.unitarity_residual() < 1e-10, "r={r}: {}", mc.unitarity_residual());
            let gap = (&je.entries - &mc.entries).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(gap < 1e-8, "r={r}: {gap}");
        }
    }

    #[test]
    fn joint_eigenvector_matches_dense_oracle() {
        let (d, s) = pair();
        let r = 4;
        let ops: Vec<_> = ["b1", "e2", "e3"].iter().map(|c| curve_operator(&d, c, r).unwrap()).collect();
        let sum = ops[0].to_dense() + ops[1].to_dense() * std::f64::consts::E + ops[2].to_dense() * 7.3;
        let eig = nalgebra::SymmetricEigen::new(sum);
        for beta in enumerate_admissible(&s, r).colorings {
            let (basis, v) = psi_column(&d, &s, &beta, r).unwrap();
            let f = |x: u32| -2.0 * (PI * x as f64 / r as f64).cos();
            let target = f(beta[0]) + std::f64::consts::E * f(beta[1]) + 7.3 * f(beta[2]);
            let col = (0..eig.eigenvalues.len()).find(|&i| (eig.eigenvalues[i] - target).abs() < 1e-9).unwrap();
            let full: Vec<f64> = ops[0]
                .basis
                .colorings
                .iter()
                .map(|c| basis.position(c).map(|i| v[i]).unwrap_or(0.0))
                .collect();
            let overlap: f64 = full.iter().zip(eig.eigenvectors.column(col).iter()).map(|(a, b)| a * b).sum();
            assert!((overlap.abs() - 1.0).abs() < 1e-10);
        }
    }
}
