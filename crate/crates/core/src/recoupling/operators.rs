use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::RecouplingContext;
use crate::error::{Error, Result};
use crate::surfaces::{enumerate_admissible, ColoringSet, SurfaceModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveRule {
    /// Decomposition curve `C_e`: diagonal with entries `-2cos(πc_e/r)`.
    Diagonal(usize),
    /// Longitude of the handle at vertex `(loop, loop, boundary)`.
    Longitude { loop_edge: usize, boundary_edge: usize },
}

pub fn curve_rule(surface: &SurfaceModel, curve: &str) -> Result<(CurveRule, Vec<u32>)> {
    let n = surface.n();
    if let Some(e) = surface.edge_index(curve) {
        return Ok((CurveRule::Diagonal(e), vec![0; n]));
    }
    let extra = surface.extra_curve(curve)?;
    Ok((
        CurveRule::Longitude { loop_edge: extra.loop_edge, boundary_edge: extra.boundary_edge },
        extra.intersections.clone(),
    ))
}

/// `‖Γ_a‖` up to factors independent of the loop color `a`.
fn loop_norm(ctx: &RecouplingContext, a: u32, b: u32) -> f64 {
    (ctx.theta(a, a, b) / ctx.delta(a)).abs().sqrt()
}

/// Coefficient `F_k` at coloring `c`: the `φ_{c+k}` component of `T φ_c`.
///
/// Returns 0 when `c + k` is not admissible.
pub fn curve_coefficient(surface: &SurfaceModel, ctx: &RecouplingContext, rule: CurveRule, c: &[u32], k: &[i32]) -> f64 {
    let r = ctx.level;
    let target: Vec<u32> = c.iter().zip(k).map(|(&v, &dk)| (v as i64 + dk as i64).max(0) as u32).collect();
    if !surface.is_admissible(&target, r) {
        return 0.0;
    }
    match rule {
        CurveRule::Diagonal(e) => {
            if k.iter().all(|&v| v == 0) {
                -2.0 * (PI * c[e] as f64 / r as f64).cos()
            } else {
                0.0
            }
        }
        CurveRule::Longitude { loop_edge, boundary_edge } => {
            if k.iter().enumerate().any(|(i, &v)| if i == loop_edge { v.abs() != 1 } else { v != 0 }) {
                return 0.0;
            }
            let a = c[loop_edge] - 1;
            let cc = target[loop_edge] - 1;
            let b = c[boundary_edge] - 1;
            // Fuse the parallel strand into the loop, then collapse the triangle
            // (a, a, 1) with legs (cc, cc, b).
            let m = ctx.delta(cc) / ctx.theta(a, 1, cc) * ctx.tet(a, a, 1, cc, cc, b) / ctx.theta(cc, cc, b);
            m * loop_norm(ctx, cc, b) / loop_norm(ctx, a, b)
        }
    }
}

/// A curve operator stored band by band over a fixed coloring basis.
#[derive(Clone, Debug)]
pub struct BandedOperator {
    pub curve: String,
    pub level: u32,
    pub rule: CurveRule,
    /// `M_e`: no band has `|k_e| > M_e`.
    pub bandwidths: Vec<u32>,
    pub basis: ColoringSet,
    /// offset `k` -> source coloring `c` -> coefficient of `φ_{c+k}` in `T φ_c`.
    pub bands: BTreeMap<Vec<i32>, BTreeMap<Vec<u32>, f64>>,
}

pub fn curve_operator(surface: &SurfaceModel, curve: &str, r: u32) -> Result<BandedOperator> {
    if r < 2 {
        return Err(Error::OutOfRange(format!("level {r} < 2")));
    }
    curve_operator_on(surface, curve, enumerate_admissible(surface, r))
}

/// Curve operator restricted to `basis`, which must be invariant under the curve.
pub fn curve_operator_on(surface: &SurfaceModel, curve: &str, basis: ColoringSet) -> Result<BandedOperator> {
    let r = basis.level;
    let ctx = RecouplingContext::new(r)?;
    let (rule, bandwidths) = curve_rule(surface, curve)?;
    let offsets = band_offsets(&bandwidths);
    let mut bands: BTreeMap<Vec<i32>, BTreeMap<Vec<u32>, f64>> = BTreeMap::new();
    for c in &basis.colorings {
        for k in &offsets {
            let v = curve_coefficient(surface, &ctx, rule, c, k);
            if v != 0.0 {
                bands.entry(k.clone()).or_default().insert(c.clone(), v);
            }
        }
    }
    Ok(BandedOperator { curve: curve.to_string(), level: r, rule, bandwidths, basis, bands })
}

/// All offsets `k` with `|k_e| <= M_e`.
pub fn band_offsets(bandwidths: &[u32]) -> Vec<Vec<i32>> {
    let mut out = vec![Vec::new()];
    for &m in bandwidths {
        let m = m as i32;
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (-m..=m).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

impl BandedOperator {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Coefficient `F_k` at coloring `c` (0 when absent).
    pub fn coefficient(&self, c: &[u32], k: &[i32]) -> f64 {
        self.bands.get(k).and_then(|m| m.get(c)).copied().unwrap_or(0.0)
    }

    /// Entries `(row, col, value)` with `row` the target index; targets outside the basis are skipped.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (k, band) in &self.bands {
            for (c, &v) in band {
                let target: Vec<u32> = c.iter().zip(k).map(|(&x, &d)| (x as i64 + d as i64) as u32).collect();
                if let (Some(i), Some(j)) = (self.basis.position(&target), self.basis.position(c)) {
                    out.push((i, j, v));
                }
            }
        }
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }

    pub fn is_diagonal(&self) -> bool {
        self.bands.keys().all(|k| k.iter().all(|&v| v == 0))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let zero = vec![0; self.bandwidths.len()];
        self.basis.colorings.iter().map(|c| self.coefficient(c, &zero)).collect()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, j, x) in self.entries() {
            out[i] += x * v[j];
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, j, v) in self.entries() {
            m[(i, j)] += v;
        }
        m
    }

    /// `max |T_ij - T_ji|`.
    pub fn self_adjoint_residual(&self) -> f64 {
        let entries: HashMap<(usize, usize), f64> = self.entries().into_iter().map(|(i, j, v)| ((i, j), v)).collect();
        entries
            .iter()
            .map(|(&(i, j), &v)| (v - entries.get(&(j, i)).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max)
    }

    /// Coordinate-format export `row,col,value`.
    pub fn to_coo_csv(&self) -> String {
        let mut out = String::from("row,col,value\n");
        for (i, j, v) in self.entries() {
            out.push_str(&format!("{i},{j},{v:.17e}\n"));
        }
        out
    }

    /// Index sets of the connected components of the sparsity graph.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let n = self.dim();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut root = x;
            while p[root] != root {
                root = p[root];
            }
            let mut y = x;
            while p[y] != root {
                let next = p[y];
                p[y] = root;
                y = next;
            }
            root
        }
        for (i, j, _) in self.entries() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// Eigenvalues computed block by block with a dense symmetric solver.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let dense = self.to_dense();
        let mut out = Vec::with_capacity(self.dim());
        for block in self.blocks() {
            let m = DMatrix::from_fn(block.len(), block.len(), |i, j| {
                0.5 * (dense[(block[i], block[j])] + dense[(block[j], block[i])])
            });
            out.extend(SymmetricEigen::new(m).eigenvalues.iter().copied());
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiplicityRow {
    pub k: u32,
    pub eigenvalue: f64,
    pub observed: usize,
    pub expected: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub curve: String,
    pub level: u32,
    pub max_deviation: f64,
    pub multiplicities: Vec<MultiplicityRow>,
    pub multiplicities_match: bool,
    pub self_adjoint_residual: f64,
}

/// Compares the spectrum of a full-basis operator with `{-2cos(πk/r)}` and the
/// coloring counts of the re-cut surface.
pub fn operator_spectrum_check(surface: &SurfaceModel, op: &BandedOperator) -> Result<SpectrumReport> {
    let r = op.level;
    let allowed: Vec<f64> = (0..=r).map(|k| -2.0 * (PI * k as f64 / r as f64).cos()).collect();
    let mut observed = vec![0usize; r as usize + 1];
    let mut max_deviation: f64 = 0.0;
    for lambda in op.eigenvalues() {
        let (k, dev) = (1..r)
            .map(|k| (k, (lambda - allowed[k as usize]).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("r >= 2");
        max_deviation = max_deviation.max(dev);
        observed[k as usize] += 1;
    }
    let (recut, partner) = match op.rule {
        CurveRule::Diagonal(e) => (surface.clone(), e),
        CurveRule::Longitude { loop_edge, .. } => (surface.recut(&op.curve)?, loop_edge),
    };
    let mut expected = vec![0usize; r as usize + 1];
    for c in enumerate_admissible(&recut, r).colorings {
        expected[c[partner] as usize] += 1;
    }
    let multiplicities: Vec<MultiplicityRow> = (1..r)
        .filter(|&k| observed[k as usize] + expected[k as usize] > 0)
        .map(|k| MultiplicityRow {
            k,
            eigenvalue: allowed[k as usize],
            observed: observed[k as usize],
            expected: expected[k as usize],
        })
        .collect();
    Ok(SpectrumReport {
        curve: op.curve.clone(),
        level: r,
        max_deviation,
        multiplicities_match: multiplicities.iter().all(|m| m.observed == m.expected),
        multiplicities,
        self_adjoint_residual: op.self_adjoint_residual(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfaces::build_preset_surface;

    #[test]
    fn decomposition_curve_is_diagonal() {
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        let op = curve_operator(&d, "e1", 5).unwrap();
        assert!(op.is_diagonal());
        let c = [2, 1, 2];
        assert!(op.basis.position(&c).is_some());
        assert!((op.coefficient(&c, &[0, 0, 0]) + 2.0 * (2.0 * PI / 5.0).cos()).abs() < 1e-15);
        let rep = operator_spectrum_check(&d, &op).unwrap();
        assert_eq!(rep.max_deviation, 0.0);
        assert!(rep.multiplicities_match);
    }

    #[test]
    fn longitude_bands_only_move_the_loop_edge() {
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        for r in [4, 7, 10] {
            let op = curve_operator(&d, "b1", r).unwrap();
            assert!(op.bands.keys().all(|k| k[0].abs() == 1 && k[1] == 0 && k[2] == 0), "{:?}", op.bands.keys());
            assert_eq!(op.bandwidths, vec![1, 0, 0]);
        }
    }

    #[test]
    fn longitude_is_symmetric_and_has_the_recut_spectrum() {
        for (name, curve) in [("dumbbell2", "b1"), ("dumbbell2", "b2"), ("smove-dumbbell2", "a1")] {
            let s = build_preset_surface(2, name).unwrap();
            for r in [4, 6, 9] {
                let op = curve_operator(&s, curve, r).unwrap();
                let rep = operator_spectrum_check(&s, &op).unwrap();
                assert!(rep.self_adjoint_residual < 1e-12, "{name} {curve} r={r}: {}", rep.self_adjoint_residual);
                assert!(rep.max_deviation < 1e-10, "{name} {curve} r={r}: {}", rep.max_deviation);
                assert!(rep.multiplicities_match, "{name} {curve} r={r}: {:?}", rep.multiplicities);
            }
        }
    }

    #[test]
    fn disjoint_curves_commute() {
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        let a = curve_operator(&d, "b1", 8).unwrap().to_dense();
        let b = curve_operator(&d, "b2", 8).unwrap().to_dense();
        let c = curve_operator(&d, "e2", 8).unwrap().to_dense();
        assert!((&a * &b - &b * &a).amax() < 1e-12);
        assert!((&a * &c - &c * &a).amax() < 1e-12);
    }
}
