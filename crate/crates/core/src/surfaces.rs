//! Pants decompositions of closed surfaces: dual graphs, admissible colorings,
//! the moment polytope and the lattice of the torus action.
//!
//! Colors are shifted by one throughout: an edge color `c` lies in `1..r`
//! and corresponds to the twice-spin label `c - 1` of the skein theory.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used to classify polytope points as boundary points.
pub const TAU_POLY: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    Theta2,
    Dumbbell2,
    SmoveDumbbell2,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Theta2, Preset::Dumbbell2, Preset::SmoveDumbbell2];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Theta2 => "theta2",
            Preset::Dumbbell2 => "dumbbell2",
            Preset::SmoveDumbbell2 => "smove-dumbbell2",
        }
    }

    pub fn genus(self) -> usize {
        2
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// One letter `g` or `g^-1` of a word in the surface-group generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub generator: usize,
    pub inverse: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    pub letters: Vec<Letter>,
}

impl Word {
    /// Parses a word such as `a1 b1^-1` or the commutator shorthand `[a1,b1]`.
    pub fn parse(text: &str, generators: &[String]) -> Result<Word> {
        let lookup = |name: &str| -> Result<usize> {
            generators
                .iter()
                .position(|g| g == name)
                .ok_or_else(|| Error::Config(format!("unknown generator `{name}` in `{text}`")))
        };
        let mut letters = Vec::new();
        for token in text.split_whitespace() {
            if let Some(inner) = token.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
                let (x, y) = inner
                    .split_once(',')
                    .ok_or_else(|| Error::Config(format!("bad commutator `{token}`")))?;
                let (x, y) = (lookup(x.trim())?, lookup(y.trim())?);
                for (generator, inverse) in [(x, false), (y, false), (x, true), (y, true)] {
                    letters.push(Letter { generator, inverse });
                }
            } else if let Some(name) = token.strip_suffix("^-1") {
                letters.push(Letter { generator: lookup(name)?, inverse: true });
            } else {
                letters.push(Letter { generator: lookup(token)?, inverse: false });
            }
        }
        Ok(Word { letters })
    }

    /// No letter is followed by its own inverse.
    pub fn is_reduced(&self) -> bool {
        self.letters
            .windows(2)
            .all(|w| !(w[0].generator == w[1].generator && w[0].inverse != w[1].inverse))
    }

    pub fn inverse(&self) -> Word {
        Word {
            letters: self
                .letters
                .iter()
                .rev()
                .map(|l| Letter { generator: l.generator, inverse: !l.inverse })
                .collect(),
        }
    }

    pub fn render(&self, generators: &[String]) -> String {
        self.letters
            .iter()
            .map(|l| {
                if l.inverse {
                    format!("{}^-1", generators[l.generator])
                } else {
                    generators[l.generator].clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A shipped curve that is not part of the decomposition.
///
/// Every extra curve of the presets is a longitude of a handle: it runs
/// parallel to the loop edge `loop_edge` of a vertex `(loop, loop, boundary)`
/// and meets the decomposition curve of `loop_edge` once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtraCurve {
    pub name: String,
    pub word: Word,
    /// Geometric intersection number with each decomposition curve.
    pub intersections: Vec<u32>,
    pub loop_edge: usize,
    pub boundary_edge: usize,
}

impl ExtraCurve {
    /// Edge whose decomposition curve this curve replaces in the re-cut surface.
    pub fn partner_edge(&self) -> usize {
        self.loop_edge
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceModel {
    pub preset: Preset,
    pub genus: usize,
    pub edges: Vec<String>,
    /// Vertex triples over edge indices; an edge may repeat within a triple.
    pub vertices: Vec<[usize; 3]>,
    pub generators: Vec<String>,
    /// Word of the decomposition curve `C_e`, indexed by edge.
    pub decomposition_curves: Vec<Word>,
    pub extra_curves: Vec<ExtraCurve>,
    /// Constant angle offsets `theta_e -> theta_e + offset_e` of the base section.
    pub angle_offsets: Vec<f64>,
}

/// Builds one of the shipped genus-2 presets.
pub fn build_preset_surface(genus: usize, preset: &str) -> Result<SurfaceModel> {
    if genus < 2 {
        return Err(Error::OutOfRange(format!("genus {genus} < 2")));
    }
    let preset: Preset = preset.parse()?;
    if preset.genus() != genus {
        return Err(Error::GenusMismatch {
            preset: preset.name().into(),
            expected: preset.genus(),
            got: genus,
        });
    }
    let generators: Vec<String> = ["a1", "b1", "a2", "b2"].iter().map(|s| s.to_string()).collect();
    let edges: Vec<String> = ["e1", "e2", "e3"].iter().map(|s| s.to_string()).collect();
    let w = |s: &str| Word::parse(s, &generators).expect("preset words are well formed");
    let longitude = |name: &str, word: &str, loop_edge: usize, boundary_edge: usize| {
        let mut intersections = vec![0; 3];
        intersections[loop_edge] = 1;
        ExtraCurve { name: name.into(), word: w(word), intersections, loop_edge, boundary_edge }
    };
    let (vertices, curves, extra) = match preset {
        Preset::Theta2 => (vec![[0, 1, 2], [0, 1, 2]], vec![w("a1"), w("a2"), w("a1 a2")], vec![]),
        Preset::Dumbbell2 => (
            vec![[0, 0, 1], [2, 2, 1]],
            vec![w("a1"), w("[a1,b1]"), w("a2")],
            vec![longitude("b1", "b1", 0, 1), longitude("b2", "b2", 2, 1)],
        ),
        Preset::SmoveDumbbell2 => (
            vec![[0, 0, 1], [2, 2, 1]],
            vec![w("b1"), w("[a1,b1]"), w("a2")],
            vec![longitude("a1", "a1", 0, 1), longitude("b2", "b2", 2, 1)],
        ),
    };
    let model = SurfaceModel {
        preset,
        genus,
        edges,
        vertices,
        generators,
        decomposition_curves: curves,
        extra_curves: extra,
        angle_offsets: vec![0.0; 3],
    };
    model.validate()?;
    Ok(model)
}

impl SurfaceModel {
    pub fn n(&self) -> usize {
        self.edges.len()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.genus;
        if self.edges.len() != 3 * g - 3 || self.vertices.len() != 2 * g - 2 {
            return Err(Error::Config("edge or vertex count does not match the genus".into()));
        }
        let mut slots = vec![0usize; self.n()];
        for v in &self.vertices {
            for &e in v {
                slots[e] += 1;
            }
        }
        if slots.iter().any(|&s| s != 2) {
            return Err(Error::Config("every edge must fill exactly two vertex slots".into()));
        }
        if self.decomposition_curves.iter().any(|w| w.letters.is_empty() || !w.is_reduced()) {
            return Err(Error::Config("decomposition words must be nonempty and reduced".into()));
        }
        Ok(())
    }

    pub fn edge_index(&self, name: &str) -> Option<usize> {
        let bare = name.trim_start_matches("C_").trim_start_matches('C');
        self.edges.iter().position(|e| e == bare || e == name)
    }

    /// Word of a named curve: `e1`/`C_e1` for decomposition curves, or an extra curve name.
    pub fn curve_word(&self, name: &str) -> Result<Word> {
        if let Some(e) = self.edge_index(name) {
            return Ok(self.decomposition_curves[e].clone());
        }
        self.extra_curve(name).map(|c| c.word.clone())
    }

    pub fn extra_curve(&self, name: &str) -> Result<&ExtraCurve> {
        self.extra_curves
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownCurve(name.to_string()))
    }

    /// Extra curve whose word equals `word`, if shipped.
    pub fn extra_curve_by_word(&self, word: &Word) -> Option<&ExtraCurve> {
        self.extra_curves.iter().find(|c| &c.word == word)
    }

    /// Same graph with `C_{partner}` replaced by the extra curve `name`.
    pub fn recut(&self, name: &str) -> Result<SurfaceModel> {
        let curve = self.extra_curve(name)?.clone();
        let mut out = self.clone();
        let old = std::mem::replace(&mut out.decomposition_curves[curve.loop_edge], curve.word.clone());
        out.extra_curves = self
            .extra_curves
            .iter()
            .map(|c| {
                if c.name == name {
                    ExtraCurve { name: self.edges[c.loop_edge].clone(), word: old.clone(), ..c.clone() }
                } else {
                    c.clone()
                }
            })
            .collect();
        if let Some(p) = Preset::ALL.into_iter().find(|p| {
            build_preset_surface(2, p.name()).map(|s| s.decomposition_curves == out.decomposition_curves).unwrap_or(false)
        }) {
            out.preset = p;
        }
        Ok(out)
    }

    pub fn is_admissible(&self, c: &[u32], r: u32) -> bool {
        c.len() == self.n()
            && self.vertices.iter().all(|&[e, f, g]| {
                let (a, b, d) = (c[e], c[f], c[g]);
                let s = a + b + d;
                s < 2 * r && s % 2 == 1 && a.abs_diff(b) < d && d < a + b
            })
    }

    /// Linear inequalities `normal . x + offset >= 0` cutting out the moment polytope.
    pub fn polytope_constraints(&self) -> Vec<(Vec<f64>, f64)> {
        let n = self.n();
        let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
        for &[e, f, g] in &self.vertices {
            for (signs, offset) in [([1.0, 1.0, -1.0], 0.0), ([1.0, -1.0, 1.0], 0.0), ([-1.0, 1.0, 1.0], 0.0), ([-1.0, -1.0, -1.0], 2.0)] {
                let mut normal = vec![0.0; n];
                for (k, &idx) in [e, f, g].iter().enumerate() {
                    normal[idx] += signs[k];
                }
                if normal.iter().any(|v| *v != 0.0) && !out.iter().any(|(m, o)| m == &normal && *o == offset) {
                    out.push((normal, offset));
                }
            }
        }
        out
    }

    /// Euclidean distance from `x` to the nearest facet hyperplane; negative outside.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.polytope_constraints()
            .iter()
            .map(|(m, o)| {
                let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
                (m.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + o) / norm
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Interior,
    Boundary,
    Outside,
}

pub fn polytope_membership(surface: &SurfaceModel, x: &[f64]) -> Result<Membership> {
    if x.len() != surface.n() {
        return Err(Error::DimensionMismatch { expected: surface.n(), got: x.len() });
    }
    let min_slack = surface
        .polytope_constraints()
        .iter()
        .map(|(m, o)| m.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + o)
        .fold(f64::INFINITY, f64::min);
    Ok(if min_slack > TAU_POLY {
        Membership::Interior
    } else if min_slack >= -TAU_POLY {
        Membership::Boundary
    } else {
        Membership::Outside
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    pub values: Vec<u32>,
    pub level: u32,
}

/// Admissible colorings of one level in lexicographic order.
#[derive(Clone, Debug)]
pub struct ColoringSet {
    pub level: u32,
    pub colorings: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl ColoringSet {
    pub fn from_sorted(level: u32, colorings: Vec<Vec<u32>>) -> ColoringSet {
        let index = colorings.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        ColoringSet { level, colorings, index }
    }

    pub fn len(&self) -> usize {
        self.colorings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colorings.is_empty()
    }

    pub fn position(&self, c: &[u32]) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in &self.colorings {
            let cols: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{},{}\n", self.level, cols.join(",")));
        }
        out
    }
}

pub fn enumerate_admissible(surface: &SurfaceModel, r: u32) -> ColoringSet {
    enumerate_restricted(surface, r, &vec![None; surface.n()])
}

/// Admissible colorings whose entries agree with every `Some` in `fixed`.
pub fn enumerate_restricted(surface: &SurfaceModel, r: u32, fixed: &[Option<u32>]) -> ColoringSet {
    let n = surface.n();
    if r < 2 {
        return ColoringSet::from_sorted(r, Vec::new());
    }
    let range = |e: usize| -> Vec<u32> {
        match fixed.get(e).copied().flatten() {
            Some(v) => vec![v],
            None => (1..r).collect(),
        }
    };
    let colorings: Vec<Vec<u32>> = range(0)
        .into_par_iter()
        .flat_map_iter(|first| {
            let mut found = Vec::new();
            let mut c = vec![first; n];
            fill(surface, r, &range, 1, &mut c, &mut found);
            found
        })
        .collect();
    ColoringSet::from_sorted(r, colorings)
}

fn fill(
    surface: &SurfaceModel,
    r: u32,
    range: &dyn Fn(usize) -> Vec<u32>,
    depth: usize,
    c: &mut Vec<u32>,
    out: &mut Vec<Vec<u32>>,
) {
    if depth == c.len() {
        if surface.is_admissible(c, r) {
            out.push(c.clone());
        }
        return;
    }
    for v in range(depth) {
        c[depth] = v;
        fill(surface, r, range, depth + 1, c, out);
    }
}

/// The lattice `Λ = Z-span{u_e, u_v}` with `u_v = (u_e + u_f + u_g)/2`.
///
/// Vectors are stored with a common denominator of 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub denominator: i64,
    /// Rows of the Hermite normal form of `denominator * Λ`.
    pub numerators: Vec<Vec<i64>>,
    /// Covolume as a reduced fraction `(num, den)`.
    pub covolume: (i64, i64),
    pub torus_volume: f64,
}

impl Lattice {
    pub fn basis(&self) -> Vec<Vec<f64>> {
        self.numerators
            .iter()
            .map(|row| row.iter().map(|&v| v as f64 / self.denominator as f64).collect())
            .collect()
    }

    pub fn covolume_f64(&self) -> f64 {
        self.covolume.0 as f64 / self.covolume.1 as f64
    }

    /// Index `[Λ : Z^E]`.
    pub fn index_over_integers(&self) -> i64 {
        self.covolume.1 / self.covolume.0
    }

    /// Whether `v / denominator` lies in the lattice.
    pub fn contains_scaled(&self, v: &[i64]) -> bool {
        let mut rest = v.to_vec();
        for row in &self.numerators {
            let pivot = row.iter().position(|&x| x != 0).expect("basis rows are nonzero");
            if rest[pivot] % row[pivot] != 0 {
                return false;
            }
            let q = rest[pivot] / row[pivot];
            for (a, b) in rest.iter_mut().zip(row) {
                *a -= q * b;
            }
        }
        rest.iter().all(|&x| x == 0)
    }

    /// Membership of an integer vector in the dual lattice `Λ*`.
    pub fn dual_contains(&self, m: &[i64]) -> bool {
        self.numerators
            .iter()
            .all(|row| row.iter().zip(m).map(|(a, b)| a * b).sum::<i64>() % self.denominator == 0)
    }

    /// Smallest `s > 0` with `s * u_e` in the lattice.
    pub fn edge_period(&self, e: usize) -> f64 {
        let n = self.numerators.len();
        (1..=self.denominator)
            .find(|&k| {
                let mut v = vec![0; n];
                v[e] = k;
                self.contains_scaled(&v)
            })
            .map(|k| k as f64 / self.denominator as f64)
            .unwrap_or(1.0)
    }
}

pub fn lattice_data(surface: &SurfaceModel) -> Lattice {
    let n = surface.n();
    let mut gens: Vec<Vec<i64>> = (0..n)
        .map(|e| {
            let mut v = vec![0; n];
            v[e] = 2;
            v
        })
        .collect();
    for &[e, f, g] in &surface.vertices {
        let mut v = vec![0; n];
        for idx in [e, f, g] {
            v[idx] += 1;
        }
        gens.push(v);
    }
    let numerators = hermite_normal_form(gens, n);
    let det: i64 = numerators.iter().enumerate().map(|(i, row)| row[i]).product::<i64>().abs();
    let den = 2i64.pow(n as u32);
    let g = gcd(det, den);
    let covolume = (det / g, den / g);
    let torus_volume = (2.0 * std::f64::consts::PI).powi(n as i32) * covolume.0 as f64 / covolume.1 as f64;
    Lattice { denominator: 2, numerators, covolume, torus_volume }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Row-style Hermite normal form of the lattice spanned by `rows` (full rank assumed).
pub(crate) fn hermite_normal_form(mut rows: Vec<Vec<i64>>, n: usize) -> Vec<Vec<i64>> {
    let mut basis = Vec::with_capacity(n);
    for col in 0..n {
        // Euclid on the column until a single nonzero entry remains.
        loop {
            let mut nz: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][col] != 0).collect();
            if nz.len() <= 1 {
                break;
            }
            nz.sort_by_key(|&i| rows[i][col].abs());
            let p = nz[0];
            let pivot_row = rows[p].clone();
            for &i in &nz[1..] {
                let q = rows[i][col] / pivot_row[col];
                for (a, b) in rows[i].iter_mut().zip(&pivot_row) {
                    *a -= q * b;
                }
            }
        }
        if let Some(p) = rows.iter().position(|r| r[col] != 0) {
            let mut row = rows.remove(p);
            if row[col] < 0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            basis.push(row);
        }
        rows.retain(|r| r.iter().any(|&v| v != 0));
    }
    // Reduce entries above each pivot into [0, pivot).
    for i in 0..basis.len() {
        for j in 0..i {
            let q = basis[j][i].div_euclid(basis[i][i]);
            let row = basis[i].clone();
            for (a, b) in basis[j].iter_mut().zip(&row) {
                *a -= q * b;
            }
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(surface: &SurfaceModel, r: u32) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        for a in 1..r.max(2) {
            for b in 1..r.max(2) {
                for c in 1..r.max(2) {
                    let v = vec![a, b, c];
                    let ok = surface.vertices.iter().all(|&[e, f, g]| {
                        let (x, y, z) = (v[e] as i64, v[f] as i64, v[g] as i64);
                        let s = x + y + z;
                        s < 2 * r as i64 && s % 2 == 1 && (x - y).abs() < z && z < x + y && (x - z).abs() < y && (y - z).abs() < x
                    });
                    if ok {
                        out.push(v);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn presets_have_expected_shape() {
        let t = build_preset_surface(2, "theta2").unwrap();
        assert_eq!((t.n(), t.vertices.len()), (3, 2));
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        assert_eq!(d.vertices, vec![[0, 0, 1], [2, 2, 1]]);
        let s = build_preset_surface(2, "smove-dumbbell2").unwrap();
        assert_eq!(s.vertices, d.vertices);
        assert_eq!(s.decomposition_curves[0].render(&s.generators), "b1");
        assert_eq!(d.decomposition_curves[1].render(&d.generators), "a1 b1 a1^-1 b1^-1");
        assert!(matches!(build_preset_surface(2, "genus7"), Err(Error::UnknownPreset(_))));
        assert!(build_preset_surface(1, "theta2").is_err());
    }

    #[test]
    fn theta_enumeration_matches_exhaustive_search() {
        let t = build_preset_surface(2, "theta2").unwrap();
        let set = enumerate_admissible(&t, 3);
        assert_eq!(set.colorings, vec![vec![1, 1, 1], vec![1, 2, 2], vec![2, 1, 2], vec![2, 2, 1]]);
        assert_eq!(enumerate_admissible(&t, 2).colorings, vec![vec![1, 1, 1]]);
        for r in 2..12 {
            assert_eq!(enumerate_admissible(&t, r).colorings, brute_force(&t, r));
        }
    }

    #[test]
    fn dumbbell_matches_exhaustive_search() {
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        assert_eq!(enumerate_admissible(&d, 3).len(), 4);
        for r in 2..12 {
            assert_eq!(enumerate_admissible(&d, r).colorings, brute_force(&d, r));
        }
    }

    #[test]
    fn membership_examples() {
        let t = build_preset_surface(2, "theta2").unwrap();
        assert_eq!(polytope_membership(&t, &[0.5, 0.5, 0.5]).unwrap(), Membership::Interior);
        assert_eq!(polytope_membership(&t, &[1.0, 1.0, 0.1]).unwrap(), Membership::Outside);
        assert_eq!(polytope_membership(&t, &[0.2, 0.9, 0.4]).unwrap(), Membership::Outside);
        assert_eq!(polytope_membership(&t, &[0.5, 0.5, 1.0]).unwrap(), Membership::Boundary);
        assert!(polytope_membership(&t, &[0.5]).is_err());
    }

    #[test]
    fn lattices_and_covolumes() {
        let t = lattice_data(&build_preset_surface(2, "theta2").unwrap());
        assert_eq!(t.covolume, (1, 2));
        assert!(t.contains_scaled(&[1, 1, 1]));
        assert!(!t.contains_scaled(&[1, 0, 0]));
        let d = lattice_data(&build_preset_surface(2, "dumbbell2").unwrap());
        assert_eq!(d.covolume, (1, 2));
        assert!(d.contains_scaled(&[2, 1, 0]) && d.contains_scaled(&[0, 1, 2]));
        assert_eq!(d.edge_period(0), 1.0);
        assert_eq!(d.edge_period(1), 0.5);
        assert_eq!(d.index_over_integers(), 2);
    }

    #[test]
    fn colorings_lie_in_the_dual_coset() {
        for name in ["theta2", "dumbbell2"] {
            let s = build_preset_surface(2, name).unwrap();
            let lat = lattice_data(&s);
            for c in enumerate_admissible(&s, 9).colorings {
                let m: Vec<i64> = c.iter().map(|&v| v as i64 - 1).collect();
                assert!(lat.dual_contains(&m), "{name} {c:?}");
            }
        }
    }

    #[test]
    fn recut_of_b1_is_the_smove_preset() {
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        let re = d.recut("b1").unwrap();
        assert_eq!(re.preset, Preset::SmoveDumbbell2);
        assert_eq!(re.extra_curve("e1").unwrap().word.render(&re.generators), "a1");
    }
}
