//! Semiclassical prediction of the pairing between the bases of two pants
//! decompositions: intersections of the level sets, the action `η`, the
//! Maslov-type index `m`, half-form pairings and volumes.
//!
//! Curves shared by both decompositions are divided out first: their level
//! sets coincide, so the prediction is made on the reduced space of the
//! remaining edges. Connecting paths are only built in reduced dimension one.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moduli::word_observable;
use crate::quantization::KahlerModel;
use crate::recoupling::{pair_relation, psi_column};
use crate::surfaces::{hermite_normal_form, lattice_data, polytope_membership, Membership, SurfaceModel, Word};

/// Smallest accepted `|det {μ_i, μ'_j}|`.
pub const TAU_TRANSV: f64 = 1e-6;
/// Newton residual required of accepted intersection points.
pub const NEWTON_TOL: f64 = 1e-12;
/// Largest Gram condition number tolerated in a Lagrangian frame.
pub const FRAME_CONDITION: f64 = 1e8;
/// `λ` of the model complex structure `w = λt + iθ`.
pub const MODEL_LAMBDA: f64 = 0.5;

const FD_STEP: f64 = 5e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelSetKind {
    Fiber,
    Implicit,
}

#[derive(Clone, Debug)]
pub struct LagrangianLevelSet {
    pub decomposition: SurfaceModel,
    pub target: Vec<f64>,
    pub kind: LevelSetKind,
}

impl LagrangianLevelSet {
    /// `{t = x} x T` in the chart of `decomposition`.
    pub fn fiber(decomposition: &SurfaceModel, x: &[f64]) -> Self {
        LagrangianLevelSet { decomposition: decomposition.clone(), target: x.to_vec(), kind: LevelSetKind::Fiber }
    }

    /// `{-tr ρ(C'_j) = -2cos(πy_j)}` for the curves of another decomposition.
    pub fn implicit(decomposition: &SurfaceModel, y: &[f64]) -> Self {
        LagrangianLevelSet { decomposition: decomposition.clone(), target: y.to_vec(), kind: LevelSetKind::Implicit }
    }
}

/// `V_x = Covol(Λ) Π_i 1/sin(πx_i)`.
pub fn lagrangian_volume(decomposition: &SurfaceModel, x: &[f64]) -> Result<f64> {
    if x.len() != decomposition.n() {
        return Err(Error::DimensionMismatch { expected: decomposition.n(), got: x.len() });
    }
    let mut v = lattice_data(decomposition).covolume_f64();
    for &xi in x {
        let s = (PI * xi).sin();
        if s < 1e-8 {
            return Err(Error::OutsidePolytope(x.to_vec()));
        }
        v /= s;
    }
    Ok(v)
}

fn derivative<F: Fn(f64) -> Result<f64>>(f: F, x: f64) -> Result<f64> {
    // Eighth-order central difference: the trace functions oscillate quickly
    // enough that a fourth-order stencil biases orbit actions by ~1e-7.
    const W: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let h = FD_STEP;
    let mut acc = 0.0;
    for (k, w) in W.iter().enumerate() {
        let d = (k + 1) as f64 * h;
        acc += w * (f(x + d)? - f(x - d)?);
    }
    Ok(acc / h)
}

/// The intersection problem after dividing out the shared curves.
#[derive(Clone, Debug)]
pub struct ReducedPair {
    pub chart: SurfaceModel,
    pub other: SurfaceModel,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Edges whose curves differ between the decompositions.
    pub free: Vec<usize>,
    pub shared: Vec<usize>,
    words: Vec<Word>,
    /// Basis of the projection of `Λ` to the free coordinates.
    period_basis: DMatrix<f64>,
}

impl ReducedPair {
    /// `Ok(None)` when a shared curve has different targets, so the level sets are disjoint.
    pub fn new(fiber: &LagrangianLevelSet, implicit: &LagrangianLevelSet) -> Result<Option<Self>> {
        if fiber.kind != LevelSetKind::Fiber || implicit.kind != LevelSetKind::Implicit {
            return Err(Error::Config("expected a fiber and an implicit level set".into()));
        }
        let (a, b) = (&fiber.decomposition, &implicit.decomposition);
        let (x, y) = (&fiber.target, &implicit.target);
        let n = a.n();
        if b.n() != n || y.len() != n || x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len().min(x.len()) });
        }
        if polytope_membership(a, x)? != Membership::Interior {
            return Err(Error::OutsidePolytope(x.clone()));
        }
        if polytope_membership(b, y)? != Membership::Interior {
            return Err(Error::OutsidePolytope(y.clone()));
        }
        let rel = pair_relation(a, b)?;
        let free: Vec<usize> = (0..n).filter(|e| !rel.shared.contains(e)).collect();
        if rel.shared.iter().any(|&e| (x[e] - y[e]).abs() > 1e-12) {
            return Ok(None);
        }
        if free.is_empty() {
            return Err(Error::NonGeneric("identical decompositions: the level sets coincide".into()));
        }
        let m = free.len();
        let mut gens: Vec<Vec<i64>> = free
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let mut v = vec![0; m];
                v[k] = 2;
                v
            })
            .collect();
        for vertex in &a.vertices {
            let mut v = vec![0; m];
            for &e in vertex {
                if let Some(k) = free.iter().position(|&f| f == e) {
                    v[k] += 1;
                }
            }
            gens.push(v);
        }
        let hnf = hermite_normal_form(gens, m);
        let period_basis = DMatrix::from_fn(m, m, |i, j| hnf[i][j] as f64 / 2.0);
        Ok(Some(ReducedPair {
            chart: a.clone(),
            other: b.clone(),
            x: x.clone(),
            y: y.clone(),
            words: free.iter().map(|&e| b.decomposition_curves[e].clone()).collect(),
            free,
            shared: rel.shared,
            period_basis,
        }))
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    /// Covolume of the projected lattice.
    pub fn projected_covolume(&self) -> f64 {
        self.period_basis.determinant().abs()
    }

    fn full_point(&self, tf: &[f64], thf: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut t = self.x.clone();
        let mut th = vec![0.0; t.len()];
        for (k, &e) in self.free.iter().enumerate() {
            t[e] = tf[k];
            th[e] = thf[k];
        }
        (t, th)
    }

    pub fn fiber_t(&self) -> Vec<f64> {
        self.free.iter().map(|&e| self.x[e]).collect()
    }

    fn targets(&self) -> Vec<f64> {
        self.free.iter().map(|&e| -2.0 * (PI * self.y[e]).cos()).collect()
    }

    /// `μ'_j` at reduced coordinates.
    pub fn observable(&self, j: usize, tf: &[f64], thf: &[f64]) -> Result<f64> {
        let (t, th) = self.full_point(tf, thf);
        word_observable(&self.chart, &self.words[j], &t, &th)
    }

    /// `(∂μ'_j/∂t, ∂μ'_j/∂θ)` in reduced coordinates.
    pub fn gradient(&self, j: usize, tf: &[f64], thf: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.dim();
        let mut dt = vec![0.0; m];
        let mut dth = vec![0.0; m];
        for k in 0..m {
            dt[k] = derivative(
                |s| {
                    let mut t = tf.to_vec();
                    t[k] = s;
                    self.observable(j, &t, thf)
                },
                tf[k],
            )?;
            dth[k] = derivative(
                |s| {
                    let mut th = thf.to_vec();
                    th[k] = s;
                    self.observable(j, tf, &th)
                },
                thf[k],
            )?;
        }
        Ok((dt, dth))
    }

    /// Hamiltonian vector field `(-∂_θ g, ∂_t g)` of `μ'_j` (`ι_X ω = -dg`).
    pub fn hamiltonian_field(&self, j: usize, tf: &[f64], thf: &[f64]) -> Result<Vec<f64>> {
        let (dt, dth) = self.gradient(j, tf, thf)?;
        Ok(dth.iter().map(|v| -v).chain(dt).collect())
    }

    /// `X_i = 2π sin(πx_i) ∂/∂θ_i`.
    pub fn fiber_field(&self, i: usize) -> Vec<f64> {
        let m = self.dim();
        let mut v = vec![0.0; 2 * m];
        v[m + i] = 2.0 * PI * (PI * self.x[self.free[i]]).sin();
        v
    }

    /// `{μ_i, μ'_j}` at `(x, θ)`.
    pub fn poisson_matrix(&self, thf: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.dim();
        let tf = self.fiber_t();
        let mut p = DMatrix::zeros(m, m);
        for j in 0..m {
            let (_, dth) = self.gradient(j, &tf, thf)?;
            for i in 0..m {
                p[(i, j)] = 2.0 * PI * (PI * tf[i]).sin() * dth[i];
            }
        }
        Ok(p)
    }

    fn residual(&self, thf: &[f64]) -> Result<DVector<f64>> {
        let tf = self.fiber_t();
        let targets = self.targets();
        let mut g = DVector::zeros(self.dim());
        for j in 0..self.dim() {
            g[j] = self.observable(j, &tf, thf)? - targets[j];
        }
        Ok(g)
    }

    fn newton(&self, seed: &[f64]) -> Result<Option<(Vec<f64>, f64)>> {
        let m = self.dim();
        let tf = self.fiber_t();
        let mut th = seed.to_vec();
        let mut g = self.residual(&th)?;
        for _ in 0..60 {
            if g.amax() < NEWTON_TOL {
                return Ok(Some((th, g.amax())));
            }
            let mut jac = DMatrix::zeros(m, m);
            for j in 0..m {
                let (_, dth) = self.gradient(j, &tf, &th)?;
                for k in 0..m {
                    jac[(j, k)] = dth[k];
                }
            }
            let Some(step) = jac.lu().solve(&g) else { return Ok(None) };
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let cand: Vec<f64> = th.iter().zip(step.iter()).map(|(a, d)| a - scale * d).collect();
                let gc = self.residual(&cand)?;
                if gc.norm() < g.norm() {
                    th = cand;
                    g = gc;
                    accepted = true;
                    break;
                }
                scale /= 2.0;
            }
            if !accepted {
                return Ok(None);
            }
        }
        Ok((g.amax() < NEWTON_TOL).then(|| (th, g.amax())))
    }

    /// Whether `a - b` lies in `2π` times the projected lattice.
    fn same_class(&self, a: &[f64], b: &[f64]) -> bool {
        let d = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(p, q)| (p - q) / (2.0 * PI)));
        match self.period_basis.transpose().lu().solve(&d) {
            Some(c) => c.iter().all(|v| (v - v.round()).abs() < 1e-7),
            None => false,
        }
    }

    /// Solutions of `μ'(x, θ) = target` seeded from a `grid^m` lattice of `[0, 2π)^m`.
    pub fn solve(&self, grid: usize) -> Result<Vec<IntersectionPoint>> {
        let m = self.dim();
        let total = grid.pow(m as u32);
        let seeds: Vec<Vec<f64>> = (0..total)
            .map(|mut code| {
                (0..m)
                    .map(|_| {
                        let v = (code % grid) as f64 + 0.5;
                        code /= grid;
                        2.0 * PI * v / grid as f64
                    })
                    .collect()
            })
            .collect();
        let mut roots: Vec<(Vec<f64>, f64)> = Vec::new();
        for seed in &seeds {
            if let Some((th, res)) = self.newton(seed)? {
                let th: Vec<f64> = th.iter().map(|v| v.rem_euclid(2.0 * PI)).collect();
                if let Some(k) = roots.iter().position(|(q, _)| self.same_class(q, &th)) {
                    if th < roots[k].0 {
                        roots[k] = (th, res);
                    }
                } else {
                    roots.push((th, res));
                }
            }
        }
        roots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let tf = self.fiber_t();
        let mut points = Vec::with_capacity(roots.len());
        for (th, res) in roots {
            self.check_shared_invariance(&th)?;
            let det = self.poisson_matrix(&th)?.determinant();
            if det.abs() <= TAU_TRANSV {
                return Err(Error::NonGeneric(format!(
                    "tangential intersection at θ = {th:?} (|det| = {:.3e})",
                    det.abs()
                )));
            }
            let implicit_frame = (0..m).map(|j| self.hamiltonian_field(j, &tf, &th)).collect::<Result<Vec<_>>>()?;
            let (t_full, theta_full) = self.full_point(&tf, &th);
            points.push(IntersectionPoint {
                theta: th,
                t_full,
                theta_full,
                poisson_det: det,
                margin: det.abs(),
                newton_residual: res,
                fiber_frame: (0..m).map(|i| self.fiber_field(i)).collect(),
                implicit_frame,
            });
        }
        Ok(points)
    }

    /// The reduction is valid only if the implicit curves Poisson-commute with the shared ones.
    fn check_shared_invariance(&self, thf: &[f64]) -> Result<()> {
        let (t, th) = self.full_point(&self.fiber_t(), thf);
        for j in 0..self.dim() {
            for &e in &self.shared {
                let d = derivative(
                    |s| {
                        let mut th2 = th.clone();
                        th2[e] = s;
                        word_observable(&self.chart, &self.words[j], &t, &th2)
                    },
                    th[e],
                )?;
                if d.abs() > 1e-8 {
                    return Err(Error::Unsupported(format!(
                        "curve {} of {} does not commute with shared curve {}",
                        self.other.edges[self.free[j]], self.other.preset, self.chart.edges[e]
                    )));
                }
            }
        }
        Ok(())
    }

    /// `V_x` of the reduced fiber torus.
    pub fn fiber_volume(&self) -> Result<f64> {
        self.reduced_volume(&self.x)
    }

    /// `V'_y` of the reduced implicit torus, by the same closed form in the other chart.
    pub fn implicit_volume(&self) -> Result<f64> {
        self.reduced_volume(&self.y)
    }

    fn reduced_volume(&self, v: &[f64]) -> Result<f64> {
        let mut out = self.projected_covolume();
        for &e in &self.free {
            let s = (PI * v[e]).sin();
            if s < 1e-8 {
                return Err(Error::OutsidePolytope(v.to_vec()));
            }
            out /= s;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IntersectionPoint {
    /// Reduced angle coordinates, in `[0, 2π)`.
    pub theta: Vec<f64>,
    pub t_full: Vec<f64>,
    /// Full angles; shared coordinates are set to 0.
    pub theta_full: Vec<f64>,
    pub poisson_det: f64,
    pub margin: f64,
    pub newton_residual: f64,
    /// `X_i` in reduced coordinates `(t..., θ...)`.
    pub fiber_frame: Vec<Vec<f64>>,
    /// `X'_j` in reduced coordinates.
    pub implicit_frame: Vec<Vec<f64>>,
}

/// Transverse points of `Λ_x ∩ Λ'_y`, modulo the lattice and the shared torus.
pub fn intersect_lagrangians(fiber: &LagrangianLevelSet, implicit: &LagrangianLevelSet) -> Result<Vec<IntersectionPoint>> {
    intersect_lagrangians_with_grid(fiber, implicit, 0)
}

/// As [`intersect_lagrangians`] with `grid` seeds per axis (0 selects the default).
pub fn intersect_lagrangians_with_grid(
    fiber: &LagrangianLevelSet,
    implicit: &LagrangianLevelSet,
    grid: usize,
) -> Result<Vec<IntersectionPoint>> {
    match ReducedPair::new(fiber, implicit)? {
        None => Ok(Vec::new()),
        Some(red) => {
            let g = if grid > 0 { grid } else if red.dim() == 1 { 64 } else { 32 };
            red.solve(g.max(32))
        }
    }
}

/// `∮ Σ t_e dθ_e` along `path(s)`, `s ∈ [0, 1]`, smooth between consecutive `breaks`.
///
/// Stieltjes trapezoid sums with Richardson extrapolation, starting at 1024
/// samples per piece.
pub fn action_phase<F>(path: F, breaks: &[f64]) -> Result<f64>
where
    F: Fn(f64) -> (Vec<f64>, Vec<f64>),
{
    let mut knots = vec![0.0];
    knots.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < 1.0));
    knots.push(1.0);
    let piece = |a: f64, b: f64, n: usize| -> f64 {
        let mut sum = 0.0;
        let mut prev = path(a);
        for k in 1..=n {
            let cur = path(a + (b - a) * k as f64 / n as f64);
            for e in 0..cur.0.len() {
                sum += 0.5 * (prev.0[e] + cur.0[e]) * (cur.1[e] - prev.1[e]);
            }
            prev = cur;
        }
        sum
    };
    let mut total = 0.0;
    for w in knots.windows(2) {
        let mut n = 1024;
        let mut coarse = piece(w[0], w[1], n);
        loop {
            let fine = piece(w[0], w[1], 2 * n);
            let extrapolated = (4.0 * fine - coarse) / 3.0;
            if (fine - coarse).abs() < 1e-9 {
                total += extrapolated;
                break;
            }
            n *= 2;
            if n > 1 << 22 {
                return Err(Error::NonConvergent("action integral refinement".into()));
            }
            coarse = fine;
        }
    }
    Ok(total)
}

/// `det(dw(F))` for a frame `F` with rows `(t..., θ...)` and `w = λt + iθ`.
fn frame_det(frame: &DMatrix<f64>, lambda: f64) -> Complex64 {
    let m = frame.ncols();
    let z = DMatrix::from_fn(m, m, |e, j| Complex64::new(lambda * frame[(e, j)], frame[(m + e, j)]));
    z.determinant()
}

fn frame_condition(frame: &DMatrix<f64>, lambda: f64) -> f64 {
    let m = frame.ncols();
    let mut g = DMatrix::zeros(2 * m, 2 * m);
    for e in 0..m {
        g[(e, e)] = lambda;
        g[(m + e, m + e)] = 1.0 / lambda;
    }
    let gram = frame.transpose() * g * frame;
    let eig = gram.symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Winding number of `det(dw(F))²` along a closed loop of Lagrangian frames,
/// for the complex structure `w = λt + iθ` (`λ = ½` is the model).
pub fn maslov_index_with(frames: &[DMatrix<f64>], lambda: f64) -> Result<i64> {
    if frames.is_empty() {
        return Ok(0);
    }
    let mut phases = Vec::with_capacity(frames.len());
    for f in frames {
        let cond = frame_condition(f, lambda);
        if cond > FRAME_CONDITION {
            return Err(Error::FrameDegenerate(cond));
        }
        let d = frame_det(f, lambda);
        phases.push((d * d).arg());
    }
    let mut total = 0.0;
    for k in 0..phases.len() {
        let next = phases[(k + 1) % phases.len()];
        let step = (next - phases[k] + PI).rem_euclid(2.0 * PI) - PI;
        if step.abs() > PI / 2.0 {
            return Err(Error::NonConvergent(format!("frame loop undersampled (phase step {step:.3})")));
        }
        total += step;
    }
    let winding = total / (2.0 * PI);
    if (winding - winding.round()).abs() > 1e-6 {
        return Err(Error::NonConvergent(format!("non-integral winding {winding}")));
    }
    Ok(winding.round() as i64)
}

pub fn maslov_index(frames: &[DMatrix<f64>]) -> Result<i64> {
    maslov_index_with(frames, MODEL_LAMBDA)
}

/// Kähler vector space `R^{2n}` with `ω = Σ dt∧dθ`, complex coordinates
/// `w = λt + iθ`, transverse Lagrangians `Γ1`, `Γ2` given by column bases and
/// `(n,0)`-forms `α = a Ω`, `β = b Ω`, `Ω = dw_1∧...∧dw_n`.
#[derive(Clone, Debug)]
pub struct HalfFormSpace {
    pub lambda: f64,
    pub gamma1: DMatrix<f64>,
    pub gamma2: DMatrix<f64>,
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl HalfFormSpace {
    fn j_matrix(&self, m: usize) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(2 * m, 2 * m);
        for e in 0..m {
            j[(m + e, e)] = self.lambda;
            j[(e, m + e)] = -1.0 / self.lambda;
        }
        j
    }

    /// `ω^n/n!` evaluated on the columns of `Γ1` followed by those of `Γ2`.
    fn liouville(&self, g1: &DMatrix<f64>, g2: &DMatrix<f64>) -> f64 {
        let m = g1.ncols();
        // Reorder rows from (t..., θ...) to (t1, θ1, t2, θ2, ...).
        let mut mat = DMatrix::zeros(2 * m, 2 * m);
        for e in 0..m {
            for j in 0..m {
                mat[(2 * e, j)] = g1[(e, j)];
                mat[(2 * e + 1, j)] = g1[(m + e, j)];
                mat[(2 * e, m + j)] = g2[(e, j)];
                mat[(2 * e + 1, m + j)] = g2[(m + e, j)];
            }
        }
        mat.determinant()
    }

    fn canonical_with(&self, g2: &DMatrix<f64>) -> Result<Complex64> {
        let m = self.gamma1.ncols();
        let vol = self.liouville(&self.gamma1, g2);
        let scale = self.gamma1.norm().powi(m as i32) * g2.norm().powi(m as i32);
        if vol.abs() <= 1e-12 * scale {
            return Err(Error::NonTransverse);
        }
        let n = m as i32;
        // (-1)^n i^{n(2-n)}: the constant making the Γ2 = JΓ1, β = α case positive.
        let c = Complex64::new(-1.0, 0.0).powi(n) * Complex64::i().powi(n * (2 - n));
        Ok(c * self.alpha * self.beta * frame_det(&self.gamma1, self.lambda) * frame_det(g2, self.lambda) / vol)
    }
}

/// `(α, β)_{Γ1,Γ2}` on `n`-forms: restrict to `Γ_i`, wedge, divide by `ω^n/n!`.
pub fn canonical_pairing(space: &HalfFormSpace) -> Result<Complex64> {
    space.canonical_with(&space.gamma2)
}

/// Half-form pairing: the square root of [`canonical_pairing`], continued from
/// `JΓ1` (principal branch) along the segment of graphs over `JΓ1` ending at `Γ2`.
pub fn halfform_pairing(space: &HalfFormSpace) -> Result<Complex64> {
    let m = space.gamma1.ncols();
    let e1 = &space.gamma1;
    let je = space.j_matrix(m) * e1;
    let mut basis = DMatrix::zeros(2 * m, 2 * m);
    basis.view_mut((0, 0), (2 * m, m)).copy_from(&je);
    basis.view_mut((0, m), (2 * m, m)).copy_from(e1);
    let coeff = basis.lu().solve(&space.gamma2).ok_or(Error::NonTransverse)?;
    let p = coeff.rows(0, m).into_owned();
    let q = coeff.rows(m, m).into_owned();
    let pinv = p.try_inverse().ok_or(Error::NonTransverse)?;
    let s_map = q * pinv;
    let at = |s: f64| -> Result<Complex64> { space.canonical_with(&(&je + e1 * &s_map * s)) };
    let mut steps = 64;
    loop {
        let mut root = at(0.0)?.sqrt();
        let mut prev = at(0.0)?;
        let mut ok = true;
        for k in 1..=steps {
            let cur = at(k as f64 / steps as f64)?;
            let ratio = cur / prev;
            if ratio.arg().abs() > PI / 4.0 {
                ok = false;
                break;
            }
            root *= ratio.sqrt();
            prev = cur;
        }
        if ok {
            // Re-anchor the modulus on the exact value.
            let exact = at(1.0)?.sqrt();
            return Ok(if (exact - root).norm() <= (exact + root).norm() { exact } else { -exact });
        }
        steps *= 2;
        if steps > 1 << 16 {
            return Err(Error::NonConvergent("half-form branch tracking".into()));
        }
    }
}

/// Orbit of the Hamiltonian flow of `μ'` in reduced dimension one.
#[derive(Clone, Debug)]
struct FlowArc {
    eta: f64,
    end: (f64, f64),
    states: Vec<(f64, f64)>,
}

impl ReducedPair {
    fn field1(&self, t: f64, th: f64) -> Result<(f64, f64)> {
        let v = self.hamiltonian_field(0, &[t], &[th])?;
        Ok((v[0], v[1]))
    }

    fn rk4(&self, y: [f64; 3], h: f64) -> Result<[f64; 3]> {
        let f = |y: [f64; 3]| -> Result<[f64; 3]> {
            let (a, b) = self.field1(y[0], y[1])?;
            Ok([a, b, y[0] * b])
        };
        let add = |y: [f64; 3], k: [f64; 3], s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]];
        let k1 = f(y)?;
        let k2 = f(add(y, k1, h / 2.0))?;
        let k3 = f(add(y, k2, h / 2.0))?;
        let k4 = f(add(y, k3, h))?;
        Ok([
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            y[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        ])
    }

    /// Follows the flow (backwards if `sign < 0`) until the `crossings`-th
    /// crossing of the fiber line `t = x`, with time step `h`.
    fn flow_once(&self, start: (f64, f64), sign: f64, h: f64, crossings: usize) -> Result<FlowArc> {
        let x = self.fiber_t()[0];
        let h = sign * h;
        let mut y = [start.0, start.1, 0.0];
        let mut states = vec![start];
        let mut seen = 0;
        let mut side = 0.0;
        for _ in 0..(1 << 22) {
            let next = self.rk4(y, h)?;
            let d_next = next[0] - x;
            if side == 0.0 {
                side = d_next.signum();
            } else if d_next.signum() != side && d_next != 0.0 {
                seen += 1;
                if seen == crossings {
                    // Partial step to the crossing by bisection on the step length.
                    let (mut lo, mut hi) = (0.0, 1.0);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let p = self.rk4(y, mid * h)?;
                        if (p[0] - x).signum() == side {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let end = self.rk4(y, 0.5 * (lo + hi) * h)?;
                    states.push((end[0], end[1]));
                    return Ok(FlowArc { eta: end[2], end: (end[0], end[1]), states });
                }
                side = d_next.signum();
            }
            y = next;
            states.push((y[0], y[1]));
        }
        Err(Error::NonConvergent("flow did not return to the fiber".into()))
    }

    /// [`Self::flow_once`] with step halving until the Richardson-extrapolated
    /// `η` and endpoint are stable to 1e-12.
    fn flow_arc(&self, start: (f64, f64), sign: f64, crossings: usize) -> Result<FlowArc> {
        let (a, b) = self.field1(start.0, start.1)?;
        let speed = a.hypot(b);
        let mut h = 0.02 / speed;
        let extrapolate = |fine: &FlowArc, coarse: &FlowArc| {
            ((16.0 * fine.eta - coarse.eta) / 15.0, (16.0 * fine.end.1 - coarse.end.1) / 15.0)
        };
        let mut coarse = self.flow_once(start, sign, h, crossings)?;
        let mut prev: Option<(f64, f64)> = None;
        for _ in 0..12 {
            h /= 2.0;
            let fine = self.flow_once(start, sign, h, crossings)?;
            let (eta, theta) = extrapolate(&fine, &coarse);
            if let Some((p_eta, p_theta)) = prev {
                if (eta - p_eta).abs().max((theta - p_theta).abs()) < 1e-12 {
                    return Ok(FlowArc { eta, end: (fine.end.0, theta), states: fine.states });
                }
            }
            prev = Some((eta, theta));
            coarse = fine;
        }
        Err(Error::NonConvergent("flow integration refinement".into()))
    }

    fn affine_frames(&self, fiber_basis: &DMatrix<f64>, target: &DMatrix<f64>, forward: bool) -> Result<Vec<DMatrix<f64>>> {
        // target = J E P + E Q, frames J E + s E Q P^{-1}.
        let m = self.dim();
        let mut jm = DMatrix::zeros(2 * m, 2 * m);
        for e in 0..m {
            jm[(m + e, e)] = MODEL_LAMBDA;
            jm[(e, m + e)] = -1.0 / MODEL_LAMBDA;
        }
        let je = &jm * fiber_basis;
        let mut basis = DMatrix::zeros(2 * m, 2 * m);
        basis.view_mut((0, 0), (2 * m, m)).copy_from(&je);
        basis.view_mut((0, m), (2 * m, m)).copy_from(fiber_basis);
        let coeff = basis.lu().solve(target).ok_or(Error::NonTransverse)?;
        let pinv = coeff.rows(0, m).into_owned().try_inverse().ok_or(Error::NonTransverse)?;
        let s_map = fiber_basis * (coeff.rows(m, m).into_owned() * pinv);
        let mut steps = 64;
        loop {
            let frames: Vec<DMatrix<f64>> = (0..=steps)
                .map(|k| {
                    let s = k as f64 / steps as f64;
                    let s = if forward { s } else { 1.0 - s };
                    &je + &s_map * s
                })
                .collect();
            let phases: Vec<f64> = frames.iter().map(|f| frame_det(f, MODEL_LAMBDA).powi(2).arg()).collect();
            let max_step = phases
                .windows(2)
                .map(|w| ((w[1] - w[0] + PI).rem_euclid(2.0 * PI) - PI).abs())
                .fold(0.0, f64::max);
            if max_step < PI / 8.0 || steps >= 1 << 16 {
                return Ok(frames);
            }
            steps *= 2;
        }
    }

    /// `η` and `m` for the loop `z0 → z` along `Λ_x` (turning `turns` extra
    /// times around the fiber circle), back along `Λ'_y` flowing with `sign`.
    fn connect(&self, z0: &IntersectionPoint, z: &IntersectionPoint, sign: f64, turns: i64) -> Result<LoopData> {
        if self.dim() != 1 {
            return Err(Error::Unsupported(format!(
                "connecting paths in reduced dimension {} (only 1 is implemented)",
                self.dim()
            )));
        }
        let x = self.fiber_t()[0];
        let raw = z.theta[0] - z0.theta[0];
        let delta = (raw + PI).rem_euclid(2.0 * PI) - PI + 2.0 * PI * turns as f64;
        let eta_fiber = x * delta;
        let arc = self.flow_arc((x, z.theta[0]), sign, 1)?;
        let mismatch = ((arc.end.1 - z0.theta[0] + PI).rem_euclid(2.0 * PI) - PI).abs();
        if mismatch > 1e-7 || (arc.end.0 - x).abs() > 1e-9 {
            return Err(Error::NonConvergent(format!("flow from z reached θ = {} instead of z0", arc.end.1)));
        }
        let winding_theta = delta + (arc.end.1 - z.theta[0]);
        let laps = (winding_theta / (2.0 * PI)).round() as i64;
        let eta = eta_fiber + arc.eta;

        let fiber_basis = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let col = |v: (f64, f64)| DMatrix::from_column_slice(2, 1, &[v.0, v.1]);
        let mut frames = Vec::new();
        let x0 = col(self.field1(x, z0.theta[0])?);
        let xz = col(self.field1(x, z.theta[0])?);
        frames.extend(self.affine_frames(&fiber_basis, &x0, false)?);
        frames.extend(self.affine_frames(&fiber_basis, &xz, true)?);
        let stride = (arc.states.len() / 4096).max(1);
        for (k, &(t, th)) in arc.states.iter().enumerate() {
            if k % stride == 0 || k + 1 == arc.states.len() {
                frames.push(col(self.field1(t, th)?));
            }
        }
        let maslov = maslov_index(&frames)?;
        let perturbed = maslov_index_with(&frames, 0.8)?;
        Ok(LoopData { eta, maslov, maslov_perturbed_j: perturbed, theta_laps: laps })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LoopData {
    pub eta: f64,
    pub maslov: i64,
    /// Index recomputed with the complex structure `w = 0.8 t + iθ`.
    pub maslov_perturbed_j: i64,
    /// Winding of the loop around the fiber circle; 0 for contractible loops.
    pub theta_laps: i64,
}

impl LoopData {
    pub fn phase(&self, r: u32) -> f64 {
        r as f64 * self.eta - 0.5 * PI * self.maslov as f64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AlternativePath {
    pub description: String,
    pub eta: f64,
    pub maslov: i64,
    pub theta_laps: i64,
    /// `|exp(iΦ_alt) - exp(iΦ)|`.
    pub phase_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointContribution {
    pub theta: Vec<f64>,
    pub eta: f64,
    pub maslov: i64,
    pub det: f64,
    pub amplitude: f64,
    /// `rη - (π/2)m` relative to the base point (`m` counts windings of `det(dw)²`, whose orientation is opposite to the index in the phase).
    pub phase: f64,
    /// `m` recomputed with the complex structure `w = 0.8t + iθ`.
    pub maslov_perturbed_j: i64,
    pub contractible: bool,
    pub alternatives: Vec<AlternativePath>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairingPrediction {
    pub r: u32,
    pub reduced_dimension: usize,
    pub fiber_volume: f64,
    pub implicit_volume: f64,
    pub points: Vec<PointContribution>,
    pub total_modulus: f64,
    pub relative_phases: Vec<f64>,
}

impl PairingPrediction {
    pub fn max_phase_defect(&self) -> f64 {
        self.points.iter().flat_map(|p| p.alternatives.iter().map(|a| a.phase_defect)).fold(0.0, f64::max)
    }
}

/// Leading-order prediction of `|⟨φ_α, ψ_β⟩|` from `Λ_{α/r} ∩ Λ'_{β/r}`.
///
/// `fiber` supplies the chart (including its angle offsets); the curves of
/// `implicit` are evaluated in that chart.
pub fn predict_pairing(fiber: &SurfaceModel, alpha: &[u32], implicit: &SurfaceModel, beta: &[u32], r: u32) -> Result<PairingPrediction> {
    let rf = r as f64;
    let x: Vec<f64> = alpha.iter().map(|&a| a as f64 / rf).collect();
    let y: Vec<f64> = beta.iter().map(|&b| b as f64 / rf).collect();
    let l1 = LagrangianLevelSet::fiber(fiber, &x);
    let l2 = LagrangianLevelSet::implicit(implicit, &y);
    let Some(red) = ReducedPair::new(&l1, &l2)? else {
        return Ok(PairingPrediction {
            r,
            reduced_dimension: 0,
            fiber_volume: lagrangian_volume(fiber, &x)?,
            implicit_volume: lagrangian_volume(implicit, &y)?,
            points: Vec::new(),
            total_modulus: 0.0,
            relative_phases: Vec::new(),
        });
    };
    let g = if red.dim() == 1 { 64 } else { 32 };
    let points = red.solve(g)?;
    let (vx, vy) = (red.fiber_volume()?, red.implicit_volume()?);
    let mut contributions = Vec::with_capacity(points.len());
    for (k, z) in points.iter().enumerate() {
        let amplitude = 1.0 / ((vx * vy).sqrt() * z.poisson_det.abs().sqrt());
        let (eta, maslov, maslov_perturbed_j, phase, laps, alternatives) = if k == 0 {
            (0.0, 0, 0, 0.0, 0, Vec::new())
        } else {
            let main = red.connect(&points[0], z, 1.0, 0)?;
            let phase = main.phase(r);
            let mut alternatives = Vec::new();
            for (desc, sign, turns) in [("other arc of the implicit level set", -1.0, 0), ("extra turn around the fiber", 1.0, 1)] {
                let alt = red.connect(&points[0], z, sign, turns)?;
                alternatives.push(AlternativePath {
                    description: desc.to_string(),
                    eta: alt.eta,
                    maslov: alt.maslov,
                    theta_laps: alt.theta_laps,
                    phase_defect: (Complex64::from_polar(1.0, alt.phase(r)) - Complex64::from_polar(1.0, phase)).norm(),
                });
            }
            (main.eta, main.maslov, main.maslov_perturbed_j, phase, main.theta_laps, alternatives)
        };
        contributions.push(PointContribution {
            theta: z.theta.clone(),
            eta,
            maslov,
            det: z.poisson_det,
            amplitude,
            phase,
            maslov_perturbed_j,
            contractible: laps == 0,
            alternatives,
        });
    }
    let terms: Vec<(f64, f64)> = contributions.iter().map(|c| (c.amplitude, c.phase)).collect();
    let relative_phases = contributions.iter().map(|c| c.phase.rem_euclid(2.0 * PI)).collect();
    Ok(PairingPrediction {
        r,
        reduced_dimension: red.dim(),
        fiber_volume: vx,
        implicit_volume: vy,
        points: contributions,
        total_modulus: total_modulus(r, red.dim(), &terms),
        relative_phases,
    })
}

/// `(r/2π)^{-n/2} |Σ a_z e^{iΦ_z}|` for `(a_z, Φ_z)` pairs.
pub fn total_modulus(r: u32, n: usize, terms: &[(f64, f64)]) -> f64 {
    let sum: Complex64 = terms.iter().map(|&(a, phase)| Complex64::from_polar(a, phase)).sum();
    (r as f64 / (2.0 * PI)).powf(-(n as f64) / 2.0) * sum.norm()
}

#[derive(Clone, Debug, Serialize)]
pub struct BohrSommerfeldRow {
    pub generator: String,
    /// `λ` with the loop `θ → θ + 2πsλ`.
    pub vector: Vec<f64>,
    /// `r ∮ t·dθ` at `t = α/r`.
    pub action: f64,
    /// Holonomy phase of the half-form bundle, `2π (1,...,1)·λ`.
    pub halfform_phase: f64,
    /// Distance of `action - halfform_phase` to `2πZ`.
    pub defect: f64,
}

/// Bohr–Sommerfeld conditions of the fiber `t = α/r` around the generators `u_e`, `u_v` of `Λ`.
pub fn bohr_sommerfeld_check(surface: &SurfaceModel, alpha: &[u32], r: u32) -> Result<Vec<BohrSommerfeldRow>> {
    let n = surface.n();
    let t: Vec<f64> = alpha.iter().map(|&a| a as f64 / r as f64).collect();
    let mut gens: Vec<(String, Vec<f64>)> = (0..n)
        .map(|e| {
            let mut v = vec![0.0; n];
            v[e] = 1.0;
            (format!("u_{}", surface.edges[e]), v)
        })
        .collect();
    for (i, vertex) in surface.vertices.iter().enumerate() {
        let mut v = vec![0.0; n];
        for &e in vertex {
            v[e] += 0.5;
        }
        gens.push((format!("u_v{}", i + 1), v));
    }
    gens.into_iter()
        .map(|(name, v)| {
            let tt = t.clone();
            let vv = v.clone();
            let eta = action_phase(move |s| (tt.clone(), vv.iter().map(|c| 2.0 * PI * s * c).collect()), &[])?;
            let action = r as f64 * eta;
            let halfform_phase = 2.0 * PI * v.iter().sum::<f64>();
            let diff = action - halfform_phase;
            let defect = (diff - 2.0 * PI * (diff / (2.0 * PI)).round()).abs();
            Ok(BohrSommerfeldRow { generator: name, vector: v, action, halfform_phase, defect })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct QuasimodeSample {
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    /// `|Φψ|_h (2π/r)^{n/4} sqrt(V' |det dw(X')|)`.
    pub normalized_amplitude: f64,
}

/// Samples `Φ_r ψ_β` along `Λ'_{β/r}` through its intersection with the fiber
/// at `x` and normalizes by the leading-order quasimode amplitude.
pub fn quasimode_check(
    fiber: &SurfaceModel,
    implicit: &SurfaceModel,
    beta: &[u32],
    x: &[f64],
    r: u32,
    samples: usize,
) -> Result<Vec<QuasimodeSample>> {
    let rf = r as f64;
    let n = fiber.n();
    let y: Vec<f64> = beta.iter().map(|&b| b as f64 / rf).collect();
    let mut x_adj = x.to_vec();
    let rel = pair_relation(fiber, implicit)?;
    for &e in &rel.shared {
        x_adj[e] = y[e];
    }
    let red = ReducedPair::new(&LagrangianLevelSet::fiber(fiber, &x_adj), &LagrangianLevelSet::implicit(implicit, &y))?
        .ok_or_else(|| Error::Config("shared targets differ".into()))?;
    if red.dim() != 1 {
        return Err(Error::Unsupported("quasimode sampling in reduced dimension other than 1".into()));
    }
    let points = red.solve(64)?;
    let start = points.first().ok_or_else(|| Error::Config("the fiber misses the implicit level set".into()))?;
    let orbit = red.flow_arc((red.fiber_t()[0], start.theta[0]), 1.0, 2)?;
    let (basis, coeffs) = psi_column(fiber, implicit, beta, r)?;
    let model = KahlerModel::new(fiber);
    let kappa = model.kappa(rf);
    let v_prime = lagrangian_volume(implicit, &y)?;
    // All curves of the implicit decomposition in the fiber chart.
    let words: Vec<Word> = implicit.decomposition_curves.clone();
    let mut out = Vec::with_capacity(samples);
    for k in 0..samples {
        let idx = (k * (orbit.states.len() - 1)) / samples.max(1);
        let (tf, thf) = orbit.states[idx];
        let (t, th) = red.full_point(&[tf], &[thf]);
        let mut psi = Complex64::new(0.0, 0.0);
        for (alpha, c) in basis.colorings.iter().zip(&coeffs) {
            let mut log = 0.0;
            let mut phase = 0.0;
            for e in 0..n {
                log -= rf * (t[e] - alpha[e] as f64 / rf).powi(2) / 4.0;
                phase += alpha[e] as f64 * th[e];
            }
            psi += c * Complex64::from_polar(log.exp(), phase);
        }
        let psi_h = psi.norm() / kappa.sqrt();
        let mut z = DMatrix::<Complex64>::zeros(n, n);
        for (j, w) in words.iter().enumerate() {
            for e in 0..n {
                let d_t = derivative(
                    |s| {
                        let mut tt = t.clone();
                        tt[e] = s;
                        word_observable(fiber, w, &tt, &th)
                    },
                    t[e],
                )?;
                let d_th = derivative(
                    |s| {
                        let mut th2 = th.clone();
                        th2[e] = s;
                        word_observable(fiber, w, &t, &th2)
                    },
                    th[e],
                )?;
                // X' = (-∂θ g, ∂t g); dw_e(X') = λ X'^t_e + i X'^θ_e.
                z[(e, j)] = Complex64::new(-MODEL_LAMBDA * d_th, d_t);
            }
        }
        let det = z.determinant().norm();
        out.push(QuasimodeSample {
            t,
            theta: th,
            normalized_amplitude: psi_h * (2.0 * PI / rf).powf(n as f64 / 4.0) * (v_prime * det).sqrt(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantization::calibrate_angle_offsets;
    use crate::surfaces::build_preset_surface;

    fn pair() -> (SurfaceModel, SurfaceModel) {
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        let s = build_preset_surface(2, "smove-dumbbell2").unwrap();
        (calibrate_angle_offsets(&d, 24).unwrap(), s)
    }

    #[test]
    fn volumes() {
        let th = build_preset_surface(2, "theta2").unwrap();
        assert!((lagrangian_volume(&th, &[0.5, 0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(lagrangian_volume(&th, &[1e-10, 0.5, 0.5]).is_err());
        let x = [0.3, 0.4, 0.45];
        let v = lagrangian_volume(&th, &x).unwrap();
        assert!((v * x.iter().map(|a| (PI * a).sin()).product::<f64>() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn implicit_volume_is_the_flow_period() {
        let (d, s) = pair();
        let (x, y) = ([0.41, 0.3, 0.45], [0.37, 0.3, 0.45]);
        let red = ReducedPair::new(&LagrangianLevelSet::fiber(&d, &x), &LagrangianLevelSet::implicit(&s, &y)).unwrap().unwrap();
        let pts = red.solve(64).unwrap();
        assert_eq!(pts.len(), 2);
        // Flow period of μ' times 2π sin(πy) equals the 2π angle period.
        let start = (x[0], pts[0].theta[0]);
        let mut h = 1e-3;
        let mut prev = f64::NAN;
        for _ in 0..3 {
            let arc = red.flow_once(start, 1.0, h, 2).unwrap();
            let period = h * (arc.states.len() - 2) as f64;
            prev = period;
            h /= 2.0;
        }
        let expected = red.implicit_volume().unwrap();
        assert!((prev - expected).abs() < 1e-3 * expected, "{prev} vs {expected}");
    }

    #[test]
    fn intersections_are_even_stable_and_converged() {
        let (d, s) = pair();
        let (x, y) = ([0.41, 0.3, 0.45], [0.37, 0.3, 0.45]);
        let l1 = LagrangianLevelSet::fiber(&d, &x);
        let l2 = LagrangianLevelSet::implicit(&s, &y);
        let coarse = intersect_lagrangians_with_grid(&l1, &l2, 32).unwrap();
        let fine = intersect_lagrangians_with_grid(&l1, &l2, 64).unwrap();
        assert_eq!(coarse.len() % 2, 0);
        assert_eq!(coarse.len(), fine.len());
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a.theta[0] - b.theta[0]).abs() < 1e-10);
            assert!(a.newton_residual < 1e-10 && a.margin > TAU_TRANSV);
        }
        // ±θ symmetry about the calibrated offset.
        let off = d.angle_offsets[0];
        let s0 = (coarse[0].theta[0] + off).rem_euclid(2.0 * PI);
        let s1 = (coarse[1].theta[0] + off).rem_euclid(2.0 * PI);
        assert!(((s0 + s1).rem_euclid(2.0 * PI)).min(2.0 * PI - (s0 + s1).rem_euclid(2.0 * PI)) < 1e-9);
        // Trace value outside the range of the curve function on the fiber.
        let narrow = LagrangianLevelSet::fiber(&d, &[0.2, 0.3, 0.45]);
        let unattainable = LagrangianLevelSet::implicit(&s, &[0.22, 0.3, 0.45]);
        assert!(intersect_lagrangians(&narrow, &unattainable).unwrap().is_empty());
        // Shared targets differ: disjoint.
        let off_shared = LagrangianLevelSet::implicit(&s, &[0.37, 0.32, 0.45]);
        assert!(intersect_lagrangians(&l1, &off_shared).unwrap().is_empty());
        // Identical decompositions are rejected.
        let same = LagrangianLevelSet::implicit(&d, &x);
        assert!(matches!(intersect_lagrangians(&l1, &same), Err(Error::NonGeneric(_))));
    }

    #[test]
    fn action_phase_examples() {
        let loop_e = action_phase(|s| (vec![0.3, 0.2], vec![2.0 * PI * s, 0.0]), &[]).unwrap();
        assert!((loop_e - 2.0 * PI * 0.3).abs() < 1e-12);
        // Small circle: ∮ t dθ = -(enclosed area) for counter-clockwise (t, θ) orientation.
        let (c, rad) = (0.4, 0.01);
        let circle = action_phase(
            |s| {
                let a = 2.0 * PI * s;
                (vec![c + rad * a.cos()], vec![1.0 + rad * a.sin()])
            },
            &[],
        )
        .unwrap();
        // Shoelace oracle on a fine polygon.
        let m = 20000;
        let pts: Vec<(f64, f64)> =
            (0..m).map(|k| (c + rad * (2.0 * PI * k as f64 / m as f64).cos(), 1.0 + rad * (2.0 * PI * k as f64 / m as f64).sin())).collect();
        let shoelace: f64 = (0..m).map(|k| {
            let (a, b) = (pts[k], pts[(k + 1) % m]);
            a.0 * b.1 - b.0 * a.1
        }).sum::<f64>() / 2.0;
        assert!((circle - shoelace).abs() < 1e-8, "{circle} vs {shoelace}");
        // Additivity and reversal.
        let f = |s: f64| (vec![0.2 + s * s], vec![3.0 * s]);
        let whole = action_phase(f, &[]).unwrap();
        let split = action_phase(f, &[0.3]).unwrap();
        let rev = action_phase(|s| f(1.0 - s), &[]).unwrap();
        assert!((whole - split).abs() < 1e-10 && (whole + rev).abs() < 1e-10);
    }

    #[test]
    fn maslov_examples() {
        let rot = |phi: f64| DMatrix::from_column_slice(2, 1, &[phi.cos(), phi.sin()]);
        let constant: Vec<DMatrix<f64>> = (0..10).map(|_| rot(0.3)).collect();
        assert_eq!(maslov_index(&constant).unwrap(), 0);
        let half: Vec<DMatrix<f64>> = (0..200).map(|k| rot(PI * k as f64 / 200.0)).collect();
        // Direct winding of (λcos φ + i sin φ)².
        let oracle = {
            let mut tot = 0.0;
            for k in 0..200 {
                let a = |p: f64| Complex64::new(0.5 * p.cos(), p.sin()).powi(2).arg();
                let p0 = PI * k as f64 / 200.0;
                let p1 = PI * (k + 1) as f64 / 200.0;
                tot += (a(p1) - a(p0) + PI).rem_euclid(2.0 * PI) - PI;
            }
            (tot / (2.0 * PI)).round() as i64
        };
        let m = maslov_index(&half).unwrap();
        assert_eq!(m, oracle);
        assert_eq!(m.abs(), 1);
        let dense: Vec<DMatrix<f64>> = (0..400).map(|k| rot(PI * k as f64 / 400.0)).collect();
        assert_eq!(maslov_index(&dense).unwrap(), m);
        assert_eq!(maslov_index_with(&dense, 1.0).unwrap(), m);
        let degenerate = vec![DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 1e-9, 0.0, 0.0])];
        assert!(matches!(maslov_index(&degenerate), Err(Error::FrameDegenerate(_))));
    }

    fn space(g1: &[f64], g2: &[f64], n: usize) -> HalfFormSpace {
        HalfFormSpace {
            lambda: MODEL_LAMBDA,
            gamma1: DMatrix::from_column_slice(2 * n, n, g1),
            gamma2: DMatrix::from_column_slice(2 * n, n, g2),
            alpha: Complex64::new(1.0, 0.0),
            beta: Complex64::new(1.0, 0.0),
        }
    }

    #[test]
    fn halfform_positive_on_j_gamma() {
        for n in 1..=3 {
            let g1 = DMatrix::<f64>::from_fn(2 * n, n, |i, j| if i == j { 1.0 } else if i == n + j { 0.3 } else { 0.0 });
            let sp0 = HalfFormSpace {
                lambda: MODEL_LAMBDA,
                gamma1: g1.clone(),
                gamma2: g1.clone(),
                alpha: Complex64::new(1.0, 0.0),
                beta: Complex64::new(1.0, 0.0),
            };
            let jg = sp0.j_matrix(n) * &g1;
            // α restricted to Γ1 real: α = 1/Ω(E1).
            let a = frame_det(&g1, MODEL_LAMBDA).inv();
            let sp = HalfFormSpace { gamma2: jg, alpha: a, beta: a, ..sp0 };
            let v = halfform_pairing(&sp).unwrap();
            assert!(v.re > 0.0 && v.im.abs() < 1e-12 * v.re, "n={n}: {v}");
        }
    }

    #[test]
    fn halfform_one_dimensional_oracle() {
        for psi in [0.2, 1.0, PI / 2.0, 2.5, 3.0] {
            let sp = space(&[1.0, 0.0], &[psi.cos(), psi.sin()], 1);
            let v = halfform_pairing(&sp).unwrap();
            // Direct exterior algebra: restrictions α(E1) = Ω(E1), β(E2) = Ω(E2), wedge / ω(E1, E2).
            let om1 = Complex64::new(0.5, 0.0);
            let om2 = Complex64::new(0.5 * psi.cos(), psi.sin());
            let wedge = 1.0 * psi.sin() - 0.0 * psi.cos();
            let canonical = -Complex64::i() * om1 * om2 / wedge;
            assert!((canonical_pairing(&sp).unwrap() - canonical).norm() < 1e-14);
            // Re(canonical) = 1/4 > 0 on (0, π), so the principal root is the continuous one.
            assert!((v - canonical.sqrt()).norm() < 1e-12, "{psi}: {v}");
            let swapped = HalfFormSpace { gamma1: sp.gamma2.clone(), gamma2: sp.gamma1.clone(), ..sp.clone() };
            assert!((canonical_pairing(&swapped).unwrap() + canonical).norm() < 1e-14);
        }
        assert!(matches!(canonical_pairing(&space(&[1.0, 0.0], &[2.0, 0.0], 1)), Err(Error::NonTransverse)));
    }

    #[test]
    fn bohr_sommerfeld_for_admissible_colorings() {
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        let rows = bohr_sommerfeld_check(&d, &[17, 13, 19], 40).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|row| row.defect < 1e-9), "{rows:?}");
    }

    #[test]
    fn prediction_phases_are_path_independent() {
        let (d, s) = pair();
        let r = 50;
        let alpha = [21, 15, 23];
        let beta = [19, 15, 23];
        let pred = predict_pairing(&d, &alpha, &s, &beta, r).unwrap();
        assert_eq!(pred.points.len(), 2);
        assert!(pred.max_phase_defect() < 1e-8, "{pred:?}");
        let p = &pred.points[1];
        assert!(p.contractible);
        assert_eq!(p.maslov, p.maslov_perturbed_j);
        assert!(p.alternatives.iter().any(|a| a.theta_laps != 0));
        let bound = pred.points.iter().map(|c| c.amplitude).sum::<f64>() * (r as f64 / (2.0 * PI)).powf(-0.5);
        assert!(pred.total_modulus <= bound + 1e-15);
        for c in &pred.points {
            let expected = 1.0 / (pred.fiber_volume * pred.implicit_volume * c.det.abs()).sqrt();
            assert!((c.amplitude - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn total_modulus_examples() {
        let (r, a) = (100, 0.37);
        let single = total_modulus(r, 1, &[(a, 1.3)]);
        assert!((single - (r as f64 / (2.0 * PI)).powf(-0.5) * a).abs() < 1e-15);
        assert!(total_modulus(r, 1, &[(a, 0.4), (a, 0.4 + PI)]) < 1e-15);
        let three = total_modulus(r, 3, &[(a, 0.0)]);
        assert!((three - (r as f64 / (2.0 * PI)).powf(-1.5) * a).abs() < 1e-15);
    }
}
