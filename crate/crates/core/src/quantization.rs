//! The Kähler model `M = R^E x T` with weight `φ(t) = |t|²/2` and complex
//! coordinates `w_e = t_e/2 + iθ_e`: monomial sections, the Bergman kernel,
//! Toeplitz matrix elements and symbols of curve operators.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moduli::trace_function;
use crate::recoupling::{
    band_offsets, curve_coefficient, curve_operator, curve_rule, BandedOperator, RecouplingContext,
};
use crate::surfaces::{enumerate_admissible, lattice_data, ColoringSet, Lattice, SurfaceModel};

/// Boundary distance defining the compact set `K` of interior points.
pub const K_MARGIN: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct KahlerModel {
    pub surface: SurfaceModel,
    pub n: usize,
    pub lattice: Lattice,
}

impl KahlerModel {
    pub fn new(surface: &SurfaceModel) -> Self {
        KahlerModel { surface: surface.clone(), n: surface.n(), lattice: lattice_data(surface) }
    }

    pub fn torus_volume(&self) -> f64 {
        self.lattice.torus_volume
    }

    /// `κ(r) = Vol(T) (2π/r)^{n/2}`, the squared norm of `z^α` up to `e^{|α|²/2r}`.
    pub fn kappa(&self, r: f64) -> f64 {
        self.torus_volume() * (2.0 * PI / r).powf(self.n as f64 / 2.0)
    }

    pub fn weight(t: &[f64]) -> f64 {
        0.5 * t.iter().map(|x| x * x).sum::<f64>()
    }

    /// `J` on `T_{(t,θ)}M` in the ordered basis `(∂t, ∂θ)`: `J∂t = ½∂θ`, `J∂θ = -2∂t`.
    pub fn complex_structure(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        for e in 0..n {
            j[(n + e, e)] = 0.5;
            j[(e, n + e)] = -2.0;
        }
        j
    }

    /// `ω = Σ dt_e ∧ dθ_e` as a matrix.
    pub fn symplectic_form(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut w = DMatrix::zeros(2 * n, 2 * n);
        for e in 0..n {
            w[(e, n + e)] = 1.0;
            w[(n + e, e)] = -1.0;
        }
        w
    }

    /// `g(X, Y) = ω(X, JY)`.
    pub fn metric(&self) -> DMatrix<f64> {
        self.symplectic_form() * self.complex_structure()
    }

    /// `e_α(t, θ)` in the trivialization where `|s|_h = |s| e^{-r|t|²/4}`.
    pub fn coherent_value(&self, alpha: &[u32], r: u32, t: &[f64], theta: &[f64]) -> Complex64 {
        let rf = r as f64;
        let mut log = 0.0;
        let mut phase = 0.0;
        for ((&a, &x), &th) in alpha.iter().zip(t).zip(theta) {
            let a = a as f64;
            log += x * a / 2.0 - a * a / (4.0 * rf);
            phase += a * th;
        }
        Complex64::from_polar((log - 0.5 * self.kappa(rf).ln()).exp(), phase)
    }

    /// `|e_α|_h(t) = κ^{-1/2} exp(-r|t - α/r|²/4)`.
    pub fn coherent_h_norm(&self, alpha: &[u32], r: u32, t: &[f64]) -> f64 {
        let rf = r as f64;
        let d2: f64 = alpha.iter().zip(t).map(|(&a, &x)| (x - a as f64 / rf).powi(2)).sum();
        (-rf * d2 / 4.0).exp() / self.kappa(rf).sqrt()
    }

    /// `h`-norm of a section value at `t`.
    pub fn h_norm(value: Complex64, r: u32, t: &[f64]) -> f64 {
        value.norm() * (-(r as f64) * Self::weight(t) / 2.0).exp()
    }

    /// `Σ_α e_α(p) conj(e_α(q))` in the `h`-unitary frame, over the given colorings.
    pub fn bergman_exact(&self, colorings: &ColoringSet, r: u32, p: (&[f64], &[f64]), q: (&[f64], &[f64])) -> Complex64 {
        let rf = r as f64;
        let (t, theta) = p;
        let (u, phi) = q;
        let sum = colorings
            .colorings
            .par_iter()
            .map(|alpha| {
                let mut log = 0.0;
                let mut phase = 0.0;
                for e in 0..alpha.len() {
                    let a = alpha[e] as f64 / rf;
                    log -= rf * ((t[e] - a).powi(2) + (u[e] - a).powi(2)) / 4.0;
                    phase += alpha[e] as f64 * (theta[e] - phi[e]);
                }
                if log < -60.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::from_polar(log.exp(), phase)
                }
            })
            .reduce(|| Complex64::new(0.0, 0.0), |a, b| a + b);
        sum / self.kappa(rf)
    }

    /// Prefactor candidates for the diagonal value of the Bergman kernel.
    pub fn bergman_prefactors(&self, r: u32) -> BergmanPrefactors {
        let base = (r as f64 / (2.0 * PI)).powi(self.n as i32);
        let covol = self.lattice.covolume_f64();
        BergmanPrefactors {
            poisson: base,
            inverse_covolume_squared: base / (covol * covol),
            genus_power: base * 2f64.powi(6 - 4 * self.surface.genus as i32),
        }
    }

    /// `(r/2π)^n exp(-r|t-u|²/8 - r|θ-φ|²/2 + ir((t+u)/2)·(θ-φ))`.
    pub fn bergman_asymptotic(&self, r: u32, p: (&[f64], &[f64]), q: (&[f64], &[f64])) -> Complex64 {
        let rf = r as f64;
        let (t, theta) = p;
        let (u, phi) = q;
        let mut log = 0.0;
        let mut phase = 0.0;
        for e in 0..self.n {
            let d = theta[e] - phi[e];
            log -= rf * (t[e] - u[e]).powi(2) / 8.0 + rf * d * d / 2.0;
            phase += rf * 0.5 * (t[e] + u[e]) * d;
        }
        self.bergman_prefactors(r).poisson * Complex64::from_polar(log.exp(), phase)
    }

    fn check_compact(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: t.len() });
        }
        let distance = self.surface.boundary_distance(t);
        if distance < K_MARGIN {
            return Err(Error::OutsideCompact { distance, margin: K_MARGIN });
        }
        Ok(())
    }

    pub fn bergman_compare_with(
        &self,
        colorings: &ColoringSet,
        p: (&[f64], &[f64]),
        q: (&[f64], &[f64]),
    ) -> Result<BergmanEvaluation> {
        self.check_compact(p.0)?;
        self.check_compact(q.0)?;
        let r = colorings.level;
        let exact = self.bergman_exact(colorings, r, p, q);
        let asymptotic = self.bergman_asymptotic(r, p, q);
        let error = (exact - asymptotic).norm();
        Ok(BergmanEvaluation {
            r,
            exact,
            asymptotic,
            error,
            relative_error: error / asymptotic.norm(),
            prefactors: self.bergman_prefactors(r),
        })
    }

    pub fn bergman_compare(&self, r: u32, p: (&[f64], &[f64]), q: (&[f64], &[f64])) -> Result<BergmanEvaluation> {
        self.check_compact(p.0)?;
        self.check_compact(q.0)?;
        self.bergman_compare_with(&enumerate_admissible(&self.surface, r), p, q)
    }

    /// `∫_M f conj(g) e^{-r|t|²}`-type inner products for sections given in the
    /// `h`-unitary frame: Gauss–Hermite in `t` around `center` and the
    /// trapezoid rule on a fundamental cell of `2πΛ`.
    pub fn l2_inner_product<F, G>(&self, r: u32, center: &[f64], gh_nodes: usize, trap_nodes: usize, f: F, g: G) -> Complex64
    where
        F: Fn(&[f64], &[f64]) -> Complex64 + Sync,
        G: Fn(&[f64], &[f64]) -> Complex64 + Sync,
    {
        let n = self.n;
        let rf = r as f64;
        let (x, w) = &*gauss_hermite(gh_nodes);
        let scale = (2.0 / rf).sqrt();
        let basis = self.lattice.basis();
        let cell_volume = self.torus_volume();
        let t_points = tensor_points(gh_nodes, n);
        let th_points = tensor_points(trap_nodes, n);
        t_points
            .par_iter()
            .map(|idx| {
                let t: Vec<f64> = (0..n).map(|e| center[e] + scale * x[idx[e]]).collect();
                // The weight e^{-x²} is divided out because f, g carry their own Gaussian decay.
                let wt: f64 = (0..n).map(|e| w[idx[e]] * scale * x[idx[e]].powi(2).exp()).product();
                let mut acc = Complex64::new(0.0, 0.0);
                for jdx in &th_points {
                    let s: Vec<f64> = jdx.iter().map(|&j| j as f64 / trap_nodes as f64).collect();
                    let theta: Vec<f64> =
                        (0..n).map(|e| 2.0 * PI * (0..n).map(|i| s[i] * basis[i][e]).sum::<f64>()).collect();
                    acc += f(&t, &theta) * g(&t, &theta).conj();
                }
                acc * wt * cell_volume / th_points.len() as f64
            })
            .reduce(|| Complex64::new(0.0, 0.0), |a, b| a + b)
    }
}

fn tensor_points(m: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..m).map(move |j| {
                    let mut q = p.clone();
                    q.push(j);
                    q
                })
            })
            .collect();
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BergmanPrefactors {
    /// `(r/2π)^n`, from Poisson summation over the coloring lattice.
    pub poisson: f64,
    /// `(r/2π)^n / Covol(Λ)²`.
    pub inverse_covolume_squared: f64,
    /// `2^{6-4g} (r/2π)^n`.
    pub genus_power: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BergmanEvaluation {
    pub r: u32,
    #[serde(serialize_with = "ser_complex")]
    pub exact: Complex64,
    #[serde(serialize_with = "ser_complex")]
    pub asymptotic: Complex64,
    pub error: f64,
    pub relative_error: f64,
    pub prefactors: BergmanPrefactors,
}

pub(crate) fn ser_complex<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

/// Golub–Welsch nodes and weights for `∫ g(x) e^{-x²} dx`.
pub fn gauss_hermite(m: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&m) {
        return v.clone();
    }
    let mut jac = DMatrix::zeros(m, m);
    for k in 1..m {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let rule = Arc::new(golub_welsch(jac, PI.sqrt()));
    cache.lock().unwrap().insert(m, rule.clone());
    rule
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::zeros(m, m);
    for k in 1..m {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    golub_welsch(jac, 2.0)
}

fn golub_welsch(jac: DMatrix<f64>, mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..eig.eigenvalues.len())
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn legendre16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// `∫_a^b g` by composite 16-point Gauss–Legendre, doubling panels until stable.
pub fn integrate_composite<F: Fn(f64) -> f64>(g: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let (x, w) = legendre16();
    let panel_sum = |panels: usize| -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let mid = a + (p as f64 + 0.5) * h;
                x.iter().zip(w).map(|(xi, wi)| wi * g(mid + 0.5 * h * xi)).sum::<f64>() * 0.5 * h
            })
            .sum()
    };
    let mut panels = 2;
    let mut prev = panel_sum(panels);
    while panels < 1 << 14 {
        panels *= 2;
        let next = panel_sum(panels);
        if (next - prev).abs() <= tol * next.abs().max(1e-300) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature(format!("composite Gauss–Legendre on [{a}, {b}] after {panels} panels")))
}

/// A θ-independent test function on `R^E`, written as a product of factors in each `t_e`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    Coordinate { edge: usize },
    /// `exp(-|t - c|² / 2s²)`.
    Gaussian { center: Vec<f64>, width: f64 },
    /// `Π_e b((t_e - c_e)/ρ_e)` with `b(s) = exp(-1/(1 - s²))` on `|s| < 1`.
    Bump { center: Vec<f64>, radius: Vec<f64> },
}

#[derive(Clone, Copy, Debug)]
enum Factor {
    One,
    Scaled(f64),
    Linear,
    Gaussian { center: f64, width: f64 },
    Bump { center: f64, radius: f64 },
}

impl Factor {
    /// Value and first two derivatives.
    fn jet(self, x: f64) -> (f64, f64, f64) {
        match self {
            Factor::One => (1.0, 0.0, 0.0),
            Factor::Scaled(c) => (c, 0.0, 0.0),
            Factor::Linear => (x, 1.0, 0.0),
            Factor::Gaussian { center, width } => {
                let s2 = width * width;
                let d = x - center;
                let v = (-d * d / (2.0 * s2)).exp();
                (v, -d / s2 * v, (d * d / (s2 * s2) - 1.0 / s2) * v)
            }
            Factor::Bump { center, radius } => {
                let s = (x - center) / radius;
                if s.abs() >= 1.0 {
                    return (0.0, 0.0, 0.0);
                }
                let q = 1.0 - s * s;
                let v = (-1.0 / q).exp();
                let d1 = -2.0 * s / (q * q) * v;
                let d2 = (6.0 * s.powi(4) - 2.0) / q.powi(4) * v;
                (v, d1 / radius, d2 / (radius * radius))
            }
        }
    }

    fn support(self) -> Option<(f64, f64)> {
        match self {
            Factor::Bump { center, radius } => Some((center - radius, center + radius)),
            _ => None,
        }
    }

    /// `∫ factor(x) e^{-(r/2)(x - c)²} dx`.
    fn gaussian_integral(self, r: f64, c: f64) -> Result<f64> {
        let scale = (2.0 / r).sqrt();
        match self {
            Factor::One => Ok(PI.sqrt() * scale),
            Factor::Scaled(v) => Ok(v * PI.sqrt() * scale),
            Factor::Linear => Ok(c * PI.sqrt() * scale),
            Factor::Gaussian { .. } => {
                let mut m = 16;
                let eval = |m: usize| {
                    let (x, w) = &*gauss_hermite(m);
                    x.iter().zip(w).map(|(xi, wi)| wi * self.jet(c + scale * xi).0).sum::<f64>() * scale
                };
                let mut prev = eval(m);
                while m < 512 {
                    m *= 2;
                    let next = eval(m);
                    if (next - prev).abs() <= 1e-14 * next.abs().max(1e-300) {
                        return Ok(next);
                    }
                    prev = next;
                }
                Err(Error::Quadrature(format!("Gauss–Hermite with {m} nodes")))
            }
            Factor::Bump { .. } => {
                let (lo, hi) = self.support().unwrap();
                let window = 14.0 / r.sqrt();
                let (a, b) = (lo.max(c - window), hi.min(c + window));
                integrate_composite(|x| self.jet(x).0 * (-0.5 * r * (x - c).powi(2)).exp(), a, b, 1e-13)
            }
        }
    }
}

impl Profile {
    fn factors(&self, n: usize) -> Vec<Factor> {
        match self {
            Profile::Constant { value } => {
                let mut f = vec![Factor::One; n];
                f[0] = Factor::Scaled(*value);
                f
            }
            Profile::Coordinate { edge } => (0..n).map(|e| if e == *edge { Factor::Linear } else { Factor::One }).collect(),
            Profile::Gaussian { center, width } => {
                center.iter().map(|&c| Factor::Gaussian { center: c, width: *width }).collect()
            }
            Profile::Bump { center, radius } => {
                center.iter().zip(radius).map(|(&c, &rho)| Factor::Bump { center: c, radius: rho }).collect()
            }
        }
    }

    /// Value, gradient and Euclidean Laplacian at `t`.
    pub fn jet(&self, t: &[f64]) -> (f64, Vec<f64>, f64) {
        let jets: Vec<(f64, f64, f64)> = self.factors(t.len()).iter().zip(t).map(|(f, &x)| f.jet(x)).collect();
        let prod_except = |skip: usize| -> f64 { jets.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, j)| j.0).product() };
        let value: f64 = jets.iter().map(|j| j.0).product();
        let grad: Vec<f64> = (0..t.len()).map(|e| jets[e].1 * prod_except(e)).collect();
        let lap: f64 = (0..t.len()).map(|e| jets[e].2 * prod_except(e)).sum();
        (value, grad, lap)
    }

    pub fn value(&self, t: &[f64]) -> f64 {
        self.jet(t).0
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ToeplitzElement {
    #[serde(serialize_with = "ser_complex")]
    pub exact: Complex64,
    #[serde(serialize_with = "ser_complex")]
    pub expansion: Complex64,
}

/// `(f e^{ik·θ} e_α, e_{α+k})` and its two-term expansion at `α/r`.
pub fn toeplitz_matrix_element(model: &KahlerModel, f: &Profile, k: &[i32], alpha: &[u32], r: u32) -> Result<ToeplitzElement> {
    let n = model.n;
    if k.len() != n || alpha.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: k.len().min(alpha.len()) });
    }
    let rf = r as f64;
    let a: Vec<f64> = alpha.iter().map(|&v| v as f64 / rf).collect();
    model.check_compact(&a)?;
    let k2: f64 = k.iter().map(|&v| (v * v) as f64).sum();
    let mut integral = (-k2 / (8.0 * rf)).exp() * (rf / (2.0 * PI)).powf(n as f64 / 2.0);
    for (e, factor) in f.factors(n).into_iter().enumerate() {
        let c = (alpha[e] as f64 + 0.5 * k[e] as f64) / rf;
        integral *= factor.gaussian_integral(rf, c)?;
    }
    let (value, grad, lap) = f.jet(&a);
    let kgrad: f64 = k.iter().zip(&grad).map(|(&ki, g)| ki as f64 * g).sum();
    let expansion = value + (lap + kgrad - k2 * value / 4.0) / (2.0 * rf);
    Ok(ToeplitzElement { exact: Complex64::new(integral, 0.0), expansion: Complex64::new(expansion, 0.0) })
}

/// Admissible coloring nearest to `r t`: ties and equal distances resolved
/// towards the lexicographically smallest candidate.
/// Deterministic points of the moment polytope at distance `>= margin` from
/// its boundary, from the Halton sequence on the unit cube.
pub fn halton_points(surface: &SurfaceModel, count: usize, margin: f64) -> Vec<Vec<f64>> {
    const BASES: [u64; 6] = [2, 3, 5, 7, 11, 13];
    let n = surface.n();
    let radical_inverse = |mut i: u64, b: u64| {
        let (mut f, mut out) = (1.0, 0.0);
        while i > 0 {
            f /= b as f64;
            out += f * (i % b) as f64;
            i /= b;
        }
        out
    };
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count && i < 1_000_000 {
        let p: Vec<f64> = (0..n).map(|e| radical_inverse(i, BASES[e % BASES.len()])).collect();
        if surface.boundary_distance(&p) >= margin {
            out.push(p);
        }
        i += 1;
    }
    out
}

pub fn nearest_coloring(surface: &SurfaceModel, r: u32, t: &[f64]) -> Result<Vec<u32>> {
    nearest_coloring_with(surface, r, t, &vec![None; surface.n()])
}

/// [`nearest_coloring`] with some colors prescribed.
pub fn nearest_coloring_with(surface: &SurfaceModel, r: u32, t: &[f64], fixed: &[Option<u32>]) -> Result<Vec<u32>> {
    let n = surface.n();
    if t.len() != n || fixed.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: t.len().min(fixed.len()) });
    }
    let target: Vec<f64> = t.iter().map(|x| x * r as f64).collect();
    let base: Vec<i64> = target.iter().map(|x| x.round() as i64).collect();
    let mut best: Option<(f64, Vec<u32>)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut cand = Vec::with_capacity(n);
        let mut rest = code;
        for (e, b) in base.iter().enumerate() {
            let step = (rest % 3) as i64 - 1;
            rest /= 3;
            match fixed[e] {
                Some(v) if step == 0 => cand.push(v as i64),
                Some(_) => cand.push(-1),
                None => cand.push(b + step),
            }
        }
        if cand.iter().any(|&v| v < 1) {
            continue;
        }
        let cand: Vec<u32> = cand.iter().map(|&v| v as u32).collect();
        if !surface.is_admissible(&cand, r) {
            continue;
        }
        let d: f64 = cand.iter().zip(&target).map(|(&c, x)| (c as f64 - x).powi(2)).sum();
        let better = match &best {
            None => true,
            Some((bd, bc)) => d < bd - 1e-12 || ((d - bd).abs() <= 1e-12 && cand < *bc),
        };
        if better {
            best = Some((d, cand));
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::OutsidePolytope(t.to_vec()))
}

#[derive(Clone, Debug, Serialize)]
pub struct SymbolSample {
    pub r: u32,
    pub coloring: Vec<u32>,
    #[serde(serialize_with = "ser_complex")]
    pub sigma: Complex64,
    /// `-tr ρ_{t,θ}(γ)`.
    pub principal: f64,
    /// `|σ - f_0(t, θ)|`.
    pub principal_residual: f64,
    /// `|σ - f_0 - (1/2ir) Σ ∂²f_0/∂τ_e∂θ_e|` at `τ = α/r`.
    pub first_order_residual: f64,
    /// `|r (σ - f_0) - (1/2i) Σ ∂²f_0/∂τ_e∂θ_e|` at `τ = α/r`.
    pub subprincipal_residual: f64,
}

/// Fourier assembly `Σ_k F_k(α) e^{ik·θ}` of the band coefficients at the
/// coloring nearest `r t`, compared with the trace function.
pub fn operator_symbol(surface: &SurfaceModel, op: &BandedOperator, t: &[f64], theta: &[f64]) -> Result<SymbolSample> {
    let offsets: Vec<Vec<i32>> = op.bands.keys().cloned().collect();
    let width = *op.bandwidths.iter().max().unwrap_or(&0);
    symbol_with(surface, &op.curve, op.level, &offsets, width, t, theta, |c, k| op.coefficient(c, k))
}

/// As [`operator_symbol`], evaluating only the band coefficients it needs
/// instead of assembling the operator.
pub fn curve_symbol(surface: &SurfaceModel, curve: &str, r: u32, t: &[f64], theta: &[f64]) -> Result<SymbolSample> {
    let ctx = RecouplingContext::new(r)?;
    let (rule, bandwidths) = curve_rule(surface, curve)?;
    let offsets = band_offsets(&bandwidths);
    let width = *bandwidths.iter().max().unwrap_or(&0);
    symbol_with(surface, curve, r, &offsets, width, t, theta, |c, k| curve_coefficient(surface, &ctx, rule, c, k))
}

#[allow(clippy::too_many_arguments)]
fn symbol_with<F: Fn(&[u32], &[i32]) -> f64>(
    surface: &SurfaceModel,
    curve: &str,
    r: u32,
    offsets: &[Vec<i32>],
    width: u32,
    t: &[f64],
    theta: &[f64],
    coefficient: F,
) -> Result<SymbolSample> {
    let rf = r as f64;
    let alpha = nearest_coloring(surface, r, t)?;
    let margin = (width + 1) as f64 / rf;
    let distance = surface.boundary_distance(&alpha.iter().map(|&v| v as f64 / rf).collect::<Vec<_>>());
    if distance < margin {
        return Err(Error::OutsideCompact { distance, margin });
    }
    let mut sigma = Complex64::new(0.0, 0.0);
    for k in offsets {
        let phase: f64 = k.iter().zip(theta).map(|(&ki, th)| ki as f64 * th).sum();
        sigma += coefficient(&alpha, k) * Complex64::from_polar(1.0, phase);
    }
    let f0 = |tt: &[f64], th: &[f64]| trace_function(surface, curve, tt, th);
    let principal = f0(t, theta)?;
    let tau: Vec<f64> = alpha.iter().map(|&a| a as f64 / rf).collect();
    let f_tau = f0(&tau, theta)?;
    let h = 2e-4;
    let mut mixed = 0.0;
    for e in 0..surface.n() {
        let val = |st: f64, sth: f64| -> Result<f64> {
            let mut tt = tau.clone();
            let mut th = theta.to_vec();
            tt[e] += st * h;
            th[e] += sth * h;
            f0(&tt, &th)
        };
        mixed += (val(1.0, 1.0)? - val(1.0, -1.0)? - val(-1.0, 1.0)? + val(-1.0, -1.0)?) / (4.0 * h * h);
    }
    // (1/2i) Σ ∂τ∂θ f0 = -(i/2) Σ ∂τ∂θ f0
    let correction = Complex64::new(0.0, -0.5 * mixed);
    Ok(SymbolSample {
        r,
        coloring: alpha,
        sigma,
        principal,
        principal_residual: (sigma - principal).norm(),
        first_order_residual: (sigma - f_tau - correction / rf).norm(),
        subprincipal_residual: (rf * (sigma - f_tau) - correction).norm(),
    })
}

/// Fits the per-edge angle offsets by matching the phase of `F_{+e}` of each
/// handle longitude with the `e^{iθ_e}` Fourier coefficient of its trace
/// function; edges not carrying a longitude keep offset 0.
pub fn calibrate_angle_offsets(surface: &SurfaceModel, r: u32) -> Result<SurfaceModel> {
    let mut out = surface.clone();
    let n = surface.n();
    out.angle_offsets = vec![0.0; n];
    let colorings = enumerate_admissible(surface, r);
    let alpha = colorings
        .colorings
        .iter()
        .max_by(|a, b| {
            let da = surface.boundary_distance(&a.iter().map(|&v| v as f64 / r as f64).collect::<Vec<_>>());
            let db = surface.boundary_distance(&b.iter().map(|&v| v as f64 / r as f64).collect::<Vec<_>>());
            da.total_cmp(&db)
        })
        .ok_or_else(|| Error::OutOfRange(format!("no admissible colorings at level {r}")))?
        .clone();
    let tau: Vec<f64> = alpha.iter().map(|&v| v as f64 / r as f64).collect();
    let zero = SurfaceModel { angle_offsets: vec![0.0; n], ..surface.clone() };
    for extra in &surface.extra_curves {
        let e = extra.loop_edge;
        let op = curve_operator(surface, &extra.name, r)?;
        let mut k = vec![0; n];
        k[e] = 1;
        let f_plus = op.coefficient(&alpha, &k);
        let samples = 64;
        let mut coeff = Complex64::new(0.0, 0.0);
        for j in 0..samples {
            let mut theta = vec![0.0; n];
            theta[e] = 2.0 * PI * j as f64 / samples as f64;
            let v = trace_function(&zero, &extra.name, &tau, &theta)?;
            coeff += v * Complex64::from_polar(1.0, -theta[e]);
        }
        coeff /= samples as f64;
        if f_plus.abs() < 1e-12 || coeff.norm() < 1e-12 {
            return Err(Error::NonGeneric(format!("vanishing Fourier coefficient for {}", extra.name)));
        }
        let offset = (Complex64::new(f_plus, 0.0) / coeff).arg();
        out.angle_offsets[e] = if offset.abs() < 1e-9 { 0.0 } else { offset };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recoupling::curve_operator;
    use crate::surfaces::build_preset_surface;

    fn model() -> KahlerModel {
        KahlerModel::new(&build_preset_surface(2, "dumbbell2").unwrap())
    }

    #[test]
    fn complex_structure_is_compatible() {
        let m = model();
        let j = m.complex_structure();
        let id = DMatrix::<f64>::identity(6, 6);
        assert!((&j * &j + id).amax() < 1e-15);
        let g = m.metric();
        assert!((&g - g.transpose()).amax() < 1e-15);
        assert!(g.symmetric_eigenvalues().iter().all(|&v| v > 0.0));
        assert!(m.kappa(50.0) > 0.0);
    }

    #[test]
    fn gauss_rules_integrate_moments() {
        let (x, w) = &*gauss_hermite(20);
        let m4: f64 = x.iter().zip(w).map(|(a, b)| b * a.powi(4)).sum();
        assert!((m4 - 0.75 * PI.sqrt()).abs() < 1e-13);
        let (x, w) = gauss_legendre(16);
        let m: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(10)).sum();
        assert!((m - 2.0 / 11.0).abs() < 1e-14);
        let v = integrate_composite(|x| x.exp(), 0.0, 1.0, 1e-14).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn coherent_states_are_orthonormal() {
        let m = model();
        let r = 20;
        let alphas = [[7u32, 5, 9], [8, 5, 8], [7, 7, 9], [7, 5, 7]];
        for a in &alphas {
            assert!(m.surface.is_admissible(a, r));
        }
        for a in &alphas {
            for b in &alphas {
                let center: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| (x + y) as f64 / (2.0 * r as f64)).collect();
                let fa = |t: &[f64], th: &[f64]| {
                    m.coherent_value(a, r, t, th) * (-(r as f64) * KahlerModel::weight(t) / 2.0).exp()
                };
                let fb = |t: &[f64], th: &[f64]| {
                    m.coherent_value(b, r, t, th) * (-(r as f64) * KahlerModel::weight(t) / 2.0).exp()
                };
                let ip = m.l2_inner_product(r, &center, 6, 24, fa, fb);
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).norm() < 1e-8, "{a:?} {b:?}: {ip}");
            }
        }
    }

    #[test]
    fn coherent_h_norm_peaks_at_alpha_over_r() {
        let m = model();
        let (a, r) = ([7u32, 5, 9], 20);
        let peak: Vec<f64> = a.iter().map(|&v| v as f64 / r as f64).collect();
        let th = [0.3, -0.2, 1.0];
        let at = |t: &[f64]| KahlerModel::h_norm(m.coherent_value(&a, r, t, &th), r, t);
        assert!((at(&peak) - m.coherent_h_norm(&a, r, &peak)).abs() < 1e-12 * at(&peak));
        for e in 0..3 {
            for s in [-0.01, 0.01] {
                let mut t = peak.clone();
                t[e] += s;
                assert!(at(&t) < at(&peak));
            }
        }
    }

    #[test]
    fn bergman_diagonal_and_off_diagonal() {
        let m = model();
        let t = [0.4, 0.3, 0.45];
        let th = [0.1, 0.2, 0.3];
        let ev = m.bergman_compare(60, (&t, &th), (&t, &th)).unwrap();
        let fine = m.bergman_compare(200, (&t, &th), (&t, &th)).unwrap();
        // Boundary truncation of the coloring sum dominates at these levels.
        assert!(ev.relative_error < 0.1 && fine.relative_error < ev.relative_error / 5.0, "{ev:?} {fine:?}");
        assert!((ev.prefactors.inverse_covolume_squared / ev.prefactors.poisson - 4.0).abs() < 1e-12);
        assert!((ev.prefactors.genus_power / ev.prefactors.poisson - 0.25).abs() < 1e-12);
        let u = [0.4 + 0.5 / 3f64.sqrt(), 0.3 + 0.5 / 3f64.sqrt() * 0.0, 0.45 - 0.5 * (2.0 / 3f64).sqrt()];
        let far = m.bergman_compare(200, (&t, &th), (&u, &th));
        if let Ok(ev) = far {
            assert!(ev.exact.norm() < (-200.0 * 0.25 / 8.0f64).exp() * 200f64.powi(3));
        }
        assert!(matches!(
            m.bergman_compare(60, (&[0.01, 0.01, 0.01], &th), (&t, &th)),
            Err(Error::OutsideCompact { .. })
        ));
    }

    #[test]
    fn toeplitz_trivial_profiles() {
        let m = model();
        let (alpha, r) = ([41u32, 31, 45], 100);
        let one = toeplitz_matrix_element(&m, &Profile::Constant { value: 1.0 }, &[0, 0, 0], &alpha, r).unwrap();
        assert!((one.exact.re - 1.0).abs() < 1e-14);
        let lin = toeplitz_matrix_element(&m, &Profile::Coordinate { edge: 1 }, &[0, 0, 0], &alpha, r).unwrap();
        assert!((lin.exact.re - 0.31).abs() < 1e-14);
    }

    #[test]
    fn toeplitz_gaussian_profile_matches_closed_form() {
        let m = model();
        let (c0, s) = ([0.42, 0.3, 0.47], 0.12);
        let f = Profile::Gaussian { center: c0.to_vec(), width: s };
        for r in [50u32, 200] {
            for k in [[0, 0, 0], [1, 0, 0], [0, 0, -1]] {
                let alpha = [21 * r / 50, 15 * r / 50 + 1, 23 * r / 50 + 1];
                let el = toeplitz_matrix_element(&m, &f, &k, &alpha, r).unwrap();
                let rf = r as f64;
                let k2: f64 = k.iter().map(|&v| (v * v) as f64).sum();
                let mut oracle = (-k2 / (8.0 * rf)).exp();
                for e in 0..3 {
                    let c = (alpha[e] as f64 + 0.5 * k[e] as f64) / rf;
                    let q = 1.0 + rf * s * s;
                    // ∫ e^{-(t-c0)²/2s²} e^{-r(t-c)²/2} dt (r/2π)^{1/2}
                    oracle *= (rf * s * s / q).sqrt() * (-(rf * (c - c0[e]).powi(2)) / (2.0 * q)).exp();
                }
                assert!((el.exact.re - oracle).abs() < 1e-12, "{r} {k:?}: {} vs {oracle}", el.exact.re);
            }
        }
    }

    #[test]
    fn toeplitz_bump_has_second_order_error() {
        let m = model();
        let f = Profile::Bump { center: vec![0.4, 0.3, 0.45], radius: vec![0.25, 0.2, 0.25] };
        let err = |r: u32| {
            let alpha = nearest_coloring(&m.surface, r, &[0.43, 0.31, 0.47]).unwrap();
            let el = toeplitz_matrix_element(&m, &f, &[1, 0, 0], &alpha, r).unwrap();
            (el.exact - el.expansion).norm()
        };
        let ratio = err(400) / err(800);
        assert!(ratio > 3.0 && ratio < 5.0, "{ratio}");
    }

    #[test]
    fn nearest_coloring_respects_parity() {
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        let c = nearest_coloring(&d, 20, &[0.4, 0.3, 0.45]).unwrap();
        assert!(d.is_admissible(&c, 20));
        assert_eq!(c[1] % 2, 1);
        // 6 is even, so 5 and 7 tie; the smaller wins.
        assert_eq!(nearest_coloring(&d, 20, &[0.4, 0.3, 0.45]).unwrap()[1], 5);
    }

    #[test]
    fn diagonal_curve_symbol() {
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        for r in [40, 80] {
            let op = curve_operator(&d, "e2", r).unwrap();
            let t = [0.4, 0.31, 0.45];
            let s = operator_symbol(&d, &op, &t, &[0.3, 0.5, 0.2]).unwrap();
            let expect = -2.0 * (PI * s.coloring[1] as f64 / r as f64).cos();
            assert!((s.sigma.re - expect).abs() < 1e-14 && s.sigma.im == 0.0);
            assert!(s.principal_residual <= 2.0 * PI / r as f64);
        }
    }

    #[test]
    fn calibrated_longitude_symbol_converges() {
        let d = build_preset_surface(2, "dumbbell2").unwrap();
        let cal = calibrate_angle_offsets(&d, 24).unwrap();
        let (t, th) = ([0.41, 0.33, 0.46], [0.7, 0.4, -0.9]);
        let samples: Vec<SymbolSample> = [80u32, 160, 320]
            .iter()
            .map(|&r| curve_symbol(&cal, "b1", r, &t, &th).unwrap())
            .collect();
        let direct = operator_symbol(&cal, &curve_operator(&cal, "b1", 40).unwrap(), &t, &th).unwrap();
        let lazy = curve_symbol(&cal, "b1", 40, &t, &th).unwrap();
        assert!((direct.sigma - lazy.sigma).norm() < 1e-15);
        for w in samples.windows(2) {
            assert!(w[1].first_order_residual < w[0].first_order_residual / 3.0, "{samples:?}");
        }
    }
}
