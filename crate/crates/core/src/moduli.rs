//! SU(2) representations of the surface group in action-angle coordinates.
//!
//! The base section glues handle holonomies whose free parameters are chosen
//! real; twists act by `B -> B U_θ` on the generator crossing the twisted curve
//! and, for the separating curve, by conjugating one side.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::surfaces::{polytope_membership, Membership, Preset, SurfaceModel, Word};

pub type Su2 = Matrix2<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `U_θ = diag(e^{iθ}, e^{-iθ})`.
pub fn u_theta(theta: f64) -> Su2 {
    Matrix2::new(Complex64::from_polar(1.0, theta), c(0.0, 0.0), c(0.0, 0.0), Complex64::from_polar(1.0, -theta))
}

/// Inverse of an SU(2) element (its adjoint).
pub fn su2_inverse(m: &Su2) -> Su2 {
    m.adjoint()
}

pub fn commutator(a: &Su2, b: &Su2) -> Su2 {
    a * b * su2_inverse(a) * su2_inverse(b)
}

/// `max(|M*M - I|, |det M - 1|)`.
pub fn su2_defect(m: &Su2) -> f64 {
    let unitary = (m.adjoint() * m - Su2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    unitary.max((m.determinant() - c(1.0, 0.0)).norm())
}

/// `(A, B, C)` with `ABC = I`, traces `2cos(πx_i)`, `A` diagonal and the
/// off-diagonal entries of `B` real and nonnegative.
pub fn pants_triple(x1: f64, x2: f64, x3: f64) -> Result<(Su2, Su2, Su2)> {
    let strict = x1 > 0.0
        && x2 > 0.0
        && x3 > 0.0
        && (x2 - x3).abs() < x1
        && x1 < x2 + x3
        && (x1 - x3).abs() < x2
        && x1 + x2 + x3 < 2.0;
    let (s1, c1, s2, c2, c3) = ((PI * x1).sin(), (PI * x1).cos(), (PI * x2).sin(), (PI * x2).cos(), (PI * x3).cos());
    let s = (c1 * c2 - c3) / s1;
    let beta_sq = s2 * s2 - s * s;
    if !strict || beta_sq <= 0.0 {
        return Err(Error::DegenerateTriple(x1, x2, x3));
    }
    let beta = beta_sq.sqrt();
    let a = u_theta(PI * x1);
    let b = Matrix2::new(c(c2, s), c(beta, 0.0), c(-beta, 0.0), c(c2, -s));
    let cc = su2_inverse(&(a * b));
    Ok((a, b, cc))
}

/// Handle holonomies `(A, B)`: `A` diagonal with trace `2cos(πt_loop)`, `B` a
/// real rotation, and `tr [A, B] = 2cos(πt_sep)`.
pub fn handle_pair(t_loop: f64, t_sep: f64) -> Result<(Su2, Su2)> {
    let q = (PI * t_sep / 2.0).sin() / (PI * t_loop).sin();
    if !(t_sep > 0.0 && t_sep < 2.0 * t_loop && 2.0 * t_loop + t_sep < 2.0) || !(q < 1.0) {
        return Err(Error::DegenerateTriple(t_loop, t_loop, t_sep));
    }
    let p = (1.0 - q * q).sqrt();
    Ok((u_theta(PI * t_loop), Matrix2::new(c(p, 0.0), c(q, 0.0), c(-q, 0.0), c(p, 0.0))))
}

/// `p(t_loop, t_sep) = -½ tr ρ(b)` at zero twist, so that `-tr ρ(b) = -2p cos θ`.
pub fn handle_p(t_loop: f64, t_sep: f64) -> f64 {
    let q = (PI * t_sep / 2.0).sin() / (PI * t_loop).sin();
    (1.0 - q * q).max(0.0).sqrt()
}

/// Unit eigenvector basis `V ∈ SU(2)` of `k` with `k V = V diag(e^{iφ}, e^{-iφ})`,
/// `φ ∈ (0, π)`, first nonzero component of the first column real positive.
fn eigenbasis(k: &Su2) -> Su2 {
    let half_trace = 0.5 * (k[(0, 0)] + k[(1, 1)]).re;
    let phi = half_trace.clamp(-1.0, 1.0).acos();
    let lambda = Complex64::from_polar(1.0, phi);
    let cand1 = [k[(0, 1)], lambda - k[(0, 0)]];
    let cand2 = [lambda - k[(1, 1)], k[(1, 0)]];
    let norm = |v: &[Complex64; 2]| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let mut v = if norm(&cand1) >= norm(&cand2) { cand1 } else { cand2 };
    let n = norm(&v);
    v.iter_mut().for_each(|z| *z /= n);
    let lead = if v[0].norm() > 1e-14 { v[0] } else { v[1] };
    let phase = lead.conj() / lead.norm();
    v.iter_mut().for_each(|z| *z *= phase);
    Matrix2::new(v[0], -v[1].conj(), v[1], v[0].conj())
}

#[derive(Clone, Debug)]
pub struct Representation {
    pub preset: Preset,
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    /// Images of the generators, in the order of `SurfaceModel::generators`.
    pub images: Vec<Su2>,
}

impl Representation {
    pub fn evaluate(&self, word: &Word) -> Su2 {
        word.letters.iter().fold(Su2::identity(), |acc, l| {
            let m = &self.images[l.generator];
            if l.inverse {
                acc * su2_inverse(m)
            } else {
                acc * m
            }
        })
    }

    /// `-tr ρ(γ)`.
    pub fn observable(&self, word: &Word) -> f64 {
        -self.evaluate(word).trace().re
    }

    /// `|Π [a_i, b_i] - I|`.
    pub fn relation_residual(&self) -> f64 {
        let m = self
            .images
            .chunks(2)
            .fold(Su2::identity(), |acc, pair| acc * commutator(&pair[0], &pair[1]));
        (m - Su2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn dumbbell_images(t: &[f64], theta: &[f64]) -> Result<Vec<Su2>> {
    let (a1, b1) = handle_pair(t[0], t[1])?;
    let (a2p, b2p) = handle_pair(t[2], t[1])?;
    let b1 = b1 * u_theta(theta[0]);
    let b2p = b2p * u_theta(theta[2]);
    let k1 = commutator(&a1, &b1);
    let k2p = commutator(&a2p, &b2p);
    let g = eigenbasis(&su2_inverse(&k1)) * su2_inverse(&eigenbasis(&k2p));
    let (a2, b2) = (g * a2p * su2_inverse(&g), g * b2p * su2_inverse(&g));
    let w = eigenbasis(&k1);
    let q = w * u_theta(theta[1]) * su2_inverse(&w);
    let (a1, b1) = (q * a1 * su2_inverse(&q), q * b1 * su2_inverse(&q));
    Ok(vec![a1, b1, a2, b2])
}

/// `ρ_{t,θ}` for the preset's chart; `angle_offsets` are added to `θ`.
pub fn realize_representation(surface: &SurfaceModel, t: &[f64], theta: &[f64]) -> Result<Representation> {
    let n = surface.n();
    if t.len() != n || theta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: t.len().min(theta.len()) });
    }
    if polytope_membership(surface, t)? != Membership::Interior {
        return Err(Error::OutsidePolytope(t.to_vec()));
    }
    let shifted: Vec<f64> = theta.iter().zip(&surface.angle_offsets).map(|(a, b)| a + b).collect();
    let images = match surface.preset {
        Preset::Dumbbell2 => dumbbell_images(t, &shifted)?,
        Preset::SmoveDumbbell2 => {
            // a1 -> a1 b1 a1^-1, b1 -> a1^-1 preserves [a1, b1] and carries
            // the dumbbell chart to one whose first curve is b1.
            let base = dumbbell_images(t, &shifted)?;
            let (a1, b1) = (base[0], base[1]);
            vec![a1 * b1 * su2_inverse(&a1), su2_inverse(&a1), base[2], base[3]]
        }
        Preset::Theta2 => {
            return Err(Error::Unsupported("action-angle chart for theta2 is not shipped".into()));
        }
    };
    Ok(Representation { preset: surface.preset, t: t.to_vec(), theta: theta.to_vec(), images })
}

/// `-tr ρ_{t,θ}(γ)` for a named curve of the surface.
pub fn trace_function(surface: &SurfaceModel, curve: &str, t: &[f64], theta: &[f64]) -> Result<f64> {
    let word = surface.curve_word(curve)?;
    Ok(realize_representation(surface, t, theta)?.observable(&word))
}

/// `-tr ρ_{t,θ}(w)` for an arbitrary word in the chart of `surface`.
pub fn word_observable(surface: &SurfaceModel, word: &Word, t: &[f64], theta: &[f64]) -> Result<f64> {
    Ok(realize_representation(surface, t, theta)?.observable(word))
}

fn bracket_at_step(surface: &SurfaceModel, f: &Word, g: &Word, t: &[f64], theta: &[f64], h: f64) -> Result<f64> {
    let n = surface.n();
    let eval = |w: &Word, dt: Option<(usize, f64)>, dth: Option<(usize, f64)>| -> Result<f64> {
        let mut tt = t.to_vec();
        let mut th = theta.to_vec();
        if let Some((e, s)) = dt {
            tt[e] += s;
        }
        if let Some((e, s)) = dth {
            th[e] += s;
        }
        word_observable(surface, w, &tt, &th)
    };
    let d_t = |w: &Word, e: usize| -> Result<f64> {
        Ok((eval(w, Some((e, h)), None)? - eval(w, Some((e, -h)), None)?) / (2.0 * h))
    };
    let d_th = |w: &Word, e: usize| -> Result<f64> {
        Ok((eval(w, None, Some((e, h)))? - eval(w, None, Some((e, -h)))?) / (2.0 * h))
    };
    let mut sum = 0.0;
    for e in 0..n {
        sum += d_t(f, e)? * d_th(g, e)? - d_th(f, e)? * d_t(g, e)?;
    }
    Ok(sum)
}

/// Canonical bracket `Σ_e (∂_t f ∂_θ g - ∂_θ f ∂_t g)` of `-tr` observables by
/// central differences, verified against the half step.
pub fn poisson_bracket(surface: &SurfaceModel, f: &Word, g: &Word, t: &[f64], theta: &[f64], h: f64) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::OutOfRange(format!("finite-difference step {h:e}")));
    }
    let coarse = bracket_at_step(surface, f, g, t, theta, h)?;
    let fine = bracket_at_step(surface, f, g, t, theta, h / 2.0)?;
    if (coarse - fine).abs() > 1e-5 {
        return Err(Error::UnstablePoint((coarse - fine).abs()));
    }
    Ok((4.0 * fine - coarse) / 3.0)
}
