//! End-to-end comparison of exact pairings with their semiclassical
//! prediction along fixed-fraction coloring sequences.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantization::{calibrate_angle_offsets, nearest_coloring, nearest_coloring_with, ser_complex, K_MARGIN};
use crate::recoupling::{exact_pairing, pair_relation, pairing_matrix, Backend, TAU_PAIR};
use crate::semiclassics::{intersect_lagrangians, predict_pairing, LagrangianLevelSet, PairingPrediction, TAU_TRANSV};
use crate::surfaces::{build_preset_surface, SurfaceModel};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_transversality")]
    pub transversality: f64,
    #[serde(default = "default_backend_tol")]
    pub backend: f64,
    /// Minimal distance of `α_r/r`, `β_r/r` to the polytope boundary.
    #[serde(default = "default_margin")]
    pub compact_margin: f64,
}

fn default_transversality() -> f64 {
    TAU_TRANSV
}
fn default_backend_tol() -> f64 {
    TAU_PAIR
}
fn default_margin() -> f64 {
    K_MARGIN
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { transversality: TAU_TRANSV, backend: TAU_PAIR, compact_margin: K_MARGIN }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_genus")]
    pub genus: usize,
    /// Decomposition whose basis is `φ_α`; also the chart of the prediction.
    pub fiber: String,
    /// Decomposition whose basis is `ψ_β`.
    pub implicit: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    #[serde(default = "default_cross_levels")]
    pub cross_levels: Vec<u32>,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    /// Level at which the angle offsets of the fiber chart are calibrated.
    #[serde(default = "default_calibration")]
    pub calibration_level: u32,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub out: PathBuf,
}

fn default_genus() -> usize {
    2
}
fn default_levels() -> Vec<u32> {
    vec![50, 100, 200]
}
fn default_cross_levels() -> Vec<u32> {
    vec![8, 12]
}
fn default_backend() -> Backend {
    Backend::JointEigenvector
}
fn default_calibration() -> u32 {
    24
}

impl StudyConfig {
    pub fn new(fiber: &str, implicit: &str, x: &[f64], y: &[f64], out: impl Into<PathBuf>) -> Self {
        StudyConfig {
            genus: 2,
            fiber: fiber.into(),
            implicit: implicit.into(),
            x: x.to_vec(),
            y: y.to_vec(),
            levels: default_levels(),
            cross_levels: default_cross_levels(),
            backend: default_backend(),
            calibration_level: default_calibration(),
            tolerances: Tolerances::default(),
            out: out.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("empty level list".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("levels must be strictly increasing".into()));
        }
        if self.levels[0] < 3 || self.cross_levels.iter().any(|&r| r < 3) {
            return Err(Error::Config("levels must be at least 3".into()));
        }
        let surfaces = self.surfaces()?;
        let n = surfaces.0.n();
        for v in [&self.x, &self.y] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        if !(self.tolerances.transversality > 0.0 && self.tolerances.backend > 0.0 && self.tolerances.compact_margin >= 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn surfaces(&self) -> Result<(SurfaceModel, SurfaceModel)> {
        Ok((build_preset_surface(self.genus, &self.fiber)?, build_preset_surface(self.genus, &self.implicit)?))
    }
}

/// `α_r`: nearest admissible coloring to `r x` (lexicographic tie-break);
/// `β_r` likewise, with the colors of shared curves copied from `α_r`.
pub fn coloring_sequence(a: &SurfaceModel, b: &SurfaceModel, x: &[f64], y: &[f64], r: u32) -> Result<(Vec<u32>, Vec<u32>)> {
    let alpha = nearest_coloring(a, r, x)?;
    let rel = pair_relation(a, b)?;
    let fixed: Vec<Option<u32>> = (0..b.n()).map(|e| rel.shared.contains(&e).then(|| alpha[e])).collect();
    let beta = nearest_coloring_with(b, r, y, &fixed)?;
    Ok((alpha, beta))
}

#[derive(Clone, Debug, Serialize)]
pub struct ScreenRow {
    pub r: u32,
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub boundary_distance_x: f64,
    pub boundary_distance_y: f64,
    pub margins: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScreeningRecord {
    pub rows: Vec<ScreenRow>,
    pub min_margin: f64,
}

/// Property (*) screening: every level must give points inside the compact
/// box and a non-empty, transverse intersection.
pub fn screen_property_star(config: &StudyConfig) -> Result<ScreeningRecord> {
    config.validate()?;
    let (a, b) = config.surfaces()?;
    let margin = config.tolerances.compact_margin;
    let rows = config
        .levels
        .par_iter()
        .map(|&r| -> Result<ScreenRow> {
            let at = |e: Error| Error::NonGeneric(format!("level {r}: {e}"));
            let (alpha, beta) = coloring_sequence(&a, &b, &config.x, &config.y, r).map_err(at)?;
            let xr: Vec<f64> = alpha.iter().map(|&c| c as f64 / r as f64).collect();
            let yr: Vec<f64> = beta.iter().map(|&c| c as f64 / r as f64).collect();
            let (dx, dy) = (a.boundary_distance(&xr), b.boundary_distance(&yr));
            if dx.min(dy) < margin {
                return Err(Error::OutsideCompact { distance: dx.min(dy), margin });
            }
            let points = intersect_lagrangians(&LagrangianLevelSet::fiber(&a, &xr), &LagrangianLevelSet::implicit(&b, &yr)).map_err(|e| match e {
                Error::NonGeneric(m) => Error::NonGeneric(format!("level {r}: {m}")),
                other => other,
            })?;
            if points.is_empty() {
                return Err(Error::NonGeneric(format!("level {r}: the level sets do not meet")));
            }
            let margins: Vec<f64> = points.iter().map(|p| p.margin).collect();
            if let Some(m) = margins.iter().find(|&&m| m <= config.tolerances.transversality) {
                return Err(Error::NonGeneric(format!("level {r}: transversality margin {m:.3e}")));
            }
            Ok(ScreenRow { r, alpha, beta, boundary_distance_x: dx, boundary_distance_y: dy, margins })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_margin = rows.iter().flat_map(|r| r.margins.iter().copied()).fold(f64::INFINITY, f64::min);
    Ok(ScreeningRecord { rows, min_margin })
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyRow {
    pub r: u32,
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    #[serde(serialize_with = "ser_complex")]
    pub exact: Complex64,
    pub exact_modulus: f64,
    pub predicted_modulus: f64,
    pub ratio: f64,
    pub rel_err: f64,
    pub prediction: PairingPrediction,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossValidationRow {
    pub r: u32,
    /// Entrywise `max ||M_move| - |M_eigen||` over the whole pairing matrix.
    pub max_delta: f64,
    pub unitarity_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub angle_offsets: Vec<f64>,
    pub screening: ScreeningRecord,
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of `log|ratio - 1|` against `log r`.
    pub slope: f64,
    pub cross_validation: Vec<CrossValidationRow>,
}

impl StudyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,exact_re,exact_im,exact_mod,pred_mod,ratio,rel_err\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                row.r, row.exact.re, row.exact.im, row.exact_modulus, row.predicted_modulus, row.ratio, row.rel_err
            ));
        }
        out
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs the screening, the per-level comparison and the backend
/// cross-validation, then writes `study.csv` and `study.json` to `config.out`.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    let report = compute_study(config)?;
    write_report(&report, &config.out)?;
    Ok(report)
}

/// [`run_study`] without writing files.
pub fn compute_study(config: &StudyConfig) -> Result<StudyReport> {
    let screening = screen_property_star(config)?;
    let (a, b) = config.surfaces()?;
    let chart = calibrate_angle_offsets(&a, config.calibration_level)?;
    let cross_validation = config
        .cross_levels
        .par_iter()
        .map(|&r| -> Result<CrossValidationRow> {
            let mv = pairing_matrix(&a, &b, r, Backend::MoveComposition)?;
            let ev = pairing_matrix(&a, &b, r, Backend::JointEigenvector)?;
            let max_delta = mv.entries.iter().zip(ev.entries.iter()).map(|(p, q)| (p.norm() - q.norm()).abs()).fold(0.0, f64::max);
            if max_delta > config.tolerances.backend {
                return Err(Error::BackendDisagreement(max_delta));
            }
            Ok(CrossValidationRow { r, max_delta, unitarity_residual: mv.unitarity_residual().max(ev.unitarity_residual()) })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = screening
        .rows
        .par_iter()
        .map(|s| -> Result<StudyRow> {
            let exact = exact_pairing(&a, &b, &s.alpha, &s.beta, s.r, config.backend)?;
            let prediction = predict_pairing(&chart, &s.alpha, &b, &s.beta, s.r)?;
            let ratio = exact.norm() / prediction.total_modulus;
            Ok(StudyRow {
                r: s.r,
                alpha: s.alpha.clone(),
                beta: s.beta.clone(),
                exact,
                exact_modulus: exact.norm(),
                predicted_modulus: prediction.total_modulus,
                ratio,
                rel_err: (ratio - 1.0).abs(),
                prediction,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let levels: Vec<f64> = rows.iter().map(|r| r.r as f64).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.rel_err).collect();
    let slope = if rows.len() >= 2 { loglog_slope(&levels, &errs) } else { f64::NAN };
    Ok(StudyReport { config: config.clone(), angle_offsets: chart.angle_offsets.clone(), screening, rows, slope, cross_validation })
}

/// Writes both files through temporaries so a failure leaves no partial output.
pub fn write_report(report: &StudyReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report)?;
    let csv = report.to_csv();
    let staged = [(dir.join(".study.csv.tmp"), dir.join("study.csv"), csv), (dir.join(".study.json.tmp"), dir.join("study.json"), json)];
    for (tmp, _, body) in &staged {
        if let Err(e) = fs::write(tmp, body) {
            for (t, _, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(e.into());
        }
    }
    for (tmp, dst, _) in &staged {
        fs::rename(tmp, dst)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> StudyConfig {
        StudyConfig::new("dumbbell2", "smove-dumbbell2", &[0.38, 0.3, 0.46], &[0.4, 0.3, 0.46], "/nonexistent")
    }

    #[test]
    fn parity_projection() {
        let a = build_preset_surface(2, "dumbbell2").unwrap();
        let b = build_preset_surface(2, "smove-dumbbell2").unwrap();
        for r in [50, 100, 200] {
            let (alpha, beta) = coloring_sequence(&a, &b, &[0.38, 0.3, 0.46], &[0.4, 0.3, 0.46], r).unwrap();
            assert!(a.is_admissible(&alpha, r) && b.is_admissible(&beta, r));
            assert_eq!(alpha[1..], beta[1..]);
            assert!(alpha.iter().zip([0.38, 0.3, 0.46]).all(|(&c, x)| (c as f64 - x * r as f64).abs() <= 1.0));
        }
    }

    #[test]
    fn config_errors() {
        let mut c = config();
        c.levels.clear();
        assert!(matches!(screen_property_star(&c), Err(Error::Config(_))));
        let mut c = config();
        c.levels = vec![100, 50];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = config();
        c.x = vec![0.5, 0.0, 0.5];
        assert_eq!(screen_property_star(&c).unwrap_err().exit_code(), 3);
        let mut c = config();
        c.implicit = "dumbbell2".into();
        c.y = c.x.clone();
        assert!(matches!(screen_property_star(&c), Err(Error::NonGeneric(_))));
        assert!(StudyConfig::from_json(r#"{"fiber": "dumbbell2"}"#).is_err());
    }

    #[test]
    fn screening_passes_for_generic_fractions() {
        let mut c = config();
        c.levels = vec![50, 100];
        let rec = screen_property_star(&c).unwrap();
        assert_eq!(rec.rows.len(), 2);
        assert!(rec.min_margin > TAU_TRANSV);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [50.0, 100.0, 200.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((loglog_slope(&x, &y) + 1.5).abs() < 1e-12);
    }
}
