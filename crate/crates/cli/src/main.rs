use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qtlab::quantization::{curve_symbol, halton_points, toeplitz_matrix_element, KahlerModel, Profile, K_MARGIN};
use qtlab::recoupling::{curve_operator, exact_pairing, operator_spectrum_check, pairing_matrix, Backend};
use qtlab::semiclassics::{intersect_lagrangians, predict_pairing, LagrangianLevelSet};
use qtlab::study::{coloring_sequence, run_study, StudyConfig};
use qtlab::surfaces::{build_preset_surface, enumerate_admissible, lattice_data, SurfaceModel};
use qtlab::{quantization, Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "qtlab", version, about = "Exact and semiclassical computations on genus-2 TQFT spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Preset name.
    #[arg(long, default_value = "dumbbell2")]
    surface: String,
    /// Two presets `A,B`: basis `φ` of `A` and `ψ` of `B`.
    #[arg(long, default_value = "dumbbell2,smove-dumbbell2")]
    pair: String,
    #[arg(long)]
    r: Option<u32>,
    /// Comma-separated levels.
    #[arg(long = "r-list")]
    r_list: Option<String>,
    /// Comma-separated moment coordinates.
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    y: Option<String>,
    /// Output file (or directory for `study`); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "joint-eigenvector")]
    backend: String,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Number of admissible colorings per level.
    Dims(Common),
    /// Admissible colorings as CSV `r,c_1,...,c_n`.
    Colorings(Common),
    /// The lattice `Λ` of the torus action.
    Lattice(Common),
    /// Exact Bergman kernel against its asymptotic form at interior points.
    BergmanCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Toeplitz matrix elements against their two-term expansion.
    ToeplitzCheck(Common),
    /// Symbol of a curve operator against the trace function.
    SymbolCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "b1")]
        curve: String,
        /// Comma-separated angles.
        #[arg(long)]
        theta: Option<String>,
    },
    /// Spectra of curve operators against `{-2cos(πk/r)}`.
    SpectrumCheck {
        #[command(flatten)]
        common: Common,
        /// Curve name; every decomposition and extra curve when absent.
        #[arg(long)]
        curve: Option<String>,
    },
    /// Intersection points of `Λ_x` and `Λ'_y`.
    Intersect(Common),
    /// Exact pairings `⟨φ_α, ψ_β⟩`.
    PairExact {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        beta: Option<String>,
    },
    /// Semiclassical prediction of `|⟨φ_α, ψ_β⟩|`.
    PairPredict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        beta: Option<String>,
    },
    /// Exact against predicted pairings along a coloring sequence.
    Study(Common),
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| Error::Config(format!("cannot parse {what} `{text}`"))))
        .collect()
}

impl Common {
    fn surface(&self) -> Result<SurfaceModel> {
        build_preset_surface(2, &self.surface)
    }

    fn pair(&self) -> Result<(SurfaceModel, SurfaceModel)> {
        let names: Vec<&str> = self.pair.split(',').map(str::trim).collect();
        match names.as_slice() {
            [a, b] => Ok((build_preset_surface(2, a)?, build_preset_surface(2, b)?)),
            _ => Err(Error::Config(format!("--pair expects `A,B`, got `{}`", self.pair))),
        }
    }

    fn levels(&self, default: &[u32]) -> Result<Vec<u32>> {
        match (&self.r, &self.r_list) {
            (Some(_), Some(_)) => Err(Error::Config("give either --r or --r-list".into())),
            (Some(r), None) => Ok(vec![*r]),
            (None, Some(list)) => parse_list(list, "level list"),
            (None, None) if !default.is_empty() => Ok(default.to_vec()),
            (None, None) => Err(Error::Config("a level is required (--r)".into())),
        }
    }

    fn level(&self) -> Result<u32> {
        match self.levels(&[])?.as_slice() {
            [r] => Ok(*r),
            _ => Err(Error::Config("exactly one level is required (--r)".into())),
        }
    }

    fn vector(&self, v: &Option<String>, name: &str) -> Result<Vec<f64>> {
        v.as_deref().map(|s| parse_list(s, name)).unwrap_or_else(|| Err(Error::Config(format!("--{name} is required"))))
    }

    fn backend(&self) -> Result<Backend> {
        self.backend.parse()
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                fs::write(path, text)?;
                Ok(())
            }
            None => {
                print!("{text}");
                if !text.ends_with('\n') {
                    println!();
                }
                Ok(())
            }
        }
    }
}

fn curve_names(surface: &SurfaceModel) -> Vec<String> {
    surface.edges.iter().cloned().chain(surface.extra_curves.iter().map(|c| c.name.clone())).collect()
}

/// Convergence-study rows `r,quantity,exact,approx,abs_err,rel_err`.
fn convergence_csv(rows: &[(u32, String, f64, f64)]) -> String {
    let mut out = String::from("r,quantity,exact,approx,abs_err,rel_err\n");
    for (r, q, exact, approx) in rows {
        let abs = (exact - approx).abs();
        out.push_str(&format!("{r},{q},{exact:.16e},{approx:.16e},{abs:.16e},{:.16e}\n", abs / exact.abs()));
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dims(c) => {
            let surfaces = if c.surface == "all" {
                ["theta2", "dumbbell2", "smove-dumbbell2"].iter().map(|p| build_preset_surface(2, p)).collect::<Result<Vec<_>>>()?
            } else {
                vec![c.surface()?]
            };
            let mut out = String::from("surface,r,dim\n");
            for r in c.levels(&(2..=30).collect::<Vec<_>>())? {
                for s in &surfaces {
                    out.push_str(&format!("{},{r},{}\n", s.preset, enumerate_admissible(s, r).len()));
                }
            }
            c.emit(&out)
        }
        Command::Colorings(c) => {
            let s = c.surface()?;
            let mut out = String::new();
            for r in c.levels(&[])? {
                out.push_str(&enumerate_admissible(&s, r).to_csv());
            }
            c.emit(&out)
        }
        Command::Lattice(c) => {
            let s = c.surface()?;
            let lat = lattice_data(&s);
            let value = json!({
                "surface": s.preset.name(),
                "lattice": lat,
                "basis": lat.basis(),
                "covolume_f64": lat.covolume_f64(),
            });
            c.emit(&serde_json::to_string_pretty(&value)?)
        }
        Command::BergmanCheck { common: c, points } => {
            let s = c.surface()?;
            let model = KahlerModel::new(&s);
            let ts = halton_points(&s, points, K_MARGIN + 0.05);
            let mut rows = Vec::new();
            for r in c.levels(&[50, 100, 200])? {
                let colorings = enumerate_admissible(&s, r);
                let step = 0.5 / (r as f64).sqrt();
                for (i, t) in ts.iter().enumerate() {
                    let theta: Vec<f64> = (0..s.n()).map(|e| 0.7 * (e + 1) as f64 + 0.3 * i as f64).collect();
                    let (u, phi) = if i % 2 == 0 {
                        (t.clone(), theta.clone())
                    } else {
                        (t.iter().map(|v| v + step).collect(), theta.iter().map(|v| v - step).collect())
                    };
                    let ev = model.bergman_compare_with(&colorings, (t, &theta), (&u, &phi))?;
                    rows.push((r, format!("kernel_{i}"), ev.exact.norm(), ev.asymptotic.norm(), ev.relative_error));
                }
            }
            let mut out = String::from("r,quantity,exact,approx,abs_err,rel_err\n");
            for (r, q, e, a, rel) in rows {
                out.push_str(&format!("{r},{q},{e:.16e},{a:.16e},{:.16e},{rel:.16e}\n", rel * a));
            }
            c.emit(&out)
        }
        Command::ToeplitzCheck(c) => {
            let s = c.surface()?;
            let model = KahlerModel::new(&s);
            let profile: Profile = match &c.config {
                Some(path) => serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Config(e.to_string()))?,
                None => {
                    let center = c.x.as_deref().map(|v| parse_list(v, "x")).transpose()?.unwrap_or_else(|| vec![0.4, 0.3, 0.4]);
                    let n = center.len();
                    Profile::Bump { center, radius: vec![0.2; n] }
                }
            };
            let x = c.x.as_deref().map(|v| parse_list::<f64>(v, "x")).transpose()?.unwrap_or_else(|| vec![0.4, 0.3, 0.4]);
            let mut rows = Vec::new();
            for r in c.levels(&[50, 100, 200, 400, 800])? {
                let alpha = quantization::nearest_coloring(&s, r, &x)?;
                for k in [0i32, 1, -1] {
                    let mut kv = vec![0; s.n()];
                    kv[0] = k;
                    let el = toeplitz_matrix_element(&model, &profile, &kv, &alpha, r)?;
                    rows.push((r, format!("k={k}"), el.exact.re, el.expansion.re));
                }
            }
            c.emit(&convergence_csv(&rows))
        }
        Command::SymbolCheck { common: c, curve, theta } => {
            let s = c.surface()?;
            let t = c.x.as_deref().map(|v| parse_list(v, "x")).transpose()?.unwrap_or_else(|| vec![0.4, 0.3, 0.4]);
            let th = theta.as_deref().map(|v| parse_list(v, "theta")).transpose()?.unwrap_or_else(|| vec![0.9; s.n()]);
            let chart = quantization::calibrate_angle_offsets(&s, 24)?;
            let mut out = String::from("r,principal_residual,first_order_residual,subprincipal_residual\n");
            for r in c.levels(&[40, 56, 80, 113, 160, 226, 320])? {
                let smp = curve_symbol(&chart, &curve, r, &t, &th)?;
                out.push_str(&format!(
                    "{r},{:.16e},{:.16e},{:.16e}\n",
                    smp.principal_residual, smp.first_order_residual, smp.subprincipal_residual
                ));
            }
            c.emit(&out)
        }
        Command::SpectrumCheck { common: c, curve } => {
            let s = c.surface()?;
            let curves = match curve {
                Some(name) => vec![name],
                None => curve_names(&s),
            };
            let mut reports = Vec::new();
            for r in c.levels(&(4..=16).collect::<Vec<_>>())? {
                for name in &curves {
                    let op = curve_operator(&s, name, r)?;
                    reports.push(operator_spectrum_check(&s, &op)?);
                }
            }
            let failed = reports.iter().filter(|rep| rep.max_deviation > 1e-10 || !rep.multiplicities_match).count();
            c.emit(&serde_json::to_string_pretty(&reports)?)?;
            if failed > 0 {
                return Err(Error::NonConvergent(format!("{failed} spectra off the expected set")));
            }
            Ok(())
        }
        Command::Intersect(c) => {
            let (a, b) = c.pair()?;
            let chart = quantization::calibrate_angle_offsets(&a, 24)?;
            let x = c.vector(&c.x, "x")?;
            let y = c.vector(&c.y, "y")?;
            let points = intersect_lagrangians(&LagrangianLevelSet::fiber(&chart, &x), &LagrangianLevelSet::implicit(&b, &y))?;
            c.emit(&serde_json::to_string_pretty(&json!({ "x": x, "y": y, "points": points }))?)
        }
        Command::PairExact { common: c, alpha, beta } => {
            let (a, b) = c.pair()?;
            let r = c.level()?;
            let backend = c.backend()?;
            match (alpha, beta) {
                (Some(al), Some(be)) => {
                    let (al, be): (Vec<u32>, Vec<u32>) = (parse_list(&al, "alpha")?, parse_list(&be, "beta")?);
                    let v = exact_pairing(&a, &b, &al, &be, r, backend)?;
                    c.emit(&serde_json::to_string_pretty(&json!({
                        "r": r, "alpha": al, "beta": be, "backend": backend.name(),
                        "re": v.re, "im": v.im, "modulus": v.norm(),
                    }))?)
                }
                (None, None) => c.emit(&pairing_matrix(&a, &b, r, backend)?.to_csv()),
                _ => Err(Error::Config("give both --alpha and --beta, or neither".into())),
            }
        }
        Command::PairPredict { common: c, alpha, beta } => {
            let (a, b) = c.pair()?;
            let chart = quantization::calibrate_angle_offsets(&a, 24)?;
            let r = c.level()?;
            let (al, be) = match (alpha, beta) {
                (Some(al), Some(be)) => (parse_list(&al, "alpha")?, parse_list(&be, "beta")?),
                (None, None) => coloring_sequence(&a, &b, &c.vector(&c.x, "x")?, &c.vector(&c.y, "y")?, r)?,
                _ => return Err(Error::Config("give both --alpha and --beta, or neither".into())),
            };
            let pred = predict_pairing(&chart, &al, &b, &be, r)?;
            c.emit(&serde_json::to_string_pretty(&pred)?)
        }
        Command::Study(c) => {
            let config = match &c.config {
                Some(path) => StudyConfig::from_json(&fs::read_to_string(path)?)?,
                None => {
                    let names: Vec<&str> = c.pair.split(',').map(str::trim).collect();
                    let [fa, fb] = names.as_slice() else {
                        return Err(Error::Config(format!("--pair expects `A,B`, got `{}`", c.pair)));
                    };
                    let out = c.out.clone().ok_or_else(|| Error::Config("--out is required".into()))?;
                    let mut cfg = StudyConfig::new(fa, fb, &c.vector(&c.x, "x")?, &c.vector(&c.y, "y")?, out);
                    cfg.levels = c.levels(&[50, 100, 200])?;
                    cfg.backend = c.backend()?;
                    cfg
                }
            };
            let report = run_study(&config)?;
            print!("{}", report.to_csv());
            println!("slope,{:.16e}", report.slope);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
