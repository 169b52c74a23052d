//! TOML configuration: schema, validation and model construction.

use crate::error::CliError;
use hillkit_core::continuous::hill::LADDER;
use hillkit_core::continuous::{ContinuousSystem, MatrixFunction};
use hillkit_core::dls::{NewtonOptions, PeriodicOrbit, Point, Step};
use hillkit_core::linalg::C64;
use hillkit_core::models::{Billiard, StandardMap, TrigPotential, TrigTerm};
use hillkit_core::reversible::InvolutionSpec;
use hillkit_core::routh::SymmetrySpec;
use hillkit_core::DiscreteLagrangian;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub orbit: Option<OrbitConfig>,
    pub symmetry: Option<SymmetryConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// `L = ½<B(x - y), x - y> - ½(V(x) + V(y))`; `k` adds `K cos x_0` to `V`.
    StandardMap {
        k: Option<f64>,
        kinetic: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        potential: Vec<TermConfig>,
    },
    Circle {
        radius: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    Ellipsoid {
        a: f64,
        b: f64,
        c: f64,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
    TwoDisks {
        radius: f64,
        separation: f64,
    },
    /// `D²ξ = Uξ` with `D = d/dt + W`.
    Continuous {
        tau: Option<f64>,
        #[serde(default = "one")]
        dim: usize,
        omega: Option<f64>,
        potential: FourierConfig,
        connection: Option<FourierConfig>,
        gluing: Option<Vec<Vec<f64>>>,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub wave: Vec<f64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// A scalar (for `dim = 1`) or a square matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixEntry {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

/// `Σ_k cos[k] cos(kωt) + sin[k] sin(kωt)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierConfig {
    #[serde(default)]
    pub cos: Vec<MatrixEntry>,
    #[serde(default)]
    pub sin: Vec<MatrixEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub points: Option<Vec<Vec<f64>>>,
    pub charts: Option<Vec<usize>>,
    /// Repeats a single guess point this many times.
    pub period: Option<usize>,
    /// Guess for the first half of a reversible orbit.
    pub half: Option<Vec<Vec<f64>>>,
    pub half_charts: Option<Vec<usize>>,
    pub reversible: Option<ReversibleConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "involution", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReversibleConfig {
    Identity {
        #[serde(rename = "type")]
        orbit_type: Option<usize>,
    },
    Negation {
        #[serde(rename = "type")]
        orbit_type: Option<usize>,
    },
    Linear {
        matrix: Vec<Vec<f64>>,
        #[serde(rename = "type")]
        orbit_type: Option<usize>,
    },
    /// Billiards: reflection of the table in the hyperplane through the
    /// origin with the given normal.
    Mirror {
        normal: Vec<f64>,
        #[serde(rename = "type")]
        orbit_type: Option<usize>,
    },
}

impl ReversibleConfig {
    pub fn orbit_type(&self) -> Option<usize> {
        match self {
            ReversibleConfig::Identity { orbit_type }
            | ReversibleConfig::Negation { orbit_type }
            | ReversibleConfig::Linear { orbit_type, .. }
            | ReversibleConfig::Mirror { orbit_type, .. } => *orbit_type,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReversibleConfig::Identity { .. } => "identity",
            ReversibleConfig::Negation { .. } => "negation",
            ReversibleConfig::Linear { .. } => "linear",
            ReversibleConfig::Mirror { .. } => "mirror",
        }
    }
}

/// Translations of chart coordinates that leave the Lagrangian invariant.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryConfig {
    pub cyclic: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Number of equally spaced unit-circle points.
    pub rho_grid: usize,
    pub real_rho: Vec<f64>,
    /// Explicit `[re, im]` list; replaces the generated grid.
    pub rho: Option<Vec<[f64; 2]>>,
    pub ladder: Vec<usize>,
    pub newton_tolerance: f64,
    pub max_iterations: usize,
    pub hill_tolerance: f64,
    pub routh_tolerance: f64,
    pub orthogonality_tolerance: f64,
    pub split_tolerance: f64,
    pub form_tolerance: f64,
    pub continuous_tolerance: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            rho_grid: 64,
            real_rho: vec![0.5, -0.5, 2.0, -2.0, 1.0, -1.0],
            rho: None,
            ladder: LADDER.to_vec(),
            newton_tolerance: 1e-12,
            max_iterations: 60,
            hill_tolerance: 1e-8,
            routh_tolerance: 1e-8,
            orthogonality_tolerance: 1e-9,
            split_tolerance: 1e-8,
            form_tolerance: 1e-10,
            continuous_tolerance: 1e-6,
        }
    }
}

impl AnalysisConfig {
    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions { tolerance: self.newton_tolerance, max_iterations: self.max_iterations, ..NewtonOptions::default() }
    }

    /// Unit-circle points `e^{2πij/N}` followed by the real values not
    /// already on the grid.
    pub fn grid(&self) -> Vec<C64> {
        if let Some(list) = &self.rho {
            return list.iter().map(|z| C64::new(z[0], z[1])).collect();
        }
        let n = self.rho_grid;
        let mut g: Vec<C64> = (0..n).map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64)).collect();
        for &r in &self.real_rho {
            let z = C64::new(r, 0.0);
            if !g.iter().any(|w| (w - z).norm() <= 1e-15) {
                g.push(z);
            }
        }
        g
    }

    fn validate(&self) -> Result<(), CliError> {
        let grid = self.grid();
        if grid.is_empty() {
            return Err(CliError::config("analysis: empty rho grid"));
        }
        if grid.iter().any(|z| z.norm() == 0.0 || !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CliError::config("analysis: rho values must be finite and nonzero"));
        }
        if self.ladder.is_empty() || self.ladder.contains(&0) {
            return Err(CliError::config("analysis: ladder must list positive orders"));
        }
        if self.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::config("analysis: ladder must be increasing"));
        }
        let tols = [
            self.newton_tolerance,
            self.hill_tolerance,
            self.routh_tolerance,
            self.orthogonality_tolerance,
            self.split_tolerance,
            self.form_tolerance,
            self.continuous_tolerance,
        ];
        if tols.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(CliError::config("analysis: tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub orbit: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

/// A built model.
pub enum Model {
    Discrete { lagrangian: Arc<dyn DiscreteLagrangian>, billiard: Option<Billiard> },
    Continuous(ContinuousSystem),
}

impl ModelConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::StandardMap { .. } => "standard_map",
            ModelConfig::Circle { .. } => "circle",
            ModelConfig::Ellipse { .. } => "ellipse",
            ModelConfig::Ellipsoid { .. } => "ellipsoid",
            ModelConfig::Polygon { .. } => "polygon",
            ModelConfig::TwoDisks { .. } => "two_disks",
            ModelConfig::Continuous { .. } => "continuous",
        }
    }

    pub fn build(&self) -> Result<Model, CliError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::config(format!("model: {name} must be positive")))
            }
        };
        let billiard = |b: Billiard| Model::Discrete { lagrangian: Arc::new(b.clone()), billiard: Some(b) };
        Ok(match self {
            ModelConfig::StandardMap { k, kinetic, potential } => {
                let m = kinetic
                    .as_ref()
                    .map(|rows| rows.len())
                    .or_else(|| potential.first().map(|t| t.wave.len()))
                    .unwrap_or(1);
                if m == 0 {
                    return Err(CliError::config("model: dimension must be positive"));
                }
                let b = match kinetic {
                    Some(rows) => square(rows, m, "model.kinetic")?,
                    None => DMatrix::identity(m, m),
                };
                let mut terms: Vec<TrigTerm> =
                    potential.iter().map(|t| TrigTerm { wave: t.wave.clone(), cos: t.cos, sin: t.sin }).collect();
                if let Some(k) = k {
                    terms.extend(TrigPotential::cosine(m, 0, *k).terms);
                }
                let l = StandardMap::new(b, TrigPotential { terms })?;
                Model::Discrete { lagrangian: Arc::new(l), billiard: None }
            }
            ModelConfig::Circle { radius } => billiard(Billiard::circle(positive("radius", *radius)?)),
            ModelConfig::Ellipse { a, b } => billiard(Billiard::ellipse(positive("a", *a)?, positive("b", *b)?)),
            ModelConfig::Ellipsoid { a, b, c } => {
                billiard(Billiard::ellipsoid(positive("a", *a)?, positive("b", *b)?, positive("c", *c)?))
            }
            ModelConfig::Polygon { vertices } => billiard(Billiard::polygon(vertices)?),
            ModelConfig::TwoDisks { radius, separation } => billiard(Billiard::two_disks(positive("radius", *radius)?, *separation)?),
            ModelConfig::Continuous { tau, dim, omega, potential, connection, gluing } => {
                let tau = positive("tau", tau.unwrap_or(2.0 * PI))?;
                let omega = omega.unwrap_or(2.0 * PI / tau);
                let m = *dim;
                if m == 0 {
                    return Err(CliError::config("model: dimension must be positive"));
                }
                let u = fourier(potential, m, omega, "model.potential")?;
                let w = match connection {
                    Some(c) => fourier(c, m, omega, "model.connection")?,
                    None => MatrixFunction::zeros(m),
                };
                let sys = match gluing {
                    Some(g) => ContinuousSystem::with_gluing(tau, w, u, square(g, m, "model.gluing")?)?,
                    None => ContinuousSystem::new(tau, w, u)?,
                };
                Model::Continuous(sys)
            }
        })
    }
}

fn square(rows: &[Vec<f64>], m: usize, what: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(CliError::config(format!("{what}: expected a {m}x{m} matrix")));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

fn entry(e: &MatrixEntry, m: usize, what: &str) -> Result<DMatrix<f64>, CliError> {
    match e {
        MatrixEntry::Scalar(x) if m == 1 => Ok(DMatrix::from_element(1, 1, *x)),
        MatrixEntry::Scalar(_) => Err(CliError::config(format!("{what}: scalar coefficients need dim = 1"))),
        MatrixEntry::Matrix(rows) => square(rows, m, what),
    }
}

fn fourier(f: &FourierConfig, m: usize, omega: f64, what: &str) -> Result<MatrixFunction, CliError> {
    let mut cos: Vec<DMatrix<f64>> = f.cos.iter().map(|e| entry(e, m, what)).collect::<Result<_, _>>()?;
    let sin: Vec<DMatrix<f64>> = f.sin.iter().map(|e| entry(e, m, what)).collect::<Result<_, _>>()?;
    if cos.is_empty() {
        cos.push(DMatrix::zeros(m, m));
    }
    while cos.len() < sin.len() {
        cos.push(DMatrix::zeros(m, m));
    }
    if cos.len() == 1 && sin.iter().all(|s| s.amax() == 0.0) {
        return Ok(MatrixFunction::Constant(cos.swap_remove(0)));
    }
    Ok(MatrixFunction::Trig { omega, cos, sin })
}

impl OrbitConfig {
    /// Guess orbit from `points`, repeated to `period` when a single point is
    /// given.
    pub fn guess(&self, m: usize) -> Result<Option<PeriodicOrbit>, CliError> {
        let Some(points) = &self.points else {
            return Ok(None);
        };
        let mut pts = points_of(points, m, "orbit.points")?;
        let mut charts = self.charts.clone().unwrap_or_else(|| vec![0; pts.len()]);
        if let Some(p) = self.period {
            if pts.len() == 1 && p > 1 {
                pts = vec![pts[0].clone(); p];
                charts = vec![charts.first().copied().unwrap_or(0); p];
            } else if p != pts.len() {
                return Err(CliError::config("orbit: period does not match the number of points"));
            }
        }
        if charts.len() != pts.len() {
            return Err(CliError::config("orbit: charts and points differ in length"));
        }
        if pts.is_empty() {
            return Err(CliError::config("orbit: no points"));
        }
        Ok(Some(PeriodicOrbit::with_charts(pts, charts)))
    }

    pub fn half_guess(&self, m: usize) -> Result<Option<(Vec<Point>, Vec<usize>)>, CliError> {
        let Some(half) = &self.half else {
            return Ok(None);
        };
        let pts = points_of(half, m, "orbit.half")?;
        let charts = self.half_charts.clone().unwrap_or_else(|| vec![0; pts.len()]);
        if charts.len() != pts.len() || pts.is_empty() {
            return Err(CliError::config("orbit: half_charts and half differ in length"));
        }
        Ok(Some((pts, charts)))
    }
}

pub fn points_of(rows: &[Vec<f64>], m: usize, what: &str) -> Result<Vec<Point>, CliError> {
    rows.iter()
        .map(|r| {
            if r.len() != m {
                return Err(CliError::config(format!("{what}: points must have {m} coordinates")));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(CliError::config(format!("{what}: non-finite coordinate")));
            }
            Ok(DVector::from_column_slice(r))
        })
        .collect()
}

impl ReversibleConfig {
    pub fn build(&self, m: usize, billiard: Option<&Billiard>) -> Result<InvolutionSpec, CliError> {
        Ok(match self {
            ReversibleConfig::Identity { .. } => InvolutionSpec::identity(m),
            ReversibleConfig::Negation { .. } => InvolutionSpec::negation(m),
            ReversibleConfig::Linear { matrix, .. } => InvolutionSpec::linear(square(matrix, m, "orbit.reversible.matrix")?)?,
            ReversibleConfig::Mirror { normal, .. } => {
                let b = billiard.ok_or_else(|| CliError::config("orbit.reversible: mirror involutions need a billiard model"))?;
                InvolutionSpec::billiard_reflection(b, normal)?
            }
        })
    }
}

impl SymmetryConfig {
    pub fn build(&self, m: usize) -> Result<SymmetrySpec, CliError> {
        Ok(SymmetrySpec::cyclic(m, &self.cyclic)?)
    }

    /// Checks invariance of the Lagrangian on the steps of `orbit`.
    pub fn check(&self, spec: &SymmetrySpec, l: &dyn DiscreteLagrangian, orbit: &PeriodicOrbit) -> Result<(), CliError> {
        let samples: Vec<(Step, Point, Point)> =
            (0..orbit.n()).map(|i| (orbit.step(i), orbit.points[i].clone(), orbit.points[(i + 1) % orbit.n()].clone())).collect();
        spec.check(l, &samples).map_err(|e| CliError::config(format!("symmetry: {e}")))
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::config(format!("invalid configuration: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.analysis.validate()?;
        let continuous = matches!(cfg.model, ModelConfig::Continuous { .. });
        if continuous && (cfg.orbit.is_some() || cfg.symmetry.is_some()) {
            return Err(CliError::config("continuous models take no orbit or symmetry block"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Config, PathBuf), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Config::parse(&text)?, base))
    }
}
