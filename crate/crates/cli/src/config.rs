//! Run configuration (TOML) and its validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gradflow::comparison::CutoffProfile;
use gradflow::field::{Grid, GridMode};
use gradflow::potential::BuiltinPotential;
use gradflow::solver::{Scheme, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub potential: PotentialConfig,
    pub grid: GridConfig,
    pub solver: SolverSection,
    pub initial_condition: InitialCondition,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// quadratic | balanced-bistable | tilted-bistable | vector-double-well
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Starting point of the Newton search for the far-field minimum m.
    pub minimum_guess: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub mode: GridMode,
    pub d: usize,
    pub extent: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    pub scheme: Scheme,
    pub t_end: f64,
    /// Steps between retained snapshots.
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// u = m + A·exp(−|x|²/(2σ²)).
    GaussianBump { amplitude: Vec<f64>, sigma: f64 },
    /// u = m + (target − m)·½(1 − tanh((|x| − radius)/width)), plus an
    /// optional Gaussian perturbation.
    PlateauBump {
        target: Vec<f64>,
        radius: f64,
        width: f64,
        #[serde(default)]
        perturbation: Option<Perturbation>,
    },
    /// u ≡ value (the boundary is still clamped to m).
    Constant { value: Vec<f64> },
    /// Radial CSV snapshot (columns r,u1..un), linearly interpolated.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub amplitude: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Probe radii for the ℱ₀ monitors; empty means the default panel.
    pub probes: Vec<f64>,
    /// Ball speeds c for ℰ_c, 𝒟_c, ℬ_c.
    pub c_list: Vec<f64>,
    /// Ball speed used for the asymptotic energy.
    pub energy_ball_speed: f64,
    /// Speed of the homogeneous band, enters c_cut = min(…, c_hom/2).
    pub c_hom: f64,
    /// Frame speed of the traveling functionals; negative means the largest
    /// speed allowed by the frame conditions.
    pub frame_speed: f64,
    /// Speed c of the outer region |x| ≥ ct for sup|u − m| and sup|u_t|;
    /// negative means max(energy_ball_speed, 2·c_inv).
    pub beyond_speed: f64,
    /// Trailing fraction of the run used by the invasion-speed fit.
    pub fit_fraction: f64,
    pub accept_tol: f64,
    pub ut_tol: f64,
    /// Evaluate the expensive monitors on every k-th snapshot.
    pub monitor_every: usize,
    pub cutoff: CutoffProfile,
    /// Speeds (c1, c2) for the exponential firewall fit; skipped when absent.
    pub firewall_fit: Option<[f64; 2]>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            probes: Vec::new(),
            c_list: vec![0.0, 0.25],
            energy_ball_speed: 0.25,
            c_hom: 1.0,
            frame_speed: -1.0,
            beyond_speed: -1.0,
            fit_fraction: 0.5,
            accept_tol: 5e-3,
            ut_tol: 1e-4,
            monitor_every: 1,
            cutoff: CutoffProfile::Smoothstep,
            firewall_fit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Subset of ["csv", "json"].
    pub formats: Vec<String>,
    /// Number of evenly spaced field snapshots written.
    pub snapshots: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: PathBuf::from("output"), formats: vec!["csv".into(), "json".into()], snapshots: 11 }
    }
}

fn param(p: &BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64, CliError> {
    match (p.get(key), default) {
        (Some(v), _) => Ok(*v),
        (None, Some(d)) => Ok(d),
        (None, None) => Err(CliError::Config(format!("potential parameter '{key}' is required"))),
    }
}

fn dim_param(p: &BTreeMap<String, f64>, default: f64) -> Result<usize, CliError> {
    let n = param(p, "n", Some(default))?;
    if n < 1.0 || n.fract() != 0.0 || n > 16.0 {
        return Err(CliError::Config(format!("potential parameter n = {n} must be an integer in 1..=16")));
    }
    Ok(n as usize)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let InitialCondition::File { path: p } = &mut cfg.initial_condition {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn builtin_potential(&self) -> Result<BuiltinPotential, CliError> {
        let p = &self.potential.params;
        let known: &[&str] = match self.potential.kind.as_str() {
            "quadratic" => &["n"],
            "balanced-bistable" => &[],
            "tilted-bistable" => &["a"],
            "vector-double-well" => &["n", "a", "b"],
            other => return Err(CliError::Config(format!("unknown potential kind '{other}'"))),
        };
        if let Some(k) = p.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown parameter '{k}' for potential '{}'", self.potential.kind)));
        }
        Ok(match self.potential.kind.as_str() {
            "quadratic" => BuiltinPotential::Quadratic { n: dim_param(p, 1.0)? },
            "balanced-bistable" => BuiltinPotential::BalancedBistable,
            "tilted-bistable" => BuiltinPotential::TiltedBistable { a: param(p, "a", None)? },
            _ => {
                let n = dim_param(p, 2.0)?;
                if n < 2 {
                    return Err(CliError::Config("vector-double-well needs n >= 2".into()));
                }
                BuiltinPotential::VectorDoubleWell { n, a: param(p, "a", Some(0.0))?, b: param(p, "b", Some(0.0))? }
            }
        })
    }

    pub fn state_dim(&self) -> Result<usize, CliError> {
        use gradflow::potential::Potential;
        Ok(self.builtin_potential()?.state_dim())
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.grid.mode, self.grid.d, self.grid.extent, self.grid.n).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            dt: self.solver.dt,
            scheme: self.solver.scheme,
            t_end: self.solver.t_end,
            snapshot_stride: self.solver.stride,
        }
    }

    /// Check every numeric range and cross-field constraint before compute.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("run name '{}' must be non-empty and contain no path separators", self.name));
        }
        let n = self.state_dim()?;
        if self.potential.minimum_guess.len() != n {
            return bad(format!("minimum_guess has {} components, potential has {n}", self.potential.minimum_guess.len()));
        }
        if self.potential.minimum_guess.iter().any(|v| !v.is_finite()) {
            return bad("minimum_guess must be finite".into());
        }
        let grid = self.grid()?;
        if grid.mode == GridMode::Cartesian && grid.num_points() > 4_000_000 {
            return bad(format!("Cartesian grid with {} points is too large", grid.num_points()));
        }
        self.solver_config().validate(&grid).map_err(|e| CliError::Config(e.to_string()))?;
        match &self.initial_condition {
            InitialCondition::GaussianBump { amplitude, sigma } => {
                if amplitude.len() != n || !(*sigma > 0.0) {
                    return bad("gaussian_bump needs amplitude with n components and sigma > 0".into());
                }
            }
            InitialCondition::PlateauBump { target, radius, width, perturbation } => {
                if target.len() != n || !(*radius >= 0.0) || !(*width > 0.0) {
                    return bad("plateau_bump needs target with n components, radius >= 0, width > 0".into());
                }
                if let Some(pt) = perturbation {
                    if pt.amplitude.len() != n || !(pt.sigma > 0.0) {
                        return bad("perturbation needs amplitude with n components and sigma > 0".into());
                    }
                }
            }
            InitialCondition::Constant { value } => {
                if value.len() != n {
                    return bad("constant needs value with n components".into());
                }
            }
            InitialCondition::File { .. } => {
                if grid.mode != GridMode::Radial {
                    return bad("file initial conditions are supported on radial grids only".into());
                }
            }
        }
        let dg = &self.diagnostics;
        if dg.c_list.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return bad("c_list entries must be nonnegative".into());
        }
        if !(dg.energy_ball_speed > 0.0) || !(dg.c_hom > 0.0) {
            return bad("energy_ball_speed and c_hom must be positive".into());
        }
        if !dg.beyond_speed.is_finite() || dg.beyond_speed == 0.0 {
            return bad("beyond_speed must be positive, or negative for the automatic choice".into());
        }
        if dg.probes.iter().any(|r| !(*r >= 0.0 && *r <= grid.max_radius())) {
            return bad(format!("probe radii must lie in [0, {}]", grid.max_radius()));
        }
        if !(dg.fit_fraction > 0.0 && dg.fit_fraction <= 1.0) {
            return bad(format!("fit_fraction = {} must lie in (0, 1]", dg.fit_fraction));
        }
        if !(dg.accept_tol > 0.0 && dg.ut_tol > 0.0) || dg.monitor_every == 0 {
            return bad("accept_tol, ut_tol and monitor_every must be positive".into());
        }
        if let Some([c1, c2]) = dg.firewall_fit {
            if !(c1 >= 0.0 && c2 > c1) {
                return bad(format!("firewall_fit needs 0 <= c1 < c2, got [{c1}, {c2}]"));
            }
        }
        if let Some(f) = self.output.formats.iter().find(|f| !matches!(f.as_str(), "csv" | "json")) {
            return bad(format!("unknown output format '{f}'"));
        }
        Ok(())
    }
}
