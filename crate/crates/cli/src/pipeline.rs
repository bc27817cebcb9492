//! simulate → functionals → monitors → verdict.

use gradflow::comparison::{
    c_noesc, escape_radius_initial, sandwich_monitor, supersolution_residual, NBar, NoEscapeSpeed, SandwichReport,
    SupersolutionParams, SupersolutionResidual,
};
use gradflow::diagnostics::{
    derivative_decay, dichotomy_verdict, dissipation_integrability, escape_track, hom_flags, invasion_speed_fit,
    DerivativeDecay, DichotomyReport, EscapeTrack, HomFlags, HomParams, RegionLaw, Verdict, VerdictTolerances,
};
use gradflow::energy::{
    asymptotic_energy_estimate, boundary_flux, boundary_term, dissipation_ball, dissipation_plain, energy_ball,
    energy_plain, FunctionalSeries, SeriesParams,
};
use gradflow::field::{FieldState, Grid};
use gradflow::firewall::{
    calibrate_escape_threshold, energy_firewall_monitor, firewall0_coercivity, firewall_constants,
    firewall_decay_monitor, firewall_exponential_fit, firewall_traveling, probe_panel, traveling_decay_monitor,
    ExpFit, Firewall0Kernel, FirewallConstants, MonitorReport,
};
use gradflow::potential::{
    coercivity_scan, default_sampling_radius, find_all_minima, find_minimum, CoercivityConstants, MinimumPoint,
    PotentialSpec,
};
use gradflow::solver::{
    max_principle_monitor, qbar_bound, simulate, time_derivative, Snapshot, SolverConfig, Trajectory, MP_TOLERANCE,
};
use gradflow::weights::WeightParams;
use gradflow::comparison::CutoffProfile;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{InitialCondition, RunConfig};
use crate::error::CliError;

/// Tolerance of the sandwich check q† ≤ η̄.
pub const SANDWICH_TOL: f64 = 1e-8;
/// Samples per axis of the supersolution residual grid.
pub const RESIDUAL_SAMPLES: usize = 200;

/// Potential, far-field minimum and every constant derived from them and
/// the initial condition.
#[derive(Clone)]
pub struct Setup {
    pub spec: PotentialSpec,
    pub m: MinimumPoint,
    pub minima: Vec<MinimumPoint>,
    pub coercivity: CoercivityConstants,
    pub grid: Grid,
    pub initial: FieldState,
    pub firewall: FirewallConstants,
    pub supersolution: SupersolutionParams,
    pub nbar: NBar,
    pub supersolution_att: SupersolutionParams,
    pub nbar_att: NBar,
    pub constants: Constants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub potential: String,
    pub m: Vec<f64>,
    pub v_at_m: f64,
    pub lambda_min: f64,
    pub d_esc: f64,
    pub minima: Vec<Vec<f64>>,
    pub sampling_radius: f64,
    pub eps_coerc: f64,
    pub k_coerc: f64,
    pub q_low_hull: f64,
    pub w_en: f64,
    pub r_att: f64,
    pub q0: f64,
    pub r_max_infty: f64,
    pub kappa0: f64,
    pub nu_f0: f64,
    pub k_f0: f64,
    pub kappa: f64,
    pub c_cut: f64,
    pub nu_f: f64,
    pub k_f: f64,
    pub k_ef: f64,
    pub frame_speed: f64,
    pub c_noesc: NoEscapeSpeed,
    pub c_noesc_linear: NoEscapeSpeed,
    pub c_noesc_att: NoEscapeSpeed,
    pub supersolution: SupersolutionParams,
    pub cfl_limit: f64,
}

impl Constants {
    /// Rows of the printed constants table.
    pub fn table(&self) -> Vec<(&'static str, String)> {
        let v = |x: f64| format!("{x:.10e}");
        vec![
            ("potential", self.potential.clone()),
            ("m", format!("{:?}", self.m)),
            ("lambda_min", v(self.lambda_min)),
            ("d_Esc", v(self.d_esc)),
            ("q_low_hull", v(self.q_low_hull)),
            ("w_en", v(self.w_en)),
            ("eps_coerc", v(self.eps_coerc)),
            ("K_coerc", v(self.k_coerc)),
            ("R_att", v(self.r_att)),
            ("r_max_infty", v(self.r_max_infty)),
            ("kappa0", v(self.kappa0)),
            ("nu_F0", v(self.nu_f0)),
            ("K_F0", v(self.k_f0)),
            ("kappa", v(self.kappa)),
            ("c_cut", v(self.c_cut)),
            ("nu_F", v(self.nu_f)),
            ("K_EF", v(self.k_ef)),
            ("c_noesc", v(self.c_noesc.value)),
            ("c_noesc (linear cutoff)", v(self.c_noesc_linear.value)),
            ("c_noesc^att", v(self.c_noesc_att.value)),
        ]
    }
}

fn read_radial_csv(path: &std::path::Path, n: usize) -> Result<Vec<(f64, Vec<f64>)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(format!("{} line {}: {e}", path.display(), k + 1)))?;
        if vals.len() != n + 1 {
            return Err(CliError::Config(format!("{} line {}: expected {} columns", path.display(), k + 1, n + 1)));
        }
        rows.push((vals[0], vals[1..].to_vec()));
    }
    if rows.len() < 2 || rows.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(CliError::Config(format!("{}: need at least two rows with increasing r", path.display())));
    }
    Ok(rows)
}

fn interpolate_rows(rows: &[(f64, Vec<f64>)], r: f64) -> Vec<f64> {
    if r <= rows[0].0 {
        return rows[0].1.clone();
    }
    let last = rows.len() - 1;
    if r >= rows[last].0 {
        return rows[last].1.clone();
    }
    let k = rows.partition_point(|row| row.0 <= r) - 1;
    let (r0, a) = (&rows[k].0, &rows[k].1);
    let (r1, b) = (&rows[k + 1].0, &rows[k + 1].1);
    let s = (r - r0) / (r1 - r0);
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

pub fn initial_state(cfg: &RunConfig, grid: Grid, m: &[f64]) -> Result<FieldState, CliError> {
    let radius = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let state = match &cfg.initial_condition {
        InitialCondition::GaussianBump { amplitude, sigma } => FieldState::from_fn(grid, m, |x| {
            let g = (-radius(x).powi(2) / (2.0 * sigma * sigma)).exp();
            m.iter().zip(amplitude).map(|(a, b)| a + b * g).collect()
        })?,
        InitialCondition::PlateauBump { target, radius: r0, width, perturbation } => FieldState::from_fn(grid, m, |x| {
            let r = radius(x);
            let s = 0.5 * (1.0 - ((r - r0) / width).tanh());
            let mut u: Vec<f64> = m.iter().zip(target).map(|(a, b)| a + (b - a) * s).collect();
            if let Some(pt) = perturbation {
                let g = (-r * r / (2.0 * pt.sigma * pt.sigma)).exp();
                u.iter_mut().zip(&pt.amplitude).for_each(|(u, a)| *u += a * g);
            }
            u
        })?,
        InitialCondition::Constant { value } => FieldState::from_fn(grid, m, |_| value.clone())?,
        InitialCondition::File { path } => {
            let rows = read_radial_csv(path, m.len())?;
            FieldState::from_fn(grid, m, |x| interpolate_rows(&rows, radius(x)))?
        }
    };
    Ok(state)
}

/// Largest frame speed allowed by |c| ≤ √λ/4, |c| ≤ κ/20, |c| ≤ c_cut/6,
/// with a 1% margin.
pub fn max_frame_speed(fc: &FirewallConstants) -> f64 {
    0.99 * (fc.lambda_min.sqrt() / 4.0).min(fc.kappa / 20.0).min(fc.c_cut / 6.0)
}

fn no_escape(
    spec: &PotentialSpec,
    m: &MinimumPoint,
    r_bound: f64,
    r_esc_init: f64,
    profile: CutoffProfile,
) -> Result<(SupersolutionParams, NBar, NoEscapeSpeed), CliError> {
    let mut params = SupersolutionParams::new(spec, m, r_bound)?;
    params.r_esc_init = r_esc_init;
    let nbar = NBar::new(spec, m, params.r_switch, profile);
    let speed = c_noesc(&params, &nbar)?;
    params.c = speed.value;
    Ok((params, nbar, speed))
}

/// Everything computable without time stepping.
pub fn prepare(cfg: &RunConfig) -> Result<Setup, CliError> {
    cfg.validate()?;
    let builtin = cfg.builtin_potential()?;
    let guess = &cfg.potential.minimum_guess;
    let provisional = PotentialSpec::builtin(builtin)
        .with_sampling_radius(4.0 * guess.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0));
    let minima = find_all_minima(&provisional)?;
    let spec = PotentialSpec::builtin(builtin).with_sampling_radius(default_sampling_radius(&minima));
    let m = find_minimum(&spec, guess)?;
    let minima = find_all_minima(&spec)?;
    log::info!("far-field minimum m = {:?}, lambda_min = {}, d_Esc = {}", m.m, m.lambda_min, m.escape_distance);
    let coercivity = coercivity_scan(&spec, &minima)?;
    let grid = cfg.grid()?;
    let initial = initial_state(cfg, grid, &m.m)?;
    let q0 = gradflow::solver::sup_half_square(&initial);
    let r_max_infty = (2.0 * q0.max(coercivity.k_coerc / (2.0 * coercivity.eps_coerc))).sqrt();
    let firewall = firewall_constants(&spec, &m, coercivity.w_en, r_max_infty, grid.space_dim, cfg.diagnostics.c_hom)?;
    let probe = SupersolutionParams::new(&spec, &m, r_max_infty)?;
    let r_esc_init = escape_radius_initial(&initial, &m, probe.delta_prime);
    let profile = cfg.diagnostics.cutoff;
    let (supersolution, nbar, speed) = no_escape(&spec, &m, r_max_infty, r_esc_init, profile)?;
    let other = match profile {
        CutoffProfile::Smoothstep => CutoffProfile::Linear,
        CutoffProfile::Linear => CutoffProfile::Smoothstep,
    };
    let (_, _, speed_other) = no_escape(&spec, &m, r_max_infty, r_esc_init, other)?;
    let (speed_smooth, speed_linear) = match profile {
        CutoffProfile::Smoothstep => (speed, speed_other),
        CutoffProfile::Linear => (speed_other, speed),
    };
    let (supersolution_att, nbar_att, speed_att) = no_escape(&spec, &m, coercivity.r_att(), r_esc_init, profile)?;
    let frame_speed =
        if cfg.diagnostics.frame_speed < 0.0 { max_frame_speed(&firewall) } else { cfg.diagnostics.frame_speed };
    let constants = Constants {
        potential: spec.label(),
        m: m.m.clone(),
        v_at_m: m.v_at_m,
        lambda_min: m.lambda_min,
        d_esc: m.escape_distance,
        minima: minima.iter().map(|x| x.m.clone()).collect(),
        sampling_radius: spec.sampling_radius(),
        eps_coerc: coercivity.eps_coerc,
        k_coerc: coercivity.k_coerc,
        q_low_hull: coercivity.q_low_hull,
        w_en: coercivity.w_en,
        r_att: coercivity.r_att(),
        q0,
        r_max_infty,
        kappa0: firewall.kappa0,
        nu_f0: firewall.nu_f0,
        k_f0: firewall.k_f0,
        kappa: firewall.kappa,
        c_cut: firewall.c_cut,
        nu_f: firewall.nu_f,
        k_f: firewall.k_f,
        k_ef: firewall.k_ef,
        frame_speed,
        c_noesc: speed_smooth,
        c_noesc_linear: speed_linear,
        c_noesc_att: speed_att,
        supersolution,
        cfl_limit: SolverConfig::cfl_limit(&grid),
    };
    Ok(Setup {
        spec,
        m,
        minima,
        coercivity,
        grid,
        initial,
        firewall,
        supersolution,
        nbar,
        supersolution_att,
        nbar_att,
        constants,
    })
}

/// Residuals of the ball balance at one ball speed c, evaluated at every
/// snapshot whose ball B(ct) stays inside the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceSeries {
    pub c: f64,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub energy_rate: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub boundary: Vec<f64>,
    pub flux: Vec<f64>,
    /// ℰ_c' + 𝒟_c − cℬ_c.
    pub residual: Vec<f64>,
    /// ℰ_c' + 𝒟_c − cℬ_c − Φ_c.
    pub corrected: Vec<f64>,
}

impl BalanceSeries {
    pub fn max_abs_corrected(&self) -> f64 {
        self.corrected.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

struct BalanceRow {
    time: f64,
    energy: f64,
    rate: f64,
    dissipation: f64,
    boundary: f64,
    flux: f64,
}

fn balance_row(snap: &Snapshot, p: &PotentialSpec, m: &MinimumPoint, c: f64) -> Option<BalanceRow> {
    let (b, a) = (snap.before.as_ref()?, snap.after.as_ref()?);
    let s = &snap.state;
    let limit = s.grid.max_radius();
    if c * a.time > limit {
        return None;
    }
    let rate = (energy_ball(a, p, m, c * a.time).ok()? - energy_ball(b, p, m, c * b.time).ok()?) / (a.time - b.time);
    let r = c * s.time;
    Some(BalanceRow {
        time: s.time,
        energy: energy_ball(s, p, m, r).ok()?,
        rate,
        dissipation: dissipation_ball(s, p, r).ok()?,
        boundary: boundary_term(s, p, m, r).ok()?,
        flux: boundary_flux(s, p, r).ok()?,
    })
}

pub fn balance_series(traj: &Trajectory, p: &PotentialSpec, m: &MinimumPoint, c: f64) -> BalanceSeries {
    let rows: Vec<BalanceRow> = traj.snapshots.par_iter().filter_map(|s| balance_row(s, p, m, c)).collect();
    let mut out = BalanceSeries {
        c,
        times: vec![],
        energy: vec![],
        energy_rate: vec![],
        dissipation: vec![],
        boundary: vec![],
        flux: vec![],
        residual: vec![],
        corrected: vec![],
    };
    for r in rows {
        let res = r.rate + r.dissipation - c * r.boundary;
        out.times.push(r.time);
        out.energy.push(r.energy);
        out.energy_rate.push(r.rate);
        out.dissipation.push(r.dissipation);
        out.boundary.push(r.boundary);
        out.flux.push(r.flux);
        out.residual.push(res);
        out.corrected.push(res - r.flux);
    }
    out
}

/// Per-snapshot ℰ_c(t) over the whole run (radii clipped to the domain are
/// dropped).
pub fn ball_energy_series(traj: &Trajectory, p: &PotentialSpec, m: &MinimumPoint, c: f64) -> FunctionalSeries {
    let pairs: Vec<(f64, f64)> = traj
        .snapshots
        .par_iter()
        .filter_map(|snap| {
            let s = &snap.state;
            energy_ball(s, p, m, c * s.time).ok().map(|e| (s.time, e))
        })
        .collect();
    let (times, values) = pairs.into_iter().unzip();
    FunctionalSeries::new(format!("ball_energy_c{c}"), times, values, SeriesParams::Ball { speed: c })
        .expect("snapshot times increase")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    /// min over snapshots and probes of ℱ₀ − floor.
    pub min_margin: f64,
    /// min over snapshots and probes of ℱ₀.
    pub min_firewall0: f64,
    /// min over snapshots of the traveling firewall ℱ.
    pub min_traveling: f64,
    /// Largest |ℱ₀| seen, scale for the quadrature tolerance.
    pub max_firewall0: f64,
    /// ℱ₀ level below which no probe point escaped (None if none escaped).
    pub calibrated_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleSummary {
    pub max_excess: f64,
    pub violated: bool,
    pub snapshots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub name: String,
    pub max_residual: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub constants: Constants,
    pub steps: usize,
    pub snapshots: usize,
    pub verdict: Verdict,
    pub dichotomy: DichotomyReport,
    pub max_principle: MaxPrincipleSummary,
    pub coercivity: CoercivityReport,
    pub monitors: Vec<MonitorSummary>,
    pub balance: Vec<BalanceSummary>,
    pub supersolution_residual: SupersolutionResidual,
    pub supersolution_residual_att: SupersolutionResidual,
    pub sandwich: Result<SandwichReport, String>,
    pub hom_flags: HomFlags,
    pub derivative_decay_whole: Option<f64>,
    pub derivative_decay_beyond: Option<f64>,
    /// Speed c of the region |x| ≥ ct behind derivative_decay_beyond and sup_beyond_tail.
    pub beyond_speed: f64,
    pub sup_beyond_tail: f64,
    pub dissipation_integral: (f64, Vec<f64>, bool),
    pub exponential_fit: Option<Result<ExpFit, String>>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceSummary {
    pub c: f64,
    pub max_abs_residual: f64,
    pub max_abs_corrected: f64,
    pub max_abs_flux: f64,
    pub samples: usize,
}

/// Everything a run produces, in memory.
pub struct RunOutcome {
    pub setup: Setup,
    pub trajectory: Trajectory,
    pub series: Vec<FunctionalSeries>,
    pub balances: Vec<BalanceSeries>,
    pub monitors: Vec<MonitorReport>,
    pub track: EscapeTrack,
    pub decay: DerivativeDecay,
    pub report: RunReport,
}

fn probe_point(d: usize, r: f64) -> Vec<f64> {
    let mut x = vec![0.0; d];
    x[0] = r;
    x
}

/// Run a monitor over snapshot chunks in parallel, rows kept in time order.
fn chunked_monitor<F>(snaps: &[&Snapshot], f: F) -> Result<MonitorReport, CliError>
where
    F: Fn(&[&Snapshot]) -> gradflow::Result<MonitorReport> + Sync,
{
    let chunk = snaps.len().div_ceil(rayon::current_num_threads().max(1) * 4).max(1);
    let parts: Vec<MonitorReport> = snaps.par_chunks(chunk).map(&f).collect::<gradflow::Result<_>>()?;
    let name = parts.first().map(|p| p.name.clone()).unwrap_or_default();
    Ok(MonitorReport::new(name, parts.into_iter().flat_map(|p| p.rows).collect()))
}

fn coercivity_report(
    snaps: &[&Snapshot],
    setup: &Setup,
    kernels: &[Firewall0Kernel],
    w: &WeightParams,
) -> Result<CoercivityReport, CliError> {
    let (p, m, fc) = (&setup.spec, &setup.m, &setup.firewall);
    type Part = (f64, f64, f64, f64, Vec<(f64, f64)>);
    let parts: Vec<Part> = snaps
        .par_iter()
        .map(|snap| {
            let s = &snap.state;
            let dev = s.deviation(&m.m);
            let mut part = (f64::INFINITY, f64::INFINITY, f64::INFINITY, 0.0f64, Vec::new());
            for k in kernels {
                let (f0, floor) = firewall0_coercivity(s, p, m, k, fc.w_en);
                part.0 = part.0.min(f0 - floor);
                part.1 = part.1.min(f0);
                part.3 = part.3.max(f0.abs());
                let r = k.center[0];
                let idx = s.grid.interpolate(&dev, 1, r)[0];
                part.4.push((f0, idx));
            }
            part.2 = firewall_traveling(s, p, m, w, fc.w_en)?;
            Ok(part)
        })
        .collect::<gradflow::Result<_>>()?;
    let mut rep = CoercivityReport {
        min_margin: f64::INFINITY,
        min_firewall0: f64::INFINITY,
        min_traveling: f64::INFINITY,
        max_firewall0: 0.0,
        calibrated_threshold: None,
    };
    let mut pairs = Vec::new();
    for (a, b, c, d, e) in parts {
        rep.min_margin = rep.min_margin.min(a);
        rep.min_firewall0 = rep.min_firewall0.min(b);
        rep.min_traveling = rep.min_traveling.min(c);
        rep.max_firewall0 = rep.max_firewall0.max(d);
        pairs.extend(e);
    }
    rep.calibrated_threshold = calibrate_escape_threshold(&pairs, m.escape_distance);
    Ok(rep)
}

/// Full pipeline for one configuration.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let setup = prepare(cfg)?;
    execute_prepared(cfg, setup)
}

pub fn execute_prepared(cfg: &RunConfig, setup: Setup) -> Result<RunOutcome, CliError> {
    let dg = &cfg.diagnostics;
    let (p, m, fc) = (&setup.spec, &setup.m, &setup.firewall);
    let solver = cfg.solver_config();
    log::info!("{}: integrating {} steps", cfg.name, solver.num_steps());
    let traj = simulate(&setup.initial, p, &solver)?;
    let grid = setup.grid;
    let mut notes = Vec::new();

    let trace = qbar_bound(&setup.initial, &setup.coercivity);
    let mp: Vec<_> = traj.snapshots.par_iter().map(|s| max_principle_monitor(&s.state, &trace, MP_TOLERANCE)).collect();
    let max_principle = MaxPrincipleSummary {
        max_excess: mp.iter().map(|r| r.max_excess).fold(f64::NEG_INFINITY, f64::max),
        violated: mp.iter().any(|r| r.violated),
        snapshots: mp.len(),
    };

    let times = traj.times();
    let scalar = |name: &str, f: &(dyn Fn(&FieldState) -> f64 + Sync)| {
        let values: Vec<f64> = traj.snapshots.par_iter().map(|s| f(&s.state)).collect();
        FunctionalSeries::new(name, times.clone(), values, SeriesParams::Plain).expect("snapshot times increase")
    };
    let e_plain = scalar("energy_plain", &|s| energy_plain(s, p, m));
    let d_plain = scalar("dissipation_plain", &|s| dissipation_plain(s, p));
    let ut_sup = scalar("ut_sup", &|s| {
        time_derivative(s, p).chunks(s.n).map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
    });
    let q_max = scalar("q_sup", &gradflow::solver::sup_half_square);
    let e_ball = ball_energy_series(&traj, p, m, dg.energy_ball_speed);

    let mut balances: Vec<BalanceSeries> = dg.c_list.iter().map(|&c| balance_series(&traj, p, m, c)).collect();
    if !dg.c_list.contains(&dg.energy_ball_speed) {
        balances.push(balance_series(&traj, p, m, dg.energy_ball_speed));
    }

    let monitored: Vec<&Snapshot> = traj.snapshots.iter().step_by(dg.monitor_every).collect();
    let probes = if dg.probes.is_empty() { probe_panel(&grid) } else { dg.probes.clone() };
    let kernels: Vec<Firewall0Kernel> = probes
        .iter()
        .map(|&r| Firewall0Kernel::new(&grid, &probe_point(grid.space_dim, r), fc.kappa0))
        .collect::<gradflow::Result<_>>()?;
    let w = fc.traveling_weight(probe_point(grid.space_dim, setup.constants.frame_speed));
    let mut monitors = vec![chunked_monitor(&monitored, |c| firewall_decay_monitor(c, p, m, fc, &probes))?];
    monitors.push(chunked_monitor(&monitored, |c| traveling_decay_monitor(c, p, m, fc, &w))?);
    monitors.push(chunked_monitor(&monitored, |c| energy_firewall_monitor(c, p, m, fc, &w))?);
    let all: Vec<&Snapshot> = traj.snapshots.iter().collect();
    let coercivity = coercivity_report(&all, &setup, &kernels, &w)?;

    let supersolution = supersolution_residual(
        &setup.supersolution,
        &setup.nbar,
        grid.max_radius(),
        solver.t_end,
        RESIDUAL_SAMPLES,
        RESIDUAL_SAMPLES,
    );
    let supersolution_att = supersolution_residual(
        &setup.supersolution_att,
        &setup.nbar_att,
        grid.max_radius(),
        solver.t_end,
        RESIDUAL_SAMPLES,
        RESIDUAL_SAMPLES,
    );
    let sandwich = sandwich_monitor(&traj, p, m, &setup.supersolution, &setup.nbar, SANDWICH_TOL, 7)
        .map_err(|e| e.to_string());

    let hp = HomParams::defaults(m, grid.spacing, dg.energy_ball_speed);
    let track = escape_track(&traj, m, &hp);
    let window = dg.fit_fraction * (traj.t_end() - times[0]);
    let speed_zero_tol = 2.0 * grid.spacing / window;
    let flags = hom_flags(&track, speed_zero_tol);
    let speed = invasion_speed_fit(&track, dg.fit_fraction);
    let c_inv = speed.as_ref().map(|s| s.c_inv).unwrap_or(0.0);
    let beyond_speed =
        if dg.beyond_speed < 0.0 { dg.energy_ball_speed.max(2.0 * c_inv) } else { dg.beyond_speed };
    let track = if beyond_speed == hp.c_ref {
        track
    } else {
        escape_track(&traj, m, &HomParams { c_ref: beyond_speed, ..hp })
    };
    let energy = asymptotic_energy_estimate(&e_ball);
    let tol = VerdictTolerances { speed_zero_tol, accept_tol: dg.accept_tol, ut_tol: dg.ut_tol };
    let dichotomy = dichotomy_verdict(speed, energy, ut_sup.clone(), tol);
    let decay = derivative_decay(&traj, p, RegionLaw::Whole);
    let decay_beyond = derivative_decay(&traj, p, RegionLaw::Beyond(beyond_speed));
    let tail = ut_sup.tail_indices(dg.fit_fraction);
    let sup_beyond_tail = track.sup_beyond[tail].iter().cloned().fold(0.0, f64::max);
    let exponential_fit = dg.firewall_fit.map(|[c1, c2]| {
        let t_start = times.iter().cloned().find(|&t| t > 0.0).unwrap_or(0.0);
        firewall_exponential_fit(&traj, p, m, fc, c1, c2, t_start).map_err(|e| e.to_string())
    });
    if let Some(Err(e)) = &exponential_fit {
        notes.push(format!("exponential firewall fit: {e}"));
    }
    if let Err(e) = &sandwich {
        notes.push(format!("sandwich: {e}"));
    }

    let balance = balances
        .iter()
        .map(|b| BalanceSummary {
            c: b.c,
            max_abs_residual: b.max_abs_residual(),
            max_abs_corrected: b.max_abs_corrected(),
            max_abs_flux: b.flux.iter().fold(0.0, |a, x| a.max(x.abs())),
            samples: b.times.len(),
        })
        .collect();
    let report = RunReport {
        config: cfg.clone(),
        constants: setup.constants.clone(),
        steps: solver.num_steps(),
        snapshots: traj.snapshots.len(),
        verdict: dichotomy.verdict,
        dichotomy,
        max_principle,
        coercivity,
        monitors: monitors
            .iter()
            .map(|r| MonitorSummary { name: r.name.clone(), max_residual: r.max_residual, rows: r.rows.len() })
            .collect(),
        balance,
        supersolution_residual: supersolution,
        supersolution_residual_att: supersolution_att,
        sandwich,
        hom_flags: flags,
        derivative_decay_whole: decay.rate,
        derivative_decay_beyond: decay_beyond.rate,
        beyond_speed,
        sup_beyond_tail,
        dissipation_integral: dissipation_integrability(&d_plain),
        exponential_fit,
        notes,
    };
    log::info!("{}: verdict {:?}", cfg.name, report.verdict);
    Ok(RunOutcome {
        setup,
        trajectory: traj,
        series: vec![e_plain, d_plain, ut_sup, q_max, e_ball],
        balances,
        monitors,
        track,
        decay,
        report,
    })
}
