//! Firewall functionals ℱ₀ (standing, translated) and ℱ (traveling), their
//! constants and decay monitors.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::energy::{check_axis_velocity, energy_density, frame_coords, linear_fit, localized_dissipation, localized_energy, PointData};
use crate::error::{Error, Result};
use crate::field::{FieldState, Grid, GridMode};
use crate::potential::{MinimumPoint, PotentialSpec};
use crate::sampling::{ball_samples, dist, dot, pattern_search, project_to_ball};
use crate::solver::{Snapshot, Trajectory};
use crate::weights::{check_firewall_conditions, check_frame_conditions, psi, psi0, WeightParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirewallConstants {
    pub kappa0: f64,
    pub nu_f0: f64,
    pub k_f0: f64,
    pub kappa: f64,
    pub c_cut: f64,
    pub nu_f: f64,
    pub k_f: f64,
    pub k_ef: f64,
    pub r_max_infty: f64,
    pub w_en: f64,
    pub lambda_min: f64,
    pub space_dim: usize,
}

impl FirewallConstants {
    /// Standing weight with decay κ₀ centered at x̄.
    pub fn standing_weight(&self, center: Vec<f64>) -> WeightParams {
        let d = center.len();
        WeightParams { kappa: self.kappa0, c_cut: 0.0, velocity: vec![0.0; d], center }
    }

    /// Traveling weight with decay κ, cutoff speed c_cut and frame velocity c.
    pub fn traveling_weight(&self, velocity: Vec<f64>) -> WeightParams {
        WeightParams::new(self.kappa, self.c_cut, velocity)
    }

    /// All closed-form constraints on the constants; returns the first
    /// violated one.
    pub fn check(&self) -> Result<()> {
        let lam = self.lambda_min;
        let w = self.w_en;
        let tol = 1e-12;
        let conds = [
            (w * self.kappa0 * self.kappa0 / 4.0, 0.5, "w_en·κ₀²/4 ≤ 1/2"),
            (self.kappa0 * self.kappa0 / 2.0, lam / 8.0, "κ₀²/2 ≤ λ_min/8"),
            (self.nu_f0 * w, 0.5, "ν_F0·w_en ≤ 1/2"),
            (self.nu_f0 / 2.0, lam / 8.0, "ν_F0/2 ≤ λ_min/8"),
            (self.nu_f * w, 0.25, "ν_F·w_en ≤ 1/4"),
            (self.nu_f / 2.0, lam / 8.0, "ν_F/2 ≤ λ_min/8"),
        ];
        for (lhs, rhs, name) in conds {
            if lhs > rhs * (1.0 + tol) {
                return Err(Error::Domain(format!("firewall constant condition {name} violated: {lhs} > {rhs}")));
            }
        }
        check_firewall_conditions(self.kappa, self.c_cut, w, lam, self.space_dim)
    }
}

/// κ₀ = min(√(2/w_en), √λ_min/2), ν_F0 = min(1/(2w_en), λ_min/4),
/// K_F0 by sampled maximization over |v| ≤ r_max_infty,
/// κ = min(1/√w_en, √λ_min/(4√d)), c_cut = min(1/(4√w_en), √λ_min/4, c_hom/2),
/// ν_F = min(1/(4w_en), λ_min/4), K_F = K_F0, K_EF = κ(c_cut + κ)/w_en.
pub fn firewall_constants(
    p: &PotentialSpec,
    m: &MinimumPoint,
    w_en: f64,
    r_max_infty: f64,
    space_dim: usize,
    c_hom: f64,
) -> Result<FirewallConstants> {
    if !(w_en > 0.0 && w_en <= 1.0) {
        return Err(Error::Domain(format!("w_en = {w_en} outside (0, 1]")));
    }
    if !(c_hom > 0.0) {
        return Err(Error::Domain(format!("c_hom = {c_hom} must be positive")));
    }
    let lam = m.lambda_min;
    let kappa0 = (2.0 / w_en).sqrt().min(lam.sqrt() / 2.0);
    let nu_f0 = (1.0 / (2.0 * w_en)).min(lam / 4.0);
    let k_f0 = k_f0(p, m, r_max_infty);
    let kappa = (1.0 / w_en.sqrt()).min(lam.sqrt() / (4.0 * (space_dim as f64).sqrt()));
    let c_cut = (1.0 / (4.0 * w_en.sqrt())).min(lam.sqrt() / 4.0).min(c_hom / 2.0);
    let nu_f = (1.0 / (4.0 * w_en)).min(lam / 4.0);
    let k_ef = kappa * (c_cut + kappa) / w_en;
    let fc = FirewallConstants {
        kappa0,
        nu_f0,
        k_f0,
        kappa,
        c_cut,
        nu_f,
        k_f: k_f0,
        k_ef,
        r_max_infty,
        w_en,
        lambda_min: lam,
        space_dim,
    };
    fc.check()?;
    Ok(fc)
}

/// max over |v| ≤ R of −(v−m)·∇V(v) + ½|V(v)−V(m)| + λ_min(m)/4·|v−m|².
fn k_f0(p: &PotentialSpec, m: &MinimumPoint, r: f64) -> f64 {
    let n = p.state_dim();
    let origin = vec![0.0; n];
    let f = |v: &[f64]| {
        let w: Vec<f64> = v.iter().zip(&m.m).map(|(a, b)| a - b).collect();
        -dot(&w, &p.gradient(v)) + 0.5 * (p.value(v) - m.v_at_m).abs() + 0.25 * m.lambda_min * dot(&w, &w)
    };
    let count = if n == 1 { 8001 } else { 20_000 };
    let mut samples = ball_samples(&origin, r, count, 7919);
    if dist(&m.m, &origin) <= r {
        samples.push(m.m.clone());
    }
    let mut order: Vec<(f64, usize)> = samples.iter().enumerate().map(|(i, v)| (f(v), i)).collect();
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut best = order[0].0;
    for &(_, i) in order.iter().take(8) {
        let (_, neg) = pattern_search(|v| -f(v), |v| project_to_ball(v, &origin, r), &samples[i], 0.02 * r.max(1e-3), 1e-12);
        best = best.max(-neg);
    }
    best.max(0.0)
}

/// Quadrature weights of ∫ψ₀(x − x̄)·g(x) dx for per-point data g: the
/// firewall becomes a dot product.
#[derive(Debug, Clone)]
pub struct Firewall0Kernel {
    pub center: Vec<f64>,
    pub kappa0: f64,
    pub weights: Vec<f64>,
}

impl Firewall0Kernel {
    pub fn new(grid: &Grid, center: &[f64], kappa0: f64) -> Result<Firewall0Kernel> {
        if center.len() != grid.space_dim {
            return Err(Error::Domain("probe dimension differs from the grid".into()));
        }
        if grid.mode == GridMode::Radial && center[1..].iter().any(|&c| c != 0.0) {
            return Err(Error::Domain("on a radial grid probes must lie on the x1 axis".into()));
        }
        let mut weights = vec![0.0; grid.num_points()];
        match grid.mode {
            GridMode::Cartesian => {
                let w = grid.spacing.powi(grid.space_dim as i32);
                let mut x = vec![0.0; grid.space_dim];
                for (j, wt) in weights.iter_mut().enumerate() {
                    grid.position(j, &mut x);
                    *wt = w * psi0(&x, center, kappa0);
                }
            }
            GridMode::Radial => {
                let vol = grid.volume_weights();
                let s = crate::weights::sphere_area(grid.space_dim);
                let nodes = grid.angular_nodes();
                let d = grid.space_dim;
                let mut x = vec![0.0; d];
                for (j, wt) in weights.iter_mut().enumerate() {
                    if vol[j] == 0.0 {
                        continue;
                    }
                    let r = grid.radius(j);
                    let mut acc = 0.0;
                    for &(c, sn, w) in &nodes {
                        x[0] = r * c;
                        if d > 1 {
                            x[1] = r * sn;
                        }
                        acc += w * psi0(&x, center, kappa0);
                    }
                    *wt = vol[j] / s * acc;
                }
            }
        }
        Ok(Firewall0Kernel { center: center.to_vec(), kappa0, weights })
    }

    pub fn apply(&self, g: &[f64]) -> f64 {
        self.weights.iter().zip(g).map(|(w, v)| w * v).sum()
    }
}

/// F† = E† + ½|u†|² per point.
pub fn firewall0_density(s: &FieldState, p: &PotentialSpec, m: &MinimumPoint) -> Vec<f64> {
    let e = energy_density(s, p, m);
    s.values
        .chunks(s.n)
        .zip(e)
        .map(|(u, e)| e + 0.5 * u.iter().zip(&m.m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .collect()
}

/// |∇u†|² + |u†|² per point, the integrand of the coercivity lower bound.
pub fn h1_density(s: &FieldState, m: &MinimumPoint) -> Vec<f64> {
    let g = crate::field::gradient_sq(s);
    s.values
        .chunks(s.n)
        .zip(g)
        .map(|(u, g)| g + u.iter().zip(&m.m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .collect()
}

/// ℱ₀(x̄,t) = ∫ψ₀(x − x̄)(E† + ½|u†|²) dx.
pub fn firewall0(s: &FieldState, p: &PotentialSpec, m: &MinimumPoint, xbar: &[f64], kappa0: f64) -> Result<f64> {
    Ok(Firewall0Kernel::new(&s.grid, xbar, kappa0)?.apply(&firewall0_density(s, p, m)))
}

/// Both sides of the coercivity bound ℱ₀ ≥ min(w_en/2, ¼)∫ψ₀(|∇u†|² + |u†|²).
pub fn firewall0_coercivity(
    s: &FieldState,
    p: &PotentialSpec,
    m: &MinimumPoint,
    kernel: &Firewall0Kernel,
    w_en: f64,
) -> (f64, f64) {
    let f0 = kernel.apply(&firewall0_density(s, p, m));
    let floor = (w_en / 2.0).min(0.25) * kernel.apply(&h1_density(s, m));
    (f0, floor)
}

/// ℱ(t) = ∫ψ(ξ,t)[w_en(½|∇v|² + V†(v)) + ½|v|²] dξ.
pub fn firewall_traveling(s: &FieldState, p: &PotentialSpec, m: &MinimumPoint, w: &WeightParams, w_en: f64) -> Result<f64> {
    check_firewall_conditions(w.kappa, w.c_cut, w_en, m.lambda_min, s.grid.space_dim)?;
    if w.speed() > 0.0 {
        check_frame_conditions(w.speed(), w.kappa, w.c_cut, m.lambda_min)?;
    }
    check_axis_velocity(s, w)?;
    let data = PointData::new(s, p, m);
    let dens: Vec<f64> = (0..s.num_points()).map(|j| w_en * data.energy[j] + 0.5 * data.dev_sq(j)).collect();
    Ok(weighted_integral(s, w, |j| dens[j]))
}

/// ∫ψ(ξ,t)·g dξ for per-point g; radial fast path when c = 0.
fn weighted_integral(s: &FieldState, w: &WeightParams, g: impl Fn(usize) -> f64) -> f64 {
    let t = s.time;
    if s.grid.mode == GridMode::Radial && w.speed() == 0.0 {
        let vol = s.grid.volume_weights();
        let d = s.grid.space_dim;
        let mut x = vec![0.0; d];
        return (0..s.num_points())
            .map(|j| {
                x[0] = s.grid.radius(j);
                vol[j] * psi(&x, t, w) * g(j)
            })
            .sum();
    }
    let mut xi = vec![0.0; s.grid.space_dim];
    s.grid.integrate(|j, x| {
        frame_coords(x, w, t, &mut xi);
        psi(&xi, t, w) * g(j)
    })
}

/// ∫_{Σ_Esc(t)} ψ(ξ,t) dξ, Σ_Esc = {|u†| > threshold}.
pub fn traveling_pollution(s: &FieldState, m: &MinimumPoint, w: &WeightParams, threshold: f64) -> f64 {
    let dev = s.deviation(&m.m);
    weighted_integral(s, w, |j| if dev[j] > threshold { 1.0 } else { 0.0 })
}

/// Indicator of Σ_Esc = {|u†| > threshold} per point.
pub fn escape_indicator(s: &FieldState, m: &MinimumPoint, threshold: f64) -> Vec<f64> {
    s.deviation(&m.m).into_iter().map(|d| if d > threshold { 1.0 } else { 0.0 }).collect()
}

/// Probe radii: 0 then 15 radii geometrically spaced from h to 0.8·extent.
pub fn probe_panel(grid: &Grid) -> Vec<f64> {
    let r_max = 0.8 * grid.max_radius();
    let r_min = grid.spacing.min(r_max);
    let mut out = vec![0.0];
    let q = (r_max / r_min).powf(1.0 / 14.0);
    for k in 0..15 {
        out.push(if k == 14 { r_max } else { r_min * q.powi(k) });
    }
    out
}

fn probe_point(d: usize, r: f64) -> Vec<f64> {
    let mut x = vec![0.0; d];
    x[0] = r;
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub time: f64,
    pub probe: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub name: String,
    pub rows: Vec<MonitorRow>,
    /// Largest lhs − rhs (≤ 0 means the inequality held everywhere).
    pub max_residual: f64,
}

impl MonitorReport {
    pub fn new(name: impl Into<String>, rows: Vec<MonitorRow>) -> MonitorReport {
        let max_residual = rows.iter().map(|r| r.residual).fold(f64::NEG_INFINITY, f64::max);
        MonitorReport { name: name.into(), rows, max_residual }
    }

    /// CSV with columns time,probe,lhs,rhs,residual.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,probe,lhs,rhs,residual")?;
        for r in &self.rows {
            writeln!(w, "{:?},{:?},{:?},{:?},{:?}", r.time, r.probe, r.lhs, r.rhs, r.residual)?;
        }
        Ok(())
    }
}

/// Residual of ∂_tℱ₀(x̄,t) ≤ −ν_F0ℱ₀(x̄,t) + K_F0∫_{Σ_Esc(t)}ψ₀(x − x̄) over the
/// probe panel, ∂_t by centered differences between a snapshot's neighbours.
pub fn firewall_decay_monitor(
    snapshots: &[&Snapshot],
    p: &PotentialSpec,
    m: &MinimumPoint,
    fc: &FirewallConstants,
    probes: &[f64],
) -> Result<MonitorReport> {
    let Some(first) = snapshots.first() else {
        return Ok(MonitorReport::new("dt_fire", Vec::new()));
    };
    let grid = first.state.grid;
    let kernels: Vec<Firewall0Kernel> = probes
        .iter()
        .map(|&r| Firewall0Kernel::new(&grid, &probe_point(grid.space_dim, r), fc.kappa0))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for snap in snapshots {
        let (Some(b), Some(a)) = (&snap.before, &snap.after) else { continue };
        let fb = firewall0_density(b, p, m);
        let fa = firewall0_density(a, p, m);
        let f = firewall0_density(&snap.state, p, m);
        let esc = escape_indicator(&snap.state, m, m.escape_distance);
        for (k, r) in kernels.iter().zip(probes) {
            let lhs = (k.apply(&fa) - k.apply(&fb)) / (a.time - b.time);
            let rhs = -fc.nu_f0 * k.apply(&f) + fc.k_f0 * k.apply(&esc);
            rows.push(MonitorRow { time: snap.time(), probe: *r, lhs, rhs, residual: lhs - rhs });
        }
    }
    Ok(MonitorReport::new("dt_fire", rows))
}

/// Residual of ℱ'(t) ≤ −ν_Fℱ(t) + K_F∫_{Σ_Esc(t)}ψ.
pub fn traveling_decay_monitor(
    snapshots: &[&Snapshot],
    p: &PotentialSpec,
    m: &MinimumPoint,
    fc: &FirewallConstants,
    w: &WeightParams,
) -> Result<MonitorReport> {
    let mut rows = Vec::new();
    for snap in snapshots {
        let (Some(b), Some(a)) = (&snap.before, &snap.after) else { continue };
        let lhs = (firewall_traveling(a, p, m, w, fc.w_en)? - firewall_traveling(b, p, m, w, fc.w_en)?) / (a.time - b.time);
        let f = firewall_traveling(&snap.state, p, m, w, fc.w_en)?;
        let rhs = -fc.nu_f * f + fc.k_f * traveling_pollution(&snap.state, m, w, m.escape_distance);
        rows.push(MonitorRow { time: snap.time(), probe: w.speed(), lhs, rhs, residual: lhs - rhs });
    }
    Ok(MonitorReport::new("der_fire_dichot", rows))
}

/// Residual of ℰ'(t) ≤ −½𝒟(t) + K_EF·ℱ(t).
pub fn energy_firewall_monitor(
    snapshots: &[&Snapshot],
    p: &PotentialSpec,
    m: &MinimumPoint,
    fc: &FirewallConstants,
    w: &WeightParams,
) -> Result<MonitorReport> {
    let mut rows = Vec::new();
    for snap in snapshots {
        let (Some(b), Some(a)) = (&snap.before, &snap.after) else { continue };
        let lhs = (localized_energy(a, p, m, w)? - localized_energy(b, p, m, w)?) / (a.time - b.time);
        let rhs = -0.5 * localized_dissipation(&snap.state, p, m, w)?
            + fc.k_ef * firewall_traveling(&snap.state, p, m, w, fc.w_en)?;
        rows.push(MonitorRow { time: snap.time(), probe: w.speed(), lhs, rhs, residual: lhs - rhs });
    }
    Ok(MonitorReport::new("energy_decrease_up_to_firewall", rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    /// Fitted decay rate (−slope of log sup ℱ₀).
    pub rate: f64,
    pub prefactor: f64,
    /// min(ν_F0, κ₀(c₂ − c₁)/2).
    pub predicted_rate: f64,
    pub identically_zero: bool,
    pub samples: Vec<(f64, f64)>,
}

/// Fit sup_{|x̄| ≥ c₂t} ℱ₀(x̄,t) ≈ A·e^{−rate·t} over snapshots with t ≥ t_start,
/// after checking Σ_Esc(t) ⊂ B(c₁t) on the same window.
pub fn firewall_exponential_fit(
    traj: &Trajectory,
    p: &PotentialSpec,
    m: &MinimumPoint,
    fc: &FirewallConstants,
    c1: f64,
    c2: f64,
    t_start: f64,
) -> Result<ExpFit> {
    if !(c2 > c1 && c1 >= 0.0) {
        return Err(Error::Domain(format!("need 0 <= c1 < c2, got c1 = {c1}, c2 = {c2}")));
    }
    let grid = traj.last().grid;
    let predicted_rate = fc.nu_f0.min(fc.kappa0 * (c2 - c1) / 2.0);
    let r_limit = 0.8 * grid.max_radius();
    let stride = (grid.resolution / 200).max(1);
    let candidates: Vec<usize> = (0..grid.resolution).step_by(stride).collect();
    let mut kernels: Vec<Option<Firewall0Kernel>> = vec![None; candidates.len()];
    let mut samples = Vec::new();
    for snap in &traj.snapshots {
        let t = snap.time();
        if t < t_start || t <= 0.0 {
            continue;
        }
        if c2 * t > r_limit {
            break;
        }
        let s = &snap.state;
        let dev = s.deviation(&m.m);
        let outer = (0..s.num_points()).filter(|&j| dev[j] > m.escape_distance).map(|j| grid.radius(j)).fold(0.0, f64::max);
        if outer > c1 * t {
            return Err(Error::HypothesisViolated(format!(
                "escape set reaches radius {outer} > c1*t = {} at t = {t}",
                c1 * t
            )));
        }
        let dens = firewall0_density(s, p, m);
        let mut sup = 0.0f64;
        for (slot, &j) in kernels.iter_mut().zip(&candidates) {
            let r = grid.radius(j);
            if r < c2 * t || r > r_limit {
                continue;
            }
            let k = match slot {
                Some(k) => k,
                None => slot.insert(Firewall0Kernel::new(&grid, &probe_point(grid.space_dim, r), fc.kappa0)?),
            };
            sup = sup.max(k.apply(&dens));
        }
        samples.push((t, sup));
    }
    if samples.iter().all(|s| s.1 == 0.0) {
        return Ok(ExpFit { rate: f64::INFINITY, prefactor: 0.0, predicted_rate, identically_zero: true, samples });
    }
    let pos: Vec<&(f64, f64)> = samples.iter().filter(|s| s.1 > 0.0).collect();
    if pos.len() < 3 {
        return Err(Error::WindowTooShort(format!("only {} positive firewall samples", pos.len())));
    }
    let t: Vec<f64> = pos.iter().map(|s| s.0).collect();
    let y: Vec<f64> = pos.iter().map(|s| s.1.ln()).collect();
    let (slope, intercept, _) = linear_fit(&t, &y);
    Ok(ExpFit { rate: -slope, prefactor: intercept.exp(), predicted_rate, identically_zero: false, samples })
}

/// Largest θ such that ℱ₀(x̄,t) ≤ θ implied |u†(x̄,t)| ≤ d_Esc on every
/// (firewall, deviation) pair given; None when no pair escapes.
pub fn calibrate_escape_threshold(pairs: &[(f64, f64)], d_esc: f64) -> Option<f64> {
    pairs.iter().filter(|(_, dev)| *dev > d_esc).map(|(f, _)| *f).reduce(f64::min)
}
