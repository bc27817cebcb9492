//! Explicit time integration, the comparison ODE q̄' = −2εq̄ + K and the
//! maximum-principle monitor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldState, Grid};
use crate::potential::{CoercivityConstants, PotentialSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub t_end: f64,
    pub snapshot_stride: usize,
}

impl SolverConfig {
    /// Largest admissible step, 0.9·h²/(2d).
    pub fn cfl_limit(grid: &Grid) -> f64 {
        0.9 * grid.spacing * grid.spacing / (2.0 * grid.space_dim as f64)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be positive".into()));
        }
        let limit = Self::cfl_limit(grid);
        if self.dt > limit {
            return Err(Error::Config(format!(
                "dt = {} violates the CFL bound dt <= 0.9*h^2/(2d) = {limit}",
                self.dt
            )));
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Right-hand side −∇V(u) + Δu, zero on clamped boundary points.
pub fn rhs_into(grid: &Grid, p: &PotentialSpec, values: &[f64], n: usize, out: &mut [f64]) {
    grid.laplacian_into(values, n, out);
    let mut g = vec![0.0; n];
    for pt in 0..grid.num_points() {
        let slot = &mut out[pt * n..(pt + 1) * n];
        if grid.is_boundary(pt) {
            slot.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        p.gradient_into(&values[pt * n..(pt + 1) * n], &mut g);
        for (o, gi) in slot.iter_mut().zip(&g) {
            *o -= gi;
        }
    }
}

/// u_t evaluated from the equation.
pub fn time_derivative(s: &FieldState, p: &PotentialSpec) -> Vec<f64> {
    let mut out = vec![0.0; s.values.len()];
    rhs_into(&s.grid, p, &s.values, s.n, &mut out);
    out
}

/// Reusable scratch space for stepping.
pub struct Stepper {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Stepper {
    pub fn new(len: usize) -> Stepper {
        Stepper { k: [vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]], tmp: vec![0.0; len] }
    }

    /// Advance `values` in place by `dt`.
    pub fn advance(&mut self, grid: &Grid, p: &PotentialSpec, n: usize, scheme: Scheme, dt: f64, values: &mut [f64]) {
        match scheme {
            Scheme::Euler => {
                rhs_into(grid, p, values, n, &mut self.k[0]);
                for (u, k) in values.iter_mut().zip(&self.k[0]) {
                    *u += dt * k;
                }
            }
            Scheme::Rk4 => {
                let [k1, k2, k3, k4] = &mut self.k;
                rhs_into(grid, p, values, n, k1);
                for i in 0..values.len() {
                    self.tmp[i] = values[i] + 0.5 * dt * k1[i];
                }
                rhs_into(grid, p, &self.tmp, n, k2);
                for i in 0..values.len() {
                    self.tmp[i] = values[i] + 0.5 * dt * k2[i];
                }
                rhs_into(grid, p, &self.tmp, n, k3);
                for i in 0..values.len() {
                    self.tmp[i] = values[i] + dt * k3[i];
                }
                rhs_into(grid, p, &self.tmp, n, k4);
                for i in 0..values.len() {
                    values[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
    }
}

/// One step of the configured scheme.
pub fn step(s: &FieldState, p: &PotentialSpec, cfg: &SolverConfig) -> Result<FieldState> {
    cfg.validate(&s.grid)?;
    let mut next = s.clone();
    Stepper::new(s.values.len()).advance(&s.grid, p, s.n, cfg.scheme, cfg.dt, &mut next.values);
    next.apply_boundary();
    next.time = s.time + cfg.dt;
    if !next.is_finite() {
        return Err(Error::BlowUp { time: next.time });
    }
    Ok(next)
}

/// A retained state plus its neighbours one step before and after, so that
/// functionals can be differenced in time around it.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub state: FieldState,
    pub before: Option<FieldState>,
    pub after: Option<FieldState>,
}

impl Snapshot {
    pub fn time(&self) -> f64 {
        self.state.time
    }

    /// Time derivative of `f` along the trajectory at this snapshot: centered
    /// when both neighbours exist, one-sided otherwise.
    pub fn derivative<F: Fn(&FieldState) -> f64>(&self, f: F) -> f64 {
        match (&self.before, &self.after) {
            (Some(b), Some(a)) => (f(a) - f(b)) / (a.time - b.time),
            (None, Some(a)) => (f(a) - f(&self.state)) / (a.time - self.state.time),
            (Some(b), None) => (f(&self.state) - f(b)) / (self.state.time - b.time),
            (None, None) => f64::NAN,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub dt: f64,
    pub scheme: Scheme,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }

    pub fn last(&self) -> &FieldState {
        &self.snapshots.last().expect("trajectory has at least one snapshot").state
    }

    pub fn t_end(&self) -> f64 {
        self.last().time
    }
}

/// Integrate from `initial` to `cfg.t_end`, keeping every `snapshot_stride`-th
/// state (and the final one) with their one-step neighbours.
pub fn simulate(initial: &FieldState, p: &PotentialSpec, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate(&initial.grid)?;
    if p.state_dim() != initial.n {
        return Err(Error::Config(format!(
            "potential has {} components, state has {}",
            p.state_dim(),
            initial.n
        )));
    }
    let steps = cfg.num_steps();
    let is_snap = |k: usize| k % cfg.snapshot_stride == 0 || k == steps;
    let t0 = initial.time;
    let mut stepper = Stepper::new(initial.values.len());
    let mut cur = initial.clone();
    cur.apply_boundary();
    let mut prev: Option<FieldState> = None;
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut awaiting_after = false;
    for k in 0..=steps + 1 {
        if awaiting_after {
            snapshots.last_mut().expect("pending snapshot").after = Some(cur.clone());
            awaiting_after = false;
        }
        if k <= steps && is_snap(k) {
            snapshots.push(Snapshot { state: cur.clone(), before: prev.clone(), after: None });
            awaiting_after = true;
        }
        if k == steps + 1 {
            break;
        }
        let mut next = cur.clone();
        stepper.advance(&cur.grid, p, cur.n, cfg.scheme, cfg.dt, &mut next.values);
        next.apply_boundary();
        next.time = t0 + (k + 1) as f64 * cfg.dt;
        if !next.is_finite() {
            return Err(Error::BlowUp { time: next.time });
        }
        prev = if is_snap(k + 1) { Some(cur) } else { None };
        cur = next;
    }
    Ok(Trajectory { snapshots, dt: cfg.dt, scheme: cfg.scheme })
}

/// The closed-form solution of q̄' = −2εq̄ + K, q̄(0) = q0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QBarTrace {
    pub q0: f64,
    pub eps: f64,
    pub k: f64,
    pub samples: Vec<(f64, f64)>,
}

impl QBarTrace {
    pub fn new(q0: f64, eps: f64, k: f64) -> QBarTrace {
        QBarTrace { q0, eps, k, samples: Vec::new() }
    }

    pub fn value(&self, t: f64) -> f64 {
        let inf = self.k / (2.0 * self.eps);
        inf + (self.q0 - inf) * (-2.0 * self.eps * t).exp()
    }

    pub fn limit(&self) -> f64 {
        self.k / (2.0 * self.eps)
    }

    /// Record q̄ at the given times.
    pub fn sample(mut self, times: &[f64]) -> QBarTrace {
        self.samples = times.iter().map(|&t| (t, self.value(t))).collect();
        self
    }
}

/// sup ½|u|² over the grid.
pub fn sup_half_square(s: &FieldState) -> f64 {
    s.values.chunks(s.n).map(|u| 0.5 * u.iter().map(|x| x * x).sum::<f64>()).fold(0.0, f64::max)
}

pub fn qbar_bound(initial: &FieldState, cc: &CoercivityConstants) -> QBarTrace {
    QBarTrace::new(sup_half_square(initial), cc.eps_coerc, cc.k_coerc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub time: f64,
    /// max over the grid of ½|u|² − q̄(t).
    pub max_excess: f64,
    pub violated: bool,
}

/// Default tolerance of the maximum-principle monitor.
pub const MP_TOLERANCE: f64 = 1e-8;

pub fn max_principle_monitor(s: &FieldState, trace: &QBarTrace, tol: f64) -> MaxPrincipleReport {
    let excess = sup_half_square(s) - trace.value(s.time);
    MaxPrincipleReport { time: s.time, max_excess: excess, violated: excess > tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::BuiltinPotential;

    #[test]
    fn qbar_closed_form() {
        let q = QBarTrace::new(2.0, 1.0, 0.0);
        assert!((q.value(1.0) - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        let q = QBarTrace::new(0.0, 1.0, 2.0);
        assert!((q.value(50.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cfl_violation_names_bound() {
        let g = Grid::radial(2, 10.0, 101).unwrap();
        let cfg = SolverConfig { dt: 0.1, scheme: Scheme::Euler, t_end: 1.0, snapshot_stride: 1 };
        let err = cfg.validate(&g).unwrap_err();
        assert!(err.to_string().contains("CFL"), "{err}");
    }

    #[test]
    fn snapshots_have_neighbours() {
        let g = Grid::radial(2, 5.0, 51).unwrap();
        let p = PotentialSpec::builtin(BuiltinPotential::Quadratic { n: 1 });
        let s = FieldState::from_fn(g, &[0.0], |x| vec![(-x[0] * x[0]).exp()]).unwrap();
        let cfg = SolverConfig { dt: 0.002, scheme: Scheme::Rk4, t_end: 0.1, snapshot_stride: 7 };
        let tr = simulate(&s, &p, &cfg).unwrap();
        let times = tr.times();
        assert_eq!(times.first(), Some(&0.0));
        assert!((times.last().unwrap() - 0.1).abs() < 1e-12);
        assert!(tr.snapshots[0].before.is_none());
        for snap in &tr.snapshots[1..] {
            let b = snap.before.as_ref().unwrap();
            let a = snap.after.as_ref().unwrap();
            assert!((snap.time() - b.time - cfg.dt).abs() < 1e-12);
            assert!((a.time - snap.time() - cfg.dt).abs() < 1e-12);
        }
    }
}
