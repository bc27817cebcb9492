//! Energy and dissipation functionals, plain, on balls, and weighted.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldState, GridMode};
use crate::potential::{MinimumPoint, PotentialSpec};
use crate::sampling::dot;
use crate::solver::time_derivative;
use crate::weights::{chi_jet, WeightParams};

/// How the functional in a series was parametrized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SeriesParams {
    Plain,
    /// Ball B(speed·t).
    Ball { speed: f64 },
    Weighted(WeightParams),
    Probe { radius: f64 },
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub params: SeriesParams,
}

impl FunctionalSeries {
    pub fn new(name: impl Into<String>, times: Vec<f64>, values: Vec<f64>, params: SeriesParams) -> Result<Self> {
        let name = name.into();
        if times.len() != values.len() {
            return Err(Error::Domain(format!("series {name}: {} times but {} values", times.len(), values.len())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!("series {name}: times must be strictly increasing")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("series {name}: non-finite value")));
        }
        Ok(FunctionalSeries { name, times, values, params })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Indices with t ≥ t_end − fraction·(t_end − t_0).
    pub fn tail_indices(&self, fraction: f64) -> std::ops::Range<usize> {
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        let start_t = t1 - fraction * (t1 - t0);
        let start = self.times.iter().position(|&t| t >= start_t - 1e-12 * (1.0 + t1.abs())).unwrap_or(self.len());
        start..self.len()
    }

    /// CSV with columns time,value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t:?},{v:?}")?;
        }
        Ok(())
    }
}

/// Least-squares slope and intercept of y against x, with the standard
/// error of the slope.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = if x.len() > 2 && sxx > 0.0 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (slope, intercept, se)
}

/// E† = ½|∇u|² + V(u) − V(m) per grid point.
pub fn energy_density(s: &FieldState, p: &PotentialSpec, m: &MinimumPoint) -> Vec<f64> {
    let gsq = crate::field::gradient_sq(s);
    s.values.chunks(s.n).zip(gsq).map(|(u, g)| 0.5 * g + p.value(u) - m.v_at_m).collect()
}

/// |u_t|² per grid point, u_t from the equation.
pub fn dissipation_density(s: &FieldState, p: &PotentialSpec) -> Vec<f64> {
    time_derivative(s, p).chunks(s.n).map(|c| dot(c, c)).collect()
}

pub fn energy_plain(s: &FieldState, p: &PotentialSpec, m: &MinimumPoint) -> f64 {
    s.grid.integrate_values(&energy_density(s, p, m))
}

/// ∫|u_t|² over the domain.
pub fn dissipation_plain(s: &FieldState, p: &PotentialSpec) -> f64 {
    s.grid.integrate_values(&dissipation_density(s, p))
}

/// ℰ_c: ∫_{B(R)} E†.
pub fn energy_ball(s: &FieldState, p: &PotentialSpec, m: &MinimumPoint, radius: f64) -> Result<f64> {
    s.grid.ball_reduce(radius, &energy_density(s, p, m))
}

/// 𝒟_c: ∫_{B(R)} |u_t|².
pub fn dissipation_ball(s: &FieldState, p: &PotentialSpec, radius: f64) -> Result<f64> {
    s.grid.ball_reduce(radius, &dissipation_density(s, p))
}

/// ℬ_c: ∮_{∂B(R)} E†.
pub fn boundary_term(s: &FieldState, p: &PotentialSpec, m: &MinimumPoint, radius: f64) -> Result<f64> {
    s.grid.sphere_reduce(radius, &energy_density(s, p, m))
}

/// Φ: ∮_{∂B(R)} ∂_ν u · u_t, the flux through the sphere that closes the
/// ball balance ℰ_c' = −𝒟_c + cℬ_c + Φ.
pub fn boundary_flux(s: &FieldState, p: &PotentialSpec, radius: f64) -> Result<f64> {
    let ut = time_derivative(s, p);
    let der = s.grid.derivatives(&s.values, s.n);
    let n = s.n;
    let d = s.grid.space_dim;
    let per_point: Vec<f64> = (0..s.num_points())
        .map(|j| match s.grid.mode {
            GridMode::Radial => dot(&der[j * n..(j + 1) * n], &ut[j * n..(j + 1) * n]),
            GridMode::Cartesian => {
                let mut x = vec![0.0; d];
                s.grid.position(j, &mut x);
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r == 0.0 {
                    return 0.0;
                }
                (0..n)
                    .map(|c| {
                        let dn: f64 = (0..d).map(|k| der[(j * d + k) * n + c] * x[k] / r).sum();
                        dn * ut[j * n + c]
                    })
                    .sum()
            }
        })
        .collect();
    s.grid.sphere_reduce(radius, &per_point)
}

/// Per-point field data needed by weighted functionals: u† = u − m, E†,
/// u_t and the spatial derivatives.
pub(crate) struct PointData {
    pub n: usize,
    pub dev: Vec<f64>,
    pub energy: Vec<f64>,
    pub ut: Vec<f64>,
    pub der: Vec<f64>,
}

impl PointData {
    pub fn new(s: &FieldState, p: &PotentialSpec, m: &MinimumPoint) -> PointData {
        let dev = s.values.chunks(s.n).flat_map(|u| u.iter().zip(&m.m).map(|(a, b)| a - b)).collect();
        PointData {
            n: s.n,
            dev,
            energy: energy_density(s, p, m),
            ut: time_derivative(s, p),
            der: s.grid.derivatives(&s.values, s.n),
        }
    }

    pub fn dev_sq(&self, j: usize) -> f64 {
        let u = &self.dev[j * self.n..(j + 1) * self.n];
        dot(u, u)
    }

    /// ∇u at point j seen at position x (radial data rotated onto x/|x|),
    /// layout [k·n + c].
    pub fn gradient_at(&self, s: &FieldState, j: usize, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let d = s.grid.space_dim;
        match s.grid.mode {
            GridMode::Radial => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                for k in 0..d {
                    let dir = if r > 0.0 { x[k] / r } else { 0.0 };
                    for c in 0..n {
                        out[k * n + c] = self.der[j * n + c] * dir;
                    }
                }
            }
            GridMode::Cartesian => out.copy_from_slice(&self.der[j * d * n..(j + 1) * d * n]),
        }
    }
}

pub(crate) fn check_axis_velocity(s: &FieldState, w: &WeightParams) -> Result<()> {
    if w.velocity.len() != s.grid.space_dim || w.center.len() != s.grid.space_dim {
        return Err(Error::Domain("weight velocity/center dimension differs from the grid".into()));
    }
    if s.grid.mode == GridMode::Radial && (w.velocity[1..].iter().any(|&v| v != 0.0) || w.center.iter().any(|&v| v != 0.0))
    {
        return Err(Error::Domain(
            "on a radial grid the frame velocity must point along x1 and the weight must be centered".into(),
        ));
    }
    Ok(())
}

/// ξ = x − c·t.
pub(crate) fn frame_coords(x: &[f64], w: &WeightParams, t: f64, out: &mut [f64]) {
    for k in 0..x.len() {
        out[k] = x[k] - w.velocity[k] * t;
    }
}

/// ℰ(t) = ∫χ(ξ,t)(½|∇v|² + V†(v)) dξ, evaluated in lab coordinates.
pub fn localized_energy(s: &FieldState, p: &PotentialSpec, m: &MinimumPoint, w: &WeightParams) -> Result<f64> {
    check_axis_velocity(s, w)?;
    let e = energy_density(s, p, m);
    let t = s.time;
    let mut xi = vec![0.0; s.grid.space_dim];
    Ok(s.grid.integrate(|j, x| {
        frame_coords(x, w, t, &mut xi);
        crate::weights::chi(&xi, t, w) * e[j]
    }))
}

/// 𝒟(t) = ∫χ(ξ,t)|v_t|² dξ with v_t = u_t + c·∇u.
pub fn localized_dissipation(s: &FieldState, p: &PotentialSpec, m: &MinimumPoint, w: &WeightParams) -> Result<f64> {
    check_axis_velocity(s, w)?;
    let data = PointData::new(s, p, m);
    let (n, d) = (s.n, s.grid.space_dim);
    let t = s.time;
    let mut xi = vec![0.0; d];
    let mut g = vec![0.0; d * n];
    Ok(s.grid.integrate(|j, x| {
        frame_coords(x, w, t, &mut xi);
        data.gradient_at(s, j, x, &mut g);
        let mut acc = 0.0;
        for c in 0..n {
            let cg: f64 = (0..d).map(|k| w.velocity[k] * g[k * n + c]).sum();
            let vt = data.ut[j * n + c] + cg;
            acc += vt * vt;
        }
        crate::weights::chi(&xi, t, w) * acc
    }))
}

/// The exact time derivative of ℰ along the semi-discrete flow, written in
/// lab coordinates: ∫ W_t E† − ∫ (∇W·∇u)·u_t − ∫ W |u_t|², where
/// W(x,t) = χ(x − ct, t) and W_t = χ_t − c·∇χ.
pub fn localized_energy_rate(s: &FieldState, p: &PotentialSpec, m: &MinimumPoint, w: &WeightParams) -> Result<f64> {
    check_axis_velocity(s, w)?;
    let data = PointData::new(s, p, m);
    let (n, d) = (s.n, s.grid.space_dim);
    let t = s.time;
    let mut xi = vec![0.0; d];
    let mut g = vec![0.0; d * n];
    Ok(s.grid.integrate(|j, x| {
        frame_coords(x, w, t, &mut xi);
        let jet = chi_jet(&xi, t, w);
        data.gradient_at(s, j, x, &mut g);
        let wt = jet.dt - dot(&w.velocity, &jet.grad);
        let mut cross = 0.0;
        for c in 0..n {
            let gw: f64 = (0..d).map(|k| jet.grad[k] * g[k * n + c]).sum();
            cross += gw * data.ut[j * n + c];
        }
        let ut_sq: f64 = (0..n).map(|c| data.ut[j * n + c].powi(2)).sum();
        wt * data.energy[j] - cross - jet.value * ut_sq
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AsymptoticStatus {
    Converged,
    DivergingToMinusInfinity,
    Undetermined,
}

/// Estimate of lim ℰ_c(t) from the tail of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticEnergy {
    pub status: AsymptoticStatus,
    /// Tail mean when converged.
    pub value: Option<f64>,
    pub tail_mean: f64,
    /// max − min over the Cauchy window.
    pub oscillation: f64,
    pub cauchy_tol: f64,
    /// Least-squares slope over the fit window.
    pub slope: f64,
    pub div_slope: f64,
}

/// Fraction of the run used for slope fits.
pub const FIT_FRACTION: f64 = 0.5;
/// Fraction of the run used for Cauchy checks.
pub const CAUCHY_FRACTION: f64 = 0.25;
/// Slope below −DIV_SLOPE (energy units per time unit) counts as divergence.
pub const DIV_SLOPE: f64 = 1e-3;

pub fn asymptotic_energy_estimate(series: &FunctionalSeries) -> Result<AsymptoticEnergy> {
    if series.len() < 8 {
        return Err(Error::WindowTooShort(format!("series {} has {} samples", series.name, series.len())));
    }
    let cauchy = series.tail_indices(CAUCHY_FRACTION);
    let fit = series.tail_indices(FIT_FRACTION);
    if cauchy.len() < 4 || fit.len() < 4 {
        return Err(Error::WindowTooShort(format!(
            "series {}: {} samples in the Cauchy window, {} in the fit window",
            series.name,
            cauchy.len(),
            fit.len()
        )));
    }
    let tail = &series.values[cauchy];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let oscillation = hi - lo;
    let cauchy_tol = 1e-3 * (1.0 + tail_mean.abs());
    let (slope, _, _) = linear_fit(&series.times[fit.clone()], &series.values[fit]);
    let status = if oscillation < cauchy_tol {
        AsymptoticStatus::Converged
    } else if slope < -DIV_SLOPE {
        AsymptoticStatus::DivergingToMinusInfinity
    } else {
        AsymptoticStatus::Undetermined
    };
    Ok(AsymptoticEnergy {
        status,
        value: (status == AsymptoticStatus::Converged).then_some(tail_mean),
        tail_mean,
        oscillation,
        cauchy_tol,
        slope,
        div_slope: DIV_SLOPE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64) -> FunctionalSeries {
        let times: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        FunctionalSeries::new("e", times, values, SeriesParams::Plain).unwrap()
    }

    #[test]
    fn asymptotic_examples() {
        let a = asymptotic_energy_estimate(&series(|_| 0.0)).unwrap();
        assert_eq!(a.status, AsymptoticStatus::Converged);
        assert_eq!(a.value, Some(0.0));
        let a = asymptotic_energy_estimate(&series(|t| -t)).unwrap();
        assert_eq!(a.status, AsymptoticStatus::DivergingToMinusInfinity);
        let a = asymptotic_energy_estimate(&series(|t| 0.1 * t)).unwrap();
        assert_eq!(a.status, AsymptoticStatus::Undetermined);
    }

    #[test]
    fn short_window_rejected() {
        let s = FunctionalSeries::new("e", vec![0.0, 1.0, 2.0], vec![0.0; 3], SeriesParams::Plain).unwrap();
        assert!(matches!(asymptotic_energy_estimate(&s), Err(Error::WindowTooShort(_))));
    }

    #[test]
    fn series_validation() {
        assert!(FunctionalSeries::new("e", vec![0.0, 0.0], vec![0.0; 2], SeriesParams::Plain).is_err());
        assert!(FunctionalSeries::new("e", vec![0.0, 1.0], vec![0.0, f64::NAN], SeriesParams::Plain).is_err());
    }

    #[test]
    fn fit_recovers_line() {
        let x: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|t| 0.4 * t + 1.0).collect();
        let (s, i, se) = linear_fit(&x, &y);
        assert!((s - 0.4).abs() < 1e-12 && (i - 1.0).abs() < 1e-12 && se < 1e-10);
    }
}
