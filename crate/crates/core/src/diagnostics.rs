//! Escape sets, invasion speed, homogeneity tracking, time-derivative decay
//! and the invasion / no-invasion verdict.

use serde::{Deserialize, Serialize};

use crate::energy::{linear_fit, AsymptoticEnergy, AsymptoticStatus, FunctionalSeries, CAUCHY_FRACTION, FIT_FRACTION};
use crate::error::{Error, Result};
use crate::field::{FieldState, GridMode};
use crate::potential::{MinimumPoint, PotentialSpec};
use crate::solver::{time_derivative, Trajectory};

/// Σ_Esc(t) = {x : |u(x,t) − m| > d_Esc(m)} on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeSet {
    pub mask: Vec<bool>,
    /// Largest |x| in the set; radial grids interpolate the crossing of the
    /// threshold linearly between the last escaped point and its neighbour.
    pub outer_radius: f64,
    pub empty: bool,
}

pub fn sigma_esc(s: &FieldState, m: &MinimumPoint) -> EscapeSet {
    escape_set(s, m, m.escape_distance)
}

pub fn escape_set(s: &FieldState, m: &MinimumPoint, threshold: f64) -> EscapeSet {
    let dev = s.deviation(&m.m);
    let mask: Vec<bool> = dev.iter().map(|&d| d > threshold).collect();
    let empty = !mask.iter().any(|&b| b);
    let outer_radius = if empty {
        0.0
    } else {
        match s.grid.mode {
            GridMode::Radial => {
                let j = mask.iter().rposition(|&b| b).unwrap();
                if j + 1 < dev.len() {
                    let (a, b) = (dev[j], dev[j + 1]);
                    let theta = if a != b { ((a - threshold) / (a - b)).clamp(0.0, 1.0) } else { 0.0 };
                    s.grid.radius(j) + theta * s.grid.spacing
                } else {
                    s.grid.radius(j)
                }
            }
            GridMode::Cartesian => {
                (0..mask.len()).filter(|&p| mask[p]).map(|p| s.grid.radius(p)).fold(0.0, f64::max)
            }
        }
    };
    EscapeSet { mask, outer_radius, empty }
}

/// sup of |u − m| over points with |x| in [lo, hi].
fn annulus_sup(s: &FieldState, dev: &[f64], lo: f64, hi: f64) -> f64 {
    (0..s.num_points())
        .filter(|&p| {
            let r = s.grid.radius(p);
            r >= lo - 1e-12 && r <= hi + 1e-12
        })
        .map(|p| dev[p])
        .fold(0.0, f64::max)
}

/// Largest R ≤ extent such that sup_{R−L ≤ |x| ≤ R+L} |u − m| ≤ hom_tol, with
/// the annulus clipped to the domain. None when no such R exists.
pub fn r_hom(s: &FieldState, m: &MinimumPoint, hom_tol: f64, band: f64) -> Option<f64> {
    let dev = s.deviation(&m.m);
    let ext = s.grid.max_radius();
    let h = s.grid.spacing;
    let steps = (ext / h).round() as usize;
    (0..=steps).rev().map(|k| k as f64 * h).find(|&r| annulus_sup(s, &dev, (r - band).max(0.0), (r + band).min(ext)) <= hom_tol)
}

/// r_esc relative to r_hom: the largest radius r < r_hom(t) where
/// sup_{|x| = r}|u − m| ≥ d_Esc(m), 0 if none.
fn r_esc_below(s: &FieldState, m: &MinimumPoint, limit: f64) -> f64 {
    let dev = s.deviation(&m.m);
    (0..s.num_points())
        .filter(|&p| dev[p] >= m.escape_distance && s.grid.radius(p) < limit)
        .map(|p| s.grid.radius(p))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeTrack {
    pub times: Vec<f64>,
    pub r_esc_outer: Vec<f64>,
    pub r_esc_hom: Vec<f64>,
    pub r_hom: Vec<Option<f64>>,
    pub sigma_empty: Vec<bool>,
    /// sup_{|x| ≥ c_ref·t}|u − m|, the sup-norm form of the invasion-speed
    /// definition.
    pub sup_beyond: Vec<f64>,
}

/// Homogeneity parameters: hom_tol = 0.5·d_Esc, band L = 10h by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomParams {
    pub hom_tol: f64,
    pub band: f64,
    /// Reference speed for sup_{|x| ≥ c_ref t}|u − m|.
    pub c_ref: f64,
}

impl HomParams {
    pub fn defaults(m: &MinimumPoint, h: f64, c_ref: f64) -> HomParams {
        HomParams { hom_tol: 0.5 * m.escape_distance, band: 10.0 * h, c_ref }
    }
}

pub fn escape_track(traj: &Trajectory, m: &MinimumPoint, hp: &HomParams) -> EscapeTrack {
    let mut tr = EscapeTrack {
        times: Vec::new(),
        r_esc_outer: Vec::new(),
        r_esc_hom: Vec::new(),
        r_hom: Vec::new(),
        sigma_empty: Vec::new(),
        sup_beyond: Vec::new(),
    };
    for snap in &traj.snapshots {
        let s = &snap.state;
        let esc = sigma_esc(s, m);
        let rh = r_hom(s, m, hp.hom_tol, hp.band);
        let dev = s.deviation(&m.m);
        tr.times.push(s.time);
        tr.r_esc_outer.push(esc.outer_radius);
        tr.r_esc_hom.push(r_esc_below(s, m, rh.unwrap_or(s.grid.max_radius())));
        tr.r_hom.push(rh);
        tr.sigma_empty.push(esc.empty);
        tr.sup_beyond.push(annulus_sup(s, &dev, hp.c_ref * s.time, s.grid.max_radius()));
    }
    tr
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedFit {
    pub c_inv: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Unclamped least-squares slope.
    pub slope: f64,
    /// Σ_Esc empty on the whole window.
    pub degenerate: bool,
    pub samples: usize,
}

/// Least-squares slope of r_esc_outer against t over the last `fraction` of
/// the track, clamped to ≥ 0, with a 95% interval from the residual variance.
pub fn invasion_speed_fit(track: &EscapeTrack, fraction: f64) -> Result<SpeedFit> {
    let n = track.times.len();
    if n == 0 {
        return Err(Error::WindowTooShort("empty escape track".into()));
    }
    let (t0, t1) = (track.times[0], track.times[n - 1]);
    let start = t1 - fraction * (t1 - t0);
    let idx: Vec<usize> = (0..n).filter(|&i| track.times[i] >= start - 1e-12 * (1.0 + t1)).collect();
    if idx.len() < 10 {
        return Err(Error::WindowTooShort(format!("{} samples in the speed-fit window (need 10)", idx.len())));
    }
    if idx.iter().all(|&i| track.sigma_empty[i]) {
        return Ok(SpeedFit { c_inv: 0.0, ci_low: 0.0, ci_high: 0.0, slope: 0.0, degenerate: true, samples: idx.len() });
    }
    let t: Vec<f64> = idx.iter().map(|&i| track.times[i]).collect();
    let r: Vec<f64> = idx.iter().map(|&i| track.r_esc_outer[i]).collect();
    let (slope, _, se) = linear_fit(&t, &r);
    let half = 1.96 * se;
    Ok(SpeedFit {
        c_inv: slope.max(0.0),
        ci_low: (slope - half).max(0.0),
        ci_high: (slope + half).max(0.0),
        slope,
        degenerate: false,
        samples: idx.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomFlags {
    pub h_hom: bool,
    pub h_noinv: bool,
    /// Slope of r_hom against t over the tail (None if r_hom undefined there).
    pub r_hom_slope: Option<f64>,
    pub r_esc_hom_ratio_end: f64,
    pub noinv_tol: f64,
}

/// H_hom: r_hom defined, positive and ≥ r_esc_outer at every tail time.
/// H_noinv: r_esc_hom(t_end)/t_end < noinv_tol and r_esc_hom/t non-increasing
/// over the tail.
pub fn hom_flags(track: &EscapeTrack, noinv_tol: f64) -> HomFlags {
    let n = track.times.len();
    let t1 = track.times[n - 1];
    let start = track.times[0] + (1.0 - FIT_FRACTION) * (t1 - track.times[0]);
    let idx: Vec<usize> = (0..n).filter(|&i| track.times[i] >= start && track.times[i] > 0.0).collect();
    let h_hom = !idx.is_empty()
        && idx.iter().all(|&i| matches!(track.r_hom[i], Some(r) if r > 0.0 && r >= track.r_esc_outer[i]));
    let r_hom_slope = if h_hom && idx.len() >= 2 {
        let t: Vec<f64> = idx.iter().map(|&i| track.times[i]).collect();
        let r: Vec<f64> = idx.iter().map(|&i| track.r_hom[i].unwrap()).collect();
        Some(linear_fit(&t, &r).0)
    } else {
        None
    };
    let ratios: Vec<f64> = idx.iter().map(|&i| track.r_esc_hom[i] / track.times[i]).collect();
    let end_ratio = ratios.last().copied().unwrap_or(f64::INFINITY);
    let monotone = ratios.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    HomFlags { h_hom, h_noinv: end_ratio < noinv_tol && monotone, r_hom_slope, r_esc_hom_ratio_end: end_ratio, noinv_tol }
}

/// Where to take sup |u_t|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RegionLaw {
    Whole,
    /// |x| ≥ c·t.
    Beyond(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeDecay {
    pub times: Vec<f64>,
    pub sup_ut: Vec<f64>,
    pub sup_grad: Vec<f64>,
    pub sup_lap: Vec<f64>,
    /// Exponential rate fitted to sup|u_t| over the tail, if positive samples exist.
    pub rate: Option<f64>,
}

pub fn derivative_decay(traj: &Trajectory, p: &PotentialSpec, region: RegionLaw) -> DerivativeDecay {
    let mut out = DerivativeDecay { times: vec![], sup_ut: vec![], sup_grad: vec![], sup_lap: vec![], rate: None };
    for snap in &traj.snapshots {
        let s = &snap.state;
        let r0 = match region {
            RegionLaw::Whole => 0.0,
            RegionLaw::Beyond(c) => c * s.time,
        };
        let inside = |j: usize| s.grid.radius(j) >= r0 - 1e-12;
        let ut = time_derivative(s, p);
        let g = crate::field::gradient_sq(s);
        let lap = crate::field::laplacian(s);
        let n = s.n;
        let norm_at = |v: &[f64], j: usize| v[j * n..(j + 1) * n].iter().map(|x| x * x).sum::<f64>().sqrt();
        let pts = (0..s.num_points()).filter(|&j| inside(j));
        let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
        for j in pts {
            a = a.max(norm_at(&ut, j));
            b = b.max(g[j].sqrt());
            c = c.max(norm_at(&lap, j));
        }
        out.times.push(s.time);
        out.sup_ut.push(a);
        out.sup_grad.push(b);
        out.sup_lap.push(c);
    }
    let n = out.times.len();
    if n >= 4 {
        let t1 = out.times[n - 1];
        let start = out.times[0] + (1.0 - FIT_FRACTION) * (t1 - out.times[0]);
        let (t, y): (Vec<f64>, Vec<f64>) = (0..n)
            .filter(|&i| out.times[i] >= start && out.sup_ut[i] > 0.0)
            .map(|i| (out.times[i], out.sup_ut[i].ln()))
            .unzip();
        if t.len() >= 3 {
            out.rate = Some(-linear_fit(&t, &y).0);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    NoInvasion,
    Invasion,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// How value is compared to threshold, e.g. "<=".
    pub relation: String,
    pub passed: bool,
}

impl Check {
    pub fn le(name: &str, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, threshold, relation: "<=".into(), passed: value <= threshold }
    }
    pub fn ge(name: &str, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, threshold, relation: ">=".into(), passed: value >= threshold }
    }
    pub fn gt(name: &str, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, threshold, relation: ">".into(), passed: value > threshold }
    }
    pub fn lt(name: &str, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, threshold, relation: "<".into(), passed: value < threshold }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictTolerances {
    pub speed_zero_tol: f64,
    pub accept_tol: f64,
    pub ut_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub c_inv: Option<SpeedFit>,
    pub e_asympt: Option<AsymptoticEnergy>,
    /// max of sup_x|u_t| over the Cauchy window.
    pub ut_sup_tail: f64,
    pub ut_sup_series: FunctionalSeries,
    pub verdict: Verdict,
    pub checks: Vec<Check>,
    pub tolerances: VerdictTolerances,
    pub notes: Vec<String>,
}

/// NoInvasion iff the speed CI upper bound ≤ speed_zero_tol, E_∞ converged
/// and ≥ −accept_tol, and the tail of sup|u_t| ≤ ut_tol. Invasion iff the CI
/// lower bound > speed_zero_tol and the energy diverges to −∞.
pub fn dichotomy_verdict(
    speed: Result<SpeedFit>,
    energy: Result<AsymptoticEnergy>,
    ut_sup: FunctionalSeries,
    tol: VerdictTolerances,
) -> DichotomyReport {
    let mut notes = Vec::new();
    let speed = speed.map_err(|e| notes.push(format!("speed fit: {e}"))).ok();
    let energy = energy.map_err(|e| notes.push(format!("asymptotic energy: {e}"))).ok();
    let ut_tail = if ut_sup.len() >= 4 {
        ut_sup.values[ut_sup.tail_indices(CAUCHY_FRACTION)].iter().cloned().fold(0.0, f64::max)
    } else {
        notes.push("sup|u_t| series too short".into());
        f64::INFINITY
    };
    let mut checks = Vec::new();
    let (ci_hi, ci_lo) = speed.as_ref().map(|s| (s.ci_high, s.ci_low)).unwrap_or((f64::INFINITY, f64::NEG_INFINITY));
    let speed_zero = Check::le("c_inv_ci_high", ci_hi, tol.speed_zero_tol);
    let speed_pos = Check::gt("c_inv_ci_low", ci_lo, tol.speed_zero_tol);
    let converged = energy.map(|e| e.status == AsymptoticStatus::Converged).unwrap_or(false);
    let diverging = energy.map(|e| e.status == AsymptoticStatus::DivergingToMinusInfinity).unwrap_or(false);
    let e_val = energy.and_then(|e| e.value).unwrap_or(f64::NEG_INFINITY);
    let e_conv = Check::ge("e_asympt_converged", if converged { 1.0 } else { 0.0 }, 1.0);
    let e_nonneg = Check::ge("e_asympt_value", e_val, -tol.accept_tol);
    let e_div = Check::ge("e_asympt_diverging", if diverging { 1.0 } else { 0.0 }, 1.0);
    let ut = Check::le("ut_sup_tail", ut_tail, tol.ut_tol);
    let no_inv = speed_zero.passed && e_conv.passed && e_nonneg.passed && ut.passed;
    let inv = speed_pos.passed && e_div.passed;
    checks.extend([speed_zero, speed_pos, e_conv, e_nonneg, e_div, ut]);
    let verdict = match (no_inv, inv) {
        (true, false) => Verdict::NoInvasion,
        (false, true) => Verdict::Invasion,
        _ => Verdict::Inconclusive,
    };
    DichotomyReport {
        c_inv: speed,
        e_asympt: energy,
        ut_sup_tail: ut_tail,
        ut_sup_series: ut_sup,
        verdict,
        checks,
        tolerances: tol,
        notes,
    }
}

/// Cumulative ∫𝒟_c over [t_end/2, t_end] split into four equal pieces (by
/// trapezoid); returns the total and whether the pieces are non-increasing.
pub fn dissipation_integrability(series: &FunctionalSeries) -> (f64, Vec<f64>, bool) {
    let n = series.len();
    if n < 2 {
        return (0.0, vec![], true);
    }
    let t1 = series.times[n - 1];
    let t0 = 0.5 * (series.times[0] + t1);
    let mut pieces = vec![0.0; 4];
    let width = (t1 - t0) / 4.0;
    for i in 1..n {
        let (ta, tb) = (series.times[i - 1], series.times[i]);
        if ta < t0 - 1e-12 {
            continue;
        }
        let k = (((0.5 * (ta + tb) - t0) / width).floor() as usize).min(3);
        pieces[k] += 0.5 * (tb - ta) * (series.values[i - 1] + series.values[i]);
    }
    let total = pieces.iter().sum();
    let scale = pieces.iter().cloned().fold(0.0, f64::max);
    let monotone = pieces.windows(2).all(|w| w[1] <= w[0] + 1e-9 * (1.0 + scale));
    (total, pieces, monotone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::SeriesParams;

    fn track(f: impl Fn(f64) -> f64, empty: bool) -> EscapeTrack {
        let times: Vec<f64> = (0..=40).map(|k| k as f64).collect();
        let r: Vec<f64> = times.iter().map(|&t| f(t)).collect();
        EscapeTrack {
            r_esc_hom: r.clone(),
            r_hom: times.iter().map(|&t| Some(50.0 + t)).collect(),
            sigma_empty: vec![empty; times.len()],
            sup_beyond: vec![0.0; times.len()],
            r_esc_outer: r,
            times,
        }
    }

    #[test]
    fn speed_of_linear_track() {
        let tr = track(|t| 0.4 * t + 0.01 * (7.0 * t).sin(), false);
        let fit = invasion_speed_fit(&tr, 0.5).unwrap();
        assert!((fit.c_inv - 0.4).abs() < 0.01);
        assert!(fit.ci_low <= 0.4 && fit.ci_high >= 0.4 - 0.01);
    }

    #[test]
    fn empty_track_is_degenerate_zero() {
        let fit = invasion_speed_fit(&track(|_| 0.0, true), 0.5).unwrap();
        assert_eq!(fit.c_inv, 0.0);
        assert!(fit.degenerate);
    }

    #[test]
    fn short_track_rejected() {
        let mut tr = track(|_| 0.0, true);
        tr.times.truncate(5);
        assert!(invasion_speed_fit(&tr, 0.5).is_err());
    }

    #[test]
    fn verdict_gates_are_exclusive() {
        let ut = FunctionalSeries::new("ut", (0..20).map(|k| k as f64).collect(), vec![0.0; 20], SeriesParams::Other).unwrap();
        let tol = VerdictTolerances { speed_zero_tol: 0.01, accept_tol: 5e-3, ut_tol: 1e-4 };
        let speed = SpeedFit { c_inv: 0.0, ci_low: 0.0, ci_high: 0.0, slope: 0.0, degenerate: true, samples: 10 };
        let energy = AsymptoticEnergy {
            status: AsymptoticStatus::Converged,
            value: Some(0.0),
            tail_mean: 0.0,
            oscillation: 0.0,
            cauchy_tol: 1e-3,
            slope: 0.0,
            div_slope: 1e-3,
        };
        let r = dichotomy_verdict(Ok(speed), Ok(energy), ut.clone(), tol);
        assert_eq!(r.verdict, Verdict::NoInvasion);
        let r = dichotomy_verdict(Err(Error::WindowTooShort("x".into())), Ok(energy), ut, tol);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }
}
