//! The quadratic-at-infinity potential V‡, the envelope N̄(q), the explicit
//! supersolution η̄ and the no-escape speed c_noesc.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldState;
use crate::potential::{local_coercivity_lambda, MinimumPoint, PotentialSpec};
use crate::sampling::{dot, norm, pattern_search, project_to_sphere, sphere_directions};
use crate::solver::{time_derivative, Trajectory};

/// Cutoff used to blend V† into ½|v|².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoffProfile {
    /// 1 − (6s⁵ − 15s⁴ + 10s³).
    Smoothstep,
    /// 1 − s.
    Linear,
}

impl CutoffProfile {
    /// χ(s) and χ'(s); χ = 1 for s ≤ 0 and 0 for s ≥ 1.
    pub fn eval(self, s: f64) -> (f64, f64) {
        if s <= 0.0 {
            return (1.0, 0.0);
        }
        if s >= 1.0 {
            return (0.0, 0.0);
        }
        match self {
            CutoffProfile::Smoothstep => {
                let s3 = s * s * s;
                (1.0 - s3 * (10.0 - 15.0 * s + 6.0 * s * s), -30.0 * s * s * (1.0 - s) * (1.0 - s))
            }
            CutoffProfile::Linear => (1.0 - s, -1.0),
        }
    }
}

/// V‡(v) = χ(|v| − r_switch)V†(v) + (1 − χ(|v| − r_switch))|v|²/2 and its
/// gradient, with V†(v) = V(m + v) − V(m).
pub fn v_ddag(p: &PotentialSpec, m: &MinimumPoint, v: &[f64], r_switch: f64, profile: CutoffProfile) -> (f64, Vec<f64>) {
    let u: Vec<f64> = v.iter().zip(&m.m).map(|(a, b)| a + b).collect();
    let vd = p.value(&u) - m.v_at_m;
    let gd = p.gradient(&u);
    let r = norm(v);
    let (chi, dchi) = profile.eval(r - r_switch);
    let half = 0.5 * r * r;
    let value = chi * vd + (1.0 - chi) * half;
    let grad = (0..v.len())
        .map(|k| {
            let radial = if r > 0.0 { dchi * (vd - half) * v[k] / r } else { 0.0 };
            chi * gd[k] + (1.0 - chi) * v[k] + radial
        })
        .collect();
    (value, grad)
}

/// Evaluator of N̄(q) = max over ½|v|² = q of −v·∇V‡(v).
#[derive(Clone)]
pub struct NBar {
    p: PotentialSpec,
    m: MinimumPoint,
    pub r_switch: f64,
    pub profile: CutoffProfile,
    directions: Vec<Vec<f64>>,
    refine_from: usize,
}

impl NBar {
    /// 256 sphere directions and local ascent from the best 8 (n ≥ 2), or the
    /// two points ±√(2q) (n = 1).
    pub fn new(p: &PotentialSpec, m: &MinimumPoint, r_switch: f64, profile: CutoffProfile) -> NBar {
        Self::with_sampling(p, m, r_switch, profile, 256, 8)
    }

    pub fn with_sampling(
        p: &PotentialSpec,
        m: &MinimumPoint,
        r_switch: f64,
        profile: CutoffProfile,
        directions: usize,
        refine_from: usize,
    ) -> NBar {
        let n = p.state_dim();
        NBar {
            p: p.clone(),
            m: m.clone(),
            r_switch,
            profile,
            directions: sphere_directions(n, directions),
            refine_from: if n == 1 { 0 } else { refine_from },
        }
    }

    fn integrand(&self, v: &[f64]) -> f64 {
        let (_, g) = v_ddag(&self.p, &self.m, v, self.r_switch, self.profile);
        -dot(v, &g)
    }

    pub fn eval(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        let r = (2.0 * q).sqrt();
        let pts: Vec<Vec<f64>> = self.directions.iter().map(|d| d.iter().map(|x| r * x).collect()).collect();
        let mut vals: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, v)| (self.integrand(v), i)).collect();
        vals.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut best = vals[0].0;
        if self.p.state_dim() == 2 {
            let half = 2.0 * std::f64::consts::PI / self.directions.len() as f64;
            for &(_, i) in vals.iter().take(self.refine_from) {
                let theta = pts[i][1].atan2(pts[i][0]);
                let g = |a: f64| -self.integrand(&[r * a.cos(), r * a.sin()]);
                let (_, neg) = golden_section_min(g, theta - half, theta + half, 1e-13);
                best = best.max(-neg);
            }
            return best;
        }
        let origin = vec![0.0; self.p.state_dim()];
        let step = r * std::f64::consts::PI / self.directions.len() as f64;
        for &(_, i) in vals.iter().take(self.refine_from) {
            let (_, neg) =
                pattern_search(|v| -self.integrand(v), |v| project_to_sphere(v, &origin, r), &pts[i], step, 1e-12 * (1.0 + r));
            best = best.max(-neg);
        }
        best
    }
}

/// Parameters of the explicit supersolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionParams {
    pub lambda: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub delta_second: f64,
    pub gamma_prime: f64,
    pub gamma_second: f64,
    pub q_max: f64,
    pub r_esc_init: f64,
    pub c: f64,
    pub r_coerc: f64,
    /// r_max_infty + |m|, where V‡ starts to depart from V†.
    pub r_switch: f64,
}

impl SupersolutionParams {
    /// δ, δ', δ'' = 0.5, 0.6, 0.8 × d_Esc(m), halved together until λ_min
    /// stays positive on the δ''-ball; λ from the local coercivity scan;
    /// r_coerc = r_bound + |m| + 1 + √(λδ'²/2), q_max = ½r_coerc².
    /// `c` and `r_esc_init` start at 0.
    pub fn new(p: &PotentialSpec, m: &MinimumPoint, r_bound: f64) -> Result<SupersolutionParams> {
        let mut scale = 1.0;
        let (lambda, d_esc) = loop {
            let d = scale * m.escape_distance;
            match local_coercivity_lambda(p, m, 0.8 * d) {
                Ok(l) => break (l, d),
                Err(Error::DeltaTooLarge { .. }) if scale > 1e-6 => scale *= 0.5,
                Err(e) => return Err(e),
            }
        };
        let (delta, delta_prime, delta_second) = (0.5 * d_esc, 0.6 * d_esc, 0.8 * d_esc);
        let r_coerc = r_bound + m.norm() + 1.0 + (lambda * delta_prime * delta_prime / 2.0).sqrt();
        Ok(SupersolutionParams {
            lambda,
            delta,
            delta_prime,
            delta_second,
            gamma_prime: 0.5 * delta_prime * delta_prime,
            gamma_second: 0.5 * delta_second * delta_second,
            q_max: 0.5 * r_coerc * r_coerc,
            r_esc_init: 0.0,
            c: 0.0,
            r_coerc,
            r_switch: r_bound + m.norm(),
        })
    }

    pub fn gap(&self) -> f64 {
        self.gamma_second - self.gamma_prime
    }

    /// End of the linear ramp of η₀, q_max/(γ'' − γ').
    pub fn ramp_end(&self) -> f64 {
        self.q_max / self.gap()
    }
}

/// Minimum of a unimodal f on [a, b] by golden-section search, as (x, f(x)).
fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a < tol {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 { (x1, f1) } else { (x2, f2) }
}

/// Both branches of c_noesc and where the supremum of N̄ sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoEscapeSpeed {
    pub value: f64,
    /// (λγ' + sup N̄)/(γ'' − γ').
    pub branch_ramp: f64,
    /// 1 − λ.
    pub branch_tail: f64,
    pub sup_n_bar: f64,
    pub argsup_q: f64,
}

/// Largest value of N̄ on [0, q_hi]: dense grid of 4001 points, then golden
/// section refinement around the five best grid maxima.
pub fn sup_n_bar(nbar: &NBar, q_hi: f64) -> (f64, f64) {
    let k = 4000usize;
    let qs: Vec<f64> = (0..=k).map(|i| q_hi * i as f64 / k as f64).collect();
    let vals: Vec<f64> = qs.iter().map(|&q| nbar.eval(q)).collect();
    let mut local: Vec<usize> = (0..=k)
        .filter(|&i| (i == 0 || vals[i] >= vals[i - 1]) && (i == k || vals[i] >= vals[i + 1]))
        .collect();
    local.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut best = (vals[local[0]], qs[local[0]]);
    let h = q_hi / k as f64;
    for &i in local.iter().take(5) {
        let (a, b) = ((qs[i] - h).max(0.0), (qs[i] + h).min(q_hi));
        let (q, neg) = golden_section_min(|q| -nbar.eval(q), a, b, 1e-14 * (1.0 + q_hi));
        if -neg > best.0 {
            best = (-neg, q);
        }
    }
    best
}

/// c_noesc = max((λγ' + sup_{q ∈ [0, q_max + γ'']} N̄(q))/(γ'' − γ'), 1 − λ).
pub fn c_noesc(params: &SupersolutionParams, nbar: &NBar) -> Result<NoEscapeSpeed> {
    if !(params.gap() > 0.0) {
        return Err(Error::Domain("c_noesc needs gamma'' > gamma'".into()));
    }
    let (sup, arg) = sup_n_bar(nbar, params.q_max + params.gamma_second);
    let branch_ramp = (params.lambda * params.gamma_prime + sup) / params.gap();
    let branch_tail = 1.0 - params.lambda;
    Ok(NoEscapeSpeed { value: branch_ramp.max(branch_tail), branch_ramp, branch_tail, sup_n_bar: sup, argsup_q: arg })
}

/// η₀(ρ): plateau, linear ramp, exponential tail.
pub fn eta0(rho: f64, params: &SupersolutionParams) -> f64 {
    let gap = params.gap();
    let end = params.ramp_end();
    if rho <= 0.0 {
        params.q_max + gap
    } else if rho <= end {
        params.q_max + gap * (1.0 - rho)
    } else {
        gap * (-rho + end).exp()
    }
}

/// (η₀, η₀', η₀'') on the open pieces.
fn eta0_jet(rho: f64, params: &SupersolutionParams) -> (f64, f64, f64) {
    let gap = params.gap();
    let end = params.ramp_end();
    if rho < 0.0 {
        (params.q_max + gap, 0.0, 0.0)
    } else if rho < end {
        (params.q_max + gap * (1.0 - rho), -gap, 0.0)
    } else {
        let e = gap * (-rho + end).exp();
        (e, -e, e)
    }
}

/// η̄(x,t) = η₀(|x| − ct − r_esc_init) + γ'e^{−λt}.
pub fn eta_bar(x: &[f64], t: f64, params: &SupersolutionParams) -> f64 {
    eta_bar_radial(norm(x), t, params)
}

pub fn eta_bar_radial(r: f64, t: f64, params: &SupersolutionParams) -> f64 {
    eta0(r - params.c * t - params.r_esc_init, params) + params.gamma_prime * (-params.lambda * t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionResidual {
    /// max over samples of RHS − LHS.
    pub max_residual: f64,
    pub at_r: f64,
    pub at_t: f64,
    /// Per-piece maxima on I₁ (plateau), I₂ (ramp), I₃ (tail); −∞ if unsampled.
    pub by_interval: [f64; 3],
    pub samples: usize,
}

/// Evaluate N̄(η̄) + ∂_rrη + c∂_rη + λγ'e^{−λt} (RHS − LHS of the
/// supersolution inequality) on an `nr × nt` grid of [0, r_hi] × [0, t_hi],
/// skipping samples within one r-cell of a kink.
pub fn supersolution_residual(
    params: &SupersolutionParams,
    nbar: &NBar,
    r_hi: f64,
    t_hi: f64,
    nr: usize,
    nt: usize,
) -> SupersolutionResidual {
    let dr = r_hi / (nr - 1) as f64;
    let end = params.ramp_end();
    let mut out = SupersolutionResidual {
        max_residual: f64::NEG_INFINITY,
        at_r: f64::NAN,
        at_t: f64::NAN,
        by_interval: [f64::NEG_INFINITY; 3],
        samples: 0,
    };
    let mut last = (f64::NAN, f64::NAN);
    for it in 0..nt {
        let t = t_hi * it as f64 / (nt - 1) as f64;
        let decay = params.gamma_prime * (-params.lambda * t).exp();
        for ir in 0..nr {
            let r = dr * ir as f64;
            let rho = r - params.c * t - params.r_esc_init;
            if rho.abs() < dr || (rho - end).abs() < dr {
                continue;
            }
            let (eta, d1, d2) = eta0_jet(rho, params);
            let q = eta + decay;
            if q != last.0 {
                last = (q, nbar.eval(q));
            }
            let res = last.1 + d2 + params.c * d1 + params.lambda * decay;
            let piece = if rho < 0.0 {
                0
            } else if rho < end {
                1
            } else {
                2
            };
            out.by_interval[piece] = out.by_interval[piece].max(res);
            out.samples += 1;
            if res > out.max_residual {
                out.max_residual = res;
                out.at_r = r;
                out.at_t = t;
            }
        }
    }
    out
}

/// Smallest radius beyond which |u†(x,0)| ≤ δ' everywhere on the grid.
pub fn escape_radius_initial(s: &FieldState, m: &MinimumPoint, delta_prime: f64) -> f64 {
    let dev = s.deviation(&m.m);
    let outer = (0..s.num_points()).filter(|&j| dev[j] > delta_prime).map(|j| s.grid.radius(j)).fold(0.0, f64::max);
    outer.max(s.grid.spacing)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// max over snapshots and points of q†(x,t) − η̄(x,t).
    pub max_excess: f64,
    pub holds: bool,
    /// max of q†_t − N̄(q†) − Δq† over the spot-check points.
    pub subsolution_max_residual: f64,
    pub snapshots_checked: usize,
}

/// Check q† = ½|u − m|² ≤ η̄ at every snapshot and spot-check the
/// subsolution inequality q†_t ≤ N̄(q†) + Δq† on every `spot_stride`-th
/// grid point.
pub fn sandwich_monitor(
    traj: &Trajectory,
    p: &PotentialSpec,
    m: &MinimumPoint,
    params: &SupersolutionParams,
    nbar: &NBar,
    tol: f64,
    spot_stride: usize,
) -> Result<SandwichReport> {
    let excess = |s: &FieldState| {
        s.deviation(&m.m)
            .iter()
            .enumerate()
            .map(|(j, d)| 0.5 * d * d - eta_bar_radial(s.grid.radius(j), s.time, params))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let first = &traj.snapshots[0].state;
    let e0 = excess(first);
    if e0 > tol {
        return Err(Error::REscInitTooSmall(format!(
            "initial q†(x,0) exceeds η̄(x,0) by {e0} with r_esc_init = {}",
            params.r_esc_init
        )));
    }
    let mut max_excess = e0;
    let mut sub = f64::NEG_INFINITY;
    for snap in &traj.snapshots {
        let s = &snap.state;
        max_excess = max_excess.max(excess(s));
        let n = s.n;
        let ut = time_derivative(s, p);
        let q: Vec<f64> = s.deviation(&m.m).iter().map(|d| 0.5 * d * d).collect();
        let mut lap = vec![0.0; q.len()];
        s.grid.laplacian_into(&q, 1, &mut lap);
        for j in (0..s.num_points()).step_by(spot_stride.max(1)) {
            if s.grid.is_boundary(j) {
                continue;
            }
            let dev: Vec<f64> = s.at(j).iter().zip(&m.m).map(|(a, b)| a - b).collect();
            let qt = dot(&dev, &ut[j * n..(j + 1) * n]);
            sub = sub.max(qt - nbar.eval(q[j]) - lap[j]);
        }
    }
    Ok(SandwichReport {
        max_excess,
        holds: max_excess <= tol,
        subsolution_max_residual: sub,
        snapshots_checked: traj.snapshots.len(),
    })
}
