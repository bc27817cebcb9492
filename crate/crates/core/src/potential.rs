//! Potentials V: R^n -> R and the constants derived from them.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{ball_samples, dist, dot, norm, pattern_search, project_to_ball, sphere_directions};

/// A C^2 potential. Implementations must be pure: they are evaluated from
/// many threads at once.
pub trait Potential: Send + Sync {
    fn state_dim(&self) -> usize;
    fn value(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64], out: &mut [f64]);
    /// Analytic Hessian, if available. Finite differences of the gradient are
    /// used otherwise.
    fn hessian(&self, _u: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
    fn label(&self) -> String {
        "custom".to_string()
    }
}

/// The potentials shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BuiltinPotential {
    /// ½|u|² on R^n.
    Quadratic { n: usize },
    /// (u² − 1)²/4, scalar.
    BalancedBistable,
    /// (u² − 1)²/4 − a·u, scalar.
    TiltedBistable { a: f64 },
    /// |u|⁴/4 − |u|²/2 + a·u₁ + (b/2)(u₂² + … + u_n²).
    ///
    /// With b = 0 this is rotationally symmetric up to the tilt and has a
    /// single minimum for a != 0; b > 0 pins two wells on the u₁ axis.
    VectorDoubleWell { n: usize, a: f64, b: f64 },
}

impl Potential for BuiltinPotential {
    fn state_dim(&self) -> usize {
        match *self {
            BuiltinPotential::Quadratic { n } | BuiltinPotential::VectorDoubleWell { n, .. } => n,
            _ => 1,
        }
    }

    fn value(&self, u: &[f64]) -> f64 {
        match *self {
            BuiltinPotential::Quadratic { .. } => 0.5 * dot(u, u),
            BuiltinPotential::BalancedBistable => {
                let s = u[0] * u[0] - 1.0;
                0.25 * s * s
            }
            BuiltinPotential::TiltedBistable { a } => {
                let s = u[0] * u[0] - 1.0;
                0.25 * s * s - a * u[0]
            }
            BuiltinPotential::VectorDoubleWell { a, b, .. } => {
                let r2 = dot(u, u);
                let transverse: f64 = u[1..].iter().map(|x| x * x).sum();
                0.25 * r2 * r2 - 0.5 * r2 + a * u[0] + 0.5 * b * transverse
            }
        }
    }

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        match *self {
            BuiltinPotential::Quadratic { .. } => out.copy_from_slice(u),
            BuiltinPotential::BalancedBistable => out[0] = u[0] * u[0] * u[0] - u[0],
            BuiltinPotential::TiltedBistable { a } => out[0] = u[0] * u[0] * u[0] - u[0] - a,
            BuiltinPotential::VectorDoubleWell { a, b, .. } => {
                let r2 = dot(u, u);
                for (o, x) in out.iter_mut().zip(u) {
                    *o = (r2 - 1.0) * x;
                }
                out[0] += a;
                for k in 1..u.len() {
                    out[k] += b * u[k];
                }
            }
        }
    }

    fn hessian(&self, u: &[f64]) -> Option<DMatrix<f64>> {
        Some(match *self {
            BuiltinPotential::Quadratic { n } => DMatrix::identity(n, n),
            BuiltinPotential::BalancedBistable | BuiltinPotential::TiltedBistable { .. } => {
                DMatrix::from_element(1, 1, 3.0 * u[0] * u[0] - 1.0)
            }
            BuiltinPotential::VectorDoubleWell { n, b, .. } => {
                let r2 = dot(u, u);
                let mut h = DMatrix::from_fn(n, n, |i, j| 2.0 * u[i] * u[j]);
                for k in 0..n {
                    h[(k, k)] += r2 - 1.0;
                    if k > 0 {
                        h[(k, k)] += b;
                    }
                }
                h
            }
        })
    }

    fn label(&self) -> String {
        match *self {
            BuiltinPotential::Quadratic { n } => format!("quadratic(n={n})"),
            BuiltinPotential::BalancedBistable => "balanced-bistable".into(),
            BuiltinPotential::TiltedBistable { a } => format!("tilted-bistable(a={a})"),
            BuiltinPotential::VectorDoubleWell { n, a, b } => format!("vector-double-well(n={n},a={a},b={b})"),
        }
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A potential assembled from closures; the Hessian is synthesized.
pub struct FnPotential {
    n: usize,
    value: Box<ValueFn>,
    gradient: Box<GradFn>,
}

impl FnPotential {
    pub fn new(
        n: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        FnPotential { n, value: Box::new(value), gradient: Box::new(gradient) }
    }
}

impl Potential for FnPotential {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn value(&self, u: &[f64]) -> f64 {
        (self.value)(u)
    }
    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        (self.gradient)(u, out)
    }
}

/// A potential together with the radius inside which global scans run.
#[derive(Clone)]
pub struct PotentialSpec {
    inner: Arc<dyn Potential>,
    sampling_radius: f64,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("potential", &self.inner.label())
            .field("state_dim", &self.inner.state_dim())
            .field("sampling_radius", &self.sampling_radius)
            .finish()
    }
}

impl PotentialSpec {
    pub fn new(potential: impl Potential + 'static, sampling_radius: f64) -> Self {
        assert!(potential.state_dim() > 0, "state dimension must be positive");
        assert!(sampling_radius > 0.0, "sampling radius must be positive");
        PotentialSpec { inner: Arc::new(potential), sampling_radius }
    }

    pub fn builtin(b: BuiltinPotential) -> Self {
        Self::new(b, 4.0)
    }

    pub fn with_sampling_radius(mut self, r: f64) -> Self {
        assert!(r > 0.0);
        self.sampling_radius = r;
        self
    }

    pub fn label(&self) -> String {
        self.inner.label()
    }

    pub fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    pub fn sampling_radius(&self) -> f64 {
        self.sampling_radius
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.inner.value(u)
    }

    pub fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        self.inner.gradient(u, out)
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.state_dim()];
        self.inner.gradient(u, &mut g);
        g
    }

    /// Hessian at `u`: analytic when provided, otherwise central differences
    /// of the gradient with step 1e-5·(1+|u|), symmetrized.
    pub fn hessian(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let h = match self.inner.hessian(u) {
            Some(h) => h,
            None => self.fd_hessian(u),
        };
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::Evaluation(format!("non-finite Hessian at {u:?}")));
        }
        Ok(h)
    }

    fn fd_hessian(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.state_dim();
        let step = 1e-5 * (1.0 + norm(u));
        let mut h = DMatrix::zeros(n, n);
        let mut up = u.to_vec();
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        for j in 0..n {
            up[j] = u[j] + step;
            self.inner.gradient(&up, &mut gp);
            up[j] = u[j] - step;
            self.inner.gradient(&up, &mut gm);
            up[j] = u[j];
            for i in 0..n {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        (&h + h.transpose()) * 0.5
    }
}

/// Smallest eigenvalue of D²V(u).
pub fn eig_min(p: &PotentialSpec, u: &[f64]) -> Result<f64> {
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite state {u:?}")));
    }
    let h = p.hessian(u)?;
    if h.nrows() == 1 {
        return Ok(h[(0, 0)]);
    }
    let eig = SymmetricEigen::new(h);
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// A nondegenerate local minimum of V with its escape distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimumPoint {
    pub m: Vec<f64>,
    pub lambda_min: f64,
    pub escape_distance: f64,
    pub v_at_m: f64,
}

impl MinimumPoint {
    pub fn norm(&self) -> f64 {
        norm(&self.m)
    }
}

const NEWTON_MAX_ITER: usize = 100;

fn newton_critical_point(p: &PotentialSpec, guess: &[f64]) -> Result<Vec<f64>> {
    let n = p.state_dim();
    let mut u = guess.to_vec();
    let mut g = p.gradient(&u);
    let tol = 1e-12 * (1.0 + norm(&u));
    for _ in 0..NEWTON_MAX_ITER {
        let gn = norm(&g);
        if !gn.is_finite() {
            break;
        }
        if gn <= tol {
            return Ok(u);
        }
        let h = p.hessian(&u)?;
        let rhs = DVector::from_iterator(n, g.iter().map(|x| -x));
        let step = match h.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|x| x.is_finite()) => s,
            // Singular Hessian: fall back to a gradient step.
            _ => rhs.clone(),
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; n];
        for _ in 0..40 {
            for k in 0..n {
                trial[k] = u[k] + alpha * step[k];
            }
            let gt = p.gradient(&trial);
            if norm(&gt) < gn {
                u.copy_from_slice(&trial);
                g = gt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No decrease in |grad V| along the step: we are at machine
            // resolution of the critical point or stuck.
            if gn <= 1e-9 * (1.0 + norm(&u)) {
                return Ok(u);
            }
            break;
        }
    }
    let residual = norm(&g);
    if residual <= 1e-9 * (1.0 + norm(&u)) {
        return Ok(u);
    }
    Err(Error::NoConvergence { iterations: NEWTON_MAX_ITER, residual })
}

/// Newton-refine `guess` to a critical point and accept it if the Hessian is
/// positive definite there.
pub fn find_minimum(p: &PotentialSpec, guess: &[f64]) -> Result<MinimumPoint> {
    if guess.len() != p.state_dim() {
        return Err(Error::Domain(format!(
            "guess has {} components, potential expects {}",
            guess.len(),
            p.state_dim()
        )));
    }
    if norm(guess) > p.sampling_radius() {
        return Err(Error::Domain(format!(
            "guess |u| = {} outside the sampling radius {}",
            norm(guess),
            p.sampling_radius()
        )));
    }
    let m = newton_critical_point(p, guess)?;
    let lambda_min = eig_min(p, &m)?;
    if lambda_min <= 0.0 {
        return Err(Error::NotNondegenerateMinimum { lambda_min });
    }
    let v_at_m = p.value(&m);
    let mut mp = MinimumPoint { m, lambda_min, escape_distance: 0.0, v_at_m };
    mp.escape_distance = escape_distance(p, &mp)?;
    Ok(mp)
}

/// All nondegenerate minima reachable by Newton from a deterministic set of
/// starting points in the sampling ball, sorted lexicographically.
pub fn find_all_minima(p: &PotentialSpec) -> Result<Vec<MinimumPoint>> {
    let n = p.state_dim();
    let count = if n == 1 { 41 } else { 64 };
    let mut starts = ball_samples(&vec![0.0; n], 0.95 * p.sampling_radius(), count, 0);
    starts.push(vec![0.0; n]);
    let mut found: Vec<Vec<f64>> = Vec::new();
    for s in &starts {
        let Ok(c) = newton_critical_point(p, s) else { continue };
        if found.iter().any(|f| dist(f, &c) < 1e-6) || norm(&c) > p.sampling_radius() {
            continue;
        }
        found.push(c);
    }
    let mut minima = Vec::new();
    for c in found {
        let lam = eig_min(p, &c)?;
        if lam > 0.0 {
            let v_at_m = p.value(&c);
            let mut mp = MinimumPoint { m: c, lambda_min: lam, escape_distance: 0.0, v_at_m };
            mp.escape_distance = escape_distance(p, &mp)?;
            minima.push(mp);
        } else {
            log::debug!("critical point {:?} with lambda_min = {lam} is not a minimum", c);
        }
    }
    minima.sort_by(|a, b| a.m.partial_cmp(&b.m).unwrap_or(std::cmp::Ordering::Equal));
    Ok(minima)
}

/// Default sampling radius: 4·max(1, max |m|).
pub fn default_sampling_radius(minima: &[MinimumPoint]) -> f64 {
    4.0 * minima.iter().map(|m| m.norm()).fold(1.0, f64::max)
}

/// Points of the closed ball `B(center, radius)` used for Hessian scans:
/// concentric spheres at 64 levels per unit radius, directions scaled to the
/// same density.
fn hessian_scan_points(center: &[f64], radius: f64, density: f64) -> Vec<Vec<f64>> {
    let n = center.len();
    let levels = ((density * radius).ceil() as usize).max(2);
    let dirs = match n {
        1 => sphere_directions(1, 2),
        2 => sphere_directions(2, ((density * std::f64::consts::TAU * radius).ceil() as usize).max(16)),
        _ => sphere_directions(n, 256),
    };
    let mut pts = vec![center.to_vec()];
    for l in 1..=levels {
        let r = radius * l as f64 / levels as f64;
        for d in &dirs {
            pts.push(center.iter().zip(d).map(|(c, x)| c + r * x).collect());
        }
    }
    pts
}

/// Minimum of λ_min over the closed ball, sampled then refined by a pattern
/// search from the four worst samples.
fn min_eig_over_ball(p: &PotentialSpec, center: &[f64], radius: f64, density: f64) -> Result<(f64, Vec<f64>)> {
    let pts = hessian_scan_points(center, radius, density);
    let mut vals = Vec::with_capacity(pts.len());
    for u in &pts {
        vals.push(eig_min(p, u)?);
    }
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut best = (vals[order[0]], pts[order[0]].clone());
    if radius == 0.0 {
        return Ok(best);
    }
    let step = radius / ((density * radius).ceil().max(2.0));
    for &i in order.iter().take(4) {
        let (x, fx) = pattern_search(
            |u| eig_min(p, u).unwrap_or(f64::NEG_INFINITY),
            |u| project_to_ball(u, center, radius),
            &pts[i],
            step,
            1e-9 * (1.0 + radius),
        );
        if fx < best.0 {
            best = (fx, x);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Evaluation(format!("non-finite Hessian near {:?}", best.1)));
    }
    Ok(best)
}

/// Sampling density of Hessian scans, points per unit length.
pub const ESCAPE_SCAN_DENSITY: f64 = 64.0;

/// sup{δ ∈ [0,1] : |u−m| ≤ δ ⇒ λ_min(u) ≥ λ_min(m)/2}, by bisection to 1e-6.
pub fn escape_distance(p: &PotentialSpec, m: &MinimumPoint) -> Result<f64> {
    escape_distance_with_density(p, m, ESCAPE_SCAN_DENSITY)
}

pub fn escape_distance_with_density(p: &PotentialSpec, m: &MinimumPoint, density: f64) -> Result<f64> {
    let target = 0.5 * m.lambda_min;
    let ok = |delta: f64| -> Result<bool> { Ok(min_eig_over_ball(p, &m.m, delta, density)?.0 >= target) };
    if ok(1.0)? {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Result of [`coercivity_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityConstants {
    pub eps_coerc: f64,
    pub k_coerc: f64,
    pub q_low_hull: f64,
    pub w_en: f64,
}

impl CoercivityConstants {
    /// Radius of the attracting ball, √(K/ε + 1).
    pub fn r_att(&self) -> f64 {
        (self.k_coerc / self.eps_coerc + 1.0).sqrt()
    }
}

fn scan_count(n: usize) -> usize {
    if n == 1 {
        8001
    } else {
        20_000
    }
}

/// Fit ε, K of w·∇V(w) ≥ ε|w|² − K and the lower quadratic hull convexity.
///
/// ε = min(1, min over the sphere |w| = R_samp of w·∇V/|w|²); K is the
/// sampled maximum of ε|w|² − w·∇V(w), refined locally and inflated by a
/// relative 1e-6 margin.
pub fn coercivity_scan(p: &PotentialSpec, minima: &[MinimumPoint]) -> Result<CoercivityConstants> {
    if minima.is_empty() {
        return Err(Error::Domain("coercivity scan needs at least one minimum".into()));
    }
    let n = p.state_dim();
    let r = p.sampling_radius();
    let origin = vec![0.0; n];
    let shell_dirs = sphere_directions(n, if n == 2 { 1024 } else { 4096 });
    let mut eps = 1.0f64;
    for d in &shell_dirs {
        let w: Vec<f64> = d.iter().map(|x| r * x).collect();
        let ratio = dot(&w, &p.gradient(&w)) / (r * r);
        if !ratio.is_finite() {
            return Err(Error::Evaluation(format!("non-finite gradient at {w:?}")));
        }
        eps = eps.min(ratio);
    }
    if eps <= 0.0 {
        return Err(Error::CoercivityViolated(format!(
            "w·grad V(w)/|w|^2 reaches {eps} on the sphere |w| = {r}"
        )));
    }

    let mut samples = ball_samples(&origin, r, scan_count(n), 0);
    samples.extend(shell_dirs.iter().map(|d| d.iter().map(|x| r * x).collect::<Vec<f64>>()));

    let deficit = |w: &[f64]| eps * dot(w, w) - dot(w, &p.gradient(w));
    let (mut k_best, mut k_arg) = (f64::NEG_INFINITY, origin.clone());
    for w in &samples {
        let v = deficit(w);
        if v > k_best {
            k_best = v;
            k_arg = w.clone();
        }
    }
    let (_, neg) = pattern_search(|w| -deficit(w), |w| project_to_ball(w, &origin, r), &k_arg, 0.05 * r, 1e-12);
    let k = (-neg).max(k_best).max(0.0) * (1.0 + 1e-6);

    let mut q = f64::INFINITY;
    for mp in minima {
        let ratio = |u: &[f64]| {
            let d2 = dot(u, u) - 2.0 * dot(u, &mp.m) + dot(&mp.m, &mp.m);
            if d2 < 1e-14 {
                f64::INFINITY
            } else {
                (p.value(u) - mp.v_at_m) / d2
            }
        };
        let (mut best, mut arg) = (f64::INFINITY, origin.clone());
        for u in &samples {
            let v = ratio(u);
            if v < best {
                best = v;
                arg = u.clone();
            }
        }
        let (_, refined) = pattern_search(ratio, |u| project_to_ball(u, &origin, r), &arg, 0.05 * r, 1e-12);
        q = q.min(best.min(refined));
    }
    let w_en = 1.0 / (-4.0 * q).max(1.0);
    Ok(CoercivityConstants { eps_coerc: eps, k_coerc: k, q_low_hull: q, w_en })
}

/// Tolerance of [`second_order_check`].
pub const CHECK_TOLERANCE: f64 = 1e-10;

/// The three second-order estimates around a minimum, each to within
/// `CHECK_TOLERANCE`:
/// (i) V(u)−V(m) ≥ λ_min(m)/4·|u−m|², (ii) (u−m)·∇V(u) ≥ λ_min(m)/2·|u−m|²,
/// (iii) (u−m)·∇V(u) ≥ V(u)−V(m).
pub fn second_order_check(p: &PotentialSpec, m: &MinimumPoint, u: &[f64]) -> Result<[bool; 3]> {
    let d = dist(u, &m.m);
    if d > m.escape_distance * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("|u - m| = {d} exceeds d_Esc(m) = {}", m.escape_distance)));
    }
    let dv = p.value(u) - m.v_at_m;
    let w: Vec<f64> = u.iter().zip(&m.m).map(|(a, b)| a - b).collect();
    let wg = dot(&w, &p.gradient(u));
    let tol = CHECK_TOLERANCE * (1.0 + dv.abs() + wg.abs());
    Ok([
        dv >= 0.25 * m.lambda_min * d * d - tol,
        wg >= 0.5 * m.lambda_min * d * d - tol,
        wg >= dv - tol,
    ])
}

/// λ = 2·min over the closed δ''-ball of λ_min(v).
pub fn local_coercivity_lambda(p: &PotentialSpec, m: &MinimumPoint, delta2: f64) -> Result<f64> {
    if !(delta2 >= 0.0) {
        return Err(Error::Domain(format!("delta'' = {delta2} must be nonnegative")));
    }
    let (lam, _) = min_eig_over_ball(p, &m.m, delta2, ESCAPE_SCAN_DENSITY)?;
    if lam <= 0.0 {
        return Err(Error::DeltaTooLarge { delta2, lambda_min: lam });
    }
    Ok(2.0 * lam)
}
