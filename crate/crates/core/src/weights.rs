//! Exponential weight functions and the closed-form integrals they need.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::sampling::{dot, norm};

/// Parameters of the χ and ψ weight families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    /// Exponential decay rate (κ₀ or κ).
    pub kappa: f64,
    /// Speed of the cutoff radius.
    pub c_cut: f64,
    /// Frame velocity c ∈ R^d.
    pub velocity: Vec<f64>,
    /// Translation x̄ ∈ R^d.
    pub center: Vec<f64>,
}

impl WeightParams {
    pub fn new(kappa: f64, c_cut: f64, velocity: Vec<f64>) -> WeightParams {
        let d = velocity.len();
        WeightParams { kappa, c_cut, velocity, center: vec![0.0; d] }
    }

    pub fn standing(kappa: f64, c_cut: f64, d: usize) -> WeightParams {
        Self::new(kappa, c_cut, vec![0.0; d])
    }

    pub fn speed(&self) -> f64 {
        norm(&self.velocity)
    }

    fn rel(&self, xi: &[f64]) -> Vec<f64> {
        xi.iter().zip(&self.center).map(|(a, b)| a - b).collect()
    }
}

/// Value and derivatives of a weight at a point (in frame coordinates ξ,
/// t-derivative at fixed ξ). The Laplacian is the classical one away from
/// the kink radii.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightJet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub dt: f64,
    pub laplacian: f64,
}

/// Profile S(ρ, t) with ∂_ρ S, ∂_ρρ S, ∂_t S.
type Profile = (f64, f64, f64, f64);

fn chi_profile(rho: f64, t: f64, w: &WeightParams) -> Profile {
    let a = w.c_cut * t;
    if rho <= a {
        (1.0, 0.0, 0.0, 0.0)
    } else {
        let s = (-w.kappa * (rho - a)).exp();
        (s, -w.kappa * s, w.kappa * w.kappa * s, w.kappa * w.c_cut * s)
    }
}

fn psi_profile(rho: f64, t: f64, w: &WeightParams) -> Profile {
    let a = w.c_cut * t;
    let k = w.kappa;
    let plus = (-k * (a - rho).abs()).exp();
    let minus = (-k * (a + rho)).exp();
    let sgn = if a > rho {
        1.0
    } else if a < rho {
        -1.0
    } else {
        0.0
    };
    let s = plus + minus;
    (s, k * sgn * plus - k * minus, k * k * s, -k * w.c_cut * (sgn * plus + minus))
}

fn jet(xi: &[f64], t: f64, w: &WeightParams, profile: fn(f64, f64, &WeightParams) -> Profile) -> WeightJet {
    let x = w.rel(xi);
    let d = x.len();
    let rho = norm(&x);
    let (s, s1, s2, st) = profile(rho, t, w);
    let tilt = dot(&w.velocity, &x).exp();
    let unit: Vec<f64> = if rho > 0.0 { x.iter().map(|v| v / rho).collect() } else { vec![0.0; d] };
    let value = tilt * s;
    let grad = (0..d).map(|k| value * w.velocity[k] + tilt * s1 * unit[k]).collect();
    let c2 = dot(&w.velocity, &w.velocity);
    let radial = if rho > 0.0 { (d as f64 - 1.0) * s1 / rho } else { 0.0 };
    let laplacian = tilt * (c2 * s + 2.0 * s1 * dot(&w.velocity, &unit) + s2 + radial);
    WeightJet { value, grad, dt: tilt * st, laplacian }
}

/// T_x̄ψ₀(x) = exp(−κ₀|x − x̄|).
pub fn psi0(x: &[f64], xbar: &[f64], kappa0: f64) -> f64 {
    let r = x.iter().zip(xbar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (-kappa0 * r).exp()
}

/// χ(ξ,t) = e^{c·ξ} times 1 inside |ξ| ≤ c_cut·t and exp(−κ(|ξ| − c_cut·t)) outside.
pub fn chi(xi: &[f64], t: f64, w: &WeightParams) -> f64 {
    let x = w.rel(xi);
    dot(&w.velocity, &x).exp() * chi_profile(norm(&x), t, w).0
}

pub fn chi_jet(xi: &[f64], t: f64, w: &WeightParams) -> WeightJet {
    jet(xi, t, w, chi_profile)
}

/// ψ(ξ,t) = e^{c·ξ}(ψ₊ + ψ₋), ψ_± = exp(−κ|∓c_cut·t − |ξ||).
pub fn psi(xi: &[f64], t: f64, w: &WeightParams) -> f64 {
    let x = w.rel(xi);
    dot(&w.velocity, &x).exp() * psi_profile(norm(&x), t, w).0
}

pub fn psi_jet(xi: &[f64], t: f64, w: &WeightParams) -> WeightJet {
    jet(xi, t, w, psi_profile)
}

/// e_n(τ) = Σ_{k=0}^n τ^k/k!.
pub fn exp_sum(n: u32, tau: f64) -> f64 {
    if let Some(v) = exp_sum_integer(n, tau) {
        return v;
    }
    let mut term = 1.0;
    let mut acc = 1.0;
    for k in 1..=n {
        term *= tau / k as f64;
        acc += term;
    }
    acc
}

/// Correctly rounded e_n(τ) for integer τ when n!·e_n(τ) = Σ τ^k·n!/k! and n!
/// are integers below 2^53: one rounding, in the final division.
fn exp_sum_integer(n: u32, tau: f64) -> Option<f64> {
    const EXACT: i128 = 1 << 53;
    if tau.fract() != 0.0 || tau.abs() > EXACT as f64 || n > 18 {
        return None;
    }
    let t = tau as i128;
    let fact: i128 = (1..=n as i128).product();
    if fact >= EXACT {
        return None;
    }
    let mut sum: i128 = 0;
    let mut falling: i128 = 1;
    for k in (0..=n).rev() {
        sum = sum.checked_add(t.checked_pow(k)?.checked_mul(falling)?)?;
        if sum.abs() >= EXACT {
            return None;
        }
        falling = falling.checked_mul(k as i128)?;
    }
    Some(sum as f64 / fact as f64)
}

pub fn tail_integral(rho0: f64, n: u32) -> f64 {
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    fact * (-rho0).exp() * exp_sum(n, rho0)
}

/// Area of the unit sphere S^{d−1} ⊂ R^d, 2π^{d/2}/Γ(d/2).
pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0),
    }
}

/// Check κ, c_cut against the three conditions needed by the traveling firewall.
pub fn check_firewall_conditions(kappa: f64, c_cut: f64, w_en: f64, lambda_min: f64, d: usize) -> Result<()> {
    let tol = 1e-12;
    let conds = [
        (w_en * kappa * (c_cut / 2.0 + kappa / 4.0), 0.5, "w_en·κ(c_cut/2 + κ/4) ≤ 1/2"),
        (w_en * kappa * c_cut, 0.25, "w_en·κ·c_cut ≤ 1/4"),
        (kappa * (d as f64 * kappa + c_cut) / 2.0, lambda_min / 8.0, "κ(dκ + c_cut)/2 ≤ λ_min/8"),
    ];
    for (lhs, rhs, name) in conds {
        if lhs > rhs * (1.0 + tol) {
            return Err(Error::Domain(format!("weight condition {name} violated: {lhs} > {rhs}")));
        }
    }
    Ok(())
}

/// Check a frame velocity against |c| ≤ √λ_min/4, |c| ≤ κ/20, |c| ≤ c_cut/6.
pub fn check_frame_conditions(speed: f64, kappa: f64, c_cut: f64, lambda_min: f64) -> Result<()> {
    let tol = 1e-12;
    let conds = [
        (lambda_min.sqrt() / 4.0, "|c| ≤ √λ_min/4"),
        (kappa / 20.0, "|c| ≤ κ/20"),
        (c_cut / 6.0, "|c| ≤ c_cut/6"),
    ];
    for (bound, name) in conds {
        if speed > bound * (1.0 + tol) {
            return Err(Error::Domain(format!("frame condition {name} violated: {speed} > {bound}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn psi0_examples() {
        assert_eq!(psi0(&[1.0, 2.0], &[1.0, 2.0], 0.3), 1.0);
        assert_abs_diff_eq!(psi0(&[2.0, 0.0], &[0.0, 0.0], 0.5), (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn chi_examples() {
        let w = WeightParams::standing(0.5, 1.0, 2);
        assert_eq!(chi(&[1.0, 1.0], 3.0, &w), 1.0);
        assert_abs_diff_eq!(chi(&[3.0 + 2.0, 0.0], 3.0, &w), (-1.0f64).exp(), epsilon = 1e-15);
        let w = WeightParams::new(0.5, 1.0, vec![0.01, 0.0]);
        assert_abs_diff_eq!(chi(&[2.0, 0.0], 2.0, &w), 0.02f64.exp(), epsilon = 1e-15);
    }

    #[test]
    fn psi_examples() {
        let w = WeightParams::standing(0.4, 0.3, 2);
        assert_eq!(psi(&[0.0, 0.0], 0.0, &w), 2.0);
        let t = 5.0;
        let r = w.c_cut * t;
        assert_abs_diff_eq!(psi(&[0.0, r], t, &w), 1.0 + (-2.0 * w.kappa * r).exp(), epsilon = 1e-15);
    }

    #[test]
    fn closed_forms() {
        assert_eq!(exp_sum(0, 7.0), 1.0);
        assert_eq!(exp_sum(2, 1.0), 2.5);
        assert_abs_diff_eq!(exp_sum(3, 2.0), 19.0 / 3.0, epsilon = 1e-15);
        assert_eq!(tail_integral(0.0, 2), 2.0);
        assert_abs_diff_eq!(tail_integral(1.0, 0), (-1.0f64).exp(), epsilon = 1e-16);
        assert_abs_diff_eq!(tail_integral(2.0, 3), 38.0 * (-2.0f64).exp(), epsilon = 1e-13);
        assert_abs_diff_eq!(sphere_area(4), 2.0 * std::f64::consts::PI.powi(2), epsilon = 1e-12);
        assert_abs_diff_eq!(sphere_area(5), 8.0 * std::f64::consts::PI.powi(2) / 3.0, epsilon = 1e-12);
    }
}
