use gradflow::comparison::{
    c_noesc, eta_bar_radial, sup_n_bar, supersolution_residual, v_ddag, CutoffProfile, NBar, SupersolutionParams,
};
use gradflow::potential::{find_minimum, BuiltinPotential, MinimumPoint, PotentialSpec};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn quadratic_setup(n: usize) -> (PotentialSpec, MinimumPoint, NBar) {
    let p = PotentialSpec::builtin(BuiltinPotential::Quadratic { n });
    let m = find_minimum(&p, &vec![0.1; n]).unwrap();
    let nb = NBar::new(&p, &m, 10.0, CutoffProfile::Smoothstep);
    (p, m, nb)
}

fn quadratic_params() -> SupersolutionParams {
    SupersolutionParams {
        lambda: 2.0,
        delta: 0.05,
        delta_prime: 0.1,
        delta_second: 0.2,
        gamma_prime: 0.005,
        gamma_second: 0.02,
        q_max: 0.3,
        r_esc_init: 2.0,
        c: 0.0,
        r_coerc: 10.0,
        r_switch: 10.0,
    }
}

/// V‡ in one dimension written out from its definition, with the derivative
/// taken by central differences.
fn v_ddag_1d(v1: impl Fn(f64) -> f64, v: f64, r_switch: f64, profile: CutoffProfile) -> f64 {
    let chi = profile.eval(v.abs() - r_switch).0;
    chi * v1(v) + (1.0 - chi) * 0.5 * v * v
}

fn n_bar_two_point(v1: &impl Fn(f64) -> f64, q: f64, r_switch: f64, profile: CutoffProfile) -> f64 {
    let r = (2.0 * q).sqrt();
    let h = 1e-6;
    [r, -r]
        .iter()
        .map(|&v| {
            let d = (v_ddag_1d(v1, v + h, r_switch, profile) - v_ddag_1d(v1, v - h, r_switch, profile)) / (2.0 * h);
            -v * d
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn quadratic_c_noesc_is_two_thirds() {
    let (_, _, nb) = quadratic_setup(1);
    let params = quadratic_params();
    let c = c_noesc(&params, &nb).unwrap();
    let grid_sup = (0..=1000).map(|k| -2.0 * (params.q_max + params.gamma_second) * k as f64 / 1000.0).fold(f64::MIN, f64::max);
    assert_eq!(grid_sup, 0.0);
    assert!((c.value - (params.lambda * params.gamma_prime + grid_sup) / params.gap()).abs() < 1e-12);
    assert!((c.value - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(c.argsup_q, 0.0);
}

#[test]
fn balanced_bistable_two_point_example() {
    let p = PotentialSpec::builtin(BuiltinPotential::BalancedBistable);
    let m = find_minimum(&p, &[0.9]).unwrap();
    let nb = NBar::new(&p, &m, 10.0, CutoffProfile::Smoothstep);
    let vprime = |u: f64| u * u * u - u;
    let oracle = (-0.5f64 * vprime(1.5)).max(0.5 * vprime(0.5));
    assert!((oracle + 0.1875).abs() < 1e-15);
    assert!((nb.eval(0.125) - oracle).abs() < 1e-12, "{}", nb.eval(0.125));
}

#[test]
fn residual_nonpositive_at_and_above_c_noesc() {
    let (_, _, nb) = quadratic_setup(1);
    let mut params = quadratic_params();
    let speed = c_noesc(&params, &nb).unwrap().value;
    params.c = speed;
    let at = supersolution_residual(&params, &nb, 60.0, 10.0, 601, 41);
    assert!(at.max_residual <= TOL, "{at:?}");
    params.c = 2.0 * speed;
    let above = supersolution_residual(&params, &nb, 60.0, 10.0, 601, 41);
    assert!(above.max_residual <= TOL, "{above:?}");
    assert!(above.by_interval[1] < at.by_interval[1] - 0.5 * speed * params.gap(), "{above:?} {at:?}");
}

#[test]
fn residual_positive_on_ramp_below_c_noesc() {
    let p = PotentialSpec::builtin(BuiltinPotential::BalancedBistable);
    let m = find_minimum(&p, &[0.9]).unwrap();
    let mut params = SupersolutionParams::new(&p, &m, 1.0).unwrap();
    params.r_esc_init = 2.0;
    let nb = NBar::new(&p, &m, params.r_switch, CutoffProfile::Smoothstep);
    let speed = c_noesc(&params, &nb).unwrap();
    assert!(speed.sup_n_bar > 0.0 && speed.branch_ramp > speed.branch_tail, "{speed:?}");
    let r_hi = params.r_esc_init + params.ramp_end() + 10.0;
    params.c = speed.value;
    let at = supersolution_residual(&params, &nb, r_hi, 1.0, 4001, 11);
    assert!(at.max_residual <= TOL, "{at:?}");
    params.c = 0.1 * speed.value;
    let below = supersolution_residual(&params, &nb, r_hi, 1.0, 4001, 11);
    assert!(below.by_interval[1] > TOL, "{below:?}");
}

#[test]
fn bistable_c_noesc_matches_grid_oracle() {
    let p = PotentialSpec::builtin(BuiltinPotential::TiltedBistable { a: 0.1 });
    let m = find_minimum(&p, &[-1.0]).unwrap();
    let params = SupersolutionParams::new(&p, &m, 1.5).unwrap();
    let nb = NBar::new(&p, &m, params.r_switch, CutoffProfile::Smoothstep);
    let (mm, vm) = (m.m[0], m.v_at_m);
    let v1 = move |v: f64| {
        let u = mm + v;
        let s = u * u - 1.0;
        0.25 * s * s - 0.1 * u - vm
    };
    let q_hi = params.q_max + params.gamma_second;
    let k = 20_000;
    let oracle = (0..=k)
        .map(|i| n_bar_two_point(&v1, q_hi * i as f64 / k as f64, params.r_switch, CutoffProfile::Smoothstep))
        .fold(f64::NEG_INFINITY, f64::max);
    let (sup, _) = sup_n_bar(&nb, q_hi);
    assert!(sup >= oracle - 1e-6, "{sup} vs {oracle}");
    assert!(sup - oracle < 1e-3 * (1.0 + oracle.abs()), "{sup} vs {oracle}");
    let c = c_noesc(&params, &nb).unwrap();
    let expected = ((params.lambda * params.gamma_prime + oracle) / params.gap()).max(1.0 - params.lambda);
    assert!((c.value - expected).abs() <= 1e-3 * expected.abs().max(1.0) / params.gap(), "{} vs {expected}", c.value);
}

#[test]
fn v_ddag_is_coercive_beyond_r_coerc() {
    let cases = [
        (BuiltinPotential::TiltedBistable { a: 0.1 }, vec![1.0]),
        (BuiltinPotential::VectorDoubleWell { n: 2, a: 0.1, b: 0.5 }, vec![0.9, 0.0]),
        (BuiltinPotential::VectorDoubleWell { n: 2, a: 0.1, b: 0.5 }, vec![-1.0, 0.0]),
    ];
    for (b, guess) in cases {
        let p = PotentialSpec::builtin(b);
        let m = find_minimum(&p, &guess).unwrap();
        let params = SupersolutionParams::new(&p, &m, 2.0).unwrap();
        let bound = params.lambda * params.delta_prime * params.delta_prime / 2.0;
        for profile in [CutoffProfile::Smoothstep, CutoffProfile::Linear] {
            for shell in 0..20 {
                let r = params.r_coerc * (1.0 + 0.25 * shell as f64);
                let dirs = if m.m.len() == 1 { 2 } else { 720 };
                for k in 0..dirs {
                    let v: Vec<f64> = if m.m.len() == 1 {
                        vec![if k == 0 { r } else { -r }]
                    } else {
                        let a = std::f64::consts::TAU * k as f64 / dirs as f64;
                        vec![r * a.cos(), r * a.sin()]
                    };
                    let (_, g) = v_ddag(&p, &m, &v, params.r_switch, profile);
                    let vg: f64 = v.iter().zip(&g).map(|(a, b)| a * b).sum();
                    assert!(vg >= bound, "{b:?} |v| = {r}: {vg} < {bound}");
                }
            }
        }
    }
}

#[test]
fn eta_bar_covers_plateau_then_decays() {
    let mut params = quadratic_params();
    params.c = 0.5;
    for t in [0.0, 1.0, 5.0] {
        let inside = eta_bar_radial(params.r_esc_init + params.c * t - 0.1, t, &params);
        assert!((inside - params.q_max - params.gap() - params.gamma_prime * (-params.lambda * t).exp()).abs() < 1e-14);
        let far = eta_bar_radial(1e4, t, &params);
        assert!((far - params.gamma_prime * (-params.lambda * t).exp()).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_n_bar_is_minus_two_q(q in 0.0f64..20.0, n in 1usize..4) {
        let (_, _, nb) = quadratic_setup(n);
        prop_assert!((nb.eval(q) + 2.0 * q).abs() < 1e-10 * (1.0 + q));
    }

    #[test]
    fn bistable_n_bar_matches_two_point_oracle(q in 0.0f64..3.0, switch in 0.5f64..4.0) {
        let p = PotentialSpec::builtin(BuiltinPotential::BalancedBistable);
        let m = find_minimum(&p, &[1.1]).unwrap();
        let v1 = |v: f64| {
            let u = 1.0 + v;
            let s = u * u - 1.0;
            0.25 * s * s
        };
        for profile in [CutoffProfile::Smoothstep, CutoffProfile::Linear] {
            let nb = NBar::new(&p, &m, switch, profile);
            let oracle = if q == 0.0 { 0.0 } else { n_bar_two_point(&v1, q, switch, profile) };
            prop_assert!((nb.eval(q) - oracle).abs() < 1e-6 * (1.0 + oracle.abs()), "{} vs {}", nb.eval(q), oracle);
        }
    }

    #[test]
    fn vector_n_bar_matches_dense_angle_scan(q in 0.01f64..4.0) {
        let p = PotentialSpec::builtin(BuiltinPotential::VectorDoubleWell { n: 2, a: 0.1, b: 0.5 });
        let m = find_minimum(&p, &[0.9, 0.0]).unwrap();
        let nb = NBar::new(&p, &m, 3.0, CutoffProfile::Smoothstep);
        let r = (2.0 * q).sqrt();
        let scan = (0..20_000)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 20_000.0;
                let v = [r * a.cos(), r * a.sin()];
                let (_, g) = v_ddag(&p, &m, &v, 3.0, CutoffProfile::Smoothstep);
                -(v[0] * g[0] + v[1] * g[1])
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let value = nb.eval(q);
        prop_assert!(value >= scan - 1e-12, "{} < {}", value, scan);
        prop_assert!(value - scan < 1e-5 * (1.0 + scan.abs()), "{} vs {}", value, scan);
    }
}
