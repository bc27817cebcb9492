use gradflow::diagnostics::{
    derivative_decay, escape_set, escape_track, invasion_speed_fit, sigma_esc, HomParams, RegionLaw,
};
use gradflow::field::{FieldState, Grid};
use gradflow::firewall::{firewall_constants, firewall_exponential_fit};
use gradflow::potential::{find_minimum, BuiltinPotential, MinimumPoint, PotentialSpec};
use gradflow::solver::{simulate, Scheme, Snapshot, SolverConfig, Trajectory};
use gradflow::Error;

fn tilted() -> (PotentialSpec, MinimumPoint) {
    let p = PotentialSpec::builtin(BuiltinPotential::TiltedBistable { a: 0.1 });
    let m = find_minimum(&p, &[-1.0]).unwrap();
    (p, m)
}

/// A plateau at `top` of radius r0 + c·t joined to m by a tanh front.
fn front(grid: Grid, m: f64, top: f64, r0: f64, c: f64, t: f64) -> FieldState {
    let mut s = FieldState::from_fn(grid, &[m], |x| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let z = (r - r0 - c * t) / std::f64::consts::SQRT_2;
        vec![m + (top - m) * 0.5 * (1.0 - z.tanh())]
    })
    .unwrap();
    s.time = t;
    s
}

fn synthetic_track(grid: Grid, m: f64, top: f64, c: f64, times: &[f64]) -> Trajectory {
    let snapshots = times
        .iter()
        .map(|&t| Snapshot { state: front(grid, m, top, 5.0, c, t), before: None, after: None })
        .collect();
    Trajectory { snapshots, dt: 0.01, scheme: Scheme::Euler }
}

#[test]
fn escape_radius_of_constructed_bump() {
    let (_, m) = tilted();
    let d = m.escape_distance;
    for res in [201, 801] {
        let grid = Grid::radial(2, 4.0, res).unwrap();
        let s = FieldState::from_fn(grid, &m.m, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            vec![m.m[0] + 2.0 * d * (1.0 - r2).max(0.0)]
        })
        .unwrap();
        let esc = sigma_esc(&s, &m);
        assert!(!esc.empty);
        let h = grid.spacing;
        let root = 0.5f64.sqrt();
        assert!((esc.outer_radius - root).abs() < 2.0 * h * h, "h = {h}: {}", esc.outer_radius);
        let mask_count = esc.mask.iter().filter(|&&b| b).count();
        assert_eq!(mask_count, (0..grid.num_points()).filter(|&j| grid.radius(j) < root).count());
    }
}

#[test]
fn escape_set_of_flat_state_is_empty() {
    let (_, m) = tilted();
    let grid = Grid::cartesian(2, 5.0, 41).unwrap();
    let s = FieldState::constant(grid, &m.m);
    let esc = escape_set(&s, &m, m.escape_distance);
    assert!(esc.empty);
    assert_eq!(esc.outer_radius, 0.0);
}

#[test]
fn speed_fit_recovers_synthetic_front_speed() {
    let (_, m) = tilted();
    let grid = Grid::radial(2, 60.0, 1201).unwrap();
    let times: Vec<f64> = (0..=40).map(|k| k as f64).collect();
    for c in [0.0, 0.2, 0.75] {
        let traj = synthetic_track(grid, m.m[0], 1.0467, c, &times);
        let hp = HomParams::defaults(&m, grid.spacing, c + 0.5);
        let track = escape_track(&traj, &m, &hp);
        let fit = invasion_speed_fit(&track, 0.5).unwrap();
        assert!((fit.c_inv - c).abs() < 1e-6, "c = {c}: {fit:?}");
        assert!(fit.ci_low <= c + 1e-9 && fit.ci_high >= c - 1e-9);
        let last = track.times.len() - 1;
        assert!(track.sup_beyond[last] < m.escape_distance);
    }
}

#[test]
fn speed_fit_needs_ten_samples() {
    let (_, m) = tilted();
    let grid = Grid::radial(2, 30.0, 301).unwrap();
    let traj = synthetic_track(grid, m.m[0], 1.0467, 0.2, &[0.0, 1.0, 2.0, 3.0]);
    let track = escape_track(&traj, &m, &HomParams::defaults(&m, grid.spacing, 0.5));
    assert!(matches!(invasion_speed_fit(&track, 0.5), Err(Error::WindowTooShort(_))));
}

#[test]
fn firewall_fit_rejects_c1_below_invasion_speed() {
    let (p, m) = tilted();
    let grid = Grid::radial(2, 60.0, 601).unwrap();
    let times: Vec<f64> = (1..=20).map(|k| k as f64).collect();
    let traj = synthetic_track(grid, m.m[0], 1.0467, 0.2, &times);
    let fc = firewall_constants(&p, &m, 1.0, 1.5, 2, 0.5).unwrap();
    let err = firewall_exponential_fit(&traj, &p, &m, &fc, 0.05, 1.0, 1.0).unwrap_err();
    assert!(matches!(err, Error::HypothesisViolated(_)), "{err}");
    let ok = firewall_exponential_fit(&traj, &p, &m, &fc, 0.7, 1.4, 16.0);
    assert!(ok.is_ok(), "{ok:?}");
}

#[test]
fn quadratic_derivative_decay_rate() {
    let p = PotentialSpec::builtin(BuiltinPotential::Quadratic { n: 1 });
    let grid = Grid::radial(2, 20.0, 101).unwrap();
    let init = FieldState::from_fn(grid, &[0.0], |x| vec![(-x.iter().map(|v| v * v).sum::<f64>() / 2.0).exp()]).unwrap();
    let cfg = SolverConfig { dt: 0.005, scheme: Scheme::Rk4, t_end: 10.0, snapshot_stride: 40 };
    let traj = simulate(&init, &p, &cfg).unwrap();
    let decay = derivative_decay(&traj, &p, RegionLaw::Whole);
    let rate = decay.rate.unwrap();
    assert!(rate >= 0.9, "{rate}");
    assert!(decay.sup_ut.windows(2).all(|w| w[1] <= w[0]));
    let beyond = derivative_decay(&traj, &p, RegionLaw::Beyond(0.5));
    assert!(beyond.rate.unwrap() > 0.0);
}

#[test]
fn quadratic_firewall_constants() {
    let p = PotentialSpec::builtin(BuiltinPotential::Quadratic { n: 1 });
    let m = find_minimum(&p, &[0.1]).unwrap();
    let fc = firewall_constants(&p, &m, 1.0, 2.0, 2, 1.0).unwrap();
    let oracle = (0..=4000)
        .map(|k| -2.0 + 4.0 * k as f64 / 4000.0)
        .map(|v: f64| -v * v + 0.5 * (0.5 * v * v) + 0.25 * v * v)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(oracle, 0.0);
    assert_eq!(fc.k_f0, oracle);
    assert!((fc.kappa0 - 0.5).abs() < 1e-15);
    assert!((fc.nu_f0 - 0.25).abs() < 1e-15);
    assert!((fc.k_ef - fc.kappa * (fc.c_cut + fc.kappa)).abs() < 1e-15);
}

#[test]
fn tilted_firewall_constants_match_scan() {
    let (p, m) = tilted();
    let r = 1.5;
    let fc = firewall_constants(&p, &m, 1.0, r, 2, 0.5).unwrap();
    let (mm, vm, lam) = (m.m[0], m.v_at_m, m.lambda_min);
    let oracle = (0..=200_000)
        .map(|k| -r + 2.0 * r * k as f64 / 200_000.0)
        .map(|v: f64| {
            let s = v * v - 1.0;
            let val = 0.25 * s * s - 0.1 * v;
            let grad = v * v * v - v - 0.1;
            -(v - mm) * grad + 0.5 * (val - vm).abs() + 0.25 * lam * (v - mm) * (v - mm)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(fc.k_f0 >= oracle - 1e-12, "{} vs {oracle}", fc.k_f0);
    assert!(fc.k_f0 - oracle < 1e-8 * (1.0 + oracle), "{} vs {oracle}", fc.k_f0);
    assert!(fc.check().is_ok());
    for v in [fc.kappa0, fc.nu_f0, fc.kappa, fc.c_cut, fc.nu_f, fc.k_ef] {
        assert!(v.is_finite() && v > 0.0);
    }
}
