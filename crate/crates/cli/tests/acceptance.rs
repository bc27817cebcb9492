//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Preset runs are computed once and shared.

use std::process::ExitCode;
use std::sync::OnceLock;

use gradflow::diagnostics::Verdict;
use gradflow::potential::{BuiltinPotential, PotentialSpec};
use gradflow::solver::simulate;
use gradflow::weights::{exp_sum, tail_integral};
use gradflow_cli::pipeline::{balance_series, execute, initial_state, RunOutcome};
use gradflow_cli::presets::{names, preset};
use gradflow_cli::RunConfig;
use rayon::prelude::*;

const NO_INVASION: [&str; 2] = ["bistable-balanced-collapse", "tilted-bistable-subcritical"];
const BALL_SPEEDS: [f64; 2] = [0.0, 0.25];

fn runs() -> &'static Vec<(String, RunOutcome)> {
    static RUNS: OnceLock<Vec<(String, RunOutcome)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let list: Vec<&str> = names().collect();
        list.par_iter()
            .map(|n| (n.to_string(), execute(&preset(n).unwrap()).unwrap_or_else(|e| panic!("{n}: {e}"))))
            .collect()
    })
}

fn run(name: &str) -> &'static RunOutcome {
    &runs().iter().find(|(n, _)| n == name).unwrap().1
}

/// Same configuration on a grid with spacing h/`factor` (same extent),
/// dt/`factor`² and a stride that keeps snapshot times.
fn refined(cfg: &RunConfig, factor: usize) -> RunConfig {
    let mut c = cfg.clone();
    c.grid.n = factor * (cfg.grid.n - 1) + 1;
    c.solver.dt = cfg.solver.dt / (factor * factor) as f64;
    c.solver.stride = cfg.solver.stride * factor * factor;
    c
}

/// Same spacing and time step on a domain of twice the radius.
fn doubled(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.grid.extent = 2.0 * cfg.grid.extent;
    c.grid.n = 2 * (cfg.grid.n - 1) + 1;
    c
}

type Outcome = (bool, String);

fn analytic_solution_regression() -> Outcome {
    // e^{−t} times the heat evolution of a unit Gaussian in d = 2.
    let exact = |r: f64, t: f64| (-t).exp() / (1.0 + 2.0 * t) * (-r * r / (2.0 * (1.0 + 2.0 * t))).exp();
    let error = |factor: usize| {
        let mut cfg = refined(&preset("quadratic-gaussian").unwrap(), factor);
        cfg.solver.t_end = 1.0;
        let spec = PotentialSpec::builtin(BuiltinPotential::Quadratic { n: 1 });
        let s0 = initial_state(&cfg, cfg.grid().unwrap(), &[0.0]).unwrap();
        let traj = simulate(&s0, &spec, &cfg.solver_config()).unwrap();
        let s = traj.last();
        (0..s.num_points()).map(|j| (s.values[j] - exact(s.grid.radius(j), s.time)).abs()).fold(0.0, f64::max)
    };
    let (e1, e2) = (error(1), error(2));
    let ratio = e1 / e2;
    (e1 <= 1e-3 && ratio >= 3.5, format!("max error {e1:.3e} at t = 1 (<= 1e-3), ratio on h/2 {ratio:.3} (>= 3.5)"))
}

fn maximum_principle_bound() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, out) in runs() {
        let mp = &out.report.max_principle;
        ok &= mp.max_excess <= 1e-8 && !mp.violated;
        parts.push(format!("{name} {:.2e}", mp.max_excess));
    }
    (ok, format!("max of q - qbar per preset (<= 1e-8): {}", parts.join(", ")))
}

fn energy_balance_residual() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, out) in runs() {
        let cfg = &out.report.config;
        let fine_cfg = refined(cfg, 2);
        let fine_init = initial_state(&fine_cfg, fine_cfg.grid().unwrap(), &out.setup.m.m).unwrap();
        let fine = simulate(&fine_init, &out.setup.spec, &fine_cfg.solver_config()).unwrap();
        for c in BALL_SPEEDS {
            let coarse = out.balances.iter().find(|b| b.c == c).unwrap();
            let fine_b = balance_series(&fine, &out.setup.spec, &out.setup.m, c);
            let scale = (0..coarse.times.len())
                .map(|i| {
                    coarse.energy_rate[i].abs()
                        + coarse.dissipation[i].abs()
                        + c * coarse.boundary[i].abs()
                        + coarse.flux[i].abs()
                })
                .fold(0.0, f64::max);
            // Second-order prediction of the fine-grid residual, floored at roundoff.
            let tau = (coarse.max_abs_corrected() / 4.0).max(1e-12 * (1.0 + scale));
            let measured = fine_b.max_abs_corrected();
            ok &= measured <= 3.0 * tau && !fine_b.times.is_empty();
            parts.push(format!(
                "{name} c={c}: fine {measured:.2e} vs 3*tol {:.2e} (coarse {:.2e}, flux-free form {:.2e})",
                3.0 * tau,
                coarse.max_abs_corrected(),
                fine_b.max_abs_residual()
            ));
        }
    }
    (ok, parts.join("; "))
}

fn firewall_coercivity_nonnegativity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, out) in runs() {
        let c = &out.report.coercivity;
        // Rounding bound of an N-term quadrature sum.
        let quadrature = f64::EPSILON * out.setup.grid.num_points() as f64 * c.max_firewall0;
        let tol = 1e-8 + quadrature;
        ok &= c.min_margin >= -tol && c.min_firewall0 >= -tol && c.min_traveling >= -tol;
        parts.push(format!(
            "{name} margin {:.2e}, F0 {:.2e}, F {:.2e} (tol {tol:.1e})",
            c.min_margin, c.min_firewall0, c.min_traveling
        ));
    }
    (ok, parts.join("; "))
}

fn firewall_linear_decrease() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in NO_INVASION {
        let out = run(name);
        let m = out.monitors.iter().find(|m| m.name == "dt_fire").unwrap();
        let tol = 1e-6 * (1.0 + out.setup.firewall.k_f0);
        ok &= m.max_residual <= tol && !m.rows.is_empty();
        parts.push(format!("{name} {:.2e} over {} rows (tol {tol:.2e})", m.max_residual, m.rows.len()));
    }
    (ok, parts.join("; "))
}

fn supersolution_certificate() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, out) in runs() {
        let r = &out.report.supersolution_residual;
        let sandwich = match &out.report.sandwich {
            Ok(s) => {
                ok &= s.holds;
                format!("sandwich max excess {:.2e}", s.max_excess)
            }
            Err(e) => format!("initial sandwich fails ({e})"),
        };
        ok &= r.max_residual <= 1e-10 && r.samples > 0;
        parts.push(format!("{name} residual {:.3e} on {} samples, {sandwich}", r.max_residual, r.samples));
    }
    (ok, parts.join("; "))
}

fn dichotomy_no_invasion() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in NO_INVASION {
        let rep = &run(name).report;
        let e = rep.dichotomy.e_asympt.and_then(|e| e.value);
        ok &= rep.verdict == Verdict::NoInvasion
            && e.is_some_and(|v| v.abs() <= 5e-3)
            && rep.dichotomy.ut_sup_tail <= 1e-4;
        parts.push(format!("{name} {:?}, E_inf {e:?}, tail sup|u_t| {:.2e}", rep.verdict, rep.dichotomy.ut_sup_tail));
    }
    (ok, parts.join("; "))
}

/// Planar front speed of u_t = u_xx − V'(u), V = (u² − 1)²/4 − a·u, by
/// shooting from the invading state along its unstable manifold; returns
/// the speed and the 10–90% width of the profile.
fn shooting_front(a: f64) -> (f64, f64) {
    let roots = {
        let f = |u: f64| u * u * u - u - a;
        let newton = |mut u: f64| {
            for _ in 0..100 {
                u -= f(u) / (3.0 * u * u - 1.0);
            }
            u
        };
        (newton(-1.0), newton(1.0))
    };
    let (u_minus, u_plus) = roots;
    let vp = |u: f64| u * u * u - u - a;
    let vpp = |u: f64| 3.0 * u * u - 1.0;
    let jump = u_plus - u_minus;
    // +1: overshoots u₋ (c too small); −1: turns back (c too large).
    let shoot = |c: f64, record: bool| -> (i32, Vec<(f64, f64)>) {
        let mu = 0.5 * (-c + (c * c + 4.0 * vpp(u_plus)).sqrt());
        let eps = 1e-9;
        let (mut u, mut p) = (u_plus - eps, -eps * mu);
        let h = 1e-3;
        let mut xi = 0.0;
        let mut path = Vec::new();
        let rhs = |u: f64, p: f64| (p, -c * p + vp(u));
        for _ in 0..2_000_000 {
            if record {
                path.push((xi, u));
            }
            let (k1u, k1p) = rhs(u, p);
            let (k2u, k2p) = rhs(u + 0.5 * h * k1u, p + 0.5 * h * k1p);
            let (k3u, k3p) = rhs(u + 0.5 * h * k2u, p + 0.5 * h * k2p);
            let (k4u, k4p) = rhs(u + h * k3u, p + h * k3p);
            u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            xi += h;
            if u < u_minus {
                return (1, path);
            }
            if p > 0.0 {
                return (-1, path);
            }
        }
        (0, path)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if shoot(mid, false).0 > 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let (_, path) = shoot(c, true);
    let cross = |level: f64| path.iter().find(|(_, u)| *u < level).map(|(x, _)| *x).unwrap();
    let width = cross(u_minus + 0.1 * jump) - cross(u_plus - 0.1 * jump);
    (c, width)
}

fn dichotomy_invasion() -> Outcome {
    let out = run("tilted-bistable-supercritical");
    let rep = &out.report;
    let (oracle, width) = shooting_front(0.1);
    // Independent route: cubic nonlinearity with roots u₋ < u₀ < u₊ summing
    // to zero gives c = −3u₀/√2.
    let u0 = {
        let mut u = 0.0f64;
        for _ in 0..100 {
            u -= (u * u * u - u - 0.1) / (3.0 * u * u - 1.0);
        }
        u
    };
    let closed = -3.0 * u0 / 2f64.sqrt();
    let routes_agree = (oracle - closed).abs() <= 1e-6;
    let c_inv = rep.dichotomy.c_inv.as_ref().map(|s| s.c_inv).unwrap_or(f64::NAN);
    let rel = (c_inv - oracle).abs() / oracle;
    let e = out.series.iter().find(|s| s.name.starts_with("ball_energy")).unwrap();
    let tail = e.tail_indices(0.5);
    let vals = &e.values[tail.clone()];
    let scale = e.values.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let monotone = vals.windows(2).all(|w| w[1] <= w[0] + 1e-12 * scale);
    let drop = vals[0] - vals[vals.len() - 1];
    let t_end = *e.times.last().unwrap();
    let early: Vec<f64> =
        e.times.iter().zip(&e.values).filter(|(t, _)| **t <= 0.1 * t_end).map(|(_, v)| *v).collect();
    let early_osc = early.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - early.iter().cloned().fold(f64::INFINITY, f64::min);
    let radius = *out.track.r_esc_outer.last().unwrap();
    let ok = rep.verdict == Verdict::Invasion
        && monotone
        && drop >= 10.0 * early_osc
        && rel <= 0.1
        && radius >= 20.0 * width
        && routes_agree;
    (
        ok,
        format!(
            "verdict {:?}; tail energy monotone {monotone}, drop {drop:.1} vs 10x early oscillation {:.1}; \
             c_inv {c_inv:.5} vs front oracle {oracle:.5} (closed form {closed:.5}), rel. diff {rel:.3} (<= 0.1); \
             final radius {radius:.1} = {:.1} interface widths (>= 20)",
            rep.verdict,
            10.0 * early_osc,
            radius / width
        ),
    )
}

fn invasion_speed_bound() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, out) in runs() {
        let d = &out.report.dichotomy;
        let c_inv = d.c_inv.as_ref().map(|s| s.c_inv).unwrap_or(f64::NAN);
        let bound = out.report.constants.c_noesc_att.value + 2.0 * d.tolerances.speed_zero_tol;
        ok &= c_inv <= bound;
        parts.push(format!("{name} {c_inv:.4} <= {bound:.4e}"));
    }
    (ok, parts.join("; "))
}

fn exponential_firewall_decay() -> Outcome {
    let out = run("quadratic-gaussian");
    match &out.report.exponential_fit {
        Some(Ok(fit)) => {
            let c = &out.setup.firewall;
            let bound = 0.5 * c.nu_f0.min(c.kappa0 * (1.0 - 0.1) / 2.0);
            (
                fit.identically_zero || fit.rate >= bound,
                format!("fitted rate {:.4} over {} samples (>= {bound:.4})", fit.rate, fit.samples.len()),
            )
        }
        other => (false, format!("no fit: {other:?}")),
    }
}

/// Adaptive Gauss–Kronrod (7/15) quadrature.
fn gauss_kronrod<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    const XK: [f64; 8] = [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.0,
    ];
    const WK: [f64; 8] = [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ];
    const WG: [f64; 4] = [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ];
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut k = WK[7] * f(c);
    let mut g = WG[3] * f(c);
    for i in 0..7 {
        let (fl, fr) = (f(c - h * XK[i]), f(c + h * XK[i]));
        k += WK[i] * (fl + fr);
        if i % 2 == 1 {
            g += WG[i / 2] * (fl + fr);
        }
    }
    let (k, g) = (k * h, g * h);
    if (k - g).abs() <= tol || depth == 0 {
        k
    } else {
        gauss_kronrod(f, a, c, 0.5 * tol, depth - 1) + gauss_kronrod(f, c, b, 0.5 * tol, depth - 1)
    }
}

/// True when x is the double nearest to p/q (q > 0), checked in integers.
fn correctly_rounded(x: f64, p: i128, q: i128) -> bool {
    if p == 0 {
        return x == 0.0;
    }
    // |y − p/q| compared as |y·q − p| scaled by 2^s so every term is an integer.
    let dist = |y: f64| -> (i128, u32) {
        let bits = y.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i32;
        let mant = (bits & ((1 << 52) - 1)) as i128 | if exp == 0 { 0 } else { 1 << 52 };
        let sign = if y < 0.0 { -1 } else { 1 };
        let e = if exp == 0 { -1074 } else { exp - 1075 };
        if e >= 0 {
            ((sign * (mant << e) * q - p).abs(), 0)
        } else {
            ((sign * mant * q - (p << (-e))).abs(), (-e) as u32)
        }
    };
    let (d0, s0) = dist(x);
    [x.next_up(), x.next_down()].iter().all(|&y| {
        let (d1, s1) = dist(y);
        // Compare d0/2^s0 with d1/2^s1.
        let s = s0.max(s1);
        (d0 << (s - s0)) <= (d1 << (s - s1))
    })
}

fn quadrature_identity() -> Outcome {
    let mut worst = 0.0f64;
    for n in 0..=8u32 {
        for rho0 in [0.0, 0.25, 1.0, 2.0, 3.7, 5.0, 8.0, 12.5, 16.0, 20.0] {
            let f = move |r: f64| r.powi(n as i32) * (-r).exp();
            let reference = gauss_kronrod(f, rho0, rho0 + 250.0, 1e-16, 40);
            let rel = (tail_integral(rho0, n) - reference).abs() / reference;
            worst = worst.max(rel);
        }
    }
    let mut exact = true;
    let mut cases = 0;
    for n in 0..=8u32 {
        for tau in -20i128..=20 {
            let fact: i128 = (1..=n as i128).product();
            let p: i128 = (0..=n).map(|k| tau.pow(k) * fact / (1..=k as i128).product::<i128>()).sum();
            exact &= correctly_rounded(exp_sum(n, tau as f64), p, fact);
            cases += 1;
        }
    }
    (
        worst <= 1e-12 && exact,
        format!("max relative deviation {worst:.2e} (<= 1e-12); exp_sum correctly rounded on {cases} integer cases: {exact}"),
    )
}

fn far_field_insensitivity() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 0.01 * a.abs().max(b.abs()) + 1e-6;
    let mut ok = true;
    let mut parts = Vec::new();
    let list: Vec<&str> = names().collect();
    let doubled_runs: Vec<RunOutcome> = list
        .par_iter()
        .map(|n| execute(&doubled(&preset(n).unwrap())).unwrap_or_else(|e| panic!("{n} doubled: {e}")))
        .collect();
    for (name, big) in list.iter().zip(&doubled_runs) {
        let small = run(name);
        let c = |o: &RunOutcome| o.report.dichotomy.c_inv.as_ref().map(|s| s.c_inv).unwrap_or(f64::NAN);
        // E_∞ when it converged, else the last ball energy.
        let e = |o: &RunOutcome| {
            o.report.dichotomy.e_asympt.and_then(|e| e.value).unwrap_or_else(|| {
                *o.series.iter().find(|s| s.name.starts_with("ball_energy")).unwrap().values.last().unwrap()
            })
        };
        let (c1, c2, e1, e2) = (c(small), c(big), e(small), e(big));
        let same = small.report.verdict == big.report.verdict && close(c1, c2) && close(e1, e2);
        ok &= same;
        parts.push(format!("{name} c_inv {c1:.5}/{c2:.5}, E {e1:.5e}/{e2:.5e}"));
    }
    (ok, parts.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("analytic solution regression", analytic_solution_regression),
        ("maximum principle bound", maximum_principle_bound),
        ("energy balance residual", energy_balance_residual),
        ("firewall coercivity and nonnegativity", firewall_coercivity_nonnegativity),
        ("firewall linear decrease", firewall_linear_decrease),
        ("supersolution certificate", supersolution_certificate),
        ("dichotomy: no invasion", dichotomy_no_invasion),
        ("dichotomy: invasion", dichotomy_invasion),
        ("invasion speed bound", invasion_speed_bound),
        ("exponential firewall decay", exponential_firewall_decay),
        ("tail integral quadrature identity", quadrature_identity),
        ("far-field insensitivity", far_field_insensitivity),
    ];
    // Optional substring filter, e.g. `cargo test --test acceptance -- speed`.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let (ok, detail) = check();
        println!("{} [{:>2}] {name}: {detail}", if ok { "PASS" } else { "FAIL" }, k + 1);
        failed += usize::from(!ok);
    }
    println!("{} of {ran} acceptance criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
