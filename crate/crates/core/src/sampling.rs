//! Deterministic low-discrepancy sampling and a derivative-free local search.
//!
//! Every global scan in the crate goes through these helpers so that results
//! are reproducible bit for bit.

use statrs::distribution::{ContinuousCDF, Normal};

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in the given base.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while index > 0 {
        f /= b;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Point `index` of the Halton sequence in `[0,1)^dim`.
pub fn halton_point(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton sequence supports at most 16 dimensions");
    (0..dim).map(|k| halton(index, PRIMES[k])).collect()
}

/// Unit vectors covering the sphere S^{n-1}.
///
/// n = 1 gives the two signs, n = 2 an equiangular fan, n >= 3 Halton points
/// pushed through the inverse normal CDF and normalized.
pub fn sphere_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let count = count.max(4);
            (0..count)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / count as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        }
        _ => {
            let normal = Normal::standard();
            let mut out = Vec::with_capacity(count);
            let mut idx = 1u64;
            while out.len() < count {
                let h = halton_point(idx, n);
                idx += 1;
                let mut v: Vec<f64> = h.iter().map(|&p| normal.inverse_cdf(p.clamp(1e-12, 1.0 - 1e-12))).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-9 {
                    continue;
                }
                v.iter_mut().for_each(|x| *x /= norm);
                out.push(v);
            }
            out
        }
    }
}

/// Points filling the closed ball of `radius` around `center`.
///
/// In one dimension this is a uniform grid including both endpoints; otherwise
/// Halton points (starting after `skip`) rejected to the ball.
pub fn ball_samples(center: &[f64], radius: f64, count: usize, skip: u64) -> Vec<Vec<f64>> {
    let n = center.len();
    let count = count.max(2);
    if n == 1 {
        return (0..count)
            .map(|k| vec![center[0] - radius + 2.0 * radius * k as f64 / (count - 1) as f64])
            .collect();
    }
    let mut out = Vec::with_capacity(count);
    let mut idx = skip + 1;
    while out.len() < count {
        let h = halton_point(idx, n);
        idx += 1;
        let p: Vec<f64> = h.iter().map(|&x| 2.0 * x - 1.0).collect();
        if p.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            out.push(p.iter().zip(center).map(|(x, c)| c + radius * x).collect());
        }
    }
    out
}

/// Project `x` onto the closed ball `B(center, radius)`.
pub fn project_to_ball(x: &mut [f64], center: &[f64], radius: f64) {
    let d = dist(x, center);
    if d > radius && d > 0.0 {
        let s = radius / d;
        for (xi, ci) in x.iter_mut().zip(center) {
            *xi = ci + (*xi - ci) * s;
        }
    }
}

/// Project `x` onto the sphere `|x - center| = radius` (no-op at the center).
pub fn project_to_sphere(x: &mut [f64], center: &[f64], radius: f64) {
    let d = dist(x, center);
    if d > 0.0 {
        let s = radius / d;
        for (xi, ci) in x.iter_mut().zip(center) {
            *xi = ci + (*xi - ci) * s;
        }
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compass (coordinate pattern) search minimizing `f`, with every trial point
/// passed through `project` first. Returns the best point and value.
pub fn pattern_search<F, P>(f: F, project: P, x0: &[f64], step0: f64, min_step: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
    P: Fn(&mut [f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = f(&x);
    let mut step = step0;
    let mut trial = vec![0.0; n];
    let mut evals = 0usize;
    while step > min_step && evals < 20_000 {
        let mut improved = false;
        for k in 0..n {
            for sign in [1.0, -1.0] {
                trial.copy_from_slice(&x);
                trial[k] += sign * step;
                project(&mut trial);
                let ft = f(&trial);
                evals += 1;
                if ft < fx {
                    fx = ft;
                    x.copy_from_slice(&trial);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}
