//! Grids, discrete fields and finite-difference operators.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::sphere_area;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    Cartesian,
    Radial,
}

/// A uniform grid on the box [−L, L]^d (Cartesian) or on radii [0, r_max]
/// (Radial, for radially symmetric fields).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub mode: GridMode,
    pub space_dim: usize,
    pub extent: f64,
    pub resolution: usize,
    pub spacing: f64,
}

/// Number of polar-angle nodes used when integrating axisymmetric integrands
/// on a radial grid.
const ANGULAR_NODES: usize = 128;

impl Grid {
    pub fn new(mode: GridMode, space_dim: usize, extent: f64, resolution: usize) -> Result<Grid> {
        if space_dim == 0 {
            return Err(Error::Domain("space dimension must be at least 1".into()));
        }
        if resolution < 16 {
            return Err(Error::Domain(format!("grid needs at least 16 points per axis, got {resolution}")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::Domain(format!("grid extent must be positive, got {extent}")));
        }
        let spacing = match mode {
            GridMode::Cartesian => 2.0 * extent / (resolution - 1) as f64,
            GridMode::Radial => extent / (resolution - 1) as f64,
        };
        Ok(Grid { mode, space_dim, extent, resolution, spacing })
    }

    pub fn radial(space_dim: usize, r_max: f64, resolution: usize) -> Result<Grid> {
        Self::new(GridMode::Radial, space_dim, r_max, resolution)
    }

    pub fn cartesian(space_dim: usize, half_width: f64, resolution: usize) -> Result<Grid> {
        Self::new(GridMode::Cartesian, space_dim, half_width, resolution)
    }

    pub fn num_points(&self) -> usize {
        match self.mode {
            GridMode::Radial => self.resolution,
            GridMode::Cartesian => self.resolution.pow(self.space_dim as u32),
        }
    }

    fn axis_coord(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.spacing
    }

    /// Per-axis indices of a Cartesian point (axis 0 varies slowest).
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.space_dim];
        for k in (0..self.space_dim).rev() {
            out[k] = idx % self.resolution;
            idx /= self.resolution;
        }
        out
    }

    fn stride(&self, axis: usize) -> usize {
        self.resolution.pow((self.space_dim - 1 - axis) as u32)
    }

    /// Position of grid point `idx`; radial points lie on the positive x₁ axis.
    pub fn position(&self, idx: usize, out: &mut [f64]) {
        match self.mode {
            GridMode::Radial => {
                out.iter_mut().for_each(|x| *x = 0.0);
                out[0] = idx as f64 * self.spacing;
            }
            GridMode::Cartesian => {
                for (k, i) in self.multi_index(idx).into_iter().enumerate() {
                    out[k] = self.axis_coord(i);
                }
            }
        }
    }

    pub fn radius(&self, idx: usize) -> f64 {
        match self.mode {
            GridMode::Radial => idx as f64 * self.spacing,
            GridMode::Cartesian => {
                self.multi_index(idx).into_iter().map(|i| self.axis_coord(i).powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    /// Points whose value is clamped to the far field.
    pub fn is_boundary(&self, idx: usize) -> bool {
        match self.mode {
            GridMode::Radial => idx + 1 == self.resolution,
            GridMode::Cartesian => self.multi_index(idx).into_iter().any(|i| i == 0 || i + 1 == self.resolution),
        }
    }

    /// Largest radius R for which B(R) lies in the domain.
    pub fn max_radius(&self) -> f64 {
        self.extent
    }

    /// Discrete Laplacian of a field with `n` components per point. Boundary
    /// points get 0 (they are held at the far-field value).
    pub fn laplacian_into(&self, values: &[f64], n: usize, out: &mut [f64]) {
        let h2 = self.spacing * self.spacing;
        let np = self.num_points();
        match self.mode {
            GridMode::Radial => {
                let d = self.space_dim as f64;
                let h = self.spacing;
                for c in 0..n {
                    out[c] = d * 2.0 * (values[n + c] - values[c]) / h2;
                }
                for j in 1..np - 1 {
                    let r = j as f64 * h;
                    for c in 0..n {
                        let um = values[(j - 1) * n + c];
                        let u0 = values[j * n + c];
                        let up = values[(j + 1) * n + c];
                        out[j * n + c] = (up - 2.0 * u0 + um) / h2 + (d - 1.0) / r * (up - um) / (2.0 * h);
                    }
                }
                for c in 0..n {
                    out[(np - 1) * n + c] = 0.0;
                }
            }
            GridMode::Cartesian => {
                let strides: Vec<usize> = (0..self.space_dim).map(|a| self.stride(a)).collect();
                for p in 0..np {
                    let mi = self.multi_index(p);
                    if mi.iter().any(|&i| i == 0 || i + 1 == self.resolution) {
                        for c in 0..n {
                            out[p * n + c] = 0.0;
                        }
                        continue;
                    }
                    for c in 0..n {
                        let u0 = values[p * n + c];
                        let mut acc = 0.0;
                        for &s in &strides {
                            acc += values[(p + s) * n + c] + values[(p - s) * n + c] - 2.0 * u0;
                        }
                        out[p * n + c] = acc / h2;
                    }
                }
            }
        }
    }

    /// Spatial derivatives: radial mode stores u_r per point (n values),
    /// Cartesian mode stores ∂_k u_c at `[(p·d + k)·n + c]`. Central
    /// differences inside, one-sided at the outer boundary, u_r(0) = 0.
    pub fn derivatives(&self, values: &[f64], n: usize) -> Vec<f64> {
        let np = self.num_points();
        let h = self.spacing;
        match self.mode {
            GridMode::Radial => {
                let mut out = vec![0.0; np * n];
                for j in 1..np - 1 {
                    for c in 0..n {
                        out[j * n + c] = (values[(j + 1) * n + c] - values[(j - 1) * n + c]) / (2.0 * h);
                    }
                }
                let j = np - 1;
                for c in 0..n {
                    out[j * n + c] = (values[j * n + c] - values[(j - 1) * n + c]) / h;
                }
                out
            }
            GridMode::Cartesian => {
                let d = self.space_dim;
                let mut out = vec![0.0; np * d * n];
                for p in 0..np {
                    let mi = self.multi_index(p);
                    for k in 0..d {
                        let s = self.stride(k);
                        for c in 0..n {
                            let g = if mi[k] == 0 {
                                (values[(p + s) * n + c] - values[p * n + c]) / h
                            } else if mi[k] + 1 == self.resolution {
                                (values[p * n + c] - values[(p - s) * n + c]) / h
                            } else {
                                (values[(p + s) * n + c] - values[(p - s) * n + c]) / (2.0 * h)
                            };
                            out[(p * d + k) * n + c] = g;
                        }
                    }
                }
                out
            }
        }
    }

    /// Quadrature weight of each grid point for integrands that depend only
    /// on the point (radially symmetric ones in radial mode): trapezoid in r
    /// times r^{d−1} S_{d−1}, or h^d in Cartesian mode.
    pub fn volume_weights(&self) -> Vec<f64> {
        let np = self.num_points();
        match self.mode {
            GridMode::Radial => {
                let s = sphere_area(self.space_dim);
                let h = self.spacing;
                (0..np)
                    .map(|j| {
                        let r = j as f64 * h;
                        let end = if j == 0 || j + 1 == np { 0.5 } else { 1.0 };
                        s * end * h * r.powi(self.space_dim as i32 - 1)
                    })
                    .collect()
            }
            GridMode::Cartesian => vec![self.spacing.powi(self.space_dim as i32); np],
        }
    }

    /// Polar-angle nodes (cos θ, sin θ) with weights normalized to sum to
    /// S_{d−1}, for integrands axisymmetric about the x₁ axis.
    pub fn angular_nodes(&self) -> Vec<(f64, f64, f64)> {
        let d = self.space_dim;
        if d == 1 {
            return vec![(1.0, 0.0, 1.0), (-1.0, 0.0, 1.0)];
        }
        let m = ANGULAR_NODES;
        let raw: Vec<(f64, f64, f64)> = (0..m)
            .map(|k| {
                let th = (k as f64 + 0.5) * std::f64::consts::PI / m as f64;
                (th.cos(), th.sin(), th.sin().powi(d as i32 - 2))
            })
            .collect();
        let total: f64 = raw.iter().map(|r| r.2).sum();
        let s = sphere_area(d);
        raw.into_iter().map(|(c, sn, w)| (c, sn, w * s / total)).collect()
    }

    /// ∫ f over the domain for `f(idx, x)` depending on the point through its
    /// grid index (the field) and on the position x ∈ R^d (weights). In radial
    /// mode the integrand is assumed axisymmetric about the x₁ axis.
    pub fn integrate<F: FnMut(usize, &[f64]) -> f64>(&self, mut f: F) -> f64 {
        let d = self.space_dim;
        let mut x = vec![0.0; d];
        match self.mode {
            GridMode::Cartesian => {
                let w = self.spacing.powi(d as i32);
                let mut acc = 0.0;
                for p in 0..self.num_points() {
                    self.position(p, &mut x);
                    acc += w * f(p, &x);
                }
                acc
            }
            GridMode::Radial => {
                let nodes = self.angular_nodes();
                let np = self.resolution;
                let h = self.spacing;
                let mut acc = 0.0;
                for j in 0..np {
                    let r = j as f64 * h;
                    let end = if j == 0 || j + 1 == np { 0.5 } else { 1.0 };
                    let wr = end * h * r.powi(d as i32 - 1);
                    if wr == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for &(c, s, w) in &nodes {
                        x[0] = r * c;
                        if d > 1 {
                            x[1] = r * s;
                        }
                        inner += w * f(j, &x);
                    }
                    acc += wr * inner;
                }
                acc
            }
        }
    }

    /// Radially symmetric version of [`Grid::integrate`] for per-point data.
    pub fn integrate_values(&self, g: &[f64]) -> f64 {
        self.volume_weights().iter().zip(g).map(|(w, v)| w * v).sum()
    }

    /// ∫_{B(R)} g. Radial: S_{d−1}∫₀^R ρ^{d−1} g by trapezoid with a partial
    /// last cell (linear interpolation at R). Cartesian: points with |x| < R
    /// times h^d.
    pub fn ball_reduce(&self, radius: f64, g: &[f64]) -> Result<f64> {
        if radius < 0.0 || radius > self.extent * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("ball radius {radius} outside [0, {}]", self.extent)));
        }
        let d = self.space_dim as i32;
        match self.mode {
            GridMode::Radial => {
                let h = self.spacing;
                let f = |j: usize| (j as f64 * h).powi(d - 1) * g[j];
                let full = ((radius / h).floor() as usize).min(self.resolution - 1);
                let mut acc = 0.0;
                for j in 0..full {
                    acc += 0.5 * h * (f(j) + f(j + 1));
                }
                let rem = radius - full as f64 * h;
                if rem > 0.0 && full + 1 < self.resolution {
                    let theta = rem / h;
                    let g_r = g[full] + theta * (g[full + 1] - g[full]);
                    acc += 0.5 * rem * (f(full) + radius.powi(d - 1) * g_r);
                }
                Ok(sphere_area(self.space_dim) * acc)
            }
            GridMode::Cartesian => {
                let w = self.spacing.powi(d);
                Ok((0..self.num_points()).filter(|&p| self.radius(p) < radius).map(|p| w * g[p]).sum())
            }
        }
    }

    /// ∮_{∂B(R)} g. Radial: S_{d−1}R^{d−1} g(R) with g interpolated linearly.
    /// Cartesian: points in the shell R − h/2 ≤ |x| < R + h/2 times h^{d−1}.
    pub fn sphere_reduce(&self, radius: f64, g: &[f64]) -> Result<f64> {
        if radius < 0.0 || radius > self.extent * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("sphere radius {radius} outside [0, {}]", self.extent)));
        }
        let d = self.space_dim as i32;
        match self.mode {
            GridMode::Radial => Ok(sphere_area(self.space_dim) * radius.powi(d - 1) * self.interpolate(g, 1, radius)[0]),
            GridMode::Cartesian => {
                let h = self.spacing;
                let w = h.powi(d - 1);
                Ok((0..self.num_points())
                    .filter(|&p| {
                        let r = self.radius(p);
                        r >= radius - 0.5 * h && r < radius + 0.5 * h
                    })
                    .map(|p| w * g[p])
                    .sum())
            }
        }
    }

    /// Linear interpolation of radial data with `n` components at radius r.
    pub fn interpolate(&self, g: &[f64], n: usize, r: f64) -> Vec<f64> {
        debug_assert_eq!(self.mode, GridMode::Radial);
        let h = self.spacing;
        let pos = (r / h).clamp(0.0, (self.resolution - 1) as f64);
        let j = (pos.floor() as usize).min(self.resolution - 2);
        let t = pos - j as f64;
        (0..n).map(|c| g[j * n + c] * (1.0 - t) + g[(j + 1) * n + c] * t).collect()
    }
}

/// The discretized solution u(·, t).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub grid: Grid,
    pub n: usize,
    pub values: Vec<f64>,
    pub time: f64,
    /// Far-field value m held at the outer boundary.
    pub far_field: Vec<f64>,
}

impl FieldState {
    pub fn new(grid: Grid, far_field: Vec<f64>, values: Vec<f64>, time: f64) -> Result<FieldState> {
        let n = far_field.len();
        if n == 0 {
            return Err(Error::Domain("state dimension must be positive".into()));
        }
        if values.len() != grid.num_points() * n {
            return Err(Error::Domain(format!(
                "expected {} values, got {}",
                grid.num_points() * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("field values must be finite".into()));
        }
        let mut s = FieldState { grid, n, values, time, far_field };
        s.apply_boundary();
        Ok(s)
    }

    pub fn constant(grid: Grid, m: &[f64]) -> FieldState {
        let values = m.iter().cloned().cycle().take(grid.num_points() * m.len()).collect();
        FieldState { grid, n: m.len(), values, time: 0.0, far_field: m.to_vec() }
    }

    /// Sample `f(x)` at every grid point; boundary points are then clamped.
    pub fn from_fn(grid: Grid, far_field: &[f64], f: impl Fn(&[f64]) -> Vec<f64>) -> Result<FieldState> {
        let mut x = vec![0.0; grid.space_dim];
        let mut values = Vec::with_capacity(grid.num_points() * far_field.len());
        for p in 0..grid.num_points() {
            grid.position(p, &mut x);
            let v = f(&x);
            if v.len() != far_field.len() {
                return Err(Error::Domain("initial condition has the wrong number of components".into()));
            }
            values.extend(v);
        }
        FieldState::new(grid, far_field.to_vec(), values, 0.0)
    }

    pub fn num_points(&self) -> usize {
        self.grid.num_points()
    }

    pub fn at(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.n..(idx + 1) * self.n]
    }

    pub fn apply_boundary(&mut self) {
        for p in 0..self.grid.num_points() {
            if self.grid.is_boundary(p) {
                self.values[p * self.n..(p + 1) * self.n].copy_from_slice(&self.far_field);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// |u − m| per point.
    pub fn deviation(&self, m: &[f64]) -> Vec<f64> {
        self.values
            .chunks(self.n)
            .map(|u| u.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .collect()
    }

    /// Write the snapshot as CSV: coordinates (r, or x1..xd) then u1..un.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header: Vec<String> = match self.grid.mode {
            GridMode::Radial => vec!["r".into()],
            GridMode::Cartesian => (1..=self.grid.space_dim).map(|k| format!("x{k}")).collect(),
        };
        header.extend((1..=self.n).map(|c| format!("u{c}")));
        writeln!(w, "{}", header.join(","))?;
        let mut x = vec![0.0; self.grid.space_dim];
        for p in 0..self.num_points() {
            let mut cols: Vec<String> = match self.grid.mode {
                GridMode::Radial => vec![format!("{:?}", self.grid.radius(p))],
                GridMode::Cartesian => {
                    self.grid.position(p, &mut x);
                    x.iter().map(|v| format!("{v:?}")).collect()
                }
            };
            cols.extend(self.at(p).iter().map(|v| format!("{v:?}")));
            writeln!(w, "{}", cols.join(","))?;
        }
        Ok(())
    }
}

/// Discrete Laplacian of the state (zero on clamped boundary points).
pub fn laplacian(s: &FieldState) -> Vec<f64> {
    let mut out = vec![0.0; s.values.len()];
    s.grid.laplacian_into(&s.values, s.n, &mut out);
    out
}

/// |∇u|² per grid point (radial mode: u_r² only).
pub fn gradient_sq(s: &FieldState) -> Vec<f64> {
    let der = s.grid.derivatives(&s.values, s.n);
    let per_point = match s.grid.mode {
        GridMode::Radial => s.n,
        GridMode::Cartesian => s.n * s.grid.space_dim,
    };
    der.chunks(per_point).map(|c| c.iter().map(|v| v * v).sum()).collect()
}

/// ∫_{B(R)} integrand dx.
pub fn ball_reduce(s: &FieldState, radius: f64, integrand: &[f64]) -> Result<f64> {
    s.grid.ball_reduce(radius, integrand)
}
