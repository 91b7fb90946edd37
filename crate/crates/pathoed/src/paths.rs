//! Parameterized sensor-path families: Bezier and Fourier.
//!
//! A path model fixes the curve family, its structural data (degree and
//! endpoint pinning, or mode count and loop center) and the inversion
//! interval; the design vector supplies the free coefficients. Bezier
//! parameters are mapped linearly from the inversion interval to [0, 1]
//! and evaluated with de Casteljau's recurrence; Fourier paths are affine
//! in the design vector, r(t) = center + T_f(t) xi.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Endpoint handling for Bezier paths. Pinned coordinates are excluded
/// from the design vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pinning {
    /// All control points free: xi has length 2 (degree + 1).
    Free,
    /// First and last control points fixed.
    Fixed { start: [f64; 2], end: [f64; 2] },
    /// Closed loop: first and last control points coincide at `anchor`.
    Closed { anchor: [f64; 2] },
}

#[derive(Debug, Clone)]
pub struct BezierPath {
    pub degree: usize,
    pub pinning: Pinning,
    /// Inversion interval [t_a, t_b].
    pub window: [f64; 2],
    /// Quadrature points for the acceleration penalty.
    pub accel_quad_points: usize,
}

#[derive(Debug, Clone)]
pub struct FourierPath {
    pub modes: usize,
    pub center: [f64; 2],
    pub window: [f64; 2],
}

#[derive(Debug, Clone)]
pub enum PathModel {
    Bezier(BezierPath),
    Fourier(FourierPath),
}

impl BezierPath {
    pub fn new(degree: usize, pinning: Pinning, window: [f64; 2]) -> Result<Self> {
        if degree < 1 {
            return Err(Error::invalid("bezier degree must be at least 1"));
        }
        if window[1] <= window[0] {
            return Err(Error::invalid("inversion interval must have positive length"));
        }
        Ok(BezierPath { degree, pinning, window, accel_quad_points: 512 })
    }

    pub fn dim(&self) -> usize {
        match self.pinning {
            Pinning::Free => 2 * (self.degree + 1),
            Pinning::Fixed { .. } | Pinning::Closed { .. } => 2 * (self.degree - 1),
        }
    }

    /// Assemble the full control polygon from the design vector.
    pub fn control_points(&self, xi: &[f64]) -> Vec<[f64; 2]> {
        assert_eq!(xi.len(), self.dim());
        let n = self.degree;
        match self.pinning {
            Pinning::Free => (0..=n).map(|j| [xi[2 * j], xi[2 * j + 1]]).collect(),
            Pinning::Fixed { start, end } => {
                let mut pts = Vec::with_capacity(n + 1);
                pts.push(start);
                for j in 0..n - 1 {
                    pts.push([xi[2 * j], xi[2 * j + 1]]);
                }
                pts.push(end);
                pts
            }
            Pinning::Closed { anchor } => {
                let mut pts = Vec::with_capacity(n + 1);
                pts.push(anchor);
                for j in 0..n - 1 {
                    pts.push([xi[2 * j], xi[2 * j + 1]]);
                }
                pts.push(anchor);
                pts
            }
        }
    }

    /// Control-point indices whose coordinates form the design vector.
    fn free_points(&self) -> std::ops::RangeInclusive<usize> {
        match self.pinning {
            Pinning::Free => 0..=self.degree,
            _ => 1..=self.degree - 1,
        }
    }

    fn s_of_t(&self, t: f64) -> f64 {
        (t - self.window[0]) / (self.window[1] - self.window[0])
    }
}

impl FourierPath {
    pub fn new(modes: usize, center: [f64; 2], window: [f64; 2]) -> Result<Self> {
        if modes < 1 {
            return Err(Error::invalid("fourier path needs at least one mode"));
        }
        if window[1] <= window[0] {
            return Err(Error::invalid("inversion interval must have positive length"));
        }
        Ok(FourierPath { modes, center, window })
    }

    pub fn dim(&self) -> usize {
        4 * self.modes
    }

    pub fn omega(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * j as f64 / (self.window[1] - self.window[0])
    }

    /// The 2 x 4 N_f matrix T_f(t) with r(t) = center + T_f(t) xi.
    pub fn assemble_tf(&self, t: f64) -> DMatrix<f64> {
        let mut tf = DMatrix::zeros(2, self.dim());
        for j in 1..=self.modes {
            let (c, s) = ((self.omega(j) * t).cos(), (self.omega(j) * t).sin());
            let base = 4 * (j - 1);
            tf[(0, base)] = c;
            tf[(0, base + 1)] = s;
            tf[(1, base + 2)] = c;
            tf[(1, base + 3)] = s;
        }
        tf
    }

    /// Spectral norm of T_f(t), which is sqrt(N_f) for every t.
    pub fn spectral_norm_tf(&self) -> f64 {
        (self.modes as f64).sqrt()
    }

    /// Euclidean bound on xi that confines the path to a disk of radius
    /// `r_omega` around the center.
    pub fn disk_constraint_radius(&self, r_omega: f64) -> Result<f64> {
        if r_omega <= 0.0 {
            return Err(Error::invalid("disk radius must be positive"));
        }
        Ok(r_omega / (self.modes as f64).sqrt())
    }

    /// Per-coordinate bounds confining the path to the box
    /// [center - half_widths, center + half_widths]; the box must sit
    /// inside the unit square.
    pub fn box_constraint_bounds(&self, half_widths: [f64; 2]) -> Result<Vec<f64>> {
        let [hx, hy] = half_widths;
        if hx <= 0.0 || hy <= 0.0 {
            return Err(Error::invalid("box half-widths must be positive"));
        }
        let inside = self.center[0] - hx >= 0.0
            && self.center[0] + hx <= 1.0
            && self.center[1] - hy >= 0.0
            && self.center[1] + hy <= 1.0;
        if !inside {
            return Err(Error::invalid("constraint box exceeds the unit square"));
        }
        let bx = hx / (2.0 * self.modes as f64);
        let by = hy / (2.0 * self.modes as f64);
        let mut bounds = Vec::with_capacity(self.dim());
        for _ in 0..self.modes {
            bounds.extend_from_slice(&[bx, bx, by, by]);
        }
        Ok(bounds)
    }
}

/// All Bernstein basis values B_{j,n}(s), j = 0..=n.
fn bernstein_all(n: usize, s: f64) -> Vec<f64> {
    let mut b = vec![0.0; n + 1];
    b[0] = 1.0;
    for k in 1..=n {
        for i in (1..=k).rev() {
            b[i] = (1.0 - s) * b[i] + s * b[i - 1];
        }
        b[0] *= 1.0 - s;
    }
    b
}

/// de Casteljau evaluation of a Bezier curve at parameter s.
fn de_casteljau(points: &[[f64; 2]], s: f64) -> [f64; 2] {
    let mut work: Vec<[f64; 2]> = points.to_vec();
    for level in (1..work.len()).rev() {
        for i in 0..level {
            work[i] = [
                (1.0 - s) * work[i][0] + s * work[i + 1][0],
                (1.0 - s) * work[i][1] + s * work[i + 1][1],
            ];
        }
    }
    work[0]
}

impl PathModel {
    pub fn dim(&self) -> usize {
        match self {
            PathModel::Bezier(b) => b.dim(),
            PathModel::Fourier(f) => f.dim(),
        }
    }

    pub fn window(&self) -> [f64; 2] {
        match self {
            PathModel::Bezier(b) => b.window,
            PathModel::Fourier(f) => f.window,
        }
    }

    fn check_t(&self, t: f64) -> Result<()> {
        let [a, b] = self.window();
        let eps = 1e-12 * (b - a).abs().max(1.0);
        if t < a - eps || t > b + eps {
            return Err(Error::invalid(format!(
                "time {t} outside the inversion interval [{a}, {b}]"
            )));
        }
        Ok(())
    }

    /// Sensor position r(t; xi).
    pub fn eval(&self, xi: &[f64], t: f64) -> Result<[f64; 2]> {
        self.check_t(t)?;
        match self {
            PathModel::Bezier(bz) => {
                let pts = bz.control_points(xi);
                Ok(de_casteljau(&pts, bz.s_of_t(t)))
            }
            PathModel::Fourier(fp) => {
                let mut x = fp.center;
                for j in 1..=fp.modes {
                    let (c, s) = ((fp.omega(j) * t).cos(), (fp.omega(j) * t).sin());
                    let base = 4 * (j - 1);
                    x[0] += xi[base] * c + xi[base + 1] * s;
                    x[1] += xi[base + 2] * c + xi[base + 3] * s;
                }
                Ok(x)
            }
        }
    }

    /// 2 x N Jacobian of r(t; xi) with respect to the design vector.
    pub fn jacobian(&self, _xi: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.check_t(t)?;
        match self {
            PathModel::Bezier(bz) => {
                let bern = bernstein_all(bz.degree, bz.s_of_t(t));
                let mut jac = DMatrix::zeros(2, bz.dim());
                for (col, j) in bz.free_points().enumerate() {
                    jac[(0, 2 * col)] = bern[j];
                    jac[(1, 2 * col + 1)] = bern[j];
                }
                Ok(jac)
            }
            PathModel::Fourier(fp) => Ok(fp.assemble_tf(t)),
        }
    }

    /// Acceleration penalty (gamma/2) int ||r''(t)||^2 dt over the
    /// inversion interval, with its gradient in xi. Closed form for
    /// Fourier paths, differentiated trapezoid quadrature for Bezier.
    pub fn accel_penalty(&self, xi: &[f64], gamma: f64) -> Result<(f64, DVector<f64>)> {
        if gamma < 0.0 {
            return Err(Error::invalid("penalty weight must be nonnegative"));
        }
        if gamma == 0.0 {
            return Ok((0.0, DVector::zeros(self.dim())));
        }
        match self {
            PathModel::Fourier(fp) => {
                let len = fp.window[1] - fp.window[0];
                let mut value = 0.0;
                let mut grad = DVector::zeros(fp.dim());
                for j in 1..=fp.modes {
                    let w4 = fp.omega(j).powi(4);
                    let base = 4 * (j - 1);
                    for k in 0..4 {
                        value += w4 * xi[base + k] * xi[base + k];
                        grad[base + k] = gamma * len / 2.0 * w4 * xi[base + k];
                    }
                }
                Ok((gamma * len / 4.0 * value, grad))
            }
            PathModel::Bezier(bz) => {
                let pts = bz.control_points(xi);
                let n = bz.degree;
                if n < 2 {
                    return Ok((0.0, DVector::zeros(bz.dim())));
                }
                let len = bz.window[1] - bz.window[0];
                // second derivative in s: n(n-1) sum_k B_{k,n-2}(s) D2p_k,
                // and d2r/dt2 = (1/len^2) d2r/ds2
                let d2: Vec<[f64; 2]> = (0..=n - 2)
                    .map(|k| {
                        [
                            pts[k + 2][0] - 2.0 * pts[k + 1][0] + pts[k][0],
                            pts[k + 2][1] - 2.0 * pts[k + 1][1] + pts[k][1],
                        ]
                    })
                    .collect();
                let scale = (n * (n - 1)) as f64 / (len * len);
                let nq = bz.accel_quad_points;
                let mut value = 0.0;
                let mut grad = DVector::zeros(bz.dim());
                for q in 0..=nq {
                    let s = q as f64 / nq as f64;
                    let trap = if q == 0 || q == nq { 0.5 } else { 1.0 };
                    let bern = bernstein_all(n - 2, s);
                    let mut acc = [0.0, 0.0];
                    for (k, b) in bern.iter().enumerate() {
                        acc[0] += b * d2[k][0];
                        acc[1] += b * d2[k][1];
                    }
                    acc[0] *= scale;
                    acc[1] *= scale;
                    let wq = trap * len / nq as f64;
                    value += wq * (acc[0] * acc[0] + acc[1] * acc[1]);
                    // d ||acc||^2 / d p_j = 2 acc . d acc / d p_j, where the
                    // second-difference stencil contributes (B_{j-2} - 2B_{j-1} + B_j)
                    for (col, j) in bz.free_points().enumerate() {
                        let mut stencil = 0.0;
                        if j >= 2 && j - 2 <= n - 2 {
                            stencil += bern[j - 2];
                        }
                        if j >= 1 && j - 1 <= n - 2 {
                            stencil -= 2.0 * bern[j - 1];
                        }
                        if j <= n - 2 {
                            stencil += bern[j];
                        }
                        // closed loops: the anchor occupies both ends, but the
                        // anchor is pinned, so no extra column appears
                        let f = scale * stencil;
                        grad[2 * col] += wq * 2.0 * acc[0] * f;
                        grad[2 * col + 1] += wq * 2.0 * acc[1] * f;
                    }
                }
                Ok((0.5 * gamma * value, grad * (0.5 * gamma)))
            }
        }
    }
}
