//! Discretized observation along a sensor path.
//!
//! `build_phi` evaluates the P1 basis at the path position for every
//! global time step inside the inversion interval; columns outside the
//! interval stay empty so the observation operator only ever reads
//! in-window data. The extraction of measurement columns is done by
//! indexing, never by materializing a selection matrix. Measurements are
//! pointwise P1 evaluations; `mollified_observe` provides the
//! locally-averaged variant used to validate that pointwise evaluation is
//! the vanishing-width limit.

use nalgebra::{DMatrix, DVector};

use crate::linops::{MVector, MassSpace, Snapshot};
use crate::mesh::{SparseVector, StructuredMesh};
use crate::paths::PathModel;
use crate::{Error, Result};

/// Measurement time indices (1-based into the global grid), strictly
/// increasing, all inside the inversion interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSchedule {
    pub indices: Vec<usize>,
}

impl ObservationSchedule {
    pub fn new(indices: Vec<usize>, n_t: usize) -> Result<Self> {
        if indices.is_empty() {
            return Ok(ObservationSchedule { indices });
        }
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("measurement indices must strictly increase"));
            }
        }
        if indices[0] < 1 || *indices.last().unwrap() > n_t {
            return Err(Error::invalid("measurement indices outside the time grid"));
        }
        Ok(ObservationSchedule { indices })
    }

    /// Every `stride`-th step of the global grid inside `window`, starting
    /// one stride after the first in-window step.
    pub fn from_window_stride(
        dt: f64,
        n_t: usize,
        window: [f64; 2],
        stride: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        let eps = 1e-9 * dt * n_t as f64;
        let l_min = ((window[0] - eps) / dt).ceil().max(1.0) as usize;
        let l_max = (((window[1] + eps) / dt).floor() as usize).min(n_t);
        if l_min > l_max {
            return Err(Error::invalid("inversion window contains no grid times"));
        }
        let indices: Vec<usize> = (1..)
            .map(|k| l_min + k * stride)
            .take_while(|&l| l <= l_max)
            .collect();
        Self::new(indices, n_t)
    }

    pub fn n_y(&self) -> usize {
        self.indices.len()
    }

    pub fn times(&self, dt: f64) -> Vec<f64> {
        self.indices.iter().map(|&l| l as f64 * dt).collect()
    }
}

/// Basis data at one in-window grid time.
#[derive(Debug, Clone)]
pub struct PhiColumn {
    pub point: [f64; 2],
    pub basis: SparseVector,
    pub grad_x: SparseVector,
    pub grad_y: SparseVector,
    /// 2 x N path Jacobian at this time.
    pub jacobian: DMatrix<f64>,
}

/// Sparse basis-evaluation matrix along a path; column l (1-based) is
/// present exactly when t_l lies in the inversion interval.
#[derive(Debug, Clone)]
pub struct PhiMatrix {
    pub n_x: usize,
    pub n_t: usize,
    columns: Vec<Option<PhiColumn>>,
}

impl PhiMatrix {
    pub fn column(&self, l: usize) -> Option<&PhiColumn> {
        self.columns.get(l - 1).and_then(|c| c.as_ref())
    }

    /// Design derivative of column l in direction j:
    /// grad phi . (d r / d xi_j).
    pub fn partial_column(&self, l: usize, j: usize) -> Option<SparseVector> {
        self.column(l).map(|c| {
            let dx = c.jacobian[(0, j)];
            let dy = c.jacobian[(1, j)];
            SparseVector {
                indices: c.basis.indices.clone(),
                values: c
                    .grad_x
                    .values
                    .iter()
                    .zip(&c.grad_y.values)
                    .map(|(gx, gy)| gx * dx + gy * dy)
                    .collect(),
            }
        })
    }
}

/// Evaluate the basis (and its design derivative data) at the path
/// position for every global time step inside the inversion interval.
pub fn build_phi(
    mesh: &StructuredMesh,
    path: &PathModel,
    xi: &[f64],
    dt: f64,
    n_t: usize,
) -> Result<PhiMatrix> {
    let [ta, tb] = path.window();
    let eps = 1e-9 * dt * n_t as f64;
    let mut columns = Vec::with_capacity(n_t);
    for l in 1..=n_t {
        let t = l as f64 * dt;
        if t < ta - eps || t > tb + eps {
            columns.push(None);
            continue;
        }
        let t_clamped = t.clamp(ta, tb);
        let point = path.eval(xi, t_clamped)?;
        let basis = mesh.eval_basis(point);
        let (grad_x, grad_y) = mesh.eval_basis_grad(point);
        let jacobian = path.jacobian(xi, t_clamped)?;
        columns.push(Some(PhiColumn { point, basis, grad_x, grad_y, jacobian }));
    }
    Ok(PhiMatrix { n_x: mesh.n_nodes(), n_t, columns })
}

/// B(xi) U: pointwise evaluation of the snapshot at the measurement
/// times, y_k = <u_{l_k}, phi_{l_k}>.
pub fn observe(phi: &PhiMatrix, schedule: &ObservationSchedule, u: &Snapshot) -> Vec<f64> {
    assert_eq!(u.n_x(), phi.n_x);
    schedule
        .indices
        .iter()
        .map(|&l| {
            let col = phi
                .column(l)
                .unwrap_or_else(|| panic!("measurement index {l} outside inversion interval"));
            debug_assert!(l <= u.n_t());
            col.basis.dot(u.data.column(l - 1).as_slice())
        })
        .collect()
}

/// B*(xi) y: snapshot with column l_k equal to M^{-1} phi_{l_k} y_k / w_{l_k}.
pub fn adjoint_observe(
    phi: &PhiMatrix,
    schedule: &ObservationSchedule,
    y: &[f64],
    space: &MassSpace,
    weights: &DVector<f64>,
) -> Snapshot {
    assert_eq!(y.len(), schedule.n_y());
    let mut snap = Snapshot::zeros(phi.n_x, weights.clone());
    for (k, &l) in schedule.indices.iter().enumerate() {
        let col = phi.column(l).expect("measurement outside inversion interval");
        let mut dense = DVector::zeros(phi.n_x);
        col.basis.scatter_add(y[k] / weights[l - 1], dense.as_mut_slice());
        let solved = space.solve(&dense);
        snap.data.column_mut(l - 1).copy_from_slice(solved.as_slice());
    }
    snap
}

/// Gradient directions of the measurements with respect to sensor
/// position: entry k is (d y_k / d r_1, d y_k / d r_2) evaluated on the
/// snapshot. Contracting with the path Jacobian columns yields
/// (d_j B) U for every design direction j.
pub fn observe_position_gradients(
    phi: &PhiMatrix,
    schedule: &ObservationSchedule,
    u: &Snapshot,
) -> Vec<[f64; 2]> {
    schedule
        .indices
        .iter()
        .map(|&l| {
            let col = phi.column(l).expect("measurement outside inversion interval");
            let slice = u.data.column(l - 1);
            [col.grad_x.dot(slice.as_slice()), col.grad_y.dot(slice.as_slice())]
        })
        .collect()
}

/// (d_j B) U for one design direction.
pub fn observe_partial(
    phi: &PhiMatrix,
    schedule: &ObservationSchedule,
    u: &Snapshot,
    j: usize,
) -> Vec<f64> {
    let grads = observe_position_gradients(phi, schedule, u);
    schedule
        .indices
        .iter()
        .zip(grads)
        .map(|(&l, g)| {
            let jac = &phi.column(l).unwrap().jacobian;
            g[0] * jac[(0, j)] + g[1] * jac[(1, j)]
        })
        .collect()
}

/// Gaussian-weighted space-time quadrature of the snapshot against the
/// mollified point evaluations: mass-lumped in space over the mesh nodes,
/// trapezoid in time over the grid times inside the inversion interval.
/// With `renormalize` the discrete mollifier mass is divided out.
#[allow(clippy::too_many_arguments)]
pub fn mollified_observe(
    mesh: &StructuredMesh,
    space: &MassSpace,
    u: &Snapshot,
    dt: f64,
    path: &PathModel,
    xi: &[f64],
    eps_x: f64,
    eps_t: f64,
    measurement_times: &[f64],
    renormalize: bool,
) -> Result<Vec<f64>> {
    if eps_x <= 0.0 || eps_t <= 0.0 {
        return Err(Error::invalid("mollifier widths must be positive"));
    }
    let [ta, tb] = path.window();
    let n_t = u.n_t();
    let eps = 1e-9 * dt * n_t as f64;
    let in_window: Vec<usize> = (1..=n_t)
        .filter(|&l| {
            let t = l as f64 * dt;
            t >= ta - eps && t <= tb + eps
        })
        .collect();
    if in_window.is_empty() {
        return Err(Error::invalid("no grid times inside the inversion interval"));
    }
    // lumped spatial quadrature weights: row sums of M
    let mut lumped = vec![0.0; space.dim()];
    for (r, _c, v) in space.mass.iter() {
        lumped[r] += v;
    }

    let norm_x = 1.0 / (2.0 * std::f64::consts::PI * eps_x);
    let norm_t = 1.0 / (2.0 * std::f64::consts::PI * eps_t).sqrt();
    let mut out = Vec::with_capacity(measurement_times.len());
    for &tk in measurement_times {
        let mut acc = 0.0;
        let mut mass = 0.0;
        for (pos, &l) in in_window.iter().enumerate() {
            let t = (l as f64 * dt).clamp(ta, tb);
            let trap = if pos == 0 || pos == in_window.len() - 1 { 0.5 } else { 1.0 };
            let wt = trap * dt;
            let tau = norm_t * (-(t - tk) * (t - tk) / (2.0 * eps_t)).exp();
            if tau * wt < 1e-300 {
                continue;
            }
            let r = path.eval(xi, t)?;
            let ucol = u.data.column(l - 1);
            for (i, node) in mesh.nodes.iter().enumerate() {
                let d2 = (node[0] - r[0]).powi(2) + (node[1] - r[1]).powi(2);
                let delta = norm_x * (-d2 / (2.0 * eps_x)).exp();
                acc += wt * tau * delta * lumped[i] * ucol[i];
                mass += wt * tau * delta * lumped[i];
            }
        }
        out.push(if renormalize { acc / mass } else { acc });
    }
    Ok(out)
}

/// Smoothed indicator of a disk-shaped obscured region.
#[derive(Debug, Clone, Copy)]
pub struct ObscuredRegion {
    pub center: [f64; 2],
    pub radius: f64,
    pub steepness: f64,
}

impl ObscuredRegion {
    pub fn new(center: [f64; 2], radius: f64, steepness: f64) -> Result<Self> {
        if radius <= 0.0 || steepness <= 0.0 {
            return Err(Error::invalid("obscured region needs positive radius and steepness"));
        }
        Ok(ObscuredRegion { center, radius, steepness })
    }

    /// p(x) = 1 / (1 + exp((||x - c|| - R) / beta)), in (0, 1).
    pub fn weight(&self, x: [f64; 2]) -> f64 {
        let d = ((x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2)).sqrt();
        1.0 / (1.0 + ((d - self.radius) / self.steepness).exp())
    }

    /// Gradient of the weight; zero at the center where the radial
    /// direction degenerates (the smooth function has a critical point
    /// there by symmetry).
    pub fn weight_grad(&self, x: [f64; 2]) -> [f64; 2] {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        let d = (dx * dx + dy * dy).sqrt();
        if d == 0.0 {
            return [0.0, 0.0];
        }
        let p = self.weight(x);
        let e = ((d - self.radius) / self.steepness).exp();
        let f = if e.is_infinite() {
            // far field: p ~ exp(-(d-R)/beta), p^2 e -> 0
            0.0
        } else {
            -p * p * e / self.steepness
        };
        [f * dx / d, f * dy / d]
    }
}

/// Filter weights p_k at the measurement points plus their design
/// derivatives, rows indexed by measurement, columns by design component.
#[derive(Debug, Clone)]
pub struct FilterWeights {
    pub p: Vec<f64>,
    pub dp: DMatrix<f64>,
}

pub fn filter_matrix(
    region: &ObscuredRegion,
    phi: &PhiMatrix,
    schedule: &ObservationSchedule,
) -> FilterWeights {
    let n_y = schedule.n_y();
    let n = schedule
        .indices
        .first()
        .and_then(|&l| phi.column(l))
        .map(|c| c.jacobian.ncols())
        .unwrap_or(0);
    let mut p = Vec::with_capacity(n_y);
    let mut dp = DMatrix::zeros(n_y, n);
    for (k, &l) in schedule.indices.iter().enumerate() {
        let col = phi.column(l).expect("measurement outside inversion interval");
        p.push(region.weight(col.point));
        let g = region.weight_grad(col.point);
        for j in 0..n {
            dp[(k, j)] = g[0] * col.jacobian[(0, j)] + g[1] * col.jacobian[(1, j)];
        }
    }
    FilterWeights { p, dp }
}

/// An MVector restricted view helper for tests and experiment output.
pub fn snapshot_column(u: &Snapshot, l: usize) -> MVector {
    DVector::from_iterator(u.n_x(), u.data.column(l - 1).iter().copied())
}
