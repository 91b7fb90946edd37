//! Implicit-Euler solution operator for the advection-diffusion model and
//! its adjoint in the weighted snapshot space.
//!
//! One step solves A u_{l+1} = M u_l + a_{l+1} dt M m with
//! A = M + dt (alpha K_s + N_adv), Dirichlet rows/columns eliminated
//! symmetrically and the right-hand side masked so constrained nodes stay
//! exactly zero. The adjoint is a backward sweep with A^T,
//!
//!   A^T lam_l = Z (w_l M v_l + M lam_{l+1}),   S* V = dt sum_l a_l lam_l,
//!
//! the O(n_t) equivalent of unrolling the forward recursion into power
//! sums. Correctness is pinned by the adjoint identity
//! <<S m, V>>_M = <m, S* V>_M and a dense matrix-power oracle in tests.

use std::sync::Arc;

use nalgebra::DVector;

use crate::linalg::Csr;
use crate::linops::{Factorization, MVector, MassSpace, Snapshot};
use crate::mesh::{assemble_advection, assemble_stiffness, Edge, StructuredMesh};
use crate::Result;

pub struct ForwardModel {
    pub alpha: f64,
    pub dt: f64,
    pub n_t: usize,
    /// a_l = a(t_l) for l = 1..n_t (index 0 holds a_1).
    pub amplitudes: Vec<f64>,
    /// Snapshot quadrature weights, w_l = dt (right-endpoint rule).
    pub weights: DVector<f64>,
    pub dirichlet: Vec<usize>,
    dirichlet_mask: Vec<bool>,
    space: Arc<MassSpace>,
    a_fact: Factorization,
}

impl ForwardModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new<V, A>(
        mesh: &StructuredMesh,
        space: Arc<MassSpace>,
        alpha: f64,
        velocity: V,
        amplitude: A,
        t_final: f64,
        n_t: usize,
        dirichlet_edges: &[Edge],
    ) -> Result<Self>
    where
        V: Fn([f64; 2]) -> [f64; 2],
        A: Fn(f64) -> f64,
    {
        let dt = t_final / n_t as f64;
        let stiffness = assemble_stiffness(mesh);
        let advection = assemble_advection(mesh, velocity);
        let system = Csr::linear_combination(&[
            (1.0, &space.mass),
            (dt * alpha, &stiffness),
            (dt, &advection),
        ]);
        let dirichlet = mesh.boundary_nodes(dirichlet_edges);
        let system = system.eliminate_symmetric(&dirichlet);
        let a_fact = Factorization::new(&system)?;
        let mut dirichlet_mask = vec![false; space.dim()];
        for &i in &dirichlet {
            dirichlet_mask[i] = true;
        }
        let amplitudes = (1..=n_t).map(|l| amplitude(l as f64 * dt)).collect();
        Ok(ForwardModel {
            alpha,
            dt,
            n_t,
            amplitudes,
            weights: DVector::from_element(n_t, dt),
            dirichlet,
            dirichlet_mask,
            space,
            a_fact,
        })
    }

    pub fn space(&self) -> &Arc<MassSpace> {
        &self.space
    }

    fn mask(&self, v: &mut [f64]) {
        if self.dirichlet.is_empty() {
            return;
        }
        for &i in &self.dirichlet {
            v[i] = 0.0;
        }
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet_mask[node]
    }

    /// Snapshot weights for a window of the first `n_cols` steps.
    pub fn window_weights(&self, n_cols: usize) -> DVector<f64> {
        DVector::from_element(n_cols, self.dt)
    }

    /// Forward solve, keeping only the first `n_cols` snapshot columns.
    /// With u_0 = 0 the returned columns are u_1 .. u_{n_cols}.
    pub fn solve_forward_windowed(&self, m: &MVector, n_cols: usize) -> Snapshot {
        assert!(n_cols <= self.n_t);
        let n = self.space.dim();
        let mut snap = Snapshot::zeros(n, self.window_weights(n_cols));
        let m_m = self.space.apply(m);
        let mut u = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for l in 0..n_cols {
            self.space.mass.matvec_into(&u, &mut rhs);
            let s = self.amplitudes[l] * self.dt;
            for (r, mm) in rhs.iter_mut().zip(m_m.iter()) {
                *r += s * mm;
            }
            self.mask(&mut rhs);
            self.a_fact.solve_in_place(&mut rhs);
            u.copy_from_slice(&rhs);
            snap.data.column_mut(l).copy_from_slice(&u);
        }
        snap
    }

    /// Full forward solve: snapshot columns u_1 .. u_{n_t}.
    pub fn solve_forward(&self, m: &MVector) -> Snapshot {
        self.solve_forward_windowed(m, self.n_t)
    }

    /// Adjoint applied to per-column sources s_l already of the form
    /// w_l M v_l, given as (time index l in 1..=n_t, vector) pairs. Columns
    /// beyond the last supplied source contribute nothing, so the backward
    /// sweep starts there.
    pub fn apply_adjoint_sources(&self, sources: &[(usize, MVector)]) -> MVector {
        let n = self.space.dim();
        let mut result = DVector::zeros(n);
        let last = sources.iter().map(|&(l, _)| l).max().unwrap_or(0);
        if last == 0 {
            return result;
        }
        assert!(last <= self.n_t);
        let mut by_col: Vec<Option<&MVector>> = vec![None; last + 1];
        for (l, s) in sources {
            assert!(*l >= 1 && s.len() == n);
            by_col[*l] = Some(s);
        }
        let mut lam = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for l in (1..=last).rev() {
            self.space.mass.matvec_into(&lam, &mut rhs);
            if let Some(s) = by_col[l] {
                for (r, sv) in rhs.iter_mut().zip(s.iter()) {
                    *r += sv;
                }
            }
            self.mask(&mut rhs);
            self.a_fact.solve_transpose_in_place(&mut rhs);
            lam.copy_from_slice(&rhs);
            let a_l = self.amplitudes[l - 1];
            for (out, &lv) in result.iter_mut().zip(lam.iter()) {
                *out += a_l * lv;
            }
        }
        result * self.dt
    }

    /// S* V for a full snapshot V.
    pub fn apply_adjoint(&self, v: &Snapshot) -> MVector {
        assert_eq!(v.n_x(), self.space.dim());
        let sources: Vec<(usize, MVector)> = (0..v.n_t())
            .map(|l| {
                let col: Vec<f64> = v.data.column(l).iter().copied().collect();
                let mv = DVector::from_vec(self.space.mass.matvec(&col));
                (l + 1, mv * v.weights[l])
            })
            .collect();
        self.apply_adjoint_sources(&sources)
    }
}
