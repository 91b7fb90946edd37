//! Structured P1 triangular finite elements on the unit square.
//!
//! Nodes are laid out row-major on an `n_side x n_side` grid over
//! `[0,1]^2`; each grid cell is split along its lower-left to upper-right
//! diagonal. Points on cell boundaries are assigned by the lower-left
//! convention (grid lines belong to the cell on their left/bottom, the
//! diagonal belongs to the lower triangle), so every point has exactly one
//! containing triangle.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::linalg::Csr;
use crate::{Error, Result};

/// Domain boundary edges of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

/// Nonzero entries of a length-`n_x` vector; at most 3 for a P1 basis
/// evaluation at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * dense[i])
            .sum()
    }

    pub fn scatter_add(&self, scale: f64, dense: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            dense[i] += scale * v;
        }
    }
}

#[derive(Debug)]
pub struct StructuredMesh {
    pub n_side: usize,
    /// Node coordinates, index = iy * n_side + ix.
    pub nodes: Vec<[f64; 2]>,
    /// Vertex index triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    /// Area of every triangle: 1 / (2 (n_side-1)^2).
    pub element_area: f64,
    clamp_count: AtomicU64,
}

/// Location of a point in the mesh: triangle id plus barycentric data.
struct Located {
    vertices: [usize; 3],
    /// Barycentric coordinates at `vertices`.
    bary: [f64; 3],
    /// Constant gradients of the three vertex basis functions on this triangle.
    grads: [[f64; 2]; 3],
}

pub fn build_mesh(n_side: usize) -> Result<StructuredMesh> {
    if n_side < 2 {
        return Err(Error::invalid(format!(
            "n_side must be at least 2, got {n_side}"
        )));
    }
    let h = 1.0 / (n_side - 1) as f64;
    let mut nodes = Vec::with_capacity(n_side * n_side);
    for iy in 0..n_side {
        for ix in 0..n_side {
            nodes.push([ix as f64 * h, iy as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (n_side - 1) * (n_side - 1));
    for iy in 0..n_side - 1 {
        for ix in 0..n_side - 1 {
            let ll = iy * n_side + ix;
            let lr = ll + 1;
            let ul = ll + n_side;
            let ur = ul + 1;
            triangles.push([ll, lr, ur]); // lower (below the diagonal)
            triangles.push([ll, ur, ul]); // upper
        }
    }
    Ok(StructuredMesh {
        n_side,
        nodes,
        triangles,
        element_area: 0.5 * h * h,
        clamp_count: AtomicU64::new(0),
    })
}

impl StructuredMesh {
    pub fn n_nodes(&self) -> usize {
        self.n_side * self.n_side
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n_side - 1) as f64
    }

    /// Number of coordinate clamps performed so far by point evaluations.
    pub fn clamp_count(&self) -> u64 {
        self.clamp_count.load(Ordering::Relaxed)
    }

    /// Node indices on the given boundary edges (deduplicated, sorted).
    pub fn boundary_nodes(&self, edges: &[Edge]) -> Vec<usize> {
        let n = self.n_side;
        let mut out = Vec::new();
        for &e in edges {
            for k in 0..n {
                out.push(match e {
                    Edge::Left => k * n,
                    Edge::Right => k * n + (n - 1),
                    Edge::Bottom => k,
                    Edge::Top => (n - 1) * n + k,
                });
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Clamp a point into the closed unit square, counting the event.
    fn clamp(&self, x: [f64; 2]) -> [f64; 2] {
        let c = [x[0].clamp(0.0, 1.0), x[1].clamp(0.0, 1.0)];
        if c != x {
            self.clamp_count.fetch_add(1, Ordering::Relaxed);
        }
        c
    }

    /// Cell index along one axis under the lower-left convention.
    fn cell_index(&self, coord: f64) -> usize {
        let u = coord * (self.n_side - 1) as f64;
        let i = u.ceil() as i64 - 1;
        i.clamp(0, self.n_side as i64 - 2) as usize
    }

    fn locate(&self, x: [f64; 2]) -> Located {
        let x = self.clamp(x);
        let h = self.h();
        let ix = self.cell_index(x[0]);
        let iy = self.cell_index(x[1]);
        let s = (x[0] - ix as f64 * h) / h;
        let t = (x[1] - iy as f64 * h) / h;
        let ll = iy * self.n_side + ix;
        let lr = ll + 1;
        let ul = ll + self.n_side;
        let ur = ul + 1;
        let inv_h = 1.0 / h;
        if t <= s {
            Located {
                vertices: [ll, lr, ur],
                bary: [1.0 - s, s - t, t],
                grads: [[-inv_h, 0.0], [inv_h, -inv_h], [0.0, inv_h]],
            }
        } else {
            Located {
                vertices: [ll, ur, ul],
                bary: [1.0 - t, s, t - s],
                grads: [[0.0, -inv_h], [inv_h, 0.0], [-inv_h, inv_h]],
            }
        }
    }

    /// Values of the active basis functions at `x` (barycentric coordinates
    /// at the containing triangle's vertices). Entries sum to 1.
    pub fn eval_basis(&self, x: [f64; 2]) -> SparseVector {
        let loc = self.locate(x);
        SparseVector {
            indices: loc.vertices.to_vec(),
            values: loc.bary.to_vec(),
        }
    }

    /// Gradients of the active basis functions at `x`, as one sparse vector
    /// per coordinate direction. Constant on the containing triangle.
    pub fn eval_basis_grad(&self, x: [f64; 2]) -> (SparseVector, SparseVector) {
        let loc = self.locate(x);
        let dx = SparseVector {
            indices: loc.vertices.to_vec(),
            values: loc.grads.iter().map(|g| g[0]).collect(),
        };
        let dy = SparseVector {
            indices: loc.vertices.to_vec(),
            values: loc.grads.iter().map(|g| g[1]).collect(),
        };
        (dx, dy)
    }

    /// Constant gradients of the three vertex basis functions on a triangle.
    fn triangle_grads(&self, tri: &[usize; 3]) -> [[f64; 2]; 3] {
        // P1 gradient from vertex coordinates: for vertices a, b, c the
        // basis gradient at a is perp(c - b) / (2 area), CCW orientation.
        let [a, b, c] = [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]];
        let two_area = 2.0 * self.element_area;
        let g = |p: [f64; 2], q: [f64; 2]| [(p[1] - q[1]) / two_area, (q[0] - p[0]) / two_area];
        [g(b, c), g(c, a), g(a, b)]
    }

    fn triangle_centroid(&self, tri: &[usize; 3]) -> [f64; 2] {
        let [a, b, c] = [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]];
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }
}

/// Mass matrix M_ij = integral of phi_i phi_j. Exact element integrals.
pub fn assemble_mass(mesh: &StructuredMesh) -> Csr {
    let n = mesh.n_nodes();
    let w = mesh.element_area / 12.0;
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    for tri in &mesh.triangles {
        for (i, &vi) in tri.iter().enumerate() {
            for (j, &vj) in tri.iter().enumerate() {
                let e = if i == j { 2.0 * w } else { w };
                triplets.push((vi, vj, e));
            }
        }
    }
    Csr::from_triplets(n, n, &triplets)
}

/// Stiffness matrix (K_s)_ij = integral of grad phi_i . grad phi_j.
pub fn assemble_stiffness(mesh: &StructuredMesh) -> Csr {
    let n = mesh.n_nodes();
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    for tri in &mesh.triangles {
        let g = mesh.triangle_grads(tri);
        for (i, &vi) in tri.iter().enumerate() {
            for (j, &vj) in tri.iter().enumerate() {
                let e = mesh.element_area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                triplets.push((vi, vj, e));
            }
        }
    }
    Csr::from_triplets(n, n, &triplets)
}

/// Advection matrix (N_adv)_ij = integral of (v . grad phi_j) phi_i, by the
/// one-point (centroid) quadrature rule per triangle. Row index is the test
/// function, column index the trial function.
pub fn assemble_advection<F>(mesh: &StructuredMesh, velocity: F) -> Csr
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    let n = mesh.n_nodes();
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    for tri in &mesh.triangles {
        let g = mesh.triangle_grads(tri);
        let v = velocity(mesh.triangle_centroid(tri));
        // phi_i at the centroid is 1/3 for each vertex function
        let third = mesh.element_area / 3.0;
        for &vi in tri.iter() {
            for (j, &vj) in tri.iter().enumerate() {
                let e = third * (v[0] * g[j][0] + v[1] * g[j][1]);
                triplets.push((vi, vj, e));
            }
        }
    }
    Csr::from_triplets(n, n, &triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimal_mesh_counts() {
        let m = build_mesh(2).unwrap();
        assert_eq!(m.n_nodes(), 4);
        assert_eq!(m.triangles.len(), 2);
    }

    #[test]
    fn experiment_scale_mesh_counts() {
        let m = build_mesh(35).unwrap();
        assert_eq!(m.n_nodes(), 1225);
        assert_eq!(m.triangles.len(), 2312);
    }

    #[test]
    fn three_by_three_counts_and_area() {
        let m = build_mesh(3).unwrap();
        assert_eq!(m.n_nodes(), 9);
        assert_eq!(m.triangles.len(), 8);
        let total = m.element_area * m.triangles.len() as f64;
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn rejects_degenerate_mesh() {
        assert!(build_mesh(1).is_err());
        assert!(build_mesh(0).is_err());
    }

    #[test]
    fn mass_partition_of_unity() {
        for n_side in [2, 3, 5, 8] {
            let m = build_mesh(n_side).unwrap();
            let mass = assemble_mass(&m);
            let total: f64 = mass.values.iter().sum();
            assert!((total - 1.0).abs() <= 1e-12, "n_side={n_side}");
        }
    }

    #[test]
    fn mass_minimal_mesh_hand_values() {
        // Two unit-half triangles; element mass (area/12)[[2,1,1],[1,2,1],[1,1,2]].
        let m = build_mesh(2).unwrap();
        let d = assemble_mass(&m).to_dense();
        let e = 1.0 / 24.0;
        #[rustfmt::skip]
        let expect = [
            [4.0 * e, e,       e,       2.0 * e],
            [e,       2.0 * e, 0.0,     e      ],
            [e,       0.0,     2.0 * e, e      ],
            [2.0 * e, e,       e,       4.0 * e],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((d[(i, j)] - expect[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn mass_is_spd_dense_eigensolve() {
        let m = build_mesh(5).unwrap();
        let d = assemble_mass(&m).to_dense();
        assert_eq!(d.clone(), d.transpose());
        let eig = d.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let m = build_mesh(6).unwrap();
        let k = assemble_stiffness(&m);
        let y = k.matvec(&vec![1.0; m.n_nodes()]);
        assert!(y.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn stiffness_minimal_mesh_hand_values() {
        let m = build_mesh(2).unwrap();
        let d = assemble_stiffness(&m).to_dense();
        #[rustfmt::skip]
        let expect = [
            [ 1.0, -0.5, -0.5,  0.0],
            [-0.5,  1.0,  0.0, -0.5],
            [-0.5,  0.0,  1.0, -0.5],
            [ 0.0, -0.5, -0.5,  1.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((d[(i, j)] - expect[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn stiffness_is_psd() {
        let m = build_mesh(5).unwrap();
        let k = assemble_stiffness(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x: Vec<f64> = (0..m.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let kx = k.matvec(&x);
            let q: f64 = kx.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!(q >= -1e-12);
        }
    }

    #[test]
    fn advection_zero_velocity_is_zero() {
        let m = build_mesh(4).unwrap();
        let n = assemble_advection(&m, |_| [0.0, 0.0]);
        assert!(n.values.iter().all(|v| v.abs() == 0.0));
    }

    #[test]
    fn advection_constant_velocity_column_sums() {
        // Column sum j equals the integral of v . grad(phi_j): zero for
        // interior basis functions, a boundary flux otherwise.
        let n_side = 5;
        let m = build_mesh(n_side).unwrap();
        let adv = assemble_advection(&m, |_| [1.0, 0.0]);
        let d = adv.to_dense();
        let h = m.h();
        for ix in 0..n_side {
            for iy in 0..n_side {
                let j = iy * n_side + ix;
                let col_sum: f64 = (0..m.n_nodes()).map(|i| d[(i, j)]).sum();
                let interior = ix > 0 && ix < n_side - 1 && iy > 0 && iy < n_side - 1;
                if interior {
                    assert!(col_sum.abs() < 1e-14, "node ({ix},{iy})");
                } else if ix == 0 && iy > 0 && iy < n_side - 1 {
                    // left edge, outward normal (-1, 0): flux -h
                    assert!((col_sum + h).abs() < 1e-13);
                } else if ix == n_side - 1 && iy > 0 && iy < n_side - 1 {
                    assert!((col_sum - h).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn advection_rotational_field_matches_quadrature_oracle() {
        // Independent per-element assembly of the recirculating field used
        // in the Fourier experiments.
        let vel = |x: [f64; 2]| {
            [
                2.0 * (2.0 * x[1] - 1.0) * (1.0 - (2.0 * x[0] - 1.0).powi(2)),
                -2.0 * (2.0 * x[0] - 1.0) * (1.0 - (2.0 * x[1] - 1.0).powi(2)),
            ]
        };
        let m = build_mesh(6).unwrap();
        let adv = assemble_advection(&m, vel).to_dense();
        let nn = m.n_nodes();
        let mut oracle = nalgebra::DMatrix::<f64>::zeros(nn, nn);
        for tri in &m.triangles {
            let g = m.triangle_grads(tri);
            let c = m.triangle_centroid(tri);
            let v = vel(c);
            for &vi in tri.iter() {
                for (j, &vj) in tri.iter().enumerate() {
                    oracle[(vi, vj)] +=
                        m.element_area * (1.0 / 3.0) * (v[0] * g[j][0] + v[1] * g[j][1]);
                }
            }
        }
        for i in 0..nn {
            for j in 0..nn {
                assert!((adv[(i, j)] - oracle[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn basis_at_node_is_kronecker() {
        let m = build_mesh(4).unwrap();
        for (i, &p) in m.nodes.iter().enumerate() {
            let b = m.eval_basis(p);
            let total: f64 = b.values.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for (&idx, &v) in b.indices.iter().zip(&b.values) {
                if idx == i {
                    assert!((v - 1.0).abs() < 1e-12);
                } else {
                    assert!(v.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn basis_at_centroid_is_thirds() {
        let m = build_mesh(3).unwrap();
        let tri = &m.triangles[3];
        let c = m.triangle_centroid(tri);
        let b = m.eval_basis(c);
        let mut vals: Vec<_> = b.indices.iter().zip(&b.values).collect();
        vals.sort_by_key(|(i, _)| **i);
        let mut expect: Vec<usize> = tri.to_vec();
        expect.sort_unstable();
        for ((i, v), e) in vals.iter().zip(&expect) {
            assert_eq!(**i, *e);
            assert!((**v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_reproduces_linear_functions() {
        let m = build_mesh(7).unwrap();
        let f = |p: [f64; 2]| p[0] + 2.0 * p[1];
        let nodal: Vec<f64> = m.nodes.iter().map(|&p| f(p)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let b = m.eval_basis(x);
            assert!((b.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((b.dot(&nodal) - f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_grad_exact_for_linears() {
        let m = build_mesh(6).unwrap();
        let f = |p: [f64; 2]| 3.0 * p[0] - 1.5 * p[1] + 0.25;
        let nodal: Vec<f64> = m.nodes.iter().map(|&p| f(p)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let (dx, dy) = m.eval_basis_grad(x);
            assert!((dx.dot(&nodal) - 3.0).abs() < 1e-12);
            assert!((dy.dot(&nodal) + 1.5).abs() < 1e-12);
            // gradient of the partition of unity vanishes
            assert!(dx.values.iter().sum::<f64>().abs() < 1e-12);
            assert!(dy.values.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn directional_derivative_of_coordinate() {
        let m = build_mesh(5).unwrap();
        let fx: Vec<f64> = m.nodes.iter().map(|&p| p[0]).collect();
        let (dx, dy) = m.eval_basis_grad([0.37, 0.61]);
        assert!((dx.dot(&fx) - 1.0).abs() < 1e-12);
        assert!(dy.dot(&fx).abs() < 1e-12);
    }

    #[test]
    fn out_of_domain_points_are_clamped_and_counted() {
        let m = build_mesh(4).unwrap();
        assert_eq!(m.clamp_count(), 0);
        let b = m.eval_basis([-0.2, 1.4]);
        assert_eq!(m.clamp_count(), 1);
        let corner = m.eval_basis([0.0, 1.0]);
        assert_eq!(b, corner);
        assert_eq!(m.clamp_count(), 1);
    }

    #[test]
    fn boundary_node_sets() {
        let m = build_mesh(3).unwrap();
        assert_eq!(m.boundary_nodes(&[Edge::Left]), vec![0, 3, 6]);
        assert_eq!(m.boundary_nodes(&[Edge::Bottom]), vec![0, 1, 2]);
        assert_eq!(
            m.boundary_nodes(&[Edge::Left, Edge::Top]),
            vec![0, 3, 6, 7, 8]
        );
    }

    #[test]
    fn edge_and_diagonal_points_get_unique_assignment() {
        let m = build_mesh(4).unwrap();
        // on an interior vertical grid line and on a cell diagonal
        for x in [[1.0 / 3.0, 0.4], [0.5, 0.5], [2.0 / 3.0, 2.0 / 3.0]] {
            let b = m.eval_basis(x);
            assert!((b.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(b.values.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn partition_of_unity_everywhere(x in 0.0f64..1.0, y in 0.0f64..1.0, n in 2usize..9) {
                let m = build_mesh(n).unwrap();
                let b = m.eval_basis([x, y]);
                prop_assert!((b.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(b.indices.len() <= 3);
            }
        }
    }
}
