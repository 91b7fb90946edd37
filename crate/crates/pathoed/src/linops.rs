//! Weighted inner-product spaces, reusable factorizations, and a Lanczos
//! eigensolver in the mass-weighted inner product.
//!
//! Coefficient vectors live in the space with inner product
//! `<x, y>_M = y^T M x`; snapshot matrices carry positive quadrature
//! weights and the weighted Frobenius inner product
//! `<<U, V>>_M = sum_l w_l <u_l, v_l>_M`.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{BandedLu, Csr};
use crate::{Error, Result};

/// Coefficient vector in the mass-weighted space.
pub type MVector = DVector<f64>;

/// The mass-weighted space: holds M and a factorization for M^{-1} applies.
pub struct MassSpace {
    pub mass: Csr,
    lu: BandedLu,
}

impl MassSpace {
    pub fn new(mass: Csr) -> Result<Self> {
        let lu = BandedLu::factor(&mass)?;
        Ok(MassSpace { mass, lu })
    }

    pub fn dim(&self) -> usize {
        self.mass.n_rows
    }

    /// `<x, y>_M = y^T M x`
    pub fn inner(&self, x: &MVector, y: &MVector) -> f64 {
        let mx = self.mass.matvec(x.as_slice());
        mx.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self, x: &MVector) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    pub fn apply(&self, x: &MVector) -> MVector {
        DVector::from_vec(self.mass.matvec(x.as_slice()))
    }

    pub fn solve(&self, b: &MVector) -> MVector {
        let mut x = b.clone();
        self.lu.solve_in_place(x.as_mut_slice());
        x
    }
}

/// Snapshot matrix: column `l` holds the coefficients at time step `l+1`,
/// with positive quadrature weights over the time grid.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub data: DMatrix<f64>,
    pub weights: DVector<f64>,
}

impl Snapshot {
    pub fn zeros(n_x: usize, weights: DVector<f64>) -> Self {
        Snapshot {
            data: DMatrix::zeros(n_x, weights.len()),
            weights,
        }
    }

    pub fn n_x(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.data.ncols()
    }
}

/// Weighted Frobenius inner product of two snapshots,
/// `sum_l w_l <u_l, v_l>_M`, computed column by column.
pub fn st_inner(u: &Snapshot, v: &Snapshot, space: &MassSpace) -> Result<f64> {
    if u.n_x() != v.n_x() || u.n_t() != v.n_t() {
        return Err(Error::invalid(format!(
            "snapshot shape mismatch: {}x{} vs {}x{}",
            u.n_x(),
            u.n_t(),
            v.n_x(),
            v.n_t()
        )));
    }
    if u.weights != v.weights {
        return Err(Error::invalid("snapshot weights differ"));
    }
    if u.n_x() != space.dim() {
        return Err(Error::invalid("snapshot does not match space dimension"));
    }
    let mut total = 0.0;
    let mut mv = vec![0.0; u.n_x()];
    for l in 0..u.n_t() {
        space
            .mass
            .matvec_into(v.data.column(l).as_slice(), &mut mv);
        let dot: f64 = u
            .data
            .column(l)
            .iter()
            .zip(mv.iter())
            .map(|(a, b)| a * b)
            .sum();
        total += u.weights[l] * dot;
    }
    Ok(total)
}

/// Repeated solves with a fixed sparse matrix and its transpose.
pub struct Factorization {
    lu: BandedLu,
    lu_t: BandedLu,
}

impl Factorization {
    pub fn new(a: &Csr) -> Result<Self> {
        let lu = BandedLu::factor(a)?;
        let lu_t = BandedLu::factor(&a.transpose())?;
        Ok(Factorization { lu, lu_t })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.lu.solve_in_place(b);
    }

    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        self.lu_t.solve_in_place(b);
    }

    pub fn solve(&self, b: &MVector) -> MVector {
        let mut x = b.clone();
        self.lu.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_transpose(&self, b: &MVector) -> MVector {
        let mut x = b.clone();
        self.lu_t.solve_in_place(x.as_mut_slice());
        x
    }
}

/// One eigenpair of an M-self-adjoint operator.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: MVector,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct LanczosOutcome {
    /// Leading eigenpairs, values nonincreasing.
    pub pairs: Vec<EigenPair>,
    /// Operator applications performed.
    pub iterations: usize,
    /// True when the Krylov space exhausted the operator's range.
    pub exhausted: bool,
}

const LANCZOS_RESIDUAL_TOL: f64 = 1e-8;

/// Lanczos with full reorthogonalization in the M-inner product.
///
/// `apply` must be M-self-adjoint and positive semidefinite. Returns the
/// `rank` leading eigenpairs with M-orthonormal vectors; pairs whose
/// residual still exceeds `1e-8 * lambda_1` after `max_iter` applications
/// are flagged unconverged. On breakdown (invariant subspace found) the
/// iteration restarts with a fresh random direction so that requested
/// kernel pairs are still produced.
pub fn lanczos_m<F>(
    apply: F,
    space: &MassSpace,
    rank: usize,
    max_iter: usize,
    seed: u64,
) -> Result<LanczosOutcome>
where
    F: Fn(&MVector) -> MVector,
{
    let n = space.dim();
    if rank == 0 {
        return Ok(LanczosOutcome { pairs: Vec::new(), iterations: 0, exhausted: false });
    }
    if max_iter < rank {
        return Err(Error::invalid(format!(
            "lanczos requires max_iter >= rank ({max_iter} < {rank})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let randn = |rng: &mut ChaCha8Rng| -> MVector {
        DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
    };

    let mut basis: Vec<MVector> = Vec::new();
    let mut m_basis: Vec<MVector> = Vec::new(); // cached M * v_i
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new(); // betas[i] couples v_i and v_{i+1}
    let mut exhausted = false;

    // M-orthonormalize w against the current basis (two passes).
    let orthogonalize = |w: &mut MVector, basis: &[MVector], m_basis: &[MVector]| {
        for _ in 0..2 {
            for (v, mv) in basis.iter().zip(m_basis) {
                let c = mv.dot(w);
                w.axpy(-c, v, 1.0);
            }
        }
    };

    let mut v = randn(&mut rng);
    let nv = space.norm(&v);
    v /= nv;

    let mut scale = 0.0f64;
    let mut last_beta = 0.0;
    let mut iterations = 0;

    while iterations < max_iter {
        m_basis.push(space.apply(&v));
        basis.push(v.clone());
        let mut w = apply(&v);
        iterations += 1;
        let alpha = m_basis.last().unwrap().dot(&w);
        alphas.push(alpha);
        orthogonalize(&mut w, &basis, &m_basis);
        let beta = space.norm(&w);
        scale = scale.max(alpha.abs()).max(beta);
        last_beta = beta;

        if basis.len() >= rank {
            let (values, _, residuals) = ritz(&alphas, &betas, beta);
            let lmax = values.first().copied().unwrap_or(0.0).abs().max(1e-300);
            let converged = values
                .iter()
                .zip(&residuals)
                .take(rank)
                .filter(|(_, r)| **r <= LANCZOS_RESIDUAL_TOL * lmax)
                .count();
            if converged >= rank {
                break;
            }
        }
        if iterations == max_iter {
            break;
        }

        if beta <= 1e-10 * scale.max(1e-300) {
            // invariant subspace found: restart in its M-orthogonal complement
            exhausted = true;
            betas.push(0.0);
            last_beta = 0.0;
            let mut fresh = randn(&mut rng);
            orthogonalize(&mut fresh, &basis, &m_basis);
            let nf = space.norm(&fresh);
            if nf <= 1e-10 {
                // whole space spanned
                betas.pop();
                break;
            }
            v = fresh / nf;
        } else {
            betas.push(beta);
            v = w / beta;
        }
    }

    let (values, vectors, residuals) = ritz(&alphas, &betas, last_beta);
    let lmax = values.first().copied().unwrap_or(0.0).abs().max(1e-300);
    let mut pairs = Vec::new();
    for (i, &val) in values.iter().enumerate().take(rank) {
        let mut x = DVector::zeros(n);
        for (j, v) in basis.iter().enumerate() {
            x.axpy(vectors[(j, i)], v, 1.0);
        }
        // clip tiny negative values produced by roundoff
        let value = if val < 0.0 && val.abs() <= 1e-12 * lmax { 0.0 } else { val };
        pairs.push(EigenPair {
            value,
            vector: x,
            converged: residuals[i] <= LANCZOS_RESIDUAL_TOL * lmax,
        });
    }
    Ok(LanczosOutcome { pairs, iterations, exhausted })
}

/// Ritz values (descending), Ritz vector coefficients, and residual
/// estimates |beta_last * y[last, i]| for the tridiagonal built so far.
fn ritz(alphas: &[f64], betas: &[f64], beta_last: f64) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(k, k);
    let mut residuals = vec![0.0; k];
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
        residuals[col] = (beta_last * eig.eigenvectors[(k - 1, i)]).abs();
    }
    (values, vectors, residuals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{assemble_mass, assemble_stiffness, build_mesh};

    fn space(n_side: usize) -> MassSpace {
        let m = build_mesh(n_side).unwrap();
        MassSpace::new(assemble_mass(&m)).unwrap()
    }

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> MVector {
        DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn st_inner_zero_and_identity_cases() {
        let m = Csr::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        let sp = MassSpace::new(m).unwrap();
        let w = DVector::from_element(2, 1.0);
        let mut u = Snapshot::zeros(2, w.clone());
        assert_eq!(st_inner(&u, &u, &sp).unwrap(), 0.0);
        u.data[(0, 0)] = 1.0;
        u.data[(1, 1)] = 1.0;
        assert_eq!(st_inner(&u, &u, &sp).unwrap(), 2.0);
    }

    #[test]
    fn st_inner_shape_mismatch_is_error() {
        let sp = space(3);
        let u = Snapshot::zeros(9, DVector::from_element(4, 0.1));
        let v = Snapshot::zeros(9, DVector::from_element(5, 0.1));
        assert!(st_inner(&u, &v, &sp).is_err());
    }

    #[test]
    fn st_inner_matches_lemma_forms() {
        let sp = space(4);
        let n_x = sp.dim();
        let n_t = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = DVector::from_iterator(n_t, (0..n_t).map(|_| rng.gen_range(0.1..1.0)));
        let mut u = Snapshot::zeros(n_x, w.clone());
        let mut v = Snapshot::zeros(n_x, w.clone());
        for l in 0..n_t {
            for i in 0..n_x {
                u.data[(i, l)] = rng.gen_range(-1.0..1.0);
                v.data[(i, l)] = rng.gen_range(-1.0..1.0);
            }
        }
        let got = st_inner(&u, &v, &sp).unwrap();

        // direct triple sum oracle
        let md = sp.mass.to_dense();
        let mut oracle = 0.0;
        for l in 0..n_t {
            for i in 0..n_x {
                for j in 0..n_x {
                    oracle += w[l] * u.data[(i, l)] * md[(i, j)] * v.data[(j, l)];
                }
            }
        }
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));

        // 1^T (U o M V) w
        let mv = &md * &v.data;
        let had = u.data.component_mul(&mv);
        let ones = DVector::from_element(n_x, 1.0);
        let form1 = (ones.transpose() * had * &w)[(0, 0)];
        assert!((got - form1).abs() <= 1e-12 * form1.abs().max(1.0));

        // tr(U^T M V W)
        let wdiag = DMatrix::from_diagonal(&w);
        let form2 = (u.data.transpose() * md * &v.data * wdiag).trace();
        assert!((got - form2).abs() <= 1e-12 * form2.abs().max(1.0));
    }

    #[test]
    fn factorization_residual_contract() {
        let mesh = build_mesh(5).unwrap();
        let sp = MassSpace::new(assemble_mass(&mesh)).unwrap();
        let k = Csr::linear_combination(&[(1.0, &assemble_stiffness(&mesh)), (1.0, &sp.mass)]);
        let f = Factorization::new(&k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let b = rand_vec(sp.dim(), &mut rng);
            let x = f.solve(&b);
            let r = DVector::from_vec(k.matvec(x.as_slice())) - &b;
            assert!(r.norm() <= 1e-10 * b.norm());
            let xt = f.solve_transpose(&b);
            let rt = DVector::from_vec(k.transpose().matvec(xt.as_slice())) - &b;
            assert!(rt.norm() <= 1e-10 * b.norm());
        }
    }

    #[test]
    fn lanczos_identity_operator() {
        let sp = space(3);
        let out = lanczos_m(|x| x.clone(), &sp, 4, 14, 42).unwrap();
        assert_eq!(out.pairs.len(), 4);
        for p in &out.pairs {
            assert!((p.value - 1.0).abs() < 1e-10);
            assert!(p.converged);
        }
    }

    #[test]
    fn lanczos_rank_one_operator() {
        // x -> u <u, x>_M with ||u||_M = 2 has lambda_1 = 4, kernel elsewhere
        let sp = space(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut u = rand_vec(sp.dim(), &mut rng);
        let nu = sp.norm(&u);
        u *= 2.0 / nu;
        let out = lanczos_m(|x| &u * sp.inner(x, &u), &sp, 3, 13, 7).unwrap();
        assert!((out.pairs[0].value - 4.0).abs() < 1e-9);
        for p in &out.pairs[1..] {
            assert!(p.value.abs() < 1e-9);
        }
    }

    #[test]
    fn lanczos_matches_dense_generalized_eigensolve() {
        // apply = M^{-1} B with B symmetric PSD is M-self-adjoint
        let sp = space(4);
        let n = sp.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c = DMatrix::from_fn(6, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = c.transpose() * &c;
        let out = lanczos_m(|x| sp.solve(&(&b * x)), &sp, 6, 26, 99).unwrap();

        // dense oracle: generalized problem B x = lambda M x via Cholesky,
        // reduced to the standard symmetric problem L^{-1} B L^{-T}
        let md = sp.mass.to_dense();
        let lmat = md.clone().cholesky().unwrap().l();
        let t1 = lmat.solve_lower_triangular(&b).unwrap();
        let sym = lmat.solve_lower_triangular(&t1.transpose()).unwrap();
        let mut evals: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        evals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (i, p) in out.pairs.iter().enumerate() {
            assert!(
                (p.value - evals[i]).abs() <= 1e-8 * evals[0].max(1e-12),
                "pair {i}: {} vs {}",
                p.value,
                evals[i]
            );
        }
        // M-orthonormality
        for i in 0..out.pairs.len() {
            for j in 0..out.pairs.len() {
                let d = sp.inner(&out.pairs[i].vector, &out.pairs[j].vector);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-8, "({i},{j}): {d}");
            }
        }
        // residual contract for converged pairs
        for p in &out.pairs {
            if p.converged && p.value > 1e-10 {
                let y = sp.solve(&(&b * &p.vector));
                let r = &y - &p.vector * p.value;
                assert!(sp.norm(&r) <= 1e-8 * out.pairs[0].value);
            }
        }
    }

    #[test]
    fn lanczos_requires_enough_iterations() {
        let sp = space(3);
        assert!(lanczos_m(|x| x.clone(), &sp, 5, 3, 1).is_err());
    }

    #[test]
    fn lanczos_seeded_runs_are_identical() {
        let sp = space(3);
        let a = lanczos_m(|x| x * 2.0, &sp, 2, 12, 5).unwrap();
        let b = lanczos_m(|x| x * 2.0, &sp, 2, 12, 5).unwrap();
        for (pa, pb) in a.pairs.iter().zip(&b.pairs) {
            assert_eq!(pa.value, pb.value);
            assert_eq!(pa.vector, pb.vector);
        }
    }
}
