//! Discretized elliptic Gaussian prior.
//!
//! The covariance is the squared inverse of K = a1 K_s + a2 M, represented
//! on coefficient vectors as Gamma_pr = K^{-1} M K^{-1} M. This is the
//! discretization that stays self-adjoint in the mass-weighted inner
//! product, with M-self-adjoint square root K^{-1} M. The prior operator
//! carries the natural (homogeneous Neumann) boundary condition of the
//! weak form; variance inflation near the boundary is a known consequence
//! and accepted here.

use std::sync::Arc;

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{BandedCholesky, Csr};
use crate::linops::{Factorization, MVector, MassSpace};
use crate::{Error, Result};

pub struct EllipticPrior {
    pub a1: f64,
    pub a2: f64,
    pub mean: MVector,
    space: Arc<MassSpace>,
    k: Csr,
    k_fact: Factorization,
    mass_chol: BandedCholesky,
}

impl EllipticPrior {
    pub fn new(
        space: Arc<MassSpace>,
        stiffness: &Csr,
        a1: f64,
        a2: f64,
        mean: MVector,
    ) -> Result<Self> {
        if a1 <= 0.0 || a2 <= 0.0 {
            return Err(Error::invalid("prior coefficients a1, a2 must be positive"));
        }
        if mean.len() != space.dim() {
            return Err(Error::invalid("prior mean has wrong dimension"));
        }
        let k = Csr::linear_combination(&[(a1, stiffness), (a2, &space.mass)]);
        let k_fact = Factorization::new(&k)?;
        let mass_chol = BandedCholesky::factor(&space.mass)?;
        Ok(EllipticPrior { a1, a2, mean, space, k, k_fact, mass_chol })
    }

    pub fn space(&self) -> &Arc<MassSpace> {
        &self.space
    }

    /// Gamma_pr x = K^{-1} M K^{-1} M x
    pub fn apply_gamma(&self, x: &MVector) -> MVector {
        self.apply_sqrt(&self.apply_sqrt(x))
    }

    /// Gamma_pr^{1/2} x = K^{-1} M x (M-self-adjoint square root)
    pub fn apply_sqrt(&self, x: &MVector) -> MVector {
        self.k_fact.solve(&self.space.apply(x))
    }

    /// Gamma_pr^{-1} x = M^{-1} K M^{-1} K x
    pub fn apply_inv(&self, x: &MVector) -> MVector {
        let y = self.space.solve(&DVector::from_vec(self.k.matvec(x.as_slice())));
        self.space.solve(&DVector::from_vec(self.k.matvec(y.as_slice())))
    }

    /// Draw from N(mean, Gamma_pr) using the supplied standard normal vector:
    /// mean + K^{-1} L g with M = L L^T.
    pub fn sample_with(&self, g: &MVector) -> MVector {
        let lg = DVector::from_vec(self.mass_chol.mul_lower(g.as_slice()));
        &self.mean + self.k_fact.solve(&lg)
    }

    /// Seeded draw from N(mean, Gamma_pr).
    pub fn sample(&self, seed: u64) -> MVector {
        self.sample_with(&standard_normal(self.space.dim(), seed))
    }

    /// Turn a standard normal into an M-whitened vector (identity covariance
    /// in the M-inner product): L^{-T} g with M = L L^T. Applying
    /// `apply_sqrt` to the result gives a zero-mean prior draw.
    pub fn whiten(&self, g: &MVector) -> MVector {
        let mut w = g.clone();
        self.mass_chol.solve_lower_transpose_in_place(w.as_mut_slice());
        w
    }
}

/// Seeded standard normal vector.
pub fn standard_normal(n: usize, seed: u64) -> MVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}
