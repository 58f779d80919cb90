//! Dense direct solve on the coarsest level with the translation modes deflated.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn};

use super::LevelOperator;
use crate::grid::GridLevel;
use crate::{Error, Result};

/// Largest coarsest level (in vertices) factorized densely.
pub const MAX_COARSE_VERTICES: usize = 1000;

/// Eigenvalues within this many storage epsilons of zero (relative to the
/// largest) are treated as rounding.
const NOISE_ULPS: f64 = 256.0;

#[derive(Clone, Debug)]
enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    /// Eigenvectors and inverted eigenvalues, zero for dropped modes.
    Pseudo(DMatrix<f64>, DVector<f64>),
}

impl Factor {
    fn new(a: DMatrix<f64>, eps: f64) -> Result<Self> {
        let dofs = a.nrows();
        if let Some(c) = Cholesky::new(a.clone()) {
            return Ok(Factor::Cholesky(c));
        }
        let eig = a.symmetric_eigen();
        let lmax = eig.eigenvalues.amax();
        let floor = NOISE_ULPS * eps * lmax;
        let lmin = eig.eigenvalues.min();
        if lmax <= 0.0 || lmin < -floor {
            return Err(Error::CoarseFactorization { dofs });
        }
        let dropped = eig.eigenvalues.iter().filter(|&&l| l <= floor).count();
        log::debug!("coarsest operator singular to storage precision, {dropped} of {dofs} modes dropped");
        let inv = eig.eigenvalues.map(|l| if l > floor { 1.0 / l } else { 0.0 });
        Ok(Factor::Pseudo(eig.eigenvectors, inv))
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Pseudo(v, inv) => {
                let mut y = v.tr_mul(b);
                y.component_mul_assign(inv);
                v * y
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct CoarseSolver {
    grid: GridLevel,
    factor: Factor,
}

impl CoarseSolver {
    /// Factor `A + α P`, with `P` the orthogonal projector onto the rigid translations.
    ///
    /// `eps` is the epsilon of the stencil storage. When Cholesky fails and the
    /// most negative eigenvalue is within rounding of zero, a pseudo-inverse is
    /// used instead; otherwise the operator is reported singular.
    pub fn new<O: LevelOperator + ?Sized>(op: &O, eps: f64) -> Result<Self> {
        let grid = op.grid().clone();
        let n = grid.vertex_count();
        if n > MAX_COARSE_VERTICES {
            return Err(Error::Resolution {
                res: grid.res(),
                reason: format!(
                    "coarsest level has {n} vertices, more than the {MAX_COARSE_VERTICES} solved directly"
                ),
            });
        }
        let dofs = 3 * n;
        let mut a = DMatrix::<f64>::zeros(dofs, dofs);
        for p in 0..n {
            let v = grid.vertex_at(p);
            let row = op.stencil_row(v);
            let locs = grid.neighbor_locations(v);
            for s in 0..27 {
                let q = locs[s];
                for al in 0..3 {
                    for be in 0..3 {
                        a[(3 * p + al, 3 * q + be)] += row[s][3 * al + be];
                    }
                }
            }
        }
        // symmetrize away storage rounding
        let at = a.transpose();
        a = (a + at) * 0.5;
        let alpha = a.trace() / dofs as f64;
        let shift = alpha / n as f64;
        for p in 0..n {
            for q in 0..n {
                for c in 0..3 {
                    a[(3 * p + c, 3 * q + c)] += shift;
                }
            }
        }
        let factor = Factor::new(a, eps)?;
        Ok(Self { grid, factor })
    }

    pub fn grid(&self) -> &GridLevel {
        &self.grid
    }

    /// Solve `A u = f` with `f` projected onto the translation complement;
    /// the returned `u` has zero mean.
    pub fn solve(&self, f: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let mut f = f.to_vec();
        crate::reduce::remove_translation(&mut f);
        let b = DVector::from_iterator(3 * f.len(), f.iter().flat_map(|x| x.iter().copied()));
        let x = self.factor.solve(&b);
        let mut u: Vec<[f64; 3]> = (0..f.len()).map(|p| [x[3 * p], x[3 * p + 1], x[3 * p + 2]]).collect();
        crate::reduce::remove_translation(&mut u);
        u
    }
}
