//! Geometric multigrid for the periodic elasticity system.
//!
//! Level 0 is applied matrix-free from element coefficients; every coarser
//! level holds Galerkin stencils `R K I`. Smoothing is eight-color block
//! Gauss–Seidel and the coarsest level is solved directly with the rigid
//! translations deflated.

mod coarsest;
mod stencil;
mod transfer;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use coarsest::{CoarseSolver, MAX_COARSE_VERTICES};
pub use stencil::StencilGrid;
pub use transfer::{prolong, prolong_add, restrict, transfer_weight};

use crate::fem::{Block3, ElementStiffness, FineOperator};
use crate::field::DensityField;
use crate::grid::{ColorId, GridLevel, VertexCoord};
use crate::precision::Storage;
use crate::reduce::{norm3, remove_translation};
use crate::{Error, Result};

/// One level of the operator hierarchy.
pub trait LevelOperator: Sync {
    fn grid(&self) -> &GridLevel;
    /// `[K u]_v`.
    fn apply_at(&self, v: VertexCoord, u: &[[f64; 3]]) -> [f64; 3];
    /// The 27 neighbor blocks of row `v`.
    fn stencil_row(&self, v: VertexCoord) -> [Block3; 27];
}

impl<S: Storage> LevelOperator for FineOperator<S> {
    fn grid(&self) -> &GridLevel {
        FineOperator::grid(self)
    }

    #[inline]
    fn apply_at(&self, v: VertexCoord, u: &[[f64; 3]]) -> [f64; 3] {
        FineOperator::apply_at(self, v, u)
    }

    fn stencil_row(&self, v: VertexCoord) -> [Block3; 27] {
        FineOperator::stencil_row(self, v)
    }
}

/// Inverse of a 3×3 block (row-major), `None` when numerically singular.
pub fn inv3(m: &Block3) -> Option<Block3> {
    let c00 = m[4] * m[8] - m[5] * m[7];
    let c01 = m[5] * m[6] - m[3] * m[8];
    let c02 = m[3] * m[7] - m[4] * m[6];
    let det = m[0] * c00 + m[1] * c01 + m[2] * c02;
    let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !det.is_finite() || scale == 0.0 || det.abs() <= 1e-13 * scale * scale * scale {
        return None;
    }
    let inv = 1.0 / det;
    Some([
        c00 * inv,
        (m[2] * m[7] - m[1] * m[8]) * inv,
        (m[1] * m[5] - m[2] * m[4]) * inv,
        c01 * inv,
        (m[0] * m[8] - m[2] * m[6]) * inv,
        (m[2] * m[3] - m[0] * m[5]) * inv,
        c02 * inv,
        (m[1] * m[6] - m[0] * m[7]) * inv,
        (m[0] * m[4] - m[1] * m[3]) * inv,
    ])
}

#[inline(always)]
fn mul3(m: &Block3, x: [f64; 3]) -> [f64; 3] {
    [
        m[0] * x[0] + m[1] * x[1] + m[2] * x[2],
        m[3] * x[0] + m[4] * x[1] + m[5] * x[2],
        m[6] * x[0] + m[7] * x[1] + m[8] * x[2],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Target relative residual `‖f - K u‖ / ‖f‖`.
    pub tol: f64,
    pub max_cycles: usize,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-2,
            max_cycles: 50,
            pre_sweeps: 1,
            post_sweeps: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub cycles: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Inverse diagonal blocks of an operator, checking invertibility.
pub fn inverse_diagonals<O: LevelOperator + ?Sized>(op: &O) -> Result<Vec<Block3>> {
    let g = op.grid();
    (0..g.vertex_count())
        .into_par_iter()
        .map(|p| {
            let v = g.vertex_at(p);
            inv3(&op.stencil_row(v)[13]).ok_or(Error::SingularDiagonal {
                level: g.level(),
                vertex: v.0,
            })
        })
        .collect()
}

/// `sweeps` eight-color block Gauss–Seidel sweeps; colors in order 0..7.
pub fn gauss_seidel_relax<O: LevelOperator + ?Sized>(
    op: &O,
    inv_diag: &[Block3],
    u: &mut [[f64; 3]],
    f: &[[f64; 3]],
    sweeps: usize,
) {
    let mut buf = Vec::new();
    relax_with(op, inv_diag, u, f, sweeps, &mut buf);
}

fn relax_with<O: LevelOperator + ?Sized>(
    op: &O,
    inv_diag: &[Block3],
    u: &mut [[f64; 3]],
    f: &[[f64; 3]],
    sweeps: usize,
    buf: &mut Vec<[f64; 3]>,
) {
    let g = op.grid();
    for _ in 0..sweeps {
        for c in 0..8u8 {
            let color = ColorId(c);
            let range = g.color_range(color);
            buf.resize(range.len(), [0.0; 3]);
            let cur: &[[f64; 3]] = u;
            buf.par_iter_mut().enumerate().for_each(|(q, out)| {
                let p = range.start + q;
                let v = g.color_vertex(color, q);
                let ku = op.apply_at(v, cur);
                let r = [f[p][0] - ku[0], f[p][1] - ku[1], f[p][2] - ku[2]];
                let d = mul3(&inv_diag[p], r);
                *out = [cur[p][0] + d[0], cur[p][1] + d[1], cur[p][2] + d[2]];
            });
            u[range].copy_from_slice(buf);
        }
    }
}

/// `r = f - K u`.
pub fn residual<O: LevelOperator + ?Sized>(op: &O, u: &[[f64; 3]], f: &[[f64; 3]], r: &mut [[f64; 3]]) {
    let g = op.grid();
    r.par_iter_mut().enumerate().for_each(|(p, out)| {
        let ku = op.apply_at(g.vertex_at(p), u);
        *out = [f[p][0] - ku[0], f[p][1] - ku[1], f[p][2] - ku[2]];
    });
}

/// Operator, transfers and work vectors of every level.
pub struct Hierarchy<S: Storage> {
    fine: FineOperator<S>,
    fine_inv: Vec<Block3>,
    /// `coarse[k]` is level `k + 1`.
    coarse: Vec<StencilGrid<S>>,
    solver: CoarseSolver,
    cfg: SolverConfig,
    r0: Vec<[f64; 3]>,
    us: Vec<Vec<[f64; 3]>>,
    fs: Vec<Vec<[f64; 3]>>,
    rs: Vec<Vec<[f64; 3]>>,
    buf: Vec<[f64; 3]>,
}

impl<S: Storage> Hierarchy<S> {
    /// Build all levels for element coefficients `ρ^p`.
    pub fn build(
        grid: &GridLevel,
        rho: &DensityField,
        penal: f64,
        element: &ElementStiffness,
        cfg: SolverConfig,
    ) -> Result<Self> {
        let fine = FineOperator::<S>::new(grid, rho, penal, element)?;
        let fine_inv = inverse_diagonals(&fine)?;
        let levels = grid.hierarchy();
        let mut coarse: Vec<StencilGrid<S>> = Vec::with_capacity(levels.len().saturating_sub(1));
        for l in levels.iter().skip(1) {
            let next = match coarse.last() {
                None => StencilGrid::galerkin_from_fine(&fine, element, l)?,
                Some(prev) => StencilGrid::galerkin_from_stencil(prev, l)?,
            };
            coarse.push(next);
        }
        let solver = match coarse.last() {
            None => CoarseSolver::new(&fine, S::EPSILON)?,
            Some(c) => CoarseSolver::new(c, S::EPSILON)?,
        };
        let zeros = |g: &GridLevel| vec![[0.0; 3]; g.vertex_count()];
        Ok(Self {
            r0: zeros(grid),
            us: levels[1..].iter().map(zeros).collect(),
            fs: levels[1..].iter().map(zeros).collect(),
            rs: levels[1..].iter().map(zeros).collect(),
            buf: Vec::new(),
            fine,
            fine_inv,
            coarse,
            solver,
            cfg,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn set_config(&mut self, cfg: SolverConfig) {
        self.cfg = cfg;
    }

    pub fn fine(&self) -> &FineOperator<S> {
        &self.fine
    }

    pub fn coarse_levels(&self) -> &[StencilGrid<S>] {
        &self.coarse
    }

    pub fn level_count(&self) -> usize {
        self.coarse.len() + 1
    }

    pub fn coarse_solver(&self) -> &CoarseSolver {
        &self.solver
    }

    /// One V-cycle on `K u = f`; returns the level-0 relative residual.
    pub fn v_cycle(&mut self, u: &mut [[f64; 3]], f: &[[f64; 3]]) -> Result<f64> {
        let nf = norm3(f);
        let cfg = self.cfg;
        let depth = self.coarse.len();
        if depth == 0 {
            let x = self.solver.solve(f);
            u.copy_from_slice(&x);
        } else {
            relax_with(&self.fine, &self.fine_inv, u, f, cfg.pre_sweeps, &mut self.buf);
            residual(&self.fine, u, f, &mut self.r0);
            transfer::restrict_into(self.fine.grid(), self.coarse[0].grid(), &self.r0, &mut self.fs[0]);
            for k in 0..depth - 1 {
                let op = &self.coarse[k];
                let uk = &mut self.us[k];
                uk.iter_mut().for_each(|x| *x = [0.0; 3]);
                relax_with(op, op.inverse_diagonals(), uk, &self.fs[k], cfg.pre_sweeps, &mut self.buf);
                residual(op, uk, &self.fs[k], &mut self.rs[k]);
                transfer::restrict_into(op.grid(), self.coarse[k + 1].grid(), &self.rs[k], &mut self.fs[k + 1]);
            }
            let x = self.solver.solve(&self.fs[depth - 1]);
            self.us[depth - 1].copy_from_slice(&x);
            for k in (0..depth - 1).rev() {
                let (lo, hi) = self.us.split_at_mut(k + 1);
                prolong_add(self.coarse[k + 1].grid(), self.coarse[k].grid(), &hi[0], &mut lo[k]);
                let op = &self.coarse[k];
                relax_with(op, op.inverse_diagonals(), &mut lo[k], &self.fs[k], cfg.post_sweeps, &mut self.buf);
            }
            prolong_add(self.coarse[0].grid(), self.fine.grid(), &self.us[0], u);
            relax_with(&self.fine, &self.fine_inv, u, f, cfg.post_sweeps, &mut self.buf);
        }
        residual(&self.fine, u, f, &mut self.r0);
        Ok(if nf > 0.0 { norm3(&self.r0) / nf } else { norm3(&self.r0) })
    }

    /// V-cycles from the warm start `u` until the relative residual reaches the
    /// tolerance or the cycle cap. `f` is projected onto the translation
    /// complement first and `u` is returned translation-free.
    pub fn solve(&mut self, f: &[[f64; 3]], u: &mut [[f64; 3]]) -> Result<SolveStats> {
        self.solve_with_floor(f, u, 0.0)
    }

    /// As [`Hierarchy::solve`], but a projected load with norm at most
    /// `floor` counts as zero and yields `u = 0`.
    pub fn solve_with_floor(&mut self, f: &[[f64; 3]], u: &mut [[f64; 3]], floor: f64) -> Result<SolveStats> {
        let mut f = f.to_vec();
        remove_translation(&mut f);
        let nf = norm3(&f);
        if nf <= floor {
            u.iter_mut().for_each(|x| *x = [0.0; 3]);
            return Ok(SolveStats {
                cycles: 0,
                residual: 0.0,
                converged: true,
            });
        }
        residual(&self.fine, u, &f, &mut self.r0);
        let mut res = norm3(&self.r0) / nf;
        let mut cycles = 0;
        while res.is_finite() && res > self.cfg.tol && cycles < self.cfg.max_cycles {
            res = self.v_cycle(u, &f)?;
            cycles += 1;
        }
        remove_translation(u);
        Ok(SolveStats {
            cycles,
            residual: res,
            converged: res <= self.cfg.tol,
        })
    }
}

/// Build the hierarchy for a density field and penalization.
pub fn build_hierarchy<S: Storage>(
    grid: &GridLevel,
    rho: &DensityField,
    penal: f64,
    element: &ElementStiffness,
    cfg: SolverConfig,
) -> Result<Hierarchy<S>> {
    Hierarchy::build(grid, rho, penal, element, cfg)
}
