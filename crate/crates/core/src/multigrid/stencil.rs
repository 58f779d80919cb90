//! Assembled 27-point block stencils of the coarse levels.

use rayon::prelude::*;

use super::transfer::transfer_weight;
use super::{inv3, LevelOperator};
use crate::fem::{Block3, ElementStiffness, FineOperator};
use crate::grid::{local_vertex, neighbor_slot, slot_offset, GridLevel, VertexCoord};
use crate::precision::Storage;
use crate::{Error, Result};

const ROW: usize = 27 * 9;

/// Per vertex (color-major), 27 neighbor blocks `[K_v]_{v+o}` of 3×3 entries.
#[derive(Clone, Debug)]
pub struct StencilGrid<S: Storage> {
    grid: GridLevel,
    blocks: Vec<S>,
    inv_diag: Vec<Block3>,
}

impl<S: Storage> StencilGrid<S> {
    fn from_rows(grid: GridLevel, rows: Vec<[Block3; 27]>) -> Result<Self> {
        let mut blocks = Vec::with_capacity(rows.len() * ROW);
        for row in &rows {
            for b in row {
                blocks.extend(b.iter().map(|&x| S::from_f64(x)));
            }
        }
        let mut sg = Self {
            grid,
            blocks,
            inv_diag: Vec::new(),
        };
        sg.inv_diag = (0..rows.len())
            .map(|p| {
                let d = sg.block(p, 13);
                inv3(&d).ok_or(Error::SingularDiagonal {
                    level: sg.grid.level(),
                    vertex: sg.grid.vertex_at(p).0,
                })
            })
            .collect::<Result<_>>()?;
        Ok(sg)
    }

    /// Galerkin operator `R K I` of the matrix-free finest level.
    pub fn galerkin_from_fine(fine: &FineOperator<S>, element: &ElementStiffness, coarse: &GridLevel) -> Result<Self> {
        let fgrid = fine.grid();
        let k0 = element.matrix();
        let coeff = fine.coefficients();
        // P_s = W_sᵀ K0 W_s for the eight fine sub-elements of a coarse element
        let mut sub = vec![[[0.0f64; 24]; 24]; 8];
        for s in 0..8 {
            let so = local_vertex(s);
            let mut w = [[0.0f64; 8]; 8];
            for i in 0..8 {
                let li = local_vertex(i);
                for a in 0..8 {
                    let la = local_vertex(a);
                    let o = [0, 1, 2].map(|k| (so[k] + li[k]) as i32 - 2 * la[k] as i32);
                    w[i][a] = transfer_weight(o);
                }
            }
            let p = &mut sub[s];
            for i in 0..8 {
                for j in 0..8 {
                    for a in 0..8 {
                        let wia = w[i][a];
                        if wia == 0.0 {
                            continue;
                        }
                        for b in 0..8 {
                            let wjb = w[j][b];
                            if wjb == 0.0 {
                                continue;
                            }
                            for al in 0..3 {
                                for be in 0..3 {
                                    p[3 * a + al][3 * b + be] += wia * wjb * k0[3 * i + al][3 * j + be];
                                }
                            }
                        }
                    }
                }
            }
        }
        let slots: [[usize; 8]; 8] = std::array::from_fn(|d| {
            let od = local_vertex(d);
            std::array::from_fn(|j| {
                let lj = local_vertex(j);
                neighbor_slot([0, 1, 2].map(|k| lj[k] as i32 + od[k] as i32 - 1))
            })
        });
        let rows: Vec<[Block3; 27]> = (0..coarse.vertex_count())
            .into_par_iter()
            .map(|p| {
                let v = coarse.vertex_at(p);
                let el = coarse.incident_elements(v);
                let mut row = [[0.0; 9]; 27];
                for d in 0..8 {
                    let e = coarse.element_at(el[d]).0;
                    let c: [f64; 8] = std::array::from_fn(|s| {
                        let so = local_vertex(s);
                        let fe = crate::grid::ElemCoord([0, 1, 2].map(|k| 2 * e[k] + so[k]));
                        coeff[fgrid.element_index(fe)].to_f64()
                    });
                    let r = 7 - d;
                    for j in 0..8 {
                        let blk = &mut row[slots[d][j]];
                        for al in 0..3 {
                            for be in 0..3 {
                                let mut acc = 0.0;
                                for s in 0..8 {
                                    acc += c[s] * sub[s][3 * r + al][3 * j + be];
                                }
                                blk[3 * al + be] += acc;
                            }
                        }
                    }
                }
                row
            })
            .collect();
        Self::from_rows(coarse.clone(), rows)
    }

    /// Galerkin operator `R K I` of a finer assembled level.
    pub fn galerkin_from_stencil(fine: &StencilGrid<S>, coarse: &GridLevel) -> Result<Self> {
        let fgrid = &fine.grid;
        let weights: [f64; 27] = std::array::from_fn(|s| transfer_weight(slot_offset(s)));
        let rows: Vec<[Block3; 27]> = (0..coarse.vertex_count())
            .into_par_iter()
            .map(|p| {
                let v = coarse.vertex_at(p);
                let center = VertexCoord(v.0.map(|x| 2 * x));
                let locs = fgrid.neighbor_locations(center);
                // accumulate weighted fine rows by fine offset t ∈ [-2, 2]^3
                let mut t = [[0.0f64; 9]; 125];
                for a in 0..27 {
                    let oa = slot_offset(a);
                    let w = weights[a];
                    let frow = fine.row(locs[a]);
                    for q in 0..27 {
                        let oq = slot_offset(q);
                        let ti = (oa[0] + oq[0] + 2) + 5 * (oa[1] + oq[1] + 2) + 25 * (oa[2] + oq[2] + 2);
                        let dst = &mut t[ti as usize];
                        let src = &frow[9 * q..9 * q + 9];
                        for m in 0..9 {
                            dst[m] += w * src[m].to_f64();
                        }
                    }
                }
                let mut row = [[0.0; 9]; 27];
                for ti in 0..125 {
                    let off = [ti % 5, (ti / 5) % 5, ti / 25].map(|x| x as i32 - 2);
                    let mut par = [[(0i32, 0.0f64); 2]; 3];
                    let mut np = [0usize; 3];
                    for k in 0..3 {
                        if off[k] % 2 == 0 {
                            par[k][0] = (off[k] / 2, 1.0);
                            np[k] = 1;
                        } else {
                            par[k] = [((off[k] - 1) / 2, 0.5), ((off[k] + 1) / 2, 0.5)];
                            np[k] = 2;
                        }
                    }
                    for c in 0..np[2] {
                        for b in 0..np[1] {
                            for a in 0..np[0] {
                                let w = par[0][a].1 * par[1][b].1 * par[2][c].1;
                                let s = neighbor_slot([par[0][a].0, par[1][b].0, par[2][c].0]);
                                for m in 0..9 {
                                    row[s][m] += w * t[ti][m];
                                }
                            }
                        }
                    }
                }
                row
            })
            .collect();
        Self::from_rows(coarse.clone(), rows)
    }

    #[inline(always)]
    fn row(&self, p: usize) -> &[S] {
        &self.blocks[ROW * p..ROW * (p + 1)]
    }

    /// Block for neighbor slot `s` of the vertex at layout position `p`.
    pub fn block(&self, p: usize, s: usize) -> Block3 {
        let r = &self.row(p)[9 * s..9 * s + 9];
        std::array::from_fn(|m| r[m].to_f64())
    }

    pub fn inverse_diagonals(&self) -> &[Block3] {
        &self.inv_diag
    }
}

impl<S: Storage> LevelOperator for StencilGrid<S> {
    fn grid(&self) -> &GridLevel {
        &self.grid
    }

    #[inline]
    fn apply_at(&self, v: VertexCoord, u: &[[f64; 3]]) -> [f64; 3] {
        let p = self.grid.color_block_location(v);
        let locs = self.grid.neighbor_locations(v);
        let row = self.row(p);
        let mut out = [0.0; 3];
        for s in 0..27 {
            let x = u[locs[s]];
            let b = &row[9 * s..9 * s + 9];
            out[0] += b[0].to_f64() * x[0] + b[1].to_f64() * x[1] + b[2].to_f64() * x[2];
            out[1] += b[3].to_f64() * x[0] + b[4].to_f64() * x[1] + b[5].to_f64() * x[2];
            out[2] += b[6].to_f64() * x[0] + b[7].to_f64() * x[1] + b[8].to_f64() * x[2];
        }
        out
    }

    fn stencil_row(&self, v: VertexCoord) -> [Block3; 27] {
        let p = self.grid.color_block_location(v);
        std::array::from_fn(|s| self.block(p, s))
    }
}
