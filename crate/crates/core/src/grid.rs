//! Periodic regular-grid topology.
//!
//! A level with `N_i` elements per axis also has `N_i` vertices per axis:
//! vertex `N_i` is identified with vertex `0`. Nodal vectors are stored in a
//! color-major layout: the vertices of each of the eight parity classes form
//! a contiguous block, so a colored Gauss–Seidel sweep touches one block at a
//! time. Element data is stored x-fastest lexicographically.

use crate::{Error, Result};

/// Integer vertex coordinate, canonical (`0 <= x_k < N_k`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VertexCoord(pub [usize; 3]);

/// Integer element coordinate, canonical. Element `e` spans vertices `e + {0,1}^3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ElemCoord(pub [usize; 3]);

/// Parity class of a vertex, `(x0 mod 2) + 2 (x1 mod 2) + 4 (x2 mod 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColorId(pub u8);

impl ColorId {
    /// Origin of this color class in vertex coordinates.
    pub fn origin(self) -> [usize; 3] {
        let id = self.0 as usize;
        [id & 1, (id >> 1) & 1, id >> 2]
    }
}

pub fn color_of(v: VertexCoord) -> ColorId {
    let [x0, x1, x2] = v.0;
    ColorId(((x0 & 1) | ((x1 & 1) << 1) | ((x2 & 1) << 2)) as u8)
}

/// Offset `o` in `{-1,0,1}^3` to its slot in a 27-entry neighborhood (x fastest).
#[inline(always)]
pub fn neighbor_slot(o: [i32; 3]) -> usize {
    ((o[0] + 1) + 3 * (o[1] + 1) + 9 * (o[2] + 1)) as usize
}

/// Inverse of [`neighbor_slot`].
#[inline(always)]
pub fn slot_offset(slot: usize) -> [i32; 3] {
    [
        (slot % 3) as i32 - 1,
        ((slot / 3) % 3) as i32 - 1,
        (slot / 9) as i32 - 1,
    ]
}

/// Local vertex `j` of an element, as a `{0,1}^3` offset (x fastest).
#[inline(always)]
pub fn local_vertex(j: usize) -> [usize; 3] {
    [j & 1, (j >> 1) & 1, (j >> 2) & 1]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLevel {
    res: [usize; 3],
    level: usize,
    color_dims: [[usize; 3]; 8],
    color_base: [usize; 9],
}

impl GridLevel {
    pub fn new(res: [usize; 3], level: usize) -> Result<Self> {
        if res.iter().any(|&n| n < 4) {
            return Err(Error::Resolution {
                res,
                reason: "every axis needs at least 4 elements".into(),
            });
        }
        let mut color_dims = [[0; 3]; 8];
        let mut color_base = [0; 9];
        for id in 0..8 {
            let o = ColorId(id as u8).origin();
            for k in 0..3 {
                // vertices 0..N-1 with parity o: floor((N - 1 - o)/2) + 1
                color_dims[id][k] = (res[k] - 1 - o[k]) / 2 + 1;
            }
            color_base[id + 1] = color_base[id] + color_dims[id].iter().product::<usize>();
        }
        Ok(Self {
            res,
            level,
            color_dims,
            color_base,
        })
    }

    pub fn cubic(n: usize) -> Result<Self> {
        Self::new([n, n, n], 0)
    }

    pub fn res(&self) -> [usize; 3] {
        self.res
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Element edge length on the unit cube.
    pub fn element_size(&self) -> [f64; 3] {
        self.res.map(|n| 1.0 / n as f64)
    }

    pub fn vertex_count(&self) -> usize {
        self.res.iter().product()
    }

    pub fn element_count(&self) -> usize {
        self.vertex_count()
    }

    pub fn is_even(&self) -> bool {
        self.res.iter().all(|n| n % 2 == 0)
    }

    /// Next coarser level, if this one can be halved without dropping below 4.
    pub fn coarsen(&self) -> Option<GridLevel> {
        if self.is_even() && self.res.iter().all(|&n| n / 2 >= 4) {
            GridLevel::new(self.res.map(|n| n / 2), self.level + 1).ok()
        } else {
            None
        }
    }

    pub fn wrap_vertex(&self, c: [i64; 3]) -> VertexCoord {
        VertexCoord(self.wrap(c))
    }

    pub fn wrap_elem(&self, c: [i64; 3]) -> ElemCoord {
        ElemCoord(self.wrap(c))
    }

    fn wrap(&self, c: [i64; 3]) -> [usize; 3] {
        [0, 1, 2].map(|k| c[k].rem_euclid(self.res[k] as i64) as usize)
    }

    /// Wrap a single coordinate that is at most one period out of range.
    #[inline(always)]
    pub(crate) fn wrap_axis(&self, k: usize, x: isize) -> usize {
        let n = self.res[k] as isize;
        if x < 0 {
            (x + n) as usize
        } else if x >= n {
            (x - n) as usize
        } else {
            x as usize
        }
    }

    pub fn color_range(&self, c: ColorId) -> std::ops::Range<usize> {
        let id = c.0 as usize;
        self.color_base[id]..self.color_base[id + 1]
    }

    pub fn color_dims(&self, c: ColorId) -> [usize; 3] {
        self.color_dims[c.0 as usize]
    }

    /// Position of a vertex in the color-major layout.
    #[inline(always)]
    pub fn color_block_location(&self, v: VertexCoord) -> usize {
        let [x0, x1, x2] = v.0;
        let id = (x0 & 1) | ((x1 & 1) << 1) | ((x2 & 1) << 2);
        let d = &self.color_dims[id];
        self.color_base[id] + (x0 >> 1) + ((x1 >> 1) + (x2 >> 1) * d[1]) * d[0]
    }

    /// Inverse of [`color_block_location`](Self::color_block_location).
    pub fn vertex_at(&self, p: usize) -> VertexCoord {
        let id = (0..8)
            .find(|&id| p < self.color_base[id + 1])
            .expect("location out of range");
        let q = p - self.color_base[id];
        let d = &self.color_dims[id];
        let o = ColorId(id as u8).origin();
        let b = [q % d[0], (q / d[0]) % d[1], q / (d[0] * d[1])];
        VertexCoord([2 * b[0] + o[0], 2 * b[1] + o[1], 2 * b[2] + o[2]])
    }

    /// Vertex at offset `q` inside the block of color `c`.
    #[inline(always)]
    pub fn color_vertex(&self, c: ColorId, q: usize) -> VertexCoord {
        let d = &self.color_dims[c.0 as usize];
        let o = c.origin();
        VertexCoord([
            2 * (q % d[0]) + o[0],
            2 * ((q / d[0]) % d[1]) + o[1],
            2 * (q / (d[0] * d[1])) + o[2],
        ])
    }

    /// Layout positions of the 27 periodic neighbors of `v`, indexed by [`neighbor_slot`].
    #[inline]
    pub fn neighbor_locations(&self, v: VertexCoord) -> [usize; 27] {
        let mut axes = [[0usize; 3]; 3];
        for k in 0..3 {
            let x = v.0[k] as isize;
            axes[k] = [
                self.wrap_axis(k, x - 1),
                v.0[k],
                self.wrap_axis(k, x + 1),
            ];
        }
        let mut out = [0; 27];
        for c in 0..3 {
            for b in 0..3 {
                for a in 0..3 {
                    out[a + 3 * b + 9 * c] =
                        self.color_block_location(VertexCoord([axes[0][a], axes[1][b], axes[2][c]]));
                }
            }
        }
        out
    }

    /// Lexicographic (x fastest) element index.
    #[inline(always)]
    pub fn element_index(&self, e: ElemCoord) -> usize {
        let [x, y, z] = e.0;
        x + self.res[0] * (y + self.res[1] * z)
    }

    pub fn element_at(&self, idx: usize) -> ElemCoord {
        let [n0, n1, _] = self.res;
        ElemCoord([idx % n0, (idx / n0) % n1, idx / (n0 * n1)])
    }

    /// The 8 vertices of an element in local order (x fastest, then y, then z).
    pub fn element_vertices(&self, e: ElemCoord) -> [VertexCoord; 8] {
        std::array::from_fn(|j| {
            let d = local_vertex(j);
            VertexCoord([0, 1, 2].map(|k| (e.0[k] + d[k]) % self.res[k]))
        })
    }

    /// Layout positions of an element's 8 vertices, local order.
    #[inline]
    pub fn element_vertex_locations(&self, e: ElemCoord) -> [usize; 8] {
        self.element_vertices(e)
            .map(|v| self.color_block_location(v))
    }

    /// Indices of the 8 elements incident to `v`. Entry `d` (bits of `d` = offset
    /// `δ ∈ {0,1}^3`) is the element with origin `v - 1 + δ`; in that element
    /// `v` is local vertex `7 - d`.
    #[inline]
    pub fn incident_elements(&self, v: VertexCoord) -> [usize; 8] {
        let mut lo = [0usize; 3];
        for k in 0..3 {
            lo[k] = self.wrap_axis(k, v.0[k] as isize - 1);
        }
        std::array::from_fn(|d| {
            let o = local_vertex(d);
            let e = [0, 1, 2].map(|k| if o[k] == 0 { lo[k] } else { v.0[k] });
            self.element_index(ElemCoord(e))
        })
    }

    /// All levels from this one down to the coarsest (each ≥ 4 per axis).
    pub fn hierarchy(&self) -> Vec<GridLevel> {
        let mut out = vec![self.clone()];
        while let Some(next) = out.last().unwrap().coarsen() {
            out.push(next);
        }
        out
    }
}
