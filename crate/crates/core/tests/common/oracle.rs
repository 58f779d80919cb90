//! Independent reference implementations used by the tests.
//!
//! Everything here is self-contained: the element matrix comes from exact
//! one-dimensional integrals, vertices are numbered lexicographically, and
//! systems are assembled explicitly and solved with a dense Cholesky
//! factorization after pinning vertex 0.

#![allow(dead_code)]

use std::collections::BTreeMap;

/// Lexicographic vertex / element index (x fastest).
pub fn lex(res: [usize; 3], x: [usize; 3]) -> usize {
    x[0] + res[0] * (x[1] + res[1] * x[2])
}

pub fn lex_coord(res: [usize; 3], i: usize) -> [usize; 3] {
    [i % res[0], (i / res[0]) % res[1], i / (res[0] * res[1])]
}

fn bits(j: usize) -> [usize; 3] {
    [j & 1, (j >> 1) & 1, (j >> 2) & 1]
}

/// `∫ D_a(N_i) D_b(N_j)` over [0,1] for 1D hat functions, `D` = derivative when set.
fn int1(i: usize, di: bool, j: usize, dj: bool) -> f64 {
    let s = |k: usize| if k == 1 { 1.0 } else { -1.0 };
    match (di, dj) {
        (true, true) => s(i) * s(j),
        (true, false) => s(i) * 0.5,
        (false, true) => s(j) * 0.5,
        (false, false) => {
            if i == j {
                1.0 / 3.0
            } else {
                1.0 / 6.0
            }
        }
    }
}

/// `∫ ∂_m Φ_i ∂_n Φ_j` over the unit cube.
fn grad_int(i: usize, m: usize, j: usize, n: usize) -> f64 {
    let (bi, bj) = (bits(i), bits(j));
    (0..3).map(|k| int1(bi[k], k == m, bj[k], k == n)).product()
}

/// Unit-cube trilinear element stiffness from the bilinear form
/// `λ div u div v + 2 μ ε(u):ε(v)`, integrated exactly.
pub fn element_matrix(young: f64, poisson: f64) -> Vec<Vec<f64>> {
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = young / (2.0 * (1.0 + poisson));
    let mut k = vec![vec![0.0; 24]; 24];
    for i in 0..8 {
        for a in 0..3 {
            for j in 0..8 {
                for b in 0..3 {
                    let mut v = lambda * grad_int(i, a, j, b) + mu * grad_int(i, b, j, a);
                    if a == b {
                        v += mu * (0..3).map(|m| grad_int(i, m, j, m)).sum::<f64>();
                    }
                    k[3 * i + a][3 * j + b] = v;
                }
            }
        }
    }
    k
}

/// Element-relative displacement of unit macro strain `i` (engineering order).
pub fn chi(i: usize) -> [f64; 24] {
    let mut out = [0.0; 24];
    for j in 0..8 {
        let x = bits(j).map(|b| b as f64);
        let d = match i {
            0 => [x[0], 0.0, 0.0],
            1 => [0.0, x[1], 0.0],
            2 => [0.0, 0.0, x[2]],
            3 => [x[1] / 2.0, x[0] / 2.0, 0.0],
            4 => [0.0, x[2] / 2.0, x[1] / 2.0],
            _ => [x[2] / 2.0, 0.0, x[0] / 2.0],
        };
        out[3 * j..3 * j + 3].copy_from_slice(&d);
    }
    out
}

/// Global dof indices of an element's 24 local dofs.
pub fn element_dofs(res: [usize; 3], e: usize) -> [usize; 24] {
    let o = lex_coord(res, e);
    let mut out = [0; 24];
    for j in 0..8 {
        let b = bits(j);
        let v = lex(res, [0, 1, 2].map(|k| (o[k] + b[k]) % res[k]));
        for c in 0..3 {
            out[3 * j + c] = 3 * v + c;
        }
    }
    out
}

/// Sparse matrix as sorted rows.
#[derive(Clone, Debug)]
pub struct Sparse {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<BTreeMap<usize, f64>>,
}

impl Sparse {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![BTreeMap::new(); rows],
        }
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        *self.data[r].entry(c).or_insert(0.0) += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r].get(&c).copied().unwrap_or(0.0)
    }

    pub fn mul(&self, other: &Sparse) -> Sparse {
        assert_eq!(self.cols, other.rows);
        let mut out = Sparse::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for (&k, &a) in &self.data[r] {
                for (&c, &b) in &other.data[k] {
                    *out.data[r].entry(c).or_insert(0.0) += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Sparse {
        let mut out = Sparse::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for (&c, &v) in &self.data[r] {
                out.add(c, r, v);
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .iter()
            .map(|row| row.iter().map(|(&c, &v)| v * x[c]).sum())
            .collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().flat_map(|r| r.values()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn frobenius_diff(&self, other: &Sparse) -> f64 {
        let mut s = 0.0;
        for r in 0..self.rows {
            let mut keys: Vec<usize> = self.data[r].keys().copied().collect();
            keys.extend(other.data[r].keys().copied());
            keys.sort();
            keys.dedup();
            for c in keys {
                let d = self.get(r, c) - other.get(r, c);
                s += d * d;
            }
        }
        s.sqrt()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for r in 0..self.rows {
            for (&c, &v) in &self.data[r] {
                d[r][c] = v;
            }
        }
        d
    }
}

/// `K = Σ_e c_e Aᵀ K0 A` on a periodic grid, lexicographic dofs.
pub fn assemble(res: [usize; 3], coeff: &[f64], k0: &[Vec<f64>]) -> Sparse {
    let n = 3 * res.iter().product::<usize>();
    let mut k = Sparse::zeros(n, n);
    for (e, &c) in coeff.iter().enumerate() {
        let dofs = element_dofs(res, e);
        for r in 0..24 {
            for s in 0..24 {
                k.add(dofs[r], dofs[s], c * k0[r][s]);
            }
        }
    }
    k
}

/// Load of unit macro strain `i`: `Σ_e c_e Aᵀ K0 χ^i`.
pub fn macro_load(res: [usize; 3], coeff: &[f64], k0: &[Vec<f64>], i: usize) -> Vec<f64> {
    let n = 3 * res.iter().product::<usize>();
    let x = chi(i);
    let mut f = vec![0.0; n];
    for (e, &c) in coeff.iter().enumerate() {
        let dofs = element_dofs(res, e);
        for r in 0..24 {
            f[dofs[r]] += c * (0..24).map(|s| k0[r][s] * x[s]).sum::<f64>();
        }
    }
    f
}

/// In-place dense Cholesky `A = L Lᵀ` (lower triangle).
pub fn cholesky(a: &mut [Vec<f64>]) {
    let n = a.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        assert!(d > 0.0, "matrix not positive definite at {j}");
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
}

pub fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i][k] * y[k];
        }
        y[i] /= l[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k][i] * y[k];
        }
        y[i] /= l[i][i];
    }
    y
}

/// Subtract the per-component mean of an interleaved nodal vector.
pub fn remove_mean(u: &mut [f64]) {
    let nv = u.len() / 3;
    for c in 0..3 {
        let m: f64 = (0..nv).map(|v| u[3 * v + c]).sum::<f64>() / nv as f64;
        for v in 0..nv {
            u[3 * v + c] -= m;
        }
    }
}

/// Factorization of `K` with vertex 0 pinned.
pub struct PinnedSolver {
    l: Vec<Vec<f64>>,
}

impl PinnedSolver {
    pub fn new(k: &Sparse) -> Self {
        let n = k.rows - 3;
        let mut a = vec![vec![0.0; n]; n];
        for r in 3..k.rows {
            for (&c, &v) in &k.data[r] {
                if c >= 3 {
                    a[r - 3][c - 3] = v;
                }
            }
        }
        cholesky(&mut a);
        Self { l: a }
    }

    /// Solve for a balanced load; the result has zero mean.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        let mut fb = f.to_vec();
        remove_mean(&mut fb);
        let x = cholesky_solve(&self.l, &fb[3..]);
        let mut u = vec![0.0; 3];
        u.extend(x);
        remove_mean(&mut u);
        u
    }
}

/// Homogenized tensor by explicit assembly and direct solves.
pub fn homogenize(res: [usize; 3], coeff: &[f64], k0: &[Vec<f64>]) -> ([[f64; 6]; 6], Vec<Vec<f64>>) {
    let k = assemble(res, coeff, k0);
    let solver = PinnedSolver::new(&k);
    let us: Vec<Vec<f64>> = (0..6).map(|i| solver.solve(&macro_load(res, coeff, k0, i))).collect();
    (tensor_from(res, coeff, k0, &us), us)
}

/// `C_ij = (1/M) Σ_e c_e (χ^i - u^i_e)ᵀ K0 (χ^j - u^j_e)`.
pub fn tensor_from(res: [usize; 3], coeff: &[f64], k0: &[Vec<f64>], us: &[Vec<f64>]) -> [[f64; 6]; 6] {
    let mut c = [[0.0; 6]; 6];
    for (e, &ce) in coeff.iter().enumerate() {
        let dofs = element_dofs(res, e);
        let d: Vec<[f64; 24]> = (0..6)
            .map(|i| {
                let x = chi(i);
                std::array::from_fn(|r| x[r] - us[i][dofs[r]])
            })
            .collect();
        for i in 0..6 {
            for j in 0..6 {
                let mut s = 0.0;
                for r in 0..24 {
                    for t in 0..24 {
                        s += d[i][r] * k0[r][t] * d[j][t];
                    }
                }
                c[i][j] += ce * s;
            }
        }
    }
    let m = coeff.len() as f64;
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= m;
        }
    }
    c
}

/// Trilinear prolongation from the half-resolution grid, scalar (per component).
pub fn prolongation_scalar(fine: [usize; 3]) -> Sparse {
    let coarse = fine.map(|n| n / 2);
    let nf = fine.iter().product::<usize>();
    let nc = coarse.iter().product::<usize>();
    let mut p = Sparse::zeros(nf, nc);
    for i in 0..nf {
        let x = lex_coord(fine, i);
        // each axis: list of (coarse index, weight)
        let axes: Vec<Vec<(usize, f64)>> = (0..3)
            .map(|k| {
                if x[k] % 2 == 0 {
                    vec![(x[k] / 2, 1.0)]
                } else {
                    vec![(x[k] / 2, 0.5), ((x[k] / 2 + 1) % coarse[k], 0.5)]
                }
            })
            .collect();
        for &(a, wa) in &axes[0] {
            for &(b, wb) in &axes[1] {
                for &(c, wc) in &axes[2] {
                    p.add(i, lex(coarse, [a, b, c]), wa * wb * wc);
                }
            }
        }
    }
    p
}

/// Prolongation acting on interleaved 3-component vectors.
pub fn prolongation(fine: [usize; 3]) -> Sparse {
    let s = prolongation_scalar(fine);
    let mut p = Sparse::zeros(3 * s.rows, 3 * s.cols);
    for r in 0..s.rows {
        for (&c, &v) in &s.data[r] {
            for k in 0..3 {
                p.add(3 * r + k, 3 * c + k, v);
            }
        }
    }
    p
}

/// `Iᵀ K I`.
pub fn galerkin(k: &Sparse, fine: [usize; 3]) -> Sparse {
    let p = prolongation(fine);
    p.transpose().mul(&k.mul(&p))
}

/// Symmetric 6×6 smallest eigenvalue via Jacobi rotations.
pub fn min_eigenvalue(c: &[[f64; 6]; 6]) -> f64 {
    let mut a = *c;
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    off += a[i][j] * a[i][j];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..6 {
            for q in p + 1..6 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..6 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = cs * akp - sn * akq;
                    a[k][q] = sn * akp + cs * akq;
                }
                for k in 0..6 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = cs * apk - sn * aqk;
                    a[q][k] = sn * apk + cs * aqk;
                }
            }
        }
    }
    (0..6).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
}
