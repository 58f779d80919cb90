//! Trilinear 8-node hexahedral element and the matrix-free finest-level operator.
//!
//! Local vertex order is x-fastest (`j = x + 2y + 4z`); degree of freedom
//! `3j + c` is component `c` of local vertex `j`. Macro strains use the
//! engineering order 11, 22, 33, 12, 23, 13.

use rayon::prelude::*;

use crate::field::DensityField;
use crate::grid::{local_vertex, neighbor_slot, GridLevel, VertexCoord};
use crate::precision::Storage;
use crate::{Error, Result};

pub type Mat24 = [[f64; 24]; 24];
pub type Block3 = [f64; 9];

/// Isotropic base material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseMaterial {
    pub young: f64,
    pub poisson: f64,
}

impl BaseMaterial {
    pub fn new(young: f64, poisson: f64) -> Result<Self> {
        if !(young > 0.0) || !young.is_finite() {
            return Err(Error::Material(format!("Young's modulus must be positive, got {young}")));
        }
        if !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::Material(format!(
                "Poisson's ratio must lie in (-1, 0.5), got {poisson}"
            )));
        }
        Ok(Self { young, poisson })
    }

    pub fn lame_lambda(&self) -> f64 {
        let (e, nu) = (self.young, self.poisson);
        e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    }

    pub fn lame_mu(&self) -> f64 {
        self.young / (2.0 * (1.0 + self.poisson))
    }

    pub fn bulk_modulus(&self) -> f64 {
        self.young / (3.0 * (1.0 - 2.0 * self.poisson))
    }

    /// 6×6 isotropic stiffness in engineering notation.
    pub fn tensor(&self) -> [[f64; 6]; 6] {
        isotropic_tensor(self.lame_lambda(), self.lame_mu())
    }
}

fn isotropic_tensor(lambda: f64, mu: f64) -> [[f64; 6]; 6] {
    let mut c = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = lambda;
        }
        c[i][i] = lambda + 2.0 * mu;
        c[i + 3][i + 3] = mu;
    }
    c
}

/// Index into the 6-component engineering strain (11,22,33,12,23,13).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MacroStrainId(u8);

impl MacroStrainId {
    pub const ALL: [MacroStrainId; 6] = [
        MacroStrainId(0),
        MacroStrainId(1),
        MacroStrainId(2),
        MacroStrainId(3),
        MacroStrainId(4),
        MacroStrainId(5),
    ];

    pub fn new(i: usize) -> Option<Self> {
        (i < 6).then_some(Self(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Tensor index pair `(k, l)` (zero-based) of this engineering component.
    pub fn pair(self) -> (usize, usize) {
        [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2)][self.index()]
    }
}

/// Displacement of a vertex under unit macro strain `i`; `x` is the vertex
/// position relative to its element's origin, never the global position.
pub fn macro_strain_displacement(i: MacroStrainId, x: [f64; 3]) -> [f64; 3] {
    match i.0 {
        0 => [x[0], 0.0, 0.0],
        1 => [0.0, x[1], 0.0],
        2 => [0.0, 0.0, x[2]],
        3 => [x[1] / 2.0, x[0] / 2.0, 0.0],
        4 => [0.0, x[2] / 2.0, x[1] / 2.0],
        _ => [x[2] / 2.0, 0.0, x[0] / 2.0],
    }
}

/// Element-local macro-strain displacement vector (24 entries).
pub fn element_macro_displacement(i: MacroStrainId) -> [f64; 24] {
    let mut chi = [0.0; 24];
    for j in 0..8 {
        let x = local_vertex(j).map(|c| c as f64);
        let d = macro_strain_displacement(i, x);
        chi[3 * j..3 * j + 3].copy_from_slice(&d);
    }
    chi
}

/// The five scaled base values every `K0` entry is an integer multiple of,
/// as `(λ, μ)` coefficient pairs.
const FIVE: [(i32, i32); 5] = [(1, 1), (-1, 1), (1, 4), (1, -2), (2, 5)];

/// The fourteen `(λ, μ)` coefficient pairs entries of `K0` take.
pub const FOURTEEN: [(i32, i32); 14] = [
    (-8, -8),
    (-6, -6),
    (-6, 6),
    (-4, -10),
    (-3, -3),
    (-3, 3),
    (-2, -8),
    (2, -4),
    (3, -3),
    (3, 3),
    (4, 4),
    (6, -6),
    (6, 6),
    (8, 32),
];

/// Unit-element stiffness `K0` of the base material.
#[derive(Clone, Debug)]
pub struct ElementStiffness {
    material: BaseMaterial,
    k0: Box<Mat24>,
    /// Entry `(a, b)` means `K0[r][c] = a λ + b μ` with the scaled Lamé constants.
    pattern: Box<[[(i32, i32); 24]; 24]>,
}

impl ElementStiffness {
    pub fn new(material: BaseMaterial) -> Result<Self> {
        let material = BaseMaterial::new(material.young, material.poisson)?;
        let k0 = Box::new(quadrature_stiffness(&material.tensor()));
        let k_lambda = quadrature_stiffness(&isotropic_tensor(1.0, 0.0));
        let k_mu = quadrature_stiffness(&isotropic_tensor(0.0, 1.0));
        let mut pattern = Box::new([[(0, 0); 24]; 24]);
        for r in 0..24 {
            for c in 0..24 {
                pattern[r][c] = (
                    (72.0 * k_lambda[r][c]).round() as i32,
                    (72.0 * k_mu[r][c]).round() as i32,
                );
            }
        }
        Ok(Self {
            material,
            k0,
            pattern,
        })
    }

    pub fn material(&self) -> BaseMaterial {
        self.material
    }

    pub fn matrix(&self) -> &Mat24 {
        &self.k0
    }

    /// Scaled Lamé constants `(λ_base/72, μ_base/72)`.
    pub fn scaled_lame(&self) -> (f64, f64) {
        (
            self.material.lame_lambda() / 72.0,
            self.material.lame_mu() / 72.0,
        )
    }

    /// Integer `(λ, μ)` coefficients of each entry.
    pub fn pattern(&self) -> &[[(i32, i32); 24]; 24] {
        &self.pattern
    }

    /// The five values `{λ+μ, −λ+μ, λ+4μ, λ−2μ, 2λ+5μ}`.
    pub fn five_values(&self) -> [f64; 5] {
        let (l, m) = self.scaled_lame();
        FIVE.map(|(a, b)| a as f64 * l + b as f64 * m)
    }

    /// Entry `(r, c)` as `n · z[k]`.
    pub fn five_value_form(&self, r: usize, c: usize) -> (i32, usize) {
        let (a, b) = self.pattern[r][c];
        for (k, &(p, q)) in FIVE.iter().enumerate() {
            // (a, b) = n (p, q) with integer n
            if a * q == b * p && a % p == 0 && b % q == 0 && a / p == b / q {
                return (a / p, k);
            }
        }
        panic!("K0 entry ({r},{c}) with pattern {:?} has no five-value form", (a, b));
    }

    /// 3×3 block `(i, j)` between local vertices `i` and `j`.
    pub fn block(&self, i: usize, j: usize) -> Block3 {
        let mut b = [0.0; 9];
        for c in 0..3 {
            for d in 0..3 {
                b[3 * c + d] = self.k0[3 * i + c][3 * j + d];
            }
        }
        b
    }

    /// Element force of unit macro strain `i`, per local vertex: `K0 χ^i`.
    pub fn macro_force(&self, i: MacroStrainId) -> [[f64; 3]; 8] {
        let chi = element_macro_displacement(i);
        let mut out = [[0.0; 3]; 8];
        for r in 0..24 {
            out[r / 3][r % 3] = (0..24).map(|c| self.k0[r][c] * chi[c]).sum();
        }
        out
    }
}

/// `∫ Bᵀ C B` over the unit cube with 2×2×2 Gauss points.
fn quadrature_stiffness(c: &[[f64; 6]; 6]) -> Mat24 {
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let mut k = [[0.0; 24]; 24];
    for &z in &pts {
        for &y in &pts {
            for &x in &pts {
                let b = strain_displacement([x, y, z]);
                let mut cb = [[0.0; 24]; 6];
                for i in 0..6 {
                    for col in 0..24 {
                        cb[i][col] = (0..6).map(|m| c[i][m] * b[m][col]).sum();
                    }
                }
                for r in 0..24 {
                    for col in 0..24 {
                        let v: f64 = (0..6).map(|m| b[m][r] * cb[m][col]).sum();
                        k[r][col] += v / 8.0;
                    }
                }
            }
        }
    }
    k
}

fn strain_displacement(xi: [f64; 3]) -> [[f64; 24]; 6] {
    let mut b = [[0.0; 24]; 6];
    for j in 0..8 {
        let n = local_vertex(j);
        let f = |k: usize| if n[k] == 1 { xi[k] } else { 1.0 - xi[k] };
        let s = |k: usize| if n[k] == 1 { 1.0 } else { -1.0 };
        let dx = s(0) * f(1) * f(2);
        let dy = f(0) * s(1) * f(2);
        let dz = f(0) * f(1) * s(2);
        let c = 3 * j;
        b[0][c] = dx;
        b[1][c + 1] = dy;
        b[2][c + 2] = dz;
        b[3][c] = dy;
        b[3][c + 1] = dx;
        b[4][c + 1] = dz;
        b[4][c + 2] = dy;
        b[5][c] = dz;
        b[5][c + 2] = dx;
    }
    b
}

#[derive(Clone, Copy, Debug)]
struct LikeTerm {
    /// Flat index into the gathered 27×3 neighborhood.
    nb: u16,
    n: f64,
    k: u8,
}

/// Matrix-free stiffness on the finest level: `K = Σ_e c_e K0` with element
/// coefficients `c_e = ρ_e^p`.
#[derive(Clone, Debug)]
pub struct FineOperator<S: Storage> {
    grid: GridLevel,
    coeff: Vec<S>,
    k0: Box<[[S; 24]; 24]>,
    z: [S; 5],
    /// Per incident element `d` and row component: the 24 like-term entries.
    terms: Box<[[[LikeTerm; 24]; 3]; 8]>,
    /// Neighborhood slot of local vertex `j` seen from incident element `d`.
    slots: [[usize; 8]; 8],
    macro_forces: [[[f64; 3]; 8]; 6],
}

impl<S: Storage> FineOperator<S> {
    pub fn new(
        grid: &GridLevel,
        rho: &DensityField,
        penal: f64,
        element: &ElementStiffness,
    ) -> Result<Self> {
        if rho.res() != grid.res() {
            return Err(Error::FieldSize {
                expected: grid.element_count(),
                got: rho.len(),
            });
        }
        if let Some(bad) = rho.values().iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::DensityRange(format!("density {bad} is not a finite non-negative value")));
        }
        let coeff: Vec<S> = rho
            .values()
            .par_iter()
            .map(|&r| S::from_f64(r.powf(penal)))
            .collect();
        let m = element.matrix();
        let k0 = Box::new(std::array::from_fn(|r| {
            std::array::from_fn(|c| S::from_f64(m[r][c]))
        }));
        let z = element.five_values().map(S::from_f64);
        let mut slots = [[0usize; 8]; 8];
        for d in 0..8 {
            let od = local_vertex(d);
            for j in 0..8 {
                let lj = local_vertex(j);
                let o = [0, 1, 2].map(|k| lj[k] as i32 + od[k] as i32 - 1);
                slots[d][j] = neighbor_slot(o);
            }
        }
        let mut terms = Box::new(
            [[[LikeTerm {
                nb: 0,
                n: 0.0,
                k: 0,
            }; 24]; 3]; 8],
        );
        for d in 0..8 {
            let r = 7 - d;
            for c in 0..3 {
                for col in 0..24 {
                    let (n, k) = element.five_value_form(3 * r + c, col);
                    terms[d][c][col] = LikeTerm {
                        nb: (3 * slots[d][col / 3] + col % 3) as u16,
                        n: n as f64,
                        k: k as u8,
                    };
                }
                // group by base value so each accumulator is touched in runs
                terms[d][c].sort_by_key(|t| t.k);
            }
        }
        let macro_forces = MacroStrainId::ALL.map(|i| element.macro_force(i));
        Ok(Self {
            grid: grid.clone(),
            coeff,
            k0,
            z,
            terms,
            slots,
            macro_forces,
        })
    }

    pub fn grid(&self) -> &GridLevel {
        &self.grid
    }

    pub fn coefficients(&self) -> &[S] {
        &self.coeff
    }

    pub fn k0_entry(&self, r: usize, c: usize) -> f64 {
        self.k0[r][c].to_f64()
    }

    #[inline(always)]
    fn gather(&self, v: VertexCoord, u: &[[f64; 3]]) -> [f64; 81] {
        let locs = self.grid.neighbor_locations(v);
        let mut nb = [0.0; 81];
        for s in 0..27 {
            let x = u[locs[s]];
            nb[3 * s] = x[0];
            nb[3 * s + 1] = x[1];
            nb[3 * s + 2] = x[2];
        }
        nb
    }

    /// `[Ku]_v` with like terms combined over the five base values.
    #[inline]
    pub fn apply_at(&self, v: VertexCoord, u: &[[f64; 3]]) -> [f64; 3] {
        let nb = self.gather(v, u);
        let el = self.grid.incident_elements(v);
        let mut out = [0.0; 3];
        for d in 0..8 {
            let c = self.coeff[el[d]];
            // coefficient products stay in storage precision
            let cz: [f64; 5] = std::array::from_fn(|k| c.mul(self.z[k]).to_f64());
            for comp in 0..3 {
                let mut s = [0.0; 5];
                for t in &self.terms[d][comp] {
                    s[t.k as usize] += t.n * nb[t.nb as usize];
                }
                out[comp] += cz[0] * s[0] + cz[1] * s[1] + cz[2] * s[2] + cz[3] * s[3] + cz[4] * s[4];
            }
        }
        out
    }

    /// `[Ku]_v` straight from the `K0` blocks.
    pub fn apply_at_reference(&self, v: VertexCoord, u: &[[f64; 3]]) -> [f64; 3] {
        let nb = self.gather(v, u);
        let el = self.grid.incident_elements(v);
        let mut out = [0.0; 3];
        for d in 0..8 {
            let c = self.coeff[el[d]].to_f64();
            let r = 7 - d;
            for comp in 0..3 {
                let row = &self.k0[3 * r + comp];
                let mut acc = 0.0;
                for j in 0..8 {
                    let s = self.slots[d][j];
                    for dd in 0..3 {
                        acc += row[3 * j + dd].to_f64() * nb[3 * s + dd];
                    }
                }
                out[comp] += c * acc;
            }
        }
        out
    }

    /// Diagonal block `S_v = Σ_e c_e K0[7-e, 7-e]`.
    pub fn diag_block(&self, v: VertexCoord) -> Block3 {
        let el = self.grid.incident_elements(v);
        let mut s = [0.0; 9];
        for d in 0..8 {
            let c = self.coeff[el[d]].to_f64();
            let r = 7 - d;
            for a in 0..3 {
                for b in 0..3 {
                    s[3 * a + b] += c * self.k0[3 * r + a][3 * r + b].to_f64();
                }
            }
        }
        s
    }

    /// Row of `K` at `v` as 27 neighbor blocks (indexed by neighbor slot).
    pub fn stencil_row(&self, v: VertexCoord) -> [Block3; 27] {
        let el = self.grid.incident_elements(v);
        let mut row = [[0.0; 9]; 27];
        for d in 0..8 {
            let c = self.coeff[el[d]].to_f64();
            let r = 7 - d;
            for j in 0..8 {
                let blk = &mut row[self.slots[d][j]];
                for a in 0..3 {
                    for b in 0..3 {
                        blk[3 * a + b] += c * self.k0[3 * r + a][3 * j + b].to_f64();
                    }
                }
            }
        }
        row
    }

    pub fn apply(&self, u: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; u.len()];
        out.par_iter_mut().enumerate().for_each(|(p, o)| {
            *o = self.apply_at(self.grid.vertex_at(p), u);
        });
        out
    }

    pub fn apply_reference(&self, u: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; u.len()];
        out.par_iter_mut().enumerate().for_each(|(p, o)| {
            *o = self.apply_at_reference(self.grid.vertex_at(p), u);
        });
        out
    }

    /// Nodal force of unit macro strain `i`:
    /// `f_v = Σ_e c_e Σ_j K0[7-e, j] χ^i_{e,j}` with element-relative `χ`.
    pub fn macro_force(&self, i: MacroStrainId) -> Vec<[f64; 3]> {
        let fe = &self.macro_forces[i.index()];
        let mut out = vec![[0.0; 3]; self.grid.vertex_count()];
        out.par_iter_mut().enumerate().for_each(|(p, o)| {
            let el = self.grid.incident_elements(self.grid.vertex_at(p));
            let mut f = [0.0; 3];
            for d in 0..8 {
                let c = self.coeff[el[d]].to_f64();
                let fr = fe[7 - d];
                f[0] += c * fr[0];
                f[1] += c * fr[1];
                f[2] += c * fr[2];
            }
            *o = f;
        });
        out
    }
}

/// `f^i` for a density field (level-0 grid, penalization `p`).
pub fn assemble_macro_force(
    grid: &GridLevel,
    rho: &DensityField,
    penal: f64,
    i: MacroStrainId,
    element: &ElementStiffness,
) -> Result<Vec<[f64; 3]>> {
    Ok(FineOperator::<f64>::new(grid, rho, penal, element)?.macro_force(i))
}

/// Matrix-free `K u` in double precision.
pub fn apply_stiffness(
    grid: &GridLevel,
    rho: &DensityField,
    penal: f64,
    u: &[[f64; 3]],
    element: &ElementStiffness,
) -> Result<Vec<[f64; 3]>> {
    Ok(FineOperator::<f64>::new(grid, rho, penal, element)?.apply(u))
}

/// Diagonal block `S_v`; errors when it is singular.
pub fn diag_block(
    grid: &GridLevel,
    rho: &DensityField,
    penal: f64,
    v: VertexCoord,
    element: &ElementStiffness,
) -> Result<Block3> {
    let s = FineOperator::<f64>::new(grid, rho, penal, element)?.diag_block(v);
    if crate::multigrid::inv3(&s).is_none() {
        return Err(Error::SingularDiagonal {
            level: grid.level(),
            vertex: v.0,
        });
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat() -> BaseMaterial {
        BaseMaterial::new(1.0, 0.3).unwrap()
    }

    #[test]
    fn rejects_bad_poisson() {
        assert!(BaseMaterial::new(1.0, 0.5).is_err());
        assert!(BaseMaterial::new(1.0, -1.0).is_err());
        assert!(BaseMaterial::new(0.0, 0.3).is_err());
    }

    #[test]
    fn k0_corner_entry() {
        let k = ElementStiffness::new(mat()).unwrap();
        let (l, m) = k.scaled_lame();
        assert!((l - 0.0080128).abs() < 1e-7);
        assert!((m - 0.0053419).abs() < 1e-7);
        let expect = 8.0 * l + 32.0 * m;
        assert!((k.matrix()[0][0] - expect).abs() < 1e-15);
        assert!((k.matrix()[0][0] - 0.2350427).abs() < 1e-7);
    }

    #[test]
    fn k0_symmetric_with_rigid_null_space() {
        let k = ElementStiffness::new(BaseMaterial::new(3.0, 0.1).unwrap()).unwrap();
        let m = k.matrix();
        for r in 0..24 {
            for c in 0..24 {
                assert!((m[r][c] - m[c][r]).abs() < 1e-15);
            }
        }
        for t in 0..3 {
            let mut u = [0.0; 24];
            for j in 0..8 {
                u[3 * j + t] = 1.0;
            }
            for r in 0..24 {
                let s: f64 = (0..24).map(|c| m[r][c] * u[c]).sum();
                assert!(s.abs() < 1e-14);
            }
        }
        // infinitesimal rotation about z: u = (-y, x, 0)
        let mut u = [0.0; 24];
        for j in 0..8 {
            let x = local_vertex(j);
            u[3 * j] = -(x[1] as f64);
            u[3 * j + 1] = x[0] as f64;
        }
        for r in 0..24 {
            let s: f64 = (0..24).map(|c| m[r][c] * u[c]).sum();
            assert!(s.abs() < 1e-14);
        }
    }

    #[test]
    fn k0_entries_are_fourteen_values() {
        for (e, nu) in [(1.0, 0.3), (1e6, 0.3), (2.0, -0.4), (5.0, 0.45)] {
            let k = ElementStiffness::new(BaseMaterial::new(e, nu).unwrap()).unwrap();
            let (l, m) = k.scaled_lame();
            let z = k.five_values();
            for r in 0..24 {
                for c in 0..24 {
                    let v = k.matrix()[r][c];
                    let pat = k.pattern()[r][c];
                    assert!(FOURTEEN.contains(&pat), "pattern {pat:?}");
                    let table = pat.0 as f64 * l + pat.1 as f64 * m;
                    assert!((v - table).abs() <= 1e-14 * v.abs().max(1e-300) + 1e-16 * e);
                    let (n, kk) = k.five_value_form(r, c);
                    assert!((v - n as f64 * z[kk]).abs() <= 1e-14 * v.abs() + 1e-16 * e);
                }
            }
        }
    }

    #[test]
    fn macro_strain_examples() {
        let i0 = MacroStrainId::new(0).unwrap();
        let i3 = MacroStrainId::new(3).unwrap();
        let i4 = MacroStrainId::new(4).unwrap();
        assert_eq!(macro_strain_displacement(i0, [1.0, 0.0, 1.0]), [1.0, 0.0, 0.0]);
        assert_eq!(macro_strain_displacement(i3, [1.0, 1.0, 0.0]), [0.5, 0.5, 0.0]);
        assert_eq!(macro_strain_displacement(i4, [0.0, 0.0, 0.0]), [0.0, 0.0, 0.0]);
        assert!(MacroStrainId::new(6).is_none());
    }

    #[test]
    fn element_energy_reproduces_base_tensor() {
        let material = BaseMaterial::new(1e6, 0.3).unwrap();
        let k = ElementStiffness::new(material).unwrap();
        let c = material.tensor();
        for i in MacroStrainId::ALL {
            for j in MacroStrainId::ALL {
                let a = element_macro_displacement(i);
                let b = element_macro_displacement(j);
                let mut e = 0.0;
                for r in 0..24 {
                    for s in 0..24 {
                        e += a[r] * k.matrix()[r][s] * b[s];
                    }
                }
                let want = c[i.index()][j.index()];
                assert!((e - want).abs() < 1e-9 * 1e6, "{i:?} {j:?}: {e} vs {want}");
            }
        }
    }

    #[test]
    fn rejects_single_element_grid() {
        assert!(GridLevel::cubic(1).is_err());
    }
}
