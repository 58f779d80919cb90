//! Periodic cell problems, the homogenized tensor `C^H` and its sensitivities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fem::{element_macro_displacement, BaseMaterial, ElementStiffness, MacroStrainId};
use crate::field::DensityField;
use crate::grid::GridLevel;
use crate::multigrid::{Hierarchy, SolveStats, SolverConfig};
use crate::precision::{Precision, Storage};
use crate::{Error, Result};

/// Symmetric 6×6 stiffness in engineering order 11, 22, 33, 12, 23, 13.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticTensor(pub [[f64; 6]; 6]);

impl ElasticTensor {
    pub fn isotropic(material: &BaseMaterial) -> Self {
        Self(material.tensor())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn rows(&self) -> &[[f64; 6]; 6] {
        &self.0
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..6).all(|i| (0..6).all(|j| (self.0[i][j] - self.0[j][i]).abs() <= tol))
    }

    pub fn trace(&self) -> f64 {
        (0..6).map(|i| self.0[i][i]).sum()
    }
}

/// The six corrector fields `u^i`, color-major nodal layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementSet {
    pub fields: Vec<Vec<[f64; 3]>>,
}

impl DisplacementSet {
    pub fn zeros(grid: &GridLevel) -> Self {
        Self {
            fields: vec![vec![[0.0; 3]; grid.vertex_count()]; 6],
        }
    }

    /// Copy with every component rounded to single precision.
    pub fn single_precision_snapshot(&self) -> Self {
        Self {
            fields: self
                .fields
                .iter()
                .map(|u| u.iter().map(|x| x.map(|c| c as f32 as f64)).collect())
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenizationConfig {
    pub solver: SolverConfig,
    pub precision: Precision,
    /// Evaluate `C^H` and sensitivities from a single-precision copy of `U`.
    pub single_precision_eval: bool,
}

impl Default for HomogenizationConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            precision: Precision::Mixed,
            single_precision_eval: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CellSolution {
    pub displacements: DisplacementSet,
    pub stats: [SolveStats; 6],
}

impl CellSolution {
    pub fn total_cycles(&self) -> usize {
        self.stats.iter().map(|s| s.cycles).sum()
    }

    pub fn max_residual(&self) -> f64 {
        self.stats.iter().map(|s| s.residual).fold(0.0, f64::max)
    }
}

const LOAD_FLOOR: f64 = 1e-12;

/// Solve the six cell problems, warm-starting from `warm` when given.
pub fn solve_cell_problems(
    grid: &GridLevel,
    rho: &DensityField,
    penal: f64,
    element: &ElementStiffness,
    cfg: &HomogenizationConfig,
    warm: Option<&DisplacementSet>,
) -> Result<CellSolution> {
    if let Some(bad) = rho.values().iter().find(|r| !(r.is_finite() && **r > 0.0 && **r <= 1.0)) {
        return Err(Error::DensityRange(format!("density {bad} outside (0, 1]")));
    }
    match cfg.precision {
        Precision::Mixed => solve_with::<f32>(grid, rho, penal, element, cfg.solver, warm),
        Precision::Double => solve_with::<f64>(grid, rho, penal, element, cfg.solver, warm),
    }
}

fn solve_with<S: Storage>(
    grid: &GridLevel,
    rho: &DensityField,
    penal: f64,
    element: &ElementStiffness,
    solver: SolverConfig,
    warm: Option<&DisplacementSet>,
) -> Result<CellSolution> {
    let mut h = Hierarchy::<S>::build(grid, rho, penal, element, solver)?;
    let mut fields = match warm {
        Some(w) if w.fields.len() == 6 && w.fields.iter().all(|u| u.len() == grid.vertex_count()) => w.fields.clone(),
        _ => DisplacementSet::zeros(grid).fields,
    };
    let mut stats = [SolveStats {
        cycles: 0,
        residual: 0.0,
        converged: true,
    }; 6];
    let coeff_norm = h.fine().coefficients().iter().map(|c| c.to_f64().powi(2)).sum::<f64>().sqrt();
    for i in MacroStrainId::ALL {
        let f = h.fine().macro_force(i);
        // loads that cancel to round-off are zero
        let fe_norm = element.macro_force(i).iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let floor = LOAD_FLOOR * 8f64.sqrt() * coeff_norm * fe_norm;
        let u = &mut fields[i.index()];
        let s = h.solve_with_floor(&f, u, floor)?;
        if !s.residual.is_finite() {
            return Err(Error::Diverged { load: i.index() });
        }
        if !s.converged {
            return Err(Error::NotConverged {
                load: i.index(),
                residual: s.residual,
                cycles: s.cycles,
            });
        }
        stats[i.index()] = s;
    }
    Ok(CellSolution {
        displacements: DisplacementSet { fields },
        stats,
    })
}

/// Upper-triangle index of `(i, j)` with `i <= j`.
#[inline(always)]
fn tri(i: usize, j: usize) -> usize {
    i * 6 - i * (i + 1) / 2 + j
}

/// Per element, the 21 energies `(χ^i - u^i_e)ᵀ K0 (χ^j - u^j_e)` for `i <= j`.
pub fn element_energies(grid: &GridLevel, u: &DisplacementSet, element: &ElementStiffness) -> Vec<[f64; 21]> {
    let k0 = element.matrix();
    let chi = MacroStrainId::ALL.map(element_macro_displacement);
    (0..grid.element_count())
        .into_par_iter()
        .map(|e| {
            let locs = grid.element_vertex_locations(grid.element_at(e));
            let mut d = [[0.0f64; 24]; 6];
            for i in 0..6 {
                for j in 0..8 {
                    let x = u.fields[i][locs[j]];
                    for c in 0..3 {
                        d[i][3 * j + c] = chi[i][3 * j + c] - x[c];
                    }
                }
            }
            let mut kd = [[0.0f64; 24]; 6];
            for r in 0..24 {
                let row = &k0[r];
                for i in 0..6 {
                    let mut s = 0.0;
                    for c in 0..24 {
                        s += row[c] * d[i][c];
                    }
                    kd[i][r] = s;
                }
            }
            let mut out = [0.0; 21];
            for i in 0..6 {
                for j in i..6 {
                    out[tri(i, j)] = (0..24).map(|r| d[i][r] * kd[j][r]).sum();
                }
            }
            out
        })
        .collect()
}

/// `C^H_ij = (1/|Ω|) Σ_e ρ_e^p (χ^i - u^i_e)ᵀ K0 (χ^j - u^j_e)`, `|Ω|` the element count.
pub fn effective_tensor(
    grid: &GridLevel,
    rho: &DensityField,
    penal: f64,
    u: &DisplacementSet,
    element: &ElementStiffness,
) -> Result<ElasticTensor> {
    check_field(grid, rho)?;
    Ok(tensor_from_energies(rho, penal, &element_energies(grid, u, element)))
}

pub fn tensor_from_energies(rho: &DensityField, penal: f64, energies: &[[f64; 21]]) -> ElasticTensor {
    let weighted: Vec<(f64, &[f64; 21])> = rho.values().iter().map(|r| r.powf(penal)).zip(energies).collect();
    let mut c = [[0.0; 6]; 6];
    let m = energies.len() as f64;
    for i in 0..6 {
        for j in i..6 {
            let k = tri(i, j);
            let v = crate::reduce::sum_by(&weighted, |(w, e)| w * e[k]) / m;
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    ElasticTensor(c)
}

fn check_field(grid: &GridLevel, rho: &DensityField) -> Result<()> {
    if rho.res() != grid.res() {
        return Err(Error::FieldSize {
            expected: grid.element_count(),
            got: rho.len(),
        });
    }
    Ok(())
}

/// `∂f/∂ρ_e = (p ρ_e^{p-1} / |Ω|) Σ_ij seed_ij (χ^i - u^i_e)ᵀ K0 (χ^j - u^j_e)` with the seed symmetrized.
pub fn tensor_sensitivity(
    grid: &GridLevel,
    rho: &DensityField,
    penal: f64,
    u: &DisplacementSet,
    seed: &[[f64; 6]; 6],
    element: &ElementStiffness,
) -> Result<DensityField> {
    check_field(grid, rho)?;
    Ok(sensitivity_from_energies(rho, penal, &element_energies(grid, u, element), seed))
}

pub fn sensitivity_from_energies(
    rho: &DensityField,
    penal: f64,
    energies: &[[f64; 21]],
    seed: &[[f64; 6]; 6],
) -> DensityField {
    // symmetric seed; the (i, j) and (j, i) terms share one energy
    let mut w = [0.0; 21];
    for i in 0..6 {
        for j in i..6 {
            let s = 0.5 * (seed[i][j] + seed[j][i]);
            w[tri(i, j)] = if i == j { s } else { 2.0 * s };
        }
    }
    let m = energies.len() as f64;
    let data = rho
        .values()
        .par_iter()
        .zip(energies.par_iter())
        .map(|(&r, e)| {
            let s: f64 = (0..21).map(|k| w[k] * e[k]).sum();
            penal * r.powf(penal - 1.0) * s / m
        })
        .collect();
    DensityField::new(rho.res(), data).expect("sizes match")
}

/// Solver, element and settings bundled for repeated evaluations.
#[derive(Clone, Debug)]
pub struct Homogenizer {
    grid: GridLevel,
    element: ElementStiffness,
    cfg: HomogenizationConfig,
}

/// One complete evaluation: displacements, `C^H` and the per-element energies.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub solution: CellSolution,
    pub tensor: ElasticTensor,
    energies: Vec<[f64; 21]>,
}

impl Evaluation {
    pub fn energies(&self) -> &[[f64; 21]] {
        &self.energies
    }
}

impl Homogenizer {
    pub fn new(grid: GridLevel, material: BaseMaterial, cfg: HomogenizationConfig) -> Result<Self> {
        Ok(Self {
            grid,
            element: ElementStiffness::new(material)?,
            cfg,
        })
    }

    pub fn grid(&self) -> &GridLevel {
        &self.grid
    }

    pub fn element(&self) -> &ElementStiffness {
        &self.element
    }

    pub fn config(&self) -> &HomogenizationConfig {
        &self.cfg
    }

    /// Solve and evaluate `C^H` for coefficient field `ρ^p`.
    pub fn evaluate(&self, rho: &DensityField, penal: f64, warm: Option<&DisplacementSet>) -> Result<Evaluation> {
        check_field(&self.grid, rho)?;
        let solution = solve_cell_problems(&self.grid, rho, penal, &self.element, &self.cfg, warm)?;
        let energies = if self.cfg.single_precision_eval {
            let snap = solution.displacements.single_precision_snapshot();
            element_energies(&self.grid, &snap, &self.element)
        } else {
            element_energies(&self.grid, &solution.displacements, &self.element)
        };
        let tensor = tensor_from_energies(rho, penal, &energies);
        Ok(Evaluation {
            solution,
            tensor,
            energies,
        })
    }

    pub fn sensitivity(&self, rho: &DensityField, penal: f64, eval: &Evaluation, seed: &[[f64; 6]; 6]) -> DensityField {
        sensitivity_from_energies(rho, penal, &eval.energies, seed)
    }
}
