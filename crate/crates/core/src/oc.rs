//! Optimality-criteria density update, sensitivity filter and stopping rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{DensityField, RHO_MIN};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcConfig {
    pub min_density: f64,
    /// Largest change of any element per update.
    pub step_limit: f64,
    /// Exponent applied to the optimality ratio.
    pub damp: f64,
    /// Target volume fraction.
    pub volume: f64,
    /// Tolerance on the mean density accepted by the bisection.
    pub volume_tol: f64,
}

impl OcConfig {
    pub fn new(volume: f64) -> Self {
        Self {
            min_density: RHO_MIN,
            step_limit: 0.05,
            damp: 0.5,
            volume,
            volume_tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_limit > 0.0 && self.step_limit < 1.0) {
            return Err(Error::Config(format!("step limit must lie in (0, 1), got {}", self.step_limit)));
        }
        if !(self.damp > 0.0 && self.damp <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damp)));
        }
        if !(self.volume > 0.0 && self.volume <= 1.0) {
            return Err(Error::Config(format!("volume fraction must lie in (0, 1], got {}", self.volume)));
        }
        Ok(())
    }
}

/// Result of one update.
#[derive(Clone, Debug)]
pub struct OcOutcome {
    pub density: DensityField,
    pub multiplier: f64,
    pub bisections: usize,
    /// Set when the multiplier interval did not bracket the volume target.
    pub warning: Option<String>,
}

const B_FLOOR: f64 = 1e-30;
const LAMBDA_LO: f64 = 1e-12;
const LAMBDA_HI: f64 = 1e12;
const MAX_BISECTIONS: usize = 60;

fn trial(rho: &[f64], g: &[f64], cfg: &OcConfig, lambda: f64) -> Vec<f64> {
    rho.par_iter()
        .zip(g.par_iter())
        .map(|(&r, &ge)| {
            let b = (-ge).max(B_FLOOR) / lambda;
            let cand = r * b.powf(cfg.damp);
            cand.clamp(r - cfg.step_limit, r + cfg.step_limit)
                .clamp(cfg.min_density, 1.0)
        })
        .collect()
}

fn mean(x: &[f64]) -> f64 {
    crate::reduce::sum_by(x, |&v| v) / x.len() as f64
}

/// `ρ' = clamp(ρ (max(ε, -g)/Λ)^damp, ρ ± step) ∩ [ρ_min, 1]`, with `Λ`
/// bisected geometrically so that `mean(ρ') <= V`.
pub fn oc_update(rho: &DensityField, g: &DensityField, cfg: &OcConfig) -> Result<OcOutcome> {
    cfg.validate()?;
    if rho.len() != g.len() {
        return Err(Error::FieldSize {
            expected: rho.len(),
            got: g.len(),
        });
    }
    if let Some(bad) = g.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::DensityRange(format!("non-finite sensitivity {bad}")));
    }
    // normalize so that positive rescalings of g give the same trials
    let scale = g.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let gn: Vec<f64> = g.values().par_iter().map(|v| v / scale).collect();
    let (r, gv) = (rho.values(), &gn[..]);
    let target = cfg.volume;
    let lo_trial = trial(r, gv, cfg, LAMBDA_LO);
    let hi_trial = trial(r, gv, cfg, LAMBDA_HI);
    let done = |data: Vec<f64>, lambda: f64, n: usize, warning: Option<String>| OcOutcome {
        density: DensityField::new(rho.res(), data).expect("same size"),
        multiplier: lambda * scale,
        bisections: n,
        warning,
    };
    // mean(ρ') decreases as Λ grows
    if mean(&lo_trial) <= target + cfg.volume_tol {
        return Ok(done(lo_trial, LAMBDA_LO, 0, None));
    }
    if mean(&hi_trial) > target + cfg.volume_tol {
        let msg = format!(
            "volume bisection did not bracket the target {target}: largest multiplier still gives {}",
            mean(&hi_trial)
        );
        log::warn!("{msg}");
        return Ok(done(hi_trial, LAMBDA_HI, 0, Some(msg)));
    }
    let (mut lo, mut hi) = (LAMBDA_LO, LAMBDA_HI);
    let mut best = hi_trial;
    let mut n = 0;
    while n < MAX_BISECTIONS {
        n += 1;
        let mid = (lo * hi).sqrt();
        let t = trial(r, gv, cfg, mid);
        let m = mean(&t);
        if m > target {
            lo = mid;
        } else {
            hi = mid;
            let close = target - m <= cfg.volume_tol;
            best = t;
            if close {
                break;
            }
        }
    }
    Ok(done(best, hi, n, None))
}

/// Classic sensitivity filter with linear cone weights on the periodic grid:
/// `g'_e = Σ_j w_ej ρ_j g_j / (ρ_e Σ_j w_ej)`.
pub fn sensitivity_filter(g: &DensityField, rho: &DensityField, radius: f64) -> DensityField {
    if radius < 1.0 {
        return g.clone();
    }
    let [n0, n1, n2] = g.res();
    let r = radius.floor() as isize;
    let mut taps = Vec::new();
    for z in -r..=r {
        for y in -r..=r {
            for x in -r..=r {
                let w = radius - ((x * x + y * y + z * z) as f64).sqrt();
                if w > 0.0 {
                    taps.push(([x, y, z], w));
                }
            }
        }
    }
    let wsum: f64 = taps.iter().map(|t| t.1).sum();
    let (gv, rv) = (g.values(), rho.values());
    let wrap = |x: isize, n: usize| x.rem_euclid(n as isize) as usize;
    let data = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let (x, y, z) = (idx % n0, (idx / n0) % n1, idx / (n0 * n1));
            let mut acc = 0.0;
            for (o, w) in &taps {
                let j = wrap(x as isize + o[0], n0) + n0 * (wrap(y as isize + o[1], n1) + n1 * wrap(z as isize + o[2], n2));
                acc += w * rv[j] * gv[j];
            }
            acc / (rv[idx].max(1e-3) * wsum)
        })
        .collect();
    DensityField::new(g.res(), data).expect("same size")
}

/// Stops once the relative objective change stays below the threshold for
/// the required number of consecutive iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergeChecker {
    pub threshold: f64,
    pub required: usize,
    last: Option<f64>,
    hits: usize,
}

impl Default for ConvergeChecker {
    fn default() -> Self {
        Self::new(5e-4, 3)
    }
}

impl ConvergeChecker {
    pub fn new(threshold: f64, required: usize) -> Self {
        Self {
            threshold,
            required,
            last: None,
            hits: 0,
        }
    }

    /// Record `f_t`; true once converged.
    pub fn check(&mut self, f: f64) -> bool {
        if let Some(prev) = self.last {
            let rel = (f - prev).abs() / prev.abs().max(1e-30);
            if rel < self.threshold {
                self.hits += 1;
            } else {
                self.hits = 0;
            }
        }
        self.last = Some(f);
        self.hits >= self.required
    }

    pub fn consecutive_hits(&self) -> usize {
        self.hits
    }
}

pub fn check_converged(state: &mut ConvergeChecker, f: f64) -> bool {
    state.check(f)
}
