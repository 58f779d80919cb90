//! The optimization loop.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{FilterPlacement, InitKind, RunConfig};
use super::io;
use crate::fem::BaseMaterial;
use crate::field::{init_constant, init_trig_symmetric, symmetrize, DensityExpr, DensityField, RadialFilter, TrigInitSpec};
use crate::grid::GridLevel;
use crate::homogenization::{DisplacementSet, ElasticTensor, Evaluation, HomogenizationConfig, Homogenizer};
use crate::multigrid::SolverConfig;
use crate::objective::{bulk_objective, npr_log, npr_relaxed, poisson_ratio_report, shear_objective, Expr, ObjectiveKind};
use crate::oc::{oc_update, sensitivity_filter, ConvergeChecker, OcConfig};
use crate::{Error, Result};

/// One logged iteration. The objective and tensor belong to the density the
/// iteration started from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    /// Mean design density.
    pub volume: f64,
    /// V-cycles summed over the six solves.
    pub cycles: usize,
    /// Largest final relative residual of the six solves.
    pub residual: f64,
    pub ms: f64,
    pub tensor: ElasticTensor,
    pub poisson: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Largest elementwise change of the update that followed, 0 when none did.
    pub max_change: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizationReport {
    pub records: Vec<IterationRecord>,
    pub tensor: ElasticTensor,
    /// Final design density.
    pub density: DensityField,
    pub converged: bool,
    pub init_fallback: bool,
    pub warnings: Vec<String>,
    /// Peak resident set of the whole process in MiB; not comparable to GPU memory figures.
    pub peak_rss_mib: Option<f64>,
}

impl OptimizationReport {
    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }
}

pub fn objective_expr(cfg: &RunConfig, iteration: usize) -> Expr {
    match cfg.obj {
        ObjectiveKind::Bulk => bulk_objective(),
        ObjectiveKind::Shear => shear_objective(),
        ObjectiveKind::NprRelaxed => npr_relaxed(cfg.beta, iteration),
        ObjectiveKind::NprLog => npr_log(cfg.eta, cfg.tau, cfg.gamma),
    }
}

/// Physical density expression for the configured filter placement.
pub fn density_chain(cfg: &RunConfig) -> DensityExpr {
    match cfg.filter_placement {
        FilterPlacement::Density => DensityExpr::var()
            .conv(RadialFilter::new(cfg.filter_radius, cfg.kernel))
            .pow(cfg.penal),
        FilterPlacement::Sensitivity => DensityExpr::var().pow(cfg.penal),
    }
}

/// Objective and its gradient with respect to the design density, before any
/// sensitivity filtering or symmetrization.
#[derive(Clone, Debug)]
pub struct DesignEvaluation {
    pub objective: f64,
    pub gradient: DensityField,
    pub evaluation: Evaluation,
}

pub fn evaluate_design(
    homog: &Homogenizer,
    chain: &DensityExpr,
    expr: &Expr,
    rho: &DensityField,
    warm: Option<&DisplacementSet>,
) -> Result<DesignEvaluation> {
    let tape = chain.eval(rho);
    let evaluation = homog.evaluate(tape.output(), 1.0, warm)?;
    let (objective, df_dc) = expr.eval_backward(1.0, &evaluation.tensor.0)?;
    let g_phys = homog.sensitivity(tape.output(), 1.0, &evaluation, &df_dc);
    Ok(DesignEvaluation {
        objective,
        gradient: chain.backward(&tape, &g_phys),
        evaluation,
    })
}

/// Initial design density, symmetrized.
pub fn initial_density(cfg: &RunConfig) -> Result<(DensityField, bool)> {
    let res = [cfg.reso; 3];
    let (field, fallback) = match &cfg.init {
        InitKind::Constant => (init_constant(res, cfg.vol), false),
        InitKind::Trig => {
            let out = init_trig_symmetric(&TrigInitSpec::new(cfg.basis_n, cfg.seed, cfg.vol), res, cfg.sym)?;
            (out.field, out.fallback)
        }
        InitKind::File(p) => {
            let f = io::read_raw(p, res)?;
            if let Some(bad) = f.values().iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
                return Err(Error::DensityRange(format!("{} contains density {bad}", p.display())));
            }
            (f, false)
        }
    };
    Ok((symmetrize(&field, cfg.sym)?, fallback))
}

/// Run the configured optimization, writing every output into `cfg.out`.
pub fn run_optimization(cfg: &RunConfig) -> Result<OptimizationReport> {
    cfg.validate()?;
    if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("workers: {e}")))?;
        pool.install(|| run_inner(cfg))
    } else {
        run_inner(cfg)
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    cfg: &'a RunConfig,
}

impl Outputs<'_> {
    fn persist(&self, rho: &DensityField, records: &[IterationRecord], tensor: Option<&ElasticTensor>) -> Result<()> {
        io::write_raw(rho, &self.dir.join("rho.raw"))?;
        io::write_meta(
            &io::RawMeta::new(rho.res(), self.cfg.vol, self.cfg.seed),
            &self.dir.join("rho.meta.json"),
        )?;
        io::write_vti(rho, &self.dir.join("rho.vti"))?;
        io::write_log_csv(records, &self.dir.join("log.csv"))?;
        if let Some(c) = tensor {
            io::write_tensor(c, &self.dir.join("Ch.txt"))?;
        }
        Ok(())
    }
}

fn run_inner(cfg: &RunConfig) -> Result<OptimizationReport> {
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("config.resolved.json"), serde_json::to_string_pretty(cfg)?)?;
    let outputs = Outputs { dir: &cfg.out, cfg };

    let grid = GridLevel::new([cfg.reso; 3], 0)?;
    let material = BaseMaterial::new(cfg.young, cfg.poisson)?;
    let hcfg = HomogenizationConfig {
        solver: SolverConfig {
            tol: cfg.tol,
            max_cycles: cfg.max_cycles,
            ..SolverConfig::default()
        },
        precision: cfg.precision,
        single_precision_eval: cfg.single_precision_eval,
    };
    let homog = Homogenizer::new(grid, material, hcfg)?;
    let chain = density_chain(cfg);
    let oc_cfg = OcConfig {
        step_limit: cfg.step,
        damp: cfg.damp,
        ..OcConfig::new(cfg.vol)
    };
    oc_cfg.validate()?;

    let (mut rho, init_fallback) = initial_density(cfg)?;
    let mut warnings = Vec::new();
    if init_fallback {
        let msg = "trigonometric initialization missed the volume target; fell back to a constant field".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut checker = ConvergeChecker::new(cfg.converge_threshold, 3);
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut warm: Option<DisplacementSet> = None;
    let mut tensor: Option<ElasticTensor> = None;
    let mut converged = false;

    for iter in 0..cfg.max_iter {
        let t0 = Instant::now();
        let expr = objective_expr(cfg, iter);
        let DesignEvaluation {
            objective: f,
            gradient,
            evaluation: eval,
        } = match evaluate_design(&homog, &chain, &expr, &rho, warm.as_ref()) {
            Ok(d) => d,
            Err(e) => {
                outputs.persist(&rho, &records, tensor.as_ref())?;
                return Err(e);
            }
        };
        let mut record = IterationRecord {
            iter,
            objective: f,
            volume: rho.mean(),
            cycles: eval.solution.total_cycles(),
            residual: eval.solution.max_residual(),
            ms: 0.0,
            tensor: eval.tensor.clone(),
            poisson: poisson_ratio_report(&eval.tensor.0),
            rho_min: rho.min(),
            rho_max: rho.max(),
            max_change: 0.0,
        };
        tensor = Some(eval.tensor.clone());
        let stop = checker.check(f);
        if stop || iter + 1 == cfg.max_iter {
            converged = stop;
            record.ms = t0.elapsed().as_secs_f64() * 1e3;
            log_record(&record);
            records.push(record);
            break;
        }

        let mut g = gradient;
        if cfg.filter_placement == FilterPlacement::Sensitivity {
            g = sensitivity_filter(&g, &rho, cfg.filter_radius);
        }
        let g = symmetrize(&g, cfg.sym)?;
        let outcome = oc_update(&rho, &g, &oc_cfg)?;
        if let Some(w) = outcome.warning {
            warnings.push(format!("iteration {iter}: {w}"));
        }
        let next = symmetrize(&outcome.density, cfg.sym)?;
        record.max_change = rho
            .values()
            .iter()
            .zip(next.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        rho = next;
        warm = Some(eval.solution.displacements);
        record.ms = t0.elapsed().as_secs_f64() * 1e3;
        log_record(&record);
        records.push(record);
    }

    let tensor = tensor.unwrap_or_else(|| ElasticTensor([[0.0; 6]; 6]));
    outputs.persist(&rho, &records, Some(&tensor))?;
    Ok(OptimizationReport {
        records,
        tensor,
        density: rho,
        converged,
        init_fallback,
        warnings,
        peak_rss_mib: io::peak_rss_mib(),
    })
}

fn log_record(r: &IterationRecord) {
    log::info!(
        "iter {:4}  f {:+.6e}  vol {:.5}  nu {:+.4}  cycles {:3}  res {:.2e}  {:.0} ms",
        r.iter,
        r.objective,
        r.volume,
        r.poisson,
        r.cycles,
        r.residual,
        r.ms
    );
}
