use voxhom::app::{evaluate_design, io, objective_expr, run_optimization, InitKind, RunConfig};
use voxhom::fem::BaseMaterial;
use voxhom::field::{DensityField, SymmetryType};
use voxhom::grid::GridLevel;
use voxhom::homogenization::{HomogenizationConfig, Homogenizer};
use voxhom::objective::ObjectiveKind;
use voxhom::Precision;

fn cfg(dir: &std::path::Path) -> RunConfig {
    RunConfig {
        reso: 16,
        workers: 1,
        out: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn constant_start_converges_on_volume() {
    let dir = tempfile::tempdir().unwrap();
    let c = RunConfig {
        init: InitKind::Constant,
        ..cfg(dir.path())
    };
    let rep = run_optimization(&c).unwrap();
    assert!(rep.converged, "{} iterations", rep.records.len());
    assert!((rep.density.mean() - 0.3).abs() <= 1e-3);
}

#[test]
fn double_mode_runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let make = |d: &std::path::Path| RunConfig {
        precision: Precision::Double,
        max_iter: 8,
        reso: 12,
        seed: 5,
        ..cfg(d)
    };
    let ra = run_optimization(&make(a.path())).unwrap();
    let rb = run_optimization(&make(b.path())).unwrap();
    assert_eq!(ra.density, rb.density);
    let strip = |r: &voxhom::app::OptimizationReport| {
        r.records.iter().map(|x| (x.objective, x.volume, x.cycles, x.residual)).collect::<Vec<_>>()
    };
    assert_eq!(strip(&ra), strip(&rb));
}

#[test]
fn file_init_resumes_from_written_density() {
    let a = tempfile::tempdir().unwrap();
    let first = run_optimization(&RunConfig {
        max_iter: 4,
        reso: 12,
        ..cfg(a.path())
    })
    .unwrap();
    let b = tempfile::tempdir().unwrap();
    let resumed = RunConfig {
        init: InitKind::File(a.path().join("rho.raw")),
        max_iter: 1,
        reso: 12,
        ..cfg(b.path())
    };
    let rep = run_optimization(&resumed).unwrap();
    let want: Vec<f64> = first.density.values().iter().map(|v| (*v as f32) as f64).collect();
    assert_eq!(rep.density.values(), &want[..]);
}

#[test]
fn every_objective_and_symmetry_runs() {
    for (obj, sym) in [
        (ObjectiveKind::Shear, SymmetryType::Reflect3),
        (ObjectiveKind::NprRelaxed, SymmetryType::Rotate3),
        (ObjectiveKind::NprLog, SymmetryType::None),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let rep = run_optimization(&RunConfig {
            obj,
            sym,
            reso: 8,
            max_iter: 4,
            vol: 0.2,
            ..cfg(dir.path())
        })
        .unwrap();
        assert_eq!(rep.records.len(), 4);
        assert!(rep.records[1..].iter().all(|r| r.volume <= 0.2 + 1e-6));
    }
}

#[test]
fn design_gradient_is_a_descent_direction() {
    let c = RunConfig {
        reso: 8,
        ..RunConfig::default()
    };
    let grid = GridLevel::cubic(8).unwrap();
    let h = Homogenizer::new(grid, BaseMaterial::new(1e6, 0.3).unwrap(), HomogenizationConfig::default()).unwrap();
    let chain = voxhom::app::density_chain(&c);
    let expr = objective_expr(&c, 0);
    let rho = DensityField::new([8; 3], (0..512).map(|i| 0.2 + 0.6 * ((i * 37 % 101) as f64 / 101.0)).collect()).unwrap();
    let d = evaluate_design(&h, &chain, &expr, &rho, None).unwrap();
    let norm = d.gradient.dot(&d.gradient).sqrt();
    let step = 1e-3 / norm;
    let mut moved = rho.clone();
    for (m, g) in moved.values_mut().iter_mut().zip(d.gradient.values()) {
        *m -= step * g;
    }
    let after = evaluate_design(&h, &chain, &expr, &moved, None).unwrap();
    assert!(after.objective < d.objective);
}

#[test]
fn raw_export_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.raw");
    let f = DensityField::new([5, 6, 7], (0..210).map(|i| (i as f32 / 210.0 + 0.001) as f64).collect()).unwrap();
    io::write_raw(&f, &p).unwrap();
    let back = io::read_raw(&p, [5, 6, 7]).unwrap();
    assert_eq!(back, f);
    io::write_raw(&back, &p).unwrap();
    assert_eq!(std::fs::read(&p).unwrap().len(), 840);
}
