use std::process::ExitCode;

use voxhom::app::{hs_bounds, parse_config, run_optimization};
use voxhom::objective::poisson_ratio_report;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cfg = match parse_config(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let report = match run_optimization(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let c = &report.tensor;
    println!("C^H:");
    for row in c.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>14.4}")).collect();
        println!("{}", cells.join(" "));
    }
    let bulk = (c.get(0, 0) + c.get(1, 1) + c.get(2, 2) + 2.0 * (c.get(0, 1) + c.get(0, 2) + c.get(1, 2))) / 9.0;
    let shear = (c.get(3, 3) + c.get(4, 4) + c.get(5, 5)) / 3.0;
    let (ku, gu) = hs_bounds(cfg.young, cfg.poisson, report.density.mean());
    println!("iterations: {}  converged: {}", report.records.len(), report.converged);
    println!("volume: {:.6}", report.density.mean());
    println!("poisson ratio: {:.4}", poisson_ratio_report(&c.0));
    println!("bulk: {bulk:.4}  ({:.4} of HS upper bound {ku:.4})", bulk / ku);
    println!("shear: {shear:.4}  ({:.4} of HS upper bound {gu:.4})", shear / gu);
    if let Some(mib) = report.peak_rss_mib {
        println!("peak resident set: {mib:.1} MiB (process RSS, not GPU memory)");
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    ExitCode::SUCCESS
}
