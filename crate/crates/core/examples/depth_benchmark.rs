//! A small depth sweep through the library API, printed as CSV plus a
//! summary.

use caltrace::bench::{self, Experiment, ExperimentSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ExperimentSpec {
        levels: vec![5, 10, 20],
        iterations: 50,
        warmup: 10,
        ..ExperimentSpec::defaults(Experiment::Depth)
    };
    let rows = bench::run_depth_experiment(&spec)?;
    let mut csv = Vec::new();
    bench::write_csv(&rows[..3], &mut csv)?;
    print!("{}", String::from_utf8(csv)?);
    println!("... {} rows", rows.len());

    let summary = bench::summarize(&rows);
    for p in &summary.points {
        println!(
            "{:<8} levels {:>2}: median {:>8.0}ns  p95 {:>8}ns",
            p.model.as_str(),
            p.point.levels,
            p.median_ns,
            p.p95_ns
        );
    }
    for s in &summary.speedups {
        println!(
            "levels {:>2}: unified/baseline {:.2}",
            s.point.levels, s.ratio
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
