//! Finite-difference check of every layer gradient and of the full
//! training chain on the micro model.
//!
//! cargo run --release --example gradient_check -- [seeds]

use dctcrn::gradcheck::{run_suite, TOLERANCE};

fn main() {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20);
    let report = run_suite(0..seeds);
    let mut names: Vec<&str> = report.results.iter().map(|r| r.name.as_str()).collect();
    names.dedup();
    names.sort();
    names.dedup();
    for name in names {
        let worst = report
            .results
            .iter()
            .filter(|r| r.name == name)
            .map(|r| r.max_rel_err)
            .fold(0.0, f64::max);
        println!("{name:<16} worst_rel_err={worst:.2e}");
    }
    let w = report.worst().expect("at least one seed");
    println!(
        "worst={:.3e} check={} seed={}",
        w.max_rel_err, w.name, w.seed
    );
    println!("passed={}", report.passed(TOLERANCE));
}
