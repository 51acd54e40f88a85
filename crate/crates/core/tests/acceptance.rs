//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Monte Carlo criteria run at full size (10^6 draws) with seed 42.

use std::time::Instant;

use kmsprod::validate::{self, ValidationOptions};

fn main() {
    let opts = ValidationOptions { seed: 42, full: true };
    let mut reports = Vec::new();
    for id in 1..=9 {
        let t = Instant::now();
        let r = validate::run_criterion(id, &opts);
        println!("{}", r.line());
        for d in &r.details {
            println!("    {d}");
        }
        println!("    ({:.1} s)", t.elapsed().as_secs_f64());
        reports.push(r);
    }
    let r = validate::criterion_10(&opts, &reports).unwrap_or_else(|e| panic!("criterion 10: {e}"));
    println!("{}", r.line());
    reports.push(r);
    let failed: Vec<u32> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", reports.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
