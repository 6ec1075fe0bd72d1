//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs every criterion in sequence; pass criterion numbers as arguments
//! (`cargo test --release --test acceptance -- 4 6`) to run a subset.

use std::process::ExitCode;

use abc_smc2_cli::validate::{find_suite, run_suite};

const CRITERIA: [(u32, &str, &str); 10] = [
    (1, "calibration coverage", "calibration"),
    (2, "unbiasedness on the toy model", "unbiasedness"),
    (3, "consistency in N_theta", "consistency"),
    (4, "skew-normal example", "skew-normal"),
    (5, "Gaussian SV against grid reference", "sv-grid"),
    (6, "stable sampler", "stable"),
    (7, "Hawkes simulator", "hawkes-sim"),
    (8, "Hawkes inference", "hawkes-inference"),
    (9, "rejuvenation invariance", "rejuvenation"),
    (10, "determinism", "determinism"),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (n, title, suite) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let records = run_suite(find_suite(suite).expect("suite exists"));
        let pass = records.iter().all(|r| r.pass);
        let seconds = records.last().map_or(0.0, |r| r.statistic);
        println!("criterion {n:>2} {title}: {} ({seconds:.1} s)", if pass { "PASS" } else { "FAIL" });
        for r in &records {
            println!(
                "    {} {}: {} (need {}) {}",
                if r.pass { "ok  " } else { "FAIL" },
                r.check,
                r.statistic,
                r.criterion,
                r.detail
            );
        }
        if !pass {
            failures += 1;
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
