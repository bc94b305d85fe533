//! Runs the full acceptance battery and prints one line per criterion.
//!
//! Exits nonzero if any criterion fails. Set `BIFREE_CRITERIA=3,7` to run a
//! subset.

use std::process::ExitCode;

use bifree::battery::{Battery, CRITERIA};

fn main() -> ExitCode {
    let selected: Vec<u8> = match std::env::var("BIFREE_CRITERIA") {
        Ok(list) => list.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
        Err(_) => CRITERIA.iter().map(|(id, _)| *id).collect(),
    };
    let battery = Battery::default();
    let mut failed = Vec::new();
    for id in selected {
        match battery.run(id) {
            Ok(result) => {
                println!("{result}");
                if !result.passed {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("criterion {id:>2} [FAIL] {e}");
                failed.push(id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
