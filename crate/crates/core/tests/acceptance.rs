//! Release gate: runs every acceptance check, prints one line per check and
//! exits non-zero if any check fails.

use defect_fcs::harness::acceptance::all_criteria;

fn main() {
    let mut failed = Vec::new();
    for check in all_criteria() {
        let report = check();
        println!("{}", report.summary_line());
        if !report.pass {
            failed.push(format!("{} {}", report.id, report.name));
        }
    }
    if failed.is_empty() {
        println!("acceptance: all checks passed");
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
