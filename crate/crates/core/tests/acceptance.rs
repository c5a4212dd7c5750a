//! Runs every acceptance criterion at its stated tolerance.

use porovisco::verify::{run_criterion, VerifyOptions};

#[test]
fn acceptance_suite() {
    let opts = VerifyOptions::default();
    let mut failed = Vec::new();
    for id in 1..=12u8 {
        let r = run_criterion(id, &opts);
        println!("{}", r.summary_line());
        for m in &r.measurements {
            println!("    {:<44} {:>14.6e}  {}", m.name, m.value, m.threshold);
        }
        for n in &r.notes {
            println!("    note: {n}");
        }
        if !r.passed {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
