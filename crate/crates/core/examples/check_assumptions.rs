//! Run the standing checks on `F` and `lambda` and print each verdict.

use mkv_neuro::dynamics::check_assumptions;
use mkv_neuro::ModelSpec;

fn main() -> mkv_neuro::Result<()> {
    let report = check_assumptions(&ModelSpec::fig2(), 10.0, (-30.0, 30.0), 4000)?;
    for c in &report.checks {
        println!("{:<28} {:?}  {}", c.name, c.verdict, c.evidence);
    }
    println!("all pass: {}", report.all_pass());
    Ok(())
}
