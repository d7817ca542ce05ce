//! Runs the numerical oracle battery: duality identity, optimal R^y, the
//! β → 0 gradient limit, energy descent and lateral update signs.

use csm::verify::{format_reports, run_battery, BatteryConfig};

fn main() -> csm::Result<()> {
    let reports = run_battery(&BatteryConfig::default())?;
    print!("{}", format_reports(&reports));
    let failed = reports.iter().filter(|r| !r.pass && !r.inconclusive).count();
    println!("{} checks, {failed} failed", reports.len());
    Ok(())
}
