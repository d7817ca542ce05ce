//! Linear supervised similarity matching on `z = A x`: prints the test MSE
//! curve every 10k steps and the final prediction correlation.

use csm::linear::{run_linear_demo, LinearDemoConfig};

fn main() -> csm::Result<()> {
    let report = run_linear_demo(&LinearDemoConfig::default())?;
    let mut curve = Vec::new();
    report.write_curve_csv(&mut curve)?;
    let curve = String::from_utf8_lossy(&curve);
    for (i, row) in curve.lines().enumerate() {
        if i == 0 || i % 10 == 0 {
            println!("{row}");
        }
    }
    println!(
        "MSE {:.3e} -> {:.3e}, correlation {:.5}",
        report.initial_mse(),
        report.final_mse(),
        report.correlation()
    );
    Ok(())
}
