//! Builds grid connectivity for a cropped 20×20 input and shows how many
//! connections each layer keeps, then dumps the first lines of the COO file.

use csm::structured::{build_grid_masks, density, parse_grid_spec};

fn main() -> csm::Result<()> {
    let spec = std::env::args().nth(1).unwrap_or_else(|| "4:2:4".into());
    let grid = build_grid_masks(20, &parse_grid_spec(&spec)?, 10)?;
    println!("grid {spec}: layer sizes {:?}", grid.sizes);
    for (p, (ff, lat)) in grid.masks.connection_counts().into_iter().enumerate() {
        let full = grid.sizes[p] * grid.sizes[p + 1];
        println!("layer {}: {ff} of {full} feedforward, {lat} lateral", p + 1);
    }
    let d: Vec<String> = density(&grid.masks).iter().map(|f| format!("{f:.3}")).collect();
    println!("feedforward density per layer: {}", d.join(" "));
    for line in grid.masks.to_coo_string().lines().take(5) {
        println!("{line}");
    }
    Ok(())
}
