//! Regenerates the bundled Marmousi-like grids.

use probekit::assets::{generate_marmousi, ASSET_N};
use probekit::grid::{write_grid, write_pgm};

fn main() -> probekit::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    std::fs::create_dir_all(&dir)?;
    let (background, reflectivity) = generate_marmousi(ASSET_N);
    write_grid(dir.join(format!("marmousi_smooth_{ASSET_N}.pkgrid")), &background)?;
    write_grid(dir.join(format!("marmousi_reflectivity_{ASSET_N}.pkgrid")), &reflectivity)?;
    if std::env::args().any(|a| a == "--pgm") {
        write_pgm(dir.join("marmousi_smooth.pgm"), &background)?;
        write_pgm(dir.join("marmousi_reflectivity.pgm"), &reflectivity)?;
    }
    println!("speed range {:.3}..{:.3}", background.min(), background.max());
    Ok(())
}
