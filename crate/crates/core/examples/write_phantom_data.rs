//! Regenerates the bundled phantom files under `data/phantom`.
//!
//! `cargo run -p swlidar --example write_phantom_data`
use std::path::Path;

use swlidar::io::*;
use swlidar::phantom::*;

fn main() -> swlidar::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/phantom");
    for bands in [1usize, 4] {
        let p = phantom::<f64>(bands)?;
        write_irf(&dir.join(format!("irf_l{bands}.txt")), &p.bank)?;
        write_reflectivity(&dir, &format!("truth_l{bands}"), &p.truth)?;
        write_depth(&dir.join("depth.txt"), &p.depth)?;
    }
    Ok(())
}
