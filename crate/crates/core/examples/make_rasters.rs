//! Writes the approximate junction and jog target rasters.
//!
//! ```text
//! cargo run --example make_rasters -- [DIR] [COLS] [ROWS]
//! ```
//!
//! Defaults: `data/`, 60 x 70 cells (the `[0, L] x [0, 7L/6]` aspect ratio).

use std::path::PathBuf;

use dsa_core::target::{jog_raster, junction_raster};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().map_or("data", String::as_str));
    let cols: usize = args.get(1).map_or(Ok(60), |s| s.parse())?;
    let rows: usize = args.get(2).map_or(Ok(70), |s| s.parse())?;
    std::fs::create_dir_all(&dir)?;
    for (name, raster) in [
        ("junction", junction_raster(cols, rows)?),
        ("jog", jog_raster(cols, rows)?),
    ] {
        let path = dir.join(format!("{name}.txt"));
        let header = format!("# approximate {name} target, {cols}x{rows} cells, top row first\n");
        std::fs::write(&path, header + &raster.to_text())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
