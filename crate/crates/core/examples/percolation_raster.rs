//! Samples Π_p in d = 2, prints the survivors per shell and writes a PGM raster.
//!
//! `cargo run --example percolation_raster -- [p] [K] [seed]`

use macrodim::percolation::PercolationField;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let p: f64 = args.first().map_or(Ok(0.7), |s| s.parse())?;
    let big_k: u32 = args.get(1).map_or(Ok(7), |s| s.parse())?;
    let seed: u64 = args.get(2).map_or(Ok(1), |s| s.parse())?;

    let field = PercolationField::new(seed, 2)?;
    for k in 0..=big_k {
        let cells = field.survivor_cells(p, k, 1 << 20)?;
        println!("shell {k:2}: {:6} surviving cells", cells.len());
    }
    let pgm = field.raster2d(p, big_k)?;
    let path = std::env::temp_dir().join(format!("percolation_p{p}_K{big_k}.pgm"));
    std::fs::write(&path, pgm)?;
    println!("raster written to {}", path.display());
    Ok(())
}
