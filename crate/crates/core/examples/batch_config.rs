//! Runs a CLI experiment from an in-memory config, without writing files.

use macrodim::cli::{execute, Command, LoadedConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = LoadedConfig::parse(
        r#"{
  "experiment": "kolmogorov-demo",
  "seed": 4,
  "d_values": [2, 3],
  "generations": 80,
  "trials": 100000
}"#,
    )?;
    let out = execute(Command::Kolmogorov, &config)?;
    print!("{}", out.report.table());
    Ok(())
}
