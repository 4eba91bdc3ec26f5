use std::path::Path;

use latentmv_core::data::{generate, Month, SyntheticSpec};

use crate::output::{sha256_hex, write_atomic};
use crate::Failure;

pub struct SynthArgs<'a> {
    pub assets: usize,
    pub dates: usize,
    pub k: usize,
    pub noise: f64,
    pub start: Month,
    pub seed: u64,
    pub out: &'a Path,
    pub factors_out: Option<&'a Path>,
}

/// Generate a synthetic panel (and optionally its factor series) and print
/// the SHA-256 of every file written.
pub fn run(args: &SynthArgs) -> Result<(), Failure> {
    let mut spec = SyntheticSpec::new(args.assets, args.dates, args.k, args.noise, args.seed);
    spec.start = args.start;
    let syn = generate(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut panel = Vec::new();
    syn.panel.write_csv(&mut panel).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_atomic(args.out, &panel)?;
    println!("{}  {}", sha256_hex(&panel), args.out.display());
    if let Some(path) = args.factors_out {
        let mut factors = Vec::new();
        syn.factors.write_csv(&mut factors).map_err(|e| Failure::Runtime(e.to_string()))?;
        write_atomic(path, &factors)?;
        println!("{}  {}", sha256_hex(&factors), path.display());
    }
    Ok(())
}
