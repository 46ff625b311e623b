//! Writes the synthetic dataset used by the bundled `data/` directory.
//!
//! cargo run -p ssdim-core --example generate_dataset -- data/

use std::path::PathBuf;

use ssdim_core::synthetic::{write_bundle, SyntheticOptions};

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"));
    if let Err(e) = write_bundle(&dir, &SyntheticOptions::default()) {
        eprintln!("cannot write {}: {e}", dir.display());
        std::process::exit(1);
    }
    println!("wrote synthetic dataset to {}", dir.display());
}
