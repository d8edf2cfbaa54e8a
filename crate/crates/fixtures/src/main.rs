//! Regenerates the derived fixture tree from `fixtures/dataset`.
//!
//! Usage: `flowsmith-fixtures [ROOT]`, where ROOT defaults to the
//! repository's `fixtures/` directory.

use std::path::PathBuf;

fn main() -> anyhow::Result<()> {
    let root = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(flowsmith_fixtures::fixtures_dir);
    let written = flowsmith_fixtures::generate(&root)?;
    println!("wrote {written} files under {}", root.display());
    Ok(())
}
