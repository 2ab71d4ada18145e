//! Regenerate the committed golden files (flow and metadata layouts plus the
//! 27-sample reference dataset).
//!
//! `SOURCE_DATE_EPOCH=0 cargo run --release --example golden_files -- [dir]`

use std::path::PathBuf;

use turbsynth::reference;

fn main() -> turbsynth::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden"));
    let report = reference::write_all(&dir)?;
    println!("{:?}", report.manifest.category_counts);
    println!("dataset digest {}", turbsynth::pipeline::dataset_digest(&dir.join(reference::DATASET_DIR))?);
    println!("wrote {}", dir.display());
    Ok(())
}
