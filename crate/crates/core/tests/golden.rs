mod common;

use std::path::PathBuf;

use turbsynth::pipeline::{dataset_digest, validate_dataset};
use turbsynth::{categorize_strength, io, reference};

fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn flow_layout_matches_golden_bytes() {
    let bytes = std::fs::read(golden().join(reference::LAYOUT_FLOW_FILE)).unwrap();
    assert_eq!(io::encode_flow(&reference::layout_flow()).unwrap(), bytes);
    assert_eq!(&bytes[..4], b"D2FL");
    assert_eq!(&bytes[20..24], &[0x00, 0x00, 0xC0, 0x3F]);
    assert_eq!(io::decode_flow(&bytes).unwrap(), reference::layout_flow());
}

#[test]
fn metadata_layout_matches_golden_bytes() {
    let text = std::fs::read_to_string(golden().join(reference::LAYOUT_META_FILE)).unwrap();
    assert_eq!(reference::layout_metadata().to_json().unwrap(), text);
    assert_eq!(io::read_metadata(golden().join(reference::LAYOUT_META_FILE)).unwrap(), reference::layout_metadata());
}

#[test]
fn reference_dataset_is_valid_and_balanced() {
    let root = golden().join(reference::DATASET_DIR);
    let report = validate_dataset(&root, 1).unwrap();
    assert!(report.ok(), "{:?}", report.problems);
    assert_eq!(report.samples_checked, reference::DATASET_SAMPLES);
    let mut counts = std::collections::BTreeMap::new();
    for entry in std::fs::read_dir(&root).unwrap() {
        let dir = entry.unwrap().path();
        if !dir.is_dir() {
            continue;
        }
        let meta = io::read_metadata(dir.join("meta.json")).unwrap();
        assert_eq!(meta.category, categorize_strength(meta.d_over_r0).unwrap());
        *counts.entry(meta.category.to_string()).or_insert(0) += 1;
        let bytes = std::fs::read(dir.join("flow_bwd.d2fl")).unwrap();
        assert_eq!(io::encode_flow(&io::decode_flow(&bytes).unwrap()).unwrap(), bytes);
    }
    assert_eq!(counts.values().copied().collect::<Vec<_>>(), vec![9, 9, 9]);
}

#[test]
fn regenerated_reference_matches_committed_tree() {
    let fresh = tempfile::tempdir().unwrap();
    reference::write_all(fresh.path()).unwrap();
    let sub = reference::DATASET_DIR;
    assert_eq!(
        dataset_digest(&fresh.path().join(sub)).unwrap(),
        dataset_digest(&golden().join(sub)).unwrap()
    );
    let strip = |files: Vec<(String, Vec<u8>)>| -> Vec<(String, Vec<u8>)> {
        files.into_iter().filter(|(name, _)| !name.ends_with("manifest.json")).collect()
    };
    assert!(strip(common::tree_files(fresh.path())) == strip(common::tree_files(&golden())));
}
