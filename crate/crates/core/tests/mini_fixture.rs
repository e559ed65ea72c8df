use std::io::BufReader;
use std::path::PathBuf;

use nextpoi_core::ingest::{ingest, FieldOrder};
use nextpoi_core::store::{dataset_digest, read_dataset, read_json};
use nextpoi_core::synthetic::{generate, ingest_config, Manifest, SyntheticConfig, MANIFEST_FILE, RAW_FILE};

fn mini() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini")
}

#[test]
fn shipped_fixture_is_the_seed_1_generation() {
    let manifest: Manifest = read_json(&mini().join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.config, SyntheticConfig::default());
    let fresh = generate(&manifest.config).unwrap();
    assert_eq!(fresh.manifest, manifest);
    assert_eq!(std::fs::read_to_string(mini().join(RAW_FILE)).unwrap(), fresh.tsv);

    let shipped = read_dataset(&mini()).unwrap();
    let out = ingest(BufReader::new(fresh.tsv.as_bytes()), &FieldOrder::FOURSQUARE, &ingest_config(&manifest.config)).unwrap();
    assert_eq!(out.stats, manifest.stats);
    assert_eq!(dataset_digest(&out.dataset), dataset_digest(&shipped));
    assert_eq!(out.dataset, shipped);
}
