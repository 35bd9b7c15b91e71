use std::fs;

use edgedp::netgen::{generate, GeneratorSpec};
use edgedp::{indices, io, verify, Error, Exec};
use sha2::{Digest, Sha256};

fn edge_digest(g: &edgedp::LabeledGraph) -> [u8; 32] {
    let mut h = Sha256::new();
    for (u, v, w) in g.edges() {
        h.update((u as u64).to_le_bytes());
        h.update((v as u64).to_le_bytes());
        h.update(w.to_bits().to_le_bytes());
    }
    h.finalize().into()
}

#[test]
fn hundred_thousand_node_round_trip() {
    let spec = GeneratorSpec::Sbm2 {
        n: 100_000,
        p_within: 12.0 / 100_000.0,
        p_between: 4.0 / 100_000.0,
        frac_a: 0.3,
    };
    let g = generate(&spec, 2024, Exec::default())
        .unwrap()
        .with_cell("left", (0..50_000).collect())
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = io::save(&g, &dir.path().join("big")).unwrap();
    let back = io::ingest(&paths.edges, paths.labels.as_deref(), paths.cells.as_deref()).unwrap();
    assert_eq!(back.node_count(), 100_000);
    assert_eq!(back.edge_count(), g.edge_count());
    assert_eq!(edge_digest(&back), edge_digest(&g));
    assert_eq!(back, g);
    assert_eq!(
        indices::cross_connectedness(&back, None).unwrap().value,
        indices::cross_connectedness(&g, None).unwrap().value
    );
}

#[test]
fn worked_example_survives_disk() {
    let g = verify::worked_example_graph();
    let dir = tempfile::tempdir().unwrap();
    let paths = io::save(&g, &dir.path().join("fig")).unwrap();
    let back = io::ingest(&paths.edges, paths.labels.as_deref(), None).unwrap();
    assert_eq!(indices::cross_connectedness(&back, None).unwrap().value, 7.0 / 12.0);
}

#[test]
fn missing_label_names_the_node() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("g.edges");
    let labels = dir.path().join("g.labels");
    fs::write(&edges, "0 1\n1 2\n2 3\n").unwrap();
    fs::write(&labels, "0 a\n1 b\n3 a\n").unwrap();
    match io::ingest(&edges, Some(&labels), None) {
        Err(Error::MissingNodeLabel { node }) => assert_eq!(node, 2),
        other => panic!("expected a missing-label error, got {other:?}"),
    }
}

#[test]
fn malformed_lines_report_position() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("bad.edges");
    fs::write(&edges, "0 1\n1 x\n").unwrap();
    let msg = io::ingest(&edges, None, None).unwrap_err().to_string();
    assert!(msg.contains("bad.edges:2"), "{msg}");
}
