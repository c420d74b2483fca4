mod common;

use common::*;
use eigengame::data_io::{load_edges, load_labels, load_matrix, save_edges, save_labels, save_matrix};
use eigengame::graph::EdgeList;
use eigengame::Error;

#[test]
fn matrices_round_trip_through_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = test_rng(1);
    let m = gaussian_mat(&mut rng, 7, 3);
    let bin = dir.path().join("m.egm");
    save_matrix(&bin, &m).unwrap();
    assert_eq!(load_matrix(&bin).unwrap(), m);
    let first = std::fs::read(&bin).unwrap();
    save_matrix(&bin, &load_matrix(&bin).unwrap()).unwrap();
    assert_eq!(std::fs::read(&bin).unwrap(), first);

    let csv = dir.path().join("m.csv");
    save_matrix(&csv, &m).unwrap();
    let back = load_matrix(&csv).unwrap();
    for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
        assert!((a - b).abs() <= 1e-15 * b.abs());
    }
}

#[test]
fn corrupt_files_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.egm");
    std::fs::write(&bad, b"EGM2\0\0\0\0").unwrap();
    assert!(matches!(load_matrix(&bad), Err(Error::Parse { .. })));
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "1,2\n3,x\n").unwrap();
    assert!(matches!(load_matrix(&csv), Err(Error::Parse { .. })));
    assert!(matches!(load_matrix(dir.path().join("missing.egm")), Err(Error::Io(_))));
}

#[test]
fn edges_and_labels_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = EdgeList::new(vec![(0, 1), (2, 3)], 6).unwrap();
    let path = dir.path().join("g.edges");
    save_edges(&path, &g).unwrap();
    assert_eq!(load_edges(&path).unwrap(), g);
    let labels = dir.path().join("labels.csv");
    save_labels(&labels, &[0, 1, 1, 0]).unwrap();
    assert_eq!(load_labels(&labels).unwrap(), vec![0, 1, 1, 0]);
}
