use std::collections::BTreeMap;
use std::fs;

use scpgcn::dataio::{format_matrix, load_dataset, parse_matrix, read_matrix, save_dataset, DataError, MANIFEST_FILE};
use scpgcn_core::graph::NetworkInstance;
use scpgcn_core::synthdata::{generate_dataset, GeneratorConfig};
use scpgcn_core::Matrix;

fn small() -> Vec<NetworkInstance> {
    let cfg = GeneratorConfig { n: 12, communities: 3, per_class: 3, seed: 5, ..Default::default() };
    generate_dataset(&cfg).unwrap().instances
}

#[test]
fn round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = small();
    let manifest = save_dataset(&data, dir.path(), BTreeMap::new()).unwrap();
    let loaded = load_dataset(&manifest).unwrap();
    assert_eq!(loaded, data);
}

#[test]
fn one_instance_gives_two_files_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = small();
    save_dataset(&data[..1], dir.path(), BTreeMap::new()).unwrap();
    let mut names: Vec<String> =
        fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "subject-000_functional.txt", "subject-000_structural.txt"]);
    let text = fs::read_to_string(dir.path().join("subject-000_structural.txt")).unwrap();
    assert_eq!(text.lines().count(), 12);
}

#[test]
fn values_carry_at_least_fifteen_significant_digits() {
    let m = Matrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![1.0 / 3.0, 0.5]]).unwrap();
    let text = format_matrix(&m);
    for tok in text.split_whitespace() {
        let mantissa = tok.split('e').next().unwrap();
        let digits = mantissa.chars().filter(char::is_ascii_digit).count();
        assert!(digits >= 15, "{tok}");
    }
    assert_eq!(parse_matrix(&text, "x".as_ref()).unwrap(), m);
}

#[test]
fn resaving_a_loaded_dataset_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let manifest = save_dataset(&small(), a.path(), BTreeMap::new()).unwrap();
    save_dataset(&load_dataset(&manifest).unwrap(), b.path(), BTreeMap::new()).unwrap();
    for entry in fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
}

fn write_manifest(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
    let p = dir.join(MANIFEST_FILE);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn mismatched_view_sizes_name_the_instance() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.txt"), format_matrix(&Matrix::zeros(4, 4))).unwrap();
    fs::write(dir.path().join("f.txt"), format_matrix(&Matrix::identity(5))).unwrap();
    let m = write_manifest(
        dir.path(),
        r#"{"records":[{"id":"odd","structural_path":"s.txt","functional_path":"f.txt","label":0}],"n":4}"#,
    );
    let err = load_dataset(&m).unwrap_err();
    match &err {
        DataError::Instance { id, file, .. } => {
            assert_eq!(id, "odd");
            assert!(file.ends_with("f.txt"));
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert!(err.to_string().contains("odd"));
}

#[test]
fn duplicate_ids_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let rec = r#"{"id":"a","structural_path":"s.txt","functional_path":"f.txt","label":0}"#;
    let m = write_manifest(dir.path(), &format!(r#"{{"records":[{rec},{rec}],"n":2}}"#));
    assert!(matches!(load_dataset(&m), Err(DataError::DuplicateId(id)) if id == "a"));
}

#[test]
fn missing_file_reported_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(
        dir.path(),
        r#"{"records":[{"id":"x","structural_path":"nope.txt","functional_path":"f.txt","label":1}],"n":2}"#,
    );
    let err = load_dataset(&m).unwrap_err().to_string();
    assert!(err.contains("nope.txt") && err.contains('x'), "{err}");
}

#[test]
fn asymmetric_input_is_symmetrized() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("f.txt"), format_matrix(&Matrix::identity(2))).unwrap();
    let m = write_manifest(
        dir.path(),
        r#"{"records":[{"id":"a","structural_path":"s.txt","functional_path":"f.txt","label":0}],"n":2}"#,
    );
    // Within tolerance, and far beyond it (the latter with a warning).
    for (upper, lower) in [(0.5, 0.5 + 1e-12), (0.5, 0.7)] {
        let s = Matrix::from_rows(&[vec![0.0, upper], vec![lower, 0.0]]).unwrap();
        fs::write(dir.path().join("s.txt"), format_matrix(&s)).unwrap();
        let loaded = load_dataset(&m).unwrap();
        let st = loaded[0].structural();
        assert_eq!(st[(0, 1)], st[(1, 0)]);
        assert_eq!(st[(0, 1)], (upper + lower) / 2.0);
    }
}

#[test]
fn out_of_range_functional_value_names_the_functional_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.txt"), format_matrix(&Matrix::zeros(2, 2))).unwrap();
    let f = Matrix::from_rows(&[vec![1.0, 1.5], vec![1.5, 1.0]]).unwrap();
    fs::write(dir.path().join("f.txt"), format_matrix(&f)).unwrap();
    let m = write_manifest(
        dir.path(),
        r#"{"records":[{"id":"a","structural_path":"s.txt","functional_path":"f.txt","label":0}],"n":2}"#,
    );
    assert!(matches!(load_dataset(&m), Err(DataError::Instance { file, .. }) if file.ends_with("f.txt")));
}

#[test]
fn ragged_rows_and_bad_tokens_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.txt");
    fs::write(&p, "1 2\n3\n").unwrap();
    assert!(matches!(read_matrix(&p), Err(DataError::Parse { line: 2, .. })));
    fs::write(&p, "1 x\n").unwrap();
    assert!(matches!(read_matrix(&p), Err(DataError::Parse { line: 1, .. })));
}

#[test]
fn unknown_manifest_fields_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), r#"{"records":[],"n":2,"extra":1}"#);
    assert!(matches!(load_dataset(&m), Err(DataError::Manifest { .. })));
}
