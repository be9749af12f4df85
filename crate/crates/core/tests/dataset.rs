mod common;

use std::fs;

use common::*;
use elacnn::dataset::{
    batches, load_batch, scan_directory, split_stratified, train_count, DatasetManifest, Entry, TensorCache,
};
use elacnn::ela::ElaConfig;
use elacnn::loss::Label;
use elacnn::Error;
use proptest::prelude::*;

#[test]
fn scan_labels_sorts_and_skips() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 3, 1);
    fs::create_dir_all(dir.path().join("Tp/nested")).unwrap();
    fs::copy(dir.path().join("Tp/tp_000.jpg"), dir.path().join("Tp/nested/deep.jpg")).unwrap();
    fs::write(dir.path().join("Au/notes.txt"), "not an image").unwrap();
    fs::write(dir.path().join("stray.jpg"), b"outside both classes").unwrap();

    let m = scan_directory(dir.path()).unwrap();
    assert_eq!((m.count(Label::Authentic), m.count(Label::Tampered)), (3, 4));
    let paths: Vec<_> = m.entries().iter().map(|e| e.path.clone()).collect();
    let mut sorted = paths.clone();
    sorted.sort();
    assert_eq!(paths, sorted);
    assert!(m.entries().iter().filter(|e| e.path.starts_with(dir.path().join("Tp"))).all(|e| e.label == Label::Tampered));
    assert_eq!(m.skipped().len(), 1);
    assert!(m.skipped()[0].path.ends_with("notes.txt"));

    let csv_path = dir.path().join("manifest.csv");
    m.write_csv(&csv_path).unwrap();
    let text = fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().next(), Some("path,label"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn scan_failures_are_ingestion_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(scan_directory(dir.path().join("missing")), Err(Error::Ingestion(_))));
    fs::create_dir_all(dir.path().join("Au")).unwrap();
    fs::create_dir_all(dir.path().join("Tp")).unwrap();
    assert!(matches!(scan_directory(dir.path()), Err(Error::Ingestion(_))));
}

#[test]
fn cache_is_transparent() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&dir.path().join("data"), 3, 2);
    let m = scan_directory(dir.path().join("data")).unwrap();
    let cfg = ElaConfig::default();
    let idx: Vec<usize> = (0..m.len()).collect();
    let cache = TensorCache::new(dir.path().join("cache"));
    let cold = load_batch(&m, &idx, &cfg, &cache).unwrap();
    assert_eq!(fs::read_dir(dir.path().join("cache")).unwrap().count(), m.len());
    let warm = load_batch(&m, &idx, &cfg, &cache).unwrap();
    let none = load_batch(&m, &idx, &cfg, &TensorCache::disabled()).unwrap();
    assert_eq!(cold.inputs.to_bits(), warm.inputs.to_bits());
    assert_eq!(cold.inputs.to_bits(), none.inputs.to_bits());
    assert_eq!(cold.inputs.dims(), [6, 128, 128, 3]);
    assert_eq!(cold.targets.data()[..2], Label::Authentic.one_hot());
    assert_eq!(cold.labels, m.entries().iter().map(|e| e.label).collect::<Vec<_>>());

    let other = ElaConfig::new(80, 128, 128).unwrap();
    let different = load_batch(&m, &idx[..1], &other, &cache).unwrap();
    assert_ne!(different.inputs.to_bits(), cold.inputs.to_bits()[..128 * 128 * 3]);
}

#[test]
fn corrupt_file_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 2, 3);
    let m = scan_directory(dir.path()).unwrap();
    let victim = dir.path().join("Au/au_001.jpg");
    let bytes = fs::read(&victim).unwrap();
    fs::write(&victim, &bytes[..bytes.len() / 3]).unwrap();
    let idx: Vec<usize> = (0..m.len()).collect();
    match load_batch(&m, &idx, &ElaConfig::default(), &TensorCache::disabled()) {
        Err(e @ Error::Decode { .. }) => assert!(e.to_string().contains("au_001.jpg"), "{e}"),
        other => panic!("expected a decode error, got {other:?}"),
    }
}

fn manifest(au: usize, tp: usize) -> DatasetManifest {
    let entry = |i: usize, label| Entry { path: format!("{i:04}.png").into(), label };
    let entries = (0..au).map(|i| entry(i, Label::Authentic)).chain((au..au + tp).map(|i| entry(i, Label::Tampered)));
    DatasetManifest::new("root", entries.collect())
}

proptest! {
    #[test]
    fn split_is_disjoint_complete_and_stratified(au in 2usize..60, tp in 2usize..60, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let m = manifest(au, tp);
        let s = split_stratified(&m, ratio, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..au + tp).collect::<Vec<_>>());
        for (label, n) in [(Label::Authentic, au), (Label::Tampered, tp)] {
            let in_train = s.train.iter().filter(|&&i| m.entries()[i].label == label).count();
            prop_assert_eq!(in_train, train_count(n, ratio));
            prop_assert!((in_train as f64 - ratio * n as f64).abs() <= 1.0);
            prop_assert!(in_train >= 1 && in_train < n);
        }
        prop_assert_eq!(&s, &split_stratified(&m, ratio, seed).unwrap());
    }

    #[test]
    fn batches_cover_each_index_once(n in 1usize..100, size in 1usize..40, seed in any::<u64>(), epoch in 0u64..50) {
        let idx: Vec<usize> = (0..n).map(|i| i * 3).collect();
        let b = batches(&idx, size, seed, epoch).unwrap();
        prop_assert!(b.iter().rev().skip(1).all(|x| x.len() == size));
        let mut flat: Vec<usize> = b.concat();
        prop_assert_eq!(&b, &batches(&idx, size, seed, epoch).unwrap());
        flat.sort_unstable();
        prop_assert_eq!(flat, idx);
    }
}
