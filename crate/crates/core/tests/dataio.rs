use std::collections::HashSet;
use std::path::{Path, PathBuf};

use stratgrad::dataio::{
    fmt_f64, load_idx_pair, read_idx_images, read_idx_labels, read_series_csv, subsample, write_csv,
};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

#[test]
fn desk_fixture_is_stratified() {
    let ds = load_idx_pair(&data_dir(), "desk").unwrap();
    assert_eq!(ds.len(), 2000);
    assert_eq!(ds.dim(), 784);
    assert_eq!(ds.class_sizes(), vec![200; 10]);
    for i in 0..ds.len() {
        assert!(ds.features(i).iter().all(|x| (0.0..=1.0).contains(x)));
    }
    let mut seen: Vec<usize> = ds.class_index().iter().flatten().copied().collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..2000).collect::<Vec<_>>());
}

#[test]
fn desk_test_fixture_is_disjoint_from_training() {
    let train = read_idx_images(&data_dir().join("desk-images-idx3-ubyte.gz")).unwrap();
    let test = read_idx_images(&data_dir().join("desk-test-images-idx3-ubyte.gz")).unwrap();
    let labels = read_idx_labels(&data_dir().join("desk-test-labels-idx1-ubyte.gz")).unwrap();
    assert_eq!((test.count, test.rows, test.cols), (500, 28, 28));
    for c in 0..10u8 {
        assert_eq!(labels.iter().filter(|&&y| y == c).count(), 50);
    }
    let train_images: HashSet<&[u8]> = (0..train.count).map(|i| train.image(i)).collect();
    let shared = (0..test.count).filter(|&i| train_images.contains(test.image(i))).count();
    assert_eq!(shared, 0);
}

#[test]
fn pixels_scale_by_255() {
    let raw = read_idx_images(&data_dir().join("desk-images-idx3-ubyte.gz")).unwrap();
    let ds = load_idx_pair(&data_dir(), "desk").unwrap();
    for i in [0, 777, 1999] {
        for (x, &b) in ds.features(i).iter().zip(raw.image(i)) {
            assert_eq!(*x, b as f64 / 255.0);
        }
    }
}

#[test]
fn subsample_keeps_class_balance() {
    let ds = load_idx_pair(&data_dir(), "desk").unwrap();
    let a = subsample(&ds, 7, 3).unwrap();
    assert_eq!(a.class_sizes(), vec![7; 10]);
    assert_eq!(a.labels(), subsample(&ds, 7, 3).unwrap().labels());
    assert!(subsample(&ds, 201, 0).is_err());
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let series = vec![
        ("a".to_string(), vec![0.1, -1e-300, 3.0, f64::MAX]),
        ("b".to_string(), vec![1.0 / 3.0, 2.5e17, -0.0, 7.0]),
    ];
    write_csv(&path, &series).unwrap();
    let back = read_series_csv(&path).unwrap();
    assert_eq!(back.len(), 2);
    for ((n0, v0), (n1, v1)) in series.iter().zip(&back) {
        assert_eq!(n0, n1);
        assert_eq!(v0.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v1.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
    assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    assert!(!dir.path().join("s.csv.partial").exists());
}
