mod common;

use std::collections::BTreeSet;
use std::fs;

use sea_core::dataset::{
    load_cache, load_cora, load_cora_with_stats, make_split, save_cache, synthetic_blobs, Split, SplitStrategy,
};
use sea_core::SeaError;
use tempfile::tempdir;

fn write(dir: &std::path::Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const CONTENT: &str = "31\t0\t1\t0\tTheory\n\
                       12\t1\t0\t0\tCase_Based\n\
                       7\t0\t0\t1\tTheory\n";

#[test]
fn reciprocal_citation_is_one_edge() {
    let dir = tempdir().unwrap();
    let content = write(dir.path(), "c.content", CONTENT);
    let cites = write(dir.path(), "c.cites", "31\t12\n12\t31\n");
    let (data, stats) = load_cora_with_stats(&content, &cites).unwrap();
    assert_eq!(data.graph.edge_pairs(), vec![(0, 1)]);
    assert_eq!(data.graph.weight(0, 1), Some(1.0));
    assert_eq!(stats.raw_citations, 2);
    assert_eq!(stats.merged_citations, 1);
    assert_eq!(stats.edges, 1);
}

#[test]
fn labels_follow_sorted_class_names() {
    let dir = tempdir().unwrap();
    let content = write(dir.path(), "c.content", CONTENT);
    let cites = write(dir.path(), "c.cites", "31\t7\n");
    let data = load_cora(&content, &cites).unwrap();
    assert_eq!(data.class_names, vec!["Case_Based", "Theory"]);
    assert_eq!(data.labels, vec![1, 0, 1]);
    assert_eq!(data.num_classes, 2);
    assert_eq!(data.features.d(), 3);
    assert_eq!(data.features.row(1).to_vec(), vec![1.0, 0.0, 0.0]);
}

#[test]
fn self_and_unknown_citations_dropped_and_counted() {
    let dir = tempdir().unwrap();
    let content = write(dir.path(), "c.content", CONTENT);
    let cites = write(dir.path(), "c.cites", "31\t31\n99\t7\n7\t12\n7\t404\n");
    let (data, stats) = load_cora_with_stats(&content, &cites).unwrap();
    assert_eq!(stats.self_citations, 1);
    assert_eq!(stats.unknown_citations, 2);
    assert_eq!(stats.edges, 1);
    assert_eq!(data.graph.edge_pairs(), vec![(1, 2)]);
}

#[test]
fn malformed_rows_report_file_and_line() {
    let dir = tempdir().unwrap();
    let cites = write(dir.path(), "ok.cites", "31\t12\n");
    let ragged = write(dir.path(), "ragged.content", "31\t0\t1\t0\tTheory\n12\t1\t0\tTheory\n");
    match load_cora(&ragged, &cites) {
        Err(SeaError::MalformedRow { path, line, .. }) => {
            assert_eq!(path, ragged);
            assert_eq!(line, 2);
        }
        other => panic!("{other:?}"),
    }
    let bad_value = write(dir.path(), "nan.content", "31\t0\tx\t0\tTheory\n");
    assert!(matches!(load_cora(&bad_value, &cites), Err(SeaError::MalformedRow { line: 1, .. })));

    let content = write(dir.path(), "c.content", CONTENT);
    let bad_cites = write(dir.path(), "bad.cites", "31\t12\n\n7\t12\t31\n");
    match load_cora(&content, &bad_cites) {
        Err(SeaError::MalformedRow { path, line, .. }) => {
            assert_eq!(path, bad_cites);
            assert_eq!(line, 3);
        }
        other => panic!("{other:?}"),
    }
    let missing = dir.path().join("absent.content");
    assert!(matches!(load_cora(&missing, &cites), Err(SeaError::Io { .. })));
}

#[test]
fn loaded_graph_matches_line_level_dedup() {
    let dir = tempdir().unwrap();
    let fx = common::cora_files::write(dir.path(), 90, 30, 5);
    let (data, stats) = load_cora_with_stats(&fx.content, &fx.cites).unwrap();
    assert_eq!((data.n(), data.features.d(), data.num_classes), (fx.n, fx.d, 3));

    // Oracle: unordered id pairs straight from the text, self pairs removed.
    let text = fs::read_to_string(&fx.cites).unwrap();
    let pairs: BTreeSet<(String, String)> = text
        .lines()
        .filter_map(|l| {
            let mut it = l.split('\t');
            let (a, b) = (it.next()?.to_string(), it.next()?.to_string());
            (a != b).then(|| if a < b { (a, b) } else { (b, a) })
        })
        .collect();
    assert_eq!(data.graph.num_edges(), pairs.len());
    assert_eq!(stats.edges, pairs.len());
    assert_eq!(stats.raw_citations, text.lines().count());
    assert_eq!(
        stats.raw_citations,
        stats.edges + stats.merged_citations + stats.self_citations + stats.unknown_citations
    );
    assert!(data.graph.edges().iter().all(|e| e.p < e.q && e.w == 1.0));
}

#[test]
fn loader_is_deterministic() {
    let dir = tempdir().unwrap();
    let fx = common::cora_files::write(dir.path(), 60, 20, 6);
    let a = load_cora(&fx.content, &fx.cites).unwrap();
    let b = load_cora(&fx.content, &fx.cites).unwrap();
    assert_eq!(a, b);
    let (pa, pb) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    save_cache(&a, &pa).unwrap();
    save_cache(&b, &pb).unwrap();
    assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
}

fn balanced_labels(n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|i| i % classes).collect()
}

fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&m| m).count()
}

#[test]
fn random_split_sizes() {
    let labels = balanced_labels(100, 4);
    let s = make_split(100, &labels, SplitStrategy::Random { train: 0.6, val: 0.2 }, 1).unwrap();
    assert_eq!((count(&s.train), count(&s.val), count(&s.test)), (60, 20, 20));
    s.validate(100).unwrap();
}

#[test]
fn split_seeding() {
    let labels = balanced_labels(100, 4);
    let strategy = SplitStrategy::default();
    let a = make_split(100, &labels, strategy, 3).unwrap();
    let b = make_split(100, &labels, strategy, 3).unwrap();
    let c = make_split(100, &labels, strategy, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn split_is_stratified() {
    let mut r = common::rng(8);
    use rand::Rng;
    let labels: Vec<usize> = (0..257).map(|_| r.random_range(0..5)).collect();
    let (train, val) = (0.6, 0.2);
    let s = make_split(labels.len(), &labels, SplitStrategy::Random { train, val }, 9).unwrap();
    for c in 0..5 {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let in_train = members.iter().filter(|&&i| s.train[i]).count() as f64;
        let in_val = members.iter().filter(|&&i| s.val[i]).count() as f64;
        let size = members.len() as f64;
        assert!((in_train - train * size).abs() <= 1.0, "class {c}: {in_train} of {size}");
        assert!((in_val - val * size).abs() <= 1.0, "class {c}: {in_val} of {size}");
        assert!(members.iter().all(|&i| s.train[i] || s.val[i] || s.test[i]));
    }
}

#[test]
fn planetoid_split() {
    let n = 1700;
    let labels = balanced_labels(n, 7);
    let s = make_split(n, &labels, SplitStrategy::Planetoid, 0).unwrap();
    assert_eq!((count(&s.train), count(&s.val), count(&s.test)), (140, 500, 1000));
    for c in 0..7 {
        let first: Vec<usize> = (0..n).filter(|&i| labels[i] == c).take(20).collect();
        assert!(first.iter().all(|&i| s.train[i]));
    }
    assert!(s.test[n - 1] && s.test[n - 1000]);
    assert!(!s.test[n - 1001]);
    s.validate(n).unwrap();
}

#[test]
fn small_classes_rejected() {
    let mut labels = balanced_labels(1600, 7);
    let keep = labels.iter().position(|&l| l == 6).unwrap();
    for (i, l) in labels.iter_mut().enumerate() {
        if *l == 6 && i != keep {
            *l = 0;
        }
    }
    assert!(matches!(
        make_split(1600, &labels, SplitStrategy::Planetoid, 0),
        Err(SeaError::ClassTooSmall { class: 6, available: 1, needed: 20 })
    ));
    assert!(matches!(
        make_split(1600, &labels, SplitStrategy::default(), 0),
        Err(SeaError::ClassTooSmall { class: 6, .. })
    ));
    assert!(make_split(10, &balanced_labels(10, 2), SplitStrategy::Random { train: 0.8, val: 0.2 }, 0).is_err());
}

#[test]
fn blobs_without_noise_have_no_cross_class_edges() {
    let data = synthetic_blobs(60, 4, 3, 0.0, 11).unwrap();
    assert!(data.graph.num_edges() > 0);
    for e in data.graph.edges() {
        assert_eq!(data.labels[e.p], data.labels[e.q], "edge {:?}", e.pair());
    }
}

#[test]
fn blob_labels_are_balanced() {
    let data = synthetic_blobs(301, 6, 4, 0.5, 2).unwrap();
    let sizes: Vec<usize> = (0..4).map(|c| data.labels.iter().filter(|&&l| l == c).count()).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
    assert_eq!(sizes.iter().sum::<usize>(), 301);
    data.split.validate(301).unwrap();
    assert_eq!(synthetic_blobs(301, 6, 4, 0.5, 2).unwrap(), data);
    assert!(synthetic_blobs(2, 3, 3, 0.1, 0).is_err());
}

#[test]
fn cache_round_trips() {
    let dir = tempdir().unwrap();
    let data = synthetic_blobs(50, 3, 2, 0.3, 4).unwrap();
    let data = data.with_graph(data.graph.reweighted(&data.graph.edge_pairs()[..3], 2.5).unwrap()).unwrap();
    let path = dir.path().join("blobs.bin");
    save_cache(&data, &path).unwrap();
    assert_eq!(load_cache(&path).unwrap(), data);
}

#[test]
fn corrupted_cache_detected() {
    let dir = tempdir().unwrap();
    let data = synthetic_blobs(40, 3, 2, 0.3, 4).unwrap();
    let path = dir.path().join("blobs.bin");
    save_cache(&data, &path).unwrap();
    let clean = fs::read(&path).unwrap();

    let mut flipped = clean.clone();
    let last = flipped.len() - 1;
    flipped[last] ^= 1;
    fs::write(&path, &flipped).unwrap();
    assert!(matches!(load_cache(&path), Err(SeaError::Cache(_))));

    fs::write(&path, &clean[..clean.len() - 10]).unwrap();
    assert!(matches!(load_cache(&path), Err(SeaError::Cache(_))));

    let mut wrong_magic = clean.clone();
    wrong_magic[0] = b'X';
    fs::write(&path, &wrong_magic).unwrap();
    assert!(matches!(load_cache(&path), Err(SeaError::Cache(_))));
}

#[test]
fn overlapping_masks_rejected_by_dataset() {
    let data = synthetic_blobs(20, 2, 2, 0.1, 0).unwrap();
    let mut split = Split::empty(20);
    split.train[3] = true;
    split.val[3] = true;
    assert!(matches!(data.with_split(split), Err(SeaError::InvalidSplit(_))));
}
