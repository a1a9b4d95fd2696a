use std::fs;
use std::path::{Path, PathBuf};

use gomk::data::{load_node_dataset, load_tudataset, kfold_splits, Split};
use gomk::synth::{isomorphic, MotifKind};
use gomk::{Error, GraphBundle};
use serde::Deserialize;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn tu_fixture_matches_handwritten_reading() {
    let ds = load_tudataset(&fixture("TOY")).unwrap();
    assert_eq!(ds.name, "TOY");
    assert_eq!(ds.graphs.len(), 2);
    assert_eq!(ds.labels, vec![0, 1]);
    assert_eq!(ds.label_values, vec![-1, 1]);
    assert_eq!(ds.classes(), 2);
    // one attribute column, then one-hot over node label values {0, 2, 5}
    assert_eq!(ds.feature_dim(), 4);

    let g0 = &ds.graphs[0];
    assert_eq!(g0.n(), 3);
    let want_a = [[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
    for (i, row) in want_a.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            assert_eq!(g0.adjacency()[(i, j)], w, "A[{i},{j}]");
        }
    }
    let want_f = [[0.5, 1.0, 0.0, 0.0], [1.5, 0.0, 1.0, 0.0], [2.5, 1.0, 0.0, 0.0]];
    for (i, row) in want_f.iter().enumerate() {
        for (k, &x) in row.iter().enumerate() {
            assert_eq!(g0.features()[(i, k)], x, "F[{i},{k}]");
        }
    }

    let g1 = &ds.graphs[1];
    assert_eq!(g1.n(), 2);
    assert_eq!(g1.edges(), vec![(0, 1, 1.0)]);
    assert_eq!(g1.features().row(0).iter().copied().collect::<Vec<_>>(), vec![3.5, 0.0, 0.0, 1.0]);
    assert_eq!(g1.features().row(1).iter().copied().collect::<Vec<_>>(), vec![4.5, 0.0, 1.0, 0.0]);
}

fn copy_fixture(dst: &Path) {
    fs::create_dir_all(dst).unwrap();
    for entry in fs::read_dir(fixture("TOY")).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), dst.join(entry.file_name())).unwrap();
    }
}

#[test]
fn tu_errors_carry_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("TOY");
    copy_fixture(&dir);
    fs::write(dir.join("TOY_A.txt"), "1, 2\n2, 9\n").unwrap();
    let err = load_tudataset(&dir).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

    copy_fixture(&dir);
    fs::write(dir.join("TOY_graph_indicator.txt"), "1\n1\n2\n1\n2\n").unwrap();
    let err = load_tudataset(&dir).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
}

#[test]
fn tu_without_node_data_uses_constant_feature() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("TOY");
    copy_fixture(&dir);
    fs::remove_file(dir.join("TOY_node_labels.txt")).unwrap();
    fs::remove_file(dir.join("TOY_node_attributes.txt")).unwrap();
    let ds = load_tudataset(&dir).unwrap();
    assert_eq!(ds.feature_dim(), 1);
    assert!(ds.graphs.iter().all(|g| g.features().iter().all(|&x| x == 1.0)));
}

#[test]
fn node_manifest_fixture() {
    let ds = load_node_dataset(&fixture("toy_node/manifest.json")).unwrap();
    assert_eq!(ds.graph.n(), 4);
    assert_eq!(ds.graph.dim(), 2);
    assert_eq!(ds.labels, vec![0, 1, 0, 1]);
    assert_eq!(ds.classes, 2);
    assert_eq!(ds.split, Split { train: vec![0, 1], val: vec![2], test: vec![3] });
    assert_eq!(ds.graph.edge_count(), 3);
}

#[test]
fn node_manifest_without_split_uses_seeded_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = GraphBundle::read(&fixture("toy_node/graph.json")).unwrap();
    let big = GraphBundle {
        n: 20,
        edges: (0..19).map(|i| [i, i + 1]).collect(),
        features: (0..20).map(|i| vec![i as f64 / 20.0, 0.0]).collect(),
        labels: Some((0..20).map(|i| bundle.labels.as_ref().unwrap()[i % 4]).collect()),
    };
    big.write(&tmp.path().join("graph.json")).unwrap();
    let manifest = r#"{"name": "x", "task": "node", "graphs": ["graph.json"], "feature_dim": 2, "seed": 4}"#;
    fs::write(tmp.path().join("m.json"), manifest).unwrap();
    let a = load_node_dataset(&tmp.path().join("m.json")).unwrap();
    let b = load_node_dataset(&tmp.path().join("m.json")).unwrap();
    assert_eq!(a.split, b.split);
    assert_eq!((a.split.train.len(), a.split.val.len(), a.split.test.len()), (12, 4, 4));
    a.split.validate(20).unwrap();

    fs::write(tmp.path().join("bad.json"), manifest.replace("\"feature_dim\": 2", "\"feature_dim\": 3")).unwrap();
    assert!(load_node_dataset(&tmp.path().join("bad.json")).is_err());
}

#[test]
fn kfold_partitions_every_item_once() {
    let folds = kfold_splits(23, 10, 1).unwrap();
    assert_eq!(folds.len(), 10);
    let mut tested: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
    tested.sort_unstable();
    assert_eq!(tested, (0..23).collect::<Vec<_>>());
    for f in &folds {
        f.split().validate(23).unwrap();
        assert_eq!(f.train.len() + f.val.len() + f.test.len(), 23);
    }
}

#[derive(Deserialize)]
struct GoldenMotif {
    name: String,
    nodes: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
struct GoldenFile {
    version: u32,
    motifs: Vec<GoldenMotif>,
}

#[test]
fn motif_definitions_match_data_file() {
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/motifs.json")).unwrap();
    let golden: GoldenFile = serde_json::from_str(&text).unwrap();
    assert_eq!(golden.version, 1);
    assert_eq!(golden.motifs.len(), MotifKind::ALL.len());
    for g in &golden.motifs {
        let kind: MotifKind = g.name.parse().unwrap();
        let spec = kind.spec();
        spec.validate().unwrap();
        assert_eq!(spec.nodes, g.nodes, "{}", g.name);
        assert_eq!(spec.edges, g.edges, "{}", g.name);
    }
    // no two motifs of the same size are isomorphic
    for (i, a) in golden.motifs.iter().enumerate() {
        for b in &golden.motifs[i + 1..] {
            if a.nodes == b.nodes {
                assert!(!isomorphic(a.nodes, &a.edges, &b.edges), "{} ~ {}", a.name, b.name);
            }
        }
    }
}
