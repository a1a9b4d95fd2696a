use std::ffi::{CStr, CString};
use std::ptr;

use gomk_ffi::*;

fn last_error() -> String {
    let p = gomk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Path graph 0-1-2-3 with one-hot-ish features.
fn path4() -> *mut GomkGraph {
    let edges = [0usize, 1, 1, 2, 2, 3];
    let feats = [1.0, 0.0, 0.5, 0.5, 0.0, 1.0, 0.2, 0.8];
    let mut g = ptr::null_mut();
    let s = unsafe { gomk_graph_from_edges(4, edges.as_ptr(), 3, 2, feats.as_ptr(), &mut g) };
    assert_eq!(s, GomkStatus::Ok);
    g
}

#[test]
fn self_kernel_is_m_times_t_plus_one() {
    let g = path4();
    let (mut kappa, mut count) = (0.0, 0usize);
    let mut pairs = [GomkPair::default(); 4];
    let s = unsafe { gomk_kernel(g, g, 2, 1.0, GomkMatcher::Greedy, &mut kappa, pairs.as_mut_ptr(), 4, &mut count) };
    assert_eq!(s, GomkStatus::Ok);
    assert!((kappa - 12.0).abs() < 1e-12);
    assert!((gomk_self_kernel(4, 2) - 12.0).abs() < 1e-12);
    assert_eq!(count, 4);
    for p in pairs {
        assert!((p.similarity - 3.0).abs() < 1e-12);
    }
    unsafe { gomk_graph_free(g) };
}

#[test]
fn kernel_pads_and_reports_buffer_size() {
    let a = path4();
    let feats = [1.0, 0.0, 0.5, 0.5];
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { gomk_graph_from_edges(2, [0usize, 1].as_ptr(), 1, 2, feats.as_ptr(), &mut b) }, GomkStatus::Ok);
    let (mut kappa, mut count) = (0.0, 0usize);
    let s = unsafe { gomk_kernel(a, b, 2, 1.0, GomkMatcher::Exact, &mut kappa, ptr::null_mut(), 0, &mut count) };
    assert_eq!(s, GomkStatus::Ok);
    assert_eq!(count, 4);
    assert!(kappa > 0.0 && kappa < 12.0);
    let mut small = [GomkPair::default(); 2];
    let s = unsafe { gomk_kernel(a, b, 2, 1.0, GomkMatcher::Exact, &mut kappa, small.as_mut_ptr(), 2, &mut count) };
    assert_eq!(s, GomkStatus::BufferTooSmall);
    assert_eq!(count, 4);
    unsafe {
        gomk_graph_free(a);
        gomk_graph_free(b);
    }
}

#[test]
fn errors_set_status_and_message() {
    gomk_clear_error();
    assert!(gomk_last_error().is_null());
    let mut g = ptr::null_mut();
    let s = unsafe { gomk_graph_new(2, 1, ptr::null(), [0.0, 0.0].as_ptr(), &mut g) };
    assert_eq!(s, GomkStatus::NullPointer);
    assert!(last_error().contains("adjacency"));
    assert!(g.is_null());

    // asymmetric adjacency
    let adj = [0.0, 1.0, 0.0, 0.0];
    let s = unsafe { gomk_graph_new(2, 1, adj.as_ptr(), [0.0, 0.0].as_ptr(), &mut g) };
    assert_ne!(s, GomkStatus::Ok);
    assert!(!last_error().is_empty());

    // edge index out of range
    let s = unsafe { gomk_graph_from_edges(2, [0usize, 5].as_ptr(), 1, 1, [0.0, 0.0].as_ptr(), &mut g) };
    assert_ne!(s, GomkStatus::Ok);

    let mut f = ptr::null_mut();
    assert_eq!(unsafe { gomk_filter_random(0, 2, 0, &mut f) }, GomkStatus::Config);

    unsafe {
        gomk_graph_free(ptr::null_mut());
        gomk_filter_free(ptr::null_mut());
        gomk_string_free(ptr::null_mut());
        assert_eq!(gomk_graph_nodes(ptr::null()), 0);
    }
}

#[test]
fn filter_round_trip_and_fit() {
    let g = path4();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { gomk_filter_random(4, 2, 7, &mut f) }, GomkStatus::Ok);
    assert_eq!(unsafe { gomk_filter_nodes(f) }, 4);
    assert_eq!(unsafe { gomk_filter_dim(f) }, 2);

    let mut adj = [0.0; 16];
    assert_eq!(unsafe { gomk_filter_adjacency(f, adj.as_mut_ptr(), 3) }, GomkStatus::BufferTooSmall);
    assert_eq!(unsafe { gomk_filter_adjacency(f, adj.as_mut_ptr(), 16) }, GomkStatus::Ok);
    for i in 0..4 {
        assert_eq!(adj[i * 4 + i], 0.0);
        for j in 0..4 {
            assert_eq!(adj[i * 4 + j], adj[j * 4 + i]);
            assert!((0.0..=1.0).contains(&adj[i * 4 + j]));
        }
    }

    let (mut before, mut after, mut count) = (0.0, 0.0, 0usize);
    let mut as_graph = ptr::null_mut();
    let mut feats = [0.0; 8];
    assert_eq!(unsafe { gomk_filter_features(f, feats.as_mut_ptr(), 8) }, GomkStatus::Ok);
    assert_eq!(unsafe { gomk_graph_new(4, 2, adj.as_ptr(), feats.as_ptr(), &mut as_graph) }, GomkStatus::Ok);
    unsafe { gomk_kernel(g, as_graph, 2, 1.0, GomkMatcher::Greedy, &mut before, ptr::null_mut(), 0, &mut count) };
    let s = unsafe { gomk_filter_fit(f, g, 2, 1.0, 100, 0.05, GomkBoxMode::Clamp, &mut after) };
    assert_eq!(s, GomkStatus::Ok);
    assert!(after > before, "{after} <= {before}");
    unsafe {
        gomk_graph_free(as_graph);
        gomk_filter_free(f);
        gomk_graph_free(g);
    }
}

#[test]
fn node_responses_of_self_filter_peak_at_copy() {
    let g = path4();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { gomk_filter_from_graph(g, &mut f) }, GomkStatus::Ok);
    let filters = [f as *const GomkFilter];
    let mut z = [0.0; 4];
    let s = unsafe { gomk_node_responses(g, filters.as_ptr(), 1, 3, 2, 1.0, z.as_mut_ptr(), 4) };
    assert_eq!(s, GomkStatus::Ok, "{}", last_error());
    // a 3-hop neighbourhood covers the whole path, so each node sees the filter itself
    for v in z {
        assert!((v - 12.0).abs() < 1e-9, "{z:?}");
    }
    unsafe {
        gomk_filter_free(f);
        gomk_graph_free(g);
    }
}

#[test]
fn run_small_invariant_suite() {
    let name = CString::new("check").unwrap();
    let cfg = CString::new(
        r#"{"self_kernel_graphs": 5, "psd_instances": 5, "matching_instances": 10, "gradient_instances": 5, "reconstruction_instances": 5}"#,
    )
    .unwrap();
    let mut report = ptr::null_mut();
    let mut passed = -1;
    let s = unsafe { gomk_run_experiment(name.as_ptr(), cfg.as_ptr(), ptr::null(), &mut report, &mut passed) };
    assert_eq!(s, GomkStatus::Ok);
    assert_eq!(passed, 1);
    let json: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(report) }.to_str().unwrap()).unwrap();
    assert!(json["checks"].as_array().is_some_and(|c| !c.is_empty()));
    unsafe { gomk_string_free(report) };

    let bad = CString::new("nope").unwrap();
    let s = unsafe { gomk_run_experiment(bad.as_ptr(), cfg.as_ptr(), ptr::null(), &mut report, &mut passed) };
    assert_eq!(s, GomkStatus::Config);
    let typo = CString::new(r#"{"psd_instance": 1}"#).unwrap();
    let s = unsafe { gomk_run_experiment(name.as_ptr(), typo.as_ptr(), ptr::null(), &mut report, &mut passed) };
    assert_eq!(s, GomkStatus::Config);
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(gomk_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gomk.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("GOMK_STATUS_BUFFER_TOO_SMALL"));
    assert!(header.contains("typedef struct GomkGraph GomkGraph"));
}
