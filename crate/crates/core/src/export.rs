//! Artifact writers: Graphviz DOT for learned filters, CSV for metrics.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::train::GraphFilter;

/// Edge weight above which a filter edge is drawn.
pub const EDGE_THRESHOLD: f64 = 0.5;

/// Renders a filter as an undirected DOT graph. Edges with weight above
/// `threshold` are drawn; node features become a `features` attribute, and
/// three-dimensional features also set the fill color (as RGB).
pub fn filter_dot(filter: &GraphFilter, name: &str, threshold: f64) -> String {
    let mut out = String::new();
    let id: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    let _ = writeln!(out, "graph {id} {{");
    let _ = writeln!(out, "  node [shape=circle, style=filled];");
    let f = filter.features();
    for v in 0..filter.nodes() {
        let feats: Vec<String> = f.row(v).iter().map(|x| format!("{x:.4}")).collect();
        let _ = write!(out, "  {v} [features=\"{}\"", feats.join(","));
        if filter.dim() == 3 {
            let c = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
            let _ = write!(out, ", fillcolor=\"#{:02x}{:02x}{:02x}\"", c(f[(v, 0)]), c(f[(v, 1)]), c(f[(v, 2)]));
        }
        let _ = writeln!(out, "];");
    }
    for (a, b) in filter.thresholded_edges(threshold) {
        let w = filter.weight(a, b);
        let _ = writeln!(out, "  {a} -- {b} [weight={w:.4}, label=\"{w:.2}\"];");
    }
    out.push_str("}\n");
    out
}

pub fn write_filter_dot(path: &Path, filter: &GraphFilter, name: &str) -> Result<()> {
    std::fs::write(path, filter_dot(filter, name, EDGE_THRESHOLD))?;
    Ok(())
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::graph::Graph;

    #[test]
    fn dot_lists_heavy_edges_only() {
        let mut a = DMatrix::zeros(3, 3);
        a[(0, 1)] = 0.9;
        a[(1, 0)] = 0.9;
        a[(1, 2)] = 0.4;
        a[(2, 1)] = 0.4;
        let g = Graph::new(a, DMatrix::from_element(3, 3, 1.0)).unwrap();
        let dot = filter_dot(&GraphFilter::from_graph(&g, true), "filter 0", EDGE_THRESHOLD);
        assert!(dot.starts_with("graph filter_0 {"));
        assert!(dot.contains("0 -- 1"));
        assert!(!dot.contains("1 -- 2"));
        assert!(dot.contains("fillcolor=\"#ffffff\""));
    }
}
