//! Seeded synthetic data: Barabási–Albert graphs, the motif library, motif
//! attachment, and the datasets built from them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetManifest, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBundle};
use crate::train::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotifKind {
    House,
    Cup,
    Wheel,
    Crown,
    Book,
    Diamond,
    Circle,
    Email,
}

impl MotifKind {
    pub const ALL: [MotifKind; 8] = [
        MotifKind::House,
        MotifKind::Cup,
        MotifKind::Wheel,
        MotifKind::Crown,
        MotifKind::Book,
        MotifKind::Diamond,
        MotifKind::Circle,
        MotifKind::Email,
    ];
    /// Planted in the pattern-mining graph.
    pub const MINING: [MotifKind; 4] = [MotifKind::House, MotifKind::Cup, MotifKind::Wheel, MotifKind::Crown];
    /// Class-defining motifs of the classification dataset, in label order.
    pub const CLASSIFICATION: [MotifKind; 4] = [MotifKind::Book, MotifKind::Diamond, MotifKind::Circle, MotifKind::Email];

    pub fn name(self) -> &'static str {
        match self {
            MotifKind::House => "House",
            MotifKind::Cup => "Cup",
            MotifKind::Wheel => "Wheel",
            MotifKind::Crown => "Crown",
            MotifKind::Book => "Book",
            MotifKind::Diamond => "Diamond",
            MotifKind::Circle => "Circle",
            MotifKind::Email => "Email",
        }
    }

    pub fn spec(self) -> MotifSpec {
        let (nodes, edges): (usize, &[(usize, usize)]) = match self {
            // 5-cycle 1-2-3-4-5 with a roof apex 0 on 1 and 5.
            MotifKind::House => (6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 5)]),
            // 4-cycle 0-1-2-3 with a handle pendant on 0 and on 3.
            MotifKind::Cup => (6, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 4), (3, 5)]),
            // Hub 0 joined to every node of the 5-cycle 1..5.
            MotifKind::Wheel => (6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 2), (2, 3), (3, 4), (4, 5), (1, 5)]),
            // Inner triangle 0-2-4, each outer node 1, 3, 5 capping one side.
            MotifKind::Crown => (6, &[(0, 2), (2, 4), (0, 4), (0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)]),
            // Two 3-paths joined by three rungs (a 2×3 ladder).
            MotifKind::Book => (6, &[(0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5)]),
            // K4 minus the edge 1-3.
            MotifKind::Diamond => (4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]),
            MotifKind::Circle => (6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)]),
            // 4-cycle 0..3 with a center 4 joined to every corner.
            MotifKind::Email => (5, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 4), (1, 4), (2, 4), (3, 4)]),
        };
        MotifSpec {
            kind: self,
            nodes,
            edges: edges.to_vec(),
        }
    }
}

impl fmt::Display for MotifKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotifKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MotifKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown motif '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifSpec {
    pub kind: MotifKind,
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl MotifSpec {
    /// Connected, at most 8 nodes, simple edges in range.
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.nodes > 8 {
            return Err(Error::config(format!("{}: motifs have 1..=8 nodes", self.kind)));
        }
        let mut adj = vec![Vec::new(); self.nodes];
        for &(a, b) in &self.edges {
            if a >= self.nodes || b >= self.nodes || a == b {
                return Err(Error::config(format!("{}: invalid edge ({a}, {b})", self.kind)));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.nodes];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::config(format!("{}: motif is disconnected", self.kind)));
        }
        Ok(())
    }
}

/// Bookkeeping from [`barabasi_albert`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BaLedger {
    /// Size of the initial clique.
    pub core_nodes: usize,
    pub core_edges: usize,
    /// Edges added by preferential attachment.
    pub attached_edges: usize,
}

fn uniform_features<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random::<f64>())
}

/// Preferential attachment from an initial clique of `attach_m + 1` nodes;
/// every later node links to `attach_m` distinct existing nodes chosen with
/// probability proportional to degree. Features are `U(0, 1)^d`.
pub fn barabasi_albert(n: usize, attach_m: usize, d: usize, seed: u64) -> Result<(Graph, BaLedger)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    barabasi_albert_with(n, attach_m, d, &mut rng)
}

fn barabasi_albert_with<R: Rng + ?Sized>(n: usize, attach_m: usize, d: usize, rng: &mut R) -> Result<(Graph, BaLedger)> {
    if attach_m < 1 || n <= attach_m {
        return Err(Error::config(format!("barabasi_albert needs n > attach_m >= 1, got n={n}, attach_m={attach_m}")));
    }
    let core = attach_m + 1;
    let mut edges = Vec::new();
    // Each node appears once per incident edge.
    let mut endpoints = Vec::new();
    for i in 0..core {
        for j in (i + 1)..core {
            edges.push((i, j));
            endpoints.extend([i, j]);
        }
    }
    let core_edges = edges.len();
    for v in core..n {
        let mut targets: Vec<usize> = Vec::with_capacity(attach_m);
        while targets.len() < attach_m {
            let u = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&u) {
                targets.push(u);
            }
        }
        for u in targets {
            edges.push((u, v));
            endpoints.extend([u, v]);
        }
    }
    let ledger = BaLedger {
        core_nodes: core,
        core_edges,
        attached_edges: edges.len() - core_edges,
    };
    let graph = Graph::from_edges(n, &edges, uniform_features(n, d, rng))?;
    Ok((graph, ledger))
}

/// Where a motif was attached by [`attach_motif`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Attachment {
    pub kind: MotifKind,
    /// Result-graph indices of the motif's nodes, in motif order.
    pub nodes: Vec<usize>,
    pub base_anchor: usize,
    pub motif_anchor: usize,
}

/// Appends `motif` to `base` and links one uniformly chosen base node to one
/// uniformly chosen motif node. New nodes get `U(0, 1)^d` features.
pub fn attach_motif(base: &Graph, motif: &MotifSpec, seed: u64) -> Result<(Graph, Attachment)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    attach_motif_with(base, motif, base.n(), &mut rng)
}

/// Like [`attach_motif`], but the base anchor is drawn from the first
/// `anchor_pool` nodes only.
fn attach_motif_with<R: Rng + ?Sized>(base: &Graph, motif: &MotifSpec, anchor_pool: usize, rng: &mut R) -> Result<(Graph, Attachment)> {
    motif.validate()?;
    if anchor_pool == 0 || anchor_pool > base.n() {
        return Err(Error::config(format!("anchor pool {anchor_pool} invalid for a {}-node base", base.n())));
    }
    let (n0, d) = (base.n(), base.dim());
    let n = n0 + motif.nodes;
    let base_anchor = rng.random_range(0..anchor_pool);
    let motif_anchor = rng.random_range(0..motif.nodes);
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n0, n0)).copy_from(base.adjacency());
    for &(x, y) in &motif.edges {
        a[(n0 + x, n0 + y)] = 1.0;
        a[(n0 + y, n0 + x)] = 1.0;
    }
    a[(base_anchor, n0 + motif_anchor)] = 1.0;
    a[(n0 + motif_anchor, base_anchor)] = 1.0;
    let mut f = DMatrix::zeros(n, d);
    f.view_mut((0, 0), (n0, d)).copy_from(base.features());
    f.view_mut((n0, 0), (motif.nodes, d)).copy_from(&uniform_features(motif.nodes, d, rng));
    let graph = Graph::new(a, f)?;
    Ok((
        graph,
        Attachment {
            kind: motif.kind,
            nodes: (n0..n).collect(),
            base_anchor,
            motif_anchor,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternGraphConfig {
    pub ba_nodes: usize,
    pub attach_m: usize,
    pub copies: usize,
    pub motifs: Vec<MotifKind>,
    pub dim: usize,
    pub seed: u64,
}

impl Default for PatternGraphConfig {
    fn default() -> Self {
        Self {
            ba_nodes: 760,
            attach_m: 1,
            copies: 10,
            motifs: MotifKind::MINING.to_vec(),
            dim: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PatternGraph {
    pub graph: Graph,
    pub ba_nodes: usize,
    pub ledger: BaLedger,
    pub attachments: Vec<Attachment>,
}

/// BA core with `copies` of each motif attached to BA nodes. Copies are
/// attached round-robin over the motif kinds.
pub fn build_pattern_graph(cfg: &PatternGraphConfig) -> Result<PatternGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut graph, ledger) = barabasi_albert_with(cfg.ba_nodes, cfg.attach_m, cfg.dim, &mut rng)?;
    let mut attachments = Vec::with_capacity(cfg.copies * cfg.motifs.len());
    for _ in 0..cfg.copies {
        for &kind in &cfg.motifs {
            let (g, att) = attach_motif_with(&graph, &kind.spec(), cfg.ba_nodes, &mut rng)?;
            graph = g;
            attachments.push(att);
        }
    }
    Ok(PatternGraph {
        graph,
        ba_nodes: cfg.ba_nodes,
        ledger,
        attachments,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotifDatasetConfig {
    pub count: usize,
    pub ba_nodes: usize,
    pub attach_m: usize,
    pub motifs: Vec<MotifKind>,
    pub dim: usize,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for MotifDatasetConfig {
    fn default() -> Self {
        Self {
            count: 8000,
            ba_nodes: 25,
            attach_m: 1,
            motifs: MotifKind::CLASSIFICATION.to_vec(),
            dim: 3,
            ratios: [8.0, 1.0, 1.0],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MotifDataset {
    pub graphs: Vec<Graph>,
    /// Index into `motifs`.
    pub labels: Vec<usize>,
    pub motifs: Vec<MotifKind>,
    pub attachments: Vec<Attachment>,
    pub split: Split,
}

impl MotifDataset {
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.motifs.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Writes one graph bundle per graph plus `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path, seed: u64) -> Result<DatasetManifest> {
        std::fs::create_dir_all(dir.join("graphs"))?;
        let files = self
            .graphs
            .par_iter()
            .enumerate()
            .map(|(i, g)| {
                let rel = Path::new("graphs").join(format!("{i:05}.json"));
                GraphBundle::from_graph(g, None).write(&dir.join(&rel))?;
                Ok(rel)
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = DatasetManifest {
            name: "motif-classification".into(),
            task: Task::Graph,
            graphs: files,
            labels: Some(self.labels.clone()),
            label_names: Some(self.motifs.iter().map(|k| k.name().to_string()).collect()),
            split: Some(SplitSpec::Explicit(self.split.clone())),
            feature_dim: self.graphs.first().map_or(0, Graph::dim),
            seed: Some(seed),
        };
        manifest.write(&dir.join("manifest.json"))?;
        Ok(manifest)
    }
}

/// Graph `i` is a fresh BA graph with motif `i mod C` attached, so classes
/// are balanced; the split is stratified by class.
pub fn build_motif_classification_dataset(cfg: &MotifDatasetConfig) -> Result<MotifDataset> {
    if cfg.motifs.len() < 2 {
        return Err(Error::config("need at least two motif classes"));
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.count).map(|_| master.random()).collect();
    let built = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let label = i % cfg.motifs.len();
            let (base, _) = barabasi_albert_with(cfg.ba_nodes, cfg.attach_m, cfg.dim, &mut rng)?;
            let (g, att) = attach_motif_with(&base, &cfg.motifs[label].spec(), base.n(), &mut rng)?;
            Ok((g, label, att))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut graphs = Vec::with_capacity(cfg.count);
    let mut labels = Vec::with_capacity(cfg.count);
    let mut attachments = Vec::with_capacity(cfg.count);
    for (g, l, a) in built {
        graphs.push(g);
        labels.push(l);
        attachments.push(a);
    }
    let split = Split::stratified(&labels, cfg.ratios, cfg.seed)?;
    Ok(MotifDataset {
        graphs,
        labels,
        motifs: cfg.motifs.clone(),
        attachments,
        split,
    })
}

/// Node-feature choice for random target graphs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// `U(0, 1)` entries.
    #[default]
    Random,
    /// Every entry 1.0, leaving only structure to learn.
    Ones,
}

/// Graph with each edge present independently with probability `p`.
pub fn bernoulli_graph<R: Rng + ?Sized>(n: usize, p: f64, d: usize, features: FeatureKind, rng: &mut R) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("edge probability {p} outside [0, 1]")));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let f = match features {
        FeatureKind::Random => uniform_features(n, d, rng),
        FeatureKind::Ones => DMatrix::from_element(n, d, 1.0),
    };
    Graph::from_edges(n, &edges, f)
}

/// Exact isomorphism test for small simple graphs on `n` labeled nodes,
/// by backtracking over degree-compatible bijections.
pub fn isomorphic(n: usize, a: &[(usize, usize)], b: &[(usize, usize)]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let adj = |edges: &[(usize, usize)]| {
        let mut m = vec![vec![false; n]; n];
        for &(x, y) in edges {
            m[x][y] = true;
            m[y][x] = true;
        }
        m
    };
    let (ma, mb) = (adj(a), adj(b));
    let degree = |m: &Vec<Vec<bool>>| m.iter().map(|r| r.iter().filter(|&&e| e).count()).collect::<Vec<_>>();
    let (da, db) = (degree(&ma), degree(&mb));
    let mut sa = da.clone();
    let mut sb = db.clone();
    sa.sort_unstable();
    sb.sort_unstable();
    if sa != sb {
        return false;
    }
    fn extend(v: usize, map: &mut Vec<usize>, used: &mut [bool], ma: &[Vec<bool>], mb: &[Vec<bool>], da: &[usize], db: &[usize]) -> bool {
        let n = used.len();
        if v == n {
            return true;
        }
        for w in 0..n {
            if used[w] || da[v] != db[w] {
                continue;
            }
            if (0..v).all(|u| ma[u][v] == mb[map[u]][w]) {
                used[w] = true;
                map.push(w);
                if extend(v + 1, map, used, ma, mb, da, db) {
                    return true;
                }
                map.pop();
                used[w] = false;
            }
        }
        false
    }
    extend(0, &mut Vec::with_capacity(n), &mut vec![false; n], &ma, &mb, &da, &db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::induced_edges;

    #[test]
    fn all_motifs_are_valid() {
        for kind in MotifKind::ALL {
            let spec = kind.spec();
            spec.validate().unwrap();
            assert_eq!(kind.name().parse::<MotifKind>().unwrap(), kind);
        }
    }

    #[test]
    fn tiny_ba_is_a_path() {
        let (g, ledger) = barabasi_albert(3, 1, 2, 0).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(ledger.core_edges + ledger.attached_edges, 2);
        assert!(barabasi_albert(2, 2, 1, 0).is_err());
    }

    #[test]
    fn ba_edge_count_follows_the_ledger() {
        for m in 1..=3 {
            let (g, ledger) = barabasi_albert(760, m, 3, 7).unwrap();
            assert_eq!(ledger.attached_edges, m * (760 - ledger.core_nodes));
            assert_eq!(g.edge_count(), ledger.attached_edges + ledger.core_edges);
        }
    }

    #[test]
    fn attachment_adds_one_bridge() {
        let (base, _) = barabasi_albert(760, 1, 3, 1).unwrap();
        let spec = MotifKind::House.spec();
        let (g, att) = attach_motif(&base, &spec, 3).unwrap();
        assert_eq!(g.n(), 766);
        assert_eq!(g.edge_count(), base.edge_count() + spec.edges.len() + 1);
        let induced = induced_edges(&g, &att.nodes).unwrap();
        assert!(isomorphic(6, &induced, &spec.edges));
        assert_eq!(induced.len(), spec.edges.len());
    }

    #[test]
    fn pattern_graph_has_1000_nodes() {
        let pg = build_pattern_graph(&PatternGraphConfig::default()).unwrap();
        assert_eq!(pg.graph.n(), 1000);
        assert_eq!(pg.attachments.len(), 40);
        assert!(pg.attachments.iter().all(|a| a.base_anchor < 760));
    }

    #[test]
    fn isomorphism_checks() {
        let cycle = MotifKind::Circle.spec().edges;
        let relabeled: Vec<(usize, usize)> = cycle.iter().map(|&(a, b)| ((a * 5) % 6, (b * 5) % 6)).collect();
        assert!(isomorphic(6, &cycle, &relabeled));
        assert!(!isomorphic(6, &cycle, &MotifKind::Book.spec().edges[..6]));
        assert!(!isomorphic(6, &MotifKind::House.spec().edges, &MotifKind::Book.spec().edges));
    }
}
