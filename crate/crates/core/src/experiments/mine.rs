//! Frequent pattern mining: fit a bank of filters to all node-centric
//! subgraphs of the planted-motif graph, then check which motifs the
//! thresholded filters reproduce.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{export_filters, sub_rng, Check};
use crate::export::{write_csv, EDGE_THRESHOLD};
use crate::graph::{extract_subgraph, Graph, TruncationPolicy};
use crate::omk::{greedy_from_matrix, self_kernel, similarity_matrix};
use crate::train::PreparedFilter;
use crate::synth::{build_pattern_graph, isomorphic, MotifKind, PatternGraphConfig};
use crate::train::{train_frq, BoxMode, GraphFilter, LossKind, TrainConfig};
use crate::tse::{encode, SubgraphEmbedding};

/// Starting point of the filter bank.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterInit {
    /// Adjacency `U(0.3, 0.7)`, features `U(0, 1)`.
    #[default]
    Random,
    /// Copies of distinct randomly chosen node-centric subgraphs, with
    /// edges softened to 0.75 and non-edges to 0.25.
    Subgraphs,
    /// As `Subgraphs`, but each further subgraph is drawn with probability
    /// proportional to its kernel distance from the filters chosen so far.
    SubgraphsSpread,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineConfig {
    pub graph: PatternGraphConfig,
    pub filters: usize,
    pub filter_nodes: usize,
    pub hop_radius: usize,
    /// Subgraph standardization sizes; each gets its own training run.
    pub sizes: Vec<usize>,
    pub truncation: TruncationPolicy,
    pub init: FilterInit,
    pub t: usize,
    pub tau: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub box_mode: BoxMode,
    pub seed: u64,
    /// Size whose verdict gates the run.
    pub gate_size: usize,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            graph: PatternGraphConfig::default(),
            filters: 8,
            filter_nodes: 6,
            hop_radius: 3,
            sizes: vec![6, 12],
            truncation: TruncationPolicy::Deterministic,
            init: FilterInit::Random,
            t: 3,
            tau: 1.0,
            epochs: 500,
            learning_rate: 0.5,
            box_mode: BoxMode::Logistic,
            seed: 0,
            gate_size: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterVerdict {
    pub filter: usize,
    pub edges: Vec<(usize, usize)>,
    /// Planted motif the thresholded filter is isomorphic to, if any.
    pub motif: Option<MotifKind>,
    /// Subgraphs for which this filter responds most.
    pub assigned: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MineSizeReport {
    pub size: usize,
    pub final_loss: f64,
    pub filters: Vec<FilterVerdict>,
    pub recovered_motifs: Vec<MotifKind>,
    /// Subgraphs centered on nodes of each planted motif kind, by winning
    /// filter.
    pub motif_assignment: Vec<(MotifKind, Vec<usize>)>,
    #[serde(skip)]
    pub learned: Vec<GraphFilter>,
    #[serde(skip)]
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MineReport {
    pub nodes: usize,
    pub sizes: Vec<MineSizeReport>,
    pub checks: Vec<Check>,
}

#[derive(Serialize)]
struct LossRow {
    size: usize,
    epoch: usize,
    loss: f64,
}

#[derive(Serialize)]
struct FilterRow<'a> {
    size: usize,
    filter: usize,
    motif: &'a str,
    assigned: usize,
    edges: String,
}

fn mine_one(cfg: &MineConfig, pattern: &crate::synth::PatternGraph, size: usize) -> Result<MineSizeReport> {
    let g = &pattern.graph;
    let subgraphs: Vec<SubgraphEmbedding> = (0..g.n())
        .into_par_iter()
        .map(|u| Ok(encode(&extract_subgraph(g, u, cfg.hop_radius, size, cfg.truncation)?.graph, cfg.t)))
        .collect::<Result<_>>()?;
    let mut rng = sub_rng(cfg.seed, size as u64);
    let mut filters = initial_filters(cfg, g, &subgraphs, &mut rng)?;
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        box_mode: cfg.box_mode,
        loss: LossKind::Frq,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    let run = train_frq(&subgraphs, &mut filters, cfg.t, cfg.tau, &train_cfg, |m| {
        log::debug!("m={size} epoch {}: loss {:.4}", m.epoch, m.loss);
    })?;
    let counts = run.last.counts(cfg.filters);
    let verdicts: Vec<FilterVerdict> = filters
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let edges = f.thresholded_edges(EDGE_THRESHOLD);
            let motif = cfg.graph.motifs.iter().copied().find(|k| {
                let spec = k.spec();
                spec.nodes == f.nodes() && isomorphic(f.nodes(), &edges, &spec.edges)
            });
            FilterVerdict {
                filter: i,
                edges,
                motif,
                assigned: counts[i],
            }
        })
        .collect();
    let recovered_motifs: Vec<MotifKind> = cfg
        .graph
        .motifs
        .iter()
        .copied()
        .filter(|k| verdicts.iter().any(|v| v.motif == Some(*k)))
        .collect();
    let motif_assignment = cfg
        .graph
        .motifs
        .iter()
        .map(|&k| {
            let mut hist = vec![0; cfg.filters];
            for att in pattern.attachments.iter().filter(|a| a.kind == k) {
                for &v in &att.nodes {
                    hist[run.last.assignments[v]] += 1;
                }
            }
            (k, hist)
        })
        .collect();
    Ok(MineSizeReport {
        size,
        final_loss: run.last.loss,
        filters: verdicts,
        recovered_motifs,
        motif_assignment,
        learned: filters,
        losses: run.losses,
    })
}

fn soft_copy(g: &Graph, u: usize, cfg: &MineConfig) -> Result<GraphFilter> {
    let sub = extract_subgraph(g, u, cfg.hop_radius, cfg.filter_nodes, cfg.truncation)?;
    let n = cfg.filter_nodes;
    let a = sub.graph.adjacency();
    let adjacency: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 0.25 + 0.5 * a[(i, j)].min(1.0) }).collect())
        .collect();
    let f = sub.graph.features();
    let features: Vec<Vec<f64>> = (0..n).map(|i| f.row(i).iter().map(|x| x.clamp(0.0, 1.0)).collect()).collect();
    GraphFilter::from_matrices(&adjacency, &features, true)
}

fn initial_filters(cfg: &MineConfig, g: &Graph, subgraphs: &[SubgraphEmbedding], rng: &mut ChaCha8Rng) -> Result<Vec<GraphFilter>> {
    match cfg.init {
        FilterInit::Random => Ok((0..cfg.filters)
            .map(|_| GraphFilter::random(cfg.filter_nodes, cfg.graph.dim, true, rng))
            .collect()),
        FilterInit::Subgraphs => {
            let centers = rand::seq::index::sample(rng, g.n(), cfg.filters.min(g.n()));
            centers.iter().map(|u| soft_copy(g, u, cfg)).collect()
        }
        FilterInit::SubgraphsSpread => {
            let m = subgraphs.first().map_or(cfg.filter_nodes, SubgraphEmbedding::len);
            let bound = self_kernel(m, cfg.t);
            let mut filters = vec![soft_copy(g, rng.random_range(0..g.n()), cfg)?];
            let mut best = vec![0.0f64; subgraphs.len()];
            while filters.len() < cfg.filters {
                let last = PreparedFilter::new(filters.last().expect("non-empty"), m, cfg.t)?;
                let kappas = subgraphs
                    .par_iter()
                    .map(|s| Ok(greedy_from_matrix(&similarity_matrix(s, &last.embedding, cfg.tau)?).total()))
                    .collect::<Result<Vec<f64>>>()?;
                for (b, k) in best.iter_mut().zip(kappas) {
                    *b = b.max(k);
                }
                let weights: Vec<f64> = best.iter().map(|b| (bound - b).max(0.0).powi(2)).collect();
                let u = match WeightedIndex::new(&weights) {
                    Ok(dist) => dist.sample(rng),
                    Err(_) => rng.random_range(0..g.n()),
                };
                filters.push(soft_copy(g, u, cfg)?);
            }
            Ok(filters)
        }
    }
}

pub fn run_pattern_mining(cfg: &MineConfig, out: Option<&Path>) -> Result<MineReport> {
    if cfg.sizes.is_empty() || cfg.filters == 0 {
        return Err(Error::config("pattern mining needs at least one size and one filter"));
    }
    if cfg.sizes.iter().any(|&m| m < cfg.filter_nodes) {
        return Err(Error::config(format!(
            "subgraph sizes {:?} must be at least the filter size {}",
            cfg.sizes, cfg.filter_nodes
        )));
    }
    let pattern = build_pattern_graph(&cfg.graph)?;
    let sizes = cfg
        .sizes
        .iter()
        .map(|&m| mine_one(cfg, &pattern, m))
        .collect::<Result<Vec<_>>>()?;

    let mut checks = Vec::new();
    for s in &sizes {
        let names: Vec<&str> = s.recovered_motifs.iter().map(|k| k.name()).collect();
        let detail = format!(
            "m={}: {}/{} planted motifs recovered {:?}",
            s.size,
            s.recovered_motifs.len(),
            cfg.graph.motifs.len(),
            names
        );
        let passed = s.recovered_motifs.len() == cfg.graph.motifs.len();
        let name = format!("mine.motifs_m{}", s.size);
        checks.push(if s.size == cfg.gate_size {
            Check::new(name, passed, detail)
        } else {
            Check::info(name, passed, detail)
        });
    }
    if !cfg.sizes.contains(&cfg.gate_size) {
        checks.push(Check::new("mine.gate_size", false, format!("gate size {} was not run", cfg.gate_size)));
    }

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let rows: Vec<LossRow> = sizes
            .iter()
            .flat_map(|s| s.losses.iter().enumerate().map(|(epoch, &loss)| LossRow { size: s.size, epoch, loss }))
            .collect();
        write_csv(&dir.join("metrics.csv"), &rows)?;
        let frows: Vec<FilterRow> = sizes
            .iter()
            .flat_map(|s| {
                s.filters.iter().map(move |v| FilterRow {
                    size: s.size,
                    filter: v.filter,
                    motif: v.motif.map_or("-", MotifKind::name),
                    assigned: v.assigned,
                    edges: v.edges.iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(" "),
                })
            })
            .collect();
        write_csv(&dir.join("filters.csv"), &frows)?;
        for s in &sizes {
            export_filters(dir, &format!("m{}_filter", s.size), &s.learned)?;
        }
    }

    Ok(MineReport {
        nodes: pattern.graph.n(),
        sizes,
        checks,
    })
}
