//! The kernel convolutional network for classification: optional front MLP,
//! stacked kernel layers, pooling (graph tasks), and a classifier MLP.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{accumulate_pair_upstream, backprop_levels, filter_gradient_from_upstream, zero_level_grads, FilterGradient, GradientTape, LevelGrads};
use crate::graph::{Graph, NodeCentricSubgraph, TruncationPolicy};
use crate::omk::Matching;
use crate::train::adam::{update_filters, Adam};
use crate::train::layer::{respond, GomkcnLayer, LayerShape, PreparedFilter};
use crate::train::loss::REDUCTION_CHUNK;
use crate::train::mlp::{softmax_cross_entropy, MlpCache, MlpGradient, MlpHead};
use crate::tse::{encode_parts, SubgraphEmbedding};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Max,
    Add,
    Mean,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Pooling::Max),
            "add" | "sum" => Ok(Pooling::Add),
            "mean" => Ok(Pooling::Mean),
            other => Err(Error::config(format!("unknown pooling '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// One label per graph; node responses are pooled.
    Graph,
    /// One label per node; no pooling.
    Node,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Widths of the front MLP after the input (last entry is its output);
    /// empty means raw features go straight into the kernel layer.
    pub front_sizes: Vec<usize>,
    pub depth: usize,
    pub filters: usize,
    pub filter_nodes: usize,
    /// Standardized subgraph size; defaults to `filter_nodes`.
    pub size: Option<usize>,
    pub t: usize,
    pub tau: f64,
    pub hop_radius: usize,
    pub truncation: TruncationPolicy,
    pub classifier_hidden: Vec<usize>,
    pub dropout: f64,
    pub pooling: Pooling,
    /// Divide responses by `m (t + 1)`, mapping them into `(0, 1]`.
    pub normalize_responses: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            front_sizes: Vec::new(),
            depth: 1,
            filters: 4,
            filter_nodes: 6,
            size: None,
            t: 2,
            tau: 0.5,
            hop_radius: 3,
            truncation: TruncationPolicy::Deterministic,
            classifier_hidden: vec![16],
            dropout: 0.0,
            pooling: Pooling::Max,
            normalize_responses: true,
        }
    }
}

impl ModelConfig {
    pub fn layer_shape(&self) -> LayerShape {
        LayerShape {
            filters: self.filters,
            filter_nodes: self.filter_nodes,
            t: self.t,
            tau: self.tau,
            hop_radius: self.hop_radius,
            size: self.size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("depth must be at least 1"));
        }
        if self.front_sizes.contains(&0) || self.classifier_hidden.contains(&0) {
            return Err(Error::config("MLP widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.layer_shape().validate()
    }
}

/// A graph with its node-centric subgraphs extracted once up front.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub graph: Graph,
    pub subgraphs: Vec<NodeCentricSubgraph>,
    /// First-layer embeddings, valid while the layer input is the raw
    /// (constant) feature matrix.
    cached: Option<Vec<SubgraphEmbedding>>,
}

impl PreparedGraph {
    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

#[derive(Clone, Debug)]
pub struct GomkcnModel {
    pub config: ModelConfig,
    pub task: Task,
    pub input_dim: usize,
    pub classes: usize,
    pub front: Option<MlpHead>,
    pub layers: Vec<GomkcnLayer>,
    pub classifier: MlpHead,
}

struct LayerPass {
    nodes: Vec<usize>,
    embeddings: Vec<SubgraphEmbedding>,
    /// `[node position][filter]`.
    matchings: Vec<Vec<Matching>>,
    /// Scaled responses, one row per entry of `nodes`.
    output: DMatrix<f64>,
}

struct GraphPass {
    front: Option<MlpCache>,
    layers: Vec<LayerPass>,
}

struct GraphGrads {
    filters: Vec<Vec<Option<LevelGrads>>>,
    front: Option<MlpGradient>,
}

/// Classification inputs: a list of labeled graphs, or the labeled nodes of
/// one graph.
#[derive(Clone, Copy)]
pub enum Samples<'a> {
    Graphs { graphs: &'a [PreparedGraph], labels: &'a [usize] },
    Nodes { graph: &'a PreparedGraph, labels: &'a [usize] },
}

impl Samples<'_> {
    pub fn len(&self) -> usize {
        match self {
            Samples::Graphs { labels, .. } | Samples::Nodes { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, i: usize) -> usize {
        match self {
            Samples::Graphs { labels, .. } | Samples::Nodes { labels, .. } => labels[i],
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassificationOutput {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    pub logits: DMatrix<f64>,
    pub tape: GradientTape,
}

impl GomkcnModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, task: Task, input_dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::config("input feature dimension must be positive"));
        }
        if classes < 2 {
            return Err(Error::config(format!("need at least two classes, got {classes}")));
        }
        let front = if config.front_sizes.is_empty() {
            None
        } else {
            let sizes: Vec<usize> = std::iter::once(input_dim).chain(config.front_sizes.iter().copied()).collect();
            Some(MlpHead::new(&sizes, config.dropout, rng)?)
        };
        let shape = config.layer_shape();
        let mut layers = Vec::with_capacity(config.depth);
        for l in 0..config.depth {
            let (dim, bounded) = if l == 0 {
                match config.front_sizes.last() {
                    Some(&out) => (out, false),
                    None => (input_dim, true),
                }
            } else {
                (config.filters, config.normalize_responses)
            };
            layers.push(GomkcnLayer::random(&shape, dim, bounded, config.truncation, rng)?);
        }
        let sizes: Vec<usize> = std::iter::once(config.filters)
            .chain(config.classifier_hidden.iter().copied())
            .chain(std::iter::once(classes))
            .collect();
        let classifier = MlpHead::new(&sizes, config.dropout, rng)?;
        Ok(Self {
            config,
            task,
            input_dim,
            classes,
            front,
            layers,
            classifier,
        })
    }

    pub fn param_count(&self) -> usize {
        let mlp = |m: &MlpHead| m.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum::<usize>();
        self.layers.iter().flat_map(|l| &l.filters).map(|f| f.param_count()).sum::<usize>()
            + self.front.as_ref().map_or(0, mlp)
            + mlp(&self.classifier)
    }

    fn response_scale(&self, l: usize) -> f64 {
        if self.config.normalize_responses {
            let layer = &self.layers[l];
            1.0 / (layer.size * (layer.t + 1)) as f64
        } else {
            1.0
        }
    }

    /// Extracts subgraphs (shared by all layers, which use one topology).
    pub fn prepare_graph(&self, graph: Graph) -> Result<PreparedGraph> {
        if graph.dim() != self.input_dim {
            return Err(Error::shape(format!(
                "graph features have dimension {}, model expects {}",
                graph.dim(),
                self.input_dim
            )));
        }
        let subgraphs = self.layers[0].extract(&graph)?;
        let cached = self.front.is_none().then(|| {
            let t = self.layers[0].t;
            subgraphs
                .par_iter()
                .map(|s| encode_parts(s.graph.adjacency(), s.graph.features(), t))
                .collect()
        });
        Ok(PreparedGraph {
            graph,
            subgraphs,
            cached,
        })
    }

    pub fn prepare_filters(&self) -> Result<Vec<Vec<PreparedFilter>>> {
        self.layers.iter().map(GomkcnLayer::prepare).collect()
    }

    fn forward_graph(
        &self,
        pg: &PreparedGraph,
        targets: &[usize],
        prepared: &[Vec<PreparedFilter>],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<GraphPass> {
        let n = pg.n();
        if let Some(&bad) = targets.iter().find(|&&u| u >= n) {
            return Err(Error::index(format!("node {bad} out of range for {n} nodes")));
        }
        let (front_out, front_cache) = match &self.front {
            Some(mlp) => {
                let (out, cache) = mlp.forward(pg.graph.features(), rng);
                (Some(out), Some(cache))
            }
            None => (None, None),
        };
        let depth = self.layers.len();
        let mut passes: Vec<LayerPass> = Vec::with_capacity(depth);
        for (l, layer) in self.layers.iter().enumerate() {
            let nodes: Vec<usize> = if l + 1 == depth { targets.to_vec() } else { (0..n).collect() };
            let input: &DMatrix<f64> = match (l, &front_out) {
                (0, Some(out)) => out,
                (0, None) => pg.graph.features(),
                _ => &passes[l - 1].output,
            };
            let use_cache = l == 0 && pg.cached.is_some() && front_out.is_none();
            let tau = layer.tau;
            let results = nodes
                .par_iter()
                .map(|&u| -> Result<(SubgraphEmbedding, Vec<Matching>)> {
                    let sub = &pg.subgraphs[u];
                    let emb = match (&pg.cached, use_cache) {
                        (Some(cache), true) => cache[u].clone(),
                        _ => encode_parts(sub.graph.adjacency(), &sub.gather_features(input), layer.t),
                    };
                    let matchings = respond(&prepared[l], &emb, tau)?;
                    Ok((emb, matchings))
                })
                .collect::<Result<Vec<_>>>()?;
            let scale = self.response_scale(l);
            let filters = layer.filter_count();
            let mut output = DMatrix::zeros(nodes.len(), filters);
            let mut embeddings = Vec::with_capacity(nodes.len());
            let mut matchings = Vec::with_capacity(nodes.len());
            for (i, (emb, ms)) in results.into_iter().enumerate() {
                for (j, m) in ms.iter().enumerate() {
                    output[(i, j)] = m.total() * scale;
                }
                embeddings.push(emb);
                matchings.push(ms);
            }
            passes.push(LayerPass {
                nodes,
                embeddings,
                matchings,
                output,
            });
        }
        Ok(GraphPass {
            front: front_cache,
            layers: passes,
        })
    }

    fn backward_graph(&self, pg: &PreparedGraph, pass: &GraphPass, d_top: DMatrix<f64>, prepared: &[Vec<PreparedFilter>]) -> GraphGrads {
        let n = pg.n();
        let mut filter_up: Vec<Vec<Option<LevelGrads>>> = self.layers.iter().map(|l| vec![None; l.filter_count()]).collect();
        let mut d_out = d_top;
        let mut front = None;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let lp = &pass.layers[l];
            let scale = self.response_scale(l);
            let need_input = l > 0 || self.front.is_some();
            let (m, dim, t, filters) = (layer.size, layer.dim(), layer.t, layer.filter_count());
            let positions: Vec<usize> = (0..lp.nodes.len()).collect();
            let d_ref = &d_out;
            let partials: Vec<(Vec<Option<LevelGrads>>, Vec<(usize, DMatrix<f64>)>)> = positions
                .par_chunks(REDUCTION_CHUNK)
                .map(|chunk| {
                    let mut ups: Vec<Option<LevelGrads>> = vec![None; filters];
                    let mut sub_grads = Vec::new();
                    for &i in chunk {
                        let emb = &lp.embeddings[i];
                        let mut ux = need_input.then(|| zero_level_grads(m, dim, t));
                        let mut touched = false;
                        for j in 0..filters {
                            let w = d_ref[(i, j)] * scale;
                            if w == 0.0 {
                                continue;
                            }
                            touched = true;
                            let up = ups[j].get_or_insert_with(|| zero_level_grads(m, dim, t));
                            accumulate_pair_upstream(emb, &prepared[l][j].embedding, &lp.matchings[i][j], layer.tau, w, Some(up), ux.as_mut());
                        }
                        if let (Some(ux), true) = (ux, touched) {
                            let sub = &pg.subgraphs[lp.nodes[i]];
                            let (_, d_feat) = backprop_levels(sub.graph.adjacency(), &[], &ux, false);
                            sub_grads.push((lp.nodes[i], d_feat));
                        }
                    }
                    (ups, sub_grads)
                })
                .collect();
            let mut d_input = need_input.then(|| DMatrix::zeros(n, dim));
            for (ups, sub_grads) in partials {
                add_level_grads(&mut filter_up[l], ups);
                if let Some(d_input) = d_input.as_mut() {
                    for (u, d_feat) in sub_grads {
                        let sub = &pg.subgraphs[u];
                        for (row, &node) in sub.nodes.iter().enumerate() {
                            let mut target = d_input.row_mut(node);
                            target += d_feat.row(row);
                        }
                    }
                }
            }
            match d_input {
                Some(d) if l > 0 => d_out = d,
                Some(d) => {
                    let (mlp, cache) = (self.front.as_ref().expect("front present"), pass.front.as_ref().expect("front cache"));
                    front = Some(mlp.backward(cache, &d).0);
                }
                None => {}
            }
        }
        GraphGrads { filters: filter_up, front }
    }

    fn pool(&self, z: &DMatrix<f64>) -> (Vec<f64>, Vec<usize>) {
        let (n, c) = z.shape();
        let mut pooled = vec![0.0; c];
        let mut argmax = vec![0; c];
        for j in 0..c {
            let col = z.column(j);
            pooled[j] = match self.config.pooling {
                Pooling::Max => {
                    let mut best = 0;
                    for i in 1..n {
                        if col[i] > col[best] {
                            best = i;
                        }
                    }
                    argmax[j] = best;
                    col[best]
                }
                Pooling::Add => col.sum(),
                Pooling::Mean => col.sum() / n as f64,
            };
        }
        (pooled, argmax)
    }

    fn unpool(&self, n: usize, d_pooled: &[f64], argmax: &[usize]) -> DMatrix<f64> {
        let c = d_pooled.len();
        let mut d = DMatrix::zeros(n, c);
        for j in 0..c {
            match self.config.pooling {
                Pooling::Max => d[(argmax[j], j)] = d_pooled[j],
                Pooling::Add => d.column_mut(j).fill(d_pooled[j]),
                Pooling::Mean => d.column_mut(j).fill(d_pooled[j] / n as f64),
            }
        }
        d
    }

    /// Representations fed to the classifier for a batch (one row per
    /// sample), with the passes needed for backward.
    fn represent(
        &self,
        samples: &Samples<'_>,
        batch: &[usize],
        prepared: &[Vec<PreparedFilter>],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(DMatrix<f64>, Vec<GraphPass>, Vec<Vec<usize>>)> {
        let filters = self.config.filters;
        match *samples {
            Samples::Graphs { graphs, .. } => {
                let seeds: Vec<Option<u64>> = match rng {
                    Some(r) => batch.iter().map(|_| Some(r.random())).collect(),
                    None => vec![None; batch.len()],
                };
                let passes = batch
                    .par_iter()
                    .zip(seeds)
                    .map(|(&i, seed)| {
                        let g = graphs.get(i).ok_or_else(|| Error::index(format!("graph {i} out of range")))?;
                        let targets: Vec<usize> = (0..g.n()).collect();
                        let mut r = seed.map(ChaCha8Rng::seed_from_u64);
                        self.forward_graph(g, &targets, prepared, r.as_mut())
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut rows = DMatrix::zeros(batch.len(), filters);
                let mut argmaxes = Vec::with_capacity(batch.len());
                for (b, pass) in passes.iter().enumerate() {
                    let top = &pass.layers.last().expect("depth >= 1").output;
                    let (pooled, argmax) = self.pool(top);
                    for (j, v) in pooled.into_iter().enumerate() {
                        rows[(b, j)] = v;
                    }
                    argmaxes.push(argmax);
                }
                Ok((rows, passes, argmaxes))
            }
            Samples::Nodes { graph, .. } => {
                let mut r = rng.map(|r| ChaCha8Rng::seed_from_u64(r.random()));
                let pass = self.forward_graph(graph, batch, prepared, r.as_mut())?;
                let rows = pass.layers.last().expect("depth >= 1").output.clone();
                Ok((rows, vec![pass], Vec::new()))
            }
        }
    }

    /// Mean softmax cross-entropy over `batch` and its gradient tape.
    /// Dropout is active only when `rng` is given.
    pub fn loss_classification(&self, samples: &Samples<'_>, batch: &[usize], mut rng: Option<&mut ChaCha8Rng>) -> Result<ClassificationOutput> {
        if batch.is_empty() {
            return Err(Error::data("empty batch"));
        }
        if let Some(&bad) = batch.iter().find(|&&i| i >= samples.len()) {
            return Err(Error::index(format!("sample {bad} out of range for {} samples", samples.len())));
        }
        let labels: Vec<usize> = batch.iter().map(|&i| samples.label(i)).collect();
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::data(format!("label {bad} out of range for {} classes", self.classes)));
        }
        let prepared = self.prepare_filters()?;
        let (rows, passes, argmaxes) = self.represent(samples, batch, &prepared, rng.as_deref_mut())?;
        let (logits, cache) = self.classifier.forward(&rows, rng);
        let (loss, d_logits) = softmax_cross_entropy(&logits, &labels)?;
        let (classifier_grad, d_rows) = self.classifier.backward(&cache, &d_logits);

        let grads: Vec<GraphGrads> = match *samples {
            Samples::Graphs { graphs, .. } => passes
                .par_iter()
                .enumerate()
                .map(|(b, pass)| {
                    let g = &graphs[batch[b]];
                    let d_pooled: Vec<f64> = d_rows.row(b).iter().copied().collect();
                    let d_top = self.unpool(g.n(), &d_pooled, &argmaxes[b]);
                    self.backward_graph(g, pass, d_top, &prepared)
                })
                .collect(),
            Samples::Nodes { graph, .. } => vec![self.backward_graph(graph, &passes[0], d_rows, &prepared)],
        };

        let mut filter_up: Vec<Vec<Option<LevelGrads>>> = self.layers.iter().map(|l| vec![None; l.filter_count()]).collect();
        let mut front: Option<MlpGradient> = None;
        for g in grads {
            for (acc, add) in filter_up.iter_mut().zip(g.filters) {
                add_level_grads(acc, add);
            }
            if let Some(f) = g.front {
                match front.as_mut() {
                    Some(acc) => acc.add(&f),
                    None => front = Some(f),
                }
            }
        }
        let filters = filter_up
            .iter()
            .zip(&prepared)
            .map(|(ups, preps)| {
                ups.iter()
                    .zip(preps)
                    .map(|(up, p)| match up {
                        Some(up) => filter_gradient_from_upstream(&p.graph, &p.levels, up).truncated(p.nodes),
                        None => FilterGradient::zeros(p.nodes, p.graph.dim()),
                    })
                    .collect()
            })
            .collect();
        if self.front.is_some() && front.is_none() {
            front = self.front.as_ref().map(MlpGradient::zeros_like);
        }
        Ok(ClassificationOutput {
            loss,
            logits,
            tape: GradientTape {
                filters,
                front,
                classifier: Some(classifier_grad),
                scale: batch.len() as f64,
            },
        })
    }

    /// Logits for `indices`, without dropout, evaluated in chunks.
    pub fn logits(&self, samples: &Samples<'_>, indices: &[usize]) -> Result<DMatrix<f64>> {
        let prepared = self.prepare_filters()?;
        let mut out = DMatrix::zeros(indices.len(), self.classes);
        let chunk = match samples {
            Samples::Graphs { .. } => 256,
            Samples::Nodes { .. } => indices.len().max(1),
        };
        for (c, idx) in indices.chunks(chunk).enumerate() {
            let (rows, _, _) = self.represent(samples, idx, &prepared, None)?;
            let (logits, _) = self.classifier.forward::<ChaCha8Rng>(&rows, None);
            out.view_mut((c * chunk, 0), (idx.len(), self.classes)).copy_from(&logits);
        }
        Ok(out)
    }

    pub fn predict(&self, samples: &Samples<'_>, indices: &[usize]) -> Result<Vec<usize>> {
        let logits = self.logits(samples, indices)?;
        Ok(logits
            .row_iter()
            .map(|r| {
                let mut best = 0;
                for k in 1..r.len() {
                    if r[k] > r[best] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }

    pub fn accuracy(&self, samples: &Samples<'_>, indices: &[usize]) -> Result<f64> {
        if indices.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(samples, indices)?;
        let hits = pred.iter().zip(indices).filter(|(p, &i)| **p == samples.label(i)).count();
        Ok(hits as f64 / indices.len() as f64)
    }

    /// Unscaled last-layer kernel responses of every node, `n × T`.
    pub fn node_responses(&self, pg: &PreparedGraph) -> Result<DMatrix<f64>> {
        let prepared = self.prepare_filters()?;
        let targets: Vec<usize> = (0..pg.n()).collect();
        let pass = self.forward_graph(pg, &targets, &prepared, None)?;
        let last = self.layers.len() - 1;
        Ok(&pass.layers[last].output / self.response_scale(last))
    }

    /// One projected Adam step over every trainable part.
    pub fn apply_gradients(&mut self, tape: &GradientTape, adam: &mut Adam, epoch: usize, step: usize) -> Result<()> {
        if !tape.is_finite() {
            return Err(Error::Training {
                epoch,
                step,
                message: "non-finite gradient".into(),
            });
        }
        if tape.filters.len() != self.layers.len() {
            return Err(Error::shape("gradient tape does not match the model depth"));
        }
        adam.tick();
        let mut slot = 0;
        for (layer, grads) in self.layers.iter_mut().zip(&tape.filters) {
            update_filters(&mut layer.filters, grads, adam, slot);
            slot += 2 * layer.filters.len();
        }
        let mut step_mlp = |mlp: &mut MlpHead, grad: &MlpGradient, slot: &mut usize| {
            for (li, layer) in mlp.layers.iter_mut().enumerate() {
                adam.update_matrix(*slot, &mut layer.weights, &grad.weights[li]);
                adam.update(*slot + 1, layer.bias.as_mut_slice(), grad.bias[li].as_slice());
                *slot += 2;
            }
        };
        if let (Some(mlp), Some(grad)) = (self.front.as_mut(), tape.front.as_ref()) {
            step_mlp(mlp, grad, &mut slot);
        }
        if let Some(grad) = tape.classifier.as_ref() {
            step_mlp(&mut self.classifier, grad, &mut slot);
        }
        Ok(())
    }
}

fn add_level_grads(acc: &mut [Option<LevelGrads>], add: Vec<Option<LevelGrads>>) {
    for (a, b) in acc.iter_mut().zip(add) {
        if let Some(b) = b {
            match a {
                Some(a) => a.iter_mut().zip(&b).for_each(|(x, y)| *x += y),
                None => *a = Some(b),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_graph(seed: u64, n: usize) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
        edges.push((0, n - 1));
        edges.sort();
        edges.dedup();
        Graph::from_edges(n, &edges, DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>())).unwrap()
    }

    #[test]
    fn zero_classifier_gives_log_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let config = ModelConfig {
            filters: 2,
            filter_nodes: 3,
            t: 1,
            hop_radius: 1,
            classifier_hidden: vec![],
            ..ModelConfig::default()
        };
        let mut model = GomkcnModel::new(config, Task::Graph, 2, 3, &mut rng).unwrap();
        for l in &mut model.classifier.layers {
            l.weights.fill(0.0);
        }
        let graphs = vec![model.prepare_graph(tiny_graph(1, 5)).unwrap()];
        let labels = [2];
        let out = model
            .loss_classification(&Samples::Graphs { graphs: &graphs, labels: &labels }, &[0], None)
            .unwrap();
        assert!((out.loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range_is_a_data_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = GomkcnModel::new(ModelConfig { hop_radius: 1, ..ModelConfig::default() }, Task::Graph, 2, 2, &mut rng).unwrap();
        let graphs = vec![model.prepare_graph(tiny_graph(2, 4)).unwrap()];
        let labels = [5];
        let err = model
            .loss_classification(&Samples::Graphs { graphs: &graphs, labels: &labels }, &[0], None)
            .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    fn fd_check_model(config: ModelConfig, task: Task, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = GomkcnModel::new(config, task, 2, 2, &mut rng).unwrap();
        let graphs: Vec<PreparedGraph> = (0..3).map(|i| model.prepare_graph(tiny_graph(seed + 10 + i, 6)).unwrap()).collect();
        let (samples, batch): (Samples<'_>, Vec<usize>) = match task {
            Task::Graph => (Samples::Graphs { graphs: &graphs, labels: &[0, 1, 1] }, vec![0, 1, 2]),
            Task::Node => (Samples::Nodes { graph: &graphs[0], labels: &[0, 1, 0, 1, 1, 0] }, vec![0, 2, 3, 5]),
        };
        let out = model.loss_classification(&samples, &batch, None).unwrap();
        // Filter parameters of every layer, perturbed one at a time.
        let prepared = model.prepare_filters().unwrap();
        let baseline = model.represent(&samples, &batch, &prepared, None).unwrap();
        for (l, layer) in model.layers.iter().enumerate() {
            for (j, filter) in layer.filters.iter().enumerate() {
                let analytic = filter.gradient_to_params(&out.tape.filters[l][j]);
                let params = filter.to_params();
                let report = crate::grad::finite_difference_check(
                    |p| {
                        let mut probe = model.clone();
                        probe.layers[l].filters[j].set_params(p).unwrap();
                        frozen_loss(&probe, &samples, &batch, &baseline.1)
                    },
                    &params,
                    &analytic,
                    1e-5,
                )
                .unwrap();
                assert!(report.max_relative_error < 1e-4, "layer {l} filter {j}: {report:?}");
            }
        }
    }

    /// Loss with every matching and max-pooling winner frozen to `reference`.
    fn frozen_loss(model: &GomkcnModel, samples: &Samples<'_>, batch: &[usize], reference: &[GraphPass]) -> f64 {
        let prepared = model.prepare_filters().unwrap();
        let labels: Vec<usize> = batch.iter().map(|&i| samples.label(i)).collect();
        let mut rows = DMatrix::zeros(batch.len(), model.config.filters);
        let graph_of = |b: usize| match samples {
            Samples::Graphs { graphs, .. } => &graphs[batch[b]],
            Samples::Nodes { graph, .. } => graph,
        };
        let per_pass: Vec<DMatrix<f64>> = reference
            .iter()
            .enumerate()
            .map(|(b, pass)| {
                let pg = graph_of(b);
                let mut input: Option<DMatrix<f64>> = model.front.as_ref().map(|mlp| mlp.forward::<ChaCha8Rng>(pg.graph.features(), None).0);
                let mut out = DMatrix::zeros(0, 0);
                for (l, lp) in pass.layers.iter().enumerate() {
                    let layer = &model.layers[l];
                    let feats = input.clone().unwrap_or_else(|| pg.graph.features().clone());
                    out = DMatrix::zeros(lp.nodes.len(), layer.filter_count());
                    for (i, &u) in lp.nodes.iter().enumerate() {
                        let sub = &pg.subgraphs[u];
                        let emb = encode_parts(sub.graph.adjacency(), &sub.gather_features(&feats), layer.t);
                        for j in 0..layer.filter_count() {
                            out[(i, j)] = crate::omk::kappa_under_matching(&emb, &prepared[l][j].embedding, &lp.matchings[i][j], layer.tau).unwrap()
                                * model.response_scale(l);
                        }
                    }
                    input = Some(out.clone());
                }
                out
            })
            .collect();
        match samples {
            Samples::Graphs { .. } => {
                for (b, (z, pass)) in per_pass.iter().zip(reference).enumerate() {
                    let (_, argmax) = model.pool(&pass.layers.last().unwrap().output);
                    for j in 0..z.ncols() {
                        rows[(b, j)] = match model.config.pooling {
                            Pooling::Max => z[(argmax[j], j)],
                            Pooling::Add => z.column(j).sum(),
                            Pooling::Mean => z.column(j).mean(),
                        };
                    }
                }
            }
            Samples::Nodes { .. } => rows = per_pass[0].clone(),
        }
        let (logits, _) = model.classifier.forward::<ChaCha8Rng>(&rows, None);
        softmax_cross_entropy(&logits, &labels).unwrap().0
    }

    #[test]
    fn graph_task_filter_gradients_match_finite_differences() {
        for pooling in [Pooling::Max, Pooling::Add, Pooling::Mean] {
            let config = ModelConfig {
                filters: 2,
                filter_nodes: 3,
                size: Some(4),
                t: 2,
                tau: 0.7,
                hop_radius: 1,
                classifier_hidden: vec![4],
                pooling,
                ..ModelConfig::default()
            };
            fd_check_model(config, Task::Graph, 30);
        }
    }

    #[test]
    fn stacked_layers_with_front_mlp_match_finite_differences() {
        let config = ModelConfig {
            front_sizes: vec![3],
            depth: 2,
            filters: 2,
            filter_nodes: 3,
            t: 2,
            tau: 0.9,
            hop_radius: 1,
            classifier_hidden: vec![],
            pooling: Pooling::Mean,
            ..ModelConfig::default()
        };
        fd_check_model(config.clone(), Task::Graph, 40);
        fd_check_model(config, Task::Node, 41);
    }
}
