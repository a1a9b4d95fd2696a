//! Graph optimal matching kernel (GOMK) and kernel convolutional networks
//! built on it.
//!
//! A graph is viewed as the set of its node-centric `k`-hop subgraphs. Each
//! subgraph is encoded by `t`-level subtree embeddings (`(A^i F)_v` for
//! `i = 0..t`), and compared with small trainable graph filters through an
//! injective matching of subtrees that maximizes summed RBF similarity. The
//! per-filter responses form an interpretable node representation.
//!
//! ```
//! use gomk::{gomk, Graph, Matcher};
//! use nalgebra::DMatrix;
//!
//! let g = Graph::from_edges(3, &[(0, 1), (1, 2)], DMatrix::from_element(3, 2, 0.5)).unwrap();
//! let k = gomk(&g, &g, 2, 1.0, Matcher::Greedy).unwrap();
//! assert_eq!(k.kappa, 9.0); // m (t + 1)
//! ```

pub mod data;
pub mod error;
pub mod experiments;
pub mod export;
pub mod grad;
pub mod graph;
pub mod omk;
pub mod synth;
pub mod train;
pub mod tse;

pub use error::{Error, Result};
pub use grad::{finite_difference_check, grad_kappa, grad_kappa_subgraph_features, FdReport, FilterGradient, GradientTape};
pub use graph::{extract_subgraph, induced_edges, Graph, GraphBundle, NodeCentricSubgraph, TruncationPolicy};
pub use omk::{gomk, greedy_match, kappa_under_matching, optimal_match, self_kernel, solid_similarity, KernelValue, Matcher, Matching};
pub use train::{GomkcnLayer, GomkcnModel, GraphFilter, ModelConfig, Pooling, Task, TrainConfig};
pub use tse::{encode, reconstruct_adjacency, Reconstruction, SubgraphEmbedding, SubtreeEmbedding};
