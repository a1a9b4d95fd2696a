use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::filter::GraphFilter;
use crate::train::layer::GomkcnLayer;
use crate::train::mlp::{MlpHead, MlpRecord};
use crate::train::model::{GomkcnModel, ModelConfig, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub adjacency: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
    pub bounded_features: bool,
}

impl FilterRecord {
    pub fn from_filter(f: &GraphFilter) -> Self {
        let a = f.adjacency();
        let x = f.features();
        Self {
            adjacency: a.row_iter().map(|r| r.iter().copied().collect()).collect(),
            features: x.row_iter().map(|r| r.iter().copied().collect()).collect(),
            bounded_features: f.bounded_features(),
        }
    }

    pub fn to_filter(&self) -> Result<GraphFilter> {
        GraphFilter::from_matrices(&self.adjacency, &self.features, self.bounded_features)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: ModelConfig,
    pub task: Task,
    pub input_dim: usize,
    pub classes: usize,
}

/// Everything needed to resume or inspect a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// `[layer][filter]`; unsupervised runs store a single layer.
    pub filters: Vec<Vec<FilterRecord>>,
    pub front: Option<MlpRecord>,
    pub classifier: Option<MlpRecord>,
    pub model: Option<ModelMeta>,
    /// Resolved run configuration.
    pub config: serde_json::Value,
    pub epoch: usize,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_filters(filters: &[GraphFilter], config: serde_json::Value, epoch: usize, seed: u64) -> Self {
        Self {
            filters: vec![filters.iter().map(FilterRecord::from_filter).collect()],
            front: None,
            classifier: None,
            model: None,
            config,
            epoch,
            seed,
        }
    }

    pub fn from_model(model: &GomkcnModel, config: serde_json::Value, epoch: usize, seed: u64) -> Self {
        Self {
            filters: model
                .layers
                .iter()
                .map(|l| l.filters.iter().map(FilterRecord::from_filter).collect())
                .collect(),
            front: model.front.as_ref().map(MlpHead::to_record),
            classifier: Some(model.classifier.to_record()),
            model: Some(ModelMeta {
                config: model.config.clone(),
                task: model.task,
                input_dim: model.input_dim,
                classes: model.classes,
            }),
            config,
            epoch,
            seed,
        }
    }

    pub fn filters(&self) -> Result<Vec<Vec<GraphFilter>>> {
        self.filters
            .iter()
            .map(|layer| layer.iter().map(FilterRecord::to_filter).collect())
            .collect()
    }

    pub fn to_model(&self) -> Result<GomkcnModel> {
        let meta = self.model.as_ref().ok_or_else(|| Error::data("checkpoint holds no model"))?;
        let classifier = MlpHead::from_record(self.classifier.as_ref().ok_or_else(|| Error::data("checkpoint holds no classifier"))?)?;
        let front = self.front.as_ref().map(MlpHead::from_record).transpose()?;
        let cfg = &meta.config;
        let layers = self
            .filters()?
            .into_iter()
            .map(|filters| GomkcnLayer::new(filters, cfg.t, cfg.tau, cfg.hop_radius, cfg.size.unwrap_or(cfg.filter_nodes), cfg.truncation))
            .collect::<Result<Vec<_>>>()?;
        if layers.len() != cfg.depth {
            return Err(Error::data(format!("checkpoint has {} layers, config says {}", layers.len(), cfg.depth)));
        }
        Ok(GomkcnModel {
            config: cfg.clone(),
            task: meta.task,
            input_dim: meta.input_dim,
            classes: meta.classes,
            front,
            layers,
            classifier,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn model_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let config = ModelConfig {
            front_sizes: vec![4, 3],
            depth: 2,
            ..ModelConfig::default()
        };
        let model = GomkcnModel::new(config, Task::Node, 5, 3, &mut rng).unwrap();
        let ckpt = Checkpoint::from_model(&model, serde_json::json!({"k": 1}), 7, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.write(&path).unwrap();
        let back = Checkpoint::read(&path).unwrap();
        assert_eq!(back, ckpt);
        let restored = back.to_model().unwrap();
        assert_eq!(restored.layers, model.layers);
        assert_eq!(restored.classifier, model.classifier);
        assert_eq!(restored.front, model.front);
    }
}
