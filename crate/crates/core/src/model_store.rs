//! JSON model files.
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "base_score": <real>,
//!   "feature_count": <int>,
//!   "config": { every BoostConfig field },
//!   "trees": [ <node>, ... ]
//! }
//! <node> := {"type": "split", "feature": <int>, "threshold": <real>, "left": <node>, "right": <node>}
//!         | {"type": "leaf", "weight": <real>, "row_count": <int>}
//! ```
//!
//! Reals are written in the shortest decimal form that parses back to the
//! same 64-bit value, so save/load is bit-exact. Trees nest one JSON object
//! per level; the parser's recursion limit caps loadable depth at about 120.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::booster::{BoostConfig, Model};
use crate::error::{Error, Result};
use crate::tree::{Node, Tree};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: u64,
    pub base_score: f64,
    pub feature_count: usize,
    pub config: BoostConfig,
    pub trees: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum NodeRecord {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<NodeRecord>,
        right: Box<NodeRecord>,
    },
    Leaf {
        weight: f64,
        row_count: usize,
    },
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u64,
}

fn nest(nodes: &[Node], index: usize) -> NodeRecord {
    match nodes[index] {
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => NodeRecord::Split {
            feature,
            threshold,
            left: Box::new(nest(nodes, left)),
            right: Box::new(nest(nodes, right)),
        },
        Node::Leaf { weight, row_count } => NodeRecord::Leaf { weight, row_count },
    }
}

fn flatten(record: &NodeRecord, nodes: &mut Vec<Node>) -> usize {
    let index = nodes.len();
    match record {
        NodeRecord::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            nodes.push(Node::Leaf {
                weight: 0.0,
                row_count: 0,
            });
            let left = flatten(left, nodes);
            let right = flatten(right, nodes);
            nodes[index] = Node::Split {
                feature: *feature,
                threshold: *threshold,
                left,
                right,
            };
        }
        NodeRecord::Leaf { weight, row_count } => nodes.push(Node::Leaf {
            weight: *weight,
            row_count: *row_count,
        }),
    }
    index
}

impl ModelDocument {
    pub fn from_model(model: &Model) -> Self {
        ModelDocument {
            format_version: FORMAT_VERSION,
            base_score: model.base_score,
            feature_count: model.feature_count,
            config: model.config.clone(),
            trees: model.trees.iter().map(|t| nest(t.nodes(), 0)).collect(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Version(self.format_version));
        }
        if !self.base_score.is_finite() {
            return Err(Error::NonFinite("base_score".into()));
        }
        self.config.validate()?;
        let mut trees = Vec::with_capacity(self.trees.len());
        for (i, record) in self.trees.iter().enumerate() {
            let mut nodes = Vec::new();
            flatten(record, &mut nodes);
            let tree = Tree::from_nodes(nodes)?;
            if let Some(feature) = tree.max_feature().filter(|&f| f >= self.feature_count) {
                return Err(Error::Schema(format!(
                    "tree {i} splits on feature {feature} but the model has {} features",
                    self.feature_count
                )));
            }
            trees.push(tree);
        }
        Ok(Model {
            base_score: self.base_score,
            trees,
            config: self.config,
            feature_count: self.feature_count,
        })
    }
}

pub fn to_string(model: &Model) -> String {
    let mut text = serde_json::to_string_pretty(&ModelDocument::from_model(model))
        .expect("model document serializes");
    text.push('\n');
    text
}

pub fn from_str(text: &str) -> Result<Model> {
    let probe: VersionProbe =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::Version(probe.format_version));
    }
    let document: ModelDocument =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    document.into_model()
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text)
}
