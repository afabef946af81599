//! Temp-dir pipeline runs against the scripted fixture endpoint.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use bft_core::gateway::{Gateway, MockTransport};
use bft_core::pipeline::{Gateways, Pipeline, PipelineConfig, RunOptions};
use serde_json::{json, Value};
use tempfile::TempDir;

pub const DOCS: usize = 200;
/// Documents whose scripted score is 5 (every fourth one).
pub const SCORE5: usize = 50;
/// Documents the script answers without any score.
pub const UNSCORED: usize = 20;
/// Valid English rank-0 trees in the seed fixture.
pub const SEEDS: usize = 3;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures().join(name)
}

/// `doc-NNN` ids the script scores 5.
pub fn score5_ids() -> Vec<String> {
    (0..DOCS).filter(|i| i % 4 == 0).map(|i| format!("doc-{i:03}")).collect()
}

pub struct Harness {
    pub dir: TempDir,
    pub config: PipelineConfig,
    pub backward: Arc<MockTransport>,
    pub forward: Arc<MockTransport>,
    pub rewriter: Arc<MockTransport>,
    /// Concurrency for every role.
    pub concurrency: usize,
}

pub fn config_json(dir: &Path, filtering: bool, rewriting: bool, distilling: bool, concurrency: usize) -> Value {
    let endpoint = json!({
        "base_url": "http://127.0.0.1:9",
        "model_name": "scripted",
        "max_concurrency": concurrency,
        "retry_base_ms": 1,
        "max_retries": 1,
        "mock_fixture": fixture("mock_script.json"),
    });
    json!({
        "corpus": {"path": fixture("corpus_200.jsonl")},
        "endpoints": {"backward": endpoint, "forward": endpoint, "rewriter": endpoint},
        "stages": {"filtering": filtering, "rewriting": rewriting, "distilling": distilling},
        "seeds": {"sample_seed": 7, "kmeans_seed": 11},
        "paths": {"ledger": dir.join("ledger.jsonl"), "output_dir": dir.join("out")},
        "seed_data": {"path": fixture("seed_trees.jsonl")},
        "analysis": {"mauve_seeds": 2, "mauve": {"num_clusters": 5}},
    })
}

impl Harness {
    pub fn new(filtering: bool, rewriting: bool, distilling: bool) -> Self {
        Self::with_concurrency(filtering, rewriting, distilling, 4)
    }

    pub fn with_concurrency(filtering: bool, rewriting: bool, distilling: bool, concurrency: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let value = config_json(dir.path(), filtering, rewriting, distilling, concurrency);
        let config = PipelineConfig::from_json(&value.to_string()).unwrap();
        let mock = || Arc::new(MockTransport::from_file(&fixture("mock_script.json")).unwrap());
        Self {
            dir,
            config,
            backward: mock(),
            forward: mock(),
            rewriter: mock(),
            concurrency,
        }
    }

    pub fn out(&self) -> PathBuf {
        self.config.paths.output_dir.clone()
    }

    pub fn gateways(&self) -> Gateways {
        let endpoints = &self.config.endpoints;
        let gw = |name: &str, config: &Option<_>, transport: &Arc<MockTransport>| {
            config
                .clone()
                .map(|c| Arc::new(Gateway::new(name, c, transport.clone())))
        };
        Gateways {
            backward: gw("backward", &endpoints.backward, &self.backward),
            forward: gw("forward", &endpoints.forward, &self.forward),
            rewriter: gw("rewriter", &endpoints.rewriter, &self.rewriter),
            tokenizer: None,
            embedder: None,
        }
    }

    pub fn pipeline(&self, options: RunOptions) -> Pipeline {
        Pipeline::with_gateways(self.config.clone(), self.gateways(), options).unwrap()
    }

    pub fn total_calls(&self) -> usize {
        self.backward.calls() + self.forward.calls() + self.rewriter.calls()
    }

    pub fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.out().join(name)).unwrap()
    }

    pub fn lines(&self, name: &str) -> Vec<Value> {
        self.read(name)
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }
}
