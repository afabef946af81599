use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::text::tokenize;
use crate::error::{Error, Result};
use crate::gateway::Gateway;

pub const HASHED_BOW_DIM: usize = 64;
const REMOTE_BATCH: usize = 64;

/// Text → vector mapping used before quantization.
#[derive(Clone)]
pub enum Embedder {
    /// Token counts through a seeded random projection; needs no model.
    HashedBow { seed: u64 },
    /// An embeddings endpoint.
    Remote(Arc<Gateway>),
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |hash, &b| {
        (hash ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

impl Embedder {
    pub fn hashed_bow() -> Self {
        Embedder::HashedBow { seed: 0 }
    }

    pub fn from_id(id: &str, remote: Option<Arc<Gateway>>) -> Result<Self> {
        match id {
            "hashed-bow" => Ok(Self::hashed_bow()),
            "remote" => remote.map(Embedder::Remote).ok_or_else(|| {
                Error::Config("embedder `remote` requires an `embedder` endpoint".into())
            }),
            other => Err(Error::Config(format!(
                "unknown embedder `{other}` (expected hashed-bow or remote)"
            ))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Embedder::HashedBow { .. } => "hashed-bow",
            Embedder::Remote(_) => "remote",
        }
    }

    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Err(Error::Precondition("no texts to embed".into()));
        }
        let vectors = match self {
            Embedder::HashedBow { seed } => texts.iter().map(|t| hashed_bow(t, *seed)).collect(),
            Embedder::Remote(gateway) => {
                let mut vectors = Vec::with_capacity(texts.len());
                for chunk in texts.chunks(REMOTE_BATCH) {
                    vectors.extend(gateway.embed(chunk)?);
                }
                vectors
            }
        };
        check_dimensions(&vectors)?;
        Ok(vectors)
    }
}

fn check_dimensions(vectors: &[Vec<f64>]) -> Result<()> {
    let expected = vectors.first().map(Vec::len).unwrap_or(0);
    match vectors.iter().find(|v| v.len() != expected) {
        Some(v) => Err(Error::DimensionMismatch {
            expected,
            got: v.len(),
        }),
        None => Ok(()),
    }
}

/// L2-normalized sum of per-token random directions, weighted by count.
pub fn hashed_bow(text: &str, seed: u64) -> Vec<f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for token in tokenize(text) {
        *counts.entry(token).or_default() += 1;
    }
    let mut vector = vec![0.0; HASHED_BOW_DIM];
    for (token, count) in counts {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ seed);
        for slot in vector.iter_mut() {
            *slot += count as f64 * rng.gen_range(-1.0..1.0);
        }
    }
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        vector.iter_mut().for_each(|x| *x /= norm);
    }
    vector
}
