//! Text embeddings for design descriptions.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LeonError, Result};
use crate::http::{join_url, JsonClient};

pub const DEFAULT_HASH_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSpec {
    FeatureHash {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Endpoint and key default to `EMBED_API_BASE` / `EMBED_API_KEY`.
    ExternalApi {
        model: String,
        #[serde(default)]
        endpoint: Option<String>,
    },
}

fn default_dim() -> usize {
    DEFAULT_HASH_DIM
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::FeatureHash { dim: DEFAULT_HASH_DIM, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub enum EmbeddingProvider {
    FeatureHash { dim: usize, seed: u64 },
    ExternalApi { endpoint: String, model: String, client: JsonClient },
}

pub(crate) fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Hashed features of a text: every token, every adjacent token pair (so
/// `name: value` lines keep their pairing) and the boundary-padded character
/// bigrams and trigrams of each token (so numerals sharing leading digits
/// overlap).
pub fn features(text: &str) -> Vec<String> {
    let tokens = tokenize(text);
    let mut out = Vec::with_capacity(tokens.len() * 4);
    for (i, t) in tokens.iter().enumerate() {
        out.push(format!("w:{t}"));
        if let Some(next) = tokens.get(i + 1) {
            out.push(format!("b:{t} {next}"));
        }
        let padded: Vec<char> = format!("<{t}>").chars().collect();
        for n in [2, 3] {
            for g in padded.windows(n) {
                out.push(format!("c:{}", g.iter().collect::<String>()));
            }
        }
    }
    out
}

/// Bucket and sign a feature hashes to.
pub fn bucket(feature: &str, dim: usize, seed: u64) -> (usize, f64) {
    let h = fnv1a(seed, feature.as_bytes());
    ((h % dim as u64) as usize, if h >> 63 == 0 { 1.0 } else { -1.0 })
}

fn l2_normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(LeonError::Numeric("embedding has zero or non-finite norm".into()));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}

impl EmbeddingProvider {
    pub fn from_spec(spec: &EmbeddingSpec) -> Result<Self> {
        match spec {
            EmbeddingSpec::FeatureHash { dim, seed } => {
                if *dim == 0 {
                    return Err(invalid("feature-hash dimension must be positive"));
                }
                Ok(EmbeddingProvider::FeatureHash { dim: *dim, seed: *seed })
            }
            EmbeddingSpec::ExternalApi { model, endpoint } => {
                let endpoint = match endpoint {
                    Some(e) => e.clone(),
                    None => std::env::var("EMBED_API_BASE")
                        .map_err(|_| invalid("EMBED_API_BASE is not set"))?,
                };
                let key = std::env::var("EMBED_API_KEY").ok();
                Ok(EmbeddingProvider::ExternalApi {
                    endpoint,
                    model: model.clone(),
                    client: JsonClient::new(key, Duration::from_secs(30)),
                })
            }
        }
    }

    pub fn feature_hash(dim: usize, seed: u64) -> Self {
        EmbeddingProvider::FeatureHash { dim, seed }
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        match self {
            EmbeddingProvider::FeatureHash { dim, seed } => {
                let feats = features(text);
                if feats.is_empty() {
                    return Err(invalid("text has no tokens to embed"));
                }
                let mut v = vec![0.0; *dim];
                for f in &feats {
                    let (i, s) = bucket(f, *dim, *seed);
                    v[i] += s;
                }
                // sign collisions can cancel every bucket; fall back to unsigned
                if v.iter().all(|x| *x == 0.0) {
                    for f in &feats {
                        v[bucket(f, *dim, *seed).0] += 1.0;
                    }
                }
                l2_normalize(v)
            }
            EmbeddingProvider::ExternalApi { endpoint, model, client } => {
                if text.trim().is_empty() {
                    return Err(invalid("cannot embed empty text"));
                }
                let body = serde_json::json!({ "model": model, "input": text });
                let reply = client.post(&join_url(endpoint, "embeddings"), &body)?;
                let raw = reply["data"][0]["embedding"]
                    .as_array()
                    .ok_or_else(|| LeonError::Transport("reply has no data[0].embedding".into()))?;
                let v = raw
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| LeonError::Transport("non-numeric embedding".into())))
                    .collect::<Result<Vec<_>>>()?;
                l2_normalize(v)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::mock;

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let p = EmbeddingProvider::feature_hash(256, 0);
        let a = p.embed("Dose: 32.0 mg").unwrap();
        assert_eq!(a, p.embed("Dose: 32.0 mg").unwrap());
        assert!((cos(&a, &a) - 1.0).abs() < 1e-9);
        assert!(p.embed("  ... ").is_err());
    }

    #[test]
    fn disjoint_features_are_orthogonal() {
        let (dim, seed) = (4096, 0);
        let p = EmbeddingProvider::feature_hash(dim, seed);
        let buckets = |t: &str| features(t).iter().map(|f| bucket(f, dim, seed).0).collect::<Vec<_>>();
        let a = "alpha beta";
        let b = "gimp quux";
        assert!(buckets(a).iter().all(|i| !buckets(b).contains(i)), "pick collision-free tokens");
        assert_eq!(cos(&p.embed(a).unwrap(), &p.embed(b).unwrap()), 0.0);
    }

    #[test]
    fn nearby_numerals_share_features() {
        let p = EmbeddingProvider::feature_hash(1024, 0);
        let a = p.embed("Dose: 32.0").unwrap();
        let near = p.embed("Dose: 35.0").unwrap();
        let far = p.embed("Dose: 87.0").unwrap();
        assert!(cos(&a, &near) > cos(&a, &far));
    }

    #[test]
    fn external_api_reads_first_embedding() {
        let (addr, seen, h) = mock::serve(vec![(200, r#"{"data":[{"embedding":[3.0,4.0]}]}"#.into())]);
        let client = JsonClient::new(None, Duration::from_secs(5));
        let p = EmbeddingProvider::ExternalApi { endpoint: addr, model: "m".into(), client };
        let v = p.embed("hello").unwrap();
        h.join().unwrap();
        assert!((v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.8).abs() < 1e-12);
        let sent: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(sent, serde_json::json!({"model": "m", "input": "hello"}));
    }
}
