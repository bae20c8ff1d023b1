//! Hashed word and character n-gram features.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Word n-grams of order 1..=word_order.
    pub word_order: usize,
    /// Character n-gram length within each word (0 disables).
    pub char_ngram: usize,
    pub buckets: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            word_order: 2,
            char_ngram: 3,
            buckets: 1 << 14,
        }
    }
}

/// FNV-1a, 64 bit. Stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Sparse feature vector with sorted, unique bucket ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseFeatures {
    pub entries: Vec<(usize, f64)>,
}

impl SparseFeatures {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| dense[i] * w).sum()
    }

    pub fn l2_normalized(mut self) -> Self {
        let norm = self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut self.entries {
                *w /= norm;
            }
        }
        self
    }
}

impl FeatureConfig {
    fn bucket(&self, kind: u8, gram: &str) -> usize {
        let mut bytes = Vec::with_capacity(gram.len() + 1);
        bytes.push(kind);
        bytes.extend_from_slice(gram.as_bytes());
        (fnv1a(&bytes) % self.buckets as u64) as usize
    }

    /// Mean-pooling weights: each n-gram occurrence contributes 1/total, so
    /// weights sum to one. Empty text gives no features.
    pub fn featurize(&self, text: &str) -> SparseFeatures {
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower.split_whitespace().collect();
        let mut ids: Vec<usize> = Vec::new();
        for order in 1..=self.word_order.max(1) {
            for w in words.windows(order) {
                ids.push(self.bucket(b'w' + order as u8, &w.join(" ")));
            }
        }
        if self.char_ngram > 0 {
            for w in &words {
                let padded: Vec<char> = format!("<{w}>").chars().collect();
                if padded.len() <= self.char_ngram {
                    continue;
                }
                for g in padded.windows(self.char_ngram) {
                    ids.push(self.bucket(b'c', &g.iter().collect::<String>()));
                }
            }
        }
        if ids.is_empty() {
            return SparseFeatures::default();
        }
        let total = ids.len() as f64;
        ids.sort_unstable();
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for id in ids {
            match entries.last_mut() {
                Some((last, w)) if *last == id => *w += 1.0,
                _ => entries.push((id, 1.0)),
            }
        }
        for (_, w) in &mut entries {
            *w /= total;
        }
        SparseFeatures { entries }
    }
}
