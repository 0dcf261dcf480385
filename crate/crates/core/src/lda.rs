//! Latent Dirichlet Allocation fitted by collapsed Gibbs sampling.
//!
//! The sampler keeps three count tables (document-topic, topic-word, topic
//! totals) and resamples each token's topic from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + α) · (n_kw + β) / (n_k + V·β)
//! ```
//!
//! with the token's own assignment removed from the counts. Sweeps visit
//! documents and tokens in a fixed order and draw from a seeded ChaCha RNG,
//! so a fit is a pure function of (corpus, parameters, seed).

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::{self, TokenizedText};
use crate::topics::TopicEntry;

/// English stopwords removed before fitting (distinct from any list the
/// classifier might use).
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are", "as", "at",
    "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "cannot", "could",
    "did", "do", "does", "doing", "don't", "down", "during", "each", "even", "ever", "every", "few", "for", "from",
    "further", "get", "got", "had", "has", "have", "having", "he", "her", "here", "hers", "herself", "him",
    "himself", "his", "how", "i", "i'm", "if", "in", "into", "is", "it", "it's", "its", "itself", "just", "let",
    "like", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once", "one",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "rt", "same", "she", "should", "so",
    "some", "such", "than", "that", "that's", "the", "their", "theirs", "them", "themselves", "then", "there",
    "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "us", "very", "via", "was",
    "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would", "you",
    "your", "yours", "yourself", "yourselves",
];

/// Drop stopwords, pure numbers and one-character tokens; hashtags lose
/// their `#` so `#pfizer` and `pfizer` share a vocabulary entry.
pub fn prepare_document(t: &TokenizedText) -> Vec<String> {
    let stop: HashSet<&str> = STOPWORDS.iter().copied().collect();
    t.tokens
        .iter()
        .map(|tok| textprep::strip_hash(tok))
        .filter(|tok| tok.chars().count() > 1)
        .filter(|tok| !tok.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.'))
        .filter(|tok| !stop.contains(tok))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub num_topics: usize,
    /// Document-topic prior.
    pub alpha: f64,
    /// Topic-word prior.
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaParams {
    /// `α = 50/T`, `β = 0.01`, 500 sweeps.
    pub fn with_topics(num_topics: usize) -> Self {
        LdaParams {
            num_topics,
            alpha: 50.0 / num_topics.max(1) as f64,
            beta: 0.01,
            iterations: 500,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_topics < 2 {
            return Err(Error::Validation("LDA needs at least 2 topics".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Validation("LDA priors must be positive and finite".into()));
        }
        Ok(())
    }
}

impl Default for LdaParams {
    fn default() -> Self {
        Self::with_topics(12)
    }
}

/// Fitted model: vocabulary, count tables and the final assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub params: LdaParams,
    pub vocabulary: Vec<String>,
    /// `topic_word[k][w]`
    pub topic_word: Vec<Vec<u32>>,
    pub topic_totals: Vec<u64>,
    /// `doc_topic[d][k]`; empty documents keep all-zero rows.
    pub doc_topic: Vec<Vec<u32>>,
    pub assignments: Vec<Vec<u16>>,
    pub iterations_run: usize,
    pub skipped_documents: usize,
}

impl LdaModel {
    pub fn num_topics(&self) -> usize {
        self.params.num_topics
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// Smoothed topic-word distributions; each row sums to 1.
    pub fn phi(&self) -> Vec<Vec<f64>> {
        let v = self.vocabulary.len() as f64;
        let beta = self.params.beta;
        self.topic_word
            .iter()
            .zip(&self.topic_totals)
            .map(|(row, &total)| {
                let denom = total as f64 + v * beta;
                row.iter().map(|&c| (c as f64 + beta) / denom).collect()
            })
            .collect()
    }

    /// Smoothed document-topic distributions; each row sums to 1.
    pub fn theta(&self) -> Vec<Vec<f64>> {
        let t = self.num_topics() as f64;
        let alpha = self.params.alpha;
        self.doc_topic
            .iter()
            .map(|row| {
                let n: u64 = row.iter().map(|&c| c as u64).sum();
                let denom = n as f64 + t * alpha;
                row.iter().map(|&c| (c as f64 + alpha) / denom).collect()
            })
            .collect()
    }

    /// Most probable topic per document (lowest index on ties).
    pub fn dominant_topics(&self) -> Vec<usize> {
        self.doc_topic
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, 0), |(bk, bc), (k, &c)| if c > bc { (k, c) } else { (bk, bc) })
                    .0
            })
            .collect()
    }

    /// `n` words of highest probability in `topic`, ties broken
    /// lexicographically. Returns the whole vocabulary if `n` exceeds it.
    pub fn top_words(&self, topic: usize, n: usize) -> Vec<String> {
        let Some(row) = self.topic_word.get(topic) else {
            return Vec::new();
        };
        let mut idx: Vec<usize> = (0..self.vocabulary.len()).collect();
        // φ within a topic is monotone in the raw count
        idx.sort_by(|&a, &b| row[b].cmp(&row[a]).then_with(|| self.vocabulary[a].cmp(&self.vocabulary[b])));
        idx.into_iter().take(n).map(|w| self.vocabulary[w].clone()).collect()
    }

    /// Exact bookkeeping identities: per-word counts summed over topics
    /// equal corpus frequencies, and every table agrees with the
    /// assignments.
    pub fn counts_consistent(&self, corpus_frequency: &[u64]) -> bool {
        let t = self.num_topics();
        let mut word_sums = vec![0u64; self.vocabulary.len()];
        for row in &self.topic_word {
            for (w, &c) in row.iter().enumerate() {
                word_sums[w] += c as u64;
            }
        }
        if word_sums != corpus_frequency {
            return false;
        }
        let row_totals_ok = self
            .topic_word
            .iter()
            .zip(&self.topic_totals)
            .all(|(row, &total)| row.iter().map(|&c| c as u64).sum::<u64>() == total);
        let docs_ok = self.doc_topic.iter().zip(&self.assignments).all(|(row, z)| {
            let mut counts = vec![0u32; t];
            for &k in z {
                counts[k as usize] += 1;
            }
            &counts == row
        });
        row_totals_ok && docs_ok
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("LDA model", e))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::json("LDA model", e))
    }
}

/// Step-wise sampler, exposed so callers can observe every sweep.
pub struct GibbsSampler {
    model: LdaModel,
    docs: Vec<Vec<usize>>,
    corpus_frequency: Vec<u64>,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
}

impl GibbsSampler {
    pub fn new(corpus: &[Vec<String>], params: LdaParams) -> Result<Self> {
        params.validate()?;
        if params.num_topics > u16::MAX as usize {
            return Err(Error::Validation("too many topics".into()));
        }

        let mut vocab_index: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in corpus {
            for w in doc {
                vocab_index.entry(w.as_str()).or_insert(0);
            }
        }
        if vocab_index.is_empty() {
            return Err(Error::EmptyCorpus("every document is empty after preprocessing".into()));
        }
        // lexicographic ids keep the model independent of document order
        for (i, (_, id)) in vocab_index.iter_mut().enumerate() {
            *id = i;
        }
        let vocabulary: Vec<String> = vocab_index.keys().map(|s| s.to_string()).collect();
        let docs: Vec<Vec<usize>> = corpus
            .iter()
            .map(|d| d.iter().map(|w| vocab_index[w.as_str()]).collect())
            .collect();

        let skipped = docs.iter().filter(|d| d.is_empty()).count();
        if skipped > 0 {
            log::warn!("LDA: skipping {skipped} empty document(s)");
        }

        let t = params.num_topics;
        let v = vocabulary.len();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut topic_word = vec![vec![0u32; v]; t];
        let mut topic_totals = vec![0u64; t];
        let mut doc_topic = vec![vec![0u32; t]; docs.len()];
        let mut corpus_frequency = vec![0u64; v];
        let mut assignments = Vec::with_capacity(docs.len());

        for (d, doc) in docs.iter().enumerate() {
            let mut z = Vec::with_capacity(doc.len());
            for &w in doc {
                let k = rng.random_range(0..t);
                z.push(k as u16);
                topic_word[k][w] += 1;
                topic_totals[k] += 1;
                doc_topic[d][k] += 1;
                corpus_frequency[w] += 1;
            }
            assignments.push(z);
        }

        Ok(GibbsSampler {
            model: LdaModel {
                params,
                vocabulary,
                topic_word,
                topic_totals,
                doc_topic,
                assignments,
                iterations_run: 0,
                skipped_documents: skipped,
            },
            docs,
            corpus_frequency,
            rng,
            weights: vec![0.0; t],
        })
    }

    /// One full pass over every token.
    pub fn sweep(&mut self) {
        let m = &mut self.model;
        let t = m.params.num_topics;
        let alpha = m.params.alpha;
        let beta = m.params.beta;
        let v_beta = m.vocabulary.len() as f64 * beta;

        for (d, doc) in self.docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = m.assignments[d][i] as usize;
                m.topic_word[old][w] -= 1;
                m.topic_totals[old] -= 1;
                m.doc_topic[d][old] -= 1;

                let mut total = 0.0;
                for k in 0..t {
                    let p = (m.doc_topic[d][k] as f64 + alpha) * (m.topic_word[k][w] as f64 + beta)
                        / (m.topic_totals[k] as f64 + v_beta);
                    total += p;
                    self.weights[k] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(t - 1);

                m.assignments[d][i] = new as u16;
                m.topic_word[new][w] += 1;
                m.topic_totals[new] += 1;
                m.doc_topic[d][new] += 1;
            }
        }
        m.iterations_run += 1;
    }

    pub fn model(&self) -> &LdaModel {
        &self.model
    }

    /// Corpus frequency of every vocabulary word, for bookkeeping checks.
    pub fn corpus_frequency(&self) -> &[u64] {
        &self.corpus_frequency
    }

    pub fn into_model(self) -> LdaModel {
        self.model
    }
}

/// Fit for `params.iterations` sweeps.
pub fn fit_lda(corpus: &[Vec<String>], params: LdaParams) -> Result<LdaModel> {
    let mut sampler = GibbsSampler::new(corpus, params)?;
    for _ in 0..params.iterations {
        sampler.sweep();
    }
    Ok(sampler.into_model())
}

/// Draft lexicon entries (`topic-0`, `topic-1`, ...) from each topic's top
/// words, to be renamed and pruned by a human curator.
pub fn suggest_lexicon(model: &LdaModel, words_per_topic: usize) -> Vec<TopicEntry> {
    (0..model.num_topics())
        .map(|k| TopicEntry {
            name: format!("topic-{k}"),
            keywords: model.top_words(k, words_per_topic),
            synonyms: Vec::new(),
        })
        .collect()
}
