//! TF-IDF features and a self-trained L2-regularized logistic regression.
//!
//! Labels map to targets `Misleading = +1`, `NonMisleading = -1`. Training
//! is full-batch gradient descent from the zero vector, so flipping every
//! label negates every weight exactly.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SparseFeatureVector<F: Real> {
    /// Strictly increasing feature indices.
    pub indices: Vec<usize>,
    pub values: Vec<F>,
    pub norm: F,
}

impl<F: Real> SparseFeatureVector<F> {
    pub fn zero() -> Self {
        SparseFeatureVector {
            indices: Vec::new(),
            values: Vec::new(),
            norm: F::zero(),
        }
    }

    /// Keeps nonzero entries only.
    pub fn from_dense(dense: &[F]) -> Self {
        let (indices, values): (Vec<usize>, Vec<F>) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, &v)| (i, v))
            .unzip();
        let norm = values.iter().map(|&v| v * v).sum::<F>().sqrt();
        SparseFeatureVector { indices, values, norm }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<F> {
        let mut out = vec![F::zero(); dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dot(&self, dense: &[F]) -> F {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| dense[i] * v)
            .sum()
    }

    /// Divides by the cached norm. Zero vectors stay zero.
    pub fn normalized(&self) -> Self {
        if self.norm.is_zero() {
            return self.clone();
        }
        let values: Vec<F> = self.values.iter().map(|&v| v / self.norm).collect();
        let norm = values.iter().map(|&v| v * v).sum::<F>().sqrt();
        SparseFeatureVector {
            indices: self.indices.clone(),
            values,
            norm,
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }
}

/// Vocabulary and smoothed idf, `ln((1 + n) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TfIdfVectorizer<F: Real> {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<F>,
}

impl<F: Real> TfIdfVectorizer<F> {
    pub fn fit<S: AsRef<str>>(documents: &[Vec<S>]) -> Self {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in documents {
            let mut seen: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
            seen.sort_unstable();
            seen.dedup();
            for term in seen {
                *df.entry(term).or_default() += 1;
            }
        }
        let n = F::from_count(documents.len());
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (index, (term, count)) in df.into_iter().enumerate() {
            vocabulary.insert(term.to_string(), index);
            idf.push(((F::one() + n) / (F::one() + F::from_count(count))).ln() + F::one());
        }
        TfIdfVectorizer { vocabulary, idf }
    }

    pub fn dimension(&self) -> usize {
        self.idf.len()
    }

    /// Raw term counts times idf, L2-normalized. Unknown terms are ignored.
    pub fn featurize<S: AsRef<str>>(&self, tokens: &[S]) -> SparseFeatureVector<F> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for token in tokens {
            if let Some(&i) = self.vocabulary.get(token.as_ref()) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let indices: Vec<usize> = counts.keys().copied().collect();
        let raw: Vec<F> = counts.iter().map(|(&i, &c)| F::from_count(c) * self.idf[i]).collect();
        let norm = raw.iter().map(|&v| v * v).sum::<F>().sqrt();
        if norm.is_zero() {
            return SparseFeatureVector::zero();
        }
        let values: Vec<F> = raw.iter().map(|&v| v / norm).collect();
        let norm = values.iter().map(|&v| v * v).sum::<F>().sqrt();
        SparseFeatureVector { indices, values, norm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub l2: f64,
    /// Multiplier on `1 / L`, where `L` bounds the loss curvature.
    pub learning_rate: f64,
    /// Step at epoch `t` is `learning_rate / (L * (1 + decay * t))`.
    pub decay: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2: 1e-2,
            learning_rate: 1.0,
            decay: 1e-3,
            max_epochs: 200,
            tolerance: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.l2 >= 0.0
            && self.l2.is_finite()
            && self.learning_rate > 0.0
            && self.learning_rate <= 2.0
            && self.decay >= 0.0
            && self.max_epochs > 0
            && self.tolerance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }
}

pub fn target<F: Real>(label: Label) -> Option<F> {
    match label {
        Label::Misleading => Some(F::one()),
        Label::NonMisleading => Some(-F::one()),
        Label::Unlabeled => None,
    }
}

/// Mean logistic loss plus `(l2 / 2) * |w|^2`. The bias is not penalized.
/// `ys` holds targets in {-1, +1}.
pub fn logistic_loss<F: Real>(weights: &[F], bias: F, xs: &[SparseFeatureVector<F>], ys: &[F], l2: F) -> F {
    let n = F::from_count(xs.len().max(1));
    let data: F = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| softplus(-(y * (x.dot(weights) + bias))))
        .sum();
    data / n + l2 / F::lit(2.0) * weights.iter().map(|&w| w * w).sum::<F>()
}

/// Gradient of [`logistic_loss`] with respect to the weights and the bias.
pub fn logistic_gradient<F: Real>(
    weights: &[F],
    bias: F,
    xs: &[SparseFeatureVector<F>],
    ys: &[F],
    l2: F,
) -> (Vec<F>, F) {
    let n = F::from_count(xs.len().max(1));
    let mut grad: Vec<F> = weights.iter().map(|&w| l2 * w).collect();
    let mut grad_bias = F::zero();
    for (x, &y) in xs.iter().zip(ys) {
        let margin = y * (x.dot(weights) + bias);
        let coef = -y * sigmoid(-margin) / n;
        for (&i, &v) in x.indices.iter().zip(&x.values) {
            grad[i] += coef * v;
        }
        grad_bias += coef;
    }
    (grad, grad_bias)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LinearModel<F: Real> {
    pub weights: Vec<F>,
    pub bias: F,
    pub epochs: usize,
    pub gradient_norm: F,
}

impl<F: Real> LinearModel<F> {
    pub fn decision(&self, x: &SparseFeatureVector<F>) -> F {
        x.dot(&self.weights) + self.bias
    }

    /// Positive decision values are Misleading; zero falls to NonMisleading.
    /// Confidence is the sigmoid of the absolute decision value.
    pub fn predict(&self, x: &SparseFeatureVector<F>) -> Prediction {
        prediction_from_decision(self.decision(x).as_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub confidence: f64,
    pub decision: f64,
}

pub fn prediction_from_decision(z: f64) -> Prediction {
    Prediction {
        label: if z > 0.0 { Label::Misleading } else { Label::NonMisleading },
        confidence: sigmoid(z.abs()),
        decision: z,
    }
}

/// Full-batch gradient descent on the regularized logistic loss.
pub fn train_supervised<F: Real>(
    examples: &[(SparseFeatureVector<F>, Label)],
    dim: usize,
    cfg: &TrainConfig,
) -> Result<LinearModel<F>> {
    cfg.validate()?;
    let mut xs = Vec::with_capacity(examples.len());
    let mut ys = Vec::with_capacity(examples.len());
    for (x, label) in examples {
        let Some(y) = target::<F>(*label) else {
            return Err(Error::Validation("training example without a label".into()));
        };
        if x.max_index().is_some_and(|i| i >= dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.max_index().unwrap_or(0) + 1,
            });
        }
        xs.push(x.clone());
        ys.push(y);
    }
    let positives = ys.iter().filter(|&&y| y > F::zero()).count();
    if positives == 0 || positives == ys.len() {
        return Err(Error::DegenerateTrainingSet(format!(
            "{} examples, {} misleading",
            ys.len(),
            positives
        )));
    }

    let l2 = F::lit(cfg.l2);
    let mean_sq = xs.iter().map(|x| x.norm * x.norm).sum::<F>() / F::from_count(xs.len());
    let curvature = F::lit(0.25) * (mean_sq + F::one()) + l2;
    let mut weights = vec![F::zero(); dim];
    let mut bias = F::zero();
    let mut epochs = 0;
    let mut gradient_norm = F::infinity();
    while epochs < cfg.max_epochs {
        let (grad, grad_bias) = logistic_gradient(&weights, bias, &xs, &ys, l2);
        gradient_norm = (grad.iter().map(|&g| g * g).sum::<F>() + grad_bias * grad_bias).sqrt();
        if gradient_norm.as_f64() < cfg.tolerance {
            break;
        }
        let step = F::lit(cfg.learning_rate / (1.0 + cfg.decay * epochs as f64)) / curvature;
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= step * *g;
        }
        bias -= step * grad_bias;
        epochs += 1;
    }
    Ok(LinearModel {
        weights,
        bias,
        epochs,
        gradient_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchCap {
    /// Absolute number of admissions per round.
    Count(usize),
    /// Fraction of the initial unlabeled pool, at least one.
    Fraction(f64),
}

impl BatchCap {
    pub fn resolve(self, initial_unlabeled: usize) -> usize {
        match self {
            BatchCap::Count(n) => n,
            BatchCap::Fraction(f) => ((initial_unlabeled as f64 * f).floor() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfTrainConfig {
    pub confidence_threshold: f64,
    pub max_rounds: usize,
    pub batch_cap: BatchCap,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            confidence_threshold: 0.9,
            max_rounds: 10,
            batch_cap: BatchCap::Fraction(0.1),
        }
    }
}

impl SelfTrainConfig {
    /// A threshold of exactly 1.0 is allowed and admits only saturated scores.
    pub fn validate(&self) -> Result<()> {
        let tau_ok = self.confidence_threshold > 0.5 && self.confidence_threshold <= 1.0;
        let cap_ok = match self.batch_cap {
            BatchCap::Count(n) => n > 0,
            BatchCap::Fraction(f) => f > 0.0 && f <= 1.0,
        };
        if tau_ok && cap_ok && self.max_rounds > 0 {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid self-training config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub id: String,
    pub label: Label,
    pub round: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub pool_size: usize,
    pub admitted: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SelfTrainOutcome<F: Real> {
    pub model: LinearModel<F>,
    pub pseudo_labels: Vec<PseudoLabel>,
    pub rounds: Vec<RoundSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example<F: Real> {
    pub id: String,
    pub features: SparseFeatureVector<F>,
}

/// Train on the seed, then repeatedly admit the most confident predictions
/// on the unlabeled pool into the training set.
pub fn self_train<F: Real>(
    seed: &[(Example<F>, Label)],
    unlabeled: &[Example<F>],
    dim: usize,
    st: &SelfTrainConfig,
    cfg: &TrainConfig,
) -> Result<SelfTrainOutcome<F>> {
    st.validate()?;
    let cap = st.batch_cap.resolve(unlabeled.len());
    let mut pool: Vec<(SparseFeatureVector<F>, Label)> =
        seed.iter().map(|(e, l)| (e.features.clone(), *l)).collect();
    let mut remaining: Vec<&Example<F>> = unlabeled.iter().collect();
    let mut pseudo_labels = Vec::new();
    let mut rounds = Vec::new();
    let mut model = train_supervised(&pool, dim, cfg)?;
    let mut stale = false;

    for round in 1..=st.max_rounds {
        if stale {
            model = train_supervised(&pool, dim, cfg)?;
            stale = false;
        }
        let mut scored: Vec<(usize, Prediction)> = remaining
            .par_iter()
            .enumerate()
            .map(|(i, e)| (i, model.predict(&e.features)))
            .filter(|(_, p)| p.confidence >= st.confidence_threshold)
            .collect();
        scored.sort_by(|(ia, a), (ib, b)| {
            b.confidence
                .total_cmp(&a.confidence)
                .then_with(|| remaining[*ia].id.cmp(&remaining[*ib].id))
        });
        scored.truncate(cap);

        let pool_size = pool.len();
        let mut taken = vec![false; remaining.len()];
        for (i, p) in &scored {
            let e = remaining[*i];
            pool.push((e.features.clone(), p.label));
            pseudo_labels.push(PseudoLabel {
                id: e.id.clone(),
                label: p.label,
                round,
                confidence: p.confidence,
            });
            taken[*i] = true;
        }
        let mut keep = taken.iter().map(|t| !t);
        remaining.retain(|_| keep.next().unwrap_or(true));
        rounds.push(RoundSummary {
            round,
            pool_size,
            admitted: scored.len(),
            remaining: remaining.len(),
        });
        if scored.is_empty() {
            break;
        }
        stale = true;
    }
    if stale {
        model = train_supervised(&pool, dim, cfg)?;
    }
    Ok(SelfTrainOutcome {
        model,
        pseudo_labels,
        rounds,
    })
}

/// Serialized classifier: features, weights and training metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ClassifierModel<F: Real> {
    pub version: u64,
    pub trained_at: DateTime<Utc>,
    pub vectorizer: TfIdfVectorizer<F>,
    pub weights: Vec<F>,
    pub bias: F,
    pub train_config: TrainConfig,
    pub self_train_config: SelfTrainConfig,
    pub rounds: Vec<RoundSummary>,
}

impl<F: Real> ClassifierModel<F> {
    pub fn featurize<S: AsRef<str>>(&self, tokens: &[S]) -> SparseFeatureVector<F> {
        self.vectorizer.featurize(tokens)
    }

    pub fn decision(&self, x: &SparseFeatureVector<F>) -> F {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict_vector(&self, x: &SparseFeatureVector<F>) -> Prediction {
        prediction_from_decision(self.decision(x).as_f64())
    }

    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> Prediction {
        self.predict_vector(&self.featurize(tokens))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("classifier model", e))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(json).map_err(|e| Error::json("classifier model", e))?;
        if model.weights.len() != model.vectorizer.dimension() {
            return Err(Error::DimensionMismatch {
                expected: model.vectorizer.dimension(),
                found: model.weights.len(),
            });
        }
        Ok(model)
    }
}

pub struct TextDocument<'a> {
    pub id: &'a str,
    pub tokens: &'a [String],
}

pub struct TextTrainingOutcome<F: Real> {
    pub model: ClassifierModel<F>,
    pub pseudo_labels: Vec<PseudoLabel>,
}

/// Fit the vocabulary on every document, then self-train from the labeled
/// ones. The vocabulary is rebuilt from scratch on every call.
pub fn train_text_classifier<F: Real>(
    labeled: &[(TextDocument<'_>, Label)],
    unlabeled: &[TextDocument<'_>],
    version: u64,
    st: &SelfTrainConfig,
    cfg: &TrainConfig,
) -> Result<TextTrainingOutcome<F>> {
    let docs: Vec<&[String]> = labeled
        .iter()
        .map(|(d, _)| d.tokens)
        .chain(unlabeled.iter().map(|d| d.tokens))
        .collect();
    let owned: Vec<Vec<&str>> = docs.iter().map(|d| d.iter().map(String::as_str).collect()).collect();
    let vectorizer = TfIdfVectorizer::<F>::fit(&owned);
    let seed: Vec<(Example<F>, Label)> = labeled
        .iter()
        .map(|(d, l)| {
            (
                Example {
                    id: d.id.to_string(),
                    features: vectorizer.featurize(d.tokens),
                },
                *l,
            )
        })
        .collect();
    let pool: Vec<Example<F>> = unlabeled
        .iter()
        .map(|d| Example {
            id: d.id.to_string(),
            features: vectorizer.featurize(d.tokens),
        })
        .collect();
    let outcome = self_train(&seed, &pool, vectorizer.dimension(), st, cfg)?;
    Ok(TextTrainingOutcome {
        model: ClassifierModel {
            version,
            trained_at: Utc::now(),
            weights: outcome.model.weights,
            bias: outcome.model.bias,
            vectorizer,
            train_config: *cfg,
            self_train_config: *st,
            rounds: outcome.rounds,
        },
        pseudo_labels: outcome.pseudo_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(dense: &[f64]) -> SparseFeatureVector<f64> {
        SparseFeatureVector::from_dense(dense)
    }

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn fixture() -> Vec<(SparseFeatureVector<f64>, Label)> {
        (0..20)
            .map(|i| {
                let x = i as f64 / 19.0 * 4.0 - 2.0;
                let y = ((i * 7) % 5) as f64 / 4.0 - 0.5;
                let label = if x + 0.3 * y > 0.1 { Label::Misleading } else { Label::NonMisleading };
                (sv(&[x, y]), label)
            })
            .collect()
    }

    #[test]
    fn featurize_examples() {
        let v = TfIdfVectorizer::<f64>::fit(&[toks(&["a", "b"]), toks(&["a", "c"])]);
        let one = v.featurize(&["b"]);
        assert_eq!(one.values, vec![1.0]);
        assert!(v.featurize::<&str>(&[]).is_zero());
        assert!(v.featurize(&["zzz"]).is_zero());
        let two = v.featurize(&["b", "c"]);
        let r = 1.0 / 2f64.sqrt();
        assert!(two.values.iter().all(|&w| (w - r).abs() < 1e-15));
        assert!((two.norm - 1.0).abs() < 1e-15);
        // df=2 of n=2 gives idf 1, df=1 gives ln(3/2)+1
        assert_eq!(v.idf[v.vocabulary["a"]], 1.0);
        assert!((v.idf[v.vocabulary["b"]] - (1.5f64.ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn separable_points() {
        let data = vec![(sv(&[1.0, 0.0]), Label::Misleading), (sv(&[0.0, 1.0]), Label::NonMisleading)];
        let m = train_supervised(&data, 2, &TrainConfig::default()).unwrap();
        for (x, l) in &data {
            assert_eq!(m.predict(x).label, *l);
        }
    }

    #[test]
    fn single_class_is_degenerate() {
        let data = vec![(sv(&[1.0]), Label::Misleading), (sv(&[2.0]), Label::Misleading)];
        assert!(matches!(
            train_supervised(&data, 1, &TrainConfig::default()),
            Err(Error::DegenerateTrainingSet(_))
        ));
    }

    #[test]
    fn duplicated_dataset_same_signs() {
        let data = fixture();
        let doubled: Vec<_> = data.iter().chain(data.iter()).cloned().collect();
        let cfg = TrainConfig::default();
        let a = train_supervised(&data, 2, &cfg).unwrap();
        let b = train_supervised(&doubled, 2, &cfg).unwrap();
        for (x, _) in &data {
            assert_eq!(a.predict(x).label, b.predict(x).label);
        }
    }

    #[test]
    fn label_flip_negates_decisions() {
        let data = fixture();
        let flipped: Vec<_> = data.iter().map(|(x, l)| (x.clone(), l.flipped())).collect();
        let cfg = TrainConfig::default();
        let a = train_supervised(&data, 2, &cfg).unwrap();
        let b = train_supervised(&flipped, 2, &cfg).unwrap();
        for (x, _) in &data {
            assert_eq!(a.decision(x), -b.decision(x));
        }
        assert_eq!(a.decision(&SparseFeatureVector::zero()), -b.decision(&SparseFeatureVector::zero()));
    }

    #[test]
    fn zero_vector_predicts_bias_class() {
        let m = LinearModel::<f64> {
            weights: vec![1.0],
            bias: -0.7,
            epochs: 0,
            gradient_norm: 0.0,
        };
        let p = m.predict(&SparseFeatureVector::zero());
        assert_eq!(p.label, Label::NonMisleading);
        assert_eq!(p.confidence, sigmoid(0.7));
    }

    #[test]
    fn normalizing_a_normalized_vector_is_a_noop() {
        let v = TfIdfVectorizer::<f64>::fit(&[toks(&["a", "b", "b"]), toks(&["c"])]);
        let x = v.featurize(&["a", "b", "b"]);
        let m = LinearModel::<f64> {
            weights: vec![0.4, -1.1, 0.2],
            bias: 0.05,
            epochs: 0,
            gradient_norm: 0.0,
        };
        assert_eq!(m.predict(&x).label, m.predict(&x.normalized()).label);
        assert!((m.decision(&x) - m.decision(&x.normalized())).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = fixture();
        let xs: Vec<_> = data.iter().map(|(x, _)| x.clone()).collect();
        let ys: Vec<f64> = data.iter().map(|(_, l)| target(*l).unwrap()).collect();
        let w = vec![0.3, -0.8];
        let b = 0.2;
        let (g, gb) = logistic_gradient(&w, b, &xs, &ys, 0.01);
        let h = 1e-6;
        for i in 0..2 {
            let mut up = w.clone();
            let mut down = w.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (logistic_loss(&up, b, &xs, &ys, 0.01) - logistic_loss(&down, b, &xs, &ys, 0.01)) / (2.0 * h);
            assert!((fd - g[i]).abs() / g[i].abs().max(1e-8) < 1e-5);
        }
        let fd = (logistic_loss(&w, b + h, &xs, &ys, 0.01) - logistic_loss(&w, b - h, &xs, &ys, 0.01)) / (2.0 * h);
        assert!((fd - gb).abs() / gb.abs().max(1e-8) < 1e-5);
    }

    fn examples(data: &[(SparseFeatureVector<f64>, Label)], prefix: &str) -> Vec<(Example<f64>, Label)> {
        data.iter()
            .enumerate()
            .map(|(i, (x, l))| {
                (
                    Example {
                        id: format!("{prefix}{i:03}"),
                        features: x.clone(),
                    },
                    *l,
                )
            })
            .collect()
    }

    #[test]
    fn self_train_without_unlabeled_equals_supervised() {
        let data = fixture();
        let cfg = TrainConfig::default();
        let out = self_train(&examples(&data, "s"), &[], 2, &SelfTrainConfig::default(), &cfg).unwrap();
        assert_eq!(out.model, train_supervised(&data, 2, &cfg).unwrap());
        assert!(out.pseudo_labels.is_empty());
        assert_eq!(out.rounds.len(), 1);
    }

    #[test]
    fn unreachable_threshold_admits_nothing() {
        let data = fixture();
        let pool: Vec<Example<f64>> = examples(&data, "u").into_iter().map(|(e, _)| e).collect();
        let st = SelfTrainConfig {
            confidence_threshold: 1.0,
            ..Default::default()
        };
        let out = self_train(&examples(&data, "s"), &pool, 2, &st, &TrainConfig::default()).unwrap();
        assert!(out.pseudo_labels.is_empty());
        assert_eq!(out.rounds.len(), 1);
    }

    #[test]
    fn self_train_pool_grows_and_respects_cap() {
        let data = fixture();
        let seed = examples(&[data[0].clone(), data[19].clone()], "s");
        let pool: Vec<Example<f64>> = examples(&data[1..19], "u").into_iter().map(|(e, _)| e).collect();
        let st = SelfTrainConfig {
            confidence_threshold: 0.6,
            max_rounds: 10,
            batch_cap: BatchCap::Count(3),
        };
        let out = self_train(&seed, &pool, 2, &st, &TrainConfig::default()).unwrap();
        let mut prev = 0;
        for r in &out.rounds {
            assert!(r.pool_size >= prev);
            assert!(r.admitted <= 3);
            prev = r.pool_size;
        }
        for w in out.pseudo_labels.windows(2) {
            assert!(w[0].round <= w[1].round);
            if w[0].round == w[1].round {
                assert!(w[0].confidence >= w[1].confidence);
            }
        }
        assert!(!out.pseudo_labels.is_empty());
    }

    #[test]
    fn batch_cap_resolution() {
        assert_eq!(BatchCap::Fraction(0.1).resolve(900), 90);
        assert_eq!(BatchCap::Fraction(0.1).resolve(3), 1);
        assert_eq!(BatchCap::Count(7).resolve(3), 7);
        assert!(SelfTrainConfig { confidence_threshold: 0.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn text_model_round_trips() {
        let a = toks(&["vaccine", "kills", "hidden"]);
        let b = toks(&["vaccine", "safe", "trial"]);
        let c = toks(&["hidden", "kills"]);
        let out = train_text_classifier::<f32>(
            &[
                (TextDocument { id: "a", tokens: &a }, Label::Misleading),
                (TextDocument { id: "b", tokens: &b }, Label::NonMisleading),
            ],
            &[TextDocument { id: "c", tokens: &c }],
            1,
            &SelfTrainConfig::default(),
            &TrainConfig::default(),
        )
        .unwrap();
        assert_eq!(out.model.predict(&c).label, Label::Misleading);
        let back = ClassifierModel::<f32>::from_json(&out.model.to_json().unwrap()).unwrap();
        assert_eq!(back, out.model);
    }
}
