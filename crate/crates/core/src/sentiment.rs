//! Lexicon-and-rule sentiment scoring.
//!
//! Each token contributes its lexicon valence, adjusted by the three tokens
//! before it (boosters/dampeners, negations), ALL-CAPS emphasis and a
//! contrastive "but". The summed valence, plus `!`/`?` emphasis, is squashed
//! to a compound score in (-1, 1) and thresholded into a class.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::{self, TokenizedText};

const BUILTIN_LEXICON: &str = include_str!("../data/sentiment_lexicon.tsv");
const BUILTIN_BOOSTERS: &str = include_str!("../data/boosters.tsv");
const BUILTIN_NEGATIONS: &str = include_str!("../data/negations.txt");

/// Rule constants. The defaults are the usual VADER values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SentimentConfig {
    pub negation_scalar: f64,
    pub caps_increment: f64,
    pub exclamation_increment: f64,
    pub max_exclamations: usize,
    pub question_increment: f64,
    pub question_cap: f64,
    pub normalization_alpha: f64,
    pub positive_threshold: f64,
    pub negative_threshold: f64,
    pub but_before: f64,
    pub but_after: f64,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        SentimentConfig {
            negation_scalar: -0.74,
            caps_increment: 0.733,
            exclamation_increment: 0.292,
            max_exclamations: 4,
            question_increment: 0.18,
            question_cap: 0.96,
            normalization_alpha: 15.0,
            positive_threshold: 0.05,
            negative_threshold: -0.05,
            but_before: 0.5,
            but_after: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentClass {
    Positive,
    Negative,
    Neutral,
}

impl SentimentClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SentimentClass::Positive => "positive",
            SentimentClass::Negative => "negative",
            SentimentClass::Neutral => "neutral",
        }
    }

    pub fn parse(s: &str) -> Option<SentimentClass> {
        match s.trim().to_lowercase().as_str() {
            "positive" => Some(SentimentClass::Positive),
            "negative" => Some(SentimentClass::Negative),
            "neutral" => Some(SentimentClass::Neutral),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub compound: f64,
    pub pos: f64,
    pub neu: f64,
    pub neg: f64,
    pub class: SentimentClass,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentimentLexicon {
    valences: HashMap<String, f64>,
    boosters: HashMap<String, f64>,
    negations: HashSet<String>,
}

impl SentimentLexicon {
    /// Parse `token \t valence [\t ...]` lines; extra columns are ignored so
    /// original VADER lexicon files load unchanged.
    pub fn parse(lexicon_tsv: &str, boosters_tsv: &str, negations: &str) -> Result<Self> {
        let mut valences = HashMap::new();
        for (i, line) in lexicon_tsv.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(token), Some(value)) = (cols.next(), cols.next()) else {
                return Err(Error::Validation(format!("sentiment lexicon line {}: expected token<TAB>valence", i + 1)));
            };
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("sentiment lexicon line {}: bad valence {value:?}", i + 1)))?;
            if !v.is_finite() {
                return Err(Error::Validation(format!("sentiment lexicon line {}: non-finite valence", i + 1)));
            }
            valences.entry(token.trim().to_lowercase()).or_insert(v);
        }

        let mut boosters = HashMap::new();
        for (i, line) in boosters_tsv.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let token = cols.next().unwrap_or_default().trim().to_lowercase();
            let delta = match cols.next() {
                Some(v) => v
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Validation(format!("booster line {}: bad delta {v:?}", i + 1)))?,
                None => 0.293,
            };
            boosters.insert(token, delta);
        }

        let negations = negations
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();

        Ok(SentimentLexicon {
            valences,
            boosters,
            negations,
        })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_LEXICON, BUILTIN_BOOSTERS, BUILTIN_NEGATIONS).expect("builtin sentiment lexicon parses")
    }

    pub fn load(lexicon: &Path, boosters: Option<&Path>, negations: Option<&Path>) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let lex = read(lexicon)?;
        let boost = match boosters {
            Some(p) => read(p)?,
            None => BUILTIN_BOOSTERS.to_string(),
        };
        let neg = match negations {
            Some(p) => read(p)?,
            None => BUILTIN_NEGATIONS.to_string(),
        };
        Self::parse(&lex, &boost, &neg)
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.valences.get(token).copied()
    }

    pub fn is_booster(&self, token: &str) -> bool {
        self.boosters.contains_key(token)
    }

    pub fn is_negation(&self, token: &str) -> bool {
        self.negations.contains(token) || token.contains("n't")
    }

    pub fn len(&self) -> usize {
        self.valences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }

    /// Lexicon entries, sorted by token.
    pub fn entries(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.valences.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

/// Threshold a compound score; both boundaries are inclusive.
pub fn classify(compound: f64, positive_threshold: f64, negative_threshold: f64) -> SentimentClass {
    if compound >= positive_threshold {
        SentimentClass::Positive
    } else if compound <= negative_threshold {
        SentimentClass::Negative
    } else {
        SentimentClass::Neutral
    }
}

#[derive(Debug, Clone)]
pub struct SentimentAnalyzer {
    lexicon: SentimentLexicon,
    config: SentimentConfig,
    version: u64,
}

impl Default for SentimentAnalyzer {
    fn default() -> Self {
        Self::new(SentimentLexicon::builtin(), SentimentConfig::default())
    }
}

impl SentimentAnalyzer {
    pub fn new(lexicon: SentimentLexicon, config: SentimentConfig) -> Self {
        SentimentAnalyzer {
            lexicon,
            config,
            version: 1,
        }
    }

    pub fn lexicon(&self) -> &SentimentLexicon {
        &self.lexicon
    }

    pub fn config(&self) -> &SentimentConfig {
        &self.config
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn classify(&self, compound: f64) -> SentimentClass {
        classify(compound, self.config.positive_threshold, self.config.negative_threshold)
    }

    /// `x / sqrt(x² + alpha)`, kept strictly inside (-1, 1).
    pub fn normalize(&self, raw: f64) -> f64 {
        let alpha = self.config.normalization_alpha;
        // divide through by |raw| where raw*raw would overflow
        let c = if raw.abs() > 1e150 {
            raw.signum() / (1.0 + alpha / raw / raw).sqrt()
        } else {
            raw / (raw * raw + alpha).sqrt()
        };
        let below_one = 1.0 - f64::EPSILON / 2.0;
        c.clamp(-below_one, below_one)
    }

    pub fn score(&self, text: &TokenizedText) -> SentimentScore {
        let sentiments = self.token_valences(text);
        if sentiments.is_empty() {
            return SentimentScore {
                compound: 0.0,
                pos: 0.0,
                neu: 1.0,
                neg: 0.0,
                class: SentimentClass::Neutral,
            };
        }

        let emphasis = self.punctuation_emphasis(text);
        let mut sum: f64 = sentiments.iter().sum();
        if sum > 0.0 {
            sum += emphasis;
        } else if sum < 0.0 {
            sum -= emphasis;
        }
        let compound = self.normalize(sum);

        let mut pos_sum = 0.0;
        let mut neg_sum = 0.0;
        let mut neu_count = 0.0;
        for &s in &sentiments {
            if s > 0.0 {
                pos_sum += s + 1.0;
            } else if s < 0.0 {
                neg_sum += s - 1.0;
            } else {
                neu_count += 1.0;
            }
        }
        if pos_sum > neg_sum.abs() {
            pos_sum += emphasis;
        } else if pos_sum < neg_sum.abs() {
            neg_sum -= emphasis;
        }
        let total = pos_sum + neg_sum.abs() + neu_count;
        let pos = (pos_sum / total).abs();
        let neg = (neg_sum / total).abs();
        let neu = 1.0 - pos - neg;

        SentimentScore {
            compound,
            pos,
            neu,
            neg,
            class: self.classify(compound),
        }
    }

    fn punctuation_emphasis(&self, text: &TokenizedText) -> f64 {
        let c = &self.config;
        let ep = text.exclamations.min(c.max_exclamations) as f64 * c.exclamation_increment;
        let qm = match text.questions {
            0 | 1 => 0.0,
            n if n <= 3 => n as f64 * c.question_increment,
            _ => c.question_cap,
        };
        ep + qm
    }

    /// Per-token adjusted valences, including the "but" reweighting.
    pub fn token_valences(&self, text: &TokenizedText) -> Vec<f64> {
        let words: Vec<&str> = text.tokens.iter().map(|t| textprep::strip_hash(t)).collect();
        let caps_count = text.caps.iter().filter(|&&c| c).count();
        let cap_diff = caps_count > 0 && caps_count < words.len();

        let mut sentiments: Vec<f64> = (0..words.len())
            .map(|i| self.token_valence(&words, &text.caps, cap_diff, i))
            .collect();

        if let Some(bi) = words.iter().position(|&w| w == "but") {
            for (si, s) in sentiments.iter_mut().enumerate() {
                if si < bi {
                    *s *= self.config.but_before;
                } else if si > bi {
                    *s *= self.config.but_after;
                }
            }
        }
        sentiments
    }

    fn token_valence(&self, words: &[&str], caps: &[bool], cap_diff: bool, i: usize) -> f64 {
        let lex = &self.lexicon;
        let c = &self.config;
        let item = words[i];
        if lex.is_booster(item) || (item == "kind" && words.get(i + 1) == Some(&"of")) {
            return 0.0;
        }
        let Some(base) = lex.valence(item) else {
            return 0.0;
        };

        let mut valence = base;
        if item == "no" && words.get(i + 1).is_some_and(|n| lex.valence(n).is_some()) {
            valence = 0.0;
        }
        let back = |k: usize| if i >= k { Some(words[i - k]) } else { None };
        if back(1) == Some("no")
            || back(2) == Some("no")
            || (back(3) == Some("no") && matches!(back(1), Some("or") | Some("nor")))
        {
            valence = base * c.negation_scalar;
        }

        if caps.get(i).copied().unwrap_or(false) && cap_diff {
            if valence > 0.0 {
                valence += c.caps_increment;
            } else if valence < 0.0 {
                valence -= c.caps_increment;
            }
        }

        for start in 0..3 {
            let Some(prev) = back(start + 1) else { break };
            if lex.valence(prev).is_some() {
                continue;
            }
            let mut s = self.scalar_inc_dec(prev, caps[i - start - 1], valence, cap_diff);
            if start == 1 {
                s *= 0.95;
            } else if start == 2 {
                s *= 0.9;
            }
            valence += s;
            valence = self.negation_check(valence, words, start, i);
        }

        // "least X" negates unless it reads "at least" / "very least"
        if i > 0 && words[i - 1] == "least" && lex.valence("least").is_none() {
            let guarded = i > 1 && matches!(words[i - 2], "at" | "very");
            if !guarded {
                valence *= c.negation_scalar;
            }
        }
        valence
    }

    fn scalar_inc_dec(&self, word: &str, word_caps: bool, valence: f64, cap_diff: bool) -> f64 {
        let Some(&delta) = self.lexicon.boosters.get(word) else {
            return 0.0;
        };
        let mut scalar = if valence < 0.0 { -delta } else { delta };
        if word_caps && cap_diff {
            if valence > 0.0 {
                scalar += self.config.caps_increment;
            } else {
                scalar -= self.config.caps_increment;
            }
        }
        scalar
    }

    fn negation_check(&self, valence: f64, words: &[&str], start: usize, i: usize) -> f64 {
        let n = self.config.negation_scalar;
        let neg = |w: &str| self.lexicon.is_negation(w);
        match start {
            0 if neg(words[i - 1]) => valence * n,
            1 => {
                if words[i - 2] == "never" && matches!(words[i - 1], "so" | "this") {
                    valence * 1.25
                } else if words[i - 2] == "without" && words[i - 1] == "doubt" {
                    valence
                } else if neg(words[i - 2]) {
                    valence * n
                } else {
                    valence
                }
            }
            2 => {
                if (words[i - 3] == "never" && matches!(words[i - 2], "so" | "this"))
                    || matches!(words[i - 1], "so" | "this")
                {
                    valence * 1.25
                } else if words[i - 3] == "without" && (words[i - 2] == "doubt" || words[i - 1] == "doubt") {
                    valence
                } else if neg(words[i - 3]) {
                    valence * n
                } else {
                    valence
                }
            }
            _ => valence,
        }
    }
}
