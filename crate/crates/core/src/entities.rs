//! Gazetteer-driven entity recognition with fuzzy matching and pattern rules.
//!
//! Recognition runs in passes over the token sequence:
//!
//! 1. exact gazetteer lookup, longest n-gram (3, 2, 1) first, left to right;
//! 2. fuzzy lookup (edit distance, or prefix/suffix of a vaccine name) on
//!    the tokens no exact span covers;
//! 3. pattern rules for dates, money and cardinals on what is left;
//! 4. context rules that retype ambiguous surfaces (bare "johnson" near a
//!    vaccine mention).
//!
//! Spans never overlap and come back ordered by start index.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::{self, TokenizedText};

const SEED_VAC: &str = include_str!("../data/gazetteer_vac_seed.json");
const SEED_VACCINES: &str = include_str!("../data/gazetteer_vaccines.json");
const SEED_GENERAL: &str = include_str!("../data/gazetteer_general.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "VAC_TYPE")]
    VacType,
    #[serde(rename = "PERSON")]
    Person,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "GPE")]
    Gpe,
    #[serde(rename = "CARDINAL")]
    Cardinal,
    #[serde(rename = "MONEY")]
    Money,
    #[serde(rename = "NORP")]
    Norp,
    #[serde(rename = "EVENT")]
    Event,
    #[serde(rename = "DATE")]
    Date,
    #[serde(rename = "OTHER")]
    Other,
}

impl EntityType {
    pub const ALL: [EntityType; 10] = [
        EntityType::VacType,
        EntityType::Person,
        EntityType::Org,
        EntityType::Gpe,
        EntityType::Cardinal,
        EntityType::Money,
        EntityType::Norp,
        EntityType::Event,
        EntityType::Date,
        EntityType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::VacType => "VAC_TYPE",
            EntityType::Person => "PERSON",
            EntityType::Org => "ORG",
            EntityType::Gpe => "GPE",
            EntityType::Cardinal => "CARDINAL",
            EntityType::Money => "MONEY",
            EntityType::Norp => "NORP",
            EntityType::Event => "EVENT",
            EntityType::Date => "DATE",
            EntityType::Other => "OTHER",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_uppercase();
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str() == upper)
            .ok_or_else(|| Error::Validation(format!("unknown entity type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMethod {
    Exact,
    Fuzzy,
    Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpan {
    /// The matched tokens joined by spaces.
    pub surface: String,
    /// Gazetteer surface the span resolved to (equal to `surface` for
    /// exact and rule matches of plain tokens).
    pub canonical: String,
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub etype: EntityType,
    pub method: MatchMethod,
    pub score: f64,
}

impl EntitySpan {
    /// Identity used when comparing entities across posts: the canonical
    /// surface without `#` and spaces, plus the type.
    pub fn key(&self) -> (String, EntityType) {
        (entity_key(&self.canonical), self.etype)
    }
}

pub fn entity_key(surface: &str) -> String {
    surface.chars().filter(|&c| c != '#' && c != ' ').collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub surface: String,
    #[serde(rename = "type")]
    pub etype: String,
}

/// Surface → type dictionary. Every surface is indexed under its
/// normalized form and its space-stripped form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gazetteer {
    entries: BTreeMap<String, EntityType>,
    #[serde(skip)]
    stripped: BTreeMap<String, (String, EntityType)>,
    version: u64,
}

impl Default for Gazetteer {
    fn default() -> Self {
        Gazetteer {
            entries: BTreeMap::new(),
            stripped: BTreeMap::new(),
            version: 1,
        }
    }
}

/// VAC_TYPE shadows everything else; otherwise the newer value wins.
fn merge_priority(existing: EntityType, incoming: EntityType) -> EntityType {
    if existing == EntityType::VacType {
        EntityType::VacType
    } else {
        incoming
    }
}

impl Gazetteer {
    /// Merge seed sets in order. Conflicts inside one set are fatal; across
    /// sets VAC_TYPE wins, otherwise the later set wins with a warning.
    pub fn from_seed_sets(sets: &[(String, Vec<SeedEntry>)]) -> Result<Self> {
        let mut entries: BTreeMap<String, EntityType> = BTreeMap::new();
        for (name, seeds) in sets {
            let mut local: BTreeMap<String, EntityType> = BTreeMap::new();
            for seed in seeds {
                let etype: EntityType = seed.etype.parse()?;
                let surface = textprep::normalize_phrase(&seed.surface);
                if surface.is_empty() {
                    return Err(Error::Validation(format!("{name}: empty surface {:?}", seed.surface)));
                }
                match local.get(&surface) {
                    Some(&prev) if prev != etype => {
                        return Err(Error::Validation(format!(
                            "{name}: {surface:?} maps to both {prev} and {etype}"
                        )));
                    }
                    _ => {
                        local.insert(surface, etype);
                    }
                }
            }
            for (surface, etype) in local {
                match entries.get(&surface) {
                    Some(&prev) if prev != etype => {
                        let winner = merge_priority(prev, etype);
                        if winner != EntityType::VacType || prev != EntityType::VacType {
                            log::warn!("gazetteer {name}: {surface:?} {prev} -> {winner}");
                        }
                        entries.insert(surface, winner);
                    }
                    _ => {
                        entries.insert(surface, etype);
                    }
                }
            }
        }
        Ok(Self::from_entries(entries, 1))
    }

    fn from_entries(entries: BTreeMap<String, EntityType>, version: u64) -> Self {
        let mut g = Gazetteer {
            entries,
            stripped: BTreeMap::new(),
            version,
        };
        g.rebuild_index();
        g
    }

    fn rebuild_index(&mut self) {
        let mut stripped: BTreeMap<String, (String, EntityType)> = BTreeMap::new();
        for (surface, &etype) in &self.entries {
            let key = surface.replace(' ', "");
            match stripped.get(&key) {
                Some((_, prev)) if merge_priority(*prev, etype) == *prev && *prev != etype => {}
                _ => {
                    stripped.insert(key, (surface.clone(), etype));
                }
            }
        }
        self.stripped = stripped;
    }

    pub fn parse_seed_file(json: &str) -> Result<Vec<SeedEntry>> {
        serde_json::from_str(json).map_err(|e| Error::json("gazetteer seed file", e))
    }

    pub fn load(paths: &[&Path]) -> Result<Self> {
        let mut sets = Vec::new();
        for path in paths {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(*path, e))?;
            sets.push((path.display().to_string(), Self::parse_seed_file(&text)?));
        }
        Self::from_seed_sets(&sets)
    }

    /// The 14 hand-labeled VAC_TYPE seed surfaces only.
    pub fn vaccine_seed() -> Vec<SeedEntry> {
        Self::parse_seed_file(SEED_VAC).expect("builtin seed parses")
    }

    /// General entities, then the VAC_TYPE seed list, then further vaccine
    /// names.
    pub fn builtin() -> Self {
        let sets = vec![
            ("general".to_string(), Self::parse_seed_file(SEED_GENERAL).expect("builtin seed parses")),
            ("vac_seed".to_string(), Self::vaccine_seed()),
            ("vaccines".to_string(), Self::parse_seed_file(SEED_VACCINES).expect("builtin seed parses")),
        ];
        Self::from_seed_sets(&sets).expect("builtin gazetteer is consistent")
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &BTreeMap<String, EntityType> {
        &self.entries
    }

    /// Exact lookup of a normalized surface, falling back to the
    /// space-stripped index. Returns the matched gazetteer surface.
    pub fn lookup(&self, surface: &str) -> Option<(&str, EntityType)> {
        if let Some((k, &t)) = self.entries.get_key_value(surface) {
            return Some((k.as_str(), t));
        }
        self.stripped
            .get(&surface.replace(' ', ""))
            .map(|(s, t)| (s.as_str(), *t))
    }

    /// Add labeled surfaces, overriding existing entries. Conflicting
    /// duplicates within the batch are rejected. The input is untouched.
    pub fn augment(&self, labeled: &[(String, EntityType)]) -> Result<Gazetteer> {
        let mut batch: BTreeMap<String, EntityType> = BTreeMap::new();
        for (surface, etype) in labeled {
            let norm = textprep::normalize_phrase(surface);
            if norm.is_empty() {
                return Err(Error::Validation(format!("empty surface {surface:?}")));
            }
            if let Some(&prev) = batch.get(&norm) {
                if prev != *etype {
                    return Err(Error::Validation(format!("{norm:?} labeled both {prev} and {etype}")));
                }
            }
            batch.insert(norm, *etype);
        }
        let mut entries = self.entries.clone();
        let mut changed = false;
        for (surface, etype) in batch {
            if entries.insert(surface, etype) != Some(etype) {
                changed = true;
            }
        }
        if !changed {
            return Ok(self.clone());
        }
        Ok(Self::from_entries(entries, self.version + 1))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("gazetteer", e))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let mut g: Gazetteer = serde_json::from_str(json).map_err(|e| Error::json("gazetteer", e))?;
        g.rebuild_index();
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzyConfig {
    pub max_edit: usize,
    pub min_len: usize,
    /// Minimum length of a token matched as a prefix/suffix of a vaccine
    /// name. The token must also cover at least half of the name.
    pub affix_min_len: usize,
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        FuzzyConfig {
            max_edit: 1,
            min_len: 4,
            affix_min_len: 5,
        }
    }
}

/// Retype `surface` as `etype` when another `etype` entity or a cue word is
/// within `window` tokens; otherwise leave it to the gazetteer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRule {
    pub surface: String,
    #[serde(rename = "type")]
    pub etype: EntityType,
    pub window: usize,
    pub cues: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognizerConfig {
    pub fuzzy: FuzzyConfig,
    pub context_rules: Vec<ContextRule>,
    /// Words that make a magnitude ("millions") or a number monetary.
    pub money_cues: Vec<String>,
    pub money_window: usize,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        RecognizerConfig {
            fuzzy: FuzzyConfig::default(),
            context_rules: vec![ContextRule {
                surface: "johnson".into(),
                etype: EntityType::VacType,
                window: 3,
                cues: vec!["vaccine".into(), "vaccines".into()],
            }],
            money_cues: [
                "dollars", "dollar", "usd", "money", "paid", "pay", "pays", "paying", "profit", "profits", "cost",
                "costs", "funding", "funded", "fund", "earn", "earned", "earns", "revenue", "price", "prices", "bucks",
                "euros", "pounds", "cash", "spent", "spend", "worth",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            money_window: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyHit {
    pub surface: String,
    pub etype: EntityType,
    pub distance: usize,
    pub score: f64,
}

/// Nearest gazetteer surface within `max_edit` edits (both strings at least
/// `min_len` characters), or a single-word vaccine name the token is a long
/// enough prefix/suffix of. Affix hits count the missing characters as their
/// distance. Ties go to the lexicographically smaller surface.
pub fn fuzzy_match(token: &str, g: &Gazetteer, cfg: &FuzzyConfig) -> Option<FuzzyHit> {
    let token = textprep::strip_hash(token);
    let token_len = token.chars().count();
    if !token.chars().any(char::is_alphabetic) {
        return None;
    }
    let offer = |distance: usize, surface: &str, etype: EntityType, best: &mut Option<(usize, String, EntityType)>| {
        let better = match best {
            None => true,
            Some((d, s, _)) => distance < *d || (distance == *d && surface < s.as_str()),
        };
        if better {
            *best = Some((distance, surface.to_string(), etype));
        }
    };
    let mut found: Option<(usize, String, EntityType)> = None;

    if token_len >= cfg.min_len {
        for (key, (surface, etype)) in &g.stripped {
            let len = key.chars().count();
            if len < cfg.min_len || len.abs_diff(token_len) > cfg.max_edit {
                continue;
            }
            let d = strsim::levenshtein(token, key);
            if d <= cfg.max_edit && d > 0 {
                offer(d, surface, *etype, &mut found);
            }
        }
    }
    if token_len >= cfg.affix_min_len {
        for (surface, &etype) in &g.entries {
            if etype != EntityType::VacType || surface.contains(' ') {
                continue;
            }
            let plain = textprep::strip_hash(surface);
            let len = plain.chars().count();
            let covers_half = 2 * token_len >= len;
            if len > token_len && covers_half && (plain.starts_with(token) || plain.ends_with(token)) {
                offer(len - token_len, surface, etype, &mut found);
            }
        }
    }

    found.map(|(distance, surface, etype)| {
        let longest = token_len.max(textprep::strip_hash(&surface).chars().count()).max(1);
        FuzzyHit {
            score: 1.0 - distance as f64 / longest as f64,
            surface,
            etype,
            distance,
        }
    })
}

const MAGNITUDES: &[&str] = &["million", "millions", "billion", "billions", "trillion", "trillions"];
const MONTHS: &[&str] = &[
    "january", "february", "march", "april", "may", "june", "july", "august", "september", "october", "november",
    "december", "jan", "feb", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
];
/// Month names that are also common words; dated only next to a number.
const AMBIGUOUS_MONTHS: &[&str] = &["march", "may", "jan", "jun", "jul", "aug", "sep", "oct", "nov", "dec", "apr"];

fn strip_currency(token: &str) -> (&str, bool) {
    match token.chars().next() {
        Some(c) if matches!(c, '$' | '€' | '£' | '¥') => (&token[c.len_utf8()..], true),
        _ => (token, false),
    }
}

fn is_number(token: &str) -> bool {
    let (rest, _) = strip_currency(token);
    rest.chars().any(|c| c.is_ascii_digit()) && rest.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.')
}

fn is_year(token: &str) -> bool {
    token.len() == 4 && token.parse::<u32>().is_ok_and(|y| (1900..=2099).contains(&y))
}

fn is_day(token: &str) -> bool {
    token.parse::<u32>().is_ok_and(|d| (1..=31).contains(&d))
}

pub fn recognize(t: &TokenizedText, g: &Gazetteer, cfg: &RecognizerConfig) -> Vec<EntitySpan> {
    let tokens = &t.tokens;
    let n = tokens.len();
    let mut covered = vec![false; n];
    let mut spans: Vec<EntitySpan> = Vec::new();

    // exact, longest first
    let mut i = 0;
    while i < n {
        let mut matched = false;
        for len in (1..=3.min(n - i)).rev() {
            let gram = tokens[i..i + len].join(" ");
            let hit = g.lookup(&gram).or_else(|| {
                if len == 1 && gram.starts_with('#') {
                    g.lookup(textprep::strip_hash(&gram))
                } else {
                    None
                }
            });
            if let Some((canonical, etype)) = hit {
                spans.push(EntitySpan {
                    surface: gram,
                    canonical: canonical.to_string(),
                    start: i,
                    end: i + len,
                    etype,
                    method: MatchMethod::Exact,
                    score: 1.0,
                });
                covered[i..i + len].iter_mut().for_each(|c| *c = true);
                i += len;
                matched = true;
                break;
            }
        }
        if !matched {
            i += 1;
        }
    }

    // fuzzy on what is left
    for (i, tok) in tokens.iter().enumerate() {
        if covered[i] {
            continue;
        }
        if let Some(hit) = fuzzy_match(tok, g, &cfg.fuzzy) {
            spans.push(EntitySpan {
                surface: tok.clone(),
                canonical: hit.surface,
                start: i,
                end: i + 1,
                etype: hit.etype,
                method: MatchMethod::Fuzzy,
                score: hit.score,
            });
            covered[i] = true;
        }
    }

    apply_patterns(tokens, &mut covered, &mut spans, cfg);
    apply_context_rules(tokens, &mut covered, &mut spans, cfg);

    spans.sort_by_key(|s| s.start);
    spans
}

fn rule_span(tokens: &[String], start: usize, end: usize, etype: EntityType) -> EntitySpan {
    let surface = tokens[start..end].join(" ");
    EntitySpan {
        canonical: surface.clone(),
        surface,
        start,
        end,
        etype,
        method: MatchMethod::Rule,
        score: 1.0,
    }
}

fn apply_patterns(tokens: &[String], covered: &mut [bool], spans: &mut Vec<EntitySpan>, cfg: &RecognizerConfig) {
    let n = tokens.len();
    let free = |covered: &[bool], a: usize, b: usize| b <= n && covered[a..b].iter().all(|c| !c);
    let money_context = |i: usize| {
        let lo = i.saturating_sub(cfg.money_window);
        let hi = (i + cfg.money_window + 1).min(n);
        (lo..hi).any(|j| j != i && cfg.money_cues.iter().any(|c| c == &tokens[j]))
    };

    let mut i = 0;
    while i < n {
        if covered[i] {
            i += 1;
            continue;
        }
        let tok = tokens[i].as_str();
        let next = tokens.get(i + 1).map(String::as_str);

        let mut emit = |start: usize, end: usize, etype: EntityType, covered: &mut [bool]| {
            spans.push(rule_span(tokens, start, end, etype));
            covered[start..end].iter_mut().for_each(|c| *c = true);
            end
        };

        if MONTHS.contains(&tok) {
            let next_number = next.is_some_and(|x| is_day(x) || is_year(x)) && free(covered, i + 1, i + 2);
            if next_number {
                // "march 2021", "jan 5"; absorb a following year too
                let mut end = i + 2;
                if end < n && is_year(&tokens[end]) && !covered[end] && !is_year(&tokens[i + 1]) {
                    end += 1;
                }
                i = emit(i, end, EntityType::Date, covered);
                continue;
            }
            if !AMBIGUOUS_MONTHS.contains(&tok) {
                i = emit(i, i + 1, EntityType::Date, covered);
                continue;
            }
            i += 1;
            continue;
        }
        if (is_day(tok) || is_year(tok)) && next.is_some_and(|x| MONTHS.contains(&x)) && free(covered, i + 1, i + 2) {
            // "5 may", "5 may 2021"
            let mut end = i + 2;
            if end < n && is_year(&tokens[end]) && !covered[end] {
                end += 1;
            }
            i = emit(i, end, EntityType::Date, covered);
            continue;
        }
        if is_year(tok) && !next.is_some_and(|x| MAGNITUDES.contains(&x)) {
            i = emit(i, i + 1, EntityType::Date, covered);
            continue;
        }
        if is_number(tok) {
            let (_, currency) = strip_currency(tok);
            let magnitude = next.is_some_and(|x| MAGNITUDES.contains(&x)) && free(covered, i + 1, i + 2);
            let end = if magnitude { i + 2 } else { i + 1 };
            let money = currency || money_context(i) || (magnitude && money_context(i + 1));
            let etype = if money { EntityType::Money } else { EntityType::Cardinal };
            i = emit(i, end, etype, covered);
            continue;
        }
        if MAGNITUDES.contains(&tok) {
            let etype = if money_context(i) { EntityType::Money } else { EntityType::Cardinal };
            i = emit(i, i + 1, etype, covered);
            continue;
        }
        i += 1;
    }
}

fn apply_context_rules(tokens: &[String], covered: &mut [bool], spans: &mut Vec<EntitySpan>, cfg: &RecognizerConfig) {
    for rule in &cfg.context_rules {
        let target = textprep::normalize_phrase(&rule.surface);
        let positions: Vec<usize> = (0..tokens.len())
            .filter(|&i| textprep::strip_hash(&tokens[i]) == target)
            .collect();
        for i in positions {
            let anchored = spans.iter().any(|s| {
                s.etype == rule.etype
                    && !(s.start == i && s.end == i + 1)
                    && (s.start..s.end).any(|j| j.abs_diff(i) <= rule.window)
            });
            let cued = (i.saturating_sub(rule.window)..(i + rule.window + 1).min(tokens.len()))
                .any(|j| j != i && rule.cues.iter().any(|c| textprep::strip_hash(&tokens[j]) == c));
            if !(anchored || cued) {
                continue;
            }
            match spans.iter_mut().find(|s| s.start == i && s.end == i + 1) {
                Some(span) => {
                    span.etype = rule.etype;
                    span.method = MatchMethod::Rule;
                    span.canonical = target.clone();
                    span.score = 1.0;
                }
                None if !covered[i] => {
                    spans.push(EntitySpan {
                        surface: tokens[i].clone(),
                        canonical: target.clone(),
                        start: i,
                        end: i + 1,
                        etype: rule.etype,
                        method: MatchMethod::Rule,
                        score: 1.0,
                    });
                    covered[i] = true;
                }
                None => {}
            }
        }
    }
}

/// Span boundaries plus type, the unit of evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypedSpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub etype: EntityType,
}

impl From<&EntitySpan> for TypedSpan {
    fn from(s: &EntitySpan) -> Self {
        TypedSpan {
            start: s.start,
            end: s.end,
            etype: s.etype,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub id: String,
    pub spans: Vec<TypedSpan>,
}

/// Gold file: one `{"id", "spans": [{"start","end","type"}]}` per line.
pub fn load_gold(path: &Path) -> Result<Vec<GoldRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::json(format!("{} line {}", path.display(), i + 1), e)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_type: BTreeMap<EntityType, TypeScores>,
}

/// Span-level exact-match scores. `predicted[i]` and `gold[i]` describe the
/// same post. Precision is macro-averaged over types that were predicted,
/// recall over types present in gold, F1 over the union of both.
pub fn evaluate(predicted: &[Vec<TypedSpan>], gold: &[Vec<TypedSpan>]) -> Result<Evaluation> {
    if predicted.len() != gold.len() {
        return Err(Error::Validation(format!(
            "predicted covers {} posts, gold {}",
            predicted.len(),
            gold.len()
        )));
    }
    let gold_total: usize = gold.iter().map(Vec::len).sum();
    if gold_total == 0 {
        return Err(Error::EmptyGoldSet);
    }

    let mut counts: HashMap<EntityType, (usize, usize, usize)> = HashMap::new();
    let mut matched_total = 0;
    for (pred, gold) in predicted.iter().zip(gold) {
        let gold_set: HashSet<&TypedSpan> = gold.iter().collect();
        let pred_set: HashSet<&TypedSpan> = pred.iter().collect();
        for g in &gold_set {
            counts.entry(g.etype).or_default().0 += 1;
        }
        for p in &pred_set {
            let c = counts.entry(p.etype).or_default();
            c.1 += 1;
            if gold_set.contains(p) {
                c.2 += 1;
                matched_total += 1;
            }
        }
    }

    let mut per_type = BTreeMap::new();
    for (etype, (g, p, m)) in counts {
        let precision = (p > 0).then(|| m as f64 / p as f64);
        let recall = (g > 0).then(|| m as f64 / g as f64);
        let (pv, rv) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
        let f1 = if pv + rv > 0.0 { 2.0 * pv * rv / (pv + rv) } else { 0.0 };
        per_type.insert(
            etype,
            TypeScores {
                precision,
                recall,
                f1,
                gold: g,
                predicted: p,
                matched: m,
            },
        );
    }
    let mean = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    Ok(Evaluation {
        accuracy: matched_total as f64 / gold_total as f64,
        precision: mean(per_type.values().filter_map(|s| s.precision).collect()),
        recall: mean(per_type.values().filter_map(|s| s.recall).collect()),
        f1: mean(per_type.values().map(|s| s.f1).collect()),
        per_type,
    })
}
