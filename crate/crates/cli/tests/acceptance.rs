//! Acceptance suite. Runs every primary criterion, prints one PASS/FAIL
//! line each, and exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::{TimeZone, Utc};
use concierge_core::classifier::{
    logistic_gradient, logistic_loss, self_train, target, Example, SelfTrainConfig, SparseFeatureVector,
    TrainConfig,
};
use concierge_core::config::Config;
use concierge_core::corpus::{AnnotatedPost, Annotations, CorpusSnapshot, CorpusStore, IngestFormat, Label, LabelOrigin, ModelVersions, RawPost};
use concierge_core::embedding::cosine;
use concierge_core::entities::{recognize, EntitySpan, EntityType, Gazetteer, MatchMethod, RecognizerConfig};
use concierge_core::lda::{GibbsSampler, LdaParams};
use concierge_core::pipeline::{annotate_store, Models, PipelineSnapshot};
use concierge_core::recommender::{recommend, RecommendationQuery, Relaxation, DEFAULT_K};
use concierge_core::sentiment::{SentimentAnalyzer, SentimentClass, SentimentScore};
use concierge_core::textprep::{tokenize, PrepOptions};
use concierge_core::topics::{assign_topic, label_topic, topic_report, topic_report_from_counts, TopicLabel, TopicLexicon};
use concierge_core::{PostVector, VectorStore};
use concierge_service::{router, AppState};
use http_body_util::BodyExt;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};
use tower::ServiceExt;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("topic partition", topic_partition),
        ("topic report template", topic_report_template),
        ("lda recovery", lda_recovery),
        ("vac_type coverage", vac_type_coverage),
        ("vaccine corrections", vaccine_corrections),
        ("self-training", self_training),
        ("cosine top-k oracle", cosine_top_k_oracle),
        ("recommendation contract", recommendation_contract),
        ("sentiment properties", sentiment_properties),
        ("service atomicity", service_atomicity),
        ("pipeline determinism", pipeline_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name:<26} {elapsed:>7.2}s  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<26} {elapsed:>7.2}s  {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn raw_post(id: &str, text: &str, day: u32) -> RawPost {
    RawPost {
        id: id.to_string(),
        text: text.to_string(),
        timestamp: Utc.with_ymd_and_hms(2021, 1, 1 + day % 28, 12, 0, 0).unwrap(),
        source: "acceptance".into(),
    }
}

// ---------------------------------------------------------------- topics

fn topic_partition() -> Outcome {
    let lex = TopicLexicon::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pool: Vec<String> = Vec::new();
    for e in lex.entries() {
        pool.extend(e.keywords.iter().cloned());
        pool.extend(e.synonyms.iter().cloned());
    }
    let noise = ["people", "today", "news", "really", "think", "week", "city", "family", "again", "work"];
    pool.extend(noise.iter().map(|s| s.to_string()));
    let texts: Vec<String> = (0..200)
        .map(|_| {
            let n = rng.random_range(2..8);
            (0..n).map(|_| pool.choose(&mut rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
        })
        .collect();

    let started = Instant::now();
    let prep = PrepOptions::default();
    let mut unknown_before = 0;
    let mut unknown_after = 0;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for text in &texts {
        let t = tokenize(text, &prep);
        let first = assign_topic(&t, &lex);
        let finalized = label_topic(&t, &lex);
        if !first.is_unknown() {
            ensure!(finalized == first, "rescue changed a keyword-assigned post: {text:?}");
        }
        unknown_before += first.is_unknown() as usize;
        unknown_after += finalized.is_unknown() as usize;
        *counts.entry(finalized.name).or_default() += 1;
    }
    let report = topic_report_from_counts(&counts);
    let elapsed = started.elapsed();
    ensure!(report.total == 200, "report total {}", report.total);
    ensure!(report.rows.iter().map(|r| r.count).sum::<usize>() == 200, "rows do not sum to 200");
    ensure!(unknown_after <= unknown_before, "rescue raised Unknown from {unknown_before} to {unknown_after}");
    ensure!(elapsed < Duration::from_secs(1), "topic stage took {elapsed:?}");

    // the same property over a fully annotated snapshot
    let posts: Vec<AnnotatedPost> = texts
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let label = match i % 4 {
                0 => Label::Misleading,
                1 => Label::NonMisleading,
                _ => Label::Unlabeled,
            };
            AnnotatedPost::new(raw_post(&format!("P{i:03}"), text, i as u32), label)
        })
        .collect();
    let snap = PipelineSnapshot::build(&CorpusSnapshot::from_posts(posts), &Models::builtin(), &Default::default(), None)
        .map_err(|e| e.to_string())?;
    let dist = concierge_core::analytics::topic_distribution(&snap.corpus);
    let by_topic: usize = dist.rows.iter().map(|r| r.total).sum();
    let by_label: usize = dist.rows.iter().map(|r| r.misleading + r.non_misleading + r.unlabeled).sum();
    ensure!(by_topic == 200 && by_label == 200 && dist.total == 200, "distribution {by_topic}/{by_label}/{}", dist.total);
    Ok(format!(
        "200 posts, Unknown {unknown_before} -> {unknown_after} after rescue, topic stage {:.0} ms",
        elapsed.as_secs_f64() * 1e3
    ))
}

/// Percentage with two truncated decimals by long division, independent of
/// the library's formatter.
fn oracle_percentage(count: usize, total: usize) -> String {
    let whole = count * 100 / total;
    let mut rem = count * 100 % total;
    let mut digits = String::new();
    for _ in 0..2 {
        rem *= 10;
        digits.push(char::from(b'0' + (rem / total) as u8));
        rem %= total;
    }
    format!("{whole}.{digits}")
}

fn topic_report_template() -> Outcome {
    // Thirteen-row fixture: the published row counts scaled by 1/115.
    const FROZEN: [(&str, &str, usize, &str); 13] = [
        ("Choices", "choices", 288, "28.85"),
        ("Politics", "politics", 220, "22.04"),
        ("Vaccine Efficacy", "efficacy", 191, "19.13"),
        ("Shots", "jab", 83, "8.31"),
        ("Trump", "maga", 73, "7.31"),
        ("Data & Facts", "statistics", 31, "3.10"),
        ("Unknown", "", 30, "3.00"),
        ("Trials", "clinical", 28, "2.80"),
        ("Myths", "microchip", 21, "2.10"),
        ("Operation Warp Speed", "warp speed", 12, "1.20"),
        ("Real Side-Effects", "allergic", 11, "1.10"),
        ("Approval", "approval", 8, "0.80"),
        ("Availability", "shortage", 2, "0.20"),
    ];
    let total: usize = FROZEN.iter().map(|r| r.2).sum();
    for (name, _, count, pct) in FROZEN {
        ensure!(oracle_percentage(count, total) == pct, "frozen value for {name} disagrees with the oracle");
    }

    let lex = TopicLexicon::builtin();
    let prep = PrepOptions::default();
    let mut posts = Vec::new();
    for (name, keyword, count, _) in FROZEN {
        for j in 0..count {
            let text = if keyword.is_empty() {
                format!("lovely weather in the garden on day {j}")
            } else {
                format!("a post about {keyword} number {j}")
            };
            let t = tokenize(&text, &prep);
            let topic = label_topic(&t, &lex);
            ensure!(topic.name == name, "{text:?} labelled {} instead of {name}", topic.name);
            let mut post = AnnotatedPost::new(raw_post(&format!("{name}-{j}"), &text, j as u32), Label::Unlabeled);
            post.annotations = Some(bare_annotations(topic, SentimentClass::Neutral, Vec::new(), 0));
            posts.push(post);
        }
    }
    let report = topic_report(&CorpusSnapshot::from_posts(posts));
    ensure!(report.total == total, "total {}", report.total);
    ensure!(report.rows.len() == 13, "{} rows", report.rows.len());
    for (row, (name, _, count, pct)) in report.rows.iter().zip(FROZEN) {
        ensure!(
            row.topic == name && row.count == count && row.percentage == pct,
            "row {:?} expected ({name}, {count}, {pct})",
            row
        );
    }

    // Published counts, compared at the precision each published cell uses.
    const PUBLISHED: [(&str, usize, &str); 13] = [
        ("Choices", 33_150, "28.9"),
        ("Politics", 25_276, "22"),
        ("Vaccine Efficacy", 21_936, "19.1"),
        ("Shots", 9_568, "8.34"),
        ("Trump", 8_432, "7.35"),
        ("Data & Facts", 3_601, "3.14"),
        ("Unknown", 3_426, "2.98"),
        ("Trials", 3_217, "2.8"),
        ("Myths", 2_376, "2"),
        ("Operation Warp Speed", 1_369, "1.19"),
        ("Real Side-Effects", 1_216, "1.06"),
        ("Approval", 883, "0.77"),
        ("Availability", 185, "0.16"),
    ];
    let counts: BTreeMap<String, usize> = PUBLISHED.iter().map(|(n, c, _)| (n.to_string(), *c)).collect();
    let published = topic_report_from_counts(&counts);
    ensure!(published.total == 114_635, "published total {}", published.total);
    for (row, (name, _, shown)) in published.rows.iter().zip(PUBLISHED) {
        ensure!(row.topic == name, "published order: {} before {name}", row.topic);
        let decimals = shown.split('.').nth(1).map_or(0, str::len);
        let ours = match decimals {
            0 => row.percentage.split('.').next().unwrap().to_string(),
            d => row.percentage[..row.percentage.len() - (2 - d)].to_string(),
        };
        ensure!(ours == shown, "{name}: rendered {} vs published {shown}", row.percentage);
    }
    Ok(format!("13 rows over {total} posts exact; published 13 rows reproduced"))
}

fn lda_recovery() -> Outcome {
    let vocab: Vec<Vec<String>> = (0..3)
        .map(|k| (0..12).map(|w| format!("t{k}w{w}")).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut docs = Vec::new();
    let mut planted = Vec::new();
    for d in 0..300 {
        let k = d % 3;
        let len = rng.random_range(15..30);
        docs.push((0..len).map(|_| vocab[k].choose(&mut rng).unwrap().clone()).collect::<Vec<_>>());
        planted.push(k);
    }
    let params = LdaParams {
        iterations: 100,
        seed: 20201201,
        ..LdaParams::with_topics(3)
    };
    let started = Instant::now();
    let mut sampler = GibbsSampler::new(&docs, params).map_err(|e| e.to_string())?;
    for sweep in 0..params.iterations {
        sampler.sweep();
        ensure!(
            sampler.model().counts_consistent(sampler.corpus_frequency()),
            "count conservation broken after sweep {}",
            sweep + 1
        );
    }
    let elapsed = started.elapsed();
    let model = sampler.into_model();
    let dominant = model.dominant_topics();
    let mut table = vec![[0usize; 3]; 3];
    for (topic, plant) in dominant.iter().zip(&planted) {
        table[*topic][*plant] += 1;
    }
    let purity = table.iter().map(|row| *row.iter().max().unwrap()).sum::<usize>() as f64 / 300.0;
    ensure!(purity >= 0.8, "purity {purity:.3}");
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("purity {purity:.3}, conservation held for {} sweeps", params.iterations))
}

// ---------------------------------------------------------------- entities

fn recognize_text(text: &str, g: &Gazetteer) -> Vec<EntitySpan> {
    recognize(&tokenize(text, &PrepOptions::default()), g, &RecognizerConfig::default())
}

fn vac_type_coverage() -> Outcome {
    let g = Gazetteer::builtin();
    const SEEDS: [&str; 14] = [
        "pfizer", "astrazeneca", "mrna", "astrazenca", "jnj", "oxford", "sputnik", "modern", "variants", "#pfizer",
        "booster", "#astrazeneca", "biontech", "Covidshield",
    ];
    for seed in SEEDS {
        let spans = recognize_text(seed, &g);
        ensure!(
            spans.len() == 1 && spans[0].etype == EntityType::VacType && spans[0].method == MatchMethod::Exact,
            "seed {seed:?} gave {spans:?}"
        );
    }
    let variants = [
        ("phizer", "phizer"),
        ("myrna", "myrna"),
        ("zenca", "zenca"),
        ("novavax", "novavax"),
        ("johnsonandjohnson", "johnsonandjohnson"),
        ("johnson", "my johnson vaccine appointment"),
        ("mirna", "mirna"),
    ];
    let mut methods = Vec::new();
    for (surface, text) in variants {
        let spans = recognize_text(text, &g);
        let hit = spans.iter().find(|s| s.surface == surface);
        match hit {
            Some(s) if s.etype == EntityType::VacType => methods.push(format!("{surface}:{:?}", s.method).to_lowercase()),
            _ => return Err(format!("variant {surface:?} in {text:?} gave {spans:?}")),
        }
    }
    Ok(format!("14/14 seeds exact; variants {}", methods.join(" ")))
}

fn vaccine_corrections() -> Outcome {
    let g = Gazetteer::builtin();
    let cases = [
        ("pfizer", "Just booked my Pfizer appointment for next week"),
        ("moderna", "Moderna announced new results today"),
        ("astrazeneca", "The AstraZeneca rollout in Europe was paused"),
        ("johnson and johnson", "My dad got Johnson and Johnson last month"),
        ("novavax", "Still waiting on Novavax approval"),
    ];
    for (surface, text) in cases {
        let spans = recognize_text(text, &g);
        let matching: Vec<&EntitySpan> = spans.iter().filter(|s| s.surface == surface).collect();
        ensure!(matching.len() == 1, "{surface:?} in {text:?}: {spans:?}");
        ensure!(matching[0].etype == EntityType::VacType, "{surface:?} typed {}", matching[0].etype);
    }
    Ok("5/5 typed VAC_TYPE".into())
}

// ---------------------------------------------------------------- classifier

fn gaussian_data(n: usize, rng: &mut ChaCha8Rng) -> Vec<(SparseFeatureVector<f64>, Label)> {
    let noise = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|i| {
            let (label, mean) = if i % 2 == 0 { (Label::Misleading, 2.0) } else { (Label::NonMisleading, -2.0) };
            let x = [mean + noise.sample(rng), mean + noise.sample(rng)];
            (SparseFeatureVector::from_dense(&x), label)
        })
        .collect()
}

fn self_training() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut data = gaussian_data(1000, &mut rng);
    data.shuffle(&mut rng);
    let truth: HashMap<String, Label> = data.iter().enumerate().map(|(i, (_, l))| (format!("g{i:04}"), *l)).collect();
    let examples: Vec<Example<f64>> = data
        .iter()
        .enumerate()
        .map(|(i, (x, _))| Example {
            id: format!("g{i:04}"),
            features: x.clone(),
        })
        .collect();
    let seed: Vec<(Example<f64>, Label)> = examples[..100].iter().cloned().zip(data[..100].iter().map(|d| d.1)).collect();
    let unlabeled = &examples[100..];
    let st = SelfTrainConfig {
        confidence_threshold: 0.9,
        ..SelfTrainConfig::default()
    };
    let cfg = TrainConfig::default();
    let out = self_train(&seed, unlabeled, 2, &st, &cfg).map_err(|e| e.to_string())?;

    ensure!(!out.pseudo_labels.is_empty(), "no pseudo-labels admitted");
    let agree = out.pseudo_labels.iter().filter(|p| truth[&p.id] == p.label).count();
    let agreement = agree as f64 / out.pseudo_labels.len() as f64;
    ensure!(agreement >= 0.95, "agreement {agreement:.4}");

    let mut expected_pool = seed.len();
    for r in &out.rounds {
        ensure!(r.pool_size == expected_pool, "round {} pool {} expected {expected_pool}", r.round, r.pool_size);
        expected_pool += r.admitted;
    }
    let admitted: BTreeSet<&str> = out.pseudo_labels.iter().map(|p| p.id.as_str()).collect();
    ensure!(admitted.len() == out.pseudo_labels.len(), "a point was admitted twice");

    let flipped_seed: Vec<(Example<f64>, Label)> = seed.iter().map(|(e, l)| (e.clone(), l.flipped())).collect();
    let flipped = self_train(&flipped_seed, unlabeled, 2, &st, &cfg).map_err(|e| e.to_string())?;
    ensure!(
        flipped.model.weights.iter().zip(&out.model.weights).all(|(a, b)| *a == -*b) && flipped.model.bias == -out.model.bias,
        "flipped weights are not the exact negation"
    );
    for e in unlabeled {
        let (a, b) = (out.model.decision(&e.features), flipped.model.decision(&e.features));
        ensure!(a == -b, "decision {a} vs flipped {b} on {}", e.id);
    }
    let relabeled: Vec<(&str, Label)> = flipped.pseudo_labels.iter().map(|p| (p.id.as_str(), p.label.flipped())).collect();
    let original: Vec<(&str, Label)> = out.pseudo_labels.iter().map(|p| (p.id.as_str(), p.label)).collect();
    ensure!(relabeled == original, "flipped run admitted different points");

    // central differences on a dense 8-dimensional problem
    let noise = Normal::new(0.0, 1.0).unwrap();
    let xs: Vec<SparseFeatureVector<f64>> = (0..60)
        .map(|_| SparseFeatureVector::from_dense(&(0..8).map(|_| noise.sample(&mut rng)).collect::<Vec<_>>()))
        .collect();
    let ys: Vec<f64> = (0..60).map(|i| target(if i % 3 == 0 { Label::Misleading } else { Label::NonMisleading }).unwrap()).collect();
    let w: Vec<f64> = (0..8).map(|_| noise.sample(&mut rng)).collect();
    let b = 0.3;
    let l2 = 0.01;
    let (g, gb) = logistic_gradient(&w, b, &xs, &ys, l2);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..=8 {
        let (mut up, mut down) = (w.clone(), w.clone());
        let (mut bu, mut bd) = (b, b);
        if i < 8 {
            up[i] += h;
            down[i] -= h;
        } else {
            bu += h;
            bd -= h;
        }
        let fd = (logistic_loss(&up, bu, &xs, &ys, l2) - logistic_loss(&down, bd, &xs, &ys, l2)) / (2.0 * h);
        let analytic = if i < 8 { g[i] } else { gb };
        let rel = (fd - analytic).abs() / analytic.abs();
        worst = worst.max(rel);
    }
    ensure!(worst <= 1e-5, "finite-difference relative error {worst:e}");
    Ok(format!(
        "{} pseudo-labels, agreement {:.4}, {} rounds, flip exact, fd error {worst:.1e}",
        out.pseudo_labels.len(),
        agreement,
        out.rounds.len()
    ))
}

// ---------------------------------------------------------------- embeddings

fn oracle_cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na = a.iter().map(|x| *x as f64 * *x as f64).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| *x as f64 * *x as f64).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn cosine_top_k_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let noise = Normal::new(0.0f32, 1.0).unwrap();
    let mut vectors: Vec<PostVector> = (0..1000)
        .map(|i| PostVector {
            post_id: format!("v{i:04}"),
            vector: (0..50).map(|_| noise.sample(&mut rng)).collect(),
            coverage: 1.0,
        })
        .collect();
    // exact ties: copies of earlier vectors under later and earlier ids
    for (dst, src) in [(10, 500), (999, 500), (3, 7), (700, 7), (701, 7)] {
        vectors[dst].vector = vectors[src].vector.clone();
    }
    vectors[42].vector = vec![0.0; 50];
    vectors[42].coverage = 0.0;
    let store = VectorStore::new(50, vectors.clone()).map_err(|e| e.to_string())?;

    let started = Instant::now();
    let mut checked = 0;
    for q in (0..1000).step_by(7).chain([500, 7, 42]) {
        let query = &vectors[q];
        let mut oracle: Vec<(f64, &str)> = vectors
            .iter()
            .filter(|v| v.coverage > 0.0)
            .map(|v| (oracle_cosine(&query.vector, &v.vector), v.post_id.as_str()))
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        for k in [1, 3, 10] {
            let got = store.top_k(query, vectors.iter().map(|v| v.post_id.as_str()), k);
            if query.coverage == 0.0 {
                ensure!(got.is_empty(), "zero query returned {got:?}");
                continue;
            }
            ensure!(got.len() == k, "k={k} returned {}", got.len());
            for (n, (sim, id)) in got.iter().zip(&oracle) {
                ensure!(n.id == *id, "query {} k={k}: got {} expected {id}", query.post_id, n.id);
                ensure!((n.similarity - sim).abs() <= 1e-12, "similarity {} vs {sim}", n.similarity);
                ensure!((cosine(&query.vector, &store.get(id).unwrap().vector) - sim).abs() <= 1e-12, "cosine mismatch");
            }
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{checked} queries identical to the full-sort oracle, ties included"))
}

// ---------------------------------------------------------------- recommendation

#[derive(serde::Deserialize)]
struct FixturePost {
    id: String,
    text: String,
    label: Label,
    topic: String,
    sentiment: SentimentClass,
    entities: Vec<(String, EntityType)>,
}

fn bare_annotations(topic: TopicLabel, sentiment: SentimentClass, entities: Vec<EntitySpan>, vector_id: usize) -> Annotations {
    Annotations {
        topic,
        entities,
        sentiment,
        sentiment_score: SentimentScore {
            compound: 0.0,
            pos: 0.0,
            neu: 1.0,
            neg: 0.0,
            class: sentiment,
        },
        vector_id: Some(vector_id),
        versions: ModelVersions::default(),
        human_fields: vec!["label".into(), "topic".into(), "sentiment".into()],
    }
}

fn load_recommendation_fixture() -> Vec<FixturePost> {
    let text = std::fs::read_to_string(repo_root().join("fixtures/recommendation_posts.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Snapshot over hand-annotated posts; only vectors are computed.
fn hand_annotated_snapshot(fixture: &[FixturePost]) -> PipelineSnapshot {
    let models = Models::builtin();
    let mut sorted: Vec<&FixturePost> = fixture.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut posts = Vec::new();
    let mut vectors = Vec::new();
    for (i, f) in sorted.iter().enumerate() {
        let entities = f
            .entities
            .iter()
            .enumerate()
            .map(|(j, (surface, etype))| EntitySpan {
                surface: surface.clone(),
                canonical: surface.clone(),
                start: j,
                end: j + 1,
                etype: *etype,
                method: MatchMethod::Exact,
                score: 1.0,
            })
            .collect();
        let topic = TopicLabel {
            name: f.topic.clone(),
            matched_terms: Vec::new(),
            rescue: false,
        };
        let mut post = AnnotatedPost::new(raw_post(&f.id, &f.text, i as u32), f.label);
        post.label_confidence = 1.0;
        post.label_origin = LabelOrigin::Human;
        post.annotations = Some(bare_annotations(topic, f.sentiment, entities, i));
        posts.push(post);
        vectors.push(models.embeddings.embed(&f.id, &tokenize(&f.text, &models.prep)));
    }
    PipelineSnapshot {
        version: 1,
        built_at: Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap(),
        corpus: CorpusSnapshot::from_posts(posts),
        classifier: None,
        gazetteer: models.gazetteer.clone(),
        vectors: Arc::new(VectorStore::new(models.embeddings.dim(), vectors).unwrap()),
        models,
        versions: ModelVersions::default(),
        pseudo_labels: Vec::new(),
        feedback_applied: 0,
    }
}

/// Independent recommender: filter each tier by brute force, rank by a
/// full sort, concatenate.
fn brute_force(fixture: &[FixturePost], snap: &PipelineSnapshot, src_id: &str, target: Label, k: usize, relaxation: Relaxation) -> Vec<(String, bool)> {
    let src = fixture.iter().find(|f| f.id == src_id).unwrap();
    let src_pairs: BTreeSet<&(String, EntityType)> = src.entities.iter().collect();
    let levels = match relaxation {
        Relaxation::Strict => 1,
        Relaxation::AllowEntityDrop => 2,
        Relaxation::AllowSentimentDrop => 3,
    };
    let source_vector = snap.vectors.get(src_id).unwrap();
    if source_vector.coverage == 0.0 {
        // cosine is undefined against a zero vector
        return Vec::new();
    }
    let query = &source_vector.vector;
    let mut claimed: BTreeSet<&str> = BTreeSet::new();
    let mut out = Vec::new();
    for level in 0..levels {
        let members: Vec<&FixturePost> = fixture
            .iter()
            .filter(|f| f.id != src.id && f.label == target && !claimed.contains(f.id.as_str()))
            .filter(|f| f.topic == src.topic)
            .filter(|f| level == 2 || f.sentiment == src.sentiment)
            .filter(|f| level >= 1 || f.entities.iter().any(|e| src_pairs.contains(e)))
            .collect();
        claimed.extend(members.iter().map(|f| f.id.as_str()));
        let mut ranked: Vec<(f64, &str)> = members
            .iter()
            .filter_map(|f| {
                let v = snap.vectors.get(&f.id)?;
                (v.coverage > 0.0).then(|| (oracle_cosine(query, &v.vector), f.id.as_str()))
            })
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        for (_, id) in ranked.into_iter().take(k - out.len()) {
            out.push((id.to_string(), level > 0));
        }
    }
    out
}

fn tier_of(f: &FixturePost, r: &concierge_core::recommender::Recommendation) -> Result<usize, String> {
    match (r.relaxed, r.matched_criteria.sentiment, r.matched_criteria.entities.is_empty()) {
        (false, true, false) => Ok(0),
        (true, true, _) => Ok(1),
        (true, false, _) => Ok(2),
        _ => Err(format!("{} -> {}: inconsistent criteria {:?}", f.id, r.post_id, r.matched_criteria)),
    }
}

fn recommendation_contract() -> Outcome {
    let fixture = load_recommendation_fixture();
    ensure!(fixture.len() == 50, "fixture has {} posts", fixture.len());
    let snap = hand_annotated_snapshot(&fixture);
    let by_id: HashMap<&str, &FixturePost> = fixture.iter().map(|f| (f.id.as_str(), f)).collect();
    let mut strict_seen = 0;
    let mut queries = 0;
    for src in &fixture {
        let targets: &[Label] = if src.label == Label::Misleading {
            &[Label::NonMisleading, Label::Misleading]
        } else {
            &[Label::Misleading]
        };
        for &target in targets {
            for relaxation in [Relaxation::Strict, Relaxation::AllowEntityDrop, Relaxation::AllowSentimentDrop] {
                let mut previous: Vec<String> = Vec::new();
                for k in 1..=5 {
                    let q = RecommendationQuery::rebuttal(&src.id).with_target(target).with_k(k).with_relaxation(relaxation);
                    let recs = recommend(&q, &snap.corpus, &snap.vectors).map_err(|e| e.to_string())?;
                    queries += 1;
                    let ids: Vec<String> = recs.iter().map(|r| r.post_id.clone()).collect();
                    ensure!(ids.starts_with(&previous), "{} k={k}: {ids:?} does not extend {previous:?}", src.id);
                    previous = ids;
                    let mut last_tier = 0;
                    for r in &recs {
                        let other = by_id[r.post_id.as_str()];
                        ensure!(other.label == target && other.id != src.id, "{} recommended {}", src.id, other.id);
                        let tier = tier_of(src, r)?;
                        ensure!(tier >= last_tier, "{}: tiers interleave in {:?}", src.id, recs);
                        last_tier = tier;
                        if tier == 0 {
                            strict_seen += 1;
                            let shared = other.entities.iter().any(|e| src.entities.contains(e));
                            ensure!(
                                other.topic == src.topic && other.sentiment == src.sentiment && shared,
                                "strict recommendation {} -> {} misses a criterion",
                                src.id,
                                other.id
                            );
                        }
                    }
                    let oracle = brute_force(&fixture, &snap, &src.id, target, k, relaxation);
                    let got: Vec<(String, bool)> = recs.iter().map(|r| (r.post_id.clone(), r.relaxed)).collect();
                    ensure!(got == oracle, "{} {target} k={k} {relaxation:?}: {got:?} vs oracle {oracle:?}", src.id);
                }
            }
        }
    }
    ensure!(strict_seen > 0, "fixture produced no strict recommendations");
    let k3 = default_k_layers(&fixture, &snap)?;
    Ok(format!("{queries} queries match the oracle, {strict_seen} strict hits checked; {k3}"))
}

fn default_k_layers(fixture: &[FixturePost], snap: &PipelineSnapshot) -> Outcome {
    ensure!(DEFAULT_K == 3, "DEFAULT_K is {DEFAULT_K}");
    ensure!(RecommendationQuery::rebuttal("x").k == 3, "library default k is not 3");
    let cfg_default = Config::default();
    ensure!(cfg_default.service.default_k == 3, "config default k is {}", cfg_default.service.default_k);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = Config::default();
    cfg.rebase(dir.path());
    snap.persist(&cfg.data.store, &cfg.data.models).map_err(|e| e.to_string())?;
    let source = fixture
        .iter()
        .filter(|f| f.label == Label::Misleading)
        .find(|f| {
            let q = RecommendationQuery::rebuttal(&f.id).with_k(10).with_relaxation(cfg.service.relaxation);
            snap.recommend(&q).is_ok_and(|r| r.len() > 3)
        })
        .ok_or("no source with more than three candidates")?;
    let library = snap
        .recommend(&RecommendationQuery::rebuttal(&source.id).with_relaxation(cfg.service.relaxation))
        .map_err(|e| e.to_string())?;
    ensure!(library.len() == 3, "library returned {}", library.len());

    let state = Arc::new(AppState::open(&cfg, &Models::builtin()).map_err(|e| e.to_string())?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let (status, body) = runtime.block_on(get_raw(router(state), &format!("/posts/{}/recommendations", source.id)));
    ensure!(status == StatusCode::OK, "api status {status}");
    let api_data = envelope_data(&body)?;
    let api: Vec<Value> = serde_json::from_str(api_data).map_err(|e| e.to_string())?;
    ensure!(api.len() == 3, "api returned {}", api.len());

    let config_path = dir.path().join("concierge.toml");
    std::fs::write(&config_path, "").map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_concierge"))
        .args(["--json", "--config"])
        .arg(&config_path)
        .args(["recommend", &source.id])
        .env_remove("CONCIERGE_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "cli failed: {}", String::from_utf8_lossy(&out.stderr));
    let cli = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    ensure!(cli.trim_end() == api_data, "cli and api differ:\n{cli}\n{api_data}");
    let lib_json = serde_json::to_string(&library).map_err(|e| e.to_string())?;
    ensure!(lib_json == api_data, "library and api differ");
    Ok(format!("default k=3 at library, API and CLI ({})", source.id))
}

async fn get_raw(app: axum::Router, uri: &str) -> (StatusCode, String) {
    let resp = app.oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

/// The raw `data` member of a serialized envelope.
fn envelope_data(body: &str) -> Result<&str, String> {
    let start = body.find(",\"data\":").ok_or("no data member")? + ",\"data\":".len();
    body[start..].strip_suffix('}').ok_or_else(|| "unterminated envelope".to_string())
}

// ---------------------------------------------------------------- sentiment

fn sentiment_properties() -> Outcome {
    let analyzer = SentimentAnalyzer::default();
    let lex = analyzer.lexicon();
    let prep = PrepOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // plain alphabetic lexicon words that no rule treats specially
    let words: Vec<(&str, f64)> = lex
        .entries()
        .into_iter()
        .filter(|(w, v)| {
            *v != 0.0
                && w.chars().all(|c| c.is_ascii_lowercase())
                && !lex.is_booster(w)
                && !lex.is_negation(w)
                && *w != "but"
                && tokenize(w, &prep).tokens == [w.to_string()]
        })
        .collect();
    ensure!(words.len() >= 100, "only {} usable lexicon words", words.len());

    for _ in 0..300 {
        let n = rng.random_range(1..6);
        let picked: Vec<&(&str, f64)> = (0..n).map(|_| words.choose(&mut rng).unwrap()).collect();
        let text = picked.iter().map(|(w, _)| *w).collect::<Vec<_>>().join(" ");
        let sum: f64 = analyzer.token_valences(&tokenize(&text, &prep)).iter().sum();
        let expected: f64 = picked.iter().map(|(_, v)| v).sum();
        let c = analyzer.score(&tokenize(&text, &prep)).compound;
        ensure!((sum - expected).abs() < 1e-9, "{text:?}: valences altered by rules");
        ensure!(c.signum() == expected.signum() || (expected == 0.0 && c == 0.0), "{text:?}: compound {c} vs sum {expected}");
    }

    let sample: Vec<&(&str, f64)> = words.choose_multiple(&mut rng, 20).collect();
    for (w, _) in &sample {
        let plain = analyzer.score(&tokenize(w, &prep)).compound;
        let negated = analyzer.score(&tokenize(&format!("not {w}"), &prep)).compound;
        ensure!(plain != 0.0 && plain.signum() == -negated.signum(), "{w}: {plain} vs not {w}: {negated}");
    }

    let mut previous = f64::NEG_INFINITY;
    for raw in [-1e300, -1e9, -50.0, -4.0, -1.0, -0.1, 0.0, 0.1, 1.0, 4.0, 50.0, 1e9, 1e300] {
        let c = analyzer.normalize(raw);
        ensure!(c.abs() < 1.0, "normalize({raw}) = {c}");
        ensure!(c >= previous, "normalize not monotone at {raw}");
        previous = c;
    }
    let very_long = vec!["excellent"; 500].join(" ");
    let c = analyzer.score(&tokenize(&very_long, &prep)).compound;
    ensure!(c.abs() < 1.0, "500 positive words gave {c}");

    let boundary = [
        (0.05, SentimentClass::Positive),
        (-0.05, SentimentClass::Negative),
        (0.049_999_999, SentimentClass::Neutral),
        (-0.049_999_999, SentimentClass::Neutral),
        (0.0, SentimentClass::Neutral),
    ];
    for (c, class) in boundary {
        ensure!(analyzer.classify(c) == class, "classify({c}) = {:?}", analyzer.classify(c));
    }
    Ok(format!("300 sign checks, 20 negation pairs, bounds and ±0.05 boundaries ({} lexicon words)", words.len()))
}

// ---------------------------------------------------------------- service

fn fixture_corpus() -> PathBuf {
    repo_root().join("fixtures/sample_corpus.jsonl")
}

fn annotated_config(dir: &Path) -> Result<Config, String> {
    let mut cfg = Config::default();
    cfg.rebase(dir);
    let store = CorpusStore::new();
    store.ingest(&fixture_corpus(), IngestFormat::Jsonl).map_err(|e| e.to_string())?;
    store.snapshot().export_jsonl(&cfg.data.store).map_err(|e| e.to_string())?;
    annotate_store(&cfg, &Models::builtin()).map_err(|e| e.to_string())?;
    Ok(cfg)
}

async fn request(app: axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = builder.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn service_atomicity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = annotated_config(dir.path())?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(8)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;

    // zero-feedback retrain is annotation-identical apart from versions
    let state = Arc::new(AppState::open(&cfg, &Models::builtin()).map_err(|e| e.to_string())?);
    let before = state.snapshot();
    let after = runtime.block_on(state.retrain()).map_err(|e| e.message)?;
    ensure!(after.version == before.version + 1, "version {} -> {}", before.version, after.version);
    for (a, b) in before.corpus.posts().iter().zip(after.corpus.posts()) {
        let mut b = b.clone();
        if let (Some(x), Some(y)) = (a.annotations.as_ref(), b.annotations.as_mut()) {
            y.versions = x.versions;
        }
        ensure!(*a == b, "post {} changed on a zero-feedback retrain", a.id());
    }

    // readers during swaps: T01 is misleading before the first feedback
    // retrain and non-misleading after; the envelope version must agree
    let (flip_version, mixed, responses) = runtime.block_on(async {
        let app = router(state.clone());
        let (status, _) = request(
            app.clone(),
            "POST",
            "/feedback",
            Some(json!({"post_id": "T01", "field": "label", "proposed": "non-misleading"})),
        )
        .await;
        assert_eq!(status, StatusCode::CREATED);
        let flip_version = state.snapshot().version + 1;
        let mut readers = Vec::new();
        for r in 0..100 {
            let app = app.clone();
            readers.push(tokio::spawn(async move {
                let mut seen = Vec::new();
                for i in 0..30 {
                    let uri = if (r + i) % 2 == 0 { "/posts/T01" } else { "/posts?page_size=500" };
                    let (status, body) = request(app.clone(), "GET", uri, None).await;
                    assert_eq!(status, StatusCode::OK);
                    seen.push(body);
                    tokio::task::yield_now().await;
                }
                seen
            }));
        }
        for _ in 0..3 {
            state.retrain().await.expect("retrain");
        }
        let mut mixed = 0;
        let mut responses = 0;
        for handle in readers {
            for body in handle.await.unwrap() {
                responses += 1;
                let v = body["snapshot_version"].as_u64().unwrap();
                let expected = if v >= flip_version { "non-misleading" } else { "misleading" };
                let posts: Vec<&Value> = match body["data"]["items"].as_array() {
                    Some(items) => items.iter().collect(),
                    None => vec![&body["data"]],
                };
                for p in posts {
                    let classifier = p["annotations"]["versions"]["classifier"].as_u64().unwrap();
                    let wrong_label = p["id"] == "T01" && p["label"] != expected;
                    if wrong_label || classifier != v {
                        mixed += 1;
                    }
                }
            }
        }
        (flip_version, mixed, responses)
    });
    ensure!(mixed == 0, "{mixed} post bodies disagree with their envelope version");

    // durability: the log and the latest snapshot survive a restart
    let final_version = state.snapshot().version;
    drop(state);
    let restarted = AppState::open(&cfg, &Models::builtin()).map_err(|e| e.to_string())?;
    let records = restarted.feedback_records();
    ensure!(records.len() == 1 && records[0].post_id == "T01", "replayed {} records", records.len());
    let snap = restarted.snapshot();
    ensure!(snap.version == final_version, "restarted at version {} not {final_version}", snap.version);
    ensure!(snap.corpus.get("T01").unwrap().label == Label::NonMisleading, "restart lost the feedback label");
    Ok(format!(
        "{responses} responses over versions 2..={final_version} (label flip at {flip_version}), none mixed; restart replayed feedback"
    ))
}

// ---------------------------------------------------------------- determinism

fn full_run(dir: &Path) -> Result<Vec<u8>, String> {
    let config = dir.join("concierge.toml");
    std::fs::write(&config, "seed = 20201201\n").map_err(|e| e.to_string())?;
    let export = dir.join("export.jsonl");
    let fixture = fixture_corpus();
    let steps: [Vec<&std::ffi::OsStr>; 3] = [
        vec!["ingest".as_ref(), fixture.as_os_str()],
        vec!["annotate".as_ref()],
        vec!["export".as_ref(), "--out".as_ref(), export.as_os_str()],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_concierge"))
            .arg("--config")
            .arg(&config)
            .args(&args)
            .env_remove("CONCIERGE_CONFIG")
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    std::fs::read(&export).map_err(|e| e.to_string())
}

fn pipeline_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = full_run(a.path())?;
    let second = full_run(b.path())?;
    ensure!(!first.is_empty(), "empty export");
    ensure!(first == second, "exports differ ({} vs {} bytes)", first.len(), second.len());
    let lines = first.iter().filter(|&&c| c == b'\n').count();
    Ok(format!("{lines} lines, {} bytes identical across two runs", first.len()))
}
