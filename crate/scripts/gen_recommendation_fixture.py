"""Regenerate fixtures/recommendation_posts.json.

Fifty posts with annotations given explicitly (topic, sentiment class,
entities) instead of produced by the pipeline. Text is drawn from the
embedding fixture vocabulary so every post except R50 has a vector.
R13/R14 and R33/R34 share text to force similarity ties.
"""
import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
rng = random.Random(20201201)

TOPICS = {
    "Shots": "shot shots jab jabs dose doses injection arm sore booster",
    "Trials": "trial trials clinical phase placebo volunteers participants enrolled results",
    "Myths": "microchip chip gates 5g towers tracking conspiracy hoax dna poison",
}
ENTITIES = [
    ("pfizer", "VAC_TYPE"),
    ("moderna", "VAC_TYPE"),
    ("astrazeneca", "VAC_TYPE"),
    ("cdc", "ORG"),
    ("fda", "ORG"),
    ("biden", "PERSON"),
    ("usa", "GPE"),
]
SENTIMENT_WORDS = {
    "positive": "good great safe trust hope excellent",
    "negative": "terrible horrible bad scary awful worse",
    "neutral": "the and is of to",
}

posts = []
for i in range(1, 51):
    pid = f"R{i:02d}"
    label = "misleading" if i % 5 in (1, 2) else "non-misleading"
    topic = rng.choice(sorted(TOPICS))
    sentiment = rng.choice(sorted(SENTIMENT_WORDS))
    ents = rng.sample(ENTITIES, rng.choice([0, 1, 1, 2, 2, 3]))
    words = rng.sample(TOPICS[topic].split(), 4) + rng.sample(SENTIMENT_WORDS[sentiment].split(), 2)
    words += [s for s, _ in ents]
    rng.shuffle(words)
    posts.append(
        {
            "id": pid,
            "text": " ".join(words),
            "label": label,
            "topic": topic,
            "sentiment": sentiment,
            "entities": [[s, t] for s, t in ents],
        }
    )

for a, b in (("R13", "R14"), ("R33", "R34")):
    pa = next(p for p in posts if p["id"] == a)
    pb = next(p for p in posts if p["id"] == b)
    pb.update(text=pa["text"], topic=pa["topic"], sentiment=pa["sentiment"], entities=pa["entities"])

# no embedding coverage
posts[-1]["text"] = "zzzq xxyy"

out = ROOT / "fixtures" / "recommendation_posts.json"
out.write_text(json.dumps(posts, indent=1) + "\n")
print(f"wrote {len(posts)} posts to {out}")
