"""Regenerate crates/core/data/embeddings_fixture_50d.txt.

Words are grouped into semantic clusters; each vector is its cluster centroid
plus seeded Gaussian noise. Function words get small unclustered vectors.
"""
import json
import re
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
DIM = 50
rng = np.random.default_rng(20201201)

CLUSTERS = {
    "vaccine": "vaccine vaccines vaccinated vaccination vaccinations pfizer moderna astrazeneca "
    "novavax sputnik biontech mrna jnj johnson janssen oxford covidshield covishield covaxin sinovac "
    "sinopharm modern variants booster boosters dose doses shot shots jab jabs injection inoculation",
    "sideeffect": "side effects effect adverse reaction reactions allergic fever chills fatigue headache "
    "sore arm blood clots anaphylaxis symptoms complications deaths die kill dangerous hidden hiding",
    "politics": "government politics political politicians biden trump administration election congress "
    "senate democrats republicans governor policy state tyranny mandate control corrupt stunt fauci",
    "myth": "microchip microchips chip gates bill 5g towers track tracking conspiracy hoax myth lies lie "
    "bioweapon depopulation dna poison scam fake faked wake planned",
    "data": "data facts fact statistics study studies evidence numbers percent report results published "
    "journal peer reviewed research analysis figures lancet efficacy effective protection protect "
    "immunity immune antibodies prevent works cases severe",
    "trial": "trial trials clinical phase placebo volunteers participants group enrolled experiment test "
    "testing untested rushed warp speed operation record time quickly developed fast",
    "approval": "fda approval approved approve emergency authorization authorized eua use regulators "
    "advisory meeting cdc who ema",
    "availability": "available availability supply shortage appointment appointments pharmacy pharmacies "
    "rollout distribution hoarding prices local website rural areas sharing arrive workers health",
    "positive": "good great huge progress promising strong safe trust worth love happy excellent "
    "amazing hope helpful",
    "negative": "terrible horrible bad garbage failure awful scary sad angry hate worse refuse",
    "place": "israel russia russian uk usa canada india america americans china europe texas florida",
}
FUNCTION = (
    "the a an and or but not no is are was were be been to of in on at for with by from this that "
    "it its as so if my your our their his her we you they i he she them us all any more most "
    "very can cannot do does did done has have had will would may might must should could than "
    "then also just only too about into over after before now today yet still far fewer every "
    "everyone everywhere nobody anyone people thousands million 100 40000 95 days day long term "
    "single another option new again first second says said says mostly mild normal sign system "
    "working cheap easy store global elderly begins real keep high emerge viral replication "
    "unvaccinated ingredient list public explained thanks years ahead schedule reached end "
    "pandemic masks together sell set knows cut paperwork safety steps followed getting family "
    "community protects choice body taking hesitant am still forcing on illness confirm showed "
    "reported rare tracks event treatable needed later because created itself make help keep "
    "interact towers activate finished before granted news under public ready once funded "
    "manufacturing early so cases dropping mass shows look everyone"
)

vocab = {}
for cluster, words in CLUSTERS.items():
    centroid = rng.normal(0.0, 1.0, DIM)
    for w in words.split():
        if w not in vocab:
            vocab[w] = centroid + rng.normal(0.0, 0.45, DIM)
for w in FUNCTION.split():
    if w not in vocab:
        vocab[w] = rng.normal(0.0, 0.25, DIM)

# everything that appears in the shipped sample corpus must be covered
corpus = ROOT / "fixtures" / "sample_corpus.jsonl"
for line in corpus.read_text().splitlines():
    text = json.loads(line)["text"].lower()
    for tok in re.findall(r"[a-z0-9']+", text):
        if tok not in vocab:
            vocab[tok] = rng.normal(0.0, 0.25, DIM)

out = ROOT / "crates" / "core" / "data" / "embeddings_fixture_50d.txt"
with out.open("w") as f:
    for w in sorted(vocab):
        f.write(w + " " + " ".join(f"{x:.5f}" for x in vocab[w]) + "\n")
print(len(vocab), "tokens written to", out)
