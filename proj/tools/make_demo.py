#!/usr/bin/env python3
"""Regenerates demo/: a small synthetic corpus, replayable extraction output,
judge rules, expansion proposals and a pipeline config."""
import json
import pathlib
import random

ROOT = pathlib.Path(__file__).resolve().parent.parent / "demo"
rng = random.Random(20240611)

anatomy = ["ventral cochlear nucleus", "dorsal cochlear nucleus", "medial superior olive",
           "lateral superior olive", "inferior colliculus", "medial geniculate body",
           "auditory cortex", "substantia nigra", "striatum", "globus pallidus",
           "subthalamic nucleus", "thalamus", "motor cortex", "cerebellum", "pons",
           "hippocampus", "entorhinal cortex", "amygdala", "hypothalamus", "locus coeruleus",
           "ventral tegmental area", "nucleus accumbens", "prefrontal cortex", "dentate gyrus"]
molecules = ["dopamine", "glutamate", "gaba", "acetylcholine", "serotonin", "norepinephrine",
             "glycine", "substance p", "enkephalin", "orexin", "oxytocin", "vasopressin",
             "bdnf", "alpha synuclein", "tau protein", "calbindin", "parvalbumin", "somatostatin"]
processes = ["sound localization", "motor learning", "reward prediction", "spatial navigation",
             "fear conditioning", "sleep regulation", "working memory", "pitch perception",
             "action selection", "memory consolidation", "arousal", "pain modulation"]
clinical = ["parkinson disease", "huntington disease", "alzheimer disease", "tinnitus",
            "schizophrenia", "narcolepsy", "epilepsy", "depression", "ataxia", "chronic pain"]

cats = {}
for n in anatomy: cats[n] = "Anatomical Structure"
for n in molecules: cats[n] = "Molecular Entity"
for n in processes: cats[n] = "Process"
for n in clinical: cats[n] = "Clinical Entity"

rels = {
    ("Anatomical Structure", "Anatomical Structure"): ["projects_to", "connected_to", "receives_input_from", "innervates", "part_of"],
    ("Anatomical Structure", "Molecular Entity"): ["releases", "contains"],
    ("Molecular Entity", "Anatomical Structure"): ["expressed_in", "synthesized_in"],
    ("Molecular Entity", "Molecular Entity"): ["modulates", "inhibits", "activates"],
    ("Anatomical Structure", "Process"): ["participates_in", "required_for"],
    ("Molecular Entity", "Process"): ["mediates_signal_for", "regulates"],
    ("Process", "Clinical Entity"): ["impaired_in"],
    ("Anatomical Structure", "Clinical Entity"): ["degenerates_in", "associated_with"],
    ("Clinical Entity", "Molecular Entity"): ["treated_by"],
    ("Molecular Entity", "Clinical Entity"): ["biomarker_of"],
    ("Clinical Entity", "Process"): ["results_in"],
}

names = list(cats)
edges, seen = [], set()
while len(edges) < 150:
    h, t = rng.sample(names, 2)
    options = rels.get((cats[h], cats[t]))
    if not options or (h, t) in seen or (t, h) in seen:
        continue
    seen.add((h, t))
    edges.append((h, rng.choice(options), t, rng.choice([7, 7, 5, 5, 3])))

gloss = {"projects_to": "projects to", "connected_to": "is connected to",
         "receives_input_from": "receives input from", "innervates": "innervates",
         "part_of": "is part of", "releases": "releases", "contains": "contains",
         "expressed_in": "is expressed in", "synthesized_in": "is synthesized in",
         "modulates": "modulates", "inhibits": "inhibits", "activates": "activates",
         "participates_in": "participates in", "required_for": "is required for",
         "mediates_signal_for": "mediates signals for", "regulates": "regulates",
         "impaired_in": "is impaired in", "degenerates_in": "degenerates in",
         "associated_with": "is associated with", "treated_by": "is treated by",
         "biomarker_of": "is a biomarker of", "results_in": "results in"}

DOCS = 8
per_doc = [edges[i::DOCS] for i in range(DOCS)]
(ROOT / "corpus").mkdir(parents=True, exist_ok=True)
responses = []
for d, doc_edges in enumerate(per_doc):
    doc_id = f"chapter{d + 1:02d}"
    text = " ".join(f"The {h} {gloss[r]} the {t}." for h, r, t, _ in doc_edges)
    assert len(text.split()) < 300, "each chapter must fit one text unit"
    (ROOT / "corpus" / f"{doc_id}.txt").write_text(text + "\n")
    recs = []
    ents = sorted({h for h, _, _, _ in doc_edges} | {t for _, _, t, _ in doc_edges})
    for e in ents:
        recs.append(f'("entity"<|>{e}<|>{cats[e]}<|>{e} as described in {doc_id})')
    for h, r, t, s in doc_edges:
        recs.append(f'("relationship"<|>{h}<|>{t}<|>{r}<|>{s})')
    if d == 0:
        recs.append('("relationship"<|>striatum<|>thalamus<|>vaguely_related_to<|>5)')
    responses.append({"unit_id": f"{doc_id}:u0000", "response": "##\n".join(recs) + "##\n<|COMPLETE|>"})

with open(ROOT / "mock_extraction.jsonl", "w") as f:
    for r in responses:
        f.write(json.dumps(r) + "\n")

rejected = rng.sample(edges, 8)
with open(ROOT / "judge_b_rules.jsonl", "w") as f:
    for h, r, t, _ in rejected:
        f.write(json.dumps({"head": h, "relation": r, "tail": t, "verdict": "no"}) + "\n")

cat_label = {"Anatomical Structure": "AnatomicalStructure", "Molecular Entity": "MolecularEntity",
             "Process": "Process", "Clinical Entity": "ClinicalEntity"}
with open(ROOT / "expansion.jsonl", "w") as f:
    proposals = []
    while len(proposals) < 12:
        h, t = rng.sample(names, 2)
        options = rels.get((cats[h], cats[t]))
        if not options or (h, t) in seen:
            continue
        seen.add((h, t))
        proposals.append((h, rng.choice(options), t))
    proposals.append(edges[0][:3])
    for h, r, t in proposals:
        f.write(json.dumps({"head": h, "head_category": cat_label[cats[h]], "relation": r, "tail": t,
                            "tail_category": cat_label[cats[t]], "provenance": "expansion",
                            "strength": 5, "status": "candidate"}) + "\n")

config = {
    "seed": 7,
    "paths": {"corpus": "demo/corpus", "output_dir": "runs", "expansion": "demo/expansion.jsonl"},
    "extraction": {"mock_responses": "demo/mock_extraction.jsonl"},
    "consensus": {"judge_b": {"mock_rules": "demo/judge_b_rules.jsonl"}},
    "curriculum": {"targets": {
        "1": {"take_all": True, "split": "sft"},
        "2": {"count": 40, "rl_count": 16, "split": "sft"},
        "3": {"count": 20, "split": "eval"},
        "4": {"count": 20, "split": "eval"},
        "5": {"count": 20, "split": "eval"}}},
    "grpo": {"grad_accum": 4},
}
(ROOT / "config.json").write_text(json.dumps(config, indent=2) + "\n")
