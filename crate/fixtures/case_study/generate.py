"""Regenerates the case-study fixtures in this directory.

45 country domains with 9 to 77 community reports each, a sidecar with
per-domain latency, a scripted backend replaying a three-round refinement
trajectory, and a query set spanning the five coverage levels.
"""

import json
from pathlib import Path

HERE = Path(__file__).resolve().parent

COUNTRIES = [
    "Italy", "France", "Spain", "Germany", "Japan", "United States", "United Kingdom", "China", "India",
    "Brazil", "Argentina", "Australia", "Austria", "Belgium", "Canada", "Chile", "Colombia", "Croatia",
    "Czechia", "Denmark", "Egypt", "Finland", "Greece", "Hungary", "Indonesia", "Ireland", "Israel",
    "Kenya", "Mexico", "Morocco", "Netherlands", "New Zealand", "Nigeria", "Norway", "Peru", "Poland",
    "Portugal", "South Africa", "South Korea", "Sweden", "Switzerland", "Thailand", "Turkey", "Vietnam",
    "Ukraine",
]

TOPICS = [
    ("Agri-food exports", "Export volumes of processed food and wine, main destination markets and recent growth."),
    ("Protected origin labels", "Geographical indications, certification bodies and price premiums for labelled products."),
    ("Trade agreements", "Bilateral and regional trade agreements affecting tariffs on food and beverages."),
    ("Industrial policy", "Public support instruments for manufacturing, innovation grants and export credit."),
    ("Tourism and heritage", "Cultural heritage sites, culinary tourism and their link to national brand image."),
    ("Small firms", "Role of small and medium enterprises, family businesses and regional clusters."),
    ("Logistics", "Ports, cold chains and cross-border logistics capacity."),
    ("Labour market", "Employment in agriculture and food processing, seasonal labour and skills."),
    ("Digital commerce", "Online export channels, marketplaces and digital marketing for producers."),
    ("Sustainability", "Environmental standards, organic farming share and climate adaptation in agriculture."),
    ("Competition", "Competitive position against neighbouring exporters and substitute products."),
]

# Tier, relevance score: ten relevant domains, Italy first.
RELEVANT = {
    "Italy": ("HIGH", 0.539),
    "France": ("HIGH", 0.521),
    "Spain": ("MODERATE", 0.498),
    "Germany": ("MODERATE", 0.487),
    "Japan": ("MODERATE", 0.472),
    "United States": ("MODERATE", 0.461),
    "United Kingdom": ("POTENTIAL", 0.418),
    "China": ("POTENTIAL", 0.402),
    "India": ("POTENTIAL", 0.381),
    "Brazil": ("POTENTIAL", 0.352),
}

QUERY = "Which strategies help a country's food and wine producers stay competitive in export markets?"

SEED = "Seed answer: export competitiveness rests on origin labels and trade agreements."
ROUND1 = "Round 1 answer: adds public support instruments and heritage-based branding."
ROUND2 = "Round 2 answer: integrates policy instruments, trade agreements and heritage branding with examples."
ROUND3 = "Round 3 answer: a broader but less focused fusion with generic recommendations."


def slug(name):
    return name.lower().replace(" ", "-")


def report_counts():
    # 29 is coprime to 45, so the ranks are a permutation of 0..44.
    return [9 + round(68 * ((i * 29) % 45) / 44) for i in range(len(COUNTRIES))]


def corpus():
    lines = []
    for country, count in zip(COUNTRIES, report_counts()):
        for r in range(count):
            title, text = TOPICS[r % len(TOPICS)]
            lines.append({
                "report_id": f"r{r:03d}",
                "domain_id": slug(country),
                "title": f"{country}: {title} ({r // len(TOPICS) + 1})",
                "text": f"{country}. {text} Community {r} covers related entities and their relations.",
            })
    return lines


def domains():
    return [
        {
            "domain_id": slug(c),
            "name": c,
            "summary": f"Knowledge graph about the economy, trade and culture of {c}.",
            "latency_ms": 400 + (i * 137) % 900,
        }
        for i, c in enumerate(COUNTRIES)
    ]


def quality(c, v, gaps, followups):
    return {"completeness": c, "breadth": v, "gaps": gaps, "followups": followups}


def script():
    entries = [
        {
            "role": "RelevanceAssessor",
            "match": "*",
            "response": {"tier": "IRRELEVANT", "score": 0.12, "rationale": "no overlap with the query"},
            "elapsed_ms": 1800,
        }
    ]
    for country, (tier, score) in RELEVANT.items():
        entries.append({
            "role": "RelevanceAssessor",
            "match": {"when": {"domain_name": country}},
            "response": {"tier": tier, "score": score, "rationale": f"{country} holds export and policy evidence"},
            "elapsed_ms": 1800,
        })
    entries += [
        {"role": "PartialGenerator", "match": "*",
         "response": {"text": "Domain-scoped evidence on export competitiveness."}, "elapsed_ms": 7000},
        {"role": "Synthesizer", "match": "*", "response": {"text": SEED}, "elapsed_ms": 11000},
        {"role": "Synthesizer", "match": {"when": {"prior_answer": SEED}}, "response": {"text": ROUND1},
         "elapsed_ms": 11000},
        {"role": "Synthesizer", "match": {"when": {"prior_answer": ROUND1}}, "response": {"text": ROUND2},
         "elapsed_ms": 11000},
        {"role": "Synthesizer", "match": {"when": {"prior_answer": ROUND2}}, "response": {"text": ROUND3},
         "elapsed_ms": 11000},
        {"role": "QualityAssessor", "match": {"when": {"answer": SEED}},
         "response": quality(0.70, 0.65, ["policy instruments", "heritage branding"],
                             ["Which public instruments support food exporters?",
                              "How does heritage branding raise export prices?",
                              "Which trade agreements lowered tariffs on wine?"]),
         "elapsed_ms": 3500},
        {"role": "QualityAssessor", "match": {"when": {"answer": ROUND1}},
         "response": quality(0.72, 0.70, ["concrete examples"],
                             ["Which regions gained most from origin labels?",
                              "What did export credit schemes achieve?"]),
         "elapsed_ms": 3500},
        {"role": "QualityAssessor", "match": {"when": {"answer": ROUND2}},
         "response": quality(0.74, 0.71, ["quantified outcomes"],
                             ["How large are price premiums for labelled products?",
                              "How did tariff cuts change export volumes?"]),
         "elapsed_ms": 3500},
        {"role": "QualityAssessor", "match": {"when": {"answer": ROUND3}},
         "response": quality(0.70, 0.65, ["focus"], ["Which recommendations apply to small producers?"]),
         "elapsed_ms": 3500},
    ]
    return entries


def queries():
    out = []
    for level in (1, 5, 10, 20, 40):
        for k in range(2):
            out.append({
                "query_id": f"L{level:02d}-{k}",
                "text": f"{QUERY} (coverage {level}, variant {k})",
                "coverage_level": level,
            })
    return out


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")


if __name__ == "__main__":
    write_jsonl(HERE / "corpus.jsonl", corpus())
    write_jsonl(HERE / "domains.jsonl", domains())
    write_jsonl(HERE / "queries.jsonl", queries())
    (HERE / "script.json").write_text(json.dumps(script(), indent=2) + "\n", encoding="utf-8")
    (HERE / "query.txt").write_text(QUERY + "\n", encoding="utf-8")
