"""Smoke test for the meshrag extension module against the case-study fixtures."""

import json
import sys
from pathlib import Path

import meshrag

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures" / "case_study"


def main() -> int:
    reg = meshrag.Registry.load(str(FIXTURES / "corpus.jsonl"), str(FIXTURES / "domains.jsonl"))
    assert len(reg) == 45, len(reg)
    assert reg.report_count_range() == (9, 77)

    cfg = meshrag.Config()
    cfg.corpus_path = str(FIXTURES / "corpus.jsonl")
    cfg.domains_path = str(FIXTURES / "domains.jsonl")
    cfg.script_path = str(FIXTURES / "script.json")
    report = json.loads(meshrag.run(cfg, "export competitiveness of food producers", registry=reg))
    assert report["best_iteration"] == 2, report["best_iteration"]
    assert abs(report["answer"]["quality"] - 0.725) < 1e-9
    assert len(report["quality_trace"]) == 4

    cfg.budget_secs = 4.0
    try:
        meshrag.run(cfg, "anything")
    except meshrag.MeshragError as e:
        assert e.args[1] == 5, e.args
    else:
        raise AssertionError("expected budget exhaustion")

    assert meshrag.select_strategy(0.70, 0.65, 100.0) == "Hybrid"
    assert meshrag.select_strategy(0.70, 0.80, 100.0) == "Depth"
    assert meshrag.select_strategy(0.80, 0.80, 100.0) == "Stop"
    assert abs(meshrag.overall_quality(0.74, 0.71) - 0.725) < 1e-12
    assert meshrag.tier_for(0.6) == "HIGH"
    print("smoke test ok:", report["stop_reason"], report["answer"]["quality"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
