"""Writes log.jsonl, truth.jsonl and expected.json.

expected.json is computed here with plain counting, independently of the C++ code.
"""
import hashlib
import json
import random

rng = random.Random(20240611)
log, truth = [], []
for v in range(5):
    vid = f"ext_{v:02d}"
    for t in range(1, 11):
        tr = rng.random() < 0.4
        pr = tr if rng.random() < 0.75 else (not tr)
        truth.append({"video_id": vid, "frame_index": t, "truth_label": tr})
        log.append({"video_id": vid, "frame_index": t, "timestamp_s": (t - 1) * 0.2, "label": pr,
                    "reasoning": "external", "prompt_kind": "single_frame", "reference_index": None,
                    "reference_label": None, "backend_id": "external-tool",
                    "raw_response_digest": hashlib.sha256(f"{vid}{t}".encode()).hexdigest(), "parse_status": "ok"})

with open("log.jsonl", "w") as f:
    for r in log:
        f.write(json.dumps(r) + "\n")
with open("truth.jsonl", "w") as f:
    for r in truth:
        f.write(json.dumps(r) + "\n")

pairs = [(a["label"], b["truth_label"]) for a, b in zip(log, truth)]
tp = sum(1 for p, y in pairs if p and y)
fp = sum(1 for p, y in pairs if p and not y)
fn = sum(1 for p, y in pairs if not p and y)
tn = len(pairs) - tp - fp - fn
precision = tp / (tp + fp)
recall = tp / (tp + fn)
expected = {"n": len(pairs), "tp": tp, "fp": fp, "fn": fn, "tn": tn, "accuracy": (tp + tn) / len(pairs),
            "precision": precision, "recall": recall, "f1": 2 * precision * recall / (precision + recall)}
with open("expected.json", "w") as f:
    json.dump(expected, f, indent=2)
