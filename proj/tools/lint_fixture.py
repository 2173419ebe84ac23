#!/usr/bin/env python3
"""Lint mock backend fixtures.

Exit status 0 when every fixture is clean, 1 otherwise. Problems are printed
as path:line: message.
"""
import json
import sys

TOLERANCE = 1e-9


def line_of(text, needle):
    pos = text.find(json.dumps(needle))
    return text.count("\n", 0, pos) + 1 if pos >= 0 else 0


def lint(path):
    text = open(path, encoding="utf-8").read()
    problems = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        return [(e.lineno, f"invalid JSON: {e.msg}")]
    header = doc.get("header")
    if not isinstance(header, dict):
        return [(1, "missing header object")]
    vocab = header.get("vocab")
    if not isinstance(vocab, list) or not vocab:
        return [(line_of(text, "vocab"), "header.vocab must be a non-empty list")]
    seen = set()
    for tok in vocab:
        if tok in seen:
            problems.append((line_of(text, tok), f"duplicate vocabulary entry {tok!r}"))
        seen.add(tok)
    mask_id = header.get("mask_token_id")
    if not isinstance(mask_id, int) or not 0 <= mask_id < len(vocab):
        problems.append((line_of(text, "mask_token_id"), "mask_token_id outside vocabulary"))
    elif "mask_token" in header and vocab[mask_id] != header["mask_token"]:
        problems.append((line_of(text, "mask_token"), "mask_token does not match vocab[mask_token_id]"))

    rows = list(doc.get("contexts", {}).items())
    if "fallback_unigram" in doc:
        rows.append(("fallback_unigram", doc["fallback_unigram"]))
    for key, row in rows:
        line = line_of(text, key)
        if not isinstance(row, dict):
            problems.append((line, f"row {key!r} is not an object"))
            continue
        total = 0.0
        for tok, p in row.items():
            if tok not in seen:
                problems.append((line, f"unknown token {tok!r} in {key!r}"))
            if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
                problems.append((line, f"probability {p!r} for {tok!r} outside [0, 1]"))
            else:
                total += p
        if total > 1.0 + TOLERANCE:
            problems.append((line, f"row {key!r} sums to {total:.6f} > 1"))
    return problems


def main(argv):
    if len(argv) < 2:
        print("usage: lint_fixture.py FIXTURE...", file=sys.stderr)
        return 2
    bad = 0
    for path in argv[1:]:
        for line, msg in lint(path):
            print(f"{path}:{line}: {msg}")
            bad += 1
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
