#!/usr/bin/env python3
"""Generate the synthetic entity dump slice and the mock model fixtures.

Output is a pure function of the seed, so the files in fixtures/ can be
regenerated and diffed.
"""
import argparse
import json
import random
from pathlib import Path

SEED = 20211231
MASK = "<mask>"
SPECIALS = ["<pad>", "<unk>", MASK]
CONT = "##"

TEMPLATES = {
    "P54": "<subject> plays for <object>.",
    "P6": "<object> is the head of the government of <subject>.",
    "P286": "<object> is the head coach of <subject>.",
}

FIRST = ["Ada", "Bram", "Cora", "Dario", "Elin", "Fabio", "Greta", "Hugo", "Ines", "Jonas",
         "Kira", "Luca", "Mira", "Nico", "Olga", "Pablo", "Rosa", "Sven", "Tara", "Umar",
         "Vera", "Wim", "Xenia", "Yuri", "Zora"]
LAST = ["Alder", "Brandt", "Castellano", "Dunmore", "Esposito", "Falk", "Gallagher", "Holm",
        "Ivanova", "Jansen", "Kowalczyk", "Lindqvist", "Moreau", "Novak", "Okafor", "Petrov",
        "Quinlan", "Rinaldi", "Sorensen", "Tanaka", "Ueda", "Valentini", "Whitford", "Yilmaz"]
TOWNS = ["Northbridge", "Kestrel", "Ashford", "Marlow", "Eastvale", "Redhaven", "Stonemoor",
         "Westbury", "Calder", "Brightwater", "Hollins", "Larkspur", "Oakridge", "Penmouth",
         "Ravensholt", "Silverton", "Thornbury", "Umberfield", "Valemont", "Wexcombe",
         "Yarrow", "Zephyr", "Glenmore", "Fairhaven", "Dunmere"]
SUFFIX = ["FC", "", "Rovers", "", "City", "United", "", "Athletic"]
COUNTRIES = ["Valdoria", "Ostmark", "Lirania", "Pellucia", "Norvania", "Carpathia", "Estland",
             "Marisol"]


def wd_time(date, precision=11):
    return {"time": "+" + date + "T00:00:00Z", "precision": precision,
            "calendarmodel": "http://www.wikidata.org/entity/Q1985727"}


def qualifier(prop, date, precision=11):
    return {"snaktype": "value", "property": prop,
            "datavalue": {"type": "time", "value": wd_time(date, precision)}}


def claim(prop, obj, start=None, end=None, rank="normal", precision=11, extra=None, snaktype="value"):
    mainsnak = {"snaktype": snaktype, "property": prop}
    if snaktype == "value":
        mainsnak["datavalue"] = {"type": "wikibase-entityid",
                                 "value": {"entity-type": "item", "id": obj,
                                           "numeric-id": int(obj[1:])}}
    quals = {}
    if start:
        quals.setdefault("P580", []).append(qualifier("P580", start, precision))
    if end:
        quals.setdefault("P582", []).append(qualifier("P582", end, precision))
    for prop_q, date in extra or []:
        quals.setdefault(prop_q, []).append(qualifier(prop_q, date))
    c = {"mainsnak": mainsnak, "type": "statement", "rank": rank}
    if quals:
        c["qualifiers"] = quals
    return c


def entity(qid, label, claims=None, sitelink=True):
    e = {"type": "item", "id": qid, "labels": {}, "claims": {}, "sitelinks": {}}
    if label is not None:
        e["labels"]["en"] = {"language": "en", "value": label}
    if sitelink:
        e["sitelinks"]["enwiki"] = {"site": "enwiki", "title": (label or qid).replace(" ", "_")}
    for c in claims or []:
        e["claims"].setdefault(c["mainsnak"]["property"], []).append(c)
    return e


def random_date(rng, lo_year, hi_year):
    y = rng.randint(lo_year, hi_year)
    m = rng.randint(1, 12)
    d = rng.randint(1, 28)
    return f"{y:04d}-{m:02d}-{d:02d}"


def core_entities():
    """Entities behind the Ronaldo, Italy and Morgan examples plus edge cases."""
    out = [
        entity("Q11571", "Cristiano Ronaldo", [
            claim("P54", "Q8682", "2009-07-01", "2018-07-10"),
            claim("P54", "Q1422", "2018-07-10", "2021-08-27"),
            claim("P54", "Q18656", "2021-08-31", "2022-11-22"),
            # a deprecated duplicate must not leak into the facts
            claim("P54", "Q8682", "2021-01-01", "2021-12-31", rank="deprecated"),
        ]),
        entity("Q1422", "Juventus FC"),
        entity("Q18656", "Manchester United F.C."),
        entity("Q8682", "Real Madrid CF"),
        entity("Q38", "Italy", [
            claim("P6", "Q47213207", "2018-06-01", "2021-02-13"),
            claim("P6", "Q33034", "2021-02-13", "2022-10-22"),
        ]),
        entity("Q47213207", "Giuseppe Conte"),
        entity("Q33034", "Mario Draghi"),
        entity("Q5383", "Alex Morgan", [
            claim("P54", "Q1321963", "2010-03-31"),
            claim("P54", "Q18609046", "2015-10-26", "2021-12-16"),
        ]),
        entity("Q1321963", "United States women's national soccer team"),
        entity("Q18609046", "Orlando Pride"),
        # edge cases
        entity("Q9900001", "Nosite Player", [claim("P54", "Q1422", "2019-01-01", "2020-01-01")],
               sitelink=False),
        entity("Q9900002", None, [claim("P54", "Q1422", "2019-01-01", "2020-01-01")]),
        entity("Q9900003", "Edgecase Keeper", [
            claim("P54", "Q9900004", "2019-01-01", "2021-01-01"),  # object lacks a sitelink
            claim("P54", "Q9999999", "2019-01-01", "2021-01-01"),  # object not in the dump
            claim("P54", "Q1422"),                                  # no qualifiers
            claim("P54", "Q1422", "2021-06-01", "2020-06-01"),      # start after end
            claim("P54", "Q8682", "2001-01-01", "2008-06-30"),      # before the cutoff
            claim("P54", None, "2019-01-01", snaktype="somevalue"),
            claim("P54", "Q18656", "2019", "2020", precision=9),    # year precision
            claim("P54", "Q1422", "2010", precision=8),             # decade precision only
            claim("P54", "Q18609046", "2019-03-01", "2019-09-30",
                  extra=[("P580", "2019-02-01"), ("P582", "2019-12-31")]),
        ]),
        entity("Q9900004", "Hidden Athletic", sitelink=False),
    ]
    # year precision values must carry a full timestamp
    for c in out[12]["claims"]["P54"]:
        for q in c.get("qualifiers", {}).values():
            for s in q:
                t = s["datavalue"]["value"]["time"]
                if len(t) == len("+2019T00:00:00Z"):
                    s["datavalue"]["value"]["time"] = t.replace("T", "-01-01T", 1)
    return out


def synthetic_entities(rng, total):
    ents = []
    next_q = [1000001]

    def q():
        qid = f"Q{next_q[0]}"
        next_q[0] += 1
        return qid

    clubs = []
    for i, town in enumerate(TOWNS):
        suffix = SUFFIX[i % len(SUFFIX)]
        label = f"{town} {suffix}".strip()
        clubs.append((q(), label))
    countries = [(q(), name) for name in COUNTRIES]
    people = set()

    def person():
        while True:
            name = f"{rng.choice(FIRST)} {rng.choice(LAST)}"
            if name not in people:
                people.add(name)
                return name

    politicians = [(q(), person()) for _ in range(16)]
    coaches = [(q(), person()) for _ in range(20)]

    for qid, label in clubs:
        claims = []
        start = f"{rng.randint(2016, 2019)}-{rng.randint(1, 12):02d}-01"
        coach_pool = rng.sample(coaches, 3)
        for j, (cq, _) in enumerate(coach_pool):
            end = None if j == 2 else f"{int(start[:4]) + rng.randint(1, 2)}-{rng.randint(1, 12):02d}-15"
            claims.append(claim("P286", cq, start, end))
            if end is None or end > "2022-12-31":
                break
            start = end
        ents.append(entity(qid, label, claims))
    for i, (qid, label) in enumerate(countries):
        a, b = politicians[2 * i], politicians[2 * i + 1]
        switch = random_date(rng, 2020, 2021)
        ents.append(entity(qid, label, [
            claim("P6", a[0], random_date(rng, 2014, 2018), switch),
            claim("P6", b[0], switch, None if i % 2 else random_date(rng, 2022, 2023)),
        ]))
    ents += [entity(qid, label) for qid, label in politicians]
    ents += [entity(qid, label) for qid, label in coaches]

    while len(ents) < total:
        qid, label = q(), person()
        claims = []
        # a few careers begin inside the probed range
        day = random_date(rng, 2014, 2019) if rng.random() < 0.85 else random_date(rng, 2020, 2021)
        for _ in range(rng.randint(1, 3)):
            club = rng.choice(clubs)[0]
            end_year = min(int(day[:4]) + rng.randint(1, 4), 2024)
            end = f"{end_year}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}"
            if end <= day:
                end = None
            claims.append(claim("P54", club, day, end))
            if end is None:
                break
            day = end
        ents.append(entity(qid, label, claims))
    return ents


# --- vocabulary and greedy tokenizer (mirrors the fixture tokenizer contract) ---

def greedy(word, vocab_set, longest):
    pieces, pos = [], 0
    while pos < len(word):
        for n in range(min(longest, len(word) - pos), 0, -1):
            cand = word[pos:pos + n] if pos == 0 else CONT + word[pos:pos + n]
            if cand in vocab_set and cand != MASK:
                pieces.append(cand)
                pos += n
                break
        else:
            return None, pos
    return pieces, pos


def build_vocab(words):
    vocab = list(SPECIALS) + [CONT + "."]
    seen = set(vocab)

    def add(p):
        if p not in seen:
            seen.add(p)
            vocab.append(p)

    short = sorted({w for w in words if len(w) < 8})
    long_words = sorted({w for w in words if len(w) >= 8})
    for w in short:
        add(w)
    for w in long_words:
        add(w[:4])
        add(CONT + w[4:])
    # repair any word the greedy pass cannot cover
    changed = True
    while changed:
        changed = False
        longest = max(len(v) for v in vocab)
        for w in sorted(set(words)):
            pieces, pos = greedy(w, seen, longest)
            if pieces is None:
                add(CONT + w[pos:] if pos else w)
                changed = True
    return vocab


def tokenize(text, vocab_set, longest):
    out = []
    for word in text.split():
        first = True
        while word:
            m = word.find(MASK)
            seg = word if m < 0 else word[:m]
            if seg:
                if first:
                    pieces, _ = greedy(seg, vocab_set, longest)
                else:
                    pieces, _ = greedy_cont(seg, vocab_set, longest)
                if pieces is None:
                    raise SystemExit(f"cannot tokenize {seg!r}")
                out += pieces
            if m < 0:
                break
            out.append(MASK)
            word = word[m + len(MASK):]
            first = False
    return out


def greedy_cont(seg, vocab_set, longest):
    pieces, pos = [], 0
    while pos < len(seg):
        for n in range(min(longest, len(seg) - pos), 0, -1):
            cand = CONT + seg[pos:pos + n]
            if cand in vocab_set:
                pieces.append(cand)
                pos += n
                break
        else:
            return None, pos
    return pieces, pos


def detok(pieces):
    out = ""
    for p in pieces:
        out += p[len(CONT):] if p.startswith(CONT) and len(p) > len(CONT) else " " + p
    return out.strip()


def render(template, subject, obj):
    return template.replace("<subject>", subject, 1).replace("<object>", obj, 1)


def active(start, end, lo, hi):
    return (start is None or start <= hi) and (end is None or end >= lo)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)

    ents = core_entities()
    ents += synthetic_entities(rng, 200 - len(ents) + 0)
    assert len(ents) == 200, len(ents)

    lines = ["["] + [json.dumps(e, sort_keys=True) + "," for e in ents]
    lines[-1] = lines[-1].rstrip(",")
    lines.append("]")
    (out / "dump_slice.jsonl").write_text("\n".join(lines) + "\n")
    broken = list(lines)
    broken.insert(5, '{"type": "item", "id": "Q1", "labels": {')
    broken.insert(50, "not json at all,")
    (out / "dump_slice_malformed.jsonl").write_text("\n".join(broken) + "\n")

    labels = {e["id"]: e["labels"]["en"]["value"] for e in ents if "en" in e["labels"]}
    words = []
    for t in TEMPLATES.values():
        words += [w for w in t.replace("<subject>", " ").replace("<object>", " ").replace(".", " ").split()]
    for lab in labels.values():
        words += lab.split()
    vocab = build_vocab(words)
    vocab_set = set(vocab)
    longest = max(len(v) for v in vocab)
    (out / "vocab.txt").write_text("\n".join(vocab) + "\n")

    freq = {}
    for lab in labels.values():
        for p in tokenize(lab, vocab_set, longest):
            freq[p] = freq.get(p, 0) + 1
    total_freq = sum(freq.values())
    fallback = {p: int(1e6 * c / total_freq) / 1e6 for p, c in sorted(freq.items())}

    # facts active per quarter, straight from the entities (sitelinked objects only)
    quarters = {"2021-Q2": ("2021-04-01", "2021-06-30"), "2021-Q3": ("2021-07-01", "2021-09-30")}
    for name, (lo, hi) in quarters.items():
        contexts = {}
        for e in ents:
            subj = labels.get(e["id"])
            if not subj or "enwiki" not in e["sitelinks"]:
                continue
            for prop, stmts in sorted(e["claims"].items()):
                if prop not in TEMPLATES:
                    continue
                for c in stmts:
                    obj = c["mainsnak"].get("datavalue", {}).get("value", {}).get("id")
                    q = c.get("qualifiers", {})
                    if obj not in labels or c["rank"] == "deprecated" or not q:
                        continue
                    start = q.get("P580", [{}])[0].get("datavalue", {}).get("value", {}).get("time", "+")[1:11] or None
                    end = q.get("P582", [{}])[0].get("datavalue", {}).get("value", {}).get("time", "+")[1:11] or None
                    if not active(start, end, lo, hi):
                        continue
                    gold = tokenize(labels[obj], vocab_set, longest)
                    m = len(gold)
                    tmpl = TEMPLATES[prop]
                    lead = 0.45 if name == "2021-Q2" else 0.35
                    # single mask: the first gold piece leads
                    key = render(tmpl, subj, MASK)
                    contexts.setdefault(key, {})[gold[0]] = lead
                    # greedy chain for the gold length
                    for s in range(m):
                        filled = detok(gold[:s])
                        obj_text = ((filled + " ") if filled else "") + " ".join([MASK] * (m - s))
                        k = render(tmpl, subj, obj_text) + ("||0" if m - s > 1 else "")
                        contexts.setdefault(k, {})[gold[s]] = lead
        # keep every row a sub-distribution
        for k, row in contexts.items():
            total = sum(row.values())
            if total > 0.95:
                for tok in row:
                    row[tok] = round(row[tok] * 0.95 / total, 6)
        fixture = {
            "header": {"name": name, "vocab": vocab, "mask_token_id": vocab.index(MASK),
                       "mask_token": MASK, "unk_token": "<unk>"},
            "contexts": dict(sorted(contexts.items())),
            "fallback_unigram": fallback,
        }
        (out / f"mock_{name}.json").write_text(json.dumps(fixture, indent=1, sort_keys=False) + "\n")


if __name__ == "__main__":
    main()
