#!/usr/bin/env python3
"""Computes the expected command-line outputs for the toy fixture from first
principles: brute-force counts, pairwise AUC, exact fractions for the
curation thresholds, and a direct out-of-place n-gram language classifier.

Writes expected/{matrix.csv,auc.csv,pivots.csv,manifest.jsonl}. Run from this
directory after gen_fixture.py.
"""

import hashlib
import json
import math
import os
from fractions import Fraction

HERE = os.path.dirname(os.path.abspath(__file__))
PROFILES = os.path.join(HERE, "..", "..", "..", "..", "core", "profiles")
LANGS = ["en", "fr", "zh", "ja"]
TAGS = ["en", "fr", "zh", "ja", "other"]


def load_jsonl(name):
    with open(os.path.join(HERE, name), encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def config_hash(command, params):
    text = f"command={command}\n" + "".join(f"{k}={params[k]}\n" for k in sorted(params))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def header(command, params):
    return f"# pivotscope {command} config={config_hash(command, params)}\n"


def fmt(x):
    return f"{x:.6f}"


def frac_str(fr):
    return f"{fr.numerator}/{fr.denominator}"


def write(name, text):
    with open(os.path.join(HERE, "expected", name), "w", encoding="utf-8", newline="") as f:
        f.write(text)


vocab = open(os.path.join(HERE, "vocab.txt"), encoding="utf-8").read().split("\n")[:-1]
ID = {s: i for i, s in enumerate(vocab)}
docs = load_jsonl("corpus.jsonl")
padding = load_jsonl("padding.jsonl")
tasks = load_jsonl("tasks.jsonl")
losses = load_jsonl("losses.jsonl")
traces = load_jsonl("traces.jsonl")


def is_cjk(ch):
    o = ord(ch)
    return (0x3040 <= o <= 0x30FF or 0x31F0 <= o <= 0x31FF or 0x3400 <= o <= 0x4DBF
            or 0x4E00 <= o <= 0x9FFF or 0xF900 <= o <= 0xFAFF or 0xFF66 <= o <= 0xFF9F
            or 0x20000 <= o <= 0x2FA1F)


def term(word):
    # fixture words are plain letters: CJK splits per character
    parts = []
    buf = ""
    for ch in word.lower():
        if is_cjk(ch):
            if buf:
                parts.append(buf)
                buf = ""
            parts.append(ch)
        else:
            buf += ch
    if buf:
        parts.append(buf)
    return [ID[p] for p in parts]


def contains(tokens, t):
    n = len(t)
    return any(tokens[i:i + n] == t for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------- score

def mean(xs):
    s = 0.0
    for x in xs:
        s += x
    return s / len(xs)


def prob(lps):
    return min(max(math.exp(mean(sorted(lps))), 2.2250738585072014e-308), 1.0)


recs = {}
for r in losses:
    recs[(r["task_id"], r["trial"], r["subject"])] = r["token_logprobs"]

cell_scores = {}
for t in tasks:
    total = 0.0
    for trial in range(5):
        ps = prob(recs[(t["task_id"], trial, "source")])
        pd = [prob(recs[(t["task_id"], trial, f"distractor:{k}")]) for k in range(9)]
        total += ps - mean(pd)
    cell_scores.setdefault((t["source_lang"], t["target_lang"]), []).append(total / 5)
cells = {k: mean(v) for k, v in cell_scores.items()}
overall = mean([cells[k] for k in sorted(cells)])

out = header("score", {"trials": 5, "distractors": 9, "languages": ",".join(LANGS)})
out += "source," + ",".join(LANGS) + "\n"
for a in LANGS:
    row = [a] + ["" if a == b else fmt(cells[(a, b)]) for b in LANGS]
    out += ",".join(row) + "\n"
out += f"avg,{fmt(overall)}\n"
write("matrix.csv", out)

# ---------------------------------------------------------------- behavior


def classify(tr):
    best = None
    for li, layer in enumerate(tr["layers"]):
        top = layer["top_k"][0][1]
        for tok, p in layer["top_k"]:
            if p != top:
                break
            key = (p, li, -tok)
            if best is None or key > best[0]:
                best = (key, tok)
    peak = best[1]
    inside = peak in tr["input_token_ids"] or peak in tr["output_token_ids"]
    return "cooccurrence" if inside else "semantic_pivot"


labels = {tr["task_id"]: classify(tr) for tr in traces}


def pairwise_auc(pos, neg):
    wins = 0.0
    for x in pos:
        for y in neg:
            wins += 1.0 if x > y else 0.5 if x == y else 0.0
    return wins / (len(pos) * len(neg))


groups = {}
for t in tasks:
    g = groups.setdefault((t["source_lang"], t["target_lang"]), {"pos": [], "neg": [], "excluded": 0})
    s, w = term(t["source_word"]), term(t["target_word"])
    if t["source_word"] == t["target_word"] or s == w:
        g["excluded"] += 1
        continue
    codf = sum(1 for d in docs if contains(d["tokens"], s) and contains(d["tokens"], w))
    (g["pos"] if labels[t["task_id"]] == "cooccurrence" else g["neg"]).append(codf)

out = header("auc", {"variant": "full", "languages": ",".join(LANGS)})
out += "source," + ",".join(LANGS) + ",excluded\n"
for a in LANGS:
    row, excluded = [a], 0
    for b in LANGS:
        g = groups.get((a, b))
        if g is None:
            row.append("")
            continue
        excluded += g["excluded"]
        row.append(fmt(pairwise_auc(g["pos"], g["neg"])) if g["pos"] and g["neg"] else "NA")
    out += ",".join(row) + f",{excluded}\n"
write("auc.csv", out)

# ---------------------------------------------------------------- pivots

K = 10


def presence(doc_list):
    n = len(doc_list)
    counts = {}
    for d in doc_list:
        for tok in set(d["tokens"]):
            counts[tok] = counts.get(tok, 0) + 1
    return {tok: c / n for tok, c in counts.items()}


def stopped(surface):
    stripped = surface.strip()
    if not stripped or len(surface.encode()) == 1:
        return True
    return all(not ch.isalnum() and not ch.isspace() for ch in stripped)


bg = presence(docs)
rows = []
for t in tasks:
    s, w = term(t["source_word"]), term(t["target_word"])
    if t["source_word"] == t["target_word"] or s == w:
        continue
    if labels[t["task_id"]] != "semantic_pivot" or set(s) & set(w):
        continue
    fs = presence([d for d in docs if contains(d["tokens"], s)])
    ft = presence([d for d in docs if contains(d["tokens"], w)])
    cands = []
    for tok in set(fs) | set(ft):
        a, b, c = fs.get(tok, 0.0), ft.get(tok, 0.0), bg.get(tok, 0.0)
        cands.append((min(a - c, b - c), tok, a, b, c))
    cands.sort(key=lambda x: (-x[0], x[1]))
    for rank, (f, tok, a, b, c) in enumerate(cands[:K], start=1):
        if not stopped(vocab[tok]):
            rows.append([t["task_id"], str(rank), str(tok), vocab[tok], fmt(f), fmt(a), fmt(b), fmt(c)])


def csv_field(x):
    if any(ch in x for ch in ',"\r\n'):
        return '"' + x.replace('"', '""') + '"'
    return x


out = header("pivots", {"n": 2000, "k": K, "seed": 0, "filter": "stoplist", "labels": "true"})
out += "task_id,rank,token_id,surface,f_score,fre_s,fre_t,fre_bg\n"
for r in rows:
    out += ",".join(csv_field(x) for x in r) + "\n"
write("pivots.csv", out)

# ---------------------------------------------------------------- curate

cfg = {"budget": 40, "min_docs": 2, "degree_cut": Fraction(1, 10), "theta_factor": Fraction(1, 10),
       "fraction": Fraction(3, 4)}
N = len(docs)
tok_docs, pair_docs = {}, {}
for d in docs:
    u = sorted(set(d["tokens"]))
    for i, x in enumerate(u):
        tok_docs[x] = tok_docs.get(x, 0) + 1
        for y in u[i + 1:]:
            pair_docs[(x, y)] = pair_docs.get((x, y), 0) + 1
pair_docs = {k: v for k, v in pair_docs.items() if v >= cfg["min_docs"]}
theta = cfg["theta_factor"] * Fraction(sum(tok_docs.values()), len(tok_docs) * N)
assert Fraction(cfg["min_docs"] - 1, N) < theta, "pruning would drop high pairs"
degree = {x: 0 for x in tok_docs}
for (x, y), c in pair_docs.items():
    if Fraction(c, N) >= theta:
        degree[x] += 1
        degree[y] += 1
connected = sorted((x for x in degree if degree[x] > 0), key=lambda x: (-degree[x], x))
cut = math.ceil(cfg["degree_cut"] * len(connected))
pivots = set(connected[cut:])

scored = []
for d in docs:
    cnt = sum(1 for x in d["tokens"] if x in pivots)
    scored.append((Fraction(cnt, len(d["tokens"])), cnt, d))
scored.sort(key=lambda s: (-s[0], -s[1], s[2]["doc_id"]))

profiles = {}
for lang in LANGS:
    lines = open(os.path.join(PROFILES, f"{lang}.txt"), encoding="utf-8").read().splitlines()
    profiles[lang] = {line.split("\t")[0]: i for i, line in enumerate(lines) if line}


def letter_runs(text):
    chars = list(text.lower())
    words, cur, i = [], "", 0
    while i < len(chars):
        ch = chars[i]
        if ch.isalpha():
            cur += ch
            i += 1
            continue
        if ch.isspace() and cur and is_cjk(cur[-1]):
            j = i
            while j < len(chars) and chars[j].isspace():
                j += 1
            if j < len(chars) and is_cjk(chars[j]):
                i = j
                continue
        if cur:
            words.append(cur)
            cur = ""
        i += 1
    if cur:
        words.append(cur)
    return words


def text_profile(text):
    counts = {}
    for w in letter_runs(text):
        padded = "_" + w + "_"
        for n in (1, 2, 3):
            for i in range(len(padded) - n + 1):
                g = padded[i:i + n]
                if g == "_":
                    continue
                counts[g] = counts.get(g, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [g for g, _ in ranked[:300]]


def chunk_label(text):
    if not letter_runs(text):
        return "other"
    doc = text_profile(text)
    best = None
    for lang in LANGS:
        ranks = profiles[lang]
        worst = len(ranks)
        dist = sum(min(abs(ranks[g] - i), worst) if g in ranks else worst for i, g in enumerate(doc))
        d = Fraction(dist, len(doc) * worst)
        if best is None or d < best[0]:
            best = (d, lang)
    return best[1]


def doc_chunks(tokens, size=256, step=128):
    n = len(tokens)
    if n <= size:
        return [(0, n)]
    count = -(-(n - size) // step) + 1
    return [(i * step, min(i * step + size, n)) for i in range(count)]


def doc_languages(d):
    return [chunk_label(" ".join(vocab[x] for x in d["tokens"][a:b])) for a, b in doc_chunks(d["tokens"])]


quota = cfg["budget"] * cfg["fraction"].numerator // cfg["fraction"].denominator
entries, chunk_counts, non_english = [], {}, 0


def take(d, cnt, origin):
    global non_english
    labs = doc_languages(d)
    for lab in labs:
        chunk_counts[lab] = chunk_counts.get(lab, 0) + 1
    non_english += any(lab in ("fr", "zh", "ja") for lab in labs)
    tally = {}
    for lab in labs:
        tally[lab] = tally.get(lab, 0) + 1
    majority = max(TAGS, key=lambda tag: (tally.get(tag, 0), -TAGS.index(tag)))
    entries.append({"doc_id": d["doc_id"], "rank": len(entries) + 1, "pivot_count": cnt,
                    "pivot_proportion": cnt / len(d["tokens"]), "language": majority, "origin": origin})


for _, cnt, d in scored[:quota]:
    take(d, cnt, "ranked")
taken = {e["doc_id"] for e in entries}
for d in padding:
    if len(entries) >= cfg["budget"]:
        break
    if d["doc_id"] not in taken:
        take(d, sum(1 for x in d["tokens"] if x in pivots), "padding")

total_chunks = sum(chunk_counts.values())
params = {
    "min_docs": 2, "degree_cut": "1/10", "theta_factor": "1/10", "budget": 40,
    "ranking_key": "proportion", "padding": "true", "target_multilingual_fraction": "3/4",
    "chunk_size": 256, "chunk_step": 128, "chunk_unit": "tokens", "chunk_labels": "builtin",
}
head = {
    "kind": "header",
    "theta": theta.numerator / theta.denominator,
    "theta_exact": frac_str(theta),
    "pivot_set_size": len(pivots),
    "budget": cfg["budget"],
    "selected": len(entries),
    "short": len(entries) < cfg["budget"],
    "non_english_doc_count": non_english,
    "language_distribution": {tag: chunk_counts[tag] / total_chunks for tag in TAGS if tag in chunk_counts},
    "config_hash": config_hash("curate", params),
}
dumps = lambda o: json.dumps(o, ensure_ascii=False, separators=(",", ":"))
write("manifest.jsonl", "".join(dumps(o) + "\n" for o in [head] + entries))
print(f"matrix, auc ({len(groups)} pairs), pivots ({len(rows)} rows), manifest ({len(entries)} docs)")
