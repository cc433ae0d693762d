"""Builds the 1,000-record pipeline fixture and its expected counts.

The expected files are computed here, independently of the Rust code:
tokenizing, matching, repost stripping and n-gram counting are
reimplemented below from the format rules.
"""
import csv
import json
import random
import re
from collections import Counter, defaultdict
from datetime import date, datetime, timedelta
from pathlib import Path

HERE = Path(__file__).parent
STOP = set(
    l.strip() for l in (HERE / "../../../data/stopwords_en.txt").read_text().splitlines() if l.strip()
)
rng = random.Random(20170522)
D0 = date(2017, 5, 20)
N_DAYS = 10
TERMS = ["ban islam", "#stopislam", "refugees welcome", "muslims out"]


def tokenize(text):
    out, cur = [], ""
    for ch in text.lower():
        if ch.isalnum() or ch == "'":
            cur += ch
        elif ch == "#":
            if cur and cur != "#":
                out.append(cur)
            cur = "#"
        else:
            if cur and cur != "#":
                out.append(cur)
            cur = ""
    if cur and cur != "#":
        out.append(cur)
    return out


RT = re.compile(r"^\s*rt\s+@([^\s:]+):?(.*)$", re.IGNORECASE | re.DOTALL)


def strip_repost(text):
    m = RT.match(text)
    return m.group(2).strip() if m else text


def matches(term, text):
    toks = set(tokenize(text))
    return all(t in toks for t in tokenize(term))


def ts(day, rng):
    t = datetime.combine(D0 + timedelta(days=day), datetime.min.time())
    return (t + timedelta(seconds=rng.randrange(86400))).strftime("%Y-%m-%dT%H:%M:%SZ")


# ---- twitter_like: 700 messages ----
ban_templates = [
    "ban islam now",
    "Ban Islam, NOW!",
    "islam? they want to BAN it",
    "we must ban islam in europe",
    "I say: ban... islam",
]
near_miss = ["ban islamic schools", "banislam", "#banislam today", "islam is peace", "ban everything"]
stop_templates = ["#StopIslam now", "Enough. #stopislam!", "#STOPISLAM #banislam", "stop islam"]
ref_templates = ["Refugees welcome here", "welcome, refugees!", "refugees are welcome", "refugee welcome"]
out_templates = ["muslims out of europe", "Out with the muslims", "muslims go out", "muslim out"]
filler = [
    "what a day in the city",
    "the news tonight is bad",
    "people are talking about it",
    "thoughts with everyone",
    "i can't believe this",
    "stay safe everyone",
]
users = [f"tu{i:02d}" for i in range(40)]

tw = []
ban_per_day = [3, 5, 8, 12, 30, 20, 9, 4, 2, 1]


def tweet(day, text, user=None):
    tw.append({"day": day, "text": text, "user": user or rng.choice(users)})


for d in range(N_DAYS):
    for i in range(ban_per_day[d]):
        base = rng.choice(ban_templates)
        if i % 4 == 3:
            # identical retweets of an earlier message that day
            base = "RT @" + rng.choice(users) + ": ban islam now"
        tweet(d, base)
    for _ in range(rng.randrange(3, 8)):
        tweet(d, rng.choice(near_miss))
    for _ in range(rng.randrange(4, 12)):
        tweet(d, rng.choice(stop_templates))
    for _ in range(rng.randrange(5, 15)):
        tweet(d, rng.choice(ref_templates))
    for _ in range(rng.randrange(2, 9)):
        tweet(d, rng.choice(out_templates))
while len(tw) < 700:
    tweet(rng.randrange(N_DAYS), rng.choice(filler))
assert len(tw) == 700, len(tw)
rng.shuffle(tw)

records = []
for i, m in enumerate(tw):
    records.append(
        {"platform": "twitter_like", "id": f"t{i:04d}", "ts": ts(m["day"], rng), "user": m["user"], "text": m["text"], "kind": "message"}
    )

# ---- reddit_like: 300 records ----
rusers = [f"ru{i:02d}" for i in range(25)]
post_texts = ["Should we ban islam?", "refugees welcome in our town", "local news thread", "muslims out, they said", "weekend plans"]
comment_texts = ["agreed", "no way", "ban islam entirely", "refugees welcome", "source?", "this"]
rd = []
pid = 0
while len(rd) < 300:
    d = rng.randrange(N_DAYS)
    pid += 1
    post_id = f"p{pid:03d}"
    rd.append({"platform": "reddit_like", "id": post_id, "ts": ts(d, rng), "user": rng.choice(rusers), "text": rng.choice(post_texts), "kind": "post"})
    for _ in range(rng.randrange(0, 6)):
        if len(rd) >= 300:
            break
        rd.append(
            {"platform": "reddit_like", "id": f"c{len(rd):03d}", "ts": ts(d, rng), "user": rng.choice(rusers), "text": rng.choice(comment_texts), "kind": "comment", "parent_id": post_id}
        )
# a few orphan comments whose parent is outside the corpus
for j in range(3):
    rd[-1 - j] = dict(rd[-1 - j], kind="comment", parent_id="p999", text="ban islam entirely")
records += rd
assert len(records) == 1000

with open(HERE / "messages.jsonl", "w") as f:
    for r in records:
        f.write(json.dumps(r, ensure_ascii=False) + "\n")


def day_of(r):
    return (date.fromisoformat(r["ts"][:10]) - D0).days


# ---- expected series ----
expected = []
for term in TERMS:
    # twitter
    tws = [r for r in records if r["platform"] == "twitter_like" and matches(term, r["text"])]
    for d in range(N_DAYS):
        day_recs = [r for r in tws if day_of(r) == d]
        expected.append((term, "twitter_like", "messages", d, len(day_recs)))
        expected.append((term, "twitter_like", "messages_dedup", d, len({strip_repost(r["text"]) for r in day_recs})))
        expected.append((term, "twitter_like", "users", d, len({r["user"] for r in day_recs})))
    # reddit: comments count through a matching parent or their own text
    rds = [r for r in records if r["platform"] == "reddit_like"]
    matched_posts = {r["id"] for r in rds if r["kind"] == "post" and matches(term, r["text"])}
    inc = [
        r
        for r in rds
        if (r["kind"] == "post" and r["id"] in matched_posts)
        or (r["kind"] == "comment" and (r.get("parent_id") in matched_posts or matches(term, r["text"])))
    ]
    for d in range(N_DAYS):
        day_recs = [r for r in inc if day_of(r) == d]
        expected.append((term, "reddit_like", "posts", d, sum(r["kind"] == "post" for r in day_recs)))
        expected.append((term, "reddit_like", "comments", d, sum(r["kind"] == "comment" for r in day_recs)))
        expected.append((term, "reddit_like", "users", d, len({r["user"] for r in day_recs})))

with open(HERE / "expected_series.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["term", "platform", "variant", "date", "value"])
    for term, plat, var, d, v in expected:
        w.writerow([term, plat, var, (D0 + timedelta(days=d)).isoformat(), v])

# ---- expected expansion over all twitter texts ----
THRESH = [40, 20, 10]
existing = {" ".join(t for t in tokenize(x) if t != "a") for x in TERMS}
counts = Counter()
for r in records:
    if r["platform"] != "twitter_like":
        continue
    toks = tokenize(r["text"])
    for n in (1, 2, 3):
        for i in range(len(toks) - n + 1):
            g = toks[i : i + n]
            if all(t in STOP for t in g):
                continue
            counts[" ".join(g)] += 1
cands = [(g, c) for g, c in counts.items() if c >= THRESH[len(g.split(" ")) - 1] and g not in existing]
cands.sort(key=lambda x: (-x[1], x[0]))
with open(HERE / "expected_candidates.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["term", "frequency"])
    w.writerows(cands)

with open(HERE / "lexicon.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["term", "source", "status", "stance", "target", "severity", "frame"])
    w.writerow(["ban islam", "bootstrap", "accepted", "unfavorable", "muslims_islam", "promotes_violence", "solutions"])
    w.writerow(["#stopislam", "bootstrap", "accepted", "unfavorable", "muslims_islam", "intimidates", "solutions"])
    w.writerow(["refugees welcome", "external", "accepted", "favorable", "immigrants", "not_applicable", "none"])
    w.writerow(["muslims out", "expanded", "accepted", "unfavorable", "muslims_islam", "offends_discriminates", "solutions"])

peak = max(v for t, p, var, d, v in expected if t == "ban islam" and p == "twitter_like" and var in ("messages", "users"))
print("records", len(records), "ban islam twitter peak", peak, "candidates", len(cands))
