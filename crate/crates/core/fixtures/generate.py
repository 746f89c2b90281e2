"""Regenerates the bundled fixture corpus. Output is deterministic."""

import json
import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent
rng = random.Random(20240611)

EXPLOITABLE = [
    ("famtrack", "FamTrack Locator", "See where your family is on a live map.", "Navigation", "no_knowledge"),
    ("textwatch", "TextWatch", "Back up and read messages across your devices.", "Utilities", "no_knowledge"),
    ("hiddencam", "HiddenCam Recorder", "Record video with the screen off.", "Photo & Video", "no_knowledge"),
    ("callsaver", "CallSaver", "Record phone calls automatically.", "Business", "discomfort"),
    ("gpspro", "GPS Tracker Pro", "Stealth mode GPS tracker for your devices.", "Navigation", "positive_purpose"),
    ("kidguard", "KidGuard", "Parental controls and screen time.", "Lifestyle", "positive_purpose"),
    ("profileviewer", "Who Viewed Me", "Find out who looks at your social profile.", "Social Networking", "public_uncomfortable"),
    ("pettag", "PetTag Finder", "Attach a tag and find your pet anywhere.", "Lifestyle", "pets_objects"),
]
BENIGN = [
    ("calcplus", "Calc Plus", "A friendly calculator.", "Utilities"),
    ("weathernow", "Weather Now", "Forecasts for your city.", "Weather"),
    ("recipebox", "Recipe Box", "Save and share recipes.", "Food & Drink"),
    ("torchlight", "Torchlight", "A bright flashlight.", "Utilities"),
    ("tilematch", "Tile Match", "Relaxing puzzle game.", "Games"),
]
SNOWBALL = [
    ("mirrorphone", "Mirror Phone", "Mirror a phone screen to another device.", "Utilities"),
    ("locshare", "LocShare", "Share your location with friends.", "Social Networking"),
]
EMPTY = ("emptyapp", "Empty App", "", "Utilities")

ABUSER_ADJ = ["perfect", "powerful", "easy", "smart", "awesome", "amazing", "excellent", "confident", "great", "brilliant"]
VICTIM_ADJ = ["scared", "afraid", "helpless", "creepy", "terrified", "vulnerable", "anxious", "horrible", "sick", "upset"]
THIRD_ADJ = ["worried", "concerned", "dangerous", "sad", "creepy", "disturbing"]

TARGETS = ["wife", "husband", "girlfriend", "boyfriend", "ex", "daughter", "son", "partner"]

ABUSER_T = [
    "{Adj} app to spy on my {t} without {p} knowing.",
    "I stalk my {t} with this and it is {adj}.",
    "{Adj} for spying on my {t}, {p} has no clue.",
    "Works in stealth mode, {adj} way to see where my {t} goes.",
]
VICTIM_T = [
    "My {t} used this to spy on me and I feel {adj}.",
    "I am {adj} because my {t} stalks me with this app.",
    "Someone was spying on my phone, so {adj} and {adj2}.",
    "My {t} installed it in stealth mode, I felt {adj}.",
]
THIRD_T = [
    "My friend's {t} used it to stalk her, so {adj}.",
    "{Adj} that people can spy on others with this.",
    "Heard of someone stalking a coworker with it, very {adj}.",
]
NEUTRAL_EXPLOIT = [
    "Location updates are slow sometimes.",
    "Drains the battery a lot.",
    "Works as advertised, setup took a while.",
    "The map view is clean and updates often.",
    "Needs a dark mode.",
    "Subscription is too expensive for what it does.",
]
BENIGN_T = [
    "Great {thing}, simple and fast.",
    "Love this {thing}, use it every day.",
    "Too many ads in this {thing}.",
    "The {thing} crashed after the update.",
    "Clean design and a useful {thing}.",
    "Best {thing} I have tried so far.",
    "Works fine but could use more options.",
]
THING = {
    "calcplus": "calculator", "weathernow": "forecast app", "recipebox": "recipe app",
    "torchlight": "flashlight", "tilematch": "puzzle game", "mirrorphone": "mirroring tool",
    "locshare": "sharing app",
}


def date():
    return f"20{rng.randint(19, 23)}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}"


def render(template, adjs):
    a, b = rng.sample(adjs, 2)
    t = rng.choice(TARGETS)
    p = "she" if t in ("wife", "girlfriend", "daughter") else "he"
    if t in ("ex", "partner"):
        p = "they"
    return template.format(adj=a, Adj=a.capitalize(), adj2=b, t=t, p=p)


apps = []
for app_id, name, desc, cat, _ in EXPLOITABLE:
    apps.append(dict(app_id=app_id, name=name, description=desc, category=cat, source_dataset="seed"))
for app_id, name, desc, cat in BENIGN:
    apps.append(dict(app_id=app_id, name=name, description=desc, category=cat, source_dataset="seed"))
for app_id, name, desc, cat in SNOWBALL:
    apps.append(dict(app_id=app_id, name=name, description=desc, category=cat, source_dataset="snowball"))
app_id, name, desc, cat = EMPTY
apps.append(dict(app_id=app_id, name=name, description=desc, category=cat, source_dataset="seed"))

reviews = []
counter = 0


def add(app_id, title, body, rating, reviewer_type="unknown", story_type="unknown", when=None):
    global counter
    counter += 1
    reviews.append(dict(
        review_id=f"r{counter:04d}", app_id=app_id, title=title, body=body, rating=rating,
        date=when or date(), reviewer_type=reviewer_type, story_type=story_type,
    ))


for i, (app_id, *_rest) in enumerate(EXPLOITABLE):
    n_alarming = 3 + (len(EXPLOITABLE) - i) * 2
    for _ in range(n_alarming):
        kind = rng.choices(["abuser", "victim", "third_person"], weights=[4, 4, 2])[0]
        if kind == "abuser":
            body = render(rng.choice(ABUSER_T), ABUSER_ADJ)
            add(app_id, "", body, rng.randint(4, 5), "abuser", "exploitable_act")
        elif kind == "victim":
            body = render(rng.choice(VICTIM_T), VICTIM_ADJ)
            add(app_id, "", body, rng.randint(1, 2), "victim", "exploitable_act")
        else:
            body = render(rng.choice(THIRD_T), THIRD_ADJ)
            add(app_id, "", body, rng.randint(1, 3), "third_person", "potential")
    for _ in range(6):
        add(app_id, "", rng.choice(NEUTRAL_EXPLOIT), rng.randint(2, 5), "unknown", "none")

for app_id, *_rest in BENIGN + SNOWBALL:
    for _ in range(8):
        add(app_id, "", rng.choice(BENIGN_T).format(thing=THING[app_id]), rng.randint(1, 5), "unknown", "none")
    if app_id == "locshare":
        add(app_id, "Creepy", "My ex kept stalking me through the shared map, I felt scared.", 1, "victim", "exploitable_act")

# Reposts differing only in case and spacing.
for src in rng.sample(reviews, 6):
    add(src["app_id"], src["title"], "  " + src["body"].upper().replace(" ", "   ") + " ", src["rating"],
        src["reviewer_type"], src["story_type"], when=src["date"])

with open(OUT / "apps.jsonl", "w") as f:
    for a in apps:
        f.write(json.dumps(a) + "\n")
with open(OUT / "reviews.jsonl", "w") as f:
    for r in reviews:
        f.write(json.dumps(r) + "\n")


def true_scores(r):
    if r["story_type"] == "exploitable_act":
        return 4, 4 if r["reviewer_type"] == "victim" else 3
    if r["story_type"] == "potential":
        return 3, 3
    return 1, 1


def jitter(v):
    return max(1, min(4, v + rng.choice([-1, 0, 0, 0, 1])))


def normalized(body):
    return " ".join(body.lower().split())


survivor = {}
for r in reviews:
    key = normalized(r["body"])
    if key not in survivor or (r["date"], r["review_id"]) < (survivor[key]["date"], survivor[key]["review_id"]):
        survivor[key] = r
kept = {r["review_id"] for r in survivor.values()}
annotated = [r for r in reviews if r["review_id"] in kept and rng.random() < 0.6]
records = []
ts = 0
for r in annotated:
    c, s = true_scores(r)
    ratings = []
    for who in ("ann_a", "ann_b"):
        ts += 1
        rc, rs = jitter(c), jitter(s)
        ratings.append((rc, rs))
        records.append(dict(review_id=r["review_id"], annotator_id=who, convincingness=rc, severity=rs,
                            timestamp=f"2024-03-01T09:{ts // 60 % 60:02d}:{ts % 60:02d}Z", kind="rating"))
    a1, a2 = (math.sqrt(x * y) for x, y in ratings)
    if (a1 >= 3) != (a2 >= 3):
        ts += 1
        records.append(dict(review_id=r["review_id"], annotator_id="panel", convincingness=c, severity=s,
                            timestamp=f"2024-03-02T10:{ts // 60 % 60:02d}:{ts % 60:02d}Z", kind="resolution"))

with open(OUT / "annotations.jsonl", "w") as f:
    for rec in records:
        f.write(json.dumps(rec) + "\n")

with open(OUT / "ground_truth.jsonl", "w") as f:
    for app_id, _, _, _, cat in EXPLOITABLE:
        ev = [r["review_id"] for r in reviews if r["app_id"] == app_id and r["story_type"] == "exploitable_act"][:2]
        f.write(json.dumps(dict(app_id=app_id, label="exploitable", rationale_category=cat, evidence_review_ids=ev)) + "\n")
    for app_id, *_ in BENIGN:
        f.write(json.dumps(dict(app_id=app_id, label="not_exploitable", rationale_category="unrelated", evidence_review_ids=[])) + "\n")
    f.write(json.dumps(dict(app_id="locshare", label="exploitable", rationale_category="discomfort",
                            evidence_review_ids=[r["review_id"] for r in reviews if r["app_id"] == "locshare" and r["story_type"] == "exploitable_act"])) + "\n")
    f.write(json.dumps(dict(app_id="mirrorphone", label="not_exploitable", rationale_category="unrelated", evidence_review_ids=[])) + "\n")

with open(OUT / "similar.jsonl", "w") as f:
    f.write(json.dumps(dict(app_id="famtrack", similar=["locshare", "gpspro", "weathernow"])) + "\n")
    f.write(json.dumps(dict(app_id="textwatch", similar=["mirrorphone", "callsaver"])) + "\n")
    f.write(json.dumps(dict(app_id="hiddencam", similar=["torchlight"])) + "\n")

print(len(apps), "apps,", len(reviews), "reviews,", len(records), "annotation records")
