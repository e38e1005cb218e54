"""Seeded generator for the bundled synthetic catalog.

Engagement is planted: descriptions that cover more aspects, and use more
appealing language, draw a higher click-through rate. Low-engagement items
get thin or empty descriptions, which is what enrichment targets.
"""

from __future__ import annotations

import numpy as np

from .corpus import Item

CATEGORIES = {
    "apparel": dict(
        brands=["Terra & Sky", "Time and Tru", "Free Assembly", "No Boundaries"],
        nouns=["jeggings", "denim jacket", "knit sweater", "maxi dress", "cargo pants", "hoodie"],
        materials=["cotton", "polyester", "rayon", "spandex", "nylon", "wool"],
        care=["Machine washable", "Hand wash cold", "Tumble dry low"],
        dims=["Inseam: {a}” inseam", "Size: Model is 5’{b}” and wears a size {s}",
              "Rise: High rise with a {a}” inseam", "Length: {c} inches from shoulder"],
        unique=["The inner elasticized waist provides a comfortable fit",
                "The brushed fleece lining provides lasting warmth",
                "Stretch denim fabric provides freedom of movement",
                "Reinforced seams provide everyday durability"],
        guarantee=["Only at ShopMart", "Backed by the {brand} fit guarantee",
                   "Exclusive to ShopMart"],
    ),
    "kitchen": dict(
        brands=["Mainstays", "Tasty", "Ozark Trail Kitchen", "Gibson Home"],
        nouns=["nonstick skillet", "chef knife", "stock pot", "mixing bowl set", "cutting board",
               "dutch oven"],
        materials=["stainless steel", "cast iron", "ceramic", "bamboo", "silicone", "aluminum"],
        care=["Dishwasher-safe", "Hand wash recommended", "Oven safe to 450 degrees"],
        dims=["Dimensions: {a} x {c} inches", "Weight: {w} lbs",
              "Capacity: {b} quarts in a {a} inch body", "Height: {c} cm"],
        unique=["The patented rivetless interior provides easy cleanup",
                "A unique tri-ply base features even heating",
                "The signature handle stays cool on the stovetop",
                "Innovative pour spouts provide drip-free serving"],
        guarantee=["Backed by a {n}-year {brand} warranty", "Lifetime guarantee against defects",
                   "Only at ShopMart"],
    ),
    "electronics": dict(
        brands=["onn", "Vizio", "JLab", "Anker"],
        nouns=["wireless earbuds", "bluetooth speaker", "smart tv", "portable charger",
               "soundbar", "tablet"],
        materials=["aluminum", "polycarbonate", "silicone", "tempered glass", "nylon", "plastic"],
        care=["Battery: {n}000 mAh lithium", "Output: {b}0 watts", "Charging: USB-C fast charge"],
        dims=["Dimensions: {a} x {c} x {b} inches", "Weight: {w} oz", "Screen size: {a} inches",
              "Height: {c} cm"],
        unique=["Active noise cancelling provides immersive sound",
                "The patented bass port features deep low end",
                "A unique swivel stand provides flexible viewing",
                "Innovative dual drivers provide crisp vocals"],
        guarantee=["Backed by a {n}-year {brand} warranty", "Money-back guarantee for 90 days",
                   "Only at ShopMart"],
    ),
    "outdoor": dict(
        brands=["Ozark Trail", "Coleman", "Hyper Tough", "Bell"],
        nouns=["camping tent", "folding chair", "cooler", "hiking backpack", "sleeping bag",
               "lantern"],
        materials=["ripstop nylon", "polyester", "aluminum", "steel", "canvas", "plastic"],
        care=["Water resistant coating", "Wipe clean with a damp cloth", "UV protected fabric"],
        dims=["Dimensions: {a} x {c} feet", "Weight: {w} lbs", "Packed size: {b} x {a} inches",
              "Height: {c} inches at center"],
        unique=["The instant setup frame provides pitching in minutes",
                "A unique ventilation system features cross airflow",
                "Patented hub design provides stable support",
                "Innovative cup holders provide handy storage"],
        guarantee=["Backed by a {n}-year {brand} warranty", "Satisfaction guarantee",
                   "Exclusive to ShopMart"],
    ),
    "home": dict(
        brands=["Better Homes & Gardens", "Mainstays", "Gap Home", "Thyme & Table"],
        nouns=["throw blanket", "table lamp", "area rug", "accent pillow", "wall mirror",
               "storage basket"],
        materials=["cotton", "wool", "jute", "polyester", "ceramic", "bamboo"],
        care=["Spot clean only", "Machine washable cover", "Includes: one bulb"],
        dims=["Dimensions: {a} x {c} inches", "Weight: {w} lbs", "Diameter: {b} inches",
              "Height: {c} cm"],
        unique=["The hand-knotted weave provides rich texture",
                "A unique tufted pattern features modern charm",
                "Patented non-slip backing provides safe footing",
                "The signature fringe trim provides a finishing touch"],
        guarantee=["Backed by a {n}-year {brand} warranty", "Only at ShopMart",
                   "Satisfaction guarantee"],
    ),
}

APPEAL_OPENERS = ["Discover", "Enjoy", "Get", "Bring home", "Meet"]
APPEAL_ADJ = ["stylish", "cozy", "elegant", "modern", "timeless", "chic", "comfortable",
              "versatile", "sleek", "classic", "luxurious", "fresh"]
APPEAL_NOUNS = ["style", "comfort", "charm", "look", "design"]
TITLE_ADJ = ["Classic", "Essential", "Deluxe", "Everyday", "Premium", "Compact"]
THIN_LINES = ["Great item.", "Nice product for home.", "See photos.", "New arrival.",
              "Good value."]


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _fill(rng, template, brand):
    return template.format(
        a=int(rng.integers(20, 40)), b=int(rng.integers(2, 12)), c=int(rng.integers(10, 90)),
        w=round(float(rng.uniform(0.5, 25.0)), 1), n=int(rng.integers(1, 6)),
        s=_pick(rng, ["S", "M", "L", "1X", "2X"]), brand=brand)


def _aspect_sentence(rng, spec, kind, brand, noun):
    if kind == 0:
        a1, a2 = rng.choice(len(APPEAL_ADJ), size=2, replace=False)
        return (f"{_pick(rng, APPEAL_OPENERS)} {APPEAL_ADJ[a1]} {_pick(rng, APPEAL_NOUNS)} "
                f"with this {APPEAL_ADJ[a2]} {noun} from {brand}.")
    if kind == 1:
        m1, m2 = rng.choice(len(spec["materials"]), size=2, replace=False)
        pct = int(rng.integers(55, 96))
        return (f"Material: {pct}% {spec['materials'][m1]}/{100 - pct}% "
                f"{spec['materials'][m2]}. {_fill(rng, _pick(rng, spec['care']), brand)}.")
    if kind == 2:
        return _fill(rng, _pick(rng, spec["dims"]), brand) + "."
    if kind == 3:
        return _pick(rng, spec["unique"]) + "."
    return _fill(rng, _pick(rng, spec["guarantee"]), brand) + "."


def generate_items(n_items: int = 240, seed: int = 20231016) -> list[Item]:
    rng = np.random.default_rng(seed)
    cats = sorted(CATEGORIES)
    items = []
    for i in range(n_items):
        cat = cats[i % len(cats)]
        spec = CATEGORIES[cat]
        brand = _pick(rng, spec["brands"])
        noun = _pick(rng, spec["nouns"])
        title = f"{brand} {_pick(rng, TITLE_ADJ)} {noun.title()}"
        quality = float(rng.uniform())
        n_aspects = int(np.clip(np.round(quality * 5 + rng.normal(0, 0.6)), 0, 5))
        kinds = sorted(rng.choice(5, size=n_aspects, replace=False).tolist())
        sentences = [_aspect_sentence(rng, spec, k, brand, noun) for k in kinds]
        if n_aspects <= 1 and rng.uniform() < 0.5:
            sentences.append(_pick(rng, THIN_LINES))
        if n_aspects == 0 and rng.uniform() < 0.4:
            sentences = []
        description = " ".join(sentences)
        logit = -3.4 + 0.45 * n_aspects + (0.3 if 0 in kinds else 0.0) + rng.normal(0, 0.25)
        ctr = 1.0 / (1.0 + np.exp(-logit))
        impressions = int(rng.integers(800, 6000))
        clicks = int(rng.binomial(impressions, ctr))
        items.append(Item(f"sku-{i:04d}", title, description, clicks, impressions, cat))
    return items


# --- planted appeal/factual trade-off -------------------------------------
#
# Every catalog line comes in three factual-aspect phrasings that share the
# same length. The plain phrasing is the most frequent (high likelihood), the
# glossy one carries the most appeal words (high predicted CTR), and the
# blended one covers the most distinct reference terms (best BM25).

TRADEOFF_LINES = [
    ("Aurora Knit Throw", "throw", ["acrylic", "fleece", "fringe", "woven", "plush", "ribbed"]),
    ("Harbor Steel Kettle", "kettle", ["steel", "spout", "whistle", "handle", "base", "lid"]),
    ("Summit Trail Pack", "pack", ["nylon", "zipper", "strap", "frame", "pocket", "buckle"]),
    ("Lumen Desk Lamp", "lamp", ["brass", "shade", "dimmer", "arm", "bulb", "switch"]),
]
_GLOSS = ["gorgeous", "stunning", "luxurious", "elegant", "chic", "dreamy"]


def tradeoff_variants(noun, terms):
    # the noun leads every variant so the line is fixed before the phrasing branches
    plain = f"Material: {noun} {terms[0]} {noun} {terms[0]} {noun} {terms[0]}."
    # glossy repeats its appeal words: many lexicon hits but few distinct terms
    glossy = f"Material: {noun} {_GLOSS[0]} {_GLOSS[1]} {_GLOSS[2]} {_GLOSS[0]} {_GLOSS[1]}."
    blend = f"Material: {noun} {terms[1]} {terms[2]} {terms[3]} {_GLOSS[3]} {_GLOSS[4]}."
    return {"plain": plain, "glossy": glossy, "blend": blend}


def generate_tradeoff_items(copies=(4, 3, 1), n_filler: int = 24, seed: int = 7) -> list[Item]:
    """Planted fixture for the ablation: an interior lambda should win on BM25.

    `copies` gives how many training items carry the plain, blend and
    glossy phrasing of each line. Filler items with empty descriptions and
    low CTR populate the low-engagement pool that gets enhanced.
    """
    rng = np.random.default_rng(seed)
    items = []
    ctr_by_kind = {"plain": 0.20, "blend": 0.80, "glossy": 0.90}
    for li, (title, noun, terms) in enumerate(TRADEOFF_LINES):
        variants = tradeoff_variants(noun, terms)
        for kind, n_copy in zip(("plain", "blend", "glossy"), copies):
            for c in range(n_copy):
                impressions = 2000
                jitter = float(rng.uniform(-0.02, 0.02))
                clicks = int(round(impressions * (ctr_by_kind[kind] + jitter)))
                items.append(Item(f"line{li}-{kind}-{c}", title, variants[kind], clicks,
                                  impressions, f"line{li}"))
    for f in range(n_filler):
        li = f % len(TRADEOFF_LINES)
        title = TRADEOFF_LINES[li][0]
        impressions = 2000
        clicks = int(round(impressions * float(rng.uniform(0.01, 0.05))))
        items.append(Item(f"filler-{f:03d}", title, "", clicks, impressions, f"line{li}"))
    return items
