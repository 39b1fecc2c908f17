"""Regenerate the bundled tiny fixture under src/semrec/data/fixture/.

60 items with hidden attributes, 30 users with a preferred style and color.
Grounded descriptions spell the attributes out; titles carry only a product
line name and category, so the grounded text table is the more informative one. The vision
table is a noisy random projection of the attributes into 768 dimensions, and
two items have no image vector.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from semrec.corpus import InteractionLog, write_interactions
from semrec.encoding import EmbeddingTable, StubEncoder, save_embedding_table

OUT = Path(__file__).resolve().parents[1] / "src" / "semrec" / "data" / "fixture"
SEED = 20240601

COLORS = ("black", "white", "navy", "red", "olive", "beige")
MATERIALS = ("leather", "cotton", "denim", "wool", "suede")
STYLES = ("classic", "casual", "sporty", "vintage")
CATEGORIES = ("sneaker", "boot", "jacket", "handbag", "dress")
OCCASIONS = ("the office", "weekend outings", "evening events", "travel")
LINES = ("Aurora", "Basis", "Cove", "Drift", "Ember", "Fable", "Grove", "Harbor")

N_ITEMS, N_USERS = 60, 30
N_TRAIN, N_VAL, N_TEST = 8, 3, 2
NO_IMAGE = {"i058", "i059"}


def main() -> None:
    rng = np.random.default_rng(SEED)
    items = [f"i{n:03d}" for n in range(N_ITEMS)]
    attrs = {}
    for n, item in enumerate(items):
        attrs[item] = {
            "category": CATEGORIES[n % len(CATEGORIES)],
            "style": STYLES[(n // len(CATEGORIES)) % len(STYLES)],
            "color": COLORS[rng.integers(len(COLORS))],
            "material": MATERIALS[rng.integers(len(MATERIALS))],
            "occasion": OCCASIONS[rng.integers(len(OCCASIONS))],
        }

    grounded = [
        f"A {a['color']} {a['material']} {a['category']} with a {a['style']} look, "
        f"well suited to {a['occasion']}." for a in (attrs[i] for i in items)
    ]
    titles = [f"{LINES[rng.integers(len(LINES))]} {attrs[i]['category']}" for i in items]
    enc = StubEncoder(384)
    text_g = EmbeddingTable(items, np.array(enc.embed(grounded), dtype=np.float32))
    text_t = EmbeddingTable(items, np.array(enc.embed(titles), dtype=np.float32))

    # vision: one random direction per attribute value, plus pixel-level noise
    basis = {}
    for key, values in (("category", CATEGORIES), ("style", STYLES), ("color", COLORS),
                        ("material", MATERIALS)):
        for v in values:
            basis[(key, v)] = rng.standard_normal(768)
    vis_ids = [i for i in items if i not in NO_IMAGE]
    vis = np.array([
        sum(basis[(k, attrs[i][k])] for k in ("category", "style", "color", "material"))
        + 1.5 * rng.standard_normal(768) for i in vis_ids
    ], dtype=np.float32)
    vision = EmbeddingTable(vis_ids, vis)

    records = []
    t0 = 1_700_000_000
    for u in range(N_USERS):
        user = f"u{u:03d}"
        # taste is visual: a style plus a favourite color, which titles never mention
        sty = STYLES[u % len(STYLES)]
        col = COLORS[rng.integers(len(COLORS))]
        liked = [i for i in items if attrs[i]["style"] == sty or attrs[i]["color"] == col]
        n = N_TRAIN + N_VAL + N_TEST
        picks = list(rng.choice(liked, size=n, replace=False))
        for k, item in enumerate(picks):
            split = "train" if k < N_TRAIN else "validation" if k < N_TRAIN + N_VAL else "test"
            records.append((user, item, t0 + 3600 * (u * n + k), split))
    log = InteractionLog.from_records(records)

    OUT.mkdir(parents=True, exist_ok=True)
    write_interactions(log, OUT / "interactions.tsv")
    save_embedding_table(text_g, OUT / "text_grounded.semv")
    save_embedding_table(text_t, OUT / "text_title.semv")
    save_embedding_table(vision, OUT / "vision.semv")
    with open(OUT / "descriptions.tsv", "w", encoding="utf-8") as fh:
        fh.write("item_id\tgrounded\ttitle\n")
        for item, g, t in zip(items, grounded, titles):
            fh.write(f"{item}\t{g}\t{t}\n")
    (OUT / "fixture.toml").write_text(
        "# bundled offline fixture: 30 users, 60 items, stub embeddings\n"
        "[data]\n"
        'interactions = "interactions.tsv"\n\n'
        "[embeddings]\n"
        'grounded = "text_grounded.semv"\n'
        'title = "text_title.semv"\n'
        'vision = "vision.semv"\n\n'
        "[experiment]\n"
        'variants = "standard"\n'
        "seed = 0\n"
        'baseline = "text-title"\n'
        'out = "runs/fixture"\n\n'
        "[train]\n"
        "contrastive_epochs = 15\n"
        "bpr_epochs = 20\n",
        encoding="utf-8")
    print(f"fixture written to {OUT}")


if __name__ == "__main__":
    main()
