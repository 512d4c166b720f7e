"""Summary report over refined relations: a delimited table plus figures."""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .refine import RefinedRelation

TOP_ENTITIES = 15


def _counts(relations: Sequence[RefinedRelation]):
    by_relation = Counter(r.relation_type.value for r in relations)
    by_entity_type = Counter()
    mentions = Counter()
    for r in relations:
        by_entity_type[r.subject.type.value] += 1
        by_entity_type[r.object.type.value] += 1
        mentions[r.subject.name] += 1
        mentions[r.object.name] += 1
    return by_relation, by_entity_type, mentions


def _bar_figure(counter: Counter, title: str, path: Path, horizontal: bool = False,
                top: int | None = None) -> None:
    items = counter.most_common(top)
    labels = [k for k, _ in items]
    values = [v for _, v in items]
    fig, ax = plt.subplots(figsize=(8, max(3, 0.4 * len(items) + 1.5)))
    if horizontal:
        ax.barh(labels[::-1], values[::-1], color="#4878a8")
        ax.set_xlabel("mentions")
    else:
        ax.bar(labels, values, color="#4878a8")
        ax.set_ylabel("relations")
        ax.tick_params(axis="x", rotation=45)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_summary_report(
    relations: Sequence[RefinedRelation],
    out_dir: str | Path,
    stats: dict | None = None,
) -> list[Path]:
    """Write summary.csv and the distribution figures into ``out_dir``.

    Returns the list of files written. The CSV carries (kind, label, count)
    rows for relation types, entity types, entity mentions, and any
    refinement drop counters handed in via ``stats``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_relation, by_entity_type, mentions = _counts(relations)

    written = []
    csv_path = out / "summary.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["kind", "label", "count"])
        for label, count in sorted(by_relation.items()):
            writer.writerow(["relation_type", label, count])
        for label, count in sorted(by_entity_type.items()):
            writer.writerow(["entity_type", label, count])
        for label, count in mentions.most_common(TOP_ENTITIES):
            writer.writerow(["entity_mentions", label, count])
        for key, value in (stats or {}).items():
            writer.writerow(["refinement", key, value])
    written.append(csv_path)

    if relations:
        figures = [
            (by_relation, "Relations by type", out / "relation_types.png", False, None),
            (by_entity_type, "Entity mentions by type", out / "entity_types.png", False, None),
            (mentions, f"Top {TOP_ENTITIES} entities", out / "top_entities.png", True, TOP_ENTITIES),
        ]
        for counter, title, path, horizontal, top in figures:
            _bar_figure(counter, title, path, horizontal=horizontal, top=top)
            written.append(path)
    return written
