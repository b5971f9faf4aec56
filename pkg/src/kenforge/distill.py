"""Majority-vote distillation of multi-annotator irony corpora.

Input is an EPIC-shaped CSV with one row per (sentence, annotator). Rows
are grouped per (variant, sentence) and each group gets a single gold label
by strict majority; an exact tie becomes ``irony``.
"""

import csv
import json
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .exceptions import AnnotationError

__all__ = [
    "Label",
    "AnnotationRecord",
    "VariantDataset",
    "DEFAULT_COLUMNS",
    "parse_label",
    "ingest_csv",
    "majority_vote",
    "distill",
    "write_datasets",
]


class Label(str, Enum):
    IRONY = "irony"
    NOT_IRONY = "not_irony"


_LABELS = {
    "iro": Label.IRONY,
    "irony": Label.IRONY,
    "not": Label.NOT_IRONY,
    "not_irony": Label.NOT_IRONY,
}

# canonical field -> CSV header
DEFAULT_COLUMNS = {
    "sentence_id": "id_sentence",
    "text": "text",
    "variant": "variant",
    "annotator_id": "annotator",
    "label": "label",
}


@dataclass(frozen=True)
class AnnotationRecord:
    sentence_id: str
    text: str
    variant: str
    annotator_id: str
    label: Label


@dataclass
class VariantDataset:
    variant: str
    items: List[Tuple[str, str, Label]] = field(default_factory=list)
    n_ties_resolved: int = 0
    n_shared: int = 0

    @property
    def n_items(self):
        return len(self.items)

    @property
    def n_irony(self):
        return sum(1 for _, _, gold in self.items if gold is Label.IRONY)

    @property
    def n_not(self):
        return self.n_items - self.n_irony

    def stats(self):
        return {
            "variant": self.variant,
            "n_items": self.n_items,
            "n_irony": self.n_irony,
            "n_not": self.n_not,
            "n_ties_resolved": self.n_ties_resolved,
            "n_shared_with_other_variants": self.n_shared,
        }


def parse_label(raw: str) -> Label:
    try:
        return _LABELS[raw.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown label {raw!r}") from None


def ingest_csv(path, columns: Optional[Mapping[str, str]] = None) -> List[AnnotationRecord]:
    """Parse an annotation CSV.

    ``columns`` overrides entries of :data:`DEFAULT_COLUMNS`, mapping a
    canonical field name to the header used in the file. Row numbers in
    errors count the header as row 1.
    """
    colmap = dict(DEFAULT_COLUMNS)
    if columns:
        unknown = set(columns) - set(colmap)
        if unknown:
            raise AnnotationError(f"unknown canonical column(s): {sorted(unknown)}")
        colmap.update(columns)
    records = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise AnnotationError(f"{path}: empty file") from None
        index = {h.strip(): i for i, h in enumerate(header)}
        missing = [h for h in colmap.values() if h not in index]
        if missing:
            raise AnnotationError(f"missing column(s) {missing} in {path}")
        cols = {key: index[h] for key, h in colmap.items()}
        width = max(cols.values()) + 1
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < width:
                raise AnnotationError(f"expected at least {width} fields, got {len(row)}", row=rowno)
            try:
                label = parse_label(row[cols["label"]])
            except ValueError as exc:
                raise AnnotationError(str(exc), row=rowno) from None
            rec = AnnotationRecord(
                sentence_id=row[cols["sentence_id"]].strip(),
                text=row[cols["text"]],
                variant=row[cols["variant"]].strip(),
                annotator_id=row[cols["annotator_id"]].strip(),
                label=label,
            )
            if not rec.sentence_id or not rec.text or not rec.annotator_id:
                raise AnnotationError("empty sentence id, text or annotator", row=rowno)
            key = (rec.sentence_id, rec.annotator_id)
            if key in seen:
                raise AnnotationError(
                    f"duplicate annotation of sentence {rec.sentence_id!r} by {rec.annotator_id!r}",
                    row=rowno)
            seen.add(key)
            records.append(rec)
    return records


def majority_vote(votes: Iterable[Label]) -> Tuple[Label, bool]:
    """Return ``(gold, was_tie)``; ties resolve to irony."""
    counts = Counter(Label(v) for v in votes)
    if not counts:
        raise ValueError("majority vote over an empty set of votes")
    irony, not_irony = counts[Label.IRONY], counts[Label.NOT_IRONY]
    if irony == not_irony:
        return Label.IRONY, True
    return (Label.IRONY if irony > not_irony else Label.NOT_IRONY), False


def distill(records: Iterable[AnnotationRecord]) -> Dict[str, VariantDataset]:
    """Group annotations per (variant, sentence) and majority-vote each group.

    Returns datasets keyed and ordered by variant, items sorted by sentence
    id. A sentence id appearing under several variants stays separate in
    each and is counted in ``n_shared``.
    """
    groups = defaultdict(list)
    texts = {}
    for rec in records:
        key = (rec.variant, rec.sentence_id)
        if texts.setdefault(key, rec.text) != rec.text:
            raise ValueError(
                f"conflicting text for sentence {rec.sentence_id!r} in variant {rec.variant!r}")
        groups[key].append(rec.label)

    variants_of = defaultdict(set)
    for variant, sid in groups:
        variants_of[sid].add(variant)

    out: Dict[str, VariantDataset] = {}
    for variant, sid in sorted(groups):
        ds = out.setdefault(variant, VariantDataset(variant))
        gold, tie = majority_vote(groups[variant, sid])
        ds.items.append((sid, texts[variant, sid], gold))
        ds.n_ties_resolved += tie
        ds.n_shared += len(variants_of[sid]) > 1
    return out


def write_datasets(datasets: Mapping[str, VariantDataset], out_dir) -> List[str]:
    """Write ``<variant>.csv`` (id, text, label) per dataset plus ``stats.json``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for variant, ds in datasets.items():
        if not variant or os.sep in variant or variant in (".", ".."):
            raise ValueError(f"variant {variant!r} cannot be used as a file name")
        path =os.path.join(out_dir, f"{variant}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "text", "label"])
            w.writerows((sid, text, gold.value) for sid, text, gold in ds.items)
        paths.append(path)
    stats_path = os.path.join(out_dir, "stats.json")
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump([ds.stats() for ds in datasets.values()], fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(stats_path)
    return paths
