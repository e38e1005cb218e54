"""Item records, empirical CTR and the engagement-based train/test split."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction

from .errors import ClicksExceedImpressions, DataError, DuplicateId, MalformedRecord, TooFewItems

REQUIRED_FIELDS = ("item_id", "title", "description", "clicks", "impressions")


@dataclass(frozen=True)
class Item:
    item_id: str
    title: str
    description: str
    clicks: int
    impressions: int
    category: str = ""

    def __post_init__(self):
        if not self.item_id:
            raise ValueError("item_id must be non-empty")
        if self.clicks < 0 or self.impressions <= 0:
            raise ValueError("clicks must be >= 0 and impressions > 0")
        if self.clicks > self.impressions:
            raise ClicksExceedImpressions(self.item_id)

    @property
    def ctr(self) -> float:
        return empirical_ctr(self)

    @property
    def lackluster(self) -> bool:
        """Empty descriptions are kept and flagged; they are enrichment targets."""
        return not self.description.strip()

    def to_record(self) -> dict:
        return asdict(self)


def empirical_ctr(item: Item) -> float:
    return item.clicks / item.impressions


def _parse_line(line: str, line_no: int) -> Item:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(line_no, str(exc)) from None
    if not isinstance(rec, dict):
        raise MalformedRecord(line_no, "record is not an object")
    for key in REQUIRED_FIELDS:
        if key not in rec:
            raise MalformedRecord(line_no, f"missing field {key}")
    for key in ("item_id", "title", "description"):
        if not isinstance(rec[key], str):
            raise MalformedRecord(line_no, f"{key} must be a string")
    for key in ("clicks", "impressions"):
        if not isinstance(rec[key], int) or isinstance(rec[key], bool):
            raise MalformedRecord(line_no, f"{key} must be an integer")
    category = rec.get("category", "")
    if category is None:
        category = ""
    if not isinstance(category, str):
        raise MalformedRecord(line_no, "category must be a string")
    if rec["clicks"] > rec["impressions"]:
        raise ClicksExceedImpressions(rec["item_id"])
    try:
        return Item(rec["item_id"], rec["title"], rec["description"], rec["clicks"],
                    rec["impressions"], category)
    except ValueError as exc:
        raise MalformedRecord(line_no, str(exc)) from None


def load_dataset(path) -> list[Item]:
    """Read one JSON object per line. Blank lines are skipped."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open dataset {path}: {exc.strerror}") from None
    items, seen = [], set()
    with fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            item = _parse_line(line, line_no)
            if item.item_id in seen:
                raise DuplicateId(item.item_id)
            seen.add(item.item_id)
            items.append(item)
    return items


def write_dataset(items, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(json.dumps(item.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def dataset_hash(items) -> str:
    h = hashlib.sha256()
    for item in items:
        h.update(json.dumps(item.to_record(), ensure_ascii=False, sort_keys=True).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@dataclass(frozen=True)
class SplitDataset:
    train: tuple
    test: tuple
    median_ctr: float


def split_by_engagement(items) -> SplitDataset:
    """Top half by CTR (ceil on odd counts) trains, the rest is the test pool.

    Ranking uses exact rational CTR, descending, ties by item_id ascending,
    so the result does not depend on input order.
    """
    items = list(items)
    if len(items) < 2:
        raise TooFewItems(f"need at least 2 items to split, got {len(items)}")
    ranked = sorted(items, key=lambda it: (-Fraction(it.clicks, it.impressions), it.item_id))
    n_train = math.ceil(len(ranked) / 2)
    train, test = ranked[:n_train], ranked[n_train:]
    ctrs = sorted(Fraction(it.clicks, it.impressions) for it in items)
    mid = len(ctrs) // 2
    median = ctrs[mid] if len(ctrs) % 2 else (ctrs[mid - 1] + ctrs[mid]) / 2
    return SplitDataset(tuple(train), tuple(test), float(median))
