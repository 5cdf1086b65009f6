"""SEC Form 4 ingestion and litigation-based labelling.

Parses the non-derivative table of ownership XML documents into flat
transaction records, and marks a transaction unlawful when its filer name
fuzzily matches a defendant named in an SEC complaint.
"""

from __future__ import annotations

import csv
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import DataError, EmptyDefendantList, MalformedXml, MissingRequiredField
from .fileio import csv_text, fmt_float

log = logging.getLogger(__name__)

TRANSACTION_HEADER = [
    "cik", "filer_name", "date", "acq_disp", "is_director", "is_officer",
    "is_ten_pct", "is_other", "shares", "price", "label",
]
DEFAULT_THRESHOLD = 85


class Label(str, Enum):
    LAWFUL = "lawful"
    UNLAWFUL = "unlawful"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class Transaction:
    cik: str
    filer_name: str
    transaction_date: date
    acquired_disposed: str  # "A" or "D"
    is_director: bool = False
    is_officer: bool = False
    is_ten_percent_owner: bool = False
    is_other: bool = False
    shares: float = 0.0
    price: float = 0.0
    label: Label = Label.UNLABELED

    def csv_row(self) -> list[str]:
        flag = lambda b: "1" if b else "0"  # noqa: E731
        return [
            self.cik, self.filer_name, self.transaction_date.isoformat(), self.acquired_disposed,
            flag(self.is_director), flag(self.is_officer), flag(self.is_ten_percent_owner),
            flag(self.is_other), fmt_float(self.shares), fmt_float(self.price), self.label.value,
        ]


@dataclass(frozen=True)
class DefendantList:
    names: tuple
    source_id: str = ""

    @classmethod
    def from_names(cls, names: Iterable[str], source_id: str = "") -> "DefendantList":
        seen, kept = set(), []
        for n in names:
            key = normalize_name(n)
            if key and key not in seen:
                seen.add(key)
                kept.append(n.strip())
        return cls(tuple(kept), source_id)

    @classmethod
    def read(cls, path) -> "DefendantList":
        path = Path(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        names = [ln.split("#", 1)[0].strip() for ln in lines]
        return cls.from_names([n for n in names if n], source_id=path.stem)


# ---------------------------------------------------------------- parsing

_XML_BLOCK = re.compile(rb"<XML>(.*?)</XML>", re.DOTALL | re.IGNORECASE)


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _find(elem, *path) -> Optional[ET.Element]:
    """Descend by local tag names, ignoring namespaces."""
    for name in path:
        if elem is None:
            return None
        elem = next((c for c in elem if _local(c.tag) == name), None)
    return elem


def _text(elem, *path) -> Optional[str]:
    node = _find(elem, *path)
    if node is None:
        return None
    # most Form 4 fields wrap their payload in <value>
    inner = _find(node, "value")
    raw = (inner if inner is not None else node).text
    raw = raw.strip() if raw else ""
    return raw or None


def _flag(raw: Optional[str]) -> bool:
    return raw is not None and raw.strip().lower() in ("1", "true", "y", "yes")


def _amount(raw: Optional[str], what: str) -> float:
    if raw is None:
        return 0.0
    try:
        v = float(raw.replace(",", ""))
    except ValueError:
        raise MissingRequiredField(f"{what} is not a number: {raw!r}") from None
    if v < 0:
        raise MissingRequiredField(f"{what} is negative: {raw!r}")
    return v


def _parse_date(raw: Optional[str]) -> date:
    if raw is None:
        raise MissingRequiredField("transaction without transactionDate")
    try:
        return date.fromisoformat(raw[:10])
    except ValueError:
        raise MissingRequiredField(f"unparseable transactionDate {raw!r}") from None


def parse_form4(document: bytes) -> list[Transaction]:
    """One Transaction per nonDerivativeTransaction element.

    Accepts a bare ownershipDocument or a full EDGAR submission with the
    XML wrapped in <XML>...</XML>. Raises MalformedXml for unparseable
    bytes and MissingRequiredField when the issuer CIK or a transaction
    date is absent.
    """
    if isinstance(document, str):
        document = document.encode("utf-8")
    block = _XML_BLOCK.search(document)
    payload = block.group(1).strip() if block else document.strip()
    try:
        root = ET.fromstring(payload)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from None

    cik = _text(root, "issuer", "issuerCik")
    if cik is None:
        raise MissingRequiredField("document has no issuerCik")
    if not cik.isdigit():
        raise MissingRequiredField(f"issuerCik is not numeric: {cik!r}")

    owner = _find(root, "reportingOwner")
    name = _text(owner, "reportingOwnerId", "rptOwnerName") or ""
    rel = _find(owner, "reportingOwnerRelationship")
    flags = {
        "is_director": _flag(_text(rel, "isDirector")),
        "is_officer": _flag(_text(rel, "isOfficer")),
        "is_ten_percent_owner": _flag(_text(rel, "isTenPercentOwner")),
        "is_other": _flag(_text(rel, "isOther")),
    }

    table = _find(root, "nonDerivativeTable")
    txns = []
    for node in [] if table is None else [c for c in table if _local(c.tag) == "nonDerivativeTransaction"]:
        code = _text(node, "transactionAmounts", "transactionAcquiredDisposedCode")
        if code is None:
            code = _text(node, "transactionAcquiredDisposedCode")
        if code is None or code.upper() not in ("A", "D"):
            raise MissingRequiredField(f"transactionAcquiredDisposedCode must be A or D, got {code!r}")
        shares = _text(node, "transactionAmounts", "transactionShares")
        price = _text(node, "transactionAmounts", "transactionPricePerShare")
        txns.append(
            Transaction(
                cik=cik,
                filer_name=name,
                transaction_date=_parse_date(_text(node, "transactionDate")),
                acquired_disposed=code.upper(),
                shares=_amount(shares, "transactionShares"),
                price=_amount(price, "transactionPricePerShare"),
                **flags,
            )
        )
    return txns


@dataclass(frozen=True)
class SkippedDocument:
    path: str
    error: str
    message: str


def ingest_files(paths: Sequence) -> tuple[list[Transaction], list[SkippedDocument]]:
    """Parse many filings; bad ones are logged and skipped, not fatal."""
    txns: list[Transaction] = []
    skipped: list[SkippedDocument] = []
    for p in paths:
        try:
            txns.extend(parse_form4(Path(p).read_bytes()))
        except (MalformedXml, MissingRequiredField) as exc:
            log.warning("skipping %s: %s: %s", p, type(exc).__name__, exc)
            skipped.append(SkippedDocument(str(p), type(exc).__name__, str(exc)))
    return txns, skipped


def transactions_csv(txns: Iterable[Transaction]) -> str:
    return csv_text(TRANSACTION_HEADER, (t.csv_row() for t in txns))


def read_transactions_csv(path) -> list[Transaction]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRANSACTION_HEADER:
            raise DataError(f"{path}: header must be {','.join(TRANSACTION_HEADER)}")
        for i, row in enumerate(reader, start=2):
            try:
                out.append(
                    Transaction(
                        cik=row["cik"],
                        filer_name=row["filer_name"],
                        transaction_date=date.fromisoformat(row["date"]),
                        acquired_disposed=row["acq_disp"],
                        is_director=row["is_director"] == "1",
                        is_officer=row["is_officer"] == "1",
                        is_ten_percent_owner=row["is_ten_pct"] == "1",
                        is_other=row["is_other"] == "1",
                        shares=float(row["shares"]),
                        price=float(row["price"]),
                        label=Label(row["label"]),
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path}:{i}: {exc}") from None
    return out


# ---------------------------------------------------------------- matching

_WS = re.compile(r"\s+")


def normalize_name(name: str) -> str:
    return _WS.sub(" ", name.casefold()).strip()


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute edit distance (two-row DP)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_similarity(a: str, b: str) -> int:
    """round(100 * (1 - d / max_len)) on case-folded, whitespace-collapsed names."""
    a, b = normalize_name(a), normalize_name(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 100
    same = longest - levenshtein(a, b)
    # exact half-up rounding of 100 * same / longest
    return (200 * same + longest) // (2 * longest)


def label_transactions(
    txns: Sequence[Transaction], defendants: DefendantList, threshold: int = DEFAULT_THRESHOLD
) -> list[Transaction]:
    """Unlawful iff the filer scores >= threshold against any defendant."""
    if not 0 <= threshold <= 100:
        raise ValueError(f"threshold must be in [0, 100], got {threshold}")
    if not defendants.names:
        raise EmptyDefendantList("no defendant names supplied")
    cache: dict[str, Label] = {}
    out = []
    for t in txns:
        lab = cache.get(t.filer_name)
        if lab is None:
            hit = any(levenshtein_similarity(t.filer_name, d) >= threshold for d in defendants.names)
            lab = cache[t.filer_name] = Label.UNLAWFUL if hit else Label.LAWFUL
        out.append(replace(t, label=lab))
    return out
