"""Leak auditing: scan every serialized pipeline artifact for protected values.

Walks dataclass trees (transactions, blocks, log entries) and flags any field
whose value equals a protected true sum, either numerically or as an exact
string. Noise is continuous, so legitimate perturbed outputs never collide
with the integer sums they protect.
"""

from __future__ import annotations

import dataclasses
from enum import Enum
from typing import Iterable, Iterator

from .ledger import decode_transaction


def value_leaves(obj: object) -> Iterator[object]:
    """Yield every scalar field value reachable from obj."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            yield from value_leaves(getattr(obj, f.name))
    elif isinstance(obj, dict):
        for k, v in obj.items():
            yield from value_leaves(k)
            yield from value_leaves(v)
    elif isinstance(obj, (list, tuple, set, frozenset)):
        for item in obj:
            yield from value_leaves(item)
    elif isinstance(obj, Enum):
        yield obj.value
    else:
        yield obj


def find_leaks(obj: object, protected: Iterable[float]) -> list[object]:
    """Return every leaf of obj that matches a protected value."""
    targets = {float(v) for v in protected}
    target_strings = {str(int(v)) for v in targets if float(v).is_integer()}
    hits = []
    for leaf in value_leaves(obj):
        if isinstance(leaf, bool):
            continue
        if isinstance(leaf, (int, float)) and float(leaf) in targets:
            hits.append(leaf)
        elif isinstance(leaf, str) and leaf in target_strings:
            hits.append(leaf)
    return hits


def audit_messages(messages: Iterable[bytes], protected: Iterable[float]) -> list[object]:
    """Decode orderer-visible wire messages and scan them for protected values."""
    hits = []
    for raw in messages:
        hits.extend(find_leaks(decode_transaction(raw), protected))
    return hits
