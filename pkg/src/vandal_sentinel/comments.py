"""Edit-kind classification from MediaWiki auto-summaries.

Shared by the feature extractor (edit-type flags) and the corpus builder
(filtering client/merge/revert edits out of the vandalism-positive class).
"""

from __future__ import annotations

import re
from enum import Enum
from typing import Sequence


class EditKind(str, Enum):
    CLIENT = "client"
    MERGE = "merge"
    REVERTISH = "revertish"
    CREATION = "creation"
    REGULAR = "regular"


#: Ordered (kind, pattern) table; the first matching row wins.
DEFAULT_COMMENT_RULES: tuple[tuple[EditKind, str], ...] = (
    (EditKind.CLIENT, r"clientsitelink"),
    (EditKind.MERGE, r"wbmergeitems"),
    (EditKind.REVERTISH, r"Undid revision|Reverted|Restored|wbsetentity.*restore"),
    (EditKind.CREATION, r"wbeditentity-create"),
)


def compile_rules(rules: Sequence[tuple[EditKind, str]]):
    return tuple((kind, re.compile(pattern)) for kind, pattern in rules)


_DEFAULT_COMPILED = compile_rules(DEFAULT_COMMENT_RULES)


def classify_comment(comment: str, meta=None, rules=None) -> EditKind:
    """Classify one edit comment; falls back to CREATION for parent-less
    revisions and REGULAR otherwise."""
    compiled = _DEFAULT_COMPILED if rules is None else rules
    for kind, pattern in compiled:
        if pattern.search(comment):
            return kind
    if meta is not None and getattr(meta, "parent_rev_id", None) == 0:
        return EditKind.CREATION
    return EditKind.REGULAR
