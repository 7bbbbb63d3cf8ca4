"""Description tokenization."""

from __future__ import annotations

import re
from typing import List

from tubesearch.errors import EmptyDescriptionError

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str, table) -> List[str]:
    """Lowercase, strip punctuation, split, and drop out-of-vocabulary tokens.

    ``table`` is anything supporting ``in`` over tokens (normally a
    :class:`~tubesearch.text.wordvecs.WordVectorTable`).  Raises
    :class:`EmptyDescriptionError` when nothing survives filtering.
    """
    tokens = [t for t in _TOKEN.findall(text.lower()) if t in table]
    if not tokens:
        raise EmptyDescriptionError(f"no in-vocabulary tokens in {text!r}")
    return tokens
