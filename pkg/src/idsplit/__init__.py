"""Identifier splitting toolkit.

Builds labeled splitting corpora from source code via naming-convention
heuristics, trains statistical and recurrent splitters over them, and
evaluates everything with micro-averaged split-point precision/recall/F1.
"""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Dataset,
    RawIdentifier,
    SubtokenRecord,
    build_dataset,
    extract_identifiers,
    heuristic_split,
    read_dataset,
    to_record,
    write_dataset,
)
from .errors import IdsplitError  # noqa: F401
