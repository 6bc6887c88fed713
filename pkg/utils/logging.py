"""
Debug dumps of reports, scans and other structured payloads
"""
import json
import logging
import math
from typing import Any, Dict, Mapping, Sequence

import numpy as np
from pydantic import BaseModel

# bulky coefficient and nodal arrays are summarized by shape
REDACTED_KEYS = frozenset({"coeffs", "values", "u_grid", "q_grid"})


def _shorten_str(s: str, max_len: int) -> str:
    if len(s) <= max_len:
        return s
    return f"{s[:max_len]}… <len={len(s)}>"


def _shorten_seq(seq: Sequence[Any], max_items: int) -> list[Any]:
    out = list(seq[:max_items])
    if len(seq) > max_items:
        out.append(f"<… {len(seq) - max_items} more items>")
    return out


def _number(x: float) -> Any:
    """JSON has no inf/nan; keep them readable as strings"""
    return x if math.isfinite(x) else repr(x)


def prune(obj: Any, max_str: int = 120, max_items: int = 20,
          keys_to_redact: frozenset[str] = REDACTED_KEYS) -> Any:
    if isinstance(obj, BaseModel):
        return prune(obj.model_dump(), max_str, max_items, keys_to_redact)
    if isinstance(obj, Mapping):
        trimmed: Dict[Any, Any] = {}
        for k, v in obj.items():
            if isinstance(k, str) and k in keys_to_redact and isinstance(v, (np.ndarray, list)):
                trimmed[k] = f"<{k} shape={np.shape(v)}>"
            else:
                trimmed[k] = prune(v, max_str, max_items, keys_to_redact)
        return trimmed
    if isinstance(obj, str):
        return _shorten_str(obj, max_str)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        return _number(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        if obj.ndim > 1:
            return f"<ndarray shape={obj.shape} dtype={obj.dtype}>"
        return _shorten_seq([prune(v, max_str, max_items, keys_to_redact) for v in obj.tolist()], max_items)
    if isinstance(obj, Sequence):
        return _shorten_seq([prune(v, max_str, max_items, keys_to_redact) for v in obj], max_items)

    try:
        json.dumps(obj)
        return obj
    except TypeError:
        return f"<{type(obj).__name__}: {obj}>"


def log_json(logger: logging.Logger, payload: Any, **prune_kwargs: Any) -> None:
    """Pretty JSON at DEBUG; pruning is skipped when DEBUG is off"""
    if not logger.isEnabledFor(logging.DEBUG):
        return
    logger.debug(json.dumps(prune(payload, **prune_kwargs), indent=2, ensure_ascii=False))
