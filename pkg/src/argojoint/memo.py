"""Per-dataset memoisation shared by a bundle and all of its truncations.

Entries are keyed by values that fully determine the result (e.g. a target
week and horizon, never the as-of date of the caller), so a cached value is
identical to what a fresh computation on any truncation would return.
"""

from __future__ import annotations

import threading
import weakref


class Token:
    """Identity of one dataset; truncated views of a bundle keep their token."""

    __slots__ = ("__weakref__",)


_store: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()
_lock = threading.Lock()


def memo(token, key, compute):
    with _lock:
        table = _store.setdefault(token, {})
        if key in table:
            return table[key]
    value = compute()
    with _lock:
        return table.setdefault(key, value)


def clear(token) -> None:
    with _lock:
        _store.pop(token, None)
