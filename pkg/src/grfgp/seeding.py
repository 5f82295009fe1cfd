"""Deterministic fan-out of a master seed to named components.

Adding a component never perturbs the streams of existing ones, and the
derivation is stable across platforms and processes (keyed BLAKE2, not
Python's salted hash).
"""

from __future__ import annotations

import hashlib


def seed_for(master: int, label: str) -> int:
    """64-bit seed for the component ``label`` under ``master``."""
    if master < 0 or master >= 2**64:
        raise ValueError("master seed must be a 64-bit unsigned integer")
    digest = hashlib.blake2b(
        label.encode(), key=master.to_bytes(8, "little"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")
