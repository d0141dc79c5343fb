"""Small shared helpers."""

from __future__ import annotations

import hashlib


def config_fingerprint(config: dict) -> str:
    """Stable 12-hex-digit digest of a flat config mapping.

    Keys are sorted; values are rendered with repr for floats (full
    precision) and str otherwise, None as "none". Every CLI command prints
    this for its resolved configuration so runs can be told apart.
    """
    parts = []
    for key in sorted(config):
        value = config[key]
        if value is None:
            text = "none"
        elif isinstance(value, float):
            text = repr(value)
        elif isinstance(value, (list, tuple)):
            text = ",".join("none" if v is None else
                            (repr(v) if isinstance(v, float) else str(v))
                            for v in value)
        else:
            text = str(value)
        parts.append(f"{key}={text}")
    blob = "\n".join(parts).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
