import hashlib
import re

PLACEHOLDER = "<*>"

# Placeholder spellings produced by other parsers / models: <*>, < * >, <NUM>, <IP>, {}, {*}
PLACEHOLDER_VARIANTS = re.compile(r"<\s*\*\s*>|<[A-Z][A-Z0-9_]*>|\{\s*\*?\s*\}")
_WS = re.compile(r"\s+")


def norm(text: str) -> str:
    """
    Canonical template form: placeholder variants unified to `<*>`,
    lowercased, trimmed, internal whitespace collapsed. Idempotent.
    """
    t = PLACEHOLDER_VARIANTS.sub(PLACEHOLDER, text)
    t = t.lower().strip()
    return _WS.sub(" ", t)


def template_id_for(text: str) -> str:
    """Stable id of a template; computed on the normalized text."""
    digest = hashlib.sha256(norm(text).encode("utf-8")).hexdigest()
    return f"T{digest[:12]}"


def count_placeholders(text: str) -> int:
    return text.count(PLACEHOLDER)
