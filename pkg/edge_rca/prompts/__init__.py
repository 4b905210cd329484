"""
Versioned prompt assets. A file holds a `### system` and a `### user` section;
the user section is a str.format template. Editing a file changes request
hashes, so recorded transcripts must be re-recorded.
"""
from functools import lru_cache
from importlib import resources
from typing import Tuple

PARSE_PROMPT = "parse_v1.txt"
SYNTHESIS_PROMPT = "synthesis_v1.txt"
VANILLA_PROMPT = "vanilla_v1.txt"

# markers the mock backend uses to find its inputs inside a prompt
LOG_MARKER = "LOG:"
EVIDENCE_MARKER = "EVIDENCE:"
CASES_MARKER = "CASES:"


@lru_cache(maxsize=None)
def load_prompt(name: str) -> Tuple[str, str]:
    text = resources.files(__name__).joinpath(name).read_text(encoding="utf-8")
    sections = {}
    current = None
    for line in text.splitlines():
        if line.startswith("### "):
            current = line[4:].strip()
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    return "\n".join(sections["system"]).strip(), "\n".join(sections["user"]).strip()
