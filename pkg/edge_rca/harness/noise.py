"""
Seeded semantic noise: rewrites synonyms, and for storage-like profiles also
anchor and status words. Output is a pure function of (line, level, seed, profile).
"""
import re
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Tuple

import numpy as np
import yaml

from edge_rca.utils.embedding import fnv1a64
from edge_rca.utils.specs import NoiseConfig

NOISE_TABLES = "noise_v1.yaml"

_TOKEN = re.compile(r"(\s+)")
_CORE = re.compile(r"^([^\w]*)(\w+)([^\w]*)$")


@lru_cache(maxsize=None)
def load_tables(name: str = NOISE_TABLES) -> Dict:
    raw = resources.files("edge_rca.harness").joinpath("assets", name).read_text(encoding="utf-8")
    return yaml.safe_load(raw)


@lru_cache(maxsize=None)
def profile_table(profile: str, name: str = NOISE_TABLES) -> Dict[str, Tuple[str, ...]]:
    tables = load_tables(name)
    merged: Dict[str, Tuple[str, ...]] = {}
    for section in tables["profiles"][profile]:
        for word, alts in tables[section].items():
            merged.setdefault(str(word), tuple(str(a) for a in alts))
    return merged


def _match_case(template: str, word: str) -> str:
    if template.isupper():
        return word.upper()
    if template[:1].isupper():
        return word[:1].upper() + word[1:]
    return word


def inject_noise(line: str, cfg: NoiseConfig) -> str:
    if cfg.level <= 0.0:
        return line
    table = profile_table(cfg.profile)
    rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, fnv1a64(line)])
    out: List[str] = []
    for piece in _TOKEN.split(line):
        m = _CORE.match(piece)
        if not m or m.group(2).lower() not in table:
            out.append(piece)
            continue
        # one draw per eligible token, so higher levels perturb a superset
        u = rng.random()
        alts = table[m.group(2).lower()]
        pick = alts[int(rng.integers(len(alts)))]
        if u < cfg.level:
            out.append(m.group(1) + _match_case(m.group(2), pick) + m.group(3))
        else:
            out.append(piece)
    return "".join(out)
