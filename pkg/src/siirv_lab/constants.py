"""Pinned numeric constants that stand in for hidden big-O factors.

Defaults live in :class:`Constants`.  Setting the environment variable
``SIIRV_LAB_CONSTANTS`` to the path of a JSON object overrides any subset of
fields, e.g. ``{"c_rcrit": 4, "c_n1": 1e-9}``.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError

ENV_VAR = "SIIRV_LAB_CONSTANTS"


@dataclass(frozen=True)
class Constants:
    # tail radius multiplier in l = c_tail * e^{kappa/(3-eta-s)} * B^{5/(4(3-eta-s))}
    c_tail: float = 4.0
    # partition-function sanity bound: Z * e^{a.T(M)} <= c_part * B^{1/4}
    c_part: float = 64.0
    # additive slack multiplier inside r_crit
    c_rcrit: float = 8.0
    # multipliers on the four sparse/dense thresholds n_1..n_4
    c_n1: float = 1.0
    c_n2: float = 1.0
    c_n3: float = 1.0
    c_n4: float = 1.0
    # SIIURV threshold n'_crit = c_siiurv * B^2 / (gamma^3 eps^2)
    c_siiurv: float = 1.0
    # sample-count multiplier for hypothesis selection, m = c_h ln(1/delta) / eps^2
    c_h: float = 8.0
    # massage parameter kappa = ceil(1 + c_pnbd / eps)
    c_pnbd: float = 6.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"constant {f.name} must be a positive number, got {v!r}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "Constants":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown constants: {sorted(unknown)}")
        return replace(cls(), **{k: float(v) for k, v in data.items()})


_cache: dict = {}


def get_constants() -> Constants:
    """Defaults merged with the JSON file named by ``SIIRV_LAB_CONSTANTS``."""
    path = os.environ.get(ENV_VAR)
    if not path:
        return Constants()
    try:
        stamp = os.stat(path).st_mtime_ns
    except OSError as exc:
        raise ConfigError(f"{ENV_VAR} points at unreadable file {path!r}") from exc
    key = (path, stamp)
    if key not in _cache:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        _cache.clear()
        _cache[key] = Constants.from_json(data)
    return _cache[key]


def resolve(constants: Constants | None) -> Constants:
    return constants if constants is not None else get_constants()
