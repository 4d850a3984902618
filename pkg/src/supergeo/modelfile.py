"""Line-oriented model files.

    # comment
    [model]
    even = x1, x2
    odd = xi1, xi2

    [christoffel]            # or [metric], exactly one of the two
    Gamma(1,2,2) = "-x1"

    [metric]
    g(2,2) = "x1^2"          # entries with i <= j; the rest by graded symmetry

    [perturbation]           # optional, added to the Levi-Civita symbols
    Gamma(1,1,1) = "0.001"

    [oneform]
    alpha(1) = "0.5"

    [change]                 # coordinate change for the transform check
    even = y
    y(1) = "x + x^2"

    [target_christoffel]
    Gamma(1,1,1) = "-2/(1 + 4*y)"

    [settings]
    h = 1e-3
    t_end = 1.0
    tolerance = 1e-10
    generators = 4
    blowup = 1e12
    samples = 50
    seed = 0
    x = "0"
    v = "1.0@body,1.0@12"
    partner = "other.model"

    [expect]
    torsion = pass
    projective = equivalent

Indices are 1-based; unspecified entries are zero.
"""

from __future__ import annotations

import re
from importlib import resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .connection import ChristoffelField
from .errors import ParseError, ParityError
from .geometry import CoordinateChange, OneForm
from .metric import SuperMetric, levi_civita
from .superexpr import CoordinateSystem, ZERO, add, parse

__all__ = ["Model", "load_model", "parse_model", "bundled_models", "bundled_path", "SETTINGS_DEFAULTS"]

SETTINGS_DEFAULTS: dict[str, Any] = {
    "h": 1e-3,
    "t_end": 1.0,
    "tolerance": 1e-10,
    "projective_tolerance": 1e-6,
    "generators": None,
    "blowup": 1e12,
    "samples": 50,
    "seed": 0,
    "x": None,
    "v": None,
    "partner": None,
}
_FLOAT_KEYS = {"h", "t_end", "tolerance", "projective_tolerance", "blowup"}
_INT_KEYS = {"generators", "samples", "seed"}
_SECTIONS = {"model", "christoffel", "metric", "perturbation", "oneform", "change", "target_christoffel", "settings", "expect"}

_SECTION_RE = re.compile(r"^\[(\w+)\]$")
_KEY_RE = re.compile(r"^(\w+)\s*(?:\(([\d\s,]+)\))?\s*=\s*(.*)$")


@dataclass
class Model:
    name: str
    coords: CoordinateSystem
    gamma: ChristoffelField
    metric: SuperMetric | None = None
    oneform: OneForm | None = None
    change: CoordinateChange | None = None
    target_gamma: ChristoffelField | None = None
    settings: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    path: Path | None = None

    @property
    def num_generators(self) -> int:
        L = self.settings.get("generators")
        return self.coords.q + 2 if L is None else int(L)


def _unquote(value: str, lineno: int) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] == '"':
        return value[1:-1]
    if '"' in value:
        raise ParseError(f"line {lineno}: unbalanced quotes")
    return value


def _names(value: str) -> tuple[str, ...]:
    return tuple(n.strip() for n in value.split(",") if n.strip())


def parse_model(text: str, name: str = "<model>", path: Path | None = None) -> Model:
    sections: dict[str, list[tuple[int, str, tuple[int, ...] | None, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            current = m.group(1).lower()
            if current not in _SECTIONS:
                raise ParseError(f"line {lineno}: unknown section [{current}]")
            if current in sections:
                raise ParseError(f"line {lineno}: duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise ParseError(f"line {lineno}: entry outside of a section")
        m = _KEY_RE.match(line)
        if not m:
            raise ParseError(f"line {lineno}: expected 'key = value'")
        key, idx, value = m.group(1), m.group(2), m.group(3)
        indices = tuple(int(t) for t in idx.replace(" ", "").split(",") if t) if idx is not None else None
        sections[current].append((lineno, key, indices, _unquote(value, lineno)))

    if "model" not in sections:
        raise ParseError("missing [model] section")
    decl = {k: v for _, k, _, v in sections["model"]}
    try:
        coords = CoordinateSystem(_names(decl.get("even", "")), _names(decl.get("odd", "")))
    except ValueError as exc:
        raise ParseError(f"[model]: {exc}") from None
    if coords.n == 0:
        raise ParseError("[model] declares no coordinates")

    has_c, has_m = "christoffel" in sections, "metric" in sections
    if has_c == has_m:
        raise ParseError("exactly one of [christoffel] or [metric] is required")

    def expr(src, lineno, cs=coords):
        try:
            return parse(src, cs)
        except ParityError as exc:
            raise ParityError(f"line {lineno}: {exc}") from None
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None

    def indexed(sec, key, arity, cs=coords):
        out = {}
        for lineno, k, idx, value in sections.get(sec, []):
            if k.lower() != key.lower() or idx is None or len(idx) != arity:
                raise ParseError(f"line {lineno}: expected {key}({','.join('ijk'[:arity])}) = \"expr\" in [{sec}]")
            if any(not 1 <= i <= cs.n for i in idx):
                raise ParseError(f"line {lineno}: index {idx} out of range 1..{cs.n}")
            if idx in out:
                raise ParseError(f"line {lineno}: duplicate entry {key}{idx}")
            out[idx] = (expr(value, lineno, cs), lineno)
        return out

    def build_gamma(sec, cs=coords):
        entries = indexed(sec, "Gamma", 3, cs)
        try:
            return ChristoffelField.from_entries(cs, {k: e for k, (e, _) in entries.items()})
        except ParityError as exc:
            raise ParityError(f"[{sec}]: {exc}") from None

    metric = None
    if has_m:
        entries = indexed("metric", "g", 2)
        for (i, j), (_, lineno) in entries.items():
            if i > j:
                raise ParseError(f"line {lineno}: give metric entries with i <= j")
        try:
            metric = SuperMetric.from_upper(coords, {k: e for k, (e, _) in entries.items()})
        except ParityError as exc:
            raise ParityError(f"[metric]: {exc}") from None
        gamma = levi_civita(metric)
        if "perturbation" in sections:
            pert = build_gamma("perturbation")
            n = coords.n
            gamma = ChristoffelField(coords, [[[add(gamma[i, j, k], pert[i, j, k]) for k in range(n)] for j in range(n)] for i in range(n)])
    else:
        if "perturbation" in sections:
            raise ParseError("[perturbation] requires a [metric] section")
        gamma = build_gamma("christoffel")

    oneform = None
    if "oneform" in sections:
        entries = indexed("oneform", "alpha", 1)
        comps = [ZERO] * coords.n
        for (i,), (e, _) in entries.items():
            comps[i - 1] = e
        oneform = OneForm(coords, tuple(comps))
        try:
            oneform.require_even()
        except ParityError as exc:
            raise ParityError(f"[oneform]: {exc}") from None

    change = target_gamma = None
    if "change" in sections:
        rows = sections["change"]
        head = {k: v for _, k, idx, v in rows if idx is None}
        try:
            target = CoordinateSystem(_names(head.get("even", "")), _names(head.get("odd", "")))
        except ValueError as exc:
            raise ParseError(f"[change]: {exc}") from None
        if target.eps != coords.eps:
            raise ParseError("[change] target must have the same graded dimension")
        formulas = {}
        for lineno, k, idx, value in rows:
            if idx is None:
                if k not in ("even", "odd"):
                    raise ParseError(f"line {lineno}: unknown key {k!r} in [change]")
                continue
            if k != "y" or len(idx) != 1 or not 1 <= idx[0] <= coords.n:
                raise ParseError(f"line {lineno}: expected y(p) = \"expr\" in [change]")
            formulas[idx[0]] = expr(value, lineno)
        if len(formulas) != coords.n:
            raise ParseError(f"[change] needs formulas y(1)..y({coords.n})")
        try:
            change = CoordinateChange(coords, target, tuple(formulas[p] for p in range(1, coords.n + 1)))
        except ParityError as exc:
            raise ParityError(f"[change]: {exc}") from None
        if "target_christoffel" in sections:
            target_gamma = build_gamma("target_christoffel", target)
    elif "target_christoffel" in sections:
        raise ParseError("[target_christoffel] requires a [change] section")

    settings = dict(SETTINGS_DEFAULTS)
    for lineno, k, idx, value in sections.get("settings", []):
        if idx is not None or k not in SETTINGS_DEFAULTS:
            raise ParseError(f"line {lineno}: unknown setting {k!r}")
        try:
            if k in _FLOAT_KEYS:
                settings[k] = float(value)
            elif k in _INT_KEYS:
                settings[k] = int(value)
            else:
                settings[k] = value
        except ValueError:
            raise ParseError(f"line {lineno}: bad value for {k!r}: {value!r}") from None
    expect = {k: value.lower() for _, k, idx, value in sections.get("expect", [])}
    return Model(name, coords, gamma, metric, oneform, change, target_gamma, settings, expect, path)


def _strip_comment(raw: str) -> str:
    inside = False
    for pos, ch in enumerate(raw):
        if ch == '"':
            inside = not inside
        elif ch == "#" and not inside:
            return raw[:pos]
    return raw


def load_model(path: str | Path) -> Model:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read model file {str(path)!r}: {exc.strerror}") from None
    return parse_model(text, path.stem, path)


def bundled_path(name: str) -> Path:
    """Path of a model shipped with the package, e.g. ``bundled_path("surface")``."""
    path = Path(str(resources.files("supergeo") / "models" / f"{name}.model"))
    if not path.is_file():
        raise ParseError(f"no bundled model named {name!r}")
    return path


def bundled_models() -> list[str]:
    root = Path(str(resources.files("supergeo") / "models"))
    return sorted(p.stem for p in root.glob("*.model"))
