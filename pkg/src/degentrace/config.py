"""Experiment configuration files.

The format is INI (read with :mod:`configparser`).  Every section and key
is optional except that ``[potential]`` must name exactly one source::

    [potential]
    preset = quartic-1d          # or: file = path/to/model.txt
                                 # or: inline = n = 1 | V 4 : 1.0

    [testfn]
    T = 1.0
    profile = bump
    c = 1.0

    [window]
    E_c = 0.0                    # default: the preset or model energy
    eps = 0.5

    [schedule]
    h0 = 0.01
    ratio = 0.1
    count = 5

    [method]
    path = auto                  # auto | rescaled | direct | both
    npw = 10
    window_tol = 1e-12           # relative to sup |phi|; 0 keeps the full window
    n_corrections = 2

    [oscint]
    k = 4
    mode = definite              # definite | indefinite
    lam_min = 100
    lam_max = 1e5
    count = 10
    orders = 0 0, 1 0, 0 1

    [flow]
    times = 0.1, 1, 3
    directions = 1 0, 0 1

    [output]
    dir = out
    seed = 0

Inline potentials use ``|`` in place of line breaks.  Unknown sections or
keys, and invalid values, raise :class:`ConfigError` with the line and
column of the offending text.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .model import PotentialModel, get_preset, load_potential, parse_potential
from .testfn import PROFILES, TestFunction


class ConfigError(ConfigurationError):
    """Invalid configuration text; ``line`` and ``column`` are 1-based (0 when unknown)."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        loc = f"line {line}, column {column}: " if line else ""
        super().__init__(loc + message)
        self.line, self.column = line, column


@dataclass
class PotentialSection:
    preset: str | None = "quartic-1d"
    file: str | None = None
    inline: str | None = None


@dataclass
class TestFnSection:
    __test__ = False

    T: float = 1.0
    profile: str = "bump"
    c: float = 1.0


@dataclass
class WindowSection:
    E_c: float | None = None
    eps: float = 0.5


@dataclass
class ScheduleSection:
    h0: float = 1e-2
    ratio: float = 0.1
    count: int = 5

    def values(self) -> np.ndarray:
        """``h0 * ratio^i`` for ``i < count``."""
        return self.h0 * self.ratio ** np.arange(self.count, dtype=float)


@dataclass
class MethodSection:
    path: str = "auto"
    npw: float = 10.0
    window_tol: float = 1e-12
    n_corrections: int = 2


@dataclass
class OscintSection:
    k: int = 4
    mode: str = "definite"
    lam_min: float = 1e2
    lam_max: float = 1e5
    count: int = 10
    orders: tuple[tuple[int, int], ...] = ((0, 0), (1, 0), (0, 1))

    def lam_grid(self) -> np.ndarray:
        return np.geomspace(self.lam_min, self.lam_max, self.count)


@dataclass
class FlowSection:
    times: tuple[float, ...] = (0.1, 1.0, 3.0)
    directions: tuple[tuple[float, ...], ...] = ((1.0, 0.0), (0.0, 1.0))


@dataclass
class OutputSection:
    dir: str = "out"
    seed: int = 0


SECTIONS = {"potential": PotentialSection, "testfn": TestFnSection, "window": WindowSection,
            "schedule": ScheduleSection, "method": MethodSection, "oscint": OscintSection,
            "flow": FlowSection, "output": OutputSection}


@dataclass
class ExperimentConfig:
    """All settings of one experiment; see the module docstring for the file layout."""

    potential: PotentialSection = field(default_factory=PotentialSection)
    testfn: TestFnSection = field(default_factory=TestFnSection)
    window: WindowSection = field(default_factory=WindowSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    method: MethodSection = field(default_factory=MethodSection)
    oscint: OscintSection = field(default_factory=OscintSection)
    flow: FlowSection = field(default_factory=FlowSection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- derived objects --------------------------------------------------
    def model(self, base: Path | None = None, *, allow_low_degree: bool = False) -> PotentialModel:
        """The configured potential; ``allow_low_degree`` admits degree-1/2 terms for validation."""
        p = self.potential
        if p.preset:
            return get_preset(p.preset).model
        if p.file:
            path = Path(p.file)
            if base is not None and not path.is_absolute():
                path = base / path
            return load_potential(path, allow_low_degree=allow_low_degree)
        return parse_potential(p.inline.replace("|", "\n"), name="inline", allow_low_degree=allow_low_degree)

    def energy(self) -> float:
        if self.window.E_c is not None:
            return self.window.E_c
        if self.potential.preset:
            return get_preset(self.potential.preset).energy
        return self.model().E_c

    def test_function(self) -> TestFunction:
        return TestFunction(T=self.testfn.T, profile=self.testfn.profile, c=self.testfn.c)

    def method_path(self, model: PotentialModel | None = None) -> str:
        """The spectral path; ``auto`` is ``rescaled`` for a single homogeneous germ, else ``direct``."""
        if self.method.path != "auto":
            return self.method.path
        model = model if model is not None else self.model()
        return "rescaled" if model.scale_invariant else "direct"

    def h_values(self) -> np.ndarray:
        return self.schedule.values()

    def validate(self) -> "ExperimentConfig":
        """Check value ranges; raises :class:`ConfigError` without a location."""
        _check_values(self, {})
        return self

    def with_preset(self, name: str) -> "ExperimentConfig":
        get_preset(name)
        return replace(self, potential=PotentialSection(preset=name), window=replace(self.window, E_c=None))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _locate(text: str) -> dict[tuple[str, str | None], tuple[int, int]]:
    """Line and value column of every section header and key."""
    where: dict[tuple[str, str | None], tuple[int, int]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and "]" in s:
            section = s[1:s.index("]")].strip()
            where[(section, None)] = (lineno, raw.index("[") + 1)
            continue
        if section is not None and raw[:1] not in " \t":
            for sep in ("=", ":"):
                if sep in raw:
                    key = raw.split(sep, 1)[0].strip().lower()
                    col = raw.index(sep) + 2
                    while col <= len(raw) and raw[col - 1] == " ":
                        col += 1
                    where.setdefault((section, key), (lineno, col))
                    break
    return where


def _strip_comment(v: str) -> str:
    for mark in (" #", " ;", "\t#", "\t;"):
        if mark in v:
            v = v.split(mark, 1)[0]
    return v.strip()


def _convert(tp, text: str):
    text = _strip_comment(text)
    if tp in (float, "float"):
        return float(text)
    if tp in (int, "int"):
        return int(text)
    if tp in ("float | None",):
        return None if text.lower() in ("", "none") else float(text)
    if tp in ("str | None",):
        return None if text.lower() in ("", "none") else text
    if tp in (str, "str"):
        return text
    if tp == "tuple[tuple[int, int], ...]":
        out = tuple(tuple(int(a) for a in part.split()) for part in text.split(","))
        if any(len(o) != 2 for o in out):
            raise ValueError("each order needs two integers 'J L'")
        return out
    if tp == "tuple[float, ...]":
        return tuple(float(a) for a in text.split(","))
    if tp == "tuple[tuple[float, ...], ...]":
        return tuple(tuple(float(a) for a in part.split()) for part in text.split(","))
    raise TypeError(f"unsupported field type {tp!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text.

    Raises
    ------
    ConfigError
        On syntax errors, unknown sections or keys, and invalid values.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=None, strict=True)
    cp.optionxform = str.lower
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of a section", exc.lineno, 1) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno or 0, 1) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno or 0, 1) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else 0
        raise ConfigError("cannot parse line", line, 1) from None
    where = _locate(text)
    cfg = ExperimentConfig()
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]", *where.get((sec, None), (0, 0)))
        cls = SECTIONS[sec]
        names = {f.name.lower(): f for f in fields(cls)}
        kwargs = {}
        if sec == "potential":
            kwargs = {"preset": None, "file": None, "inline": None}
        for key, raw in cp.items(sec):
            loc = where.get((sec, key), (0, 0))
            if key not in names:
                raise ConfigError(f"unknown key {key!r} in [{sec}]; allowed: {sorted(names)}", *loc)
            f = names[key]
            try:
                kwargs[f.name] = _convert(f.type, raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"invalid value for {sec}.{f.name}: {exc}", *loc) from None
        if sec == "potential":
            given = [k for k, v in kwargs.items() if v]
            if len(given) != 1:
                raise ConfigError("[potential] needs exactly one of preset, file, inline",
                                  *where.get((sec, None), (0, 0)))
        setattr(cfg, sec, cls(**kwargs) if sec == "potential" else replace(getattr(cfg, sec), **kwargs))
    _check_values(cfg, where)
    return cfg


def _check_values(cfg: ExperimentConfig, where: dict) -> None:
    def fail(sec, key, msg):
        raise ConfigError(msg, *where.get((sec, key.lower()), where.get((sec, None), (0, 0))))

    s = cfg.schedule
    if not (s.h0 > 0 and math.isfinite(s.h0)):
        fail("schedule", "h0", "h0 must be positive")
    if not 0 < s.ratio < 1:
        fail("schedule", "ratio", "ratio must lie in (0, 1) so the schedule strictly decreases")
    if s.count < 1:
        fail("schedule", "count", "count must be at least 1")
    if not cfg.window.eps > 0:
        fail("window", "eps", "eps must be positive")
    if not cfg.testfn.T > 0:
        fail("testfn", "T", "T must be positive")
    if cfg.testfn.profile not in PROFILES:
        fail("testfn", "profile", f"profile must be one of {PROFILES}")
    m = cfg.method
    if m.path not in ("auto", "rescaled", "direct", "both"):
        fail("method", "path", "path must be auto, rescaled, direct or both")
    if not m.npw > 0:
        fail("method", "npw", "npw must be positive")
    if m.window_tol < 0:
        fail("method", "window_tol", "window_tol must be non-negative")
    if m.n_corrections < 0:
        fail("method", "n_corrections", "n_corrections must be non-negative")
    o = cfg.oscint
    if o.k < 4 or o.k % 2:
        fail("oscint", "k", "k must be even and at least 4")
    if o.mode not in ("definite", "indefinite"):
        fail("oscint", "mode", "mode must be definite or indefinite")
    if not 0 < o.lam_min < o.lam_max:
        fail("oscint", "lam_max", "need 0 < lam_min < lam_max")
    if o.count < 6:
        fail("oscint", "count", "count must be at least 6")
    if any(j < 0 or l < 0 for j, l in o.orders):
        fail("oscint", "orders", "orders must be non-negative")
    if not cfg.flow.times or any(not t > 0 for t in cfg.flow.times):
        fail("flow", "times", "times must be positive")


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ", ".join(" ".join(_format(a) for a in part) for part in v)
        return ", ".join(_format(a) for a in v)
    return str(v)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Text that :func:`parse_config` maps back to an equal configuration."""
    lines = []
    for sec, cls in SECTIONS.items():
        obj = getattr(cfg, sec)
        lines.append(f"[{sec}]")
        for f in fields(cls):
            v = getattr(obj, f.name)
            if sec == "potential" and v is None:
                continue
            if f.name == "E_c" and v is None:
                continue
            lines.append(f"{f.name} = {_format(v)}")
        lines.append("")
    return "\n".join(lines)
