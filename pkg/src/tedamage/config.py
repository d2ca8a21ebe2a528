"""
Run configuration: an INI file with flat sections, a catalog of named data
functions, and the built-in presets.

Schema (units: mm, s, Pa, K)::

    [mesh]      domain = notched | unit, cell = quadrilateral | triangle, n, refine,
                notch_length, notch_thickness, notch_y
    [material]  lam, mu, rho, kappa, Gc, gamma0, ell (a number, or e.g. "2h"),
                conductivity = constant | power-law, K, c0, c1, c2, beta
    [time]      tau, M
    [data]      f, gamma, u0, v0, phi0, theta0      catalog expressions
    [bc.displacement] / [bc.damage] / [bc.temperature]
                <tag> = dirichlet|neumann <expression> [components=0,1]
    [solver]    tol_rel, max_iter, line_search, freeze_damage, clip_damage, monolithic
    [output]    directory, stride, vtk
    [analysis]  exact = none | mms-elastic | mms-heat, c_ell = provable | literature | <number>

Catalog expressions look like ``name(arg, arg, ...)`` with numeric arguments;
see :data:`CATALOG`.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import mms
from .assembly import DIRICHLET, NEUMANN, BCSpec, BoundaryCondition, ConductivityModel, ModelParams
from .errors import InvalidArgument
from .mesh import QUADRILATERAL, TRIANGLE, build_notched_square, build_unit_square, refine
from .nonlinear import NewtonConfig
from .stepper import ProblemData, SolverSettings, TimeGrid
from .tensor import ElasticModuli


class ConfigError(InvalidArgument):
    def __init__(self, message, line=None, column=None):
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# Data catalog
# ---------------------------------------------------------------------------

SCALAR, VECTOR = "scalar", "vector"


def _n(x):
    return len(x)


def _zero(kind):
    if kind == SCALAR:
        return lambda x, t=None: np.zeros(_n(x))
    return lambda x, t=None: np.zeros((_n(x), 2))


def _constant(kind, a, b=None):
    if kind == SCALAR:
        if b is not None:
            raise InvalidArgument("constant() takes one argument for scalar fields")
        return lambda x, t=None: np.full(_n(x), a)
    if b is None:
        raise InvalidArgument("constant() takes two arguments for vector fields")
    return lambda x, t=None: np.tile([a, b], (_n(x), 1))


def _monomial(kind, c, px, py, comp=None):
    def mono(x):
        return c * x[:, 0] ** px * x[:, 1] ** py

    if kind == SCALAR:
        return lambda x, t=None: mono(x)
    comp = 0 if comp is None else int(comp)

    def vec(x, t=None):
        out = np.zeros((_n(x), 2))
        out[:, comp] = mono(x)
        return out

    return vec


def _sinsin(kind, a=1.0, k=1.0):
    def s(x):
        return a * np.sin(k * np.pi * x[:, 0]) * np.sin(k * np.pi * x[:, 1])

    if kind == SCALAR:
        return lambda x, t=None: s(x)
    return lambda x, t=None: np.column_stack([s(x), s(x)])


def _ramp(kind, a, b=None):
    if kind == SCALAR:
        return lambda x, t=0.0: np.full(_n(x), a * t)
    return lambda x, t=0.0: np.tile([a * t, b * t], (_n(x), 1))


def _ramp_per_step(kind, *args):
    """Value grows by the given increment every step of length tau (last argument)."""
    *inc, tau = args
    return _ramp(kind, *(v / tau for v in inc))


def _only(kind_needed, fn):
    def build(kind, *args):
        if kind != kind_needed:
            raise InvalidArgument(f"this catalog entry produces a {kind_needed} field")
        return fn(*args)

    return build


CATALOG = {
    "zero": _zero,
    "constant": _constant,
    "monomial": _monomial,
    "sinsin": _sinsin,
    "ramp": _ramp,
    "ramp_per_step": _ramp_per_step,
    "mms_elastic_exact": _only(VECTOR, lambda: mms.elastic_exact),
    "mms_elastic_force": _only(VECTOR, mms.elastic_force),
    "mms_heat_exact": _only(SCALAR, lambda: mms.heat_exact),
    "mms_heat_source": _only(SCALAR, mms.heat_source),
}

_EXPR = re.compile(r"^\s*([A-Za-z_][\w]*)\s*\((.*)\)\s*$")


def parse_expr(expr: str):
    m = _EXPR.match(expr)
    if not m:
        raise InvalidArgument(f"malformed data expression {expr!r}; expected name(args)")
    name, argtext = m.group(1), m.group(2).strip()
    if name not in CATALOG:
        raise InvalidArgument(f"unknown data function {name!r}; catalog has {sorted(CATALOG)}")
    try:
        args = [float(a) for a in argtext.split(",")] if argtext else []
    except ValueError:
        raise InvalidArgument(f"arguments of {expr!r} must be numbers") from None
    return name, args


def compile_expr(expr: str, kind: str):
    """Callable ``(x, t) -> values`` for a catalog expression."""
    name, args = parse_expr(expr)
    try:
        return CATALOG[name](kind, *args)
    except TypeError:
        raise InvalidArgument(f"wrong number of arguments in {expr!r}") from None


# ---------------------------------------------------------------------------
# Configuration sections
# ---------------------------------------------------------------------------


@dataclass
class MeshSpec:
    domain: str = "notched"
    cell: str = QUADRILATERAL
    n: int = 8
    refine: int = 0
    notch_length: float = 0.5
    notch_thickness: float = 1e-3
    notch_y: float = 0.5

    @property
    def h(self) -> float:
        """Nominal mesh width 1/(n 2^refine), the h of the rule ell = 2h."""
        return 1.0 / (self.n * 2**self.refine)

    def build_base(self):
        if self.domain == "notched":
            return build_notched_square(self.n, self.notch_length, self.notch_thickness, self.cell, self.notch_y)
        if self.domain == "unit":
            return build_unit_square(self.n, self.cell)
        raise InvalidArgument(f"unknown domain {self.domain!r}")

    def build(self):
        return refine(self.build_base(), self.refine)


@dataclass
class MaterialSpec:
    lam: float = 8.88e9
    mu: float = 13.33e9
    rho: float = 2e-6
    kappa: float = 1e-8
    Gc: float = 3.0e6
    gamma0: float = 1e4
    ell: float | None = None  # None: ell = ell_factor * h
    ell_factor: float = 2.0
    conductivity: str = "constant"
    K: float = 0.158
    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    beta: float = 1.5

    def params(self, h: float) -> ModelParams:
        cond = ConductivityModel(self.conductivity, self.K, self.c0, self.c1, self.c2, self.beta)
        ell = self.ell if self.ell is not None else self.ell_factor * h
        return ModelParams(ElasticModuli(self.lam, self.mu), self.rho, self.kappa, ell, self.Gc, self.gamma0, cond)


@dataclass
class TimeSpec:
    tau: float = 1e-3
    M: int = 200

    def grid(self) -> TimeGrid:
        return TimeGrid.from_tau(self.tau, self.M)


@dataclass
class DataSpec:
    f: str = "zero()"
    gamma: str = "zero()"
    u0: str = "zero()"
    v0: str = "zero()"
    phi0: str = "constant(1)"
    theta0: str = "zero()"

    _KINDS = {"f": VECTOR, "gamma": SCALAR, "u0": VECTOR, "v0": VECTOR, "phi0": SCALAR, "theta0": SCALAR}

    def build(self) -> ProblemData:
        return ProblemData(**{k: compile_expr(getattr(self, k), kind) for k, kind in self._KINDS.items()})


@dataclass(frozen=True)
class BCEntry:
    tag: str
    kind: str
    expr: str
    components: tuple | None = None

    def build(self, field_kind: str) -> BoundaryCondition:
        return BoundaryCondition(self.tag, self.kind, compile_expr(self.expr, field_kind), self.components)

    def to_value(self) -> str:
        s = f"{self.kind} {self.expr}"
        if self.components is not None:
            s += " components=" + ",".join(str(c) for c in self.components)
        return s


@dataclass
class SolverSpec:
    tol_rel: float = 1e-8
    max_iter: int = 50
    line_search: str = "off"
    freeze_damage: bool = False
    clip_damage: bool = False
    monolithic: bool = False

    def settings(self) -> SolverSettings:
        return SolverSettings(NewtonConfig(self.tol_rel, self.max_iter, self.line_search),
                              self.freeze_damage, self.clip_damage, self.monolithic)


@dataclass
class OutputSpec:
    directory: str = "out"
    stride: int = 10
    vtk: bool = True


@dataclass
class AnalysisSpec:
    exact: str = "none"
    c_ell: str = "provable"

    def c_ell_value(self, p: ModelParams) -> float:
        if self.c_ell == "provable":
            return p.moduli.ellipticity_constant
        if self.c_ell == "literature":
            return p.moduli.ellipticity_constant_literature
        return float(self.c_ell)


_SECTIONS = ("mesh", "material", "time", "data", "solver", "output", "analysis")
_BC_FIELDS = ("displacement", "damage", "temperature")


@dataclass
class RunConfig:
    mesh: MeshSpec = field(default_factory=MeshSpec)
    material: MaterialSpec = field(default_factory=MaterialSpec)
    time: TimeSpec = field(default_factory=TimeSpec)
    data: DataSpec = field(default_factory=DataSpec)
    bc_displacement: tuple = ()
    bc_damage: tuple = ()
    bc_temperature: tuple = ()
    solver: SolverSpec = field(default_factory=SolverSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)

    def bcs(self) -> BCSpec:
        return BCSpec(
            displacement=tuple(b.build(VECTOR) for b in self.bc_displacement),
            damage=tuple(b.build(SCALAR) for b in self.bc_damage),
            temperature=tuple(b.build(SCALAR) for b in self.bc_temperature),
        )

    def to_ini(self) -> str:
        out = io.StringIO()
        for sec in _SECTIONS:
            spec = getattr(self, sec)
            out.write(f"[{sec}]\n")
            for f in fields(spec):
                if f.name.startswith("_"):
                    continue
                if sec == "material" and f.name in ("ell", "ell_factor"):
                    continue
                out.write(f"{f.name} = {_format(getattr(spec, f.name))}\n")
                if sec == "material" and f.name == "gamma0":
                    m = self.material
                    out.write(f"ell = {m.ell_factor!r}h\n" if m.ell is None else f"ell = {m.ell!r}\n")
            out.write("\n")
        for name in _BC_FIELDS:
            out.write(f"[bc.{name}]\n")
            for b in getattr(self, f"bc_{name}"):
                out.write(f"{b.tag} = {b.to_value()}\n")
            out.write("\n")
        return out.getvalue()

    def validate(self) -> None:
        """Compile every expression and build every object once."""
        self.data.build()
        self.bcs()
        self.material.params(self.mesh.h)
        self.time.grid()
        self.solver.settings()
        if self.output.stride < 1:
            raise InvalidArgument("output stride must be at least 1")
        if self.analysis.exact not in ("none", "mms-elastic", "mms-heat"):
            raise InvalidArgument(f"unknown exact solution {self.analysis.exact!r}")
        if self.mesh.domain not in ("notched", "unit"):
            raise InvalidArgument(f"unknown domain {self.mesh.domain!r}")
        if self.mesh.cell not in (TRIANGLE, QUADRILATERAL):
            raise InvalidArgument(f"unknown cell kind {self.mesh.cell!r}")


def _format(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _key_positions(text: str) -> dict:
    """(section, key) -> (line, column of the value), 1-based."""
    pos = {}
    section = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif s and not s.startswith(("#", ";")) and "=" in line and section is not None:
            key, _, rest = line.partition("=")
            col = len(key) + 2 + (len(rest) - len(rest.lstrip()))
            pos[(section, key.strip().lower())] = (i, col)
    return pos


def _convert(default, raw: str, name: str):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "yes", "true", "on"):
            return True
        if low in ("0", "no", "false", "off"):
            return False
        raise InvalidArgument(f"{name} must be a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise InvalidArgument(f"{name} must be an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise InvalidArgument(f"{name} must be a number, got {raw!r}") from None
    return raw


def _parse_bc(tag: str, raw: str) -> BCEntry:
    parts = raw.split()
    if len(parts) < 2:
        raise InvalidArgument(f"boundary entry for {tag!r} needs '<kind> <expression>'")
    kind = parts[0].lower()
    if kind not in (DIRICHLET, NEUMANN):
        raise InvalidArgument(f"boundary kind must be dirichlet or neumann, got {parts[0]!r}")
    rest = raw.split(None, 1)[1]
    comps = None
    m = re.search(r"\s+components\s*=\s*([\d,\s]+)$", rest)
    if m:
        comps = tuple(int(c) for c in m.group(1).replace(" ", "").split(",") if c)
        rest = rest[: m.start()]
    parse_expr(rest)
    return BCEntry(tag, kind, rest.strip(), comps)


def from_ini(text: str) -> RunConfig:
    """Parse a configuration; errors carry the line and column of the offending value."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None), 1) from None
    pos = _key_positions(text)
    cfg = RunConfig()

    def fail(sec, key, msg):
        line, col = pos.get((sec, key.lower()), (None, None))
        raise ConfigError(msg, line, col)

    for sec in cp.sections():
        if sec.startswith("bc."):
            name = sec[3:]
            if name not in _BC_FIELDS:
                fail(sec, "", f"unknown boundary section [{sec}]")
            entries = []
            for tag, raw in cp.items(sec):
                try:
                    entries.append(_parse_bc(tag, raw))
                except InvalidArgument as exc:
                    fail(sec, tag, str(exc))
            setattr(cfg, f"bc_{name}", tuple(entries))
            continue
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        spec = getattr(cfg, sec)
        known = {f.name: f for f in fields(spec) if not f.name.startswith("_")}
        updates = {}
        for key, raw in cp.items(sec):
            try:
                if sec == "material" and key == "ell":
                    r = raw.strip()
                    if r.endswith("h"):
                        updates["ell"] = None
                        updates["ell_factor"] = float(r[:-1] or 1.0)
                    else:
                        updates["ell"] = float(r)
                    continue
                if key not in known:
                    raise InvalidArgument(f"unknown key {key!r} in [{sec}]")
                updates[key] = _convert(known[key].default, raw, f"{sec}.{key}")
                if sec == "data":
                    parse_expr(updates[key])
            except (InvalidArgument, ValueError) as exc:
                fail(sec, key, str(exc))
        setattr(cfg, sec, replace(spec, **updates))
    try:
        cfg.validate()
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load(path) -> RunConfig:
    with open(path) as fh:
        return from_ini(fh.read())


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply ``section.key=value`` strings by round-tripping through the INI text."""
    if not overrides:
        return cfg
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(cfg.to_ini())
    for item in overrides:
        lhs, sep, value = item.partition("=")
        sec, dot, key = lhs.strip().rpartition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, value.strip())
    buf = io.StringIO()
    cp.write(buf)
    return from_ini(buf.getvalue())


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def _sens_notch() -> RunConfig:
    """Notched square under a monotonic top displacement with heat flux at the notch front."""
    return RunConfig(
        mesh=MeshSpec(domain="notched", cell=QUADRILATERAL, n=16),
        material=MaterialSpec(),
        time=TimeSpec(tau=1e-3, M=200),
        data=DataSpec(),
        bc_displacement=(BCEntry("bottom", DIRICHLET, "zero()"),
                         BCEntry("top", DIRICHLET, "ramp_per_step(0, 1e-05, 0.001)")),
        bc_temperature=(BCEntry("notch_front", NEUMANN, "constant(300)"),),
        output=OutputSpec(stride=20),
    )


def _zero() -> RunConfig:
    return RunConfig(
        mesh=MeshSpec(domain="notched", n=8),
        time=TimeSpec(tau=1e-3, M=10),
        data=DataSpec(phi0="zero()"),
        bc_displacement=(BCEntry("bottom", DIRICHLET, "zero()"),),
        output=OutputSpec(stride=1),
    )


_SIDES = ("left", "right", "top", "bottom")


def _mms_elastic() -> RunConfig:
    lam, mu, kappa = 1.0, 1.0, 1e-8
    return RunConfig(
        mesh=MeshSpec(domain="unit", cell=TRIANGLE, n=8),
        material=MaterialSpec(lam=lam, mu=mu, rho=0.0, kappa=kappa, ell=0.1, K=1.0),
        time=TimeSpec(tau=100.0, M=3),
        data=DataSpec(f=f"mms_elastic_force({lam!r}, {mu!r}, {1 + kappa!r})", u0="mms_elastic_exact()"),
        bc_displacement=tuple(BCEntry(s, DIRICHLET, "zero()") for s in _SIDES),
        solver=SolverSpec(freeze_damage=True),
        output=OutputSpec(stride=1),
        analysis=AnalysisSpec(exact="mms-elastic"),
    )


def _mms_heat() -> RunConfig:
    return RunConfig(
        mesh=MeshSpec(domain="unit", cell=TRIANGLE, n=8),
        material=MaterialSpec(lam=1.0, mu=1.0, rho=0.0, ell=0.1, K=1.0),
        time=TimeSpec(tau=100.0, M=3),
        data=DataSpec(gamma="mms_heat_source(1.0)", theta0="mms_heat_exact()"),
        bc_displacement=tuple(BCEntry(s, DIRICHLET, "zero()") for s in _SIDES),
        bc_temperature=tuple(BCEntry(s, DIRICHLET, "zero()") for s in _SIDES),
        solver=SolverSpec(freeze_damage=True),
        output=OutputSpec(stride=1),
        analysis=AnalysisSpec(exact="mms-heat"),
    )


PRESETS = {
    "sens-notch": _sens_notch,
    "zero": _zero,
    "mms-elastic": _mms_elastic,
    "mms-heat": _mms_heat,
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise InvalidArgument(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    cfg = PRESETS[name]()
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Problem assembly from a configuration
# ---------------------------------------------------------------------------


@dataclass
class Problem:
    mesh: object
    params: ModelParams
    bcs: BCSpec
    data: ProblemData
    grid: TimeGrid
    settings: SolverSettings
    h: float


def build_problem(cfg: RunConfig, mesh=None, h: float | None = None) -> Problem:
    """Objects for :func:`tedamage.stepper.run`; ``mesh``/``h`` override the configured mesh."""
    mesh = mesh if mesh is not None else cfg.mesh.build()
    h = h if h is not None else cfg.mesh.h
    return Problem(mesh, cfg.material.params(h), cfg.bcs(), cfg.data.build(), cfg.time.grid(),
                   cfg.solver.settings(), h)
