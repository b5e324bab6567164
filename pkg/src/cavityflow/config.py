"""
Run configuration: flat ``section.key = value`` text.

Blank lines and ``#`` comments are ignored.  Lists are comma separated; the
atlas inertia list separates triples with ``;``.  Every key is validated
before any computation starts and the first problem is reported with its
key path.
"""

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .ball_basis import RADIAL_FAMILIES, Family
from .dynamics import IntegratorConfig, Scheme
from .errors import ConfigError

__all__ = ["InitialSpec", "RunConfig", "load_config", "parse_config", "parse_text"]


@dataclass(frozen=True)
class InitialSpec:
    """Initial data: a named preset or explicit coefficients for c0.

    ``c0_kind`` is one of ``rigid_only``, ``single_mode``, ``random`` or
    ``explicit``.  ``a0`` is a 3-tuple or the string ``"random"``.
    """

    c0_kind: str = "rigid_only"
    c0_args: tuple = ()
    a0: object = (0.0, 0.0, 1.0)
    momentum: float = None


@dataclass(frozen=True)
class RunConfig:
    l_max: int = 3
    n_rad: int = 4
    families: tuple = (Family.TOROIDAL, Family.POLOIDAL)
    radial: str = "jacobi"
    nu: float = 1.0
    zeta: float = 1.0
    experimental_zero_zeta: bool = False
    solid_lambda: tuple = (0.5, 1.5, 2.5)
    raw_lambda: tuple = None
    n_modes: int = 48
    integrator: IntegratorConfig = field(default_factory=lambda: IntegratorConfig(t_end=200.0))
    initial: InitialSpec = field(default_factory=InitialSpec)
    sample_interval: float = 0.5
    fit_tail: float = 0.5
    csv_path: str = None
    stability_momentum: float = None
    atlas_solid_lambdas: tuple = ()
    atlas_zetas: tuple = ()
    atlas_workers: int = 1
    seed: int = None

    def with_seed(self, seed):
        """Replace the seed of a random ``initial.c0`` preset.

        The seed also drives a random ``initial.a0``.
        """
        init = self.initial
        if init.c0_kind == "random":
            init = replace(init, c0_args=(int(seed),) + tuple(init.c0_args[1:]))
        return replace(self, initial=init, seed=int(seed))

    def params_key(self):
        """Parameters that determine modes and coupling tensors."""
        return {
            "basis": {"l_max": self.l_max, "n_rad": self.n_rad,
                      "families": [f.value for f in self.families], "radial": self.radial},
            "fluid": {"nu": self.nu, "zeta": self.zeta},
            "inertia": {"solid_lambda": list(self.solid_lambda) if self.raw_lambda is None else None,
                        "raw_lambda": list(self.raw_lambda) if self.raw_lambda is not None else None},
            "n_modes": self.n_modes,
        }


def parse_text(text):
    """Raw ``{key: value_string}`` mapping, preserving first-seen order."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {body!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        if not key or any(not part for part in key.split(".")):
            raise ConfigError(f"line {lineno}", f"malformed key {key!r}")
        if key in out:
            raise ConfigError(key, "duplicate key")
        out[key] = value
    return out


def _float(key, s, positive=False, nonneg=False, allow_inf=False):
    try:
        v = float(s)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {s!r}") from None
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        raise ConfigError(key, f"expected a finite number, got {s!r}")
    if positive and not v > 0:
        raise ConfigError(key, f"must be positive, got {s}")
    if nonneg and v < 0:
        raise ConfigError(key, f"must be nonnegative, got {s}")
    return v


def _int(key, s, minimum=None):
    try:
        v = int(s)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {s!r}") from None
    if minimum is not None and v < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {v}")
    return v


def _bool(key, s):
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(key, f"expected true/false, got {s!r}")


def _list(key, s, n=None, **kw):
    parts = [p for p in (x.strip() for x in s.replace(",", " ").split()) if p]
    if n is not None and len(parts) != n:
        raise ConfigError(key, f"expected {n} values, got {len(parts)}")
    return tuple(_float(key, p, **kw) for p in parts)


def _c0(key, s):
    tokens = s.replace(",", " ").split()
    if not tokens:
        raise ConfigError(key, "empty initial condition")
    head = tokens[0].lower()
    if head == "rigid_only":
        if len(tokens) != 1:
            raise ConfigError(key, "rigid_only takes no arguments")
        return "rigid_only", ()
    if head == "single_mode":
        if len(tokens) != 3:
            raise ConfigError(key, "expected 'single_mode <index> <amplitude>'")
        return "single_mode", (_int(key, tokens[1], 0), _float(key, tokens[2]))
    if head == "random":
        if len(tokens) != 3:
            raise ConfigError(key, "expected 'random <seed> <amplitude>'")
        seed = _int(key, tokens[1], 0)
        if seed >= 2**64:
            raise ConfigError(key, "seed must fit in 64 bits")
        return "random", (seed, _float(key, tokens[2], nonneg=True))
    return "explicit", _list(key, s)


_KEYS = {
    "basis.l_max", "basis.n_rad", "basis.families", "basis.radial",
    "fluid.nu", "fluid.zeta", "fluid.experimental_zero_zeta",
    "inertia.solid_lambda", "inertia.raw_lambda",
    "modes.n_modes",
    "integrator.scheme", "integrator.rel_tol", "integrator.abs_tol", "integrator.t_end",
    "integrator.max_step", "integrator.equilibrium_eps",
    "initial.c0", "initial.a0", "initial.momentum",
    "outputs.sample_interval", "outputs.fit_tail", "outputs.csv",
    "stability.momentum",
    "atlas.solid_lambdas", "atlas.zetas", "atlas.workers",
}


def parse_config(text, base_dir=None):
    """Validate configuration text into a :class:`RunConfig`."""
    raw = parse_text(text)
    for key in raw:
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
    kw = {}
    g = raw.get

    if "basis.l_max" in raw:
        kw["l_max"] = _int("basis.l_max", g("basis.l_max"), 1)
    if "basis.n_rad" in raw:
        kw["n_rad"] = _int("basis.n_rad", g("basis.n_rad"), 1)
    if "basis.families" in raw:
        fams = []
        for tok in g("basis.families").replace(",", " ").split():
            try:
                fams.append(Family(tok.lower()))
            except ValueError:
                raise ConfigError("basis.families", f"unknown family {tok!r}") from None
        if not fams:
            raise ConfigError("basis.families", "at least one family is required")
        kw["families"] = tuple(sorted(set(fams), key=lambda f: f is Family.POLOIDAL))
    if "basis.radial" in raw:
        if g("basis.radial") not in RADIAL_FAMILIES:
            raise ConfigError("basis.radial", f"expected one of {RADIAL_FAMILIES}")
        kw["radial"] = g("basis.radial")

    if "fluid.nu" in raw:
        kw["nu"] = _float("fluid.nu", g("fluid.nu"), positive=True)
    zero_ok = _bool("fluid.experimental_zero_zeta", g("fluid.experimental_zero_zeta", "false"))
    kw["experimental_zero_zeta"] = zero_ok
    if "fluid.zeta" in raw:
        kw["zeta"] = _float("fluid.zeta", g("fluid.zeta"), nonneg=True)
        if kw["zeta"] == 0 and not zero_ok:
            raise ConfigError("fluid.zeta", "must be positive (zero needs fluid.experimental_zero_zeta)")

    if "inertia.solid_lambda" in raw:
        kw["solid_lambda"] = _list("inertia.solid_lambda", g("inertia.solid_lambda"), 3, nonneg=True)
    if "inertia.raw_lambda" in raw:
        kw["raw_lambda"] = _list("inertia.raw_lambda", g("inertia.raw_lambda"), 3, positive=True)

    if "modes.n_modes" in raw:
        kw["n_modes"] = _int("modes.n_modes", g("modes.n_modes"), 0)

    integ = {}
    if "integrator.scheme" in raw:
        try:
            integ["scheme"] = Scheme(g("integrator.scheme").lower())
        except ValueError:
            raise ConfigError("integrator.scheme", f"expected one of {[s.value for s in Scheme]}") from None
    for name in ("rel_tol", "abs_tol", "t_end", "equilibrium_eps"):
        if f"integrator.{name}" in raw:
            integ[name] = _float(f"integrator.{name}", g(f"integrator.{name}"), positive=True)
    if "integrator.max_step" in raw:
        integ["max_step"] = _float("integrator.max_step", g("integrator.max_step"), positive=True, allow_inf=True)
    kw["integrator"] = IntegratorConfig(**{"t_end": 200.0, **integ})

    init = {}
    if "initial.c0" in raw:
        init["c0_kind"], init["c0_args"] = _c0("initial.c0", g("initial.c0"))
    if "initial.a0" in raw:
        s = g("initial.a0").strip()
        init["a0"] = "random" if s.lower() == "random" else _list("initial.a0", s, 3)
    if "initial.momentum" in raw:
        init["momentum"] = _float("initial.momentum", g("initial.momentum"), positive=True)
    kw["initial"] = InitialSpec(**init)
    if kw["initial"].momentum is None and kw["initial"].a0 == "random":
        raise ConfigError("initial.momentum", "required when initial.a0 = random")

    if "outputs.sample_interval" in raw:
        kw["sample_interval"] = _float("outputs.sample_interval", g("outputs.sample_interval"), positive=True)
    if "outputs.fit_tail" in raw:
        ft = _float("outputs.fit_tail", g("outputs.fit_tail"))
        if not 0 < ft < 1:
            raise ConfigError("outputs.fit_tail", "must lie in (0, 1)")
        kw["fit_tail"] = ft
    if "outputs.csv" in raw:
        p = Path(g("outputs.csv"))
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        kw["csv_path"] = str(p)

    if "stability.momentum" in raw:
        kw["stability_momentum"] = _float("stability.momentum", g("stability.momentum"), positive=True)

    if "atlas.solid_lambdas" in raw:
        triples = [t for t in g("atlas.solid_lambdas").split(";") if t.strip()]
        if not triples:
            raise ConfigError("atlas.solid_lambdas", "empty sweep")
        kw["atlas_solid_lambdas"] = tuple(_list("atlas.solid_lambdas", t, 3, nonneg=True) for t in triples)
    if "atlas.zetas" in raw:
        zs = _list("atlas.zetas", g("atlas.zetas"), positive=True)
        if not zs:
            raise ConfigError("atlas.zetas", "empty sweep")
        kw["atlas_zetas"] = zs
    if "atlas.workers" in raw:
        kw["atlas_workers"] = _int("atlas.workers", g("atlas.workers"), 1)

    cfg = RunConfig(**kw)
    _cross_check(cfg)
    return cfg


def _cross_check(cfg):
    per_l = sum(2 * l + 1 for l in range(1, cfg.l_max + 1))
    n_basis = per_l * cfg.n_rad * len(cfg.families)
    if cfg.n_modes > n_basis:
        raise ConfigError("modes.n_modes", f"exceeds basis size {n_basis}")
    lam = cfg.raw_lambda or cfg.solid_lambda
    if cfg.raw_lambda is None:
        fluid = 8.0 * math.pi / 15.0
        tot = [x + fluid for x in lam]
        for i in range(3):
            if tot[(i + 1) % 3] + tot[(i + 2) % 3] < tot[i]:
                raise ConfigError("inertia.solid_lambda", "total moments violate the triangle inequality")
    init = cfg.initial
    if init.c0_kind == "single_mode" and init.c0_args[0] >= max(cfg.n_modes, 1):
        raise ConfigError("initial.c0", f"mode index {init.c0_args[0]} out of range for {cfg.n_modes} modes")
    if init.c0_kind == "explicit" and len(init.c0_args) != cfg.n_modes:
        raise ConfigError("initial.c0", f"expected {cfg.n_modes} coefficients, got {len(init.c0_args)}")
    if init.c0_kind != "rigid_only" and cfg.n_modes == 0:
        raise ConfigError("initial.c0", "fluid initial data needs modes.n_modes >= 1")
    if init.a0 != "random" and init.momentum is not None and not any(init.a0):
        raise ConfigError("initial.a0", "cannot rescale a zero vector to the requested momentum")


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)
