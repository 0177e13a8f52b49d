"""Run configuration: a flat ``key = value`` file format and its schema.

Grammar
-------
One assignment per line, ``key = value``.  ``#`` starts a comment (whole
line or trailing); blank lines are ignored.  Keys are case-sensitive.
Values keep interior whitespace but are stripped at both ends.  The value
``none`` (any case) clears an optional key.

Recognized keys
---------------
``command``            fit | path | simulate | diagnose
``family``             time_varying | index_vc | additive
``csv``                path of a dataset file (fit / path only)
``n``                  sample size drawn per replication (simulated sources)
``p``                  number of covariates (simulated sources)
``q``                  size of the leading correlated covariate block
``rho``                copula autocorrelation of the correlated block
``baseline``           constant baseline hazard of the generator
``censor_rate``        exponential censoring rate, or ``none`` to disable
``g0``                 index-intercept function (index_vc only)
``g1`` .. ``g<p>``     coefficient function of each covariate
``L``                  basis size
``order``              spline order (degree + 1; 3 = quadratic)
``penalty``            p1 | ph | group
``lambda``             penalty level (ignored by ``path``)
``penalize_index_intercept``  true | false
``t_lambda``           selection threshold applied after fitting
``replications``       number of simulate replications
``seed``               master RNG seed
``threads``            worker threads; 0 = one per CPU, 1 = serial
``out_dir``            directory that receives the run's output files
``groups``             score-table covariate groups, e.g. ``1-2,3-4,5-8,9-400``
``path_count``         number of path points (path only)
``path_ratio``         smallest path lambda as a fraction of lambda_max
``tol``                solver relative-objective tolerance
``kkt_tol``            solver stationarity tolerance
``max_iter``           solver iteration cap
``xi``                 regime split constant of the oracle check (diagnose)
``cone_samples``       sampled cone directions for curvature brackets
``cone_polish``        local polish rounds for curvature brackets
``grid_points``        grid resolution of emitted function tables

Every run writes its fully-resolved configuration (all keys explicit) next
to its outputs; feeding that file back through the same command reproduces
the outputs byte for byte.
"""

from __future__ import annotations

import dataclasses
import re
from pathlib import Path

from .data import Family, GFunction, ZERO_G, parse_g_function

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "serialize_config",
    "load_config",
    "save_config",
]

COMMANDS = ("fit", "path", "simulate", "diagnose")

_LINE = re.compile(r"^([A-Za-z][A-Za-z0-9_]*)\s*=\s*(.*)$")
_G_KEY = re.compile(r"^g([0-9]+)$")
_RANGE = re.compile(r"^(\d+)(?:-(\d+))?$")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent run configurations."""


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """A fully-resolved run description.

    Instances are plain values: two configs compare equal exactly when
    they describe the same run, and ``parse_config(serialize_config(c))``
    returns a config equal to ``c``.
    """

    command: str
    family: Family
    csv: str | None = None
    n: int = 300
    p: int | None = None
    q: int = 0
    rho: float = 0.3
    baseline: float = 0.5
    censor_rate: float | None = None
    coef_functions: tuple[tuple[int, GFunction], ...] = ()
    index_intercept: GFunction = ZERO_G
    L: int = 6
    order: int = 3
    penalty: str = "p1"
    lam: float | None = None
    penalize_index_intercept: bool = False
    t_lambda: float = 0.1
    replications: int = 100
    seed: int = 20260819
    threads: int = 0
    out_dir: str = ""
    groups: tuple[tuple[int, int], ...] | None = None
    path_count: int = 50
    path_ratio: float = 0.01
    tol: float = 1e-8
    kkt_tol: float = 1e-4
    max_iter: int = 5000
    xi: float = 0.5
    cone_samples: int = 2000
    cone_polish: int = 200
    grid_points: int = 200

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(
                f"command must be one of {', '.join(COMMANDS)}; got {self.command!r}"
            )
        if not isinstance(self.family, Family):
            object.__setattr__(self, "family", Family(self.family))
        simulated = self.csv is None
        if self.command in ("simulate", "diagnose") and not simulated:
            raise ConfigError(f"{self.command} runs generate their own data; drop csv")
        if simulated:
            if self.p is None:
                raise ConfigError("p is required when no csv dataset is given")
            if self.p < 1:
                raise ConfigError("p must be >= 1")
            if not 0 <= self.q <= self.p:
                raise ConfigError(f"q must lie in [0, p]; got q={self.q}, p={self.p}")
            if self.n < 1:
                raise ConfigError("n must be >= 1")
        for j, _ in self.coef_functions:
            if self.p is not None and not 1 <= j <= self.p:
                raise ConfigError(f"coefficient key g{j} outside 1..{self.p}")
        if self.coef_functions and not simulated:
            raise ConfigError("coefficient functions describe simulated data; drop csv")
        if (
            not self.index_intercept.is_zero
            and self.family is not Family.INDEX_VC
        ):
            raise ConfigError("g0 applies to the index_vc family only")
        if self.L < 2:
            raise ConfigError("basis size L must be >= 2")
        if self.order < 1:
            raise ConfigError("spline order must be >= 1")
        if self.penalty not in ("p1", "ph", "group"):
            raise ConfigError(
                f"penalty must be p1, ph, or group; got {self.penalty!r}"
            )
        if self.lam is None and self.command in ("fit", "simulate", "diagnose"):
            raise ConfigError(f"{self.command} runs need an explicit lambda")
        if self.lam is not None and self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.t_lambda < 0:
            raise ConfigError("t_lambda must be >= 0")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.threads < 0:
            raise ConfigError("threads must be >= 0")
        if self.path_count < 2:
            raise ConfigError("path_count must be >= 2")
        if not 0 < self.path_ratio < 1:
            raise ConfigError("path_ratio must lie in (0, 1)")
        if self.tol <= 0 or self.kkt_tol <= 0:
            raise ConfigError("tol and kkt_tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not 0 < self.xi < 1:
            raise ConfigError("xi must lie in (0, 1)")
        if self.cone_samples < 1 or self.cone_polish < 0:
            raise ConfigError("cone_samples must be >= 1 and cone_polish >= 0")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be >= 2")
        if not self.out_dir:
            object.__setattr__(self, "out_dir", f"runs/{self.command}")
        if self.groups is None and self.command == "simulate":
            object.__setattr__(self, "groups", _default_groups(self.p, self.q))
        if self.groups is not None:
            covered: list[int] = []
            for lo, hi in self.groups:
                if lo > hi:
                    raise ConfigError(f"empty covariate range {lo}-{hi}")
                covered.extend(range(lo, hi + 1))
            if self.p is not None and sorted(covered) != list(
                range(1, self.p + 1)
            ):
                raise ConfigError(
                    f"groups must partition 1..{self.p} without overlap"
                )

    # -- derived objects ----------------------------------------------------

    def truth_spec(self):
        """The data-generating truth described by this config."""
        from .data import TruthSpec

        if self.csv is not None:
            raise ConfigError("config reads a csv dataset; it has no truth spec")
        return TruthSpec(
            family=self.family,
            p=self.p,
            q=self.q,
            rho=self.rho,
            baseline=self.baseline,
            censor_rate=self.censor_rate,
            coef_functions=dict(self.coef_functions),
            index_intercept=self.index_intercept,
        )

    def penalty_spec(self, lam: float | None = None):
        """The penalty to fit with (``lam`` overrides the configured level)."""
        from .solver import PenaltySpec

        level = self.lam if lam is None else lam
        return PenaltySpec(kind=self.penalty, lam=0.0 if level is None else level)

    def grouping(self) -> tuple[tuple[int, ...], ...]:
        """Score-table groups expanded to explicit covariate tuples."""
        if self.groups is None:
            raise ConfigError("no covariate groups configured")
        return tuple(tuple(range(lo, hi + 1)) for lo, hi in self.groups)

    def group_labels(self) -> tuple[str, ...]:
        if self.groups is None:
            raise ConfigError("no covariate groups configured")
        return tuple(
            f"X{lo}" if lo == hi else f"X{lo}-X{hi}" for lo, hi in self.groups
        )


def _default_groups(p: int, q: int) -> tuple[tuple[int, int], ...]:
    """Scorecard groups: the classic 2/2/rest-of-q/noise split when it fits."""
    if p > 4 and q > 4:
        return ((1, 2), (3, 4), (5, q), (q + 1, p))
    return tuple((j, j) for j in range(1, p + 1))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key} expects an integer; got {raw!r}") from None


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} expects a number; got {raw!r}") from None


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    raise ConfigError(f"{key} expects true or false; got {raw!r}")


def _parse_groups(raw: str) -> tuple[tuple[int, int], ...]:
    out = []
    for part in raw.split(","):
        part = part.strip()
        m = _RANGE.match(part)
        if m is None:
            raise ConfigError(f"bad covariate range {part!r} in groups")
        lo = int(m.group(1))
        hi = int(m.group(2)) if m.group(2) else lo
        out.append((lo, hi))
    return tuple(out)


_INT_KEYS = {
    "n": "n",
    "p": "p",
    "q": "q",
    "L": "L",
    "order": "order",
    "replications": "replications",
    "seed": "seed",
    "threads": "threads",
    "path_count": "path_count",
    "max_iter": "max_iter",
    "cone_samples": "cone_samples",
    "cone_polish": "cone_polish",
    "grid_points": "grid_points",
}
_FLOAT_KEYS = {
    "rho": "rho",
    "baseline": "baseline",
    "lambda": "lam",
    "t_lambda": "t_lambda",
    "path_ratio": "path_ratio",
    "tol": "tol",
    "kkt_tol": "kkt_tol",
    "xi": "xi",
}
_STR_KEYS = {"command": "command", "csv": "csv", "penalty": "penalty", "out_dir": "out_dir"}
_OPTIONAL = {"csv", "censor_rate", "groups", "p", "lambda"}


def parse_config(text: str) -> RunConfig:
    """Parse configuration text into a validated :class:`RunConfig`."""
    fields: dict[str, object] = {}
    coef: dict[int, GFunction] = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if m is None:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {rawline!r}")
        key, raw = m.group(1), m.group(2).strip()
        if key in _OPTIONAL and raw.lower() == "none":
            continue
        gm = _G_KEY.match(key)
        if gm is not None:
            j = int(gm.group(1))
            try:
                g = parse_g_function(raw)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from None
            if j == 0:
                fields["index_intercept"] = g
            elif j in coef:
                raise ConfigError(f"line {lineno}: duplicate key g{j}")
            else:
                coef[j] = g
            continue
        if key in fields:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        if key in _INT_KEYS:
            fields[_INT_KEYS[key]] = _parse_int(key, raw)
        elif key in _FLOAT_KEYS:
            fields[_FLOAT_KEYS[key]] = _parse_float(key, raw)
        elif key in _STR_KEYS:
            fields[_STR_KEYS[key]] = raw
        elif key == "family":
            try:
                fields["family"] = Family(raw)
            except ValueError:
                raise ConfigError(
                    f"line {lineno}: unknown family {raw!r}"
                ) from None
        elif key == "censor_rate":
            fields["censor_rate"] = _parse_float(key, raw)
        elif key == "penalize_index_intercept":
            fields["penalize_index_intercept"] = _parse_bool(key, raw)
        elif key == "groups":
            fields["groups"] = _parse_groups(raw)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if "command" not in fields:
        raise ConfigError("missing required key: command")
    if "family" not in fields:
        raise ConfigError("missing required key: family")
    fields["coef_functions"] = tuple(sorted(coef.items()))
    try:
        return RunConfig(**fields)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def serialize_config(config: RunConfig) -> str:
    """Render a config with every key explicit, ready to rerun."""
    lines = [
        f"command = {config.command}",
        f"family = {config.family}",
    ]
    if config.csv is not None:
        lines.append(f"csv = {config.csv}")
    else:
        lines.append(f"n = {config.n}")
        lines.append(f"p = {config.p}")
        lines.append(f"q = {config.q}")
        lines.append(f"rho = {config.rho!r}")
        lines.append(f"baseline = {config.baseline!r}")
        lines.append(
            "censor_rate = none"
            if config.censor_rate is None
            else f"censor_rate = {config.censor_rate!r}"
        )
        if not config.index_intercept.is_zero:
            lines.append(f"g0 = {config.index_intercept}")
        for j, g in config.coef_functions:
            lines.append(f"g{j} = {g}")
    lines.append(f"L = {config.L}")
    lines.append(f"order = {config.order}")
    lines.append(f"penalty = {config.penalty}")
    lines.append(
        "lambda = none" if config.lam is None else f"lambda = {config.lam!r}"
    )
    lines.append(
        f"penalize_index_intercept = {'true' if config.penalize_index_intercept else 'false'}"
    )
    lines.append(f"t_lambda = {config.t_lambda!r}")
    lines.append(f"replications = {config.replications}")
    lines.append(f"seed = {config.seed}")
    lines.append(f"threads = {config.threads}")
    lines.append(f"out_dir = {config.out_dir}")
    if config.groups is not None:
        ranges = ",".join(
            f"{lo}" if lo == hi else f"{lo}-{hi}" for lo, hi in config.groups
        )
        lines.append(f"groups = {ranges}")
    lines.append(f"path_count = {config.path_count}")
    lines.append(f"path_ratio = {config.path_ratio!r}")
    lines.append(f"tol = {config.tol!r}")
    lines.append(f"kkt_tol = {config.kkt_tol!r}")
    lines.append(f"max_iter = {config.max_iter}")
    lines.append(f"xi = {config.xi!r}")
    lines.append(f"cone_samples = {config.cone_samples}")
    lines.append(f"cone_polish = {config.cone_polish}")
    lines.append(f"grid_points = {config.grid_points}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    """Read and parse a config file; missing files surface the path."""
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from None


def save_config(config: RunConfig, path) -> None:
    """Write the fully-resolved form of ``config`` to ``path``."""
    Path(path).write_text(serialize_config(config))
