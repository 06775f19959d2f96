"""Model specification: covariate roles, lag groupings, and moment enumeration.

The mean model distinguishes a contemporaneous coefficient from grouped-lag
coefficients: every covariate has block {0} (its own coefficient) plus zero
or more blocks of consecutive lags that share one coefficient.  The block
regressor is the sum of the covariate's values at the block's observable
lags.  Three stock groupings:

* ``aggregated``                one coefficient per covariate (block {0} only)
* ``semi:first-lag-separate``   blocks {0}, {1}, {2..T-1}
* ``full``                      one block per lag: {0}, {1}, ..., {T-1}

Covariate roles determine which (derivative time s, residual time t) pairs
give valid moment conditions:

* Type I    exogenous; uncorrelated with past and future outcomes -> all (s, t)
* Type II   may depend on past outcomes only -> s <= t
* Type III  feedback from the outcome process -> s == t only
* time-invariant  constant in t; treated like Type I, lag blocks disallowed
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .data import LongitudinalDataset, OutcomeKind
from .errors import LagOutOfRange, SpecError, Underidentified


class Link(Enum):
    IDENTITY = "identity"
    LOGIT = "logit"


class CovariateClass(Enum):
    TYPE_I = "type1"
    TYPE_II = "type2"
    TYPE_III = "type3"
    TIME_INVARIANT = "invariant"

    @classmethod
    def parse(cls, raw: str) -> "CovariateClass":
        key = raw.strip().lower().replace("-", "").replace("_", "").replace(" ", "")
        aliases = {
            "type1": cls.TYPE_I,
            "typei": cls.TYPE_I,
            "1": cls.TYPE_I,
            "type2": cls.TYPE_II,
            "typeii": cls.TYPE_II,
            "2": cls.TYPE_II,
            "type3": cls.TYPE_III,
            "typeiii": cls.TYPE_III,
            "3": cls.TYPE_III,
            "invariant": cls.TIME_INVARIANT,
            "timeinvariant": cls.TIME_INVARIANT,
        }
        if key not in aliases:
            raise SpecError(f"unknown covariate class {raw!r}")
        return aliases[key]


GROUPING_SHORTCUTS = ("aggregated", "semi:first-lag-separate", "full")


@dataclass(frozen=True)
class LagGrouping:
    """Partition of lag indices into coefficient blocks.

    ``blocks[0]`` is always the singleton ``(0,)`` (the contemporaneous
    coefficient).  The remaining blocks are disjoint runs of consecutive
    lags in increasing order; lags left out of every block contribute
    neither mean terms nor moment conditions.
    """

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(k) for k in block) for block in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks or blocks[0] != (0,):
            raise SpecError("lag grouping must start with the singleton block (0,)")
        previous_max = 0
        for block in blocks[1:]:
            if not block:
                raise SpecError("lag blocks must be non-empty")
            if block[0] <= previous_max:
                raise SpecError("lag blocks must be disjoint and in increasing lag order")
            if any(b - a != 1 for a, b in zip(block, block[1:])):
                raise SpecError(f"lag block {block} is not a run of consecutive lags")
            previous_max = block[-1]

    @classmethod
    def of(cls, *blocks: Iterable[int]) -> "LagGrouping":
        return cls(tuple(tuple(block) for block in blocks))

    @classmethod
    def shortcut(cls, name: str, n_times: int) -> "LagGrouping":
        """Expand one of the named stock groupings for a panel of length T."""
        if name == "aggregated":
            return cls.of((0,))
        if name == "full":
            return cls.of(*[(k,) for k in range(n_times)])
        if name == "semi:first-lag-separate":
            if n_times <= 2:
                return cls.of((0,), (1,))
            return cls.of((0,), (1,), tuple(range(2, n_times)))
        raise SpecError(f"unknown grouping shortcut {name!r}")

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def max_lag(self) -> int:
        return max(block[-1] for block in self.blocks)


@dataclass(frozen=True)
class CovariateModel:
    """Role classification plus lag grouping for one covariate."""

    klass: CovariateClass
    grouping: LagGrouping

    def __post_init__(self):
        if self.klass is CovariateClass.TIME_INVARIANT and self.grouping.blocks != ((0,),):
            raise SpecError(
                "time-invariant covariates admit only the contemporaneous block "
                "(lagged copies of a constant column are identical)"
            )


@dataclass(frozen=True)
class ModelSpec:
    """Link, intercept flag, and per-covariate model settings (ordered)."""

    link: Link
    intercept: bool
    covariates: tuple[tuple[str, CovariateModel], ...]

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        names = [name for name, _ in self.covariates]
        if len(set(names)) != len(names):
            raise SpecError("duplicate covariate name in model spec")
        if self.n_params < 1:
            raise SpecError("model must have at least one parameter")

    @property
    def n_params(self) -> int:
        return int(self.intercept) + sum(cm.grouping.n_blocks for _, cm in self.covariates)

    @property
    def outcome_kind(self) -> OutcomeKind:
        return OutcomeKind.BINARY if self.link is Link.LOGIT else OutcomeKind.CONTINUOUS

    def param_names(self) -> tuple[str, ...]:
        names: list[str] = []
        if self.intercept:
            names.append("(Intercept)")
        for name, cm in self.covariates:
            for block in cm.grouping.blocks:
                if block == (0,):
                    names.append(name)
                elif len(block) == 1:
                    names.append(f"{name} (lag {block[0]})")
                else:
                    names.append(f"{name} (lags {block[0]}-{block[-1]})")
        return tuple(names)


def classify_valid_pairs(klass: CovariateClass, n_times: int) -> frozenset[tuple[int, int]]:
    """Valid (covariate observation time s, residual time t) pairs for a role.

    Times are 1-based.  Type I (and time-invariant): all pairs; Type II:
    s <= t; Type III: s == t.
    """
    if n_times < 2:
        raise SpecError("valid-pair enumeration requires T >= 2")
    ts = range(1, n_times + 1)
    if klass in (CovariateClass.TYPE_I, CovariateClass.TIME_INVARIANT):
        return frozenset((s, t) for s in ts for t in ts)
    if klass is CovariateClass.TYPE_II:
        return frozenset((s, t) for s in ts for t in ts if s <= t)
    return frozenset((t, t) for t in ts)


def validity_matrix(klass: CovariateClass, n_times: int) -> np.ndarray:
    """The T x T boolean validity matrix over (covariate time, residual time)."""
    matrix = np.zeros((n_times, n_times), dtype=bool)
    for s, t in classify_valid_pairs(klass, n_times):
        matrix[s - 1, t - 1] = True
    return matrix


def expand_design(ds: LongitudinalDataset, spec: ModelSpec) -> np.ndarray:
    """Build the block-regressor tensor Z with shape (n, T, p).

    The regressor of covariate j's block B at occasion t is
    ``sum_{k in B, k <= t-1} x_j[i, t-k]`` (empty sums are 0); the block {0}
    regressor is ``x_j[i, t]`` and the intercept regressor is 1.
    """
    n, t_count = ds.n_subjects, ds.n_times
    p = spec.n_params
    z = np.zeros((n, t_count, p))
    col = 0
    if spec.intercept:
        z[:, :, col] = 1.0
        col += 1
    for name, cm in spec.covariates:
        if cm.grouping.max_lag >= t_count:
            raise LagOutOfRange(
                f"covariate {name!r} groups lag {cm.grouping.max_lag}, "
                f"but the panel has only T={t_count} occasions"
            )
        x = ds.covariate(name)
        for block in cm.grouping.blocks:
            for t in range(1, t_count + 1):
                acc = z[:, t - 1, col]
                for k in block:
                    if k <= t - 1:
                        acc += x[:, t - 1 - k]
            col += 1
    return z


@dataclass(frozen=True)
class MomentCondition:
    """One element of the moment vector.

    ``covariate is None`` marks an intercept condition (block empty, s == t).
    Times are 1-based.
    """

    param_index: int
    covariate: str | None
    block: tuple[int, ...]
    s: int
    t: int


@dataclass(frozen=True)
class MomentSystem:
    """Canonically ordered moment conditions for a (T, spec) pair."""

    conditions: tuple[MomentCondition, ...]
    n_params: int
    n_times: int

    @property
    def n_conditions(self) -> int:
        return len(self.conditions)


def build_moment_system(n_times: int, spec: ModelSpec) -> MomentSystem:
    """Enumerate every valid moment condition in canonical order.

    Intercept conditions come first (one per residual time t, with s == t);
    then, per covariate and per block in grouping order, one condition for
    each (s, t) pair such that

    * the block has at least one observable lagged value at the derivative
      time (``min(block) <= s - 1``),
    * the derivative-time pair (s, t) is valid for the covariate's role, and
    * every covariate observation entering the block regressor is itself
      validly paired with the residual time: (s - k, t) valid for each lag
      ``k`` in the block with ``k <= s - 1``.

    The last clause is what restricts a feedback (Type III) covariate to
    genuinely contemporaneous conditions: a lag block's regressor at time s
    reaches covariate values before s, which may not be paired with the
    time-s residual.  For exogenous and past-dependent covariates it is
    implied by the (s, t) clause.  Two calls with identical inputs produce
    identical systems element-by-element.
    """
    conditions: list[MomentCondition] = []
    col = 0
    if spec.intercept:
        for t in range(1, n_times + 1):
            conditions.append(MomentCondition(col, None, (), t, t))
        col += 1
    for name, cm in spec.covariates:
        if cm.grouping.max_lag >= n_times:
            raise LagOutOfRange(
                f"covariate {name!r} groups lag {cm.grouping.max_lag}, "
                f"but the panel has only T={n_times} occasions"
            )
        valid = classify_valid_pairs(cm.klass, n_times)
        for block in cm.grouping.blocks:
            for s in range(1, n_times + 1):
                if block[0] > s - 1:
                    continue
                for t in range(1, n_times + 1):
                    if (s, t) not in valid:
                        continue
                    if all((s - k, t) in valid for k in block if k <= s - 1):
                        conditions.append(MomentCondition(col, name, block, s, t))
            col += 1
    system = MomentSystem(tuple(conditions), spec.n_params, n_times)
    if system.n_conditions < system.n_params:
        raise Underidentified(
            f"underidentified: {system.n_conditions} moment conditions "
            f"for {system.n_params} parameters"
        )
    return system


# ---------------------------------------------------------------------------
# Model specification files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CovariateDecl:
    name: str
    klass: CovariateClass
    blocks: str | tuple[tuple[int, ...], ...]  # shortcut name or explicit blocks


@dataclass(frozen=True)
class ModelSpecDecl:
    """Parsed model-spec file; groupings may still be symbolic shortcuts.

    Call :meth:`resolve` with the panel length to obtain a concrete
    :class:`ModelSpec`.
    """

    link: Link
    intercept: bool
    covariates: tuple[CovariateDecl, ...]

    def resolve(self, n_times: int) -> ModelSpec:
        items = []
        for decl in self.covariates:
            if isinstance(decl.blocks, str):
                grouping = LagGrouping.shortcut(decl.blocks, n_times)
            else:
                grouping = LagGrouping(decl.blocks)
            if decl.klass is CovariateClass.TIME_INVARIANT:
                grouping = LagGrouping.of((0,))
            items.append((decl.name, CovariateModel(decl.klass, grouping)))
        return ModelSpec(self.link, self.intercept, tuple(items))


def _parse_blocks(raw: str) -> str | tuple[tuple[int, ...], ...]:
    raw = raw.strip()
    if raw in GROUPING_SHORTCUTS:
        return raw
    try:
        value = ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        raise SpecError(f"cannot parse blocks declaration {raw!r}") from None
    if not isinstance(value, (list, tuple)):
        raise SpecError(f"blocks must be a list of lag lists, got {raw!r}")
    blocks = []
    for block in value:
        if not isinstance(block, (list, tuple)) or not all(isinstance(k, int) for k in block):
            raise SpecError(f"blocks must be a list of lag lists, got {raw!r}")
        blocks.append(tuple(block))
    return tuple(blocks)


def parse_model_spec(text: str) -> ModelSpecDecl:
    """Parse the key-value model specification format.

    ::

        [model]
        link = identity
        intercept = true

        [covariate:bmi]
        class = type1
        blocks = [[0], [1], [2, 3, 4]]    ; or: aggregated | full | semi:first-lag-separate
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"malformed model spec: {exc}") from None
    if "model" not in parser:
        raise SpecError("model spec must contain a [model] section")
    model = parser["model"]
    link_raw = model.get("link", "identity").strip().lower()
    try:
        link = Link(link_raw)
    except ValueError:
        raise SpecError(f"unknown link {link_raw!r} (expected identity or logit)") from None
    try:
        intercept = model.getboolean("intercept", fallback=True)
    except ValueError:
        raise SpecError("intercept must be a boolean") from None

    covariates = []
    for section in parser.sections():
        if not section.startswith("covariate:"):
            if section != "model":
                raise SpecError(f"unknown section [{section}]")
            continue
        name = section.split(":", 1)[1].strip()
        if not name:
            raise SpecError("covariate section must name the covariate")
        body = parser[section]
        if "class" not in body:
            raise SpecError(f"covariate {name!r} lacks a class declaration")
        klass = CovariateClass.parse(body["class"])
        blocks = _parse_blocks(body.get("blocks", "aggregated"))
        covariates.append(CovariateDecl(name, klass, blocks))
    if not covariates and not intercept:
        raise SpecError("model spec declares no parameters")
    return ModelSpecDecl(link, intercept, tuple(covariates))
