"""Domain types and predicates for the max-value slot auction model.

An auction instance is a triple of n-by-k rational matrices over n bidders
and k slots:

* ``v[i][j]`` -- how much slot j is worth to bidder i (per impression),
* ``m[i][j]`` -- the most bidder i is able and willing to pay for slot j,
* ``r[i][j]`` -- the seller's minimum (reserve) price for that pair.

A bidder signals no interest in a slot with a negative maximum price,
canonically -1.  Every quantity in this package is an exact rational
(`fractions.Fraction`); nothing ever rounds, because the solver and the
oracles rely on exact equality tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

Scalar = Fraction

ScalarLike = Union[Fraction, int, str]

NOT_INTERESTED = Fraction(-1)

# Payoff of a bidder matched above her maximum price.  Only the sign matters:
# it is only ever compared against payoffs that are >= 0.
OVER_MAX_PAYOFF = Fraction(-1)


def as_scalar(value: ScalarLike) -> Fraction:
    """Convert ``value`` to an exact Fraction.

    Accepts ints, Fractions, and strings in decimal ("0.25") or rational
    ("1/4") form.  Floats are rejected: accepting one would smuggle binary
    rounding error into an exact computation.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not valid scalars")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse {value!r} as an exact rational") from exc
    raise TypeError(
        f"expected int, str or Fraction, got {type(value).__name__}"
        + (" (convert floats to strings explicitly)" if isinstance(value, float) else "")
    )


def scalar_matrix(rows: Iterable[Iterable[ScalarLike]]) -> tuple[tuple[Fraction, ...], ...]:
    """Convert a nested iterable into an immutable matrix of Fractions."""
    out = tuple(tuple(as_scalar(x) for x in row) for row in rows)
    if out and any(len(row) != len(out[0]) for row in out):
        raise ValueError("matrix rows have unequal lengths")
    return out


class ValidationError(ValueError):
    """An auction instance violates a model constraint.

    Attributes:
        rule    short name of the violated constraint
        bidder  1-based bidder index of the first offending pair
        slot    1-based slot index of the first offending pair
    """

    rule = "invalid"

    def __init__(self, bidder: int, slot: int, message: str):
        super().__init__(f"{self.rule} at bidder {bidder}, slot {slot}: {message}")
        self.bidder = bidder
        self.slot = slot


class NegativeReserve(ValidationError):
    rule = "NegativeReserve"


class NegativeValue(ValidationError):
    rule = "NegativeValue"


class MaxExceedsValue(ValidationError):
    rule = "MaxExceedsValue"


class AmbiguousInterest(ValidationError):
    """0 <= m < r: neither a valid interested bid nor the negative sentinel."""

    rule = "AmbiguousInterest"


@dataclass(frozen=True)
class AuctionInstance:
    """An auction over n bidders and k slots: the matrices (v, m, r).

    Bidder and slot indices are 1-based everywhere in the public API; the
    raw matrices are ordinary 0-based tuples.
    """

    v: tuple[tuple[Fraction, ...], ...]
    m: tuple[tuple[Fraction, ...], ...]
    r: tuple[tuple[Fraction, ...], ...]

    @property
    def n(self) -> int:
        return len(self.v)

    @property
    def k(self) -> int:
        return len(self.v[0]) if self.v else 0

    def value(self, i: int, j: int) -> Fraction:
        return self.v[i - 1][j - 1]

    def max_price(self, i: int, j: int) -> Fraction:
        return self.m[i - 1][j - 1]

    def reserve(self, i: int, j: int) -> Fraction:
        return self.r[i - 1][j - 1]

    def interested(self, i: int, j: int) -> bool:
        """True iff bidder i placed a valid bid on slot j (m >= r)."""
        return self.m[i - 1][j - 1] >= self.r[i - 1][j - 1]

    def bidders(self) -> range:
        return range(1, self.n + 1)

    def slots(self) -> range:
        return range(1, self.k + 1)

    def max_value(self) -> Fraction:
        """Largest value entry; 0 for a degenerate empty instance."""
        return max((x for row in self.v for x in row), default=Fraction(0))


def make_instance(
    v: Iterable[Iterable[ScalarLike]],
    m: Iterable[Iterable[ScalarLike]],
    r: Iterable[Iterable[ScalarLike]],
    *,
    validate: bool = True,
) -> AuctionInstance:
    """Build an AuctionInstance from scalar-like matrices.

    Any negative maximum price is canonicalized to the -1 sentinel so that
    equality-based reasoning sees a single "not interested" representation.
    Set ``validate=False`` to construct a deliberately invalid instance
    (useful for exercising the validator).
    """
    vm = scalar_matrix(v)
    mm = scalar_matrix(m)
    rm = scalar_matrix(r)
    if not (len(vm) == len(mm) == len(rm)):
        raise ValueError("v, m, r must have the same number of rows")
    if vm and not (len(vm[0]) == len(mm[0]) == len(rm[0])):
        raise ValueError("v, m, r must have the same number of columns")
    mm = tuple(
        tuple(NOT_INTERESTED if x < 0 else x for x in row) for row in mm
    )
    inst = AuctionInstance(vm, mm, rm)
    if validate:
        validate_instance(inst)
    return inst


def validate_instance(inst: AuctionInstance) -> None:
    """Check the model's sign and ordering constraints.

    Raises the ValidationError subclass for the first offending pair, in
    row-major scan order: reserves and values must be nonnegative, maximum
    prices must not exceed values, and every pair must either be interested
    (m >= r) or carry a negative maximum price.
    """
    for i0, (vrow, mrow, rrow) in enumerate(zip(inst.v, inst.m, inst.r)):
        for j0, (vv, mm, rr) in enumerate(zip(vrow, mrow, rrow)):
            i, j = i0 + 1, j0 + 1
            if rr < 0:
                raise NegativeReserve(i, j, f"reserve {rr} < 0")
            if vv < 0:
                raise NegativeValue(i, j, f"value {vv} < 0")
            if mm > vv:
                raise MaxExceedsValue(i, j, f"maximum price {mm} > value {vv}")
            if 0 <= mm < rr:
                raise AmbiguousInterest(
                    i, j, f"0 <= {mm} < reserve {rr}; use a negative maximum to opt out"
                )


@dataclass(frozen=True)
class Matching:
    """A candidate outcome: utilities, prices, and an injective pairing.

    ``pairs`` holds 1-based (bidder, slot) pairs; no bidder or slot may
    appear twice.  Utilities and prices are componentwise nonnegative.
    """

    u: tuple[Fraction, ...]
    p: tuple[Fraction, ...]
    pairs: frozenset[tuple[int, int]]

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(as_scalar(x) for x in self.u))
        object.__setattr__(self, "p", tuple(as_scalar(x) for x in self.p))
        object.__setattr__(self, "pairs", frozenset(self.pairs))
        if any(x < 0 for x in self.u):
            raise ValueError("utilities must be nonnegative")
        if any(x < 0 for x in self.p):
            raise ValueError("prices must be nonnegative")
        bidders = [i for i, _ in self.pairs]
        slots = [j for _, j in self.pairs]
        if len(set(bidders)) != len(bidders) or len(set(slots)) != len(slots):
            raise ValueError("pairs must not repeat a bidder or a slot")
        n, k = len(self.u), len(self.p)
        for i, j in self.pairs:
            if not (1 <= i <= n and 1 <= j <= k):
                raise ValueError(f"pair ({i}, {j}) out of range for {n} bidders, {k} slots")

    @property
    def n(self) -> int:
        return len(self.u)

    @property
    def k(self) -> int:
        return len(self.p)

    def slot_of(self, i: int) -> Optional[int]:
        for bi, sj in self.pairs:
            if bi == i:
                return sj
        return None

    def bidder_of(self, j: int) -> Optional[int]:
        for bi, sj in self.pairs:
            if sj == j:
                return bi
        return None

    def utility_of(self, i: int) -> Fraction:
        return self.u[i - 1]

    def price_of(self, j: int) -> Fraction:
        return self.p[j - 1]


@dataclass(frozen=True)
class FeasibilityReport:
    """Boolean verdict plus the first violation found, if any."""

    ok: bool
    reason: Optional[str] = None

    def __bool__(self) -> bool:
        return self.ok


def is_feasible(inst: AuctionInstance, match: Matching) -> FeasibilityReport:
    """Check feasibility of ``match`` for ``inst``.

    Feasible means: every matched pair (i, j) has its price inside
    [r[i][j], m[i][j]] and splits the value exactly (u_i + p_j = v_ij), and
    every unmatched bidder has zero utility, every unmatched slot zero price.
    """
    if match.n != inst.n or match.k != inst.k:
        return FeasibilityReport(False, "dimension mismatch with instance")
    for i, j in sorted(match.pairs):
        price = match.price_of(j)
        if price < inst.reserve(i, j):
            return FeasibilityReport(
                False, f"pair ({i}, {j}): price {price} below reserve {inst.reserve(i, j)}"
            )
        if price > inst.max_price(i, j):
            return FeasibilityReport(
                False, f"pair ({i}, {j}): price {price} above maximum {inst.max_price(i, j)}"
            )
        if match.utility_of(i) + price != inst.value(i, j):
            return FeasibilityReport(
                False,
                f"pair ({i}, {j}): utility {match.utility_of(i)} + price {price} "
                f"!= value {inst.value(i, j)}",
            )
    matched_bidders = {i for i, _ in match.pairs}
    matched_slots = {j for _, j in match.pairs}
    for i in inst.bidders():
        if i not in matched_bidders and match.utility_of(i) != 0:
            return FeasibilityReport(False, f"unmatched bidder {i} has utility {match.utility_of(i)}")
    for j in inst.slots():
        if j not in matched_slots and match.price_of(j) != 0:
            return FeasibilityReport(False, f"unmatched slot {j} has price {match.price_of(j)}")
    return FeasibilityReport(True)


@dataclass(frozen=True)
class BlockingPair:
    """A bidder-slot pair at which all three stability inequalities fail.

    The gap fields record by how much each inequality fails; all three are
    strictly positive by construction.
    """

    bidder: int
    slot: int
    value_gap: Fraction     # v - u - p
    max_price_gap: Fraction  # m - p
    reserve_gap: Fraction   # v - u - r


def blocking_pairs(inst: AuctionInstance, match: Matching) -> list[BlockingPair]:
    """Return every blocking pair of ``match``, in row-major order.

    A pair (i, j) blocks when all of the following fail:
    u_i + p_j >= v_ij, p_j >= m_ij, and u_i + r_ij >= v_ij.  An empty result
    means the matching is stable.  Not-interested pairs never block because
    their negative maximum price satisfies p_j >= m_ij outright.
    """
    found = []
    for i in inst.bidders():
        ui = match.utility_of(i)
        for j in inst.slots():
            pj = match.price_of(j)
            vij = inst.value(i, j)
            mij = inst.max_price(i, j)
            rij = inst.reserve(i, j)
            if ui + pj < vij and pj < mij and ui + rij < vij:
                found.append(
                    BlockingPair(i, j, vij - ui - pj, mij - pj, vij - ui - rij)
                )
    return found


def is_stable(inst: AuctionInstance, match: Matching) -> bool:
    return not blocking_pairs(inst, match)


def true_payoff(
    v_row: Sequence[ScalarLike],
    m_row: Sequence[ScalarLike],
    outcome: Optional[int],
    price: ScalarLike = 0,
) -> Fraction:
    """Evaluate a bidder's actual payoff for an offered outcome.

    Args:
        v_row:   the bidder's true per-slot values.
        m_row:   the bidder's true per-slot maximum prices.
        outcome: 1-based slot index, or None if unmatched.
        price:   the per-impression price charged (ignored when unmatched).

    Matched at or below the maximum price the payoff is value minus price;
    above the maximum it drops discontinuously to -1; unmatched pays and
    receives nothing.
    """
    if outcome is None:
        return Fraction(0)
    vj = as_scalar(v_row[outcome - 1])
    mj = as_scalar(m_row[outcome - 1])
    pr = as_scalar(price)
    if pr > mj:
        return OVER_MAX_PAYOFF
    return vj - pr
