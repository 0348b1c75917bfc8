"""Solver for bidder-optimal stable matchings under min/max price constraints.

The solver is a primal-dual search in the spirit of the Hungarian method.
It starts from an empty matching in which every bidder carries a
deliberately inflated utility, then repeatedly routes a minimum-weight
alternating path from an unmatched bidder through the current matching.
Every path ends in one of three "special" events: a slot price rising to a
reserve price, a slot price rising to some bidder's maximum price, or a
bidder's utility falling to zero.  Applying the path lowers utilities and
raises prices across the searched region and permanently consumes the
path's final special edge, which bounds the run at n*(2k+1) iterations.

All arithmetic is exact.  Internally every quantity is an integer multiple
of 1/D, where D is the least common denominator of the instance entries, so
the hot loop runs on plain Python ints; public surfaces expose Fractions.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from math import lcm
from typing import Optional, Sequence

from .core import (
    AuctionInstance,
    Matching,
    blocking_pairs,
    is_feasible,
    validate_instance,
)

#: 1-based encoding of the dummy slot that terminal edges point at.
DUMMY_SLOT = 0


class EngineError(Exception):
    """Base class for solver failures."""


class NegativeEdgeWeight(EngineError):
    """A traversal edge came out negative: the current state is corrupt."""


class InvariantViolation(EngineError):
    """A state invariant failed after an iteration (bug or degenerate input)."""


class CaseInvariantViolated(EngineError):
    """The matching-update case analysis hit a provably impossible branch."""


class IterationBudgetExceeded(EngineError):
    """The solver ran past n*(2k+1) iterations (bug signal)."""


class EdgeKind(IntEnum):
    """Edge families of the per-iteration search graph.

    The integer values of the three path-ending kinds double as their
    tie-break rank: when path weights tie, reserve-price endings beat
    maximum-price endings beat terminal endings.
    """

    RESERVE_PRICE = 0
    MAX_PRICE = 1
    TERMINAL = 2
    FORWARD = 3
    BACKWARD = 4


@dataclass(frozen=True)
class Edge:
    """One edge of the search graph, in public (1-based, Fraction) form.

    Forward, reserve-price, and maximum-price edges run bidder -> slot;
    backward edges run slot -> bidder; terminal edges run bidder -> the
    dummy slot (``slot == DUMMY_SLOT``).
    """

    kind: EdgeKind
    bidder: int
    slot: int
    weight: Fraction

    def tie_break_key(self) -> tuple[int, int, int]:
        return (int(self.kind), self.bidder, self.slot)


@dataclass(frozen=True)
class _ScaledInstance:
    """Instance matrices rescaled to integers (original values times scale)."""

    n: int
    k: int
    scale: int
    v: tuple[tuple[int, ...], ...]
    m: tuple[tuple[int, ...], ...]
    r: tuple[tuple[int, ...], ...]

    def interested(self, i0: int, j0: int) -> bool:
        return self.m[i0][j0] >= self.r[i0][j0]


def _scale_instance(inst: AuctionInstance) -> _ScaledInstance:
    denoms = [
        x.denominator
        for mat in (inst.v, inst.m, inst.r)
        for row in mat
        for x in row
    ]
    scale = lcm(*denoms) if denoms else 1
    def conv(mat):
        return tuple(tuple(int(x * scale) for x in row) for row in mat)
    return _ScaledInstance(inst.n, inst.k, scale, conv(inst.v), conv(inst.m), conv(inst.r))


@dataclass(frozen=True)
class SolverState:
    """Immutable snapshot of the solver between iterations.

    Utilities and prices live in the scaled-integer workspace; the public
    accessors convert back to Fractions.  Bidder/slot indices inside
    ``slot_of``/``bidder_of`` are 0-based internals.
    """

    t: int
    u_scaled: tuple[int, ...]
    p_scaled: tuple[int, ...]
    slot_of: tuple[Optional[int], ...]
    bidder_of: tuple[Optional[int], ...]
    scaled: _ScaledInstance = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.u_scaled)

    @property
    def k(self) -> int:
        return len(self.p_scaled)

    def utilities(self) -> tuple[Fraction, ...]:
        d = self.scaled.scale
        return tuple(Fraction(x, d) for x in self.u_scaled)

    def prices(self) -> tuple[Fraction, ...]:
        d = self.scaled.scale
        return tuple(Fraction(x, d) for x in self.p_scaled)

    def pairs(self) -> frozenset[tuple[int, int]]:
        return frozenset(
            (i0 + 1, j0 + 1) for i0, j0 in enumerate(self.slot_of) if j0 is not None
        )

    def matching(self) -> Matching:
        return Matching(self.utilities(), self.prices(), self.pairs())

    def eligible_sources(self) -> list[int]:
        """Unmatched bidders with positive utility, 1-based ascending."""
        return [
            i0 + 1
            for i0 in range(self.n)
            if self.slot_of[i0] is None and self.u_scaled[i0] > 0
        ]

    def is_terminal(self) -> bool:
        return not self.eligible_sources()


def init_state(inst: AuctionInstance) -> SolverState:
    """Initial solver state: empty matching, zero prices, utilities at B.

    B is one unit above the largest value entry, the smallest round choice
    that keeps every bidder initially indifferent-proof (u_i + p_j > v_ij
    for every pair, so the empty matching starts out stable).
    """
    scaled = _scale_instance(inst)
    top = max((x for row in scaled.v for x in row), default=0)
    b = top + scaled.scale  # == (max value + 1) in original units
    return SolverState(
        t=0,
        u_scaled=(b,) * scaled.n,
        p_scaled=(0,) * scaled.k,
        slot_of=(None,) * scaled.n,
        bidder_of=(None,) * scaled.k,
        scaled=scaled,
    )


class UpdateGraph:
    """The per-iteration weighted multigraph guiding the path search.

    Adjacency is stored in the scaled-integer workspace:

    * ``forward_adj[i0]``  -- list of (slot0, weight) reachable from bidder i0,
      present when the slot price sits in [reserve, maximum);
    * ``backward_adj[j0]`` -- (bidder0, 0) for the bidder matched to slot j0;
    * ``special_adj[i0]``  -- list of (kind, slot0, weight) path-ending edges
      out of bidder i0 (slot0 == k encodes the dummy slot).
    """

    def __init__(self, state: SolverState):
        sc = state.scaled
        n, k = sc.n, sc.k
        u, p = state.u_scaled, state.p_scaled
        self.scale = sc.scale
        self.n = n
        self.k = k
        forward: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        special: list[list[tuple[int, int, int]]] = [[] for _ in range(n)]
        backward: list[Optional[tuple[int, int]]] = [None] * k
        for i0 in range(n):
            ui = u[i0]
            vrow, mrow, rrow = sc.v[i0], sc.m[i0], sc.r[i0]
            fwd = forward[i0]
            spc = special[i0]
            for j0 in range(k):
                mij = mrow[j0]
                rij = rrow[j0]
                if mij < rij:
                    continue  # not interested: no edges for this pair
                vij = vrow[j0]
                pj = p[j0]
                if rij <= pj < mij:
                    w = ui + pj - vij
                    if w < 0:
                        raise NegativeEdgeWeight(
                            f"forward edge ({i0 + 1}, {j0 + 1}) has weight "
                            f"{Fraction(w, sc.scale)} < 0; state is unstable"
                        )
                    fwd.append((j0, w))
                if mij > rij:
                    if ui + rij > vij:
                        spc.append((int(EdgeKind.RESERVE_PRICE), j0, ui + rij - vij))
                    if ui + mij > vij:
                        spc.append((int(EdgeKind.MAX_PRICE), j0, ui + mij - vij))
            if ui > 0:
                spc.append((int(EdgeKind.TERMINAL), k, ui))
        for j0 in range(k):
            i0 = state.bidder_of[j0]
            if i0 is not None:
                w = sc.v[i0][j0] - u[i0] - p[j0]
                if w != 0:
                    raise InvariantViolation(
                        f"matched pair ({i0 + 1}, {j0 + 1}) violates exact value "
                        f"split; backward edge weight {Fraction(w, sc.scale)} != 0"
                    )
                backward[j0] = (i0, 0)
        self.forward_adj = forward
        self.backward_adj = backward
        self.special_adj = special

    def edges(self) -> list[Edge]:
        """Materialize all edges in public form (tests and trace output)."""
        d = self.scale
        out = []
        for i0, adj in enumerate(self.forward_adj):
            for j0, w in adj:
                out.append(Edge(EdgeKind.FORWARD, i0 + 1, j0 + 1, Fraction(w, d)))
        for j0, entry in enumerate(self.backward_adj):
            if entry is not None:
                i0, w = entry
                out.append(Edge(EdgeKind.BACKWARD, i0 + 1, j0 + 1, Fraction(w, d)))
        for i0, adj in enumerate(self.special_adj):
            for kind, j0, w in adj:
                slot = DUMMY_SLOT if kind == EdgeKind.TERMINAL else j0 + 1
                out.append(Edge(EdgeKind(kind), i0 + 1, slot, Fraction(w, d)))
        return out


def build_update_graph(inst: AuctionInstance, state: SolverState) -> UpdateGraph:
    """Construct the search graph licensed by the current state.

    Edge existence conditions, for an interested pair (i, j):

    * forward  (i -> j): price in [reserve, maximum), weight u_i + p_j - v_ij;
    * backward (j -> i): (i, j) matched, weight v_ij - u_i - p_j (always 0);
    * reserve-price (i -> j): u_i + r_ij > v_ij and m_ij > r_ij;
    * maximum-price (i -> j): u_i + m_ij > v_ij and m_ij > r_ij;
    * terminal (i -> dummy): u_i > 0, weight u_i.

    Raises NegativeEdgeWeight / InvariantViolation when weights betray an
    invariant breach upstream.
    """
    if inst.n != state.n or inst.k != state.k:
        raise ValueError("state does not belong to this instance")
    return UpdateGraph(state)


def _dijkstra(
    graph: UpdateGraph, sources0: Sequence[int]
) -> tuple[dict[int, tuple[int, int]], dict[int, Optional[int]]]:
    """Shortest paths over forward/backward edges from ranked sources.

    Vertices are coded bidder i0 -> i0 and slot j0 -> n + j0.  Distances are
    compared lexicographically as (distance, source rank) so that, among
    equal-weight routes, the earliest-ranked source wins; interior ties
    resolve by heap order on the vertex code, which is index order.
    """
    n = graph.n
    dist: dict[int, tuple[int, int]] = {}
    pred: dict[int, Optional[int]] = {}
    heap: list[tuple[int, int, int]] = []
    for rank, i0 in enumerate(sources0):
        dist[i0] = (0, rank)
        pred[i0] = None
        heap.append((0, rank, i0))
    heapq.heapify(heap)
    while heap:
        d, rank, vtx = heapq.heappop(heap)
        if dist.get(vtx, (d + 1, rank)) != (d, rank):
            continue
        if vtx < n:
            for j0, w in graph.forward_adj[vtx]:
                nd = (d + w, rank)
                tgt = n + j0
                if tgt not in dist or nd < dist[tgt]:
                    dist[tgt] = nd
                    pred[tgt] = vtx
                    heapq.heappush(heap, (nd[0], rank, tgt))
        else:
            entry = graph.backward_adj[vtx - n]
            if entry is not None:
                i0, w = entry
                nd = (d + w, rank)
                if i0 not in dist or nd < dist[i0]:
                    dist[i0] = nd
                    pred[i0] = vtx
                    heapq.heappush(heap, (nd[0], rank, i0))
    return dist, pred


@dataclass(frozen=True)
class AlternatingPath:
    """A minimum-weight alternating path, ready to be applied.

    ``bidders`` lists the path's bidder vertices i_0..i_l (1-based) and
    ``slots`` the slot vertices j_1..j_{l+1}; the final slot is the target
    of the special edge (DUMMY_SLOT for terminal endings).  The final slot
    may coincide with one earlier slot on the path; all other vertices are
    distinct.
    """

    source: int
    bidders: tuple[int, ...]
    slots: tuple[int, ...]
    final_edge: Edge
    weight: Fraction


@dataclass(frozen=True)
class PathDistances:
    """Distances from the chosen source over forward/backward edges only.

    Unreachable vertices are absent (conceptually at infinity; the update
    formulas treat them as unchanged).
    """

    source: int
    n: int
    k: int
    scale: int
    dist_scaled: dict = field(repr=False)

    def to_bidder(self, i: int) -> Optional[Fraction]:
        d = self.dist_scaled.get(i - 1)
        return None if d is None else Fraction(d, self.scale)

    def to_slot(self, j: int) -> Optional[Fraction]:
        d = self.dist_scaled.get(self.n + j - 1)
        return None if d is None else Fraction(d, self.scale)


def find_min_alternating_path(
    graph: UpdateGraph,
    state: SolverState,
    sources: Optional[Sequence[int]] = None,
) -> Optional[tuple[AlternatingPath, PathDistances]]:
    """Find the minimum-weight alternating path and its distance map.

    Candidate paths start at an unmatched bidder with positive utility,
    follow forward/backward edges, and close with one special edge.  The
    total weight is minimized over all candidates from all ``sources``
    (default: every eligible bidder in index order).  Ties resolve by
    source order first, then by the final edge's (kind, bidder, slot) key.
    Returns None when no source has a path, which only happens when no
    eligible source exists at all (an eligible bidder always has at least
    its terminal edge).
    """
    if sources is None:
        sources = state.eligible_sources()
    else:
        eligible = set(state.eligible_sources())
        sources = [i for i in sources if i in eligible]
    if not sources:
        return None
    sources0 = [i - 1 for i in sources]
    dist, _pred = _dijkstra(graph, sources0)

    best = None  # (total, src_rank, kind, bidder0, slot0)
    n = graph.n
    for vtx, (d, rank) in dist.items():
        if vtx >= n:
            continue
        for kind, j0, w in graph.special_adj[vtx]:
            key = (d + w, rank, kind, vtx, j0)
            if best is None or key < best:
                best = key
    if best is None:
        return None
    total, rank, kind, end0, jstar0 = best

    src0 = sources0[rank]
    if len(sources0) > 1:
        dist, pred = _dijkstra(graph, [src0])
    else:
        pred = _pred
    dist_ints = {vtx: d for vtx, (d, _r) in dist.items()}

    # Walk predecessor pointers back from the path's last bidder.
    chain = []
    vtx: Optional[int] = end0
    while vtx is not None:
        chain.append(vtx)
        vtx = pred[vtx]
    chain.reverse()
    bidders = tuple(v + 1 for v in chain if v < n)
    slots = tuple(v - n + 1 for v in chain if v >= n)
    scale = graph.scale
    final_edge = Edge(
        EdgeKind(kind),
        end0 + 1,
        DUMMY_SLOT if kind == EdgeKind.TERMINAL else jstar0 + 1,
        Fraction(total - dist_ints[end0], scale),
    )
    path = AlternatingPath(
        source=src0 + 1,
        bidders=bidders,
        slots=slots + (final_edge.slot,),
        final_edge=final_edge,
        weight=Fraction(total, scale),
    )
    distances = PathDistances(src0 + 1, graph.n, graph.k, scale, dist_ints)
    return path, distances


def _classify_case(
    state: SolverState, path: AlternatingPath, dist: PathDistances, w_total: int
) -> tuple[str, Optional[int]]:
    """Label the matching-update case; returns (label, cycle start index).

    The cycle start index is only set for the repeated-slot flavor of the
    reserve-price case and points into ``path.slots``.
    """
    kind = path.final_edge.kind
    if kind == EdgeKind.TERMINAL:
        return "1", None
    jstar0 = path.slots[-1] - 1
    if kind == EdgeKind.MAX_PRICE:
        if len(path.slots) >= 2 and path.slots[-1] == path.slots[-2]:
            return "2a", None
        return "2b", None
    # Reserve-price ending.
    if state.bidder_of[jstar0] is None:
        return "3a", None
    d_jstar = dist.dist_scaled.get(state.n + jstar0)
    bump = max(w_total - d_jstar, 0) if d_jstar is not None else 0
    p_plus = state.p_scaled[jstar0] + bump
    i_last0 = path.bidders[-1] - 1
    r_edge = state.scaled.r[i_last0][jstar0]
    if r_edge <= p_plus:
        return "3b", None
    try:
        at = path.slots.index(path.slots[-1])
    except ValueError:  # pragma: no cover - slots[-1] is always present
        at = len(path.slots) - 1
    if at == len(path.slots) - 1:
        return "3c", None  # simple path: the final slot appears only once
    if at == len(path.slots) - 2:
        raise CaseInvariantViolated(
            "reserve-price ending cannot close onto the last matched slot "
            f"(slot {path.slots[-1]}); the reserve on that pair was just reached"
        )
    return "3c", at


def apply_iteration(
    inst: AuctionInstance,
    state: SolverState,
    path: AlternatingPath,
    dist: PathDistances,
) -> SolverState:
    """Apply one iteration's utility, price, and matching updates.

    For every bidder, u' = u - max(W - d, 0); for every slot,
    p' = p + max(W - d, 0), where W is the path weight and d the distance
    from the path's source (infinite when unreachable).  When the path ends
    with a reserve-price edge, the final slot's price is additionally lifted
    to that reserve.  The matching is rewired according to the kind of the
    final edge and whether its target slot is free, priced out, or revisited.
    """
    sc = state.scaled
    n, k = sc.n, sc.k
    w_total = int(path.weight * sc.scale)
    u = list(state.u_scaled)
    p = list(state.p_scaled)
    for vtx, d in dist.dist_scaled.items():
        if d >= w_total:
            continue
        if vtx < n:
            u[vtx] -= w_total - d
        else:
            p[vtx - n] += w_total - d

    case, cycle_at = _classify_case(state, path, dist, w_total)

    slot_of = list(state.slot_of)
    bidder_of = list(state.bidder_of)
    bidders0 = [i - 1 for i in path.bidders]
    slots0 = [j - 1 for j in path.slots]  # final entry is -1 for terminal paths
    last = len(bidders0) - 1

    def unmatch_path_pairs(from_x: int = 1) -> None:
        # Matched pairs along the path are (i_x, j_x) = (bidders0[x], slots0[x-1]).
        for x in range(from_x, last + 1):
            slot_of[bidders0[x]] = None
            bidder_of[slots0[x - 1]] = None

    def match_forward(upto_x: int, from_x: int = 0) -> None:
        # Forward pairs are (i_x, j_{x+1}) = (bidders0[x], slots0[x]).
        for x in range(from_x, upto_x + 1):
            slot_of[bidders0[x]] = slots0[x]
            bidder_of[slots0[x]] = bidders0[x]

    if case in ("1", "2a"):
        unmatch_path_pairs()
        match_forward(last - 1)
    elif case in ("2b", "3b"):
        pass
    elif case == "3a":
        unmatch_path_pairs()
        match_forward(last)
    elif case == "3c" and cycle_at is None:
        displaced = bidder_of[slots0[-1]]
        unmatch_path_pairs()
        if slot_of[displaced] is not None:  # not already cleared by the flip
            slot_of[displaced] = None
        match_forward(last)
    else:  # "3c" with a revisited slot: flip only the closing cycle
        start = cycle_at + 1
        for x in range(start, last + 1):
            slot_of[bidders0[x]] = None
            bidder_of[slots0[x - 1]] = None
        match_forward(last, from_x=start)

    if path.final_edge.kind == EdgeKind.RESERVE_PRICE:
        jstar0 = slots0[-1]
        i_last0 = bidders0[-1]
        p[jstar0] = max(p[jstar0], sc.r[i_last0][jstar0])

    return SolverState(
        t=state.t + 1,
        u_scaled=tuple(u),
        p_scaled=tuple(p),
        slot_of=tuple(slot_of),
        bidder_of=tuple(bidder_of),
        scaled=sc,
    )


@dataclass(frozen=True)
class IterationRecord:
    """One iteration of the trace: the chosen path and what it changed."""

    t: int
    source: int
    path_bidders: tuple[int, ...]
    path_slots: tuple[int, ...]
    final_edge: Edge
    weight: Fraction
    case: str
    distances: tuple[tuple[str, int, Fraction], ...]
    u_delta: tuple[tuple[int, Fraction], ...]
    p_delta: tuple[tuple[int, Fraction], ...]


@dataclass(frozen=True)
class SolveResult:
    """Final matching plus the run's bookkeeping."""

    matching: Matching
    iterations: int
    trace: tuple[IterationRecord, ...]
    degenerate_events: tuple[str, ...]

    @property
    def degenerate(self) -> bool:
        """True when the run tripped a tie-break-sensitive boundary."""
        return bool(self.degenerate_events)


def _check_iteration_invariants(
    prev: SolverState, new: SolverState
) -> list[str]:
    """Assert the hard state invariants; return soft degeneracy events.

    Hard (raise InvariantViolation): stability of the new state, exact value
    split with prices inside [reserve, maximum] on matched pairs, utility /
    price monotonicity, and matched slots staying matched.  Soft (returned):
    unmatched slots acquiring price, and the two boundary coincidences
    (matched pair at u + m == v; interested pair at u + r == v with the slot
    priced below its reserve) that only a degenerate instance can produce.
    """
    sc = new.scaled
    n, k = sc.n, sc.k
    u, p = new.u_scaled, new.p_scaled
    events: list[str] = []

    for i0 in range(n):
        if u[i0] > prev.u_scaled[i0]:
            raise InvariantViolation(f"utility of bidder {i0 + 1} increased")
        if u[i0] < 0:
            raise InvariantViolation(f"utility of bidder {i0 + 1} fell below zero")
    for j0 in range(k):
        if p[j0] < prev.p_scaled[j0]:
            raise InvariantViolation(f"price of slot {j0 + 1} decreased")
        if prev.bidder_of[j0] is not None and new.bidder_of[j0] is None:
            raise InvariantViolation(f"matched slot {j0 + 1} became unmatched")

    for j0 in range(k):
        i0 = new.bidder_of[j0]
        if i0 is None:
            if p[j0] != 0:
                events.append(
                    f"t={new.t}: unmatched slot {j0 + 1} carries price "
                    f"{Fraction(p[j0], sc.scale)} (degenerate boundary)"
                )
            continue
        if not (sc.r[i0][j0] <= p[j0] <= sc.m[i0][j0]):
            raise InvariantViolation(
                f"matched pair ({i0 + 1}, {j0 + 1}) price outside [reserve, maximum]"
            )
        if u[i0] + p[j0] != sc.v[i0][j0]:
            raise InvariantViolation(
                f"matched pair ({i0 + 1}, {j0 + 1}) does not split the value exactly"
            )

    for i0 in range(n):
        ui = u[i0]
        vrow, mrow, rrow = sc.v[i0], sc.m[i0], sc.r[i0]
        matched_j = new.slot_of[i0]
        for j0 in range(k):
            vij, mij, rij = vrow[j0], mrow[j0], rrow[j0]
            pj = p[j0]
            if ui + pj < vij and pj < mij and ui + rij < vij:
                raise InvariantViolation(
                    f"pair ({i0 + 1}, {j0 + 1}) blocks the state after "
                    f"iteration {new.t}"
                )
            if mij < rij:
                continue
            if ui + mij == vij and matched_j == j0:
                events.append(
                    f"t={new.t}: matched pair ({i0 + 1}, {j0 + 1}) sits exactly "
                    "at its maximum price boundary (degenerate)"
                )
            if ui + rij == vij and matched_j != j0 and pj < rij:
                events.append(
                    f"t={new.t}: pair ({i0 + 1}, {j0 + 1}) sits at its reserve "
                    "boundary while the slot is priced below reserve (degenerate)"
                )
    return events


def iteration_budget(inst: AuctionInstance) -> int:
    """Most iterations any run may take: one per special edge, n*(2k+1)."""
    return inst.n * (2 * inst.k + 1)


def stable_match(
    inst: AuctionInstance,
    *,
    source_order: Optional[Sequence[int]] = None,
    check_invariants: bool = True,
    collect_trace: bool = True,
) -> SolveResult:
    """Compute the bidder-optimal stable matching for ``inst``.

    The result is feasible and stable; when the instance admits no exact
    weight ties among competing path endings it is the unique bidder-optimal
    matching (utilities componentwise maximal, prices componentwise minimal
    over all stable feasible matchings).  Tied instances still solve
    deterministically under the final-edge tie-break, and any boundary the
    tie-break had to cut through is reported in ``degenerate_events``.

    Args:
        inst: a validated auction instance.
        source_order: optional bidder permutation; each iteration then routes
            from the first eligible bidder in this order instead of taking
            the globally cheapest path over all sources.  Any order yields
            the same final matching on tie-free instances.
        check_invariants: assert the state invariants after every iteration
            (disable only for large timing runs).
        collect_trace: record an IterationRecord per iteration.
    """
    validate_instance(inst)
    if source_order is not None:
        if sorted(source_order) != list(inst.bidders()):
            raise ValueError("source_order must be a permutation of the bidders")
    state = init_state(inst)
    budget = iteration_budget(inst)
    trace: list[IterationRecord] = []
    events: list[str] = []

    while True:
        eligible = state.eligible_sources()
        if not eligible:
            break
        if source_order is not None:
            eligible_set = set(eligible)
            sources = [next(i for i in source_order if i in eligible_set)]
        else:
            sources = eligible
        graph = build_update_graph(inst, state)
        found = find_min_alternating_path(graph, state, sources=sources)
        if found is None:  # pragma: no cover - eligible bidders always have paths
            break
        path, dist = found
        if state.t >= budget:
            raise IterationBudgetExceeded(
                f"exceeded {budget} iterations (n={inst.n}, k={inst.k})"
            )
        new_state = apply_iteration(inst, state, path, dist)
        if check_invariants:
            events.extend(_check_iteration_invariants(state, new_state))
        if collect_trace:
            trace.append(_record_iteration(state, new_state, path, dist))
        state = new_state

    matching = state.matching()
    report = is_feasible(inst, matching)
    blockers = blocking_pairs(inst, matching)
    if not report.ok or blockers:
        detail = report.reason if not report.ok else f"blocking pairs {blockers[:3]}"
        hint = (
            " (the instance is degenerate: a bidder's maximum equals a reserve "
            "or an exact boundary coincidence occurred)"
            if events or _has_inert_pairs(inst)
            else ""
        )
        raise InvariantViolation(f"final matching invalid: {detail}{hint}")
    return SolveResult(matching, state.t, tuple(trace), tuple(events))


def _has_inert_pairs(inst: AuctionInstance) -> bool:
    """Interested pairs with m == r > 0 are untouchable by the path search."""
    return any(
        inst.m[i0][j0] == inst.r[i0][j0] > 0 and inst.v[i0][j0] > inst.m[i0][j0]
        for i0 in range(inst.n)
        for j0 in range(inst.k)
    )


def _record_iteration(
    prev: SolverState,
    new: SolverState,
    path: AlternatingPath,
    dist: PathDistances,
) -> IterationRecord:
    scale = prev.scaled.scale
    case, _ = _classify_case(prev, path, dist, int(path.weight * scale))
    dists = []
    for i in path.bidders:
        d = dist.to_bidder(i)
        if d is not None:
            dists.append(("bidder", i, d))
    for j in path.slots:
        if j == DUMMY_SLOT:
            continue
        d = dist.to_slot(j)
        if d is not None:
            dists.append(("slot", j, d))
    u_delta = tuple(
        (i0 + 1, Fraction(new.u_scaled[i0] - prev.u_scaled[i0], scale))
        for i0 in range(prev.n)
        if new.u_scaled[i0] != prev.u_scaled[i0]
    )
    p_delta = tuple(
        (j0 + 1, Fraction(new.p_scaled[j0] - prev.p_scaled[j0], scale))
        for j0 in range(prev.k)
        if new.p_scaled[j0] != prev.p_scaled[j0]
    )
    return IterationRecord(
        t=prev.t,
        source=path.source,
        path_bidders=path.bidders,
        path_slots=path.slots,
        final_edge=path.final_edge,
        weight=path.weight,
        case=case,
        distances=tuple(dists),
        u_delta=u_delta,
        p_delta=p_delta,
    )
