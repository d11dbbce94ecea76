"""Causal directed acyclic graphs: parsing, separation queries, adjustment sets.

This module provides the graph layer used by the study-design tools: a small
text format for writing graphs down, d-separation queries, enumeration of
back-door paths, and a search for minimal covariate adjustment sets subject
to conditioning that is forced by the study design (for example a selection
step that every analysed patient has passed).

Path semantics follow the usual conventions: a path is blocked by a
conditioning set ``z`` when it contains a non-collider that is in ``z``, or a
collider that is neither in ``z`` nor has a descendant in ``z``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Iterator, Sequence

__all__ = [
    "DagError",
    "DagParseError",
    "CycleError",
    "Dag",
    "Path",
    "SeparationQuery",
    "IdentifyStatus",
    "IdentifyResult",
    "parse_dag",
    "serialize_dag",
    "d_separated",
    "all_simple_paths",
    "backdoor_paths",
    "is_backdoor_admissible",
    "find_adjustment_sets",
]

_NAME_RE = re.compile(r"^[A-Za-z_\-][A-Za-z0-9_\-]*$")

FORWARD = "->"
BACKWARD = "<-"


class DagError(ValueError):
    """Base class for graph construction and query errors."""


class DagParseError(DagError):
    """Raised when graph text cannot be parsed; carries line/column info."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CycleError(DagError):
    """Raised when edges form a directed cycle; reports one offending cycle."""

    def __init__(self, cycle: Sequence[str]):
        self.cycle = list(cycle)
        super().__init__("cycle detected: " + " -> ".join(self.cycle))


def _check_name(name: str) -> str:
    if not _NAME_RE.match(name):
        raise DagError(
            f"invalid node name {name!r}: names use letters, digits, '_' or '-' "
            "and must not begin with a digit"
        )
    return name


class Dag:
    """An immutable directed acyclic graph over named nodes.

    Parameters
    ----------
    nodes : iterable of str
        Node names (letters, digits, ``_``, ``-``; not starting with a digit).
    edges : iterable of (str, str)
        Directed edges ``(parent, child)``.  Endpoints must appear in
        ``nodes``, self-loops are rejected, and the edge set must be acyclic.
    """

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str]] = ()):
        self.nodes: frozenset[str] = frozenset(_check_name(n) for n in nodes)
        edge_set = set()
        for a, b in edges:
            if a not in self.nodes or b not in self.nodes:
                missing = a if a not in self.nodes else b
                raise DagError(f"edge {a} -> {b} references unknown node {missing!r}")
            if a == b:
                raise DagError(f"self-loop on node {a!r}")
            edge_set.add((a, b))
        self.edges: frozenset[tuple[str, str]] = frozenset(edge_set)
        self._parents: dict[str, tuple[str, ...]] = {n: () for n in self.nodes}
        self._children: dict[str, tuple[str, ...]] = {n: () for n in self.nodes}
        par: dict[str, list[str]] = {n: [] for n in self.nodes}
        chi: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            par[b].append(a)
            chi[a].append(b)
        for n in self.nodes:
            self._parents[n] = tuple(sorted(par[n]))
            self._children[n] = tuple(sorted(chi[n]))
        self._topo = self._toposort()  # raises CycleError on cycles

    # -- basic structure ---------------------------------------------------

    def parents(self, node: str) -> tuple[str, ...]:
        self._require(node)
        return self._parents[node]

    def children(self, node: str) -> tuple[str, ...]:
        self._require(node)
        return self._children[node]

    def has_edge(self, a: str, b: str) -> bool:
        return (a, b) in self.edges

    def topological_order(self) -> tuple[str, ...]:
        """Nodes in a deterministic topological order (ties broken by name)."""
        return self._topo

    def ancestors(self, node: str) -> frozenset[str]:
        """All strict ancestors of ``node``."""
        self._require(node)
        seen: set[str] = set()
        stack = list(self._parents[node])
        while stack:
            cur = stack.pop()
            if cur not in seen:
                seen.add(cur)
                stack.extend(self._parents[cur])
        return frozenset(seen)

    def descendants(self, node: str) -> frozenset[str]:
        """All strict descendants of ``node``."""
        self._require(node)
        return self._descendant_map[node]

    @cached_property
    def _descendant_map(self) -> dict[str, frozenset[str]]:
        out: dict[str, frozenset[str]] = {}
        for n in reversed(self._topo):
            acc: set[str] = set()
            for c in self._children[n]:
                acc.add(c)
                acc |= out[c]
            out[n] = frozenset(acc)
        return out

    def _require(self, node: str) -> None:
        if node not in self.nodes:
            raise DagError(f"unknown node {node!r}")

    def _toposort(self) -> tuple[str, ...]:
        indeg = {n: len(self._parents[n]) for n in self.nodes}
        ready = sorted(n for n, d in indeg.items() if d == 0)
        order: list[str] = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in self._children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    # keep 'ready' sorted for a deterministic order
                    lo, hi = 0, len(ready)
                    while lo < hi:
                        mid = (lo + hi) // 2
                        if ready[mid] < c:
                            lo = mid + 1
                        else:
                            hi = mid
                    ready.insert(lo, c)
        if len(order) < len(self.nodes):
            raise CycleError(self._find_cycle())
        return tuple(order)

    def _find_cycle(self) -> list[str]:
        # DFS with colouring; returns one cycle as [v, ..., v]
        WHITE, GREY, BLACK = 0, 1, 2
        colour = {n: WHITE for n in self.nodes}
        parent: dict[str, str] = {}

        def dfs(start: str) -> list[str] | None:
            stack = [(start, iter(self._children[start]))]
            colour[start] = GREY
            while stack:
                node, it = stack[-1]
                advanced = False
                for child in it:
                    if colour[child] == GREY:
                        cycle = [child, node]
                        cur = node
                        while cur != child:
                            cur = parent[cur]
                            cycle.append(cur)
                        cycle.reverse()
                        return cycle
                    if colour[child] == WHITE:
                        colour[child] = GREY
                        parent[child] = node
                        stack.append((child, iter(self._children[child])))
                        advanced = True
                        break
                if not advanced:
                    colour[node] = BLACK
                    stack.pop()
            return None

        for n in sorted(self.nodes):
            if colour[n] == WHITE:
                found = dfs(n)
                if found:
                    return found
        raise AssertionError("cycle reported but none found")

    # -- dunder ------------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.nodes, self.edges))

    def __repr__(self) -> str:
        return f"Dag({len(self.nodes)} nodes, {len(self.edges)} edges)"


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def parse_dag(text: str) -> Dag:
    """Parse graph text into a :class:`Dag`.

    The format is a sequence of statements terminated by ``;``:

    * ``A -> B;`` declares a directed edge (endpoints are declared implicitly);
    * ``node A;`` declares an isolated node;
    * ``#`` starts a comment running to end of line.

    Raises :class:`DagParseError` with line/column positions for syntax
    problems, repeated ``node`` declarations, and :class:`CycleError` when the
    edges form a directed cycle.
    """
    nodes: set[str] = set()
    declared: set[str] = set()
    edges: list[tuple[str, str]] = []

    # tokenize, keeping positions
    tokens: list[tuple[str, int, int]] = []  # (lexeme, line, col) 1-based
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        col = 0
        i = 0
        while i < len(line):
            ch = line[i]
            if ch.isspace():
                i += 1
                continue
            if line.startswith("->", i):
                tokens.append(("->", ln, i + 1))
                i += 2
            elif ch == ";":
                tokens.append((";", ln, i + 1))
                i += 1
            else:
                m = re.match(r"[A-Za-z0-9_\-]+", line[i:])
                if not m:
                    raise DagParseError(f"unexpected character {ch!r}", ln, i + 1)
                tokens.append((m.group(0), ln, i + 1))
                i += len(m.group(0))
        del col

    pos = 0

    def peek() -> tuple[str, int, int] | None:
        return tokens[pos] if pos < len(tokens) else None

    def take() -> tuple[str, int, int]:
        nonlocal pos
        tok = peek()
        if tok is None:
            last = tokens[-1] if tokens else ("", 1, 1)
            raise DagParseError("unexpected end of input", last[1], last[2])
        pos += 1
        return tok

    def take_name() -> tuple[str, int, int]:
        lex, ln, c = take()
        if lex in ("->", ";"):
            raise DagParseError(f"expected a node name, found {lex!r}", ln, c)
        if not _NAME_RE.match(lex):
            raise DagParseError(
                f"invalid node name {lex!r} (must not begin with a digit)", ln, c)
        return lex, ln, c

    while peek() is not None:
        lex, ln, c = peek()  # type: ignore[misc]
        if lex == "node":
            take()
            name, nln, nc = take_name()
            end, eln, ec = take()
            if end != ";":
                raise DagParseError(f"expected ';', found {end!r}", eln, ec)
            if name in declared:
                raise DagParseError(f"duplicate node {name!r}", nln, nc)
            declared.add(name)
            nodes.add(name)
        else:
            a, _, _ = take_name()
            arrow, aln, ac = take()
            if arrow != "->":
                raise DagParseError(f"expected '->', found {arrow!r}", aln, ac)
            b, _, _ = take_name()
            end, eln, ec = take()
            if end != ";":
                raise DagParseError(f"expected ';', found {end!r}", eln, ec)
            nodes.add(a)
            nodes.add(b)
            edges.append((a, b))

    return Dag(nodes, edges)


def serialize_dag(dag: Dag) -> str:
    """Render a :class:`Dag` in the text format; a parse round-trips exactly.

    Output is canonical: every node on its own sorted ``node`` line, then all
    edges sorted lexicographically.
    """
    lines = [f"node {n};" for n in sorted(dag.nodes)]
    lines += [f"{a} -> {b};" for a, b in sorted(dag.edges)]
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Path:
    """An undirected simple path with per-step edge orientations.

    ``arrows[i]`` is ``"->"`` when the underlying edge runs
    ``nodes[i] -> nodes[i+1]`` and ``"<-"`` otherwise.
    """

    nodes: tuple[str, ...]
    arrows: tuple[str, ...]

    def __post_init__(self):
        if len(self.arrows) != len(self.nodes) - 1:
            raise ValueError("arrows must have one entry per step")

    @property
    def is_causal(self) -> bool:
        """True when every step points away from the first node."""
        return all(a == FORWARD for a in self.arrows)

    def colliders(self) -> tuple[str, ...]:
        """Interior nodes where two arrowheads meet."""
        out = []
        for i in range(1, len(self.nodes) - 1):
            if self.arrows[i - 1] == FORWARD and self.arrows[i] == BACKWARD:
                out.append(self.nodes[i])
        return tuple(out)

    def is_blocked_by(self, z: frozenset[str] | set[str], dag: Dag) -> bool:
        """Whether the conditioning set ``z`` blocks this path."""
        z = frozenset(z)
        for i in range(1, len(self.nodes) - 1):
            v = self.nodes[i]
            collider = self.arrows[i - 1] == FORWARD and self.arrows[i] == BACKWARD
            if collider:
                if v not in z and not (dag.descendants(v) & z):
                    return True
            elif v in z:
                return True
        return False

    def __str__(self) -> str:
        parts = [self.nodes[0]]
        for arrow, node in zip(self.arrows, self.nodes[1:]):
            parts.append(arrow)
            parts.append(node)
        return " ".join(parts)


def all_simple_paths(dag: Dag, x: str, y: str) -> list[Path]:
    """All simple undirected paths between ``x`` and ``y``, lexicographic order."""
    dag._require(x)
    dag._require(y)
    if x == y:
        raise DagError("path endpoints must differ")
    out: list[Path] = []
    # neighbours with orientation, sorted by name then arrow for determinism
    nbrs: dict[str, list[tuple[str, str]]] = {}
    for n in dag.nodes:
        cand = [(c, FORWARD) for c in dag.children(n)] + \
               [(p, BACKWARD) for p in dag.parents(n)]
        nbrs[n] = sorted(cand)

    path = [x]
    arrows: list[str] = []
    on_path = {x}

    def dfs(cur: str) -> None:
        for nxt, arrow in nbrs[cur]:
            if nxt in on_path:
                continue
            path.append(nxt)
            arrows.append(arrow)
            if nxt == y:
                out.append(Path(tuple(path), tuple(arrows)))
            else:
                on_path.add(nxt)
                dfs(nxt)
                on_path.remove(nxt)
            path.pop()
            arrows.pop()

    dfs(x)
    return out


def backdoor_paths(dag: Dag, x: str, y: str) -> list[Path]:
    """Paths from ``x`` to ``y`` whose first step enters ``x`` (``x <- ...``).

    Returned in lexicographic order of their node sequences.
    """
    return [p for p in all_simple_paths(dag, x, y) if p.arrows[0] == BACKWARD]


# ---------------------------------------------------------------------------
# separation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeparationQuery:
    """A d-separation question: are ``x`` and ``y`` separated given ``given``?"""

    x: frozenset[str]
    y: frozenset[str]
    given: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "x", frozenset(self.x))
        object.__setattr__(self, "y", frozenset(self.y))
        object.__setattr__(self, "given", frozenset(self.given))
        if not self.x or not self.y:
            raise DagError("query sides must be non-empty")
        if self.x & self.y or self.x & self.given or self.y & self.given:
            raise DagError("query sets must be pairwise disjoint")

    def validate_against(self, dag: Dag) -> None:
        for n in self.x | self.y | self.given:
            dag._require(n)


def d_separated(dag: Dag, query: SeparationQuery) -> bool:
    """Decide d-separation with a reachability sweep (no path enumeration).

    Runs the standard two-state traversal over (node, entry direction),
    linear in the number of edges, so it is exact on graphs far too large
    for explicit path enumeration.
    """
    query.validate_against(dag)
    z = query.given
    # ancestors of z, used for collider openings
    z_anc: set[str] = set(z)
    stack = [a for n in z for a in dag.parents(n)]
    while stack:
        cur = stack.pop()
        if cur not in z_anc:
            z_anc.add(cur)
            stack.extend(dag.parents(cur))

    # states: (node, direction) with direction 'up' = arrived from a child
    # (moving against edges), 'down' = arrived from a parent.
    visited: set[tuple[str, str]] = set()
    frontier: list[tuple[str, str]] = [(s, "up") for s in query.x]
    while frontier:
        node, direction = frontier.pop()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node in query.y:
            return False
        if direction == "up":
            if node in z:
                continue
            for p in dag.parents(node):
                frontier.append((p, "up"))
            for c in dag.children(node):
                frontier.append((c, "down"))
        else:  # arrived along an edge into node
            if node not in z:
                for c in dag.children(node):
                    frontier.append((c, "down"))
            if node in z_anc:
                for p in dag.parents(node):
                    frontier.append((p, "up"))
    return True


# ---------------------------------------------------------------------------
# adjustment sets
# ---------------------------------------------------------------------------

class IdentifyStatus(Enum):
    IDENTIFIED = "Identified"
    NOT_IDENTIFIED = "NotIdentified"


@dataclass
class IdentifyResult:
    """Outcome of an adjustment-set search.

    Exactly one of ``admissible_sets`` / ``witness_paths`` is non-empty:
    the minimal admissible sets when the effect is identified, otherwise
    open spurious paths that the candidate covariates cannot block.
    """

    status: IdentifyStatus
    x: str
    y: str
    forced: frozenset[str]
    admissible_sets: list[frozenset[str]] = field(default_factory=list)
    witness_paths: list[Path] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "x": self.x,
            "y": self.y,
            "forced": sorted(self.forced),
            "admissible_sets": [sorted(s) for s in self.admissible_sets],
            "witness_paths": [
                {"nodes": list(p.nodes), "arrows": list(p.arrows), "text": str(p)}
                for p in self.witness_paths
            ],
        }


def _spurious_paths(dag: Dag, x: str, y: str) -> list[Path]:
    return [p for p in all_simple_paths(dag, x, y) if not p.is_causal]


def is_backdoor_admissible(dag: Dag, x: str, y: str, z: Iterable[str]) -> bool:
    """Whether conditioning on ``z`` blocks every spurious (non-causal) path
    between ``x`` and ``y``, leaving all directed ``x -> ... -> y`` paths open.

    ``z`` may include design-forced conditioning such as selection indicators;
    the test is purely about path blocking.
    """
    zs = frozenset(z)
    dag._require(x)
    dag._require(y)
    for n in zs:
        dag._require(n)
    if x in zs or y in zs:
        raise DagError("adjustment set must not contain the exposure or outcome")
    return all(p.is_blocked_by(zs, dag) for p in _spurious_paths(dag, x, y))


def _subsets_by_size(items: Sequence[str]) -> Iterator[tuple[str, ...]]:
    from itertools import combinations

    for size in range(len(items) + 1):
        yield from combinations(items, size)


def find_adjustment_sets(
    dag: Dag,
    x: str,
    y: str,
    observed: Iterable[str],
    forced: Iterable[str] = (),
    max_candidates: int = 20,
) -> IdentifyResult:
    """Search for minimal admissible adjustment sets among observed covariates.

    Every candidate set contains ``forced`` (conditioning the design already
    imposes, so it cannot be removed).  A set ``z`` is accepted when it blocks
    every spurious path between ``x`` and ``y`` and no freely chosen member
    (``z`` minus ``forced``) is a descendant of ``x``.  Minimal sets are
    reported smallest-first; supersets of an admissible set are pruned.

    When nothing is admissible the result instead carries witness paths:
    for the full candidate pool and each pool-minus-one-covariate set, the
    lexicographically first spurious path left open, de-duplicated.
    """
    observed_s = frozenset(observed)
    forced_s = frozenset(forced)
    dag._require(x)
    dag._require(y)
    for n in observed_s | forced_s:
        dag._require(n)
    if x not in observed_s or y not in observed_s:
        raise DagError("exposure and outcome must be observed")
    if not forced_s <= observed_s:
        raise DagError("forced conditioning must be a subset of observed nodes")
    if x in forced_s or y in forced_s:
        raise DagError("forced conditioning must not contain exposure or outcome")

    candidates = sorted(observed_s - {x, y} - forced_s)
    if len(candidates) > max_candidates:
        raise DagError(
            f"{len(candidates)} candidate covariates exceed the subset-search "
            f"limit of {max_candidates}; restrict 'observed' or raise the limit"
        )

    spurious = _spurious_paths(dag, x, y)
    de_x = dag.descendants(x)

    def admissible(z: frozenset[str]) -> bool:
        if (z - forced_s) & de_x:
            return False
        return all(p.is_blocked_by(z, dag) for p in spurious)

    found: list[frozenset[str]] = []
    for subset in _subsets_by_size(candidates):
        z = forced_s | frozenset(subset)
        if any(prev <= z for prev in found):
            continue  # superset of a minimal set
        if admissible(z):
            found.append(z)

    if found:
        found.sort(key=lambda s: (len(s), tuple(sorted(s))))
        return IdentifyResult(IdentifyStatus.IDENTIFIED, x, y, forced_s,
                              admissible_sets=found)

    # Not identified: collect one open spurious path per tried maximal set.
    full = forced_s | frozenset(candidates)
    witness_sets = [full] + [full - {c} for c in candidates]
    witnesses: list[Path] = []
    seen: set[tuple[str, ...]] = set()
    for z in witness_sets:
        for p in spurious:
            if not p.is_blocked_by(z, dag):
                if p.nodes not in seen:
                    seen.add(p.nodes)
                    witnesses.append(p)
                break
    if not witnesses:
        # every large set closed all paths but used a descendant of x; the
        # forced-only set is then guaranteed to leave some path open
        for p in spurious:
            if not p.is_blocked_by(forced_s, dag):
                witnesses.append(p)
                break
    witnesses.sort(key=lambda p: p.nodes)
    return IdentifyResult(IdentifyStatus.NOT_IDENTIFIED, x, y, forced_s,
                          witness_paths=witnesses)
