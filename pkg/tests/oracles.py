"""Independent brute-force oracles used to check the fast implementations.

Everything here is deliberately naive: explicit path enumeration, explicit
blocking checks, dense grids.  The only package type these helpers touch is
the raw node/edge data of a graph; none of the traversal or blocking logic
is shared with the code under test.
"""
import itertools

import numpy as np


def _adjacency(edges):
    children, parents = {}, {}
    for a, b in edges:
        children.setdefault(a, set()).add(b)
        parents.setdefault(b, set()).add(a)
    return children, parents


def enumerate_paths(nodes, edges, x, y):
    """All simple undirected paths x..y as lists of (node, arrow) steps.

    Each path is a list ``[x, (arrow, n1), (arrow, n2), ...]`` where arrow is
    '>' if the edge runs towards the later node and '<' otherwise.
    """
    children, parents = _adjacency(edges)
    paths = []

    def step(cur, trail, visited):
        if cur == y:
            paths.append(list(trail))
            return
        for nxt in sorted(children.get(cur, ())):
            if nxt not in visited:
                trail.append((">", nxt))
                step(nxt, trail, visited | {nxt})
                trail.pop()
        for nxt in sorted(parents.get(cur, ())):
            if nxt not in visited:
                trail.append(("<", nxt))
                step(nxt, trail, visited | {nxt})
                trail.pop()

    step(x, [x], {x})
    return paths


def descendants_of(edges, node):
    children, _ = _adjacency(edges)
    seen, stack = set(), [node]
    while stack:
        for c in children.get(stack.pop(), ()):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return seen


def path_is_active(path, edges, z):
    """Blocking rule applied literally to one enumerated path."""
    z = set(z)
    # path: [x, (a1, n1), (a2, n2), ...]
    nodes = [path[0]] + [n for _, n in path[1:]]
    arrows = [a for a, _ in path[1:]]
    for i in range(1, len(nodes) - 1):
        v = nodes[i]
        is_collider = arrows[i - 1] == ">" and arrows[i] == "<"
        if is_collider:
            if v not in z and not (descendants_of(edges, v) & z):
                return False
        else:
            if v in z:
                return False
    return True


def brute_force_d_separated(nodes, edges, xs, ys, z):
    """d-separation by enumerating every simple path between the sides."""
    for x in xs:
        for y in ys:
            for path in enumerate_paths(nodes, edges, x, y):
                if path_is_active(path, edges, z):
                    return False
    return True


def random_dag(rng, n_nodes, edge_prob=0.3):
    """A random DAG as (nodes, edges): edge i->j only for i before j."""
    names = [f"n{i}" for i in range(n_nodes)]
    order = list(rng.permutation(n_nodes))
    edges = []
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < edge_prob:
                edges.append((names[order[i]], names[order[j]]))
    return names, edges


def logit_map_grid_oracle(x, y, sigmas, lo=-5.0, hi=5.0, coarse=0.01, fine=0.001):
    """Maximum a-posteriori logistic coefficients by direct grid search.

    Scans a coarse grid over ``[lo, hi]^2`` and then refines around the best
    point at the fine step (sound because the penalised objective is
    strictly concave).  Only supports p == 2, which is all the frozen check
    datasets need.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    assert x.shape[1] == 2

    def scan(c0, c1, span, step):
        g0 = np.arange(c0 - span, c0 + span + step / 2, step)
        g1 = np.arange(c1 - span, c1 + span + step / 2, step)
        ll = np.zeros((g0.size, g1.size))
        for xi, yi in zip(x, y):  # accumulate one observation at a time
            eta = xi[0] * g0[:, None] + xi[1] * g1[None, :]
            ll += yi * eta - np.logaddexp(0.0, eta)
        ll -= 0.5 * (g0 ** 2)[:, None] / sigmas[0] ** 2
        ll -= 0.5 * (g1 ** 2)[None, :] / sigmas[1] ** 2
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        return g0[i], g1[j]

    centre = ((lo + hi) / 2, (lo + hi) / 2)
    c0, c1 = scan(*centre, (hi - lo) / 2, coarse)
    return scan(c0, c1, 2 * coarse, fine)


def make_multicentre_table(seed, n_per_centre, tau, n_centres=18,
                           alpha_scale=0.12, null_alpha=False,
                           direct_centre_effects=None):
    """Synthetic multicentre cohort with exactly linear treatment/outcome laws.

    Treatment propensity: 0.45 + a_k + 0.04*age_z + 0.03*smoker, where a_k
    is the planted absolute shift for centre k.  Outcome probability:
    0.40 + tau*T + d_k + 0.05*age_z + 0.02*smoker (d_k defaults to 0, the
    instrument-clean case).  Everything stays linear, so a linear-link
    regression with centre one-hots is correctly specified and the
    reduced-form centre effect on the outcome equals tau*a_k + d_k.

    Returns (table, planted_alpha_by_level, tau).  Imports the clinical
    schema factory lazily to avoid a hard dependency ordering.
    """
    from conftest import make_clinical_schema

    rng = np.random.default_rng(seed)
    levels = tuple(f"c{i + 1:02d}" for i in range(n_centres))
    schema = make_clinical_schema(centres=levels)

    if null_alpha:
        planted = np.zeros(n_centres)
    else:
        planted = rng.permutation(
            np.linspace(-alpha_scale, alpha_scale, n_centres))
    direct = (np.zeros(n_centres) if direct_centre_effects is None
              else np.asarray(direct_centre_effects, float))

    n = n_per_centre * n_centres
    centre_idx = np.repeat(np.arange(n_centres), n_per_centre)
    age_z = np.clip(rng.normal(0.0, 1.0, n), -3.0, 3.0)
    smoker = rng.integers(0, 2, n)

    p_t = 0.45 + planted[centre_idx] + 0.04 * age_z + 0.03 * smoker
    assert (p_t > 0).all() and (p_t < 1).all()
    t = (rng.random(n) < p_t).astype(int)

    p_y = (0.40 + tau * t + direct[centre_idx]
           + 0.05 * age_z + 0.02 * smoker)
    assert (p_y > 0).all() and (p_y < 1).all()
    y = (rng.random(n) < p_y).astype(int)

    from studypilot.table import PatientTable
    data = {
        "pid": (np.array([f"p{i:06d}" for i in range(n)], dtype=object),
                None),
        "evd": (t, None),
        "outcome": (y, None),
        "centre": (centre_idx, None),
        "wfns": (rng.integers(0, 6, n), None),
        "rebleed": (rng.integers(0, 2, n), None),
        "ab_ratio": (rng.uniform(0.05, 0.3, n), None),
        "age": (55.0 + 8.0 * age_z, None),
        "smoker": (smoker, None),
    }
    table = PatientTable.from_columns(schema, data)
    return table, dict(zip(levels, planted)), tau
