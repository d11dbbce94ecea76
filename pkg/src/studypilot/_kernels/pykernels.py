"""NumPy reference implementations of the hot numeric kernels.

These are the fallback used when the compiled extension is unavailable.
Both backends implement identical semantics: the matcher consumes the same
pre-drawn random numbers, so the pair lists agree exactly, and the density
evaluations agree to floating-point roundoff.
"""
import numpy as np

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def kde_gauss_reflect(x, grid, h, chunk=4096):
    """Gaussian KDE on ``grid`` with boundary reflection at 0 and 1.

    Each observation contributes its kernel plus the kernels of its mirror
    images ``-x`` and ``2 - x``, which removes the mass the plain estimator
    would spill outside the unit interval.
    """
    x = np.asarray(x, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    out = np.zeros_like(grid)
    for start in range(0, x.size, chunk):
        block = x[start:start + chunk]
        for refl in (block, -block, 2.0 - block):
            d = (grid[:, None] - refl[None, :]) / h
            out += np.exp(-0.5 * d * d).sum(axis=1)
    out *= _INV_SQRT_2PI / (x.size * h)
    return out


def greedy_caliper_match(t_logits, c_logits, order, uniforms, caliper,
                         ratio, with_replacement):
    """Greedy stochastic caliper matching on sorted control logits.

    Parameters
    ----------
    t_logits : float array (nt,)
        Treated logit scores in their original order.
    c_logits : float array (nc,), sorted ascending
        Control logit scores.
    order : int array (nt,)
        Processing order over treated indices.
    uniforms : float array (nt, ratio)
        Pre-drawn uniforms; the draw for treated processed at rank ``r``,
        slot ``s`` is ``uniforms[r, s]``.
    caliper : float
        Maximum |logit difference| for an eligible control.
    ratio : int
        Controls sought per treated.
    with_replacement : bool
        Whether a control may serve several treated patients.  A control is
        never paired twice with the same treated either way.

    Returns
    -------
    (pairs_t, pairs_c) : int arrays
        Matched pairs; ``pairs_c`` holds positions into ``c_logits``.
    """
    t_logits = np.asarray(t_logits, dtype=np.float64)
    c_logits = np.asarray(c_logits, dtype=np.float64)
    nc = c_logits.size
    alive = np.ones(nc, dtype=bool)
    pairs_t = []
    pairs_c = []
    for rank, ti in enumerate(order):
        t = t_logits[ti]
        lo = np.searchsorted(c_logits, t - caliper, side="left")
        hi = np.searchsorted(c_logits, t + caliper, side="right")
        taken = []
        for slot in range(ratio):
            window = np.nonzero(alive[lo:hi])[0]
            if window.size == 0:
                break
            u = uniforms[rank, slot]
            j = int(u * window.size)
            if j >= window.size:  # guard: u may be the largest float < 1
                j = window.size - 1
            pos = lo + window[j]
            pairs_t.append(ti)
            pairs_c.append(pos)
            alive[pos] = False
            taken.append(pos)
        if with_replacement:
            alive[taken] = True
    return (np.asarray(pairs_t, dtype=np.int64),
            np.asarray(pairs_c, dtype=np.int64))
