"""Shared hypothesis strategies and brute-force oracles for the test suite."""
import itertools

import numpy as np
from hypothesis import strategies as st

from shapleypce.basis import all_subsets


def decompositions(max_dims=5):
    @st.composite
    def build(draw):
        m = draw(st.integers(1, max_dims))
        subsets = all_subsets(m)
        raw = draw(st.lists(st.floats(0, 1), min_size=len(subsets), max_size=len(subsets)))
        zero_mask = draw(st.lists(st.booleans(), min_size=len(subsets), max_size=len(subsets)))
        vals = [0.0 if z else r for r, z in zip(raw, zero_mask)]
        if sum(vals) == 0:
            vals[-1] = 1.0
        tot = sum(vals)
        return m, dict(zip(subsets, [v / tot for v in vals]))
    return build()


def brute_force_shapley(worths, m):
    out = np.zeros(m)
    perms = list(itertools.permutations(range(m)))
    for perm in perms:
        seen = ()
        for i in perm:
            with_i = tuple(sorted(seen + (i,)))
            out[i] += worths[with_i] - worths[seen]
            seen = with_i
    return out / len(perms)
