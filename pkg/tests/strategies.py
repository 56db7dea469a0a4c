"""Hypothesis strategies for random process specs."""

import numpy as np
from hypothesis import strategies as st

from socialq.processes import BernoulliBatch, Constant, DiscreteUniform, MarkovModulated, Poisson

rates = st.floats(0.0, 20.0, allow_nan=False, allow_infinity=False)


@st.composite
def markov_specs(draw, max_states=4):
    n = draw(st.integers(2, max_states))
    raw = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=n * n, max_size=n * n))).reshape(n, n)
    P = raw / raw.sum(axis=1, keepdims=True)
    r = draw(st.lists(rates, min_size=n, max_size=n))
    return MarkovModulated(P.tolist(), r)


def specs(bounded_only=False):
    base = [
        rates.map(Constant),
        st.builds(BernoulliBatch, rates, st.floats(0.0, 1.0)),
        st.lists(rates, min_size=1, max_size=6).map(lambda v: DiscreteUniform(tuple(v))),
        markov_specs(),
    ]
    if not bounded_only:
        base.append(st.floats(0.0, 20.0).map(Poisson))
    return st.one_of(*base)

