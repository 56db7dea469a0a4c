"""Compiled inner loops for the inherently serial recursions."""

import numpy as np
from numba import njit


@njit(cache=True)
def markov_walk(cum, u, s0):
    n = u.shape[0]
    states = np.empty(n, dtype=np.int64)
    s = s0
    for t in range(n):
        states[t] = s
        row = cum[s]
        k = 0
        while u[t] > row[k]:
            k += 1
        s = k
    return states


@njit(cache=True)
def capped_queue(q0, arrivals, departures, c_max):
    """Levels after each slot of ``q <- min(c_max, max(q + a - r, 0))``."""
    n = arrivals.shape[0]
    out = np.empty(n)
    q = q0
    for t in range(n):
        q = q + arrivals[t] - departures[t]
        if q < 0.0:
            q = 0.0
        elif q > c_max:
            q = c_max
        out[t] = q
    return out


@njit(cache=True)
def credit_spend(q0, earn, request, c_max, c_th, hard_floor, out_levels, out_spend):
    """Credit recursion with spending truncated at what the account can pay.

    ``hard_floor`` limits spending to the credit above ``c_th``; otherwise
    spending is limited by the current credit plus this slot's income.
    Returns the final level.
    """
    q = q0
    for t in range(earn.shape[0]):
        e = earn[t]
        if hard_floor:
            room = q - c_th
            if room <= 0.0:
                s = 0.0
                q = q + e
            elif request[t] >= room:
                s = room
                q = c_th + e
            else:
                s = request[t]
                q = q + e - s
        else:
            room = q + e
            s = request[t] if request[t] < room else room
            q = q + e - s
            if q < 0.0:
                q = 0.0
        if q > c_max:
            q = c_max
        out_levels[t] = q
        out_spend[t] = s
    return q
