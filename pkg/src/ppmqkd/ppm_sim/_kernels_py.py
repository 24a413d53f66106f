"""Pure-Python first-click resolution.

Each frame has a prompt candidate per detector (earliest photon or dark click,
``N`` meaning none).  A click spawns at most one afterpulse, with probability
``p_ap``, ``delay`` gates later; each detector keeps a single pending afterpulse.
Afterpulses landing in the frame of their parent click are dropped because they
cannot precede it.  The frame outcome is the earliest click over both detectors,
ties going to the key detector (path 0); path 1 is the Franson detector.

Only frames that hold a prompt click or a pending afterpulse are visited, so the
loop is proportional to the click count rather than the frame count.
"""
from __future__ import annotations

import numpy as np


def resolve_clicks(prompt_key, prompt_fr, u_key, u_fr, delay_key, delay_fr, N, p_ap):
    n = len(prompt_key)
    key_first = (prompt_key < N) & (prompt_key <= prompt_fr)
    fr_first = ~key_first & (prompt_fr < N)
    out_bin = np.full(n, -1, dtype=np.int16)
    out_path = np.full(n, -1, dtype=np.int8)
    out_bin[key_first] = prompt_key[key_first]
    out_path[key_first] = 0
    out_bin[fr_first] = prompt_fr[fr_first]
    out_path[fr_first] = 1
    if p_ap <= 0 or n == 0:
        return out_bin, out_path

    pk = prompt_key.tolist()
    pf = prompt_fr.tolist()
    events = np.flatnonzero((prompt_key < N) | (prompt_fr < N)).tolist()
    n_events = len(events)
    ptr = 0
    pend_k = pend_f = -1
    while True:
        nxt = events[ptr] if ptr < n_events else n
        if pend_k >= 0 and pend_k // N < nxt:
            nxt = pend_k // N
        if pend_f >= 0 and pend_f // N < nxt:
            nxt = pend_f // N
        if nxt >= n:
            break
        i = nxt
        if ptr < n_events and events[ptr] == i:
            ptr += 1
        base = i * N
        hi = base + N
        ck, cf = pk[i], pf[i]
        if 0 <= pend_k < hi:
            ck = min(ck, pend_k - base)
            pend_k = -1
        if 0 <= pend_f < hi:
            cf = min(cf, pend_f - base)
            pend_f = -1
        if ck < N and u_key[i] < p_ap:
            pend_k = base + ck + int(delay_key[i])
            if pend_k < hi:
                pend_k = -1
        if cf < N and u_fr[i] < p_ap:
            pend_f = base + cf + int(delay_fr[i])
            if pend_f < hi:
                pend_f = -1
        if ck < N and ck <= cf:
            out_bin[i], out_path[i] = ck, 0
        elif cf < N:
            out_bin[i], out_path[i] = cf, 1
        else:
            out_bin[i], out_path[i] = -1, -1
    return out_bin, out_path
