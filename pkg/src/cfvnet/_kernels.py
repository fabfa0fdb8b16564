"""Numba-compiled inner loops.

Single-core throughput is the whole game here: dataset generation runs one
CFR solve per example and the EMD k-means runs per board, so these loops are
fused and allocation-free.  Everything is deterministic: fixed iteration
order, no threading, no fastmath reassociation.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def emd_cum_dist_matrix(xc, cc, out):
    """out[i, j] = mean |xc[i] - cc[j]| over bins (1-D EMD on cumsums)."""
    n, b = xc.shape
    k = cc.shape[0]
    inv = 1.0 / b
    for i in range(n):
        for j in range(k):
            s = 0.0
            for t in range(b):
                d = xc[i, t] - cc[j, t]
                s += d if d >= 0 else -d
            out[i, j] = s * inv


@njit(cache=True, inline="always")
def _fold_eval(out, opp, off, nr, H, F, hc0, hc1, cards):
    """out[r,h] = F * (total opp reach compatible with h), inclusion-exclusion.

    Hands overlapping {a, b} are those containing a or b; no other hand
    contains both, so compat = T - S[a] - S[b] + opp[h].
    """
    nc = cards.shape[0]
    for r in range(nr):
        base = off + r * H
        for c in range(nc):
            cards[c] = 0.0
        tot = 0.0
        for j in range(H):
            w = opp[base + j]
            tot += w
            cards[hc0[j]] += w
            if hc1[j] >= 0:
                cards[hc1[j]] += w
        for j in range(H):
            v = tot - cards[hc0[j]]
            if hc1[j] >= 0:
                v = v - cards[hc1[j]] + opp[base + j]
            out[base + j] = F * v


@njit(cache=True, inline="always")
def _showdown_eval(out, opp, off, nr, H, S, so_hand, so_gs, so_ge, so_fa, so_fb,
                   fl_pos, fl_gs, fl_ge, fl_ss, fl_se, r_slot0, r_flat0, sw, pre, fw, fpre):
    """out[r,h] = S * (compat reach on worse hands - compat reach on better).

    Hands are pre-sorted by rank per river with tie groups; per-card flat
    segments supply the overlap corrections via exclusive prefix sums.
    """
    for r in range(nr):
        base = off + r * H
        s0 = r_slot0[r]
        s1 = r_slot0[r + 1]
        f0 = r_flat0[r]
        f1 = r_flat0[r + 1]
        acc = 0.0
        for p in range(s0, s1):
            sw[p] = opp[base + so_hand[p]]
            pre[p] = acc
            acc += sw[p]
        pre[s1] = acc
        facc = 0.0
        for i in range(f0, f1):
            fw[i] = sw[fl_pos[i]]
            fpre[i] = facc
            facc += fw[i]
        fpre[f1] = facc
        for p in range(s0, s1):
            worse = pre[so_gs[p]] - pre[s0]
            better = pre[s1] - pre[so_ge[p]]
            ia = so_fa[p]
            worse -= fpre[fl_gs[ia]] - fpre[fl_ss[ia]]
            better -= fpre[fl_se[ia]] - fpre[fl_ge[ia]]
            ib = so_fb[p]
            if ib >= 0:
                worse -= fpre[fl_gs[ib]] - fpre[fl_ss[ib]]
                better -= fpre[fl_se[ib]] - fpre[fl_ge[ib]]
            out[base + so_hand[p]] = S * (worse - better)


@njit(cache=True)
def cfr_forward(kind, actor, nact, child0, children, slab, slab_len, reg,
                regrets, strat, ssum, reach0, reach1, masks, R, H,
                use_given_strat, br_player, acc_ssum, w):
    """Top-down sweep: regret matching and reach propagation.

    Nodes are in topological order (parents first).  br_player >= 0 makes
    that player's reach pass through unweighted (best-response mode);
    use_given_strat skips regret matching and reads `strat` as-is.
    """
    n = kind.shape[0]
    for i in range(n):
        k = kind[i]
        if k == 0:
            A = nact[i]
            L = slab_len[i]
            s = slab[i]
            ro = reg[i]
            p = actor[i]
            if use_given_strat == 0:
                for j in range(L):
                    tot = 0.0
                    for a in range(A):
                        v = regrets[ro + a * L + j]
                        if v > 0.0:
                            tot += v
                    if tot > 0.0:
                        for a in range(A):
                            v = regrets[ro + a * L + j]
                            strat[ro + a * L + j] = v / tot if v > 0.0 else 0.0
                    else:
                        u = np.float32(1.0) / A
                        for a in range(A):
                            strat[ro + a * L + j] = u
            reach_p = reach0 if p == 0 else reach1
            reach_o = reach1 if p == 0 else reach0
            if acc_ssum != 0:
                for a in range(A):
                    b = ro + a * L
                    for j in range(L):
                        ssum[b + j] += w * reach_p[s + j] * strat[b + j]
            for a in range(A):
                c = children[child0[i] + a]
                cs = slab[c]
                b = ro + a * L
                if br_player == p:
                    for j in range(L):
                        reach_p[cs + j] = reach_p[s + j]
                else:
                    for j in range(L):
                        reach_p[cs + j] = reach_p[s + j] * strat[b + j]
                for j in range(L):
                    reach_o[cs + j] = reach_o[s + j]
        elif k == 1:
            c = children[child0[i]]
            s = slab[i]
            cs = slab[c]
            for r in range(R):
                mo = r * H
                for j in range(H):
                    m = masks[mo + j]
                    reach0[cs + mo + j] = reach0[s + j] * m
                    reach1[cs + mo + j] = reach1[s + j] * m


@njit(cache=True)
def cfr_backward(kind, actor, nact, child0, children, slab, slab_len, reg, rlev,
                 regrets, strat, cv0, cv1, reach0, reach1, masks, chance_inv, R, H,
                 compute0, compute1, update_player, plus, br_player, amt, evalr,
                 hc0, hc1, cards,
                 so_hand, so_gs, so_ge, so_fa, so_fb,
                 fl_pos, fl_gs, fl_ge, fl_ss, fl_se, r_slot0, r_flat0,
                 bs_hand, bs_gs, bs_ge, bs_fa, bs_fb,
                 bf_pos, bf_gs, bf_ge, bf_ss, bf_se, b_slot0, b_flat0,
                 sw, pre, fw, fpre):
    """Bottom-up sweep: terminal evaluation, CV combination, regret update."""
    n = kind.shape[0]
    for i in range(n - 1, -1, -1):
        k = kind[i]
        s = slab[i]
        if k == 2:
            nr = R if rlev[i] == 1 else 1
            F = amt[i]
            winner = actor[i]
            if compute0 != 0:
                _fold_eval(cv0, reach1, s, nr, H, F if winner == 0 else -F, hc0, hc1, cards)
            if compute1 != 0:
                _fold_eval(cv1, reach0, s, nr, H, F if winner == 1 else -F, hc0, hc1, cards)
        elif k == 3:
            S = amt[i]
            if evalr[i] == 1:
                if compute0 != 0:
                    _showdown_eval(cv0, reach1, s, R, H, S, so_hand, so_gs, so_ge, so_fa, so_fb,
                                   fl_pos, fl_gs, fl_ge, fl_ss, fl_se, r_slot0, r_flat0, sw, pre, fw, fpre)
                if compute1 != 0:
                    _showdown_eval(cv1, reach0, s, R, H, S, so_hand, so_gs, so_ge, so_fa, so_fb,
                                   fl_pos, fl_gs, fl_ge, fl_ss, fl_se, r_slot0, r_flat0, sw, pre, fw, fpre)
            else:
                if compute0 != 0:
                    _showdown_eval(cv0, reach1, s, 1, H, S, bs_hand, bs_gs, bs_ge, bs_fa, bs_fb,
                                   bf_pos, bf_gs, bf_ge, bf_ss, bf_se, b_slot0, b_flat0, sw, pre, fw, fpre)
                if compute1 != 0:
                    _showdown_eval(cv1, reach0, s, 1, H, S, bs_hand, bs_gs, bs_ge, bs_fa, bs_fb,
                                   bf_pos, bf_gs, bf_ge, bf_ss, bf_se, b_slot0, b_flat0, sw, pre, fw, fpre)
        elif k == 1:
            c = children[child0[i]]
            cs = slab[c]
            if compute0 != 0:
                for j in range(H):
                    acc = 0.0
                    for r in range(R):
                        acc += masks[r * H + j] * cv0[cs + r * H + j]
                    cv0[s + j] = chance_inv * acc
            if compute1 != 0:
                for j in range(H):
                    acc = 0.0
                    for r in range(R):
                        acc += masks[r * H + j] * cv1[cs + r * H + j]
                    cv1[s + j] = chance_inv * acc
        else:
            A = nact[i]
            L = slab_len[i]
            ro = reg[i]
            p = actor[i]
            for q in range(2):
                if q == 0 and compute0 == 0:
                    continue
                if q == 1 and compute1 == 0:
                    continue
                cv = cv0 if q == 0 else cv1
                if p == q and br_player == q:
                    c = children[child0[i]]
                    cs = slab[c]
                    for j in range(L):
                        cv[s + j] = cv[cs + j]
                    for a in range(1, A):
                        c = children[child0[i] + a]
                        cs = slab[c]
                        for j in range(L):
                            if cv[cs + j] > cv[s + j]:
                                cv[s + j] = cv[cs + j]
                elif p == q:
                    for j in range(L):
                        cv[s + j] = 0.0
                    for a in range(A):
                        c = children[child0[i] + a]
                        cs = slab[c]
                        b = ro + a * L
                        for j in range(L):
                            cv[s + j] += strat[b + j] * cv[cs + j]
                else:
                    for j in range(L):
                        cv[s + j] = 0.0
                    for a in range(A):
                        c = children[child0[i] + a]
                        cs = slab[c]
                        for j in range(L):
                            cv[s + j] += cv[cs + j]
            if update_player == p and br_player < 0:
                cvp = cv0 if p == 0 else cv1
                for a in range(A):
                    c = children[child0[i] + a]
                    cs = slab[c]
                    b = ro + a * L
                    if plus != 0:
                        for j in range(L):
                            v = regrets[b + j] + np.float32(cvp[cs + j] - cvp[s + j])
                            regrets[b + j] = v if v > 0.0 else np.float32(0.0)
                    else:
                        for j in range(L):
                            regrets[b + j] += np.float32(cvp[cs + j] - cvp[s + j])


@njit(cache=True)
def build_flat_groups(seg_slots, seg_off, n_seg, slot_gs, slot_ge, fl_gs, fl_ge, base):
    """Per flat element, its rank-tie group bounds within its card segment.

    seg_slots holds ascending sorted-slot ids per segment; groups are
    contiguous slot ranges, so a two-pointer merge finds each element's
    group start and end inside the segment.
    """
    for seg in range(n_seg):
        a = seg_off[seg]
        b = seg_off[seg + 1]
        lo = a
        hi = a
        for i in range(a, b):
            p = seg_slots[i]
            g0 = slot_gs[p]
            g1 = slot_ge[p]
            while lo < b and seg_slots[lo] < g0:
                lo += 1
            if hi < lo:
                hi = lo
            while hi < b and seg_slots[hi] < g1:
                hi += 1
            fl_gs[i] = base + lo
            fl_ge[i] = base + hi


@njit(cache=True)
def farthest_point_seed(xc, first, k, seed_out):
    """Farthest-point seeding on cumsum space; ties go to the lowest index."""
    n, b = xc.shape
    inv = 1.0 / b
    mind = np.empty(n)
    for i in range(n):
        s = 0.0
        for t in range(b):
            d = xc[i, t] - xc[first, t]
            s += d if d >= 0 else -d
        mind[i] = s * inv
    seed_out[0] = first
    for j in range(1, k):
        best = 0
        bestd = mind[0]
        for i in range(1, n):
            if mind[i] > bestd:
                bestd = mind[i]
                best = i
        seed_out[j] = best
        for i in range(n):
            s = 0.0
            for t in range(b):
                d = xc[i, t] - xc[best, t]
                s += d if d >= 0 else -d
            s *= inv
            if s < mind[i]:
                mind[i] = s
