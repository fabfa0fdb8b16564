"""Hand-strength features: HS, E[HS], E[HS2] and HS histograms.

HS is win probability against a uniform opponent range with ties counting
half, card removal applied.  Turn features average over all river cards not
colliding with board or hand (46 in the full deck).  The per-board river
rank tables are cached because every abstraction builder hits them for all
1326 hands at once.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .cards import (
    HAND_CARDS,
    NUM_CARDS,
    NUM_HANDS,
    board_str,
    hand_cards,
    make_deck,
    rank_all_hands,
    river_cards,
    valid_hand_mask,
)

_FULL_DECK = make_deck("full")


def _check_disjoint(board, hand: int) -> None:
    lo, hi = hand_cards(hand)
    if lo in [int(c) for c in board] or hi in [int(c) for c in board]:
        raise ValueError(f"hand collides with board {board_str(board)}")


@lru_cache(maxsize=32)
def _turn_tables_cached(board_key: tuple, deck_key: tuple):
    board = np.array(board_key, dtype=np.int64)
    deck = np.array(deck_key, dtype=np.int64)
    rivers = river_cards(board, deck)
    ranks = np.empty((len(rivers), NUM_HANDS), dtype=np.int64)
    masks = np.empty((len(rivers), NUM_HANDS), dtype=bool)
    deck_valid = valid_hand_mask(board, deck)
    for i, r in enumerate(rivers):
        full_board = np.append(board, r)
        ranks[i] = rank_all_hands(full_board)
        masks[i] = deck_valid & valid_hand_mask(full_board)
    return rivers, ranks, masks


def turn_tables(board, deck: np.ndarray | None = None):
    """(rivers, ranks, masks) for a 4-card board.

    ranks is (R, 1326) packed hand ranks per river; masks flags hands valid
    for that river within the deck.  Cached per (board, deck).
    """
    board = np.asarray(board, dtype=np.int64)
    if board.shape != (4,):
        raise ValueError("turn_tables needs a 4-card board")
    if deck is None:
        deck = _FULL_DECK
    return _turn_tables_cached(tuple(board.tolist()), tuple(np.asarray(deck).tolist()))


def _hs_one_river(ranks: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """HS for every valid hand on one river, card removal included.

    Uses per-card sorted rank lists and inclusion-exclusion: the opponent
    hands overlapping hand {a, b} are exactly those containing a or b, and
    no opponent hand shares both cards.
    """
    vh = np.nonzero(mask)[0]
    r = ranks[vh]
    order = np.argsort(r, kind="stable")
    sorted_r = r[order]
    n = len(vh)
    # hands strictly worse / equal among all valid hands
    lo = np.searchsorted(sorted_r, r, side="left")
    hi = np.searchsorted(sorted_r, r, side="right")
    worse = lo.astype(np.float64)
    eq = (hi - lo).astype(np.float64)
    opp = np.full(n, n, dtype=np.float64)
    a = HAND_CARDS[vh, 0]
    b = HAND_CARDS[vh, 1]
    for c in np.unique(np.concatenate([a, b])):
        holds = (a == c) | (b == c)
        rc = np.sort(r[holds])
        cnt = len(rc)
        w_c = np.searchsorted(rc, r[holds], side="left")
        e_c = np.searchsorted(rc, r[holds], side="right") - w_c
        worse[holds] -= w_c
        eq[holds] -= e_c
        opp[holds] -= cnt
    # the hand itself was subtracted twice (once per own card) but must be
    # excluded exactly once, so add it back
    eq += 1
    opp += 1
    out = np.full(NUM_HANDS, np.nan)
    out[vh] = (worse + 0.5 * eq) / opp
    return out


@lru_cache(maxsize=16)
def _river_hs_cached(board_key: tuple, deck_key: tuple) -> np.ndarray:
    rivers, ranks, masks = _turn_tables_cached(board_key, deck_key)
    out = np.empty((len(rivers), NUM_HANDS))
    for i in range(len(rivers)):
        out[i] = _hs_one_river(ranks[i], masks[i])
    return out


def river_hs_table(board, deck: np.ndarray | None = None) -> np.ndarray:
    """(R, 1326) river HS values; NaN where the hand collides."""
    board = np.asarray(board, dtype=np.int64)
    if deck is None:
        deck = _FULL_DECK
    return _river_hs_cached(tuple(board.tolist()), tuple(np.asarray(deck).tolist()))


def hand_strength(board, hand: int, deck: np.ndarray | None = None) -> float:
    """(wins + 0.5*ties) / opponents for a 5-card board."""
    board = np.asarray(board, dtype=np.int64)
    if board.shape != (5,):
        raise ValueError("hand_strength needs a 5-card board")
    _check_disjoint(board, hand)
    if deck is None:
        deck = _FULL_DECK
    ranks = rank_all_hands(board)
    mask = valid_hand_mask(board, deck)
    if not mask[hand]:
        raise ValueError("hand not in deck")
    return float(_hs_one_river(ranks, mask)[hand])


def _ehs_moments(board, deck):
    hs = river_hs_table(board, deck)
    cnt = np.sum(~np.isnan(hs), axis=0)
    with np.errstate(invalid="ignore"):
        e1 = np.nansum(hs, axis=0) / np.maximum(cnt, 1)
        e2 = np.nansum(hs * hs, axis=0) / np.maximum(cnt, 1)
    dead = cnt == 0
    e1[dead] = np.nan
    e2[dead] = np.nan
    return e1, e2


def expected_hs_all(board, deck: np.ndarray | None = None) -> np.ndarray:
    """E[HS] for all 1326 hands on a 4-card board (NaN when invalid)."""
    return _ehs_moments(np.asarray(board, dtype=np.int64), deck)[0]


def expected_hs2_all(board, deck: np.ndarray | None = None) -> np.ndarray:
    """E[HS2] for all 1326 hands on a 4-card board (NaN when invalid)."""
    return _ehs_moments(np.asarray(board, dtype=np.int64), deck)[1]


def expected_hs(board, hand: int, deck: np.ndarray | None = None) -> float:
    _check_disjoint(board, hand)
    v = float(expected_hs_all(board, deck)[hand])
    if np.isnan(v):
        raise ValueError("hand not in deck")
    return v


def expected_hs2(board, hand: int, deck: np.ndarray | None = None) -> float:
    _check_disjoint(board, hand)
    v = float(expected_hs2_all(board, deck)[hand])
    if np.isnan(v):
        raise ValueError("hand not in deck")
    return v


DEFAULT_HIST_BINS = 50


def hs_histograms_all(board, bins: int = DEFAULT_HIST_BINS, deck: np.ndarray | None = None) -> np.ndarray:
    """(1326, bins) histograms of river HS values, rows summing to 1.

    Each river contributes mass 1/R to bin floor(HS*bins), with HS = 1.0
    clamped into the top bin.  Rows for invalid hands are all zero.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    hs = river_hs_table(board, deck)
    live = ~np.isnan(hs)
    idx = np.minimum((np.nan_to_num(hs) * bins).astype(np.int64), bins - 1)
    counts = np.zeros((NUM_HANDS, bins), dtype=np.int64)
    hand_ids = np.broadcast_to(np.arange(NUM_HANDS)[None, :], hs.shape)
    np.add.at(counts, (hand_ids[live], idx[live]), 1)
    totals = counts.sum(axis=1)
    out = counts.astype(np.float64)
    nz = totals > 0
    out[nz] /= totals[nz, None]
    return out


def hs_histogram(board, hand: int, bins: int = DEFAULT_HIST_BINS, deck: np.ndarray | None = None) -> np.ndarray:
    _check_disjoint(board, hand)
    row = hs_histograms_all(board, bins, deck)[hand]
    if row.sum() == 0:
        raise ValueError("hand not in deck")
    return row
