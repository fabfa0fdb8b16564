"""Card, hand and board primitives plus exact 7-card showdown evaluation.

Cards are integers 0..51 with index = rank*4 + suit (rank 0 = deuce, 12 = ace).
Private two-card hands are integers 0..1325 in triangular order: the pair
{i, j} with i < j maps to j*(j-1)/2 + i.  Boards are short sequences of card
indices.  Hand ranks are totally ordered int64 values packed as
category * 16^5 + five tie-break nibbles, so bigger always means stronger.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

NUM_CARDS = 52
NUM_RANKS = 13
NUM_SUITS = 4
NUM_HANDS = 1326

RANK_CHARS = "23456789TJQKA"
SUIT_CHARS = "cdhs"

# hand category codes used inside HandRank values
HIGH_CARD = 0
PAIR = 1
TWO_PAIR = 2
TRIPS = 3
STRAIGHT = 4
FLUSH = 5
FULL_HOUSE = 6
QUADS = 7
STRAIGHT_FLUSH = 8

# A-2-3-4-5 wheel: rank bits {12, 0, 1, 2, 3}
_WHEEL_MASK = 0x100F


def card_index(rank: int, suit: int) -> int:
    if not (0 <= rank < NUM_RANKS and 0 <= suit < NUM_SUITS):
        raise ValueError(f"bad rank/suit ({rank},{suit})")
    return rank * 4 + suit


def card_rank(card: int) -> int:
    return card >> 2


def card_suit(card: int) -> int:
    return card & 3


def parse_card(text: str) -> int:
    """Parse a card like 'As' or 'Td' into its 0..51 index."""
    if len(text) != 2:
        raise ValueError(f"bad card {text!r}")
    try:
        rank = RANK_CHARS.index(text[0].upper())
        suit = SUIT_CHARS.index(text[1].lower())
    except ValueError:
        raise ValueError(f"bad card {text!r}") from None
    return card_index(rank, suit)


def card_str(card: int) -> str:
    return RANK_CHARS[card >> 2] + SUIT_CHARS[card & 3]


def parse_board(text: str) -> np.ndarray:
    """Parse a board string like 'AsKd7c2h' (spaces allowed) into card indices."""
    text = text.replace(" ", "")
    if len(text) % 2 != 0:
        raise ValueError(f"bad board {text!r}")
    cards = np.array([parse_card(text[i : i + 2]) for i in range(0, len(text), 2)], dtype=np.int64)
    if len(set(cards.tolist())) != len(cards):
        raise ValueError(f"duplicate card in board {text!r}")
    return cards


def board_str(board: Sequence[int]) -> str:
    return "".join(card_str(int(c)) for c in board)


def _build_hand_tables():
    cards = np.zeros((NUM_HANDS, 2), dtype=np.int16)
    pair_to_index = np.full((NUM_CARDS, NUM_CARDS), -1, dtype=np.int32)
    h = 0
    for j in range(NUM_CARDS):
        for i in range(j):
            cards[h, 0] = i
            cards[h, 1] = j
            pair_to_index[i, j] = h
            pair_to_index[j, i] = h
            h += 1
    has_card = np.zeros((NUM_CARDS, NUM_HANDS), dtype=bool)
    for c in range(NUM_CARDS):
        has_card[c, :] = (cards[:, 0] == c) | (cards[:, 1] == c)
    rank_counts = np.zeros((NUM_HANDS, NUM_RANKS), dtype=np.uint8)
    suit_counts = np.zeros((NUM_HANDS, NUM_SUITS), dtype=np.uint8)
    suit_masks = np.zeros((NUM_HANDS, NUM_SUITS), dtype=np.int32)
    for h in range(NUM_HANDS):
        for c in cards[h]:
            rank_counts[h, c >> 2] += 1
            suit_counts[h, c & 3] += 1
            suit_masks[h, c & 3] |= 1 << (c >> 2)
    return cards, pair_to_index, has_card, rank_counts, suit_counts, suit_masks


(
    HAND_CARDS,
    _PAIR_TO_INDEX,
    HAND_HAS_CARD,
    _HAND_RANK_COUNTS,
    _HAND_SUIT_COUNTS,
    _HAND_SUIT_MASKS,
) = _build_hand_tables()


def hand_index(c1: int, c2: int) -> int:
    """Index of the unordered pair {c1, c2}; symmetric in its arguments."""
    if c1 == c2:
        raise ValueError(f"hand needs two distinct cards, got {card_str(c1)} twice")
    return int(_PAIR_TO_INDEX[c1, c2])


def hand_cards(hand: int) -> tuple[int, int]:
    """The two card indices (low, high) of a private hand index."""
    lo, hi = HAND_CARDS[hand]
    return int(lo), int(hi)


def hand_str(hand: int) -> str:
    lo, hi = hand_cards(hand)
    return card_str(hi) + card_str(lo)


def make_deck(name: str = "full") -> np.ndarray:
    """Deck by name: 'full' (52 cards) or 'shortN' (N/4 top ranks, e.g. short20)."""
    if name == "full":
        return np.arange(NUM_CARDS, dtype=np.int64)
    if name.startswith("short"):
        n = int(name[5:])
        if n % 4 != 0 or not 8 <= n <= 52:
            raise ValueError(f"short deck size must be a multiple of 4 in [8,52], got {n}")
        ranks = np.arange(NUM_RANKS - n // 4, NUM_RANKS)
        return (ranks[:, None] * 4 + np.arange(4)[None, :]).ravel().astype(np.int64)
    raise ValueError(f"unknown deck {name!r}")


def deck_hand_mask(deck: np.ndarray) -> np.ndarray:
    """Boolean (1326,) mask of hands whose both cards are in the deck."""
    in_deck = np.zeros(NUM_CARDS, dtype=bool)
    in_deck[deck] = True
    return in_deck[HAND_CARDS[:, 0]] & in_deck[HAND_CARDS[:, 1]]


def valid_hand_mask(board: Sequence[int], deck: np.ndarray | None = None) -> np.ndarray:
    """Boolean (1326,) mask of hands disjoint from the board (and inside deck)."""
    mask = np.ones(NUM_HANDS, dtype=bool) if deck is None else deck_hand_mask(deck)
    for c in board:
        mask &= ~HAND_HAS_CARD[c]
    return mask


def valid_hands(board: Sequence[int], deck: np.ndarray | None = None) -> np.ndarray:
    """Sorted array of private hand indices disjoint from the board."""
    return np.nonzero(valid_hand_mask(board, deck))[0]


def _straight_high(masks: np.ndarray) -> np.ndarray:
    """Highest straight top rank in each 13-bit rank mask, or -1."""
    out = np.full(masks.shape, -1, dtype=np.int64)
    wheel = (masks & _WHEEL_MASK) == _WHEEL_MASK
    out[wheel] = 3
    for high in range(4, NUM_RANKS):
        run = 0b11111 << (high - 4)
        out[(masks & run) == run] = high
    return out


def _top_ranks(present: np.ndarray, k: int) -> np.ndarray:
    """Ranks of the k highest set entries per row of a (N, 13) boolean array.

    Returns (N, k) with -1 padding when fewer than k entries are set.
    """
    n = present.shape[0]
    desc = present[:, ::-1].astype(np.int8)
    cum = np.cumsum(desc, axis=1)
    out = np.full((n, k), -1, dtype=np.int64)
    total = cum[:, -1]
    for i in range(k):
        pos = np.argmax(cum == i + 1, axis=1)
        out[:, i] = np.where(total > i, NUM_RANKS - 1 - pos, -1)
    return out


def _pack(cat: np.ndarray, tb: list[np.ndarray]) -> np.ndarray:
    """Pack category and up to five tie-break ranks into one ordinal."""
    val = cat.astype(np.int64)
    padded = list(tb) + [np.zeros_like(val)] * (5 - len(tb))
    for t in padded:
        val = (val << 4) | np.maximum(t, 0).astype(np.int64)
    return val


def rank_all_hands(board: Sequence[int]) -> np.ndarray:
    """HandRank of every private hand against a 5-card board, vectorized.

    Hands colliding with the board get -1.  This is the workhorse behind
    evaluate7, hand-strength rollouts and CFR showdown terminals.
    """
    board = np.asarray(board, dtype=np.int64)
    if board.shape != (5,):
        raise ValueError("rank_all_hands needs a 5-card board")
    base_rc = np.zeros(NUM_RANKS, dtype=np.uint8)
    base_sm = np.zeros(NUM_SUITS, dtype=np.int32)
    for c in board:
        base_rc[c >> 2] += 1
        base_sm[c & 3] |= 1 << (c >> 2)
    base_sc = np.array([bin(int(m)).count("1") for m in base_sm], dtype=np.uint8)

    rc = _HAND_RANK_COUNTS + base_rc[None, :]
    sc = _HAND_SUIT_COUNTS + base_sc[None, :]
    sm = _HAND_SUIT_MASKS | base_sm[None, :]

    present = rc > 0
    rank_mask = (present.astype(np.int64) << np.arange(NUM_RANKS)[None, :]).sum(axis=1)

    straight = _straight_high(rank_mask)
    flush_suit = np.argmax(sc >= 5, axis=1)
    has_flush = sc[np.arange(NUM_HANDS), flush_suit] >= 5
    flush_mask = np.where(has_flush, sm[np.arange(NUM_HANDS), flush_suit], 0)
    sflush = _straight_high(flush_mask)

    quad = _top_ranks(rc == 4, 1)[:, 0]
    trips2 = _top_ranks(rc == 3, 2)
    trips, trips_lo = trips2[:, 0], trips2[:, 1]
    pairs2 = _top_ranks(rc == 2, 2)
    pair_hi, pair_lo = pairs2[:, 0], pairs2[:, 1]
    # the pair side of a full house may be a second trips
    fh_pair = np.maximum(trips_lo, pair_hi)

    def kickers(exclude: list[np.ndarray], k: int) -> np.ndarray:
        rem = present.copy()
        for e in exclude:
            sel = e >= 0
            rem[np.nonzero(sel)[0], np.maximum(e[sel], 0)] = False
        return _top_ranks(rem, k)

    k_quad = kickers([quad], 1)
    k_trip = kickers([trips], 2)
    k_twop = kickers([pair_hi, pair_lo], 1)
    k_pair = kickers([pair_hi], 3)
    k_high = _top_ranks(present, 5)
    k_flush = _top_ranks((flush_mask[:, None] >> np.arange(NUM_RANKS)[None, :]) & 1 > 0, 5)

    conds = [
        sflush >= 0,
        quad >= 0,
        (trips >= 0) & (fh_pair >= 0),
        has_flush,
        straight >= 0,
        trips >= 0,
        pair_lo >= 0,
        pair_hi >= 0,
    ]
    vals = [
        _pack(np.full(NUM_HANDS, STRAIGHT_FLUSH), [sflush]),
        _pack(np.full(NUM_HANDS, QUADS), [quad, k_quad[:, 0]]),
        _pack(np.full(NUM_HANDS, FULL_HOUSE), [trips, fh_pair]),
        _pack(np.full(NUM_HANDS, FLUSH), [k_flush[:, i] for i in range(5)]),
        _pack(np.full(NUM_HANDS, STRAIGHT), [straight]),
        _pack(np.full(NUM_HANDS, TRIPS), [trips, k_trip[:, 0], k_trip[:, 1]]),
        _pack(np.full(NUM_HANDS, TWO_PAIR), [pair_hi, pair_lo, k_twop[:, 0]]),
        _pack(np.full(NUM_HANDS, PAIR), [pair_hi] + [k_pair[:, i] for i in range(3)]),
    ]
    out = np.select(conds, vals, default=_pack(np.zeros(NUM_HANDS, dtype=np.int64), [k_high[:, i] for i in range(5)]))
    out[~valid_hand_mask(board)] = -1
    return out


def rank_category(rank: int) -> int:
    """Category code (HIGH_CARD..STRAIGHT_FLUSH) of a packed HandRank."""
    return int(rank) >> 20


def evaluate7(board: Sequence[int], hand: int) -> int:
    """Best 5-card rank of a hand's two cards plus a 5-card board."""
    lo, hi = hand_cards(hand)
    if lo in [int(c) for c in board] or hi in [int(c) for c in board]:
        raise ValueError(f"hand {hand_str(hand)} collides with board {board_str(board)}")
    return int(rank_all_hands(board)[hand])


def river_cards(board: Sequence[int], deck: np.ndarray) -> np.ndarray:
    """Deck cards not already on the board, in index order."""
    on_board = np.zeros(NUM_CARDS, dtype=bool)
    for c in board:
        on_board[c] = True
    return deck[~on_board[deck]]


def check_distinct(cards: Iterable[int]) -> None:
    seen = set()
    for c in cards:
        if c in seen:
            raise ValueError(f"duplicate card {card_str(int(c))}")
        seen.add(int(c))
