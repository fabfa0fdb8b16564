"""Random turn situations, CFR-solved into training examples.

Each example is generated from an RNG derived from (root seed, index), so a
dataset is a pure function of (n, seed, config) no matter how generation is
scheduled across workers.  Counterfactual values are stored pot-normalized.
"""

from __future__ import annotations

import csv
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .cards import NUM_HANDS, board_str, make_deck, valid_hands
from .subgame import ActionConfig, CvPair, DEFAULT_ACTIONS, SubgameSpec, build_turn_tree, cfr_solve

DEFAULT_POT_FRACTIONS = (0.02, 0.04, 0.08, 0.16, 0.32, 0.64)


@dataclass(frozen=True)
class CfrConfig:
    iterations: int = 1000
    averaging_start: int = 500
    plus_variant: bool = True


@dataclass(frozen=True)
class DatagenConfig:
    deck: str = "full"
    pot_fractions: tuple = DEFAULT_POT_FRACTIONS
    stack_depth: float = 200.0  # total chips in play: pot + both stacks
    cfr: CfrConfig = field(default_factory=CfrConfig)
    actions: ActionConfig = DEFAULT_ACTIONS


@dataclass
class TrainingExample:
    spec: SubgameSpec
    cvs: CvPair


def derive_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


@lru_cache(maxsize=8)
def _split_tree(n: int):
    """Level-order description of the binary mass-splitting tree over n slots.

    Each level holds (left-share array, slot -> interval id, slot in left
    half, slot in a split interval); the shape depends only on n, so a
    sample is one Beta draw per interval and a vectorized multiply per
    level.
    """
    levels = []
    intervals = [(0, n)]
    while True:
        split = [(lo, hi) for lo, hi in intervals if hi - lo > 1]
        if not split:
            break
        idx = np.zeros(n, dtype=np.int64)
        left = np.zeros(n, dtype=bool)
        touched = np.zeros(n, dtype=bool)
        share = np.empty(len(split))
        nxt = []
        for j, (lo, hi) in enumerate(split):
            mid = (lo + hi) // 2
            share[j] = (mid - lo) / (hi - lo)
            idx[lo:hi] = j
            left[lo:mid] = True
            touched[lo:hi] = True
            nxt.append((lo, mid))
            nxt.append((mid, hi))
        levels.append((share, idx, left, touched))
        intervals = nxt
    return levels


# Beta concentration for the range splitter.  Lower is spikier; 0.4 gives
# ranges concentrated enough that counterfactual values vary meaningfully
# within suit-isomorphism classes, like ranges filtered by real betting.
RANGE_CONCENTRATION = 0.4


def sample_range(rng: np.random.Generator, board, deck: np.ndarray | None = None) -> np.ndarray:
    """Recursive mass splitting over the valid hands, spiky by construction.

    The set of valid hands (ascending hand index) starts with mass 1; each
    split divides the current set's mass between its index halves by a
    fraction drawn from Beta(a*p, a*(1-p)), p being the left half's share
    of slots and a = RANGE_CONCENTRATION, so every valid hand has expected
    mass exactly 1/|valid| while neighbouring hands (which share a card)
    get correlated weight.
    """
    hands = valid_hands(np.asarray(board), deck)
    n = len(hands)
    a = RANGE_CONCENTRATION
    mass = np.ones(n)
    for share, idx, left, touched in _split_tree(n):
        f = rng.beta(a * share, a * (1.0 - share))[idx]
        mass *= np.where(touched, np.where(left, f, 1.0 - f), 1.0)
    out = np.zeros(NUM_HANDS)
    out[hands] = mass
    return out / out.sum()


def sample_situation(rng: np.random.Generator, config: DatagenConfig = DatagenConfig()) -> SubgameSpec:
    deck = make_deck(config.deck)
    board = rng.choice(deck, size=4, replace=False).astype(np.int64)
    pot = float(rng.choice(config.pot_fractions)) * config.stack_depth
    stack = (config.stack_depth - pot) / 2.0
    r1 = sample_range(rng, board, deck)
    r2 = sample_range(rng, board, deck)
    return SubgameSpec(board=board, pot=pot, stack=stack, range1=r1, range2=r2)


def solve_example(index: int, seed: int, config: DatagenConfig) -> TrainingExample:
    rng = derive_rng(seed, index)
    spec = sample_situation(rng, config)
    deck = make_deck(config.deck)
    tree = build_turn_tree(spec, config.actions, deck=deck)
    cvs = cfr_solve(
        tree, spec,
        iterations=config.cfr.iterations,
        averaging_start=config.cfr.averaging_start,
        plus_variant=config.cfr.plus_variant,
    )
    return TrainingExample(spec=spec, cvs=cvs)


def generate_dataset(
    n: int,
    seed: int,
    config: DatagenConfig = DatagenConfig(),
    threads: int = 1,
    progress=None,
) -> list[TrainingExample]:
    if n < 1:
        raise ValueError("n must be >= 1")
    out: list = [None] * n

    def work(i):
        out[i] = solve_example(i, seed, config)
        if progress is not None:
            progress(i)

    if threads <= 1:
        for i in range(n):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(n)))
    return out


def train_test_split(n: int) -> tuple[np.ndarray, np.ndarray]:
    """First 80% of indices train, last 20% test."""
    cut = (n * 8) // 10
    return np.arange(cut), np.arange(cut, n)


# ------------------------------------------------------------------- file io

_MAGIC = b"CFVD"
_VERSION = 1
_HEADER = struct.Struct("<4sHQ")
_FIXED = struct.Struct("<4Bff")
_VEC = struct.Struct(f"<{NUM_HANDS}f")


def save_dataset(path, examples: list[TrainingExample]) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, len(examples)))
        for ex in examples:
            s = ex.spec
            f.write(_FIXED.pack(*(int(c) for c in s.board), s.pot, s.stack))
            for vec in (s.range1, s.range2, ex.cvs.v1, ex.cvs.v2):
                f.write(np.asarray(vec, dtype="<f4").tobytes())


def load_dataset(path) -> list[TrainingExample]:
    with open(path, "rb") as f:
        raw = f.read()
    magic, version, count = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a dataset file")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    off = _HEADER.size
    rec = _FIXED.size + 4 * NUM_HANDS * 4
    if len(raw) != off + count * rec:
        raise ValueError(f"{path}: truncated ({len(raw)} bytes, want {off + count * rec})")
    out = []
    for _ in range(count):
        b0, b1, b2, b3, pot, stack = _FIXED.unpack_from(raw, off)
        off += _FIXED.size
        vecs = []
        for _ in range(4):
            vecs.append(np.frombuffer(raw, dtype="<f4", count=NUM_HANDS, offset=off).astype(np.float64))
            off += NUM_HANDS * 4
        spec = SubgameSpec(
            board=np.array([b0, b1, b2, b3], dtype=np.int64),
            pot=pot, stack=stack, range1=vecs[0], range2=vecs[1],
        )
        out.append(TrainingExample(spec=spec, cvs=CvPair(v1=vecs[2], v2=vecs[3])))
    return out


def export_csv(path, examples: list[TrainingExample]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        header = ["board", "pot", "stack"]
        for name in ("range1", "range2", "v1", "v2"):
            header += [f"{name}_{i}" for i in range(NUM_HANDS)]
        w.writerow(header)
        for ex in examples:
            row = [board_str(ex.spec.board), ex.spec.pot, ex.spec.stack]
            for vec in (ex.spec.range1, ex.spec.range2, ex.cvs.v1, ex.cvs.v2):
                row += [repr(float(x)) for x in vec]
            w.writerow(row)
