"""Card abstractions: equal-distance E[HS2], public-nested, potential-aware.

A BucketMapping is a per-board many-to-one map from the 1326 private hands
to bucket ids; hands colliding with the board (or outside the deck) carry
SENTINEL.  The potential-aware mapping clusters HS histograms with k-means
under 1-D EMD; the public-nested mapping clusters boards by (draw value,
highcard value) and subdivides each public cluster by E[HS2].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .cards import (
    FLUSH,
    NUM_HANDS,
    STRAIGHT,
    STRAIGHT_FLUSH,
    card_rank,
    valid_hand_mask,
)
from .strength import expected_hs2_all, hs_histograms_all, turn_tables

SENTINEL = 0xFFFF

KIND_EHS2 = "ehs2"
KIND_NESTED = "nested"
KIND_PA = "pa"
_KIND_CODES = {KIND_EHS2: 0, KIND_NESTED: 1, KIND_PA: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


@dataclass
class BucketMapping:
    board: np.ndarray
    bucket_of: np.ndarray  # (1326,) int32, SENTINEL where invalid
    num_buckets: int
    kind: str

    def valid_mask(self) -> np.ndarray:
        return self.bucket_of != SENTINEL

    def check(self) -> None:
        valid = self.valid_mask()
        ids = self.bucket_of[valid]
        if len(ids) and (ids.min() < 0 or ids.max() >= self.num_buckets):
            raise ValueError("bucket id out of range")


class PublicFeatures(NamedTuple):
    draw_value: int
    highcard_value: int


def public_features(board, deck: np.ndarray | None = None) -> PublicFeatures:
    """Board wetness features for public clustering.

    draw_value counts (river card, valid hand) pairs whose best 5-card
    category is straight, flush or straight flush; highcard_value is the sum
    of board ranks on the 0..12 scale.
    """
    board = np.asarray(board, dtype=np.int64)
    highcard = int(sum(card_rank(int(c)) for c in board))
    _, ranks, masks = turn_tables(board, deck)
    cats = ranks >> 20
    drawish = (cats == STRAIGHT) | (cats == FLUSH) | (cats == STRAIGHT_FLUSH)
    draw = int(np.count_nonzero(drawish & masks))
    return PublicFeatures(draw_value=draw, highcard_value=highcard)


@dataclass
class ClusterModel:
    centroids: np.ndarray
    labels: np.ndarray
    distance: str
    seed: int
    distortion_trace: list = field(default_factory=list)

    def assign(self, points: np.ndarray) -> np.ndarray:
        d = _distances(np.asarray(points, dtype=np.float64), self.centroids, self.distance)
        return np.argmin(d, axis=1)


def _distances(points: np.ndarray, cents: np.ndarray, distance: str) -> np.ndarray:
    """(n, k) distance matrix; euclidean uses squared distance."""
    if distance == "euclidean":
        diff = points[:, None, :] - cents[None, :, :]
        return np.sum(diff * diff, axis=2)
    if distance == "emd":
        out = np.empty((points.shape[0], cents.shape[0]))
        _kernels.emd_cum_dist_matrix(
            np.ascontiguousarray(np.cumsum(points, axis=1)),
            np.ascontiguousarray(np.cumsum(cents, axis=1)),
            out,
        )
        return out
    raise ValueError(f"unknown distance {distance!r}")


def _seed_centroids(points: np.ndarray, k: int, distance: str, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    first = int(rng.integers(n))
    if distance == "emd":
        xc = np.ascontiguousarray(np.cumsum(points, axis=1))
        idx = np.empty(k, dtype=np.int64)
        _kernels.farthest_point_seed(xc, first, k, idx)
        return points[idx].copy()
    idx = [first]
    mind = np.sum((points - points[first]) ** 2, axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(mind))
        idx.append(nxt)
        mind = np.minimum(mind, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[np.array(idx)].copy()


def _mean_update(points: np.ndarray, labels: np.ndarray, cents: np.ndarray) -> np.ndarray:
    k = cents.shape[0]
    out = cents.copy()
    sums = np.zeros_like(cents)
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


def kmeans(
    points: Sequence,
    k: int,
    distance: str = "euclidean",
    seed: int = 0,
    max_iters: int = 100,
) -> ClusterModel:
    """Lloyd k-means with farthest-point seeding and lowest-index tie breaks.

    Centroid update is the per-coordinate mean.  Under EMD the mean is not
    the EMD barycenter, so an update could in principle raise the objective;
    the loop verifies distortion after each iteration and reverts the last
    update if it did not improve, keeping the distortion trace non-increasing.
    Empty clusters are repaired by splitting the largest cluster.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be (n, dims)")
    n = points.shape[0]
    n_distinct = len(np.unique(points, axis=0))
    if k < 1 or k > n_distinct:
        raise ValueError(f"k must be in [1, {n_distinct}], got {k}")
    rng = np.random.default_rng(seed)
    cents = _seed_centroids(points, k, distance, rng)

    def assign_repair(cents):
        for _ in range(k + 1):
            d = _distances(points, cents, distance)
            labels = np.argmin(d, axis=1)
            counts = np.bincount(labels, minlength=k)
            empty = np.nonzero(counts == 0)[0]
            if len(empty) == 0:
                return labels, float(d[np.arange(n), labels].sum()), cents
            largest = int(np.argmax(counts))
            members = np.nonzero(labels == largest)[0]
            far = members[int(np.argmax(d[members, largest]))]
            cents = cents.copy()
            cents[empty[0]] = points[far]
        raise RuntimeError("empty-cluster repair did not converge")

    labels, distortion, cents = assign_repair(cents)
    trace = [distortion]
    for _ in range(max_iters):
        new_cents = _mean_update(points, labels, cents)
        new_labels, new_distortion, new_cents = assign_repair(new_cents)
        if new_distortion > distortion + 1e-12:
            break
        moved = not np.array_equal(new_labels, labels)
        labels, distortion, cents = new_labels, new_distortion, new_cents
        trace.append(distortion)
        if not moved:
            break
    return ClusterModel(centroids=cents, labels=labels, distance=distance, seed=seed, distortion_trace=trace)


def emd_1d(a, b) -> float:
    """Closed-form 1-D EMD between two normalized histograms."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"histogram shapes differ: {a.shape} vs {b.shape}")
    return float(np.abs(np.cumsum(a) - np.cumsum(b)).sum() / len(a))


def build_ehs2_mapping(board, num_buckets: int, deck: np.ndarray | None = None) -> BucketMapping:
    """Equal-distance E[HS2] buckets: id = floor(E[HS2] * K), top-clamped."""
    if num_buckets < 1:
        raise ValueError("num_buckets must be >= 1")
    board = np.asarray(board, dtype=np.int64)
    e2 = expected_hs2_all(board, deck)
    valid = ~np.isnan(e2)
    bucket_of = np.full(NUM_HANDS, SENTINEL, dtype=np.int32)
    ids = np.minimum((np.nan_to_num(e2) * num_buckets).astype(np.int64), num_buckets - 1)
    bucket_of[valid] = ids[valid]
    return BucketMapping(board=board, bucket_of=bucket_of, num_buckets=num_buckets, kind=KIND_EHS2)


def build_potential_aware_mapping(
    board,
    num_buckets: int,
    bins: int = 50,
    seed: int = 0,
    deck: np.ndarray | None = None,
    max_iters: int = 100,
) -> BucketMapping:
    """Cluster per-hand HS histograms with k-means under 1-D EMD.

    When the board admits fewer distinct histograms than requested buckets,
    the cluster count is capped there (ids still live in 0..num_buckets-1,
    so encoded vector widths stay fixed across boards).
    """
    board = np.asarray(board, dtype=np.int64)
    hists = hs_histograms_all(board, bins, deck)
    valid = hists.sum(axis=1) > 0
    n_valid = int(valid.sum())
    if num_buckets > n_valid:
        raise ValueError(f"num_buckets {num_buckets} exceeds valid hands {n_valid}")
    points = hists[valid]
    k = min(num_buckets, len(np.unique(points, axis=0)))
    model = kmeans(points, k, distance="emd", seed=seed, max_iters=max_iters)
    # Anchor ids near floor(E[HS] * K) of each centroid, kept strictly
    # increasing in centroid strength.  Raw k-means labels are arbitrary, so
    # without this the same input slot means a different hand quality on
    # every board and nothing can be learned across boards.
    centers = (np.arange(bins) + 0.5) / bins
    mean_hs = model.centroids @ centers / model.centroids.sum(axis=1)
    slot = np.empty(k, dtype=np.int32)
    prev = -1
    for rank, c in enumerate(np.argsort(mean_hs, kind="stable")):
        lo, hi = prev + 1, num_buckets - (k - rank)
        prev = int(min(max(int(mean_hs[c] * num_buckets), lo), hi))
        slot[c] = prev
    bucket_of = np.full(NUM_HANDS, SENTINEL, dtype=np.int32)
    bucket_of[valid] = slot[model.labels]
    return BucketMapping(board=board, bucket_of=bucket_of, num_buckets=num_buckets, kind=KIND_PA)


@dataclass
class PublicNestedModel:
    """Fitted public board clustering plus the per-board nested mapping rule."""

    centroids: np.ndarray  # (k_public, 2) in z-scored feature space
    feat_mean: np.ndarray
    feat_std: np.ndarray
    k_public: int
    k_sub: int
    seed: int

    @property
    def num_buckets(self) -> int:
        return self.k_public * self.k_sub

    def _zscore(self, feats: np.ndarray) -> np.ndarray:
        return (feats - self.feat_mean) / self.feat_std

    def public_cluster(self, board, deck: np.ndarray | None = None) -> int:
        f = public_features(board, deck)
        z = self._zscore(np.array([[f.draw_value, f.highcard_value]], dtype=np.float64))
        d = np.sum((z[:, None, :] - self.centroids[None, :, :]) ** 2, axis=2)
        return int(np.argmin(d[0]))

    def mapping_for(self, board, deck: np.ndarray | None = None) -> BucketMapping:
        board = np.asarray(board, dtype=np.int64)
        cluster = self.public_cluster(board, deck)
        sub = build_ehs2_mapping(board, self.k_sub, deck)
        bucket_of = sub.bucket_of.copy()
        live = bucket_of != SENTINEL
        bucket_of[live] += cluster * self.k_sub
        return BucketMapping(board=board, bucket_of=bucket_of, num_buckets=self.num_buckets, kind=KIND_NESTED)


def build_public_nested_mapping(
    turn_boards: Sequence,
    k_public: int,
    k_sub: int,
    seed: int = 0,
    deck: np.ndarray | None = None,
) -> PublicNestedModel:
    """Fit the public cluster model on a sample of turn boards.

    Any board (sampled or not) is later assigned to its nearest public
    centroid in z-scored feature space; buckets for a hand are
    cluster * k_sub + floor(E[HS2] * k_sub).
    """
    if k_public < 1 or k_sub < 1:
        raise ValueError("k_public and k_sub must be >= 1")
    feats = np.array(
        [[f.draw_value, f.highcard_value] for f in (public_features(b, deck) for b in turn_boards)],
        dtype=np.float64,
    )
    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    std[std == 0] = 1.0
    z = (feats - mean) / std
    k_eff = min(k_public, len(np.unique(z, axis=0)))
    model = kmeans(z, k_eff, distance="euclidean", seed=seed)
    return PublicNestedModel(
        centroids=model.centroids,
        feat_mean=mean,
        feat_std=std,
        k_public=k_public,
        k_sub=k_sub,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# CABS file format: one file holds every per-board mapping of one kind.
# magic "CABS", version u16, kind u8, num_buckets u32, record count u64,
# nested-only model block, then per record board (4 u8) + 1326 u16 ids.
# ---------------------------------------------------------------------------

_MAGIC = b"CABS"
_VERSION = 1


def save_mappings(path, mappings: Sequence[BucketMapping], model: PublicNestedModel | None = None) -> None:
    if not mappings:
        raise ValueError("no mappings to save")
    kind = mappings[0].kind
    num_buckets = mappings[0].num_buckets
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<HBIQ", _VERSION, _KIND_CODES[kind], num_buckets, len(mappings)))
        if kind == KIND_NESTED:
            if model is None:
                raise ValueError("nested mappings need their PublicNestedModel")
            f.write(struct.pack("<IIq", model.k_public, model.k_sub, model.seed))
            f.write(model.feat_mean.astype("<f8").tobytes())
            f.write(model.feat_std.astype("<f8").tobytes())
            f.write(np.asarray(model.centroids, dtype="<f8").tobytes())
        for m in mappings:
            if m.kind != kind or m.num_buckets != num_buckets:
                raise ValueError("mixed mapping kinds in one file")
            f.write(np.asarray(m.board, dtype="<u1").tobytes())
            ids = m.bucket_of.astype("<u2")
            f.write(ids.tobytes())


def load_mappings(path):
    """Returns (kind, {board tuple: BucketMapping}, model-or-None)."""
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a CABS file")
        version, code, num_buckets, count = struct.unpack("<HBIQ", f.read(15))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported CABS version {version}")
        kind = _CODE_KINDS[code]
        model = None
        if kind == KIND_NESTED:
            k_public, k_sub, seed = struct.unpack("<IIq", f.read(16))
            mean = np.frombuffer(f.read(16), dtype="<f8").copy()
            std = np.frombuffer(f.read(16), dtype="<f8").copy()
            cents = np.frombuffer(f.read(16 * k_public), dtype="<f8").reshape(k_public, 2).copy()
            model = PublicNestedModel(cents, mean, std, k_public, k_sub, seed)
        out = {}
        for _ in range(count):
            board = np.frombuffer(f.read(4), dtype="<u1").astype(np.int64)
            ids = np.frombuffer(f.read(2 * NUM_HANDS), dtype="<u2").astype(np.int32)
            m = BucketMapping(board=board, bucket_of=ids, num_buckets=num_buckets, kind=kind)
            out[tuple(board.tolist())] = m
        return kind, out, model
