"""Bucket-space encodings of ranges and counterfactual values.

Ranges encode by summing hand probabilities into their buckets; CVs encode
as the range-weighted mean of member-hand CVs (weighted so the bucket total
matches the range-weighted hand total; an unweighted flag reproduces the
plain-average variant).  Decoding broadcasts a bucket CV back to every
member hand.  The direct encoding skips buckets entirely: raw ranges, a
52-entry board one-hot and the pot.

Masked entries in serialized target vectors are stored as NaN so the live
mask survives the round trip without the mapping at hand; the u16 live
count in each record is a consistency check, not the mask itself.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .abstraction import KIND_EHS2, KIND_NESTED, KIND_PA, BucketMapping
from .cards import NUM_CARDS, NUM_HANDS, valid_hand_mask
from .datagen import TrainingExample

KIND_DIRECT = "direct"
KINDS = (KIND_EHS2, KIND_NESTED, KIND_PA, KIND_DIRECT)

DIRECT_INPUT_DIM = 2 * NUM_HANDS + NUM_CARDS + 1
DIRECT_TARGET_DIM = 2 * NUM_HANDS


@dataclass
class EncodedExample:
    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray  # live target entries


def encode_range(range_vec: np.ndarray, mapping: BucketMapping) -> np.ndarray:
    """bucket_prob[b] = total range mass mapped to b."""
    valid = mapping.valid_mask()
    out = np.zeros(mapping.num_buckets)
    np.add.at(out, mapping.bucket_of[valid], np.asarray(range_vec)[valid])
    return out


def encode_cv(
    cv: np.ndarray,
    range_vec: np.ndarray,
    mapping: BucketMapping,
    weighted: bool = True,
) -> np.ndarray:
    """Aggregate hand CVs into bucket CVs.

    Range-weighted mean per bucket; buckets whose members all have zero
    range mass fall back to the unweighted mean; buckets with no valid
    member hands get 0.
    """
    valid = mapping.valid_mask()
    ids = mapping.bucket_of[valid]
    cvv = np.asarray(cv, dtype=np.float64)[valid]
    K = mapping.num_buckets
    counts = np.bincount(ids, minlength=K).astype(np.float64)
    plain_sum = np.bincount(ids, weights=cvv, minlength=K)
    out = np.zeros(K)
    occupied = counts > 0
    if weighted:
        w = np.asarray(range_vec, dtype=np.float64)[valid]
        wsum = np.bincount(ids, weights=w, minlength=K)
        wcv = np.bincount(ids, weights=w * cvv, minlength=K)
        heavy = wsum > 0
        out[heavy] = wcv[heavy] / wsum[heavy]
        fallback = occupied & ~heavy
        out[fallback] = plain_sum[fallback] / counts[fallback]
    else:
        out[occupied] = plain_sum[occupied] / counts[occupied]
    # singleton buckets pass their CV through exactly (no rounding via the
    # weighted division), keeping identity mappings lossless to the bit
    singles = counts == 1
    out[singles] = plain_sum[singles]
    return out


def decode_cv(bucket_cvs: np.ndarray, mapping: BucketMapping) -> np.ndarray:
    """cv[h] = bucket CV of h's bucket; colliding hands get 0."""
    valid = mapping.valid_mask()
    out = np.zeros(NUM_HANDS)
    out[valid] = np.asarray(bucket_cvs)[mapping.bucket_of[valid]]
    return out


def occupied_buckets(mapping: BucketMapping) -> np.ndarray:
    valid = mapping.valid_mask()
    counts = np.bincount(mapping.bucket_of[valid], minlength=mapping.num_buckets)
    return counts > 0


def pot_fraction(spec) -> float:
    return spec.pot / (spec.pot + 2.0 * spec.stack)


def encode_bucketed(example: TrainingExample, mapping: BucketMapping, weighted: bool = True) -> EncodedExample:
    spec = example.spec
    inputs = np.concatenate(
        [encode_range(spec.range1, mapping), encode_range(spec.range2, mapping), [pot_fraction(spec)]]
    )
    t1 = encode_cv(example.cvs.v1, spec.range1, mapping, weighted)
    t2 = encode_cv(example.cvs.v2, spec.range2, mapping, weighted)
    live = occupied_buckets(mapping)
    return EncodedExample(
        inputs=inputs,
        targets=np.concatenate([t1, t2]),
        mask=np.concatenate([live, live]),
    )


def encode_direct(spec, cvs=None) -> EncodedExample:
    """Abstraction-free encoding: ranges, board one-hot, pot fraction."""
    board_onehot = np.zeros(NUM_CARDS)
    board_onehot[np.asarray(spec.board, dtype=np.int64)] = 1.0
    inputs = np.concatenate([spec.range1, spec.range2, board_onehot, [pot_fraction(spec)]])
    valid = valid_hand_mask(spec.board)
    if cvs is None:
        targets = np.zeros(DIRECT_TARGET_DIM)
    else:
        targets = np.concatenate([cvs.v1, cvs.v2])
    return EncodedExample(inputs=inputs, targets=targets, mask=np.concatenate([valid, valid]))


def encode_example(example: TrainingExample, kind: str, mapping: BucketMapping | None, weighted: bool = True) -> EncodedExample:
    if kind == KIND_DIRECT:
        return encode_direct(example.spec, example.cvs)
    if mapping is None:
        raise ValueError(f"encoding kind {kind!r} needs a bucket mapping")
    return encode_bucketed(example, mapping, weighted)


def encoding_error(examples, mapping_for, loss_fn, weighted: bool = True) -> float:
    """Pooled round-trip loss: encode CVs to buckets, decode, compare.

    mapping_for(spec) returns the example's BucketMapping, or None for the
    direct encoding (identity round trip).  Pooled mean over every
    (example, player, valid hand) entry.
    """
    total = 0.0
    count = 0
    if len(examples) == 0:
        raise ValueError("encoding_error needs a non-empty dataset")
    for ex in examples:
        mapping = mapping_for(ex.spec)
        for cv, rng_vec in ((ex.cvs.v1, ex.spec.range1), (ex.cvs.v2, ex.spec.range2)):
            if mapping is None:
                valid = valid_hand_mask(ex.spec.board)
                residual = np.zeros(int(valid.sum()))
            else:
                valid = mapping.valid_mask()
                rebuilt = decode_cv(encode_cv(cv, rng_vec, mapping, weighted), mapping)
                residual = (np.asarray(cv) - rebuilt)[valid]
            total += float(np.sum(loss_fn(residual)))
            count += residual.size
    return total / count


def export_encoded_csv(path, examples: list[EncodedExample]) -> None:
    """Debug CSV: one row per record, inputs then targets (masked = nan)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        if examples:
            writer.writerow(
                [f"in{i}" for i in range(len(examples[0].inputs))]
                + [f"tg{i}" for i in range(len(examples[0].targets))]
            )
        for ex in examples:
            masked = np.where(ex.mask, ex.targets, np.nan)
            writer.writerow([repr(x) for x in ex.inputs] + [repr(x) for x in masked])


# ------------------------------------------------------------------- file io

_MAGIC = b"CENC"
_VERSION = 1
_HEADER = struct.Struct("<4sHBIQ")
_KIND_CODE = {KIND_EHS2: 0, KIND_NESTED: 1, KIND_PA: 2, KIND_DIRECT: 3}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


def save_encoded(path, kind: str, num_buckets: int, examples: list[EncodedExample]) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, _KIND_CODE[kind], num_buckets, len(examples)))
        for ex in examples:
            masked = np.where(ex.mask, ex.targets, np.nan)
            f.write(np.asarray(ex.inputs, dtype="<f4").tobytes())
            f.write(masked.astype("<f4").tobytes())
            f.write(struct.pack("<H", int(ex.mask.sum())))


def load_encoded(path):
    """Returns (kind, num_buckets, examples)."""
    with open(path, "rb") as f:
        raw = f.read()
    magic, version, code, num_buckets, count = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not an encoded dataset")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    kind = _CODE_KIND[code]
    if kind == KIND_DIRECT:
        n_in, n_tg = DIRECT_INPUT_DIM, DIRECT_TARGET_DIM
    else:
        n_in, n_tg = 2 * num_buckets + 1, 2 * num_buckets
    off = _HEADER.size
    rec = 4 * (n_in + n_tg) + 2
    if len(raw) != off + count * rec:
        raise ValueError(f"{path}: truncated ({len(raw)} bytes, want {off + count * rec})")
    out = []
    for _ in range(count):
        inputs = np.frombuffer(raw, dtype="<f4", count=n_in, offset=off).astype(np.float64)
        off += 4 * n_in
        stored = np.frombuffer(raw, dtype="<f4", count=n_tg, offset=off).astype(np.float64)
        off += 4 * n_tg
        (live,) = struct.unpack_from("<H", raw, off)
        off += 2
        mask = ~np.isnan(stored)
        if int(mask.sum()) != live:
            raise ValueError(f"{path}: live-count mismatch in record {len(out)}")
        out.append(EncodedExample(inputs=inputs, targets=np.nan_to_num(stored), mask=mask))
    return kind, num_buckets, out
