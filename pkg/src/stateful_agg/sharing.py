"""Additive and Shamir threshold secret sharing over R_q, plus the
seed-compressed resharing that replaces full key shares with short PRG
seeds and a single correction element sent to the server.

Shamir sharing of a ring element is applied coefficientwise, one
polynomial per coefficient, and independently per prime limb of q (the
evaluation points 1..h must be invertible, which holds per limb).  Scalar
secrets in Z_q are shared the same way via their limb residues.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import ring
from .prng import ctx_rng

__all__ = [
    "AdditiveShares",
    "ThresholdShares",
    "SeedReshare",
    "ashare",
    "reconstruct_additive",
    "tshare",
    "trec",
    "seed_reshare",
    "expand_seed",
    "shamir_points",
    "SEED_BITS",
]

SEED_BITS = 128


# ---------------------------------------------------------------------------
# Additive sharing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdditiveShares:
    shares: tuple[ring.RingElement, ...]

    def __len__(self) -> int:
        return len(self.shares)


def ashare(secret: ring.RingElement, d: int, rng: np.random.Generator) -> AdditiveShares:
    """Split into d uniform elements summing to the secret."""
    if d < 1:
        raise ValueError("share count must be >= 1")
    parts = [ring.sample_uniform(rng, secret.params) for _ in range(d - 1)]
    last = secret
    for p in parts:
        last = last - p
    parts.append(last)
    return AdditiveShares(tuple(parts))


def reconstruct_additive(shares: AdditiveShares | Sequence[ring.RingElement]) -> ring.RingElement:
    elems = shares.shares if isinstance(shares, AdditiveShares) else tuple(shares)
    acc = elems[0]
    for e in elems[1:]:
        acc = acc + e
    return acc


# ---------------------------------------------------------------------------
# Shamir threshold sharing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdShares:
    """Pairs (evaluation point, share value); any t of them reconstruct."""

    shares: tuple[tuple[int, object], ...]
    threshold: int
    params: "ring.RingParams | None" = None  # modulus context for scalar shares


def shamir_points(secret: int, poly: Sequence[int], xs: Sequence[int], p: int) -> list[int]:
    """Evaluate secret + poly[0]*x + poly[1]*x^2 + ... at each x, mod p."""
    out = []
    for x in xs:
        acc = 0
        for c in reversed(poly):
            acc = (acc + c) * x % p
        out.append((acc + secret) % p)
    return out


def _as_residues(secret, params: ring.RingParams) -> np.ndarray:
    """Residue stack (L, k) for a ring element or (L, 1) for a scalar."""
    if isinstance(secret, ring.RingElement):
        return secret.res
    v = int(secret)
    return np.array([[v % p] for p in params.limbs], dtype=np.uint64)


def _from_residues(res: np.ndarray, params: ring.RingParams, scalar: bool):
    if scalar:
        val = 0
        for row, w in zip(res, params._crt_weights):
            val += int(row[0]) * w
        return val % params.q
    return ring.RingElement(res.astype(np.uint64), params)


def tshare(
    secret,
    h: int,
    t: int,
    rng: np.random.Generator,
    params: ring.RingParams | None = None,
) -> ThresholdShares:
    """Shamir-share a ring element or a scalar in Z_q among h holders.

    Shares are degree-(t-1) polynomial evaluations at points 1..h with the
    secret as constant term, done per coefficient and per limb.
    """
    if isinstance(secret, ring.RingElement):
        params = secret.params
        scalar = False
    else:
        if params is None:
            raise ValueError("scalar secrets need ring params for the modulus")
        scalar = True
    if t < 1 or t > h:
        raise ValueError(f"threshold t={t} must satisfy 1 <= t <= h={h}")
    if h >= min(params.limbs):
        raise ValueError("committee size must be below every prime limb")
    res = _as_residues(secret, params)
    width = res.shape[1]
    coeffs = [
        np.stack(
            [rng.integers(0, p, size=width, dtype=np.uint64) for p in params.limbs]
        )
        for _ in range(t - 1)
    ]
    out = []
    for x in range(1, h + 1):
        val = res.astype(np.uint64).copy()
        for l, p in enumerate(params.limbs):
            pw = np.uint64(p)
            acc = np.zeros(width, dtype=np.uint64)
            xpow = 1
            for c in coeffs:
                xpow = xpow * x % p
                acc = (acc + c[l] * np.uint64(xpow)) % pw
            val[l] = (val[l] + acc) % pw
        out.append((x, _from_residues(val, params, scalar)))
    return ThresholdShares(tuple(out), t, params if scalar else None)


def trec(shares, t: int | None = None, params: ring.RingParams | None = None):
    """Reconstruct by Lagrange interpolation at 0 from at least t shares."""
    if isinstance(shares, ThresholdShares):
        t = shares.threshold if t is None else t
        params = shares.params if params is None else params
        pairs = list(shares.shares)
    else:
        pairs = list(shares)
        if t is None:
            raise ValueError("threshold required when passing raw share pairs")
    if len(pairs) < t:
        raise ValueError(f"need at least {t} shares, got {len(pairs)}")
    xs = [x for x, _ in pairs]
    if len(set(xs)) != len(xs):
        raise ValueError("duplicate evaluation points")
    first = pairs[0][1]
    scalar = not isinstance(first, ring.RingElement)
    if scalar and params is None:
        raise ValueError("scalar reconstruction needs ring params")
    pr = params if scalar else first.params
    res_shape = (len(pr.limbs), 1 if scalar else pr.N)
    acc = np.zeros(res_shape, dtype=np.uint64)
    for i, (xi, vi) in enumerate(pairs):
        vres = _as_residues(vi, pr)
        for l, p in enumerate(pr.limbs):
            num, den = 1, 1
            for j, (xj, _) in enumerate(pairs):
                if i == j:
                    continue
                num = num * xj % p
                den = den * (xj - xi) % p
            lam = num * pow(den % p, -1, p) % p
            acc[l] = (acc[l] + vres[l] * np.uint64(lam)) % np.uint64(p)
    return _from_residues(acc, pr, scalar)


# ---------------------------------------------------------------------------
# Seed-compressed resharing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeedReshare:
    """d short seeds for the peers plus one correction element for the server.

    expand(seed_1) + ... + expand(seed_d) + correction == secret.
    """

    seeds: tuple[int, ...]
    correction: ring.RingElement


def expand_seed(seed: int, params: ring.RingParams) -> ring.RingElement:
    """Deterministic expansion of a short seed to a uniform ring element."""
    return ring.sample_uniform(ctx_rng("seed-expand", seed), params)


def seed_reshare(
    secret: ring.RingElement, d: int, rng: np.random.Generator
) -> SeedReshare:
    """Reshare via d fresh 128-bit seeds; peers get seeds, server gets y*."""
    if d < 1:
        raise ValueError("share count must be >= 1")
    seeds = tuple(int.from_bytes(rng.bytes(SEED_BITS // 8), "big") for _ in range(d))
    total = secret.params.zero()
    for s in seeds:
        total = total + expand_seed(s, secret.params)
    return SeedReshare(seeds, secret - total)
