import numpy as np
import pytest

from stateful_agg import crypto, ring, sharing
from stateful_agg.prng import ctx_rng

from helpers import run_rng

PR = ring.RingParams.from_bits(8, 40, 2**12)  # N=8, 40-bit two-limb q, T=2^12


def _encode(vals, pr=PR):
    return ring.encode(vals, 1, 12, pr)


def test_derive_public_deterministic():
    a = crypto.derive_public("seed", 3, 2, PR)
    b = crypto.derive_public("seed", 3, 2, PR)
    assert a.elems == b.elems and a.round_index == 3


def test_derive_public_empty():
    assert crypto.derive_public("seed", 1, 0, PR).elems == ()


def test_derive_public_no_collisions():
    seen = set()
    for i in range(10000):
        (e,) = crypto.derive_public("scan", i, 1, PR).elems
        seen.add(e.res.tobytes())
    assert len(seen) == 10000


def test_store_degenerate_is_plaintext():
    a = crypto.derive_public("s", 1, 1, PR).elems
    x = _encode([1, 2, 3, 4, 5, 6, 7, 0])
    msg = crypto.store_message(a, PR.zero(), x, 0.0, run_rng("sm"))
    assert msg.w[0] == x[0]


def test_store_message_shape_error():
    a = crypto.derive_public("s", 1, 2, PR).elems
    with pytest.raises(ValueError, match="plaintext"):
        crypto.store_message(a, PR.zero(), _encode([1] * 8), 0.0, run_rng("se"))


def test_store_mask_roundtrip():
    a = crypto.derive_public("s", 1, 1, PR).elems
    x = _encode([9, 0, 0, 0, 0, 0, 0, 0])
    rng = run_rng("mask")
    mask = [ring.sample_uniform(rng, PR)]
    plain = crypto.store_message(a, PR.zero(), x, 0.0, ctx_rng("n", 1))
    masked = crypto.store_message(a, PR.zero(), x, 0.0, ctx_rng("n", 1), mask=mask)
    assert masked.w[0] - mask[0] == plain.w[0]


def test_distributed_encryption_sums_to_joint_ciphertext():
    # Three clients with key shares summing to s, inputs (x, 0, 0): the sum of
    # their uploads decrypts to x under s.
    rng = run_rng("dist")
    s = ring.sample_uniform(rng, PR)
    shares = sharing.ashare(s, 3, rng)
    a = crypto.derive_public("dist", 1, 1, PR).elems
    x = [5, 100, 7, 0, 0, 0, 0, 3]
    msgs = [
        crypto.store_message(a, sh, _encode(x if j == 0 else [0] * 8), 2.0, ctx_rng("dn", j))
        for j, sh in enumerate(shares.shares)
    ]
    agg = msgs[0].w[0] + msgs[1].w[0] + msgs[2].w[0]
    plain = (agg - ring.mul(a[0], s)).centered() % PR.T
    assert [int(v) for v in ring.decode([plain], 8, 1, 12)] == x


def test_reveal_zero_weights():
    msg = crypto.reveal_message(
        {}, {}, PR.zero(), 0.0, run_rng("rz"), mask_elems=[PR.zero()]
    )
    assert msg.w[0] == PR.zero()


def test_reveal_single_weight_is_negated_key_product():
    rng = run_rng("r1")
    s = ring.sample_uniform(rng, PR)
    a = crypto.derive_public("r1", 1, 1, PR).elems
    msg = crypto.reveal_message({1: a}, {1: 1}, s, 0.0, ctx_rng("rn"))
    assert msg.w[0] == -ring.mul(a[0], s)


def test_reveal_unknown_round():
    with pytest.raises(ValueError, match="unknown round"):
        crypto.reveal_message({1: [PR.zero()]}, {2: 1}, PR.zero(), 0.0, run_rng("ru"))


def test_store_then_reveal_open_single_round():
    # One stored round under shares of s; reveal shares cancel the key term
    # and the remainder mod T is the plaintext.
    rng = run_rng("open1")
    s = ring.sample_uniform(rng, PR)
    shares = sharing.ashare(s, 2, rng)
    a = crypto.derive_public("open1", 1, 1, PR).elems
    x = [3, 1, 4, 1, 5, 9, 2, 6]
    stored = crypto.store_message(a, shares.shares[0], _encode(x), 2.0, ctx_rng("o", 1)).w[0] + \
        crypto.store_message(a, shares.shares[1], _encode([0] * 8), 2.0, ctx_rng("o", 2)).w[0]
    reveal_agg = [PR.zero()]
    for j, sh in enumerate(shares.shares):
        msg = crypto.reveal_message({1: a}, {1: 1}, sh, 2.0, ctx_rng("o", 10 + j))
        reveal_agg[0] = reveal_agg[0] + msg.w[0]
    out = crypto.open({1: (stored,)}, reveal_agg, {1: 1}, 8, 1, 12)
    assert [int(v) for v in out] == x


def test_open_zero_state():
    out = crypto.open({}, [PR.zero()], {}, 8, 1, 12)
    assert [int(v) for v in out] == [0] * 8


def test_open_applies_corrections_and_masks():
    x = _encode([7, 0, 0, 0, 0, 0, 0, 0])
    corr = _encode([5, 0, 0, 0, 0, 0, 0, 0])
    mask = _encode([1, 0, 0, 0, 0, 0, 0, 0])
    out = crypto.open(
        {}, [x[0]], {}, 8, 1, 12, corrections=[corr[0]], masks_sum=[mask[0]]
    )
    assert int(out[0]) == 1


def test_open_centered_reduction_handles_negative_noise():
    # w = T*e + x with e = -1: plain mod-q reduction would give garbage.
    e = PR.from_coeffs([-1, 0, 0, 0, 0, 0, 0, 0])
    x = _encode([7, 0, 0, 0, 0, 0, 0, 0])
    w = x[0] + e.scalar(PR.T)
    out = crypto.open({}, [w], {}, 8, 1, 12)
    assert int(out[0]) == 7


def test_message_homomorphism():
    # Dec(a*c1 + b*c2) = a*x1 + b*x2 mod T for bounded combiners.
    rng = run_rng("hom")
    s = ring.sample_uniform(rng, PR)
    pub = crypto.derive_public("hom", 1, 1, PR).elems
    x1, x2 = [10, 0, 0, 0, 0, 0, 0, 0], [0, 0, 0, 20, 0, 0, 0, 0]
    c1 = crypto.store_message(pub, s, _encode(x1), 2.0, ctx_rng("h", 1)).w[0]
    c2 = crypto.store_message(pub, s, _encode(x2), 2.0, ctx_rng("h", 2)).w[0]
    a, b = 3, 5
    combined = c1.scalar(a) + c2.scalar(b)
    key_term = ring.mul(pub[0], s).scalar(a + b)
    plain = (combined - key_term).centered() % PR.T
    got = [int(v) for v in ring.decode([plain], 8, 1, 12)]
    want = [(a * u + b * v) % PR.T for u, v in zip(x1, x2)]
    assert got == want


def test_noise_budget_no_wraparound_smalls():
    # 200 fresh encrypt/decrypt cycles at desk scale stay exact.
    rng = run_rng("budget")
    pub = crypto.derive_public("budget", 1, 1, PR).elems
    for trial in range(200):
        s = ring.sample_uniform(rng, PR)
        x = [int(v) for v in rng.integers(0, 2**8, 8)]
        c = crypto.store_message(pub, s, _encode(x), 3.2, ctx_rng("b", trial)).w[0]
        plain = (c - ring.mul(pub[0], s)).centered() % PR.T
        assert [int(v) for v in ring.decode([plain], 8, 1, 12)] == x
