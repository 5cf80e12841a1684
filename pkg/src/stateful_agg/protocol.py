"""Round-barrier simulator for the fully-synchronous protocol (no dropouts).

One cohort of n ephemeral clients acts per round.  A persistent global key
s, defined by the uniform samples of the first cohort, is carried from
cohort to cohort by additive resharing: each client splits its share d ways
and routes the pieces to uniformly chosen members of the next cohort, who
sum what they receive.  With seed resharing the pieces are 128-bit PRG
seeds and a per-client correction element goes to the server instead,
shifting the effective key; the server repairs reveals with the
appropriately weighted products of public elements and accumulated
corrections.

The server is lazy: it never folds weights at store time.  It keeps the raw
aggregate of each round's messages plus that round's public mask basis (the
public elements for a store, the composed negative combination for a
reveal) and applies the flattened weight vector once, at reveal time.  The
server originates no messages of its own; it only aggregates and forwards.

Within a round, client steps are pure functions of (seed, round, index) and
could run in any order or in parallel; the loop here is sequential for
reproducibility of the transcript row order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import crypto, ring, sharing
from . import program as prog
from .ideal import materialize_inputs
from .params import ParamSet
from .prng import ctx_rng, hash_key

__all__ = [
    "ClientState",
    "RoundContext",
    "ClientStepResult",
    "ServerState",
    "Transcript",
    "RoundRecord",
    "RunResult",
    "ProtocolError",
    "client_step",
    "server_step",
    "run_protocol",
]


class ProtocolError(RuntimeError):
    pass


def run_noise_seed(seed: int) -> int:
    """Seed under which a run started with `seed` draws its rule noise."""
    return hash_key(seed, "input-noise")


@dataclass
class RoundRecord:
    round: int
    mode: str
    c2s_bytes: float = 0.0
    c2c_messages: int = 0
    c2c_bytes: float = 0.0
    dropped: int = 0


@dataclass
class Transcript:
    rows: list[RoundRecord] = field(default_factory=list)
    reveals: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def row(self, i: int) -> RoundRecord:
        return self.rows[i - 1]

    def total_c2s(self) -> float:
        return sum(r.c2s_bytes for r in self.rows)


@dataclass
class RunResult:
    reveals: list[tuple[int, np.ndarray]]
    transcript: Transcript
    key_history: list[list[ring.RingElement]] | None = None


@dataclass
class ClientState:
    cohort: int
    index: int
    key_share: ring.RingElement | None = None


@dataclass
class RoundContext:
    """Public per-round data every client derives or receives identically."""

    index: int
    instr: prog.Instruction
    public: tuple[ring.RingElement, ...]  # fresh elements for this round
    basis: tuple[ring.RingElement, ...]  # key mask actually applied (store: public)
    weights: dict[int, int]  # flattened weights mod q over rounds < index
    pset: ParamSet
    run_seed: int


@dataclass
class ClientStepResult:
    state: ClientState
    message: crypto.StoreMessage | crypto.RevealMessage
    reshares: list[tuple[int, object]]
    correction: ring.RingElement | None
    c2s_bits: int = 0
    c2c_bits: int = 0


def _derive_key_share(state: ClientState, ctx: RoundContext, incoming) -> ring.RingElement:
    rp = ctx.pset.ring()
    if ctx.index == 1:
        return ring.sample_uniform(
            ctx_rng(ctx.run_seed, "initial-key", state.index), rp
        )
    share = rp.zero()
    for item in incoming or ():
        piece = sharing.expand_seed(item, rp) if isinstance(item, int) else item
        share = share + piece
    return share


def client_step(state: ClientState, ctx: RoundContext, incoming, x_vec) -> ClientStepResult:
    """One client's round: derive key share, encrypt, reshare onward.

    incoming holds the previous cohort's share pieces routed to this client
    (ring elements, or raw seeds under seed resharing).  Returns the upload,
    the routed reshare pieces, and the server-bound correction if any.
    """
    pset = ctx.pset
    rp = pset.ring()
    i, j = ctx.index, state.index
    key_share = _derive_key_share(state, ctx, incoming)
    noise_rng = ctx_rng(ctx.run_seed, "enc-noise", i, j)
    x_elems = ring.encode(x_vec, pset.pf, pset.slot_width, rp)
    if ctx.instr.mode == prog.STORE:
        msg = crypto.store_message(ctx.public, key_share, x_elems, pset.sigma_n, noise_rng)
    else:
        msg = crypto.reveal_message(
            {}, ctx.weights, key_share, pset.sigma_flood, noise_rng,
            x_elems=x_elems, mask_elems=ctx.basis,
        )
    share_rng = ctx_rng(ctx.run_seed, "reshare", i, j)
    receivers = [int(v) for v in share_rng.integers(0, pset.n, size=pset.d)]
    correction = None
    reshares: list[tuple[int, object]] = []
    if pset.seed_resharing:
        sr = sharing.seed_reshare(key_share, pset.d, share_rng)
        reshares = list(zip(receivers, sr.seeds))
        correction = sr.correction
        c2c_bits = pset.d * pset.kappa
        c2s_bits = pset.packed_coeffs * pset.logq + pset.N * pset.logq
    else:
        parts = sharing.ashare(key_share, pset.d, share_rng)
        reshares = list(zip(receivers, parts.shares))
        c2c_bits = pset.d * pset.N * pset.logq
        c2s_bits = pset.packed_coeffs * pset.logq
    return ClientStepResult(
        state=ClientState(i, j, key_share),
        message=msg,
        reshares=reshares,
        correction=correction,
        c2s_bits=c2s_bits,
        c2c_bits=c2c_bits,
    )


class ServerState:
    """Lazy server: raw per-round aggregates plus reveal bookkeeping."""

    def __init__(self, p: prog.Program, pset: ParamSet):
        self.program = p
        self.pset = pset
        rp = pset.ring()
        self.ring_params = rp
        self.bars = prog.compose_all(p, rp.q)
        self.stored: dict[int, tuple[ring.RingElement, ...]] = {}
        self.basis: dict[int, tuple[ring.RingElement, ...]] = {}
        # Key deficit of the cohort that produced round k's messages
        # (accumulated resharing corrections, None while zero).
        self.deficit: dict[int, ring.RingElement | None] = {}
        self.masks_sum: dict[int, tuple[ring.RingElement, ...] | None] = {}
        self.drift: ring.RingElement | None = None
        self.cursor = 0

    def weights_for(self, i: int) -> dict[int, int]:
        bar = self.bars[i - 1]
        return {k: int(bar[k - 1]) for k in range(1, i) if int(bar[k - 1])}

    def absorb_round(
        self,
        i: int,
        basis: tuple[ring.RingElement, ...],
        messages,
        corrections,
        deficit: ring.RingElement | None,
    ) -> None:
        rp = self.ring_params
        m = self.pset.m
        agg = [rp.zero() for _ in range(m)]
        for msg in messages:
            for e in range(m):
                agg[e] = agg[e] + msg.w[e]
        self.stored[i] = tuple(agg)
        self.basis[i] = tuple(basis)
        self.deficit[i] = deficit
        self.masks_sum[i] = None
        self.cursor = i
        for corr in corrections:
            self.drift = corr if self.drift is None else self.drift + corr

    def open_round(self, i: int) -> np.ndarray:
        """Decode the value revealed at round i (delivered one round later)."""
        pset = self.pset
        weights = self.weights_for(i)
        corr = self._corrections(i, weights)
        masks = self._mask_total(i, weights)
        return crypto.open(
            self.stored,
            self.stored[i],
            weights,
            pset.ell,
            pset.pf,
            pset.slot_width,
            corrections=corr,
            masks_sum=masks,
        )

    def _corrections(self, i: int, weights: dict[int, int]):
        """Subtraction terms sum_k w_k * basis_k * deficit_k (w_i = 1).

        Each stored round k was produced under the then-current key s minus
        deficit_k; multiplying the public basis by the deficit restores what
        a full-key run would have uploaded.
        """
        rp = self.ring_params
        m = self.pset.m
        acc = None
        for k, w in list(weights.items()) + [(i, 1)]:
            dk = self.deficit.get(k)
            if dk is None or w == 0:
                continue
            if acc is None:
                acc = [rp.zero() for _ in range(m)]
            for e in range(m):
                acc[e] = acc[e] - ring.mul(self.basis[k][e], dk).scalar(w)
        return acc

    def _mask_total(self, i: int, weights: dict[int, int]):
        acc = None
        m = self.pset.m
        rp = self.ring_params
        for k, w in list(weights.items()) + [(i, 1)]:
            mk = self.masks_sum.get(k)
            if not mk or w == 0:
                continue
            if acc is None:
                acc = [rp.zero() for _ in range(m)]
            for e in range(m):
                acc[e] = acc[e] + mk[e].scalar(w)
        return acc


def server_step(server: ServerState, ctx: RoundContext, messages) -> np.ndarray | None:
    """Aggregate a full round of uploads; open the previous round if it was
    a reveal.  Missing uploads are a synchrony violation here."""
    pset = server.pset
    if len(messages) != pset.n:
        raise ProtocolError(
            f"round {ctx.index}: expected {pset.n} messages, got {len(messages)}"
        )
    # Cohort ctx.index operated under the key as reshared so far.
    deficit = server.drift
    server.absorb_round(
        ctx.index, ctx.basis, [m.message for m in messages],
        [m.correction for m in messages if m.correction is not None], deficit,
    )
    prev = ctx.index - 1
    if prev >= 1 and server.program.instruction(prev).mode == prog.REVEAL:
        return server.open_round(prev)
    return None


def build_context(server: ServerState, global_seed, i: int, run_seed: int) -> RoundContext:
    pset = server.pset
    rp = server.ring_params
    instr = server.program.instruction(i)
    public = crypto.derive_public(global_seed, i, pset.m, rp).elems
    weights = server.weights_for(i)
    if instr.mode == prog.STORE:
        basis = public
    else:
        basis = tuple(crypto.reveal_mask(server.basis, weights)) if weights else tuple(
            rp.zero() for _ in range(pset.m)
        )
    return RoundContext(i, instr, public, basis, weights, pset, run_seed)


def run_protocol(
    p: prog.Program,
    pset: ParamSet,
    data_inputs=None,
    seed: int = 0,
    track_keys: bool = False,
) -> RunResult:
    """Simulate the whole program; reveals are exact mod T in the noise
    regime the parameter set was sized for."""
    errs = prog.validate(p)
    if errs:
        raise ValueError("invalid program: " + "; ".join(errs))
    if p.ell != pset.ell:
        raise ValueError(f"program length {p.ell} does not match params {pset.ell}")
    rp = pset.ring()
    n = pset.n
    inputs = materialize_inputs(p, data_inputs, n, run_noise_seed(seed), pset.gamma)
    global_seed = hash_key(seed, "public-elements")
    server = ServerState(p, pset)
    transcript = Transcript()
    key_history: list[list[ring.RingElement]] = []
    mail: list[list] = [[] for _ in range(n)]
    for i in range(1, p.r + 1):
        ctx = build_context(server, global_seed, i, seed)
        rec = RoundRecord(round=i, mode=ctx.instr.mode)
        next_mail: list[list] = [[] for _ in range(n)]
        results = []
        for j in range(n):
            res = client_step(ClientState(i, j), ctx, mail[j], inputs[i - 1][j])
            for recv, payload in res.reshares:
                next_mail[recv].append(payload)
            rec.c2s_bytes += res.c2s_bits / 8.0
            rec.c2c_bytes += res.c2c_bits / 8.0
            rec.c2c_messages += len(res.reshares)
            results.append(res)
        if track_keys:
            key_history.append([res.state.key_share for res in results])
        out = server_step(server, ctx, results)
        if out is not None:
            transcript.reveals.append((i - 1, out))
        transcript.rows.append(rec)
        mail = next_mail
    # Flush: a final-round reveal is delivered in a synthetic round r+1.
    if p.r >= 1 and p.instruction(p.r).mode == prog.REVEAL:
        transcript.reveals.append((p.r, server.open_round(p.r)))
    return RunResult(
        reveals=list(transcript.reveals),
        transcript=transcript,
        key_history=key_history if track_keys else None,
    )
