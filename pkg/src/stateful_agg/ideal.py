"""Trusted-party reference for stateful aggregation.

Maintains the append-only state v_i = sum_j x_{i,j} + sum_{k<i} w_{i,k} v_k
over signed big integers and reduces mod T only at reveal, so the reference
is immune to any packing or headroom choices made by a real run.  Reveal of
round i's value is delivered one round late, during round i+1.

Also owns input materialization: turning each round's input rule plus the
clients' data into the concrete integer vectors submitted, with all noise
drawn deterministically from a seed so a protocol run can replay it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import program as prog
from .dp import per_client_std
from .prng import ctx_rng
from .ring import gaussian_ints

__all__ = ["IdealState", "IdealResult", "materialize_inputs", "evaluate_program", "run_ideal"]


@dataclass
class IdealState:
    values: list[np.ndarray] = field(default_factory=list)
    reveals: list[tuple[int, np.ndarray]] = field(default_factory=list)


@dataclass
class IdealResult:
    reveals: list[tuple[int, np.ndarray]]
    state: IdealState


def materialize_inputs(
    p: prog.Program,
    data_inputs,
    n: int,
    noise_seed: int = 0,
    gamma: float = 0.0,
) -> np.ndarray:
    """Concrete (r, n, ell) integer submissions implied by the input rules.

    data_inputs supplies the data rounds (None means all zeros).  Gaussian
    rules draw per client with variance target/(n*(1-gamma)); draws depend
    only on (noise_seed, round, client), so two runs with the same seed see
    identical noise.
    """
    out = np.zeros((p.r, n, p.ell), dtype=object)
    data = None if data_inputs is None else np.asarray(data_inputs, dtype=object)
    if data is not None and data.shape != (p.r, n, p.ell):
        raise ValueError(f"data inputs must have shape {(p.r, n, p.ell)}, got {data.shape}")
    for i, instr in enumerate(p.rounds, start=1):
        kind = instr.rule.kind
        if kind == prog.ZERO:
            continue
        for j in range(n):
            vec = np.zeros(p.ell, dtype=object)
            if kind == prog.DATA and data is not None:
                vec = vec + data[i - 1, j]
            if instr.rule.variance > 0:
                std = per_client_std(instr.rule.variance, n, gamma)
                draw = gaussian_ints(ctx_rng(noise_seed, "input-noise", i, j), std, p.ell)
                vec = vec + draw.astype(object)
            out[i - 1, j] = vec
    return out


def evaluate_program(p: prog.Program, inputs: np.ndarray, T: int) -> IdealResult:
    """Run the functionality on already-materialized inputs.

    inputs has shape (r, n, ell); reveals carry residues in [0, T).
    """
    inputs = np.asarray(inputs, dtype=object)
    if inputs.shape[0] != p.r or inputs.shape[2] != p.ell:
        raise ValueError(f"inputs shaped {inputs.shape} do not match program ({p.r}, n, {p.ell})")
    state = IdealState()
    for i, instr in enumerate(p.rounds, start=1):
        v = inputs[i - 1].sum(axis=0)
        for k, w in instr.weights:
            v = v + int(w) * state.values[k - 1]
        state.values.append(v)
        if instr.mode == prog.REVEAL:
            state.reveals.append((i, v % T))
    return IdealResult(reveals=list(state.reveals), state=state)


def run_ideal(
    p: prog.Program,
    data_inputs,
    T: int,
    n: int,
    noise_seed: int = 0,
    gamma: float = 0.0,
) -> IdealResult:
    """Materialize inputs from the rules, then evaluate."""
    errs = prog.validate(p)
    if errs:
        raise ValueError("invalid program: " + "; ".join(errs))
    inputs = materialize_inputs(p, data_inputs, n, noise_seed, gamma)
    return evaluate_program(p, inputs, T)
