import numpy as np
import pytest

from stateful_agg import ideal, params, protocol, ring
from stateful_agg import program as prog

from helpers import desk_paramset, random_data, random_program, reveals_equal, run_rng


def _sum_program(r, ell):
    rounds = [prog.Instruction.make(prog.STORE, prog.InputRule.data()) for _ in range(r - 1)]
    rounds.append(
        prog.Instruction.make(prog.REVEAL, prog.InputRule.data(), {k: 1 for k in range(1, r)})
    )
    return prog.Program(ell=ell, rounds=rounds)


def _reference(p, pset, data, seed):
    inputs = ideal.materialize_inputs(
        p, data, pset.n, protocol.run_noise_seed(seed), pset.gamma
    )
    return ideal.evaluate_program(p, inputs, pset.T)


def test_long_running_aggregation_matches_reference():
    p = _sum_program(4, 3)
    pset = desk_paramset(p, n=5)
    data = random_data(run_rng("lra"), p, 5)
    res = protocol.run_protocol(p, pset, data_inputs=data, seed=1)
    assert reveals_equal(res.reveals, _reference(p, pset, data, 1).reveals)


def test_zero_input_reveal_is_zero():
    p = prog.Program(ell=4, rounds=[prog.Instruction.make(prog.REVEAL, prog.InputRule.zero())])
    pset = desk_paramset(p, n=3)
    res = protocol.run_protocol(p, pset, seed=2)
    assert [int(v) for v in res.reveals[0][1]] == [0, 0, 0, 0]


def test_matches_reference_r4_n5_l8():
    rng = run_rng("r4n5")
    p, _ = random_program(rng, r_max=4, n_max=1, ell_max=1)
    p = prog.Program(ell=8, rounds=_sum_program(4, 8).rounds)
    pset = desk_paramset(p, n=5)
    data = random_data(rng, p, 5)
    res = protocol.run_protocol(p, pset, data_inputs=data, seed=3)
    assert reveals_equal(res.reveals, _reference(p, pset, data, 3).reveals)


def test_noise_rules_replay_identically():
    # A program with per-client Gaussian rules matches the reference exactly
    # when both draw from the run's noise seed.
    rounds = [
        prog.Instruction.make(prog.STORE, prog.InputRule.gauss(25.0)),
        prog.Instruction.make(prog.REVEAL, prog.InputRule.data(variance=9.0), {1: 1}),
    ]
    p = prog.Program(ell=2, rounds=rounds)
    pset = desk_paramset(p, n=6, input_bits=8)
    data = random_data(run_rng("noisy"), p, 6, input_bits=8)
    res = protocol.run_protocol(p, pset, data_inputs=data, seed=17)
    assert reveals_equal(res.reveals, _reference(p, pset, data, 17).reveals)


def test_first_round_keys_are_seeded_uniform():
    p = _sum_program(2, 1)
    pset = desk_paramset(p, n=4)
    a = protocol.run_protocol(p, pset, seed=5, track_keys=True)
    b = protocol.run_protocol(p, pset, seed=5, track_keys=True)
    assert a.key_history[0] == b.key_history[0]
    c = protocol.run_protocol(p, pset, seed=6, track_keys=True)
    assert a.key_history[0] != c.key_history[0]


def test_key_sum_invariant_100_rounds_plain_resharing():
    r = 100
    p = prog.Program(
        ell=1,
        rounds=[prog.Instruction.make(prog.STORE, prog.InputRule.zero()) for _ in range(r)],
    )
    pset = desk_paramset(p, n=4, N=16, seed_resharing=False, d=3)
    res = protocol.run_protocol(p, pset, seed=9, track_keys=True)
    s = res.key_history[0][0]
    for sh in res.key_history[0][1:]:
        s = s + sh
    for i, shares in enumerate(res.key_history, start=1):
        total = shares[0]
        for sh in shares[1:]:
            total = total + sh
        assert total == s, f"key sum drifted at round {i}"


def test_key_sum_invariant_seed_resharing_with_corrections():
    # With seed resharing the cohort sum drifts by the accumulated server
    # corrections; reveals still match the reference exactly.
    p = _sum_program(6, 2)
    pset = desk_paramset(p, n=4, seed_resharing=True)
    data = random_data(run_rng("drift"), p, 4)
    res = protocol.run_protocol(p, pset, data_inputs=data, seed=21)
    assert reveals_equal(res.reveals, _reference(p, pset, data, 21).reveals)


def test_seed_and_plain_resharing_agree():
    p = _sum_program(5, 3)
    data = random_data(run_rng("dual"), p, 4)
    res_seed = protocol.run_protocol(p, desk_paramset(p, n=4, seed_resharing=True),
                                     data_inputs=data, seed=8)
    res_plain = protocol.run_protocol(p, desk_paramset(p, n=4, seed_resharing=False),
                                      data_inputs=data, seed=8)
    assert reveals_equal(res_seed.reveals, res_plain.reveals)


def test_reveals_invariant_to_crypto_randomness():
    # Same data, different protocol seeds: freshly rerandomized shares and
    # noise must leave the revealed values untouched.
    p = _sum_program(3, 2)
    pset = desk_paramset(p, n=4)
    data = random_data(run_rng("rerand"), p, 4)
    base = protocol.run_protocol(p, pset, data_inputs=data, seed=100)
    for trial in range(20):
        other = protocol.run_protocol(p, pset, data_inputs=data, seed=101 + trial)
        assert reveals_equal(base.reveals, other.reveals)


def test_transcript_deterministic():
    p = _sum_program(4, 2)
    pset = desk_paramset(p, n=3)
    data = random_data(run_rng("det"), p, 3)
    a = protocol.run_protocol(p, pset, data_inputs=data, seed=12)
    b = protocol.run_protocol(p, pset, data_inputs=data, seed=12)
    assert a.transcript.rows == b.transcript.rows
    assert reveals_equal(a.reveals, b.reveals)


def test_client_to_client_bytes_seed_resharing():
    p = _sum_program(3, 2)
    pset = desk_paramset(p, n=5, d=7, seed_resharing=True)
    res = protocol.run_protocol(p, pset, seed=4)
    for row in res.transcript.rows:
        assert row.c2c_bytes == pset.n * pset.d * pset.kappa / 8
        assert row.c2c_messages == pset.n * pset.d


def test_client_to_server_bytes_match_cost_model_benchmark_row():
    # The first benchmark row's parameter set: N=2048, 44-bit q, no packing,
    # vector length 1000.  Per-client upload per round must equal the cost
    # model: (1000 + 2048) * 44 / 8 = 16764 bytes.
    p = _sum_program(2, 1000)
    pset = params.make_paramset(
        n=40, r=2, ell=1000, input_bits=16, N=2048, logq=44, pf=1,
        slot_width=26, d=2, seed_resharing=True,
    )
    data = random_data(run_rng("t1row"), p, 40, input_bits=16)
    res = protocol.run_protocol(p, pset, data_inputs=data, seed=33)
    cost = params.cost_model(2048, 44, 1000, 1)
    for row in res.transcript.rows:
        assert row.c2s_bytes / pset.n == pytest.approx(cost.client_server_bytes)
    assert cost.client_server_bytes == pytest.approx(16764.0)
    assert reveals_equal(res.reveals, _reference(p, pset, data, 33).reveals)


def test_server_step_missing_message():
    p = _sum_program(2, 1)
    pset = desk_paramset(p, n=3)
    server = protocol.ServerState(p, pset)
    ctx = protocol.build_context(server, "gs", 1, 0)
    with pytest.raises(protocol.ProtocolError, match="expected 3"):
        protocol.server_step(server, ctx, [])


def test_program_params_length_mismatch():
    p = _sum_program(2, 3)
    pset = desk_paramset(_sum_program(2, 4), n=3)
    with pytest.raises(ValueError, match="length"):
        protocol.run_protocol(p, pset, seed=1)


def test_vectors_spanning_multiple_ring_elements():
    # ell=40 at N=16 packs into three ring elements per message.
    p = _sum_program(3, 40)
    pset = desk_paramset(p, n=4, N=16)
    assert pset.m == 3
    data = random_data(run_rng("multi"), p, 4)
    res = protocol.run_protocol(p, pset, data_inputs=data, seed=77)
    assert reveals_equal(res.reveals, _reference(p, pset, data, 77).reveals)


def test_packed_slots_through_protocol():
    # Two entries per coefficient: headroom covers the cohort sum.
    p = _sum_program(3, 8)
    pset = params.make_paramset(
        n=4, r=3, ell=8, input_bits=6, N=16, pf=2, d=3,
        stats=prog.reveal_stats(p),
    )
    assert pset.T == 2 ** (2 * pset.slot_width)
    data = random_data(run_rng("packed"), p, 4)
    res = protocol.run_protocol(p, pset, data_inputs=data, seed=78)
    assert reveals_equal(res.reveals, _reference(p, pset, data, 78).reveals)


def test_weights_on_reveal_rounds_supported():
    # Later rounds may reference earlier revealed values; the composed mask
    # bases keep the key terms cancelling.
    rounds = [
        prog.Instruction.make(prog.STORE, prog.InputRule.data()),
        prog.Instruction.make(prog.REVEAL, prog.InputRule.data(), {1: 2}),
        prog.Instruction.make(prog.REVEAL, prog.InputRule.data(), {2: -1}),
        prog.Instruction.make(prog.REVEAL, prog.InputRule.data(), {1: 1, 2: 1, 3: 1}),
    ]
    p = prog.Program(ell=2, rounds=rounds)
    pset = desk_paramset(p, n=4)
    data = random_data(run_rng("revref"), p, 4)
    res = protocol.run_protocol(p, pset, data_inputs=data, seed=55)
    assert reveals_equal(res.reveals, _reference(p, pset, data, 55).reveals)
