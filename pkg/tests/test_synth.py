import json
import math

import numpy as np
import pytest

from qmsep.hilbert import DensityOp, Projector, QState, RegisterLayout, haar_unitary, partial_trace
from qmsep.streams import Stream
from qmsep.synth import (
    SynthError,
    SynthesisParams,
    TrialEngine,
    VerifierSpec,
    acceptance_of,
    alternating_sample,
    build_pq,
    embed_unitary,
    max_acceptance,
    derived_n_alternations,
    derived_t_trials,
    purify,
    run_trial,
    run_trial_destructive,
    synthesize,
)

H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def accept_all_spec(m=1):
    """Accepts every input: flips a fresh ancilla to |1> and measures it."""
    n = m + 1
    v = embed_unitary(X, [m], n)
    return VerifierSpec(m=m, k=1, v_hat=v, ans_index=m)


def reject_all_spec(m=1):
    """Measures a fresh |0> ancilla: never accepts."""
    n = m + 1
    return VerifierSpec(m=m, k=1, v_hat=np.eye(1 << n), ans_index=m)


def random_spec(m, k, stream):
    n = m + k
    return VerifierSpec(m=m, k=k, v_hat=haar_unitary(1 << n, stream.gen),
                        ans_index=int(stream.integers(0, n)))


def good_spec(m, k, stream, b=0.9, gap=None):
    """Rejection-sample a verifier with max_acceptance >= b (and optional
    spectral gap between the top two eigenvalues of P1 Q1 P1)."""
    while True:
        spec = random_spec(m, k, stream)
        p1, q1 = build_pq(spec)
        vals = np.linalg.eigvalsh(p1.matrix @ q1.matrix @ p1.matrix)
        if vals[-1] < b:
            continue
        if gap is not None and vals[-1] - vals[-2] < gap:
            continue
        return spec


# ----------------------------------------------------------------- build_pq


def test_build_pq_identity_single_qubit():
    spec = VerifierSpec(m=1, k=0, v_hat=np.eye(2), ans_index=0)
    p1, q1 = build_pq(spec)
    assert np.allclose(p1.matrix, np.eye(2))  # k = 0: no ancilla constraint
    assert np.allclose(q1.matrix, np.diag([0, 1.0]))


def test_build_pq_p1_rank():
    spec = random_spec(2, 1, Stream(1))
    p1, _ = build_pq(spec)
    assert abs(np.trace(p1.matrix).real - 4) < 1e-12  # rank 2^m


def test_build_pq_q1_idempotent_random():
    spec = random_spec(2, 1, Stream(2))
    _, q1 = build_pq(spec)
    assert np.abs(q1.matrix @ q1.matrix - q1.matrix).max() < 1e-9


# ------------------------------------------------------------ max_acceptance


def test_max_acceptance_accept_all():
    val, witness = max_acceptance(
        VerifierSpec(m=1, k=0, v_hat=np.eye(2), ans_index=0))
    assert abs(val - 1.0) < 1e-12
    assert np.allclose(witness.matrix, np.diag([0, 1.0]))


def test_max_acceptance_reject_all():
    val, _ = max_acceptance(reject_all_spec())
    assert val < 1e-12


def test_max_acceptance_vs_random_search():
    stream = Stream(3)
    spec = random_spec(2, 1, stream)
    val, _ = max_acceptance(spec)
    _, q1 = build_pq(spec)
    dm, dk = 4, 2
    phis = stream.normal(size=(100_000, dm)) + 1j * stream.normal(size=(100_000, dm))
    phis /= np.linalg.norm(phis, axis=1, keepdims=True)
    full = np.zeros((100_000, dm * dk), dtype=np.complex128)
    full[:, ::dk] = phis
    best = float(np.einsum("si,ij,sj->s", full.conj(), q1.matrix, full).real.max())
    assert val >= best - 1e-6
    assert val <= best + 0.02


def test_max_acceptance_witness_attains_value():
    spec = random_spec(2, 1, Stream(8))
    val, witness = max_acceptance(spec)
    assert abs(acceptance_of(spec, witness) - val) < 1e-9


# --------------------------------------------------------------- parameters


def test_alternation_count_desk_defaults():
    # a = 0.5, b = 0.9, m = 2: max(15*(4 - log2(0.4)), 16*0.9/0.16) = 90
    assert derived_n_alternations(2, 0.5, 0.9) == 90
    assert derived_t_trials(2) == 128
    assert derived_t_trials(2, q_factor=1) == 16


def test_params_validation():
    with pytest.raises(SynthError):
        SynthesisParams(a=0.9, b=0.5, n_alternations=10, t_trials=10)
    with pytest.raises(SynthError):
        SynthesisParams(a=0.5, b=0.9, n_alternations=0, t_trials=10)
    p = SynthesisParams.default(2)
    assert p.threshold == math.ceil(90 * 1.4)


# -------------------------------------------------------- alternating sample


def one_qubit_pair(p):
    """P1 = |0><0|, Q1 = |w><w| with |<0|w>|^2 = p."""
    w = np.array([math.sqrt(p), math.sqrt(1 - p)])
    return (Projector(np.diag([1.0, 0]).astype(np.complex128)),
            Projector(np.outer(w, w)))


def start_zero():
    return QState(RegisterLayout((("M", 1),)), np.array([1.0, 0]))


def test_alternating_sample_p1_all_ones():
    p1, q1 = one_qubit_pair(1.0)
    bits = alternating_sample(p1, q1, start_zero(), 5, Stream(0))
    assert bits == [1] * 10


def test_alternating_sample_p0_alternates():
    p1, q1 = one_qubit_pair(0.0)
    bits = alternating_sample(p1, q1, start_zero(), 5, Stream(0))
    # starting in v with p = 0: Q outcome flips from b_0 = 1, then P flips back
    assert bits == [0, 1] * 5


def test_alternating_sample_half_flip_rate():
    p1, q1 = one_qubit_pair(0.5)
    stream = Stream(6)
    flips = 0
    total = 0
    for _ in range(10_000):
        bits = [1] + alternating_sample(p1, q1, start_zero(), 5, stream)
        flips += sum(b1 != b0 for b0, b1 in zip(bits, bits[1:]))
        total += len(bits) - 1
    assert abs(flips / total - 0.5) < 0.02


def markov_chain_distribution(p, n_bits):
    """Exact distribution over outcome strings: b_0 = 1, stay prob p."""
    dist = {}
    def rec(prefix, prob, prev):
        if len(prefix) == n_bits:
            dist[tuple(prefix)] = prob
            return
        for b in (0, 1):
            q = p if b == prev else 1 - p
            if q > 0:
                rec(prefix + [b], prob * q, b)
    rec([], 1.0, 1)
    return dist


@pytest.mark.parametrize("p", [0.0, 0.25, 0.5, 0.9])
def test_alternating_sample_matches_markov_chain(p):
    p1, q1 = one_qubit_pair(p)
    stream = Stream(int(p * 100))
    n_alt = 2
    counts = {}
    n_seq = 10_000
    for _ in range(n_seq):
        bits = tuple(alternating_sample(p1, q1, start_zero(), n_alt, stream))
        counts[bits] = counts.get(bits, 0) + 1
    exact = markov_chain_distribution(p, 2 * n_alt)
    atoms = set(exact) | set(counts)
    tv = 0.5 * sum(abs(exact.get(a, 0.0) - counts.get(a, 0) / n_seq)
                   for a in atoms)
    assert tv <= 0.03


# ------------------------------------------------------------- trial engine


def small_params(n_alt=10, t=16, a=0.5, b=0.9):
    return SynthesisParams(a=a, b=b, n_alternations=n_alt, t_trials=t)


def test_engine_accept_all_succeeds_always():
    engine = TrialEngine(accept_all_spec(), small_params())
    assert abs(engine.p_success - 1.0) < 1e-9
    rho = engine.rho_m(True)
    assert abs(acceptance_of(accept_all_spec(), rho) - 1.0) < 1e-9


def test_engine_reject_all_never_succeeds():
    engine = TrialEngine(reject_all_spec(), small_params())
    assert engine.p_success < 1e-12


def test_engine_counter_register_width():
    engine = TrialEngine(accept_all_spec(), small_params(n_alt=10))
    assert engine.cnt_qubits == 1 + math.ceil(math.log2(21))


def _chain_success_prob(spec, params):
    """Independent oracle: evolve the per-block (state, last bit, count)
    Markov chain classically using the block overlaps."""
    from qmsep.jordan import jordan_decompose
    p1, q1 = build_pq(spec)
    dm = 1 << spec.m
    blocks = [b for b in jordan_decompose(p1, q1).blocks if b.v is not None]
    n = params.n_alternations
    total = 0.0
    for blk in blocks:
        p = blk.p
        # states: 0 = current vector aligned with v-side, 1 = orthogonal
        # chain over (side, last bit, count)
        dist = {("v", 1, 0): 1.0 / dm}
        for _ in range(n):
            for proj_p in (p, None):  # Q measurement then P measurement
                new = {}
                for (side, last, cnt), w in dist.items():
                    if proj_p is not None:  # Q measurement
                        hit = p if side == "v" else 1 - p
                        stay = ("w", 1), ("w_perp", 0)
                    else:  # P measurement
                        hit = p if side == "w" else (1 - p if side == "w_perp" else (1.0 if side == "v" else 0.0))
                        stay = ("v", 1), ("v_perp", 0)
                    for (nside, bit), q in zip(stay, (hit, 1 - hit)):
                        if q <= 0:
                            continue
                        ncnt = cnt + (1 if bit == last else 0)
                        key = (nside, bit, ncnt)
                        new[key] = new.get(key, 0.0) + w * q
                dist = new
        total += sum(w for (side, last, cnt), w in dist.items()
                     if last == 1 and cnt >= params.threshold)
    return total


def test_engine_matches_markov_chain_oracle():
    stream = Stream(17)
    for i in range(5):
        spec = random_spec(2, 1, stream)
        params = small_params(n_alt=int(stream.integers(4, 12)))
        engine = TrialEngine(spec, params)
        want = _chain_success_prob(spec, params)
        assert abs(engine.p_success - want) < 1e-6


def test_engine_agrees_with_destructive_trial():
    stream = Stream(23)
    spec = good_spec(2, 1, stream)
    params = small_params(n_alt=8, t=16)
    engine = TrialEngine(spec, params)
    n = 500
    hits = sum(run_trial_destructive(spec, params, stream.split(i)).success
               for i in range(n))
    assert abs(hits / n - engine.p_success) <= 0.07  # 3 sigma at n = 500


def test_run_trial_success_state_is_purification():
    stream = Stream(29)
    spec = good_spec(2, 1, stream)
    params = small_params(n_alt=8)
    engine = TrialEngine(spec, params)
    res = run_trial(spec, params, stream, engine=engine)
    res.state.check_norm()
    rho = partial_trace(res.state, ["M"])
    if res.success:
        assert res.est_count >= params.threshold
        assert abs(res.accept_prob_of_reduced
                   - acceptance_of(spec, rho)) < 1e-9


def test_trial_success_rate_lower_bound_exact():
    # the engine's p_success is exact, so the subroutine's guarantee
    # Pr[success] >= 1/2^(m+2) can be checked without sampling
    stream = Stream(31)
    params = SynthesisParams.default(2)
    for i in range(5):
        spec = good_spec(2, int(stream.integers(1, 3)), stream)
        engine = TrialEngine(spec, params)
        assert engine.p_success >= 1 / 16


# -------------------------------------------------------------- synthesizer


def test_synthesize_eigen_accept_all():
    res = synthesize(accept_all_spec(),
                     SynthesisParams.default(1, backend="eigen"), Stream(0))
    assert not res.fallback
    assert abs(acceptance_of(accept_all_spec(), res.state) - 1.0) < 1e-9


def test_synthesize_trial_reject_all_falls_back():
    res = synthesize(reject_all_spec(), small_params(t=8), Stream(0))
    assert res.fallback
    assert np.allclose(res.state.matrix, np.eye(2) / 2)


def test_synthesize_backend_agreement():
    stream = Stream(37)
    params = small_params(n_alt=30, t=64)
    for i in range(10):
        spec = good_spec(2, 1, stream, b=0.9, gap=0.1)
        eig = synthesize(spec, SynthesisParams.default(2, backend="eigen"),
                         stream)
        tri = synthesize(spec, params, stream)
        assert not tri.fallback
        acc_e = acceptance_of(spec, eig.state)
        acc_t = acceptance_of(spec, tri.state)
        assert acc_t >= 0.5
        assert abs(acc_e - acc_t) <= 0.1


# ------------------------------------------------------------ serialization


def test_verifier_json_round_trip():
    spec = random_spec(2, 1, Stream(41))
    back = VerifierSpec.from_json(spec.to_json())
    assert back.m == spec.m and back.k == spec.k
    assert back.ans_index == spec.ans_index
    assert np.abs(back.v_hat - spec.v_hat).max() < 1e-12


def test_verifier_json_gate_list():
    text = json.dumps({
        "m": 1, "k": 1, "ans_index": 1,
        "gates": [{"name": "H", "targets": [0]},
                  {"name": "CNOT", "targets": [0, 1]}],
    })
    spec = VerifierSpec.from_json(text)
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    want = cnot @ np.kron(H, np.eye(2))
    assert np.abs(spec.v_hat - want).max() < 1e-12
    # |0> input: Bell state, accepts with probability 1/2
    assert abs(acceptance_of(spec, DensityOp(
        RegisterLayout((("M", 1),)), np.diag([1.0, 0]))) - 0.5) < 1e-12


def test_verifier_json_unknown_gate():
    with pytest.raises(SynthError):
        VerifierSpec.from_json(json.dumps(
            {"m": 1, "k": 0, "ans_index": 0,
             "gates": [{"name": "ZZ", "targets": [0]}]}))


def test_purify_recovers_density():
    stream = Stream(43)
    mat = stream.normal(size=(4, 4)) + 1j * stream.normal(size=(4, 4))
    mat = mat @ mat.conj().T
    mat /= np.trace(mat).real
    rho = DensityOp(RegisterLayout((("M", 2),)), mat)
    psi = purify(rho)
    back = partial_trace(psi, ["M"])
    assert np.abs(back.matrix - mat).max() < 1e-9
