"""The counterfeiting adversary: test, update, and synthesize phases.

The adversary re-verifies the honest banknote a random number of times to
learn a database D of oracle query-answer pairs, then repeatedly
synthesizes a candidate note against the D-simulated verifier and runs the
true verifier on it, merging every newly observed pair into the database.
Finally it synthesizes two notes against a uniformly chosen intermediate
database and outputs them as forgeries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import DensityOp
from .money import Banknote, MoneyScheme, WorldHandle
from .oracle import ClassicalDB
from .synth import (
    SynthesisParams,
    TrialEngine,
    VerifierSpec,
    acceptance_of,
    build_pq,
    max_acceptance,
    synthesize,
)


class AttackError(ValueError):
    pass


def shrink_factor(delta_r: float, epsilon: float) -> float:
    """The recurring quantity 1 - sqrt(1 - delta_r + epsilon)."""
    inner = 1.0 - delta_r + epsilon
    if inner < 0 or inner > 1:
        raise AttackError("need 0 <= 1 - delta_r + epsilon <= 1")
    return 1.0 - math.sqrt(inner)


def derived_params(profile, epsilon: float, delta_r: float, variant: str) -> dict:
    """Parameter values the analysis prescribes, before any scaling."""
    ell = profile.q_prime  # oracle queries made by key_gen + mint
    g = shrink_factor(delta_r, epsilon)
    if variant == "classical_mint":
        t_max = math.ceil(ell / epsilon)
        n_updates = math.ceil(100.0 * ell / g ** 2)
    elif variant == "quantum_mint":
        t_max = math.ceil(36.0 * profile.q * profile.q_prime / epsilon ** 2)
        n_updates = math.ceil(profile.q * profile.q_prime / (epsilon ** 2 * g ** 4))
    else:
        raise AttackError(f"unknown variant {variant!r}")
    return {"ell": ell, "t_max": t_max, "n_updates": n_updates,
            "success_bound": 1.8 * g ** 2 - 1.0}


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    delta_r: float
    t_max: int
    n_updates: int
    synth_params: SynthesisParams
    variant: str
    scaled: bool = False

    def __post_init__(self):
        if not (0 < self.epsilon < 1):
            raise AttackError("epsilon must lie in (0, 1)")
        if self.variant not in ("classical_mint", "quantum_mint"):
            raise AttackError(f"unknown variant {self.variant!r}")
        if self.t_max < 1 or self.n_updates < 1:
            raise AttackError("t_max and n_updates must be positive")

    @classmethod
    def default(cls, scheme: MoneyScheme, epsilon: float = 0.1,
                delta_r: float = 0.99, variant: str | None = None,
                t_max: int | None = None, n_updates: int | None = None,
                synth_params: SynthesisParams | None = None) -> "AttackConfig":
        profile = scheme.profile
        if variant is None:
            variant = ("quantum_mint" if profile.mint_query_mode == "quantum"
                       else "classical_mint")
        derived = derived_params(profile, epsilon, delta_r, variant)
        scaled = t_max is not None or n_updates is not None
        if synth_params is None:
            synth_params = SynthesisParams.default(profile.m, backend="eigen")
        return cls(epsilon=epsilon, delta_r=delta_r,
                   t_max=t_max if t_max is not None else derived["t_max"],
                   n_updates=n_updates if n_updates is not None else derived["n_updates"],
                   synth_params=synth_params, variant=variant, scaled=scaled)


@dataclass
class AttackTranscript:
    t_drawn: int
    j_drawn: int
    db_sizes: list
    databases: list            # database snapshots (dict copies, deduplicated)
    update_accepts: list
    forged_pair: tuple
    bad_query_counts: list
    discovered_secret_pairs: int  # telescoped key_gen/mint discoveries
    accept1: bool = False
    accept2: bool = False
    success: bool = False


def _verify_collecting(scheme, pk, note, world, stream):
    """Run verify; returns (accept, post_note, pairs observed)."""
    before = len(world.dr)
    ok, post = scheme.verify(pk, note, world, stream)
    pairs = world.dr[before:]
    return ok, post, pairs


def test_phase(scheme, pk, note, world, cfg: AttackConfig, stream):
    t = int(stream.integers(0, cfg.t_max))
    d = {}
    for i in range(t):
        ok, note, pairs = _verify_collecting(scheme, pk, note, world,
                                             stream.split(("test", i)))
        d.update(dict(pairs))
    return note, d, t


def build_sim_verifier(scheme, pk, serial, d) -> VerifierSpec:
    """d may be a dict or a sequence of (x, z) pairs; inconsistent pairs
    (same position, different bits) are rejected."""
    if not isinstance(d, dict):
        d = ClassicalDB(tuple(d)).as_dict()
    return scheme.sim_verifier(pk, serial, d)


class _SynthCache:
    """Memoizes synthesis against a fixed database (per attack run)."""

    def __init__(self, scheme, pk, serial, params: SynthesisParams):
        self.scheme = scheme
        self.pk = pk
        self.serial = serial
        self.params = params
        self.cache = {}

    def state_for(self, d: dict, rng) -> DensityOp:
        key = frozenset(d.items())
        if self.params.backend == "eigen":
            # deterministic given the database; safe to memoize outright
            if key not in self.cache:
                spec = build_sim_verifier(self.scheme, self.pk, self.serial, d)
                self.cache[key] = synthesize(spec, self.params, rng).state
            return self.cache[key]
        if key not in self.cache:
            spec = build_sim_verifier(self.scheme, self.pk, self.serial, d)
            self.cache[key] = (spec, TrialEngine(spec, self.params))
        spec, engine = self.cache[key]
        return synthesize(spec, self.params, rng, engine=engine).state


def update_phase(scheme, pk, serial, world, d0: dict, cfg: AttackConfig,
                 stream, cache: _SynthCache | None = None,
                 secret_positions: set | None = None):
    if cache is None:
        cache = _SynthCache(scheme, pk, serial, cfg.synth_params)
    databases = [dict(d0)]
    accepts = []
    bad_counts = []
    discovered = 0
    d = dict(d0)
    for k in range(cfg.n_updates):
        sigma = cache.state_for(d, stream.split(("synth", k)))
        note = Banknote(serial, sigma)
        known = set(d)
        ok, _, pairs = _verify_collecting(scheme, pk, note, world,
                                          stream.split(("upd", k)))
        accepts.append(bool(ok))
        new_pairs = {x: z for x, z in pairs if x not in d}
        if secret_positions is not None:
            bad_counts.append(len({x for x, _ in pairs}
                                  & (secret_positions - known)))
            discovered += len(set(new_pairs) & secret_positions)
        d.update(new_pairs)
        if new_pairs:
            databases.append(dict(d))
        else:
            databases.append(databases[-1])
    return databases, accepts, bad_counts, discovered, cache


def synthesize_phase(scheme, pk, serial, databases, cfg: AttackConfig, stream,
                     cache: _SynthCache | None = None):
    if cache is None:
        cache = _SynthCache(scheme, pk, serial, cfg.synth_params)
    j = int(stream.integers(0, cfg.n_updates))
    d_j = databases[j]
    phi1 = cache.state_for(d_j, stream.split(("forge", j, 1)))
    phi2 = cache.state_for(d_j, stream.split(("forge", j, 2)))
    return j, phi1, phi2


def make_world(scheme: MoneyScheme, cfg: AttackConfig, stream) -> WorldHandle:
    kind = "sampled" if cfg.variant == "classical_mint" else "lazy"
    return WorldHandle(kind, scheme.profile.l, stream=stream.split("world"))


def run_attack(scheme: MoneyScheme, cfg: AttackConfig, stream) -> AttackTranscript:
    if cfg.variant == "quantum_mint" and scheme.profile.mint_query_mode != "quantum":
        raise AttackError("quantum_mint variant needs a quantum-mint scheme")
    world = make_world(scheme, cfg, stream)
    kp = scheme.key_gen(world, stream.split("keygen"))
    note = scheme.mint(kp.sk, world, stream.split("mint"))
    secret = world.positions_touched_by("keygen", "mint")

    note, d0, t = test_phase(scheme, kp.pk, note, world, cfg, stream.split("t"))
    cache = _SynthCache(scheme, kp.pk, note.serial, cfg.synth_params)
    databases, accepts, bad_counts, discovered, cache = update_phase(
        scheme, kp.pk, note.serial, world, d0, cfg, stream.split("u"),
        cache=cache, secret_positions=secret)
    j, phi1, phi2 = synthesize_phase(scheme, kp.pk, note.serial, databases,
                                     cfg, stream.split("s"), cache=cache)
    ok1, _, _ = _verify_collecting(scheme, kp.pk, Banknote(note.serial, phi1),
                                   world, stream.split("v1"))
    ok2, _, _ = _verify_collecting(scheme, kp.pk, Banknote(note.serial, phi2),
                                   world, stream.split("v2"))
    snapshots = [databases[0]]
    for db in databases[1:]:
        if db is not snapshots[-1] and db != snapshots[-1]:
            snapshots.append(db)
    return AttackTranscript(
        t_drawn=t, j_drawn=j,
        db_sizes=[len(db) for db in databases],
        databases=snapshots,
        update_accepts=accepts,
        forged_pair=(phi1, phi2),
        bad_query_counts=bad_counts,
        discovered_secret_pairs=discovered,
        accept1=bool(ok1), accept2=bool(ok2),
        success=bool(ok1 and ok2))


def bad_query_probe(scheme: MoneyScheme, cfg: AttackConfig, stream) -> int:
    """After the test phase, does one more verification hit a key_gen/mint
    position the adversary has not learned?  Returns 0/1."""
    world = make_world(scheme, cfg, stream)
    kp = scheme.key_gen(world, stream.split("keygen"))
    note = scheme.mint(kp.sk, world, stream.split("mint"))
    secret = world.positions_touched_by("keygen", "mint")
    note, d, _ = test_phase(scheme, kp.pk, note, world, cfg, stream.split("t"))
    _, _, pairs = _verify_collecting(scheme, kp.pk, note, world,
                                     stream.split("probe"))
    return int(bool({x for x, _ in pairs} & (secret - set(d))))


def _true_accept_prob(scheme, note: Banknote, world: WorldHandle) -> float:
    """Exact acceptance probability of the true verifier on a note.

    All schemes verify with commuting per-qubit projectors, so the
    probability is Tr(Pi rho) for the product projector; querying the
    oracle classically here does not disturb the note.
    """
    from .synth import embed_unitary
    from .money import _basis_proj, _conjugate_proj

    positions = scheme.verify_positions(note.serial)
    answers = {x: world._bit(x) for x in positions}
    n = scheme.profile.m
    pi = np.eye(1 << n, dtype=np.complex128)
    name = scheme.profile.name
    if name == "hash-tag":
        for i in range(n):
            z = answers[scheme._pos(note.serial[0], i)]
            pi = pi @ embed_unitary(_basis_proj(z), [i], n)
    elif name == "conjugate":
        (s,) = note.serial
        for i in range(n):
            proj = _conjugate_proj(answers[scheme._pos(s, i, 0)],
                                   answers[scheme._pos(s, i, 1)])
            pi = pi @ embed_unitary(proj, [i], n)
    elif name == "counterexample":
        s, s_inner = note.serial
        pi = pi @ embed_unitary(_basis_proj(answers[scheme._wrap_pos(s)]), [0], n)
        for i in range(scheme.inner_m):
            proj = _conjugate_proj(answers[scheme._inner_pos(s_inner, i, 0)],
                                   answers[scheme._inner_pos(s_inner, i, 1)])
            pi = pi @ embed_unitary(proj, [1 + i], n)
    else:
        raise AttackError(f"no exact acceptance rule for scheme {name!r}")
    return float(np.trace(pi @ note.state.matrix).real)


def simulation_gap_probe(scheme: MoneyScheme, cfg: AttackConfig, stream):
    """Per-run (Pr[true accepts rho_t], Pr[sim accepts rho_t]) on the
    post-test-phase note, both computed exactly given the sampled world."""
    world = make_world(scheme, cfg, stream)
    kp = scheme.key_gen(world, stream.split("keygen"))
    note = scheme.mint(kp.sk, world, stream.split("mint"))
    note, d, _ = test_phase(scheme, kp.pk, note, world, cfg, stream.split("t"))
    p_true = _true_accept_prob(scheme, note, world)
    spec = build_sim_verifier(scheme, kp.pk, note.serial, d)
    p_sim = acceptance_of(spec, note.state)
    return p_true, p_sim
