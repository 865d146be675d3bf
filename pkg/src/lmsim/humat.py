"""Socio-cognitive consumer agents choosing among delivery channels.

Each agent weighs its motives (experiential, social, values) against its
evaluation of every alternative.  Satisfaction is the importance-weighted
mean evaluation; dissonance measures how evenly the positive and negative
contributions balance.  Dissonant agents talk to their network: those
unhappy with their choice ask the most persuasive alter (inquiring), those
happy with it push their view to all alters (signaling).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MissingStratum, UnknownAlternative, UnknownAttribute
from .popsynth import Population
from .scenario import HumatParams, MotiveRow, PriorRow
from .socnet import SocialNetwork
from .streams import RandomStream

log = logging.getLogger(__name__)

# satisfaction / dissonance differences below this count as ties
TIE_EPS = 1e-12


@dataclass(frozen=True)
class MotiveSpec:
    names: tuple[str, ...]
    groups: tuple[str, ...]
    strata: Mapping[str, tuple[MotiveRow, ...]]

    @classmethod
    def from_rows(cls, rows: Iterable[MotiveRow]) -> "MotiveSpec":
        names: list[str] = []
        groups: list[str] = []
        strata: dict[str, list[MotiveRow]] = {}
        for r in rows:
            if r.motive not in strata:
                names.append(r.motive)
                groups.append(r.group)
                strata[r.motive] = []
            strata[r.motive].append(r)
        return cls(tuple(names), tuple(groups), {k: tuple(v) for k, v in strata.items()})

    def row_for(self, motive: str, traits: Mapping[str, str]) -> MotiveRow:
        for r in self.strata[motive]:
            if r.stratum_attribute == "all" or traits.get(r.stratum_attribute) == r.stratum_category:
                return r
        raise MissingStratum(f"no importance distribution for motive {motive!r} and traits {dict(traits)}")

    def group_indices(self, group: str) -> list[int]:
        return [i for i, g in enumerate(self.groups) if g == group]


@dataclass
class HumatAgent:
    person_id: int
    importances: np.ndarray
    evaluations: np.ndarray  # motives x alternatives
    alternatives: tuple[str, ...]
    groups: tuple[str, ...]
    persuasion: float = 1.0
    traits: dict[str, str] = field(default_factory=dict)
    household_id: int | None = None
    satisfaction: np.ndarray = field(init=False, repr=False)
    dissonance: np.ndarray = field(init=False, repr=False)
    choice: str = field(init=False, default="")

    def __post_init__(self) -> None:
        self.importances = np.asarray(self.importances, dtype=float)
        self.evaluations = np.array(self.evaluations, dtype=float)
        if self.evaluations.shape != (self.importances.size, len(self.alternatives)):
            raise ValueError("evaluations must be motives x alternatives")
        self.refresh()
        choose(self)

    def refresh(self) -> None:
        self.satisfaction = satisfaction_vector(self.importances, self.evaluations)
        self.dissonance = dissonance_vector(self.importances, self.evaluations)

    def index(self, alternative: str) -> int:
        try:
            return self.alternatives.index(alternative)
        except ValueError:
            raise UnknownAlternative(alternative) from None

    @property
    def choice_index(self) -> int:
        return self.alternatives.index(self.choice)

    def is_dissonant(self, threshold: float) -> bool:
        return bool(self.dissonance[self.choice_index] >= threshold)

    def is_dissatisfied(self) -> bool:
        k = self.choice_index
        s = self.satisfaction
        return bool(np.any(np.delete(s, k) > s[k] + TIE_EPS))


# ---------------------------------------------------------------- algebra


def satisfaction_vector(w: np.ndarray, e: np.ndarray) -> np.ndarray:
    total = float(w.sum())
    if total == 0.0:
        return np.zeros(e.shape[1])
    return np.clip(w @ e / total, -1.0, 1.0)


def dissonance_vector(w: np.ndarray, e: np.ndarray) -> np.ndarray:
    pos = w @ np.where(e > 0, e, 0.0)
    neg = w @ np.where(e < 0, -e, 0.0)
    tot = pos + neg
    out = np.zeros_like(tot)
    np.divide(2.0 * np.minimum(pos, neg), tot, out=out, where=tot > 0)
    return np.clip(out, 0.0, 1.0)


def satisfaction(agent: HumatAgent, alternative: str) -> float:
    k = agent.index(alternative)
    return float(satisfaction_vector(agent.importances, agent.evaluations[:, k : k + 1])[0])


def dissonance(agent: HumatAgent, alternative: str) -> float:
    k = agent.index(alternative)
    return float(dissonance_vector(agent.importances, agent.evaluations[:, k : k + 1])[0])


def choose(agent: HumatAgent) -> str:
    """Highest satisfaction; ties go to lower dissonance, then catalog order."""
    s, d = agent.satisfaction, agent.dissonance
    best_s = s.max()
    candidates = [k for k in range(s.size) if s[k] >= best_s - TIE_EPS]
    best_d = min(d[k] for k in candidates)
    k = next(k for k in candidates if d[k] <= best_d + TIE_EPS)
    agent.choice = agent.alternatives[k]
    return agent.choice


# ---------------------------------------------------------------- initialisation


def _scaled_beta(rng: RandomStream, mean: float, sd: float, lo: float, hi: float) -> float:
    if sd == 0:
        return mean
    m = (mean - lo) / (hi - lo)
    v = (sd / (hi - lo)) ** 2
    k = m * (1 - m) / v - 1
    return lo + (hi - lo) * float(rng.beta(m * k, (1 - m) * k))


def init_agents(
    pop: Population,
    motive_spec: MotiveSpec,
    channels: Sequence[str],
    priors: Sequence[PriorRow],
    rng: RandomStream,
    persuasion: tuple[float, float] = (0.0, 1.0),
) -> list[HumatAgent]:
    """One agent per person, in person_id order.

    Importances come from the motive's stratum distribution (a beta on [0, 1]
    matching the configured mean and sd); evaluations from the per-alternative
    priors (a beta on [-1, 1]); persuasion is uniform on ``persuasion``.
    """
    channels = tuple(channels)
    prior = {(p.motive, p.alternative): p for p in priors}
    for m in motive_spec.names:
        for ch in channels:
            if (m, ch) not in prior:
                raise KeyError(f"missing evaluation prior for {m!r} x {ch!r}")
    agents = []
    for person in sorted(pop.persons, key=lambda p: p.person_id):
        traits = pop.traits(person)
        w = [
            _scaled_beta(rng, r.importance_mean, r.importance_sd, 0.0, 1.0)
            for r in (motive_spec.row_for(m, traits) for m in motive_spec.names)
        ]
        e = [
            [_scaled_beta(rng, prior[m, ch].eval_mean, prior[m, ch].eval_sd, -1.0, 1.0) for ch in channels]
            for m in motive_spec.names
        ]
        lo, hi = persuasion
        p = lo if lo == hi else float(rng.uniform(lo, hi))
        agents.append(
            HumatAgent(person.person_id, np.array(w), np.array(e), channels, motive_spec.groups, p, traits,
                       person.household_id)
        )
    return agents


def agents_from_params(pop: Population, params: HumatParams, channels: Sequence[str], rng: RandomStream) -> list[HumatAgent]:
    spec = MotiveSpec.from_rows(params.motives)
    return init_agents(pop, spec, channels, params.priors, rng, (params.persuasion_low, params.persuasion_high))


# ---------------------------------------------------------------- communication


@dataclass(frozen=True)
class Message:
    """Evaluation column ``values`` for alternative ``k`` sent from ``source`` to ``target``."""

    target: int
    source: int
    kind: str  # "inquire" | "signal"
    k: int
    values: np.ndarray
    strength: float


def _apply(agent: HumatAgent, msg: Message, lam: float) -> None:
    # convex step towards the sender's column; step size lam * strength, capped at 1
    step = min(1.0, lam * msg.strength)
    if step >= 1.0:
        agent.evaluations[:, msg.k] = msg.values
        return
    col = agent.evaluations[:, msg.k]
    agent.evaluations[:, msg.k] = np.clip(col + step * (msg.values - col), -1.0, 1.0)


def _most_persuasive(network: SocialNetwork, person_id: int, persuasion: Mapping[int, float]) -> tuple[int, float] | None:
    """Alter with maximal persuasion (ties: lowest person_id) and its layer multiplier."""
    best = None
    for q, mult in network.neighbors(person_id):
        if best is None or persuasion[q] > persuasion[best[0]]:
            best = (q, mult)
    return best


def inquire(
    agent: HumatAgent,
    network: SocialNetwork,
    agents: Mapping[int, HumatAgent],
    alternative: str | None = None,
    lam: float = 0.3,
) -> int | None:
    """Move ``agent``'s evaluations of ``alternative`` towards its most persuasive alter's.

    Returns the alter consulted, or None when the agent has no alters
    (nothing changes).
    """
    k = agent.index(alternative) if alternative is not None else agent.choice_index
    pick = _most_persuasive(network, agent.person_id, {q: a.persuasion for q, a in agents.items()})
    if pick is None:
        log.debug("agent %s has no alters to inquire", agent.person_id)
        return None
    q, mult = pick
    alter = agents[q]
    _apply(agent, Message(agent.person_id, q, "inquire", k, alter.evaluations[:, k].copy(), alter.persuasion * mult), lam)
    agent.refresh()
    return q


def signal(agent: HumatAgent, network: SocialNetwork, agents: Mapping[int, HumatAgent], lam: float = 0.3) -> int:
    """Push the agent's evaluations of its current choice to every alter; returns the count updated."""
    k = agent.choice_index
    values = agent.evaluations[:, k].copy()
    n = 0
    for q, mult in network.neighbors(agent.person_id):
        alter = agents[q]
        _apply(alter, Message(q, agent.person_id, "signal", k, values, agent.persuasion * mult), lam)
        alter.refresh()
        n += 1
    return n


def classify(agent: HumatAgent, threshold: float) -> str:
    if not agent.is_dissonant(threshold):
        return "content"
    return "inquire" if agent.is_dissatisfied() else "signal"


def diffusion_round(
    agents: Sequence[HumatAgent],
    network: SocialNetwork,
    rng: RandomStream | None = None,
    threshold: float = 0.5,
    lam: float = 0.3,
) -> int:
    """One synchronous communication round; returns how many agents changed choice.

    Every agent is classified and every message built from the pre-round
    state.  Messages are then applied per recipient in (source, kind) order,
    so the result does not depend on the order of ``agents``.  ``rng`` is
    accepted for interface symmetry; rounds are deterministic.
    """
    by_id = {a.person_id: a for a in agents}
    persuasion = {q: a.persuasion for q, a in by_id.items()}
    messages: list[Message] = []
    for a in agents:
        action = classify(a, threshold)
        if action == "content":
            continue
        k = a.choice_index
        if action == "inquire":
            pick = _most_persuasive(network, a.person_id, persuasion)
            if pick is None:
                continue
            q, mult = pick
            src = by_id[q]
            messages.append(Message(a.person_id, q, "inquire", k, src.evaluations[:, k].copy(), src.persuasion * mult))
        else:
            values = a.evaluations[:, k].copy()
            for q, mult in network.neighbors(a.person_id):
                messages.append(Message(q, a.person_id, "signal", k, values, a.persuasion * mult))

    messages.sort(key=lambda m: (m.target, m.source, m.kind, m.k))
    for msg in messages:
        _apply(by_id[msg.target], msg, lam)

    before = {q: a.choice for q, a in by_id.items()}
    for a in agents:
        a.refresh()
        choose(a)
    return sum(1 for q, a in by_id.items() if a.choice != before[q])


def run_diffusion(
    agents: Sequence[HumatAgent],
    network: SocialNetwork,
    max_rounds: int,
    rng: RandomStream | None = None,
    threshold: float = 0.5,
    lam: float = 0.3,
) -> tuple[int, bool]:
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    for r in range(1, max_rounds + 1):
        if diffusion_round(agents, network, rng, threshold, lam) == 0:
            return r, True
    return max_rounds, False


# ---------------------------------------------------------------- feedback


def apply_experience(agent: HumatAgent, outcome, eta: float = 0.1, walk_max_km: float = math.inf) -> None:
    """Nudge the experiential evaluations of the channel that was used.

    ``outcome`` needs ``channel``, ``success`` and ``locker_distance_km``
    (None unless the parcel went to a locker).  Caches are refreshed but the
    agent does not re-choose here.
    """
    k = agent.index(outcome.channel)
    dist = getattr(outcome, "locker_distance_km", None)
    good = outcome.success and not (dist is not None and dist > walk_max_km)
    idx = [i for i, g in enumerate(agent.groups) if g == "experiential"]
    agent.evaluations[idx, k] = np.clip(agent.evaluations[idx, k] + (eta if good else -eta), -1.0, 1.0)
    agent.refresh()


# ---------------------------------------------------------------- KPIs


@dataclass(frozen=True)
class SubgroupKpi:
    grouping: str
    subgroup: str
    n_agents: int
    shares: dict[str, float]
    mean_satisfaction: dict[str, float]


def choice_shares(
    agents: Sequence[HumatAgent],
    grouping: str = "all",
    category_order: Mapping[str, Sequence[str]] | None = None,
) -> list[SubgroupKpi]:
    """Share choosing each alternative and mean satisfaction, per subgroup of ``grouping``."""
    if not agents:
        return []
    alts = agents[0].alternatives
    if grouping == "all":
        groups = {"all": list(agents)}
    else:
        if any(grouping not in a.traits for a in agents):
            raise UnknownAttribute(grouping)
        groups: dict[str, list[HumatAgent]] = {}
        for a in agents:
            groups.setdefault(a.traits[grouping], []).append(a)
        order = list((category_order or {}).get(grouping, ())) or sorted(groups)
        groups = {c: groups[c] for c in order if c in groups}
    out = []
    for label, members in groups.items():
        n = len(members)
        counts = {alt: 0 for alt in alts}
        for a in members:
            counts[a.choice] += 1
        shares = {alt: counts[alt] / n for alt in alts}
        mean_s = {alt: math.fsum(a.satisfaction[k] for a in members) / n for k, alt in enumerate(alts)}
        out.append(SubgroupKpi(grouping, label, n, shares, mean_s))
    return out
