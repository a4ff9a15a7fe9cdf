"""Synthetic match generator with an exactly calibrated outcome model.

Every generated round carries a hidden score z(state), a linear function
of the game-state features (plus an optional bomb-by-man-count
interaction term). Rounds evolve as a branching process: each action
step draws one CT-favorable and one T-favorable candidate event and picks
between them with the unique probability that keeps sigmoid(z) a
martingale. The round winner is sampled at the end from the final
sigmoid(z). By optional stopping, P(CT wins | any emitted state) equals
sigmoid(z(state)) exactly, which makes the returned ground-truth model a
true calibration oracle and makes logistic-regression coefficient
recovery well posed.

Sides are never fully eliminated (a kill needs two alive players on the
victim's side), so no state forces the outcome and the martingale stays
exact. Rounds end by bomb explosion, defuse, or time expiry. The closing
event (a defuse when the CT side wins a planted round, otherwise a
footstep) changes no modeled feature, keeping the terminal state
unbiased.
"""

from __future__ import annotations

import datetime
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import (
    CONSTANTS,
    DEFAULT_MAP_POOL,
    BombDefuse,
    BombPlant,
    Damage,
    Footstep,
    GameState,
    MatchRecord,
    RoundRecord,
)

DEFAULT_MAP_OFFSETS = {
    "de_dust2": 0.12,
    "de_inferno": -0.12,
    "de_mirage": 0.08,
    "de_nuke": -0.08,
    "de_overpass": 0.04,
    "de_train": -0.04,
    "de_vertigo": 0.0,
}

DEFAULT_COEFFICIENTS = {
    "ticks_since_start": 0.0,
    "ct_equip_value": 3.0e-4,
    "t_equip_value": -3.0e-4,
    "ct_players_alive": 0.5,
    "t_players_alive": -0.5,
    "ct_hp_total": 3.5e-3,
    "t_hp_total": -3.5e-3,
    "bomb_planted": -0.45,
    "bomb_site_a": -0.05,
    "bomb_site_b": 0.05,
}

_RIFLE_MEAN = 11000.0
_RIFLE_SD = 2000.0
_RIFLE_GAP = 6000.0
_PISTOL_MEAN = 2200.0
_PISTOL_SD = 250.0
_PISTOL_GAP = 1200.0
_EQUIP_FLOOR = 300.0


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclass(frozen=True)
class GroundTruth:
    """The generator's outcome model: a logistic score over state features.

    ``interaction_strength`` multiplies bomb_planted * (t_alive - ct_alive),
    a term outside the linear feature basis; a plain logistic model on the
    base features is misspecified exactly when it is nonzero.
    """

    map_offsets: dict[str, float]
    coefficients: dict[str, float]
    interaction_strength: float = 0.0

    def score_parts(self, map_name: str, ct_equip: float, t_equip: float,
                    ct_alive: int, t_alive: int, ct_hp: float, t_hp: float,
                    planted: bool, site: str, ticks: float = 0.0) -> float:
        c = self.coefficients
        z = self.map_offsets.get(map_name, 0.0)
        z += c["ct_equip_value"] * ct_equip + c["t_equip_value"] * t_equip
        z += c["ct_players_alive"] * ct_alive + c["t_players_alive"] * t_alive
        z += c["ct_hp_total"] * ct_hp + c["t_hp_total"] * t_hp
        z += c["ticks_since_start"] * ticks
        if planted:
            z += c["bomb_planted"]
            z += c["bomb_site_a"] if site == "A" else c["bomb_site_b"]
            z += self.interaction_strength * (t_alive - ct_alive)
        return z

    def score_state(self, state: GameState) -> float:
        return self.score_parts(
            state.map_name, state.ct_equip_value, state.t_equip_value,
            state.ct_players_alive, state.t_players_alive,
            state.ct_hp_total, state.t_hp_total,
            state.bomb_planted, state.bomb_site, state.ticks_since_start)

    def predict_states(self, states: Sequence[GameState]) -> np.ndarray:
        z = np.array([self.score_state(s) for s in states], dtype=np.float64)
        return 1.0 / (1.0 + np.exp(-z))

    def raw_coefficients(self) -> dict[str, float]:
        """Coefficients keyed like WinProbModel.raw_coefficients()."""
        out = {f"map={m}": v for m, v in self.map_offsets.items()}
        out.update(self.coefficients)
        return out

    def as_dict(self) -> dict:
        return {
            "map_offsets": dict(self.map_offsets),
            "coefficients": dict(self.coefficients),
            "interaction_strength": self.interaction_strength,
        }


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 0
    n_matches: int = 10
    map_weights: Optional[dict[str, float]] = None  # default: uniform pool
    skill_gap: float = 0.0          # 0 = even teams, 1 = one side dominant
    favored_side: Optional[str] = None  # "CT" | "T" | None
    mean_actions: float = 18.0
    mean_footsteps: float = 22.0
    plant_prob: float = 0.35
    interaction_strength: float = 0.0
    n_teams: int = 8
    start_date: str = "2019-01-01"

    def __post_init__(self):
        if not 0.0 <= self.skill_gap <= 1.0:
            raise ValueError("skill_gap must lie in [0, 1]")
        if self.favored_side not in (None, "CT", "T"):
            raise ValueError("favored_side must be CT, T, or None")
        if self.n_matches < 1:
            raise ValueError("n_matches must be positive")
        if self.n_teams < 2:
            raise ValueError("need at least two teams")
        if self.map_weights is not None:
            unknown = set(self.map_weights) - set(DEFAULT_MAP_POOL)
            if unknown:
                raise ValueError(f"maps outside the pool: {sorted(unknown)}")
            if not self.map_weights or min(self.map_weights.values()) < 0:
                raise ValueError("map weights must be non-negative and non-empty")


@dataclass
class SyntheticData:
    matches: list[MatchRecord]
    truth: GroundTruth

    @property
    def n_rounds(self) -> int:
        return sum(len(m.rounds) for m in self.matches)


# ---------------------------------------------------------------------------
# Round simulation
# ---------------------------------------------------------------------------


@dataclass
class _SimRound:
    """Mutable round state during generation; mirrors replay arithmetic."""

    truth: GroundTruth
    map_name: str
    ct_equip: float
    t_equip: float
    ct_players: tuple[str, ...]
    t_players: tuple[str, ...]
    hp: dict[str, int] = field(init=False)
    planted: bool = False
    site: str = "none"

    def __post_init__(self):
        self.hp = {p: CONSTANTS.start_hp for p in self.ct_players + self.t_players}

    def alive(self, side: str) -> list[str]:
        players = self.ct_players if side == "CT" else self.t_players
        return [p for p in players if self.hp[p] > 0]

    def side_hp(self, side: str) -> int:
        players = self.ct_players if side == "CT" else self.t_players
        return sum(self.hp[p] for p in players if self.hp[p] > 0)

    def score(self) -> float:
        return self.truth.score_parts(
            self.map_name, self.ct_equip, self.t_equip,
            len(self.alive("CT")), len(self.alive("T")),
            self.side_hp("CT"), self.side_hp("T"),
            self.planted, self.site)


def _damage_candidate(rng, sim: _SimRound, victim_side: str):
    """Propose a damage event against the given side; never eliminates it."""
    victims = sim.alive(victim_side)
    keep_alive = len(victims) == 1
    eligible = [v for v in victims if sim.hp[v] >= 2] if keep_alive else victims
    if not eligible:
        return None
    victim = eligible[int(rng.integers(len(eligible)))]
    dmg = int(rng.integers(12, 46))
    cap = sim.hp[victim] - 1 if keep_alive else sim.hp[victim]
    dmg = min(dmg, cap)
    is_kill = dmg == sim.hp[victim]

    attacker_side = "T" if victim_side == "CT" else "CT"
    attackers = sim.alive(attacker_side)
    attacker = attackers[int(rng.integers(len(attackers)))]

    c = sim.truth.coefficients
    hp_key = "ct_hp_total" if victim_side == "CT" else "t_hp_total"
    alive_key = "ct_players_alive" if victim_side == "CT" else "t_players_alive"
    delta = -dmg * c[hp_key]
    if is_kill:
        delta -= c[alive_key]
        if sim.planted:
            sign = -1.0 if victim_side == "T" else 1.0
            delta += sign * sim.truth.interaction_strength
    return ("damage", attacker, attacker_side, victim, victim_side,
            dmg, is_kill), delta


def _plant_candidate(rng, sim: _SimRound):
    if sim.planted:
        return None
    planters = sim.alive("T")
    planter = planters[int(rng.integers(len(planters)))]
    site = "A" if rng.random() < 0.5 else "B"
    c = sim.truth.coefficients
    delta = c["bomb_planted"]
    delta += c["bomb_site_a"] if site == "A" else c["bomb_site_b"]
    delta += sim.truth.interaction_strength * (
        len(sim.alive("T")) - len(sim.alive("CT")))
    return ("plant", planter, site), delta


def _apply(sim: _SimRound, proto) -> None:
    kind = proto[0]
    if kind == "damage":
        _, _, _, victim, _, dmg, _ = proto
        sim.hp[victim] -= dmg
    elif kind == "plant":
        sim.planted = True
        sim.site = proto[2]


def _simulate_round(rng, sim: _SimRound, n_actions: int, plant_prob: float
                    ) -> tuple[list, Optional[int], bool]:
    """Run the balanced branching process.

    Returns (action protos, index of the plant proto or None, ct_won).
    """
    protos = []
    plant_index = None
    for _ in range(n_actions):
        z = sim.score()
        p = _sigmoid(z)

        cand_ct = _damage_candidate(rng, sim, "T")
        if not sim.planted and rng.random() < plant_prob:
            cand_t = _plant_candidate(rng, sim)
        else:
            cand_t = _damage_candidate(rng, sim, "CT")

        if cand_ct is None or cand_t is None:
            continue
        (proto_hi, d_hi), (proto_lo, d_lo) = cand_ct, cand_t
        if d_lo > d_hi:
            proto_hi, d_hi, proto_lo, d_lo = proto_lo, d_lo, proto_hi, d_hi
        if not (d_lo <= 0.0 <= d_hi):
            # An interaction-flipped plant: rebalance against pure damage,
            # whose delta always has the right sign.
            side = "T" if d_lo > 0 else "CT"
            repl = _damage_candidate(rng, sim, side)
            if repl is None:
                continue
            if d_lo > 0:
                proto_lo, d_lo = repl
            else:
                proto_hi, d_hi = repl
            if d_lo > d_hi:
                proto_hi, d_hi, proto_lo, d_lo = proto_lo, d_lo, proto_hi, d_hi
            if not (d_lo <= 0.0 <= d_hi):
                continue

        p_hi = _sigmoid(z + d_hi)
        p_lo = _sigmoid(z + d_lo)
        if p_hi <= p_lo:
            continue
        q = (p - p_lo) / (p_hi - p_lo)
        chosen = proto_hi if rng.random() < q else proto_lo
        if chosen[0] == "plant":
            plant_index = len(protos)
        _apply(sim, chosen)
        protos.append(chosen)

    ct_won = rng.random() < _sigmoid(sim.score())
    return protos, plant_index, ct_won


# ---------------------------------------------------------------------------
# Event assembly
# ---------------------------------------------------------------------------


class _Walker:
    """Random-walk positions for cosmetic event coordinates."""

    def __init__(self, rng, players):
        self.rng = rng
        self.pos = {p: rng.uniform(-2000.0, 2000.0, size=3) for p in players}
        for p in players:
            self.pos[p][2] = rng.uniform(0.0, 160.0)

    def step(self, player: str) -> tuple[float, float, float]:
        self.pos[player] += self.rng.normal(0.0, 60.0, size=3)
        x, y, z = self.pos[player]
        return (float(x), float(y), float(z))


def _assemble_round(rng, sim_replay: _SimRound, protos, plant_index,
                    ct_won: bool, start_tick: int, tick_rate: int,
                    n_footsteps: int, assist_prob: float = 0.3):
    """Interleave footsteps, assign ticks, and build real event objects.

    ``sim_replay`` must be a fresh round state; it is re-advanced here so
    aliveness is tracked correctly while choosing footstep actors.
    """
    n_actions = len(protos)
    total = n_actions + n_footsteps
    action_slots = set(rng.choice(total, size=n_actions, replace=False).tolist()) \
        if n_actions else set()

    plant_slot = None
    if plant_index is not None:
        ordered = sorted(action_slots)
        plant_slot = ordered[plant_index]

    duration = float(rng.uniform(45.0, 90.0))
    if plant_slot is not None:
        plant_time = float(rng.uniform(0.4, 0.7)) * duration
        before = plant_slot
        after = total - plant_slot - 1
        times = np.concatenate([
            np.sort(rng.uniform(1.0, max(plant_time - 0.5, 1.5), size=before)),
            [plant_time],
            np.sort(rng.uniform(plant_time + 0.5, plant_time + 28.0, size=after)),
        ])
    else:
        times = np.sort(rng.uniform(1.0, duration, size=total))

    walker = _Walker(rng, sim_replay.ct_players + sim_replay.t_players)
    events = []
    proto_iter = iter(protos)
    plant_tick = None

    for slot in range(total):
        tick = start_tick + int(round(times[slot] * tick_rate))
        if slot in action_slots:
            proto = next(proto_iter)
            if proto[0] == "plant":
                plant_tick = tick
                events.append(BombPlant(tick=tick, player_id=proto[1], site=proto[2]))
            else:
                _, attacker, a_side, victim, v_side, dmg, is_kill = proto
                assister = None
                if is_kill and rng.random() < assist_prob:
                    mates = [p for p in sim_replay.alive(a_side) if p != attacker]
                    if mates:
                        assister = mates[int(rng.integers(len(mates)))]
                events.append(Damage(
                    tick=tick,
                    attacker_id=attacker, attacker_side=a_side,
                    victim_id=victim, victim_side=v_side,
                    hp_damage=dmg, is_kill=is_kill, assister_id=assister,
                    attacker_position=walker.step(attacker),
                    victim_position=walker.step(victim),
                ))
            _apply(sim_replay, proto)
        else:
            movers = sim_replay.alive("CT") + sim_replay.alive("T")
            mover = movers[int(rng.integers(len(movers)))]
            side = "CT" if mover in sim_replay.ct_players else "T"
            events.append(Footstep(tick=tick, player_id=mover, side=side,
                                   position=walker.step(mover)))

    last_tick = events[-1].tick if events else start_tick
    closure_tick = last_tick + int(round(float(rng.uniform(1.0, 3.0)) * tick_rate))

    if sim_replay.planted and ct_won:
        defusers = sim_replay.alive("CT")
        defuser = defusers[int(rng.integers(len(defusers)))]
        events.append(BombDefuse(tick=closure_tick, player_id=defuser))
        win_reason = "bomb_defused"
        end_tick = closure_tick + tick_rate
    else:
        movers = sim_replay.alive("CT") + sim_replay.alive("T")
        mover = movers[int(rng.integers(len(movers)))]
        side = "CT" if mover in sim_replay.ct_players else "T"
        events.append(Footstep(tick=closure_tick, player_id=mover, side=side,
                               position=walker.step(mover)))
        if sim_replay.planted:
            win_reason = "bomb_exploded"
            end_tick = plant_tick + CONSTANTS.bomb_timer_ticks(tick_rate)
        else:
            win_reason = "time_expired"
            end_tick = closure_tick + 2 * tick_rate

    if end_tick <= closure_tick:
        end_tick = closure_tick + 1
    return tuple(events), win_reason, end_tick


# ---------------------------------------------------------------------------
# Match generation
# ---------------------------------------------------------------------------


def _draw_equips(rng, round_num: int, skill_gap: float, favored: Optional[str]
                 ) -> tuple[float, float]:
    pistol = round_num in (1, CONSTANTS.half_length + 1)
    mean = _PISTOL_MEAN if pistol else _RIFLE_MEAN
    sd = _PISTOL_SD if pistol else _RIFLE_SD
    gap = (_PISTOL_GAP if pistol else _RIFLE_GAP) * skill_gap
    ct_shift = gap if favored == "CT" else (-gap if favored == "T" else 0.0)
    ct = max(_EQUIP_FLOOR, float(rng.normal(mean + ct_shift, sd)))
    t = max(_EQUIP_FLOOR, float(rng.normal(mean - ct_shift, sd)))
    return ct, t


def generate_synthetic(config: SyntheticConfig) -> SyntheticData:
    """Generate matches plus the ground-truth outcome model.

    Deterministic for a fixed config. Every generated match passes
    validate_match; the expected CT round-win rate equals the mean initial
    sigmoid(z), so balanced configs hit 0.5 exactly in expectation.
    """
    rng = np.random.default_rng(config.seed)
    truth = GroundTruth(
        map_offsets=dict(DEFAULT_MAP_OFFSETS),
        coefficients=dict(DEFAULT_COEFFICIENTS),
        interaction_strength=config.interaction_strength,
    )

    if config.map_weights is None:
        maps = list(DEFAULT_MAP_POOL)
        weights = np.full(len(maps), 1.0 / len(maps))
    else:
        maps = sorted(config.map_weights)
        weights = np.array([config.map_weights[m] for m in maps], dtype=np.float64)
        weights = weights / weights.sum()

    teams = [f"team{i + 1:02d}" for i in range(config.n_teams)]
    rosters = {t: tuple(f"{t}_p{j + 1}" for j in range(5)) for t in teams}
    date0 = datetime.date.fromisoformat(config.start_date)

    matches = []
    for m_idx in range(config.n_matches):
        map_name = maps[int(rng.choice(len(maps), p=weights))]
        a_idx, b_idx = rng.choice(config.n_teams, size=2, replace=False)
        team_a, team_b = teams[int(a_idx)], teams[int(b_idx)]
        a_starts_ct = bool(rng.random() < 0.5)

        rounds = []
        wins = {team_a: 0, team_b: 0}
        start_tick = 5000
        for round_num in range(1, 2 * CONSTANTS.half_length + 1):
            first_half = round_num <= CONSTANTS.half_length
            ct_team = team_a if (a_starts_ct == first_half) else team_b
            t_team = team_b if ct_team == team_a else team_a

            ct_equip, t_equip = _draw_equips(
                rng, round_num, config.skill_gap, config.favored_side)
            sim = _SimRound(truth=truth, map_name=map_name,
                            ct_equip=ct_equip, t_equip=t_equip,
                            ct_players=rosters[ct_team],
                            t_players=rosters[t_team])
            n_actions = int(np.clip(rng.poisson(config.mean_actions), 3, 50))
            n_foot = int(np.clip(rng.poisson(config.mean_footsteps), 2, 80))
            protos, plant_index, ct_won = _simulate_round(
                rng, sim, n_actions, config.plant_prob)

            replay_sim = _SimRound(truth=truth, map_name=map_name,
                                   ct_equip=ct_equip, t_equip=t_equip,
                                   ct_players=rosters[ct_team],
                                   t_players=rosters[t_team])
            events, win_reason, end_tick = _assemble_round(
                rng, replay_sim, protos, plant_index, ct_won,
                start_tick, CONSTANTS.default_tick_rate, n_foot)

            winner_side = "CT" if ct_won else "T"
            rounds.append(RoundRecord(
                round_num=round_num,
                start_tick=start_tick,
                end_tick=end_tick,
                ct_team=ct_team,
                t_team=t_team,
                ct_equip_value=ct_equip,
                t_equip_value=t_equip,
                winner_side=winner_side,
                win_reason=win_reason,
                events=events,
                ct_players=rosters[ct_team],
                t_players=rosters[t_team],
            ))
            wins[ct_team if ct_won else t_team] += 1
            if max(wins.values()) >= CONSTANTS.rounds_to_win:
                break
            start_tick = end_tick + 15 * CONSTANTS.default_tick_rate

        matches.append(MatchRecord(
            match_id=f"synth-{config.seed}-{m_idx:04d}",
            map_name=map_name,
            tick_rate=CONSTANTS.default_tick_rate,
            date=(date0 + datetime.timedelta(days=m_idx)).isoformat(),
            rounds=tuple(rounds),
        ))

    return SyntheticData(matches=matches, truth=truth)
