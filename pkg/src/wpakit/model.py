"""Hierarchical match / round / event / game-state data model.

A match is a sequence of rounds; a round is a time-ordered stream of
footstep, damage and bomb events. Replaying a round's events yields the
sequence of game-state snapshots that every downstream consumer (feature
extraction, win-probability models, player valuation) works from.

All types are plain dataclasses and are treated as immutable after
construction; replaying distinct rounds is safe to run in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import ReplayError

CT = "CT"
T = "T"
SIDES = (CT, T)

WIN_REASONS = ("elimination", "bomb_exploded", "bomb_defused", "time_expired")
BOMB_SITES = ("A", "B")
NO_SITE = "none"

DEFAULT_MAP_POOL = (
    "de_dust2",
    "de_inferno",
    "de_mirage",
    "de_nuke",
    "de_overpass",
    "de_train",
    "de_vertigo",
)


@dataclass(frozen=True)
class GameConstants:
    """Fixed rules of regulation play."""

    start_hp: int = 100
    bomb_timer_seconds: int = 35
    default_tick_rate: int = 128
    rounds_to_win: int = 16
    half_length: int = 15

    def bomb_timer_ticks(self, tick_rate: int) -> int:
        return self.bomb_timer_seconds * tick_rate


CONSTANTS = GameConstants()


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

Position = tuple[float, float, float]


@dataclass(slots=True)
class Footstep:
    tick: int
    player_id: str
    side: str
    position: Position
    area_id: Optional[int] = None

    kind = "footstep"


@dataclass(slots=True)
class Damage:
    tick: int
    attacker_id: str
    attacker_side: str
    victim_id: str
    victim_side: str
    hp_damage: int
    is_kill: bool
    assister_id: Optional[str] = None
    attacker_position: Optional[Position] = None
    victim_position: Optional[Position] = None

    kind = "damage"


@dataclass(slots=True)
class BombPlant:
    tick: int
    player_id: str
    site: str

    kind = "bomb_plant"


@dataclass(slots=True)
class BombDefuse:
    tick: int
    player_id: str

    kind = "bomb_defuse"


GameEvent = Union[Footstep, Damage, BombPlant, BombDefuse]


# ---------------------------------------------------------------------------
# Rounds and matches
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class RoundRecord:
    round_num: int
    start_tick: int
    end_tick: int
    ct_team: str
    t_team: str
    ct_equip_value: float
    t_equip_value: float
    winner_side: str
    win_reason: str
    events: tuple[GameEvent, ...]
    ct_players: tuple[str, ...]
    t_players: tuple[str, ...]

    def winner_team(self) -> str:
        return self.ct_team if self.winner_side == CT else self.t_team


@dataclass(slots=True)
class MatchRecord:
    match_id: str
    map_name: str
    tick_rate: int
    date: str  # ISO-8601 calendar date
    rounds: tuple[RoundRecord, ...]


@dataclass(slots=True)
class GameState:
    """Snapshot of round context at one event tick.

    Bombsite-distance fields are ``None`` when no navigation graph was
    supplied to the replay, and ``math.inf`` when the side has no alive
    player with a known mesh area or the site is unreachable. The feature
    layer maps infinities to a finite sentinel before model input.
    """

    round_num: int
    map_name: str
    ticks_since_start: int
    ct_equip_value: float
    t_equip_value: float
    ct_players_alive: int
    t_players_alive: int
    ct_hp_total: int
    t_hp_total: int
    bomb_planted: bool
    bomb_site: str  # "none" | "A" | "B"
    ct_dist_to_a: Optional[float] = None
    ct_dist_to_b: Optional[float] = None
    t_dist_to_a: Optional[float] = None
    t_dist_to_b: Optional[float] = None
    outcome_label: Optional[int] = None


@dataclass(frozen=True)
class Violation:
    """One broken invariant found by :func:`validate_match`."""

    rule: str
    message: str
    round_num: Optional[int] = None
    tick: Optional[int] = None

    def __str__(self) -> str:
        where = ""
        if self.round_num is not None:
            where += f" round {self.round_num}"
        if self.tick is not None:
            where += f" tick {self.tick}"
        return f"[{self.rule}]{where}: {self.message}"


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------


def replay_round(rnd: RoundRecord, graph=None, *, map_name: str = "",
                 attach_label: bool = True) -> list[GameState]:
    """Replay a round's event stream into its game-state sequence.

    Emits one synthetic state at ``start_tick`` (full HP, 5v5, no bomb)
    followed by one state per event, each reflecting every event up to and
    including it. ``graph`` is an optional :class:`~wpakit.navmesh.NavGraph`;
    without it the four bombsite-distance fields are ``None``.

    Raises :class:`ReplayError` naming the offending tick when the stream
    is inconsistent (HP below zero, events outside the round window,
    duplicate plants, defuse before plant, bad kill flags).
    """
    start_hp = CONSTANTS.start_hp
    label = (1 if rnd.winner_side == CT else 0) if attach_label else None

    hp = {p: start_hp for p in rnd.ct_players}
    hp.update({p: start_hp for p in rnd.t_players})
    side_of = {p: CT for p in rnd.ct_players}
    side_of.update({p: T for p in rnd.t_players})
    areas: dict[str, int] = {}

    ct_alive = len(rnd.ct_players)
    t_alive = len(rnd.t_players)
    ct_hp = start_hp * ct_alive
    t_hp = start_hp * t_alive
    bomb_planted = False
    bomb_site = NO_SITE

    use_mesh = graph is not None
    if use_mesh:
        dist_a = graph.site_distances("A")
        dist_b = graph.site_distances("B")
        mesh = graph.mesh

    def side_dists():
        if not use_mesh:
            return None, None, None, None
        best = [math.inf, math.inf, math.inf, math.inf]  # ct_a, ct_b, t_a, t_b
        for pid, area in areas.items():
            if hp[pid] <= 0:
                continue
            da = dist_a.get(area, math.inf)
            db = dist_b.get(area, math.inf)
            base = 0 if side_of[pid] == CT else 2
            if da < best[base]:
                best[base] = da
            if db < best[base + 1]:
                best[base + 1] = db
        return tuple(best)

    def emit(tick: int) -> GameState:
        ca, cb, ta, tb = side_dists() if use_mesh else (None, None, None, None)
        return GameState(
            round_num=rnd.round_num,
            map_name=map_name,
            ticks_since_start=tick - rnd.start_tick,
            ct_equip_value=rnd.ct_equip_value,
            t_equip_value=rnd.t_equip_value,
            ct_players_alive=ct_alive,
            t_players_alive=t_alive,
            ct_hp_total=ct_hp,
            t_hp_total=t_hp,
            bomb_planted=bomb_planted,
            bomb_site=bomb_site,
            ct_dist_to_a=ca,
            ct_dist_to_b=cb,
            t_dist_to_a=ta,
            t_dist_to_b=tb,
            outcome_label=label,
        )

    def update_area(pid: str, position, explicit=None) -> None:
        if not use_mesh:
            return
        if explicit is not None:
            areas[pid] = explicit
        elif position is not None:
            area = mesh.locate_area(position)
            if area is not None:
                areas[pid] = area

    states = [emit(rnd.start_tick)]
    prev_tick = rnd.start_tick

    for ev in rnd.events:
        tick = ev.tick
        if tick < rnd.start_tick or tick > rnd.end_tick:
            raise ReplayError(tick, "event outside round tick window")
        if tick < prev_tick:
            raise ReplayError(tick, "events not sorted by tick")
        prev_tick = tick

        kind = ev.kind
        if kind == "damage":
            if ev.attacker_side == ev.victim_side:
                raise ReplayError(tick, "team damage is not modeled")
            remaining = hp.get(ev.victim_id)
            if remaining is None:
                raise ReplayError(tick, f"unknown victim {ev.victim_id!r}")
            if ev.hp_damage > remaining:
                raise ReplayError(tick, f"damage {ev.hp_damage} would drop "
                                        f"{ev.victim_id!r} below 0 HP")
            remaining -= ev.hp_damage
            hp[ev.victim_id] = remaining
            if ev.is_kill != (remaining == 0):
                raise ReplayError(tick, "is_kill flag inconsistent with HP arithmetic")
            if ev.victim_side == CT:
                ct_hp -= ev.hp_damage
                if remaining == 0:
                    ct_alive -= 1
            else:
                t_hp -= ev.hp_damage
                if remaining == 0:
                    t_alive -= 1
            update_area(ev.attacker_id, ev.attacker_position)
            update_area(ev.victim_id, ev.victim_position)
        elif kind == "footstep":
            update_area(ev.player_id, ev.position, ev.area_id)
        elif kind == "bomb_plant":
            if bomb_planted:
                raise ReplayError(tick, "second bomb plant in one round")
            if ev.site not in BOMB_SITES:
                raise ReplayError(tick, f"unknown bomb site {ev.site!r}")
            bomb_planted = True
            bomb_site = ev.site
        elif kind == "bomb_defuse":
            if not bomb_planted:
                raise ReplayError(tick, "bomb defuse without a prior plant")
            # The round ends at the defuse; the terminal state keeps the
            # planted flags so the feature tuple stays well defined.
        else:  # pragma: no cover - unreachable with typed events
            raise ReplayError(tick, f"unknown event kind {kind!r}")

        states.append(emit(tick))

    return states


def replay_match(match: MatchRecord, graph=None) -> list[list[GameState]]:
    """Replay every round of a match. Returns one state list per round."""
    return [replay_round(rnd, graph, map_name=match.map_name) for rnd in match.rounds]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_match(match: MatchRecord, map_pool=DEFAULT_MAP_POOL) -> list[Violation]:
    """Check every data-model invariant; violations are data, not exceptions.

    Partial matches are accepted: rounds must be a valid prefix of a match
    (consecutive numbering, no play after a team clinches 16 wins), but a
    fixture does not have to run to completion.
    """
    out: list[Violation] = []
    add = out.append

    if match.tick_rate <= 0:
        add(Violation("tick-rate", f"tick_rate must be positive, got {match.tick_rate}"))
    if map_pool is not None and match.map_name not in map_pool:
        add(Violation("unknown-map", f"map {match.map_name!r} not in configured pool"))

    wins: dict[str, int] = {}
    first = match.rounds[0] if match.rounds else None

    for idx, rnd in enumerate(match.rounds):
        rn = rnd.round_num
        if rn != idx + 1:
            add(Violation("round-numbering",
                          f"expected round {idx + 1}, got {rn}", round_num=rn))
        if rn > 2 * CONSTANTS.half_length:
            add(Violation("overtime",
                          "rounds beyond regulation are rejected", round_num=rn))

        # Sides flip exactly once, after the first half.
        if first is not None:
            if rn <= CONSTANTS.half_length:
                expected_ct, expected_t = first.ct_team, first.t_team
            else:
                expected_ct, expected_t = first.t_team, first.ct_team
            if (rnd.ct_team, rnd.t_team) != (expected_ct, expected_t):
                add(Violation("side-swap",
                              f"round {rn} sides ({rnd.ct_team} CT / {rnd.t_team} T) "
                              "inconsistent with the half-time swap", round_num=rn))

        if max(wins.values(), default=0) >= CONSTANTS.rounds_to_win:
            add(Violation("match-end",
                          "round played after a team already reached "
                          f"{CONSTANTS.rounds_to_win} wins", round_num=rn))

        out.extend(_validate_round(rnd))

        winner = rnd.winner_team()
        wins[winner] = wins.get(winner, 0) + 1

    return out


def _validate_round(rnd: RoundRecord) -> list[Violation]:
    out: list[Violation] = []
    rn = rnd.round_num
    add = out.append

    if len(rnd.ct_players) != 5 or len(set(rnd.ct_players)) != 5:
        add(Violation("player-count", "CT side must list 5 distinct players", round_num=rn))
    if len(rnd.t_players) != 5 or len(set(rnd.t_players)) != 5:
        add(Violation("player-count", "T side must list 5 distinct players", round_num=rn))
    if set(rnd.ct_players) & set(rnd.t_players):
        add(Violation("player-count", "a player appears on both sides", round_num=rn))

    if rnd.start_tick >= rnd.end_tick:
        add(Violation("tick-range",
                      f"start_tick {rnd.start_tick} must precede end_tick {rnd.end_tick}",
                      round_num=rn))
    if rnd.ct_equip_value < 0 or rnd.t_equip_value < 0:
        add(Violation("equip-negative", "equipment values must be non-negative", round_num=rn))
    if rnd.winner_side not in SIDES:
        add(Violation("winner-side", f"unknown winner side {rnd.winner_side!r}", round_num=rn))
    if rnd.win_reason not in WIN_REASONS:
        add(Violation("win-reason", f"unknown win reason {rnd.win_reason!r}", round_num=rn))
    if rnd.win_reason == "bomb_defused" and rnd.winner_side != CT:
        add(Violation("winner-consistency", "a defused bomb is a CT win", round_num=rn))
    if rnd.win_reason == "bomb_exploded" and rnd.winner_side != T:
        add(Violation("winner-consistency", "an exploded bomb is a T win", round_num=rn))

    hp: dict[str, int] = {}
    plants = 0
    prev_tick = rnd.start_tick
    for ev in rnd.events:
        if ev.tick < rnd.start_tick or ev.tick > rnd.end_tick:
            add(Violation("event-out-of-bounds",
                          "event tick outside [start_tick, end_tick]",
                          round_num=rn, tick=ev.tick))
        if ev.tick < prev_tick:
            add(Violation("event-order", "events not sorted by tick",
                          round_num=rn, tick=ev.tick))
        prev_tick = max(prev_tick, ev.tick)

        kind = ev.kind
        if kind == "damage":
            if ev.attacker_side == ev.victim_side:
                add(Violation("team-damage", "attacker and victim share a side",
                              round_num=rn, tick=ev.tick))
            if not 1 <= ev.hp_damage <= CONSTANTS.start_hp:
                add(Violation("damage-range",
                              f"hp_damage {ev.hp_damage} outside 1..{CONSTANTS.start_hp}",
                              round_num=rn, tick=ev.tick))
            dealt = hp.get(ev.victim_id, 0) + ev.hp_damage
            hp[ev.victim_id] = dealt
            if dealt > CONSTANTS.start_hp:
                add(Violation("hp-overflow",
                              f"{dealt} cumulative HP damage against {ev.victim_id!r}",
                              round_num=rn, tick=ev.tick))
            elif ev.is_kill != (dealt == CONSTANTS.start_hp):
                add(Violation("kill-flag",
                              "is_kill must be set exactly when HP reaches 0",
                              round_num=rn, tick=ev.tick))
        elif kind == "bomb_plant":
            plants += 1
            if plants > 1:
                add(Violation("bomb-plant-unique", "more than one bomb plant",
                              round_num=rn, tick=ev.tick))
            if ev.site not in BOMB_SITES:
                add(Violation("bomb-site", f"unknown site {ev.site!r}",
                              round_num=rn, tick=ev.tick))
        elif kind == "bomb_defuse":
            if plants == 0:
                add(Violation("defuse-without-plant",
                              "bomb defuse without a prior plant",
                              round_num=rn, tick=ev.tick))

    return out


def kills_against(rnd: RoundRecord, side: str) -> int:
    """Number of kill events against the given side in a round."""
    return sum(1 for ev in rnd.events
               if ev.kind == "damage" and ev.is_kill and ev.victim_side == side)
