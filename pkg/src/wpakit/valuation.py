"""Context-aware player valuation and the classic counting metrics.

Each damage event is valued as the change in estimated CT win probability
between the states just before and just after it, normalized to the
acting player's side so beneficial actions score positive on both sides;
the player on the receiving end is credited the negative. Summing a
player's credits and dividing by rounds played gives win probability
added per round.

Classic metrics (kill-death ratio, average damage per round, KAST%,
Rating 1.0) are computed from the same event streams for side-by-side
comparison. Their community-ambiguous knobs (trade window, assist
threshold, rating normalization constants) live in configuration, not
code.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .features import vectorize
from .model import CT, GameState, MatchRecord, RoundRecord, replay_round
from .winprob import WinProbModel, predict, predict_states


@dataclass(frozen=True)
class ActionValue:
    """One valued damage event (Eq. context: the actor/receiver credit pair)."""

    match_id: str
    round_num: int
    tick: int
    actor_id: str
    actor_side: str
    victim_id: str
    pre_state: GameState
    post_state: GameState
    pre_prob: float
    post_prob: float
    v_ct: float           # post - pre, in the CT frame
    actor_credit: float   # v_ct for CT actors, -v_ct for T actors
    receiver_credit: float

    @property
    def is_kill(self) -> bool:
        return self.post_state.ct_players_alive < self.pre_state.ct_players_alive \
            or self.post_state.t_players_alive < self.pre_state.t_players_alive


def value_actions(match: MatchRecord, model: WinProbModel, graph=None
                  ) -> list[ActionValue]:
    """Value every damage event of a match.

    The pre state is the replayed state immediately before the event
    (which may follow a footstep or bomb event); the post state includes
    the event. Non-damage events advance the state but produce no value.
    """
    per_round_states = [replay_round(r, graph, map_name=match.map_name)
                        for r in match.rounds]
    flat: list[GameState] = [s for states in per_round_states for s in states]
    if not flat:
        return []
    probs = predict_states(model, flat)

    out: list[ActionValue] = []
    offset = 0
    for rnd, states in zip(match.rounds, per_round_states):
        for i, ev in enumerate(rnd.events):
            if ev.kind != "damage":
                continue
            pre_p = float(probs[offset + i])
            post_p = float(probs[offset + i + 1])
            v_ct = post_p - pre_p
            actor_credit = v_ct if ev.attacker_side == CT else -v_ct
            out.append(ActionValue(
                match_id=match.match_id,
                round_num=rnd.round_num,
                tick=ev.tick,
                actor_id=ev.attacker_id,
                actor_side=ev.attacker_side,
                victim_id=ev.victim_id,
                pre_state=states[i],
                post_state=states[i + 1],
                pre_prob=pre_p,
                post_prob=post_p,
                v_ct=v_ct,
                actor_credit=actor_credit,
                receiver_credit=-actor_credit,
            ))
        offset += len(states)
    return out


def value_between(model: WinProbModel, state_a: GameState, state_b: GameState
                  ) -> float:
    """CT-frame win-probability change between two arbitrary states."""
    p = predict_states(model, [state_a, state_b])
    return float(p[1] - p[0])


def wpa(actions: Iterable[ActionValue], rounds_played: Mapping[str, int],
        include_received: bool = True) -> dict[str, float]:
    """Win probability added per round for every player in rounds_played.

    Received (negative) credits are included by default; pass
    ``include_received=False`` to count only a player's own actions.
    """
    for player, n in rounds_played.items():
        if n <= 0:
            raise ValueError(f"rounds_played must be positive, got {n} for {player!r}")
    totals = {player: 0.0 for player in rounds_played}
    for a in actions:
        if a.actor_id in totals:
            totals[a.actor_id] += a.actor_credit
        if include_received and a.victim_id in totals:
            totals[a.victim_id] += a.receiver_credit
    return {p: totals[p] / rounds_played[p] for p in totals}


# ---------------------------------------------------------------------------
# Classic metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RatingConstants:
    """Normalization constants for the composite 1.0 rating; configurable,
    defaults follow the published methodology."""

    kill_norm: float = 0.679
    survival_norm: float = 0.317
    multikill_norm: float = 1.277


def rating_from_components(kill_rating: float, survival_rating: float,
                           multikill_rating: float) -> float:
    """Composite rating: unit components return exactly 1.0."""
    return (kill_rating + 0.7 * survival_rating + multikill_rating) / 2.7


@dataclass
class ClassicMetrics:
    player_id: str
    rounds_played: int
    kills: int
    deaths: int
    assists: int
    total_damage: int
    kdr: float
    kdr_deaths_zero: bool  # deaths == 0, ratio reported over denominator 1
    adr: float
    kast_pct: float
    kill_rating: float
    survival_rating: float
    multikill_rating: float
    rating_1_0: float


@dataclass
class _PlayerTally:
    rounds: int = 0
    kills: int = 0
    deaths: int = 0
    assists: int = 0
    damage: int = 0
    survived: int = 0
    kast_rounds: int = 0
    multikill_sq: int = 0


def classic_metrics(matches: Sequence[MatchRecord], *,
                    trade_window_seconds: float = 5.0,
                    assist_damage_threshold: int = 40,
                    rating: RatingConstants = RatingConstants(),
                    rounds: Optional[Iterable[tuple[MatchRecord, RoundRecord]]] = None,
                    ) -> dict[str, ClassicMetrics]:
    """Per-player KDR, ADR, KAST% and Rating 1.0 over a match set.

    ``rounds`` restricts the computation to an explicit (match, round)
    view, e.g. pistol rounds only; denominators then come from the view.
    """
    tallies: dict[str, _PlayerTally] = {}

    def tally(player: str) -> _PlayerTally:
        t = tallies.get(player)
        if t is None:
            t = tallies[player] = _PlayerTally()
        return t

    if rounds is None:
        rounds = [(m, r) for m in matches for r in m.rounds]

    for match, rnd in rounds:
        window = int(round(trade_window_seconds * match.tick_rate))
        participants = rnd.ct_players + rnd.t_players
        for p in participants:
            tally(p).rounds += 1

        kills_of: dict[str, int] = {}
        death_tick: dict[str, int] = {}
        killer_of: dict[str, str] = {}
        assisted: set[str] = set()
        damage_to_victim: dict[str, dict[str, int]] = {}
        unassisted_kills: list[tuple[str, str, str]] = []  # victim, killer, side

        for ev in rnd.events:
            if ev.kind != "damage":
                continue
            tally(ev.attacker_id).damage += ev.hp_damage
            damage_to_victim.setdefault(ev.victim_id, {})
            damage_to_victim[ev.victim_id][ev.attacker_id] = \
                damage_to_victim[ev.victim_id].get(ev.attacker_id, 0) + ev.hp_damage
            if ev.is_kill:
                kills_of[ev.attacker_id] = kills_of.get(ev.attacker_id, 0) + 1
                death_tick[ev.victim_id] = ev.tick
                killer_of[ev.victim_id] = ev.attacker_id
                if ev.assister_id is not None:
                    assisted.add(ev.assister_id)
                else:
                    unassisted_kills.append(
                        (ev.victim_id, ev.attacker_id, ev.attacker_side))

        # Derived assists: most damage dealt to the victim by a teammate of
        # the killer (threshold applies), when no assister was recorded.
        side_of = {p: "CT" for p in rnd.ct_players}
        side_of.update({p: "T" for p in rnd.t_players})
        for victim, killer, killer_side in unassisted_kills:
            best = None
            for helper, dmg in sorted(damage_to_victim.get(victim, {}).items()):
                if helper == killer or side_of.get(helper) != killer_side:
                    continue
                if dmg < assist_damage_threshold:
                    continue
                if best is None or dmg > best[1]:
                    best = (helper, dmg)
            if best is not None:
                assisted.add(best[0])

        for p in participants:
            t = tally(p)
            k = kills_of.get(p, 0)
            t.kills += k
            t.multikill_sq += k * k
            died = p in death_tick
            if died:
                t.deaths += 1
            else:
                t.survived += 1
            if p in assisted:
                t.assists += 1
            traded = False
            if died:
                killer = killer_of[p]
                kd = death_tick.get(killer)
                traded = kd is not None and 0 < kd - death_tick[p] <= window
            if k > 0 or p in assisted or not died or traded:
                t.kast_rounds += 1

    out = {}
    for player, t in sorted(tallies.items()):
        if t.rounds == 0:
            continue
        deaths_zero = t.deaths == 0
        kdr = t.kills / (t.deaths if t.deaths else 1)
        rk = (t.kills / t.rounds) / rating.kill_norm
        rs = (t.survived / t.rounds) / rating.survival_norm
        rmk = (t.multikill_sq / t.rounds) / rating.multikill_norm
        out[player] = ClassicMetrics(
            player_id=player,
            rounds_played=t.rounds,
            kills=t.kills,
            deaths=t.deaths,
            assists=t.assists,
            total_damage=t.damage,
            kdr=kdr,
            kdr_deaths_zero=deaths_zero,
            adr=t.damage / t.rounds,
            kast_pct=t.kast_rounds / t.rounds,
            kill_rating=rk,
            survival_rating=rs,
            multikill_rating=rmk,
            rating_1_0=rating_from_components(rk, rs, rmk),
        )
    return out


# ---------------------------------------------------------------------------
# Scenario filters
# ---------------------------------------------------------------------------

PISTOL_ROUNDS = (1, 16)


@dataclass(frozen=True)
class ScenarioFilter:
    """Conjunction of round- and state-level predicates.

    ``alive_pattern`` is (t_alive, ct_alive) matched against an action's
    pre state; set ``pattern_both_directions`` to accept the mirrored
    pattern too. ``winprob_range`` bounds the pre-state CT win
    probability.
    """

    pistol_only: bool = False
    maps: Optional[frozenset[str]] = None
    alive_pattern: Optional[tuple[int, int]] = None
    pattern_both_directions: bool = False
    winprob_range: Optional[tuple[float, float]] = None

    def round_matches(self, match: MatchRecord, rnd: RoundRecord) -> bool:
        if self.pistol_only and rnd.round_num not in PISTOL_ROUNDS:
            return False
        if self.maps is not None and match.map_name not in self.maps:
            return False
        return True

    def action_matches(self, action: ActionValue) -> bool:
        if self.alive_pattern is not None:
            pre = action.pre_state
            got = (pre.t_players_alive, pre.ct_players_alive)
            ok = got == self.alive_pattern
            if not ok and self.pattern_both_directions:
                ok = got == self.alive_pattern[::-1]
            if not ok:
                return False
        if self.winprob_range is not None:
            lo, hi = self.winprob_range
            if not lo <= action.pre_prob <= hi:
                return False
        return True


@dataclass
class FilteredView:
    rounds: list[tuple[MatchRecord, RoundRecord]]
    actions: list[ActionValue]
    rounds_played: dict[str, int]

    @property
    def empty(self) -> bool:
        return not self.rounds


def apply_filter(flt: ScenarioFilter, matches: Sequence[MatchRecord],
                 actions: Optional[Iterable[ActionValue]] = None) -> FilteredView:
    """Restrict rounds and valued actions to the scenario.

    WPA and classic metrics recomputed on the view use the view's own
    denominators (rounds each player played within the view).
    """
    rounds = [(m, r) for m in matches for r in m.rounds if flt.round_matches(m, r)]
    keys = {(m.match_id, r.round_num) for m, r in rounds}
    rounds_played: dict[str, int] = {}
    for _, r in rounds:
        for p in r.ct_players + r.t_players:
            rounds_played[p] = rounds_played.get(p, 0) + 1
    kept = []
    if actions is not None:
        for a in actions:
            if (a.match_id, a.round_num) in keys and flt.action_matches(a):
                kept.append(a)
    return FilteredView(rounds=rounds, actions=kept, rounds_played=rounds_played)


# ---------------------------------------------------------------------------
# Bootstrap uncertainty
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapSummary:
    mean: float
    stddev: float
    p5: float
    p95: float
    b: int
    seed: int
    samples: tuple[float, ...]


def bootstrap_wpa(per_round_credits: Sequence[float], b: int = 100,
                  seed: int = 0) -> BootstrapSummary:
    """Resample a player's rounds with replacement; summarize the B means.

    Deterministic for a fixed seed. Rounds without any credited action
    must be included as zeros by the caller so the resampling sees the
    player's full schedule.
    """
    values = np.asarray(per_round_credits, dtype=np.float64)
    if len(values) == 0:
        raise ValueError("player has no rounds to resample")
    if b < 2:
        raise ValueError("need at least 2 bootstrap samples")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(values), size=(b, len(values)))
    means = values[idx].mean(axis=1)
    return BootstrapSummary(
        mean=float(means.mean()),
        stddev=float(means.std(ddof=1)),
        p5=float(np.percentile(means, 5)),
        p95=float(np.percentile(means, 95)),
        b=b,
        seed=seed,
        samples=tuple(float(v) for v in means),
    )


def round_credit_table(actions: Iterable[ActionValue],
                       include_received: bool = True
                       ) -> dict[str, dict[tuple[str, int], float]]:
    """Per-player, per-round credit totals keyed by (match_id, round_num)."""
    table: dict[str, dict[tuple[str, int], float]] = {}
    for a in actions:
        key = (a.match_id, a.round_num)
        row = table.setdefault(a.actor_id, {})
        row[key] = row.get(key, 0.0) + a.actor_credit
        if include_received:
            row = table.setdefault(a.victim_id, {})
            row[key] = row.get(key, 0.0) + a.receiver_credit
    return table


def player_round_credits(actions: Iterable[ActionValue], player_id: str,
                         player_rounds: Sequence[tuple[str, int]],
                         include_received: bool = True) -> list[float]:
    """Per-round credit series over the player's full schedule (zeros for
    uninvolved rounds); input to :func:`bootstrap_wpa`."""
    table = round_credit_table(actions, include_received).get(player_id, {})
    return [table.get(key, 0.0) for key in player_rounds]


# ---------------------------------------------------------------------------
# Stability and independence statistics
# ---------------------------------------------------------------------------


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need two equal-length series of at least 2 points")
    xd = x - x.mean()
    yd = y - y.mean()
    denom = math.sqrt(float((xd * xd).sum()) * float((yd * yd).sum()))
    if denom == 0.0:
        raise ValueError("zero variance series has no correlation")
    return float((xd * yd).sum() / denom)


def fisher_z(r: float) -> float:
    """Variance-stabilizing transform z = atanh(r) = 0.5 ln((1+r)/(1-r))."""
    if abs(r) >= 1.0:
        warnings.warn("correlation of magnitude 1 transforms to infinity",
                      RuntimeWarning, stacklevel=2)
        return math.copysign(math.inf, r)
    return 0.5 * math.log((1.0 + r) / (1.0 - r))


def normal_sf(z: float) -> float:
    """Standard normal upper-tail probability."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def compare_correlations(r1: float, n1: int, r2: float, n2: int
                         ) -> tuple[float, float]:
    """One-sided test that correlation 1 exceeds correlation 2.

    Returns (statistic, p). The statistic is the difference of Fisher
    transforms over its standard error; equal correlations with equal n
    give exactly (0, 0.5).
    """
    if n1 <= 3 or n2 <= 3:
        raise ValueError("correlation comparison needs more than 3 samples each")
    stat = (fisher_z(r1) - fisher_z(r2)) / math.sqrt(
        1.0 / (n1 - 3) + 1.0 / (n2 - 3))
    return stat, normal_sf(stat)


@dataclass(frozen=True)
class MetricStability:
    metric: str
    month_to_month_r: float
    fisher_zvalue: float
    n_pairs: int
    kdr_r: float
    kdr_n: int


@dataclass
class StabilityReport:
    metrics: dict[str, MetricStability]

    def compare(self, metric_a: str, metric_b: str) -> tuple[float, float]:
        """One-sided test that metric_a is more stable month to month."""
        a, b = self.metrics[metric_a], self.metrics[metric_b]
        return compare_correlations(a.month_to_month_r, a.n_pairs,
                                    b.month_to_month_r, b.n_pairs)


def stability_analysis(periods: Mapping[str, Mapping[str, Mapping[str, float]]],
                       metric_names: Sequence[str], *,
                       min_rounds: int = 100,
                       rounds_key: str = "rounds",
                       kdr_key: str = "kdr") -> StabilityReport:
    """Month-to-month stability and KDR independence per metric.

    ``periods`` maps period id -> player -> {metric: value, rounds: n}.
    Players qualify for a consecutive-period pair when they played at
    least ``min_rounds`` in both periods; pairs pool across all
    consecutive periods. Requires at least 2 periods and 4 qualifying
    players per metric.
    """
    keys = sorted(periods)
    if len(keys) < 2:
        raise ValueError("stability analysis needs at least 2 periods")

    out = {}
    for metric in metric_names:
        first, second = [], []
        for prev_key, next_key in zip(keys[:-1], keys[1:]):
            prev, nxt = periods[prev_key], periods[next_key]
            for player, row in prev.items():
                other = nxt.get(player)
                if other is None:
                    continue
                if row.get(rounds_key, 0) < min_rounds \
                        or other.get(rounds_key, 0) < min_rounds:
                    continue
                first.append(row[metric])
                second.append(other[metric])
        if len(first) < 4:
            raise ValueError(
                f"metric {metric!r}: only {len(first)} qualifying player-pairs")
        r = pearson_r(first, second)

        vals, kdrs = [], []
        for key in keys:
            for player, row in periods[key].items():
                if row.get(rounds_key, 0) < min_rounds:
                    continue
                vals.append(row[metric])
                kdrs.append(row[kdr_key])
        kdr_r = pearson_r(vals, kdrs)
        out[metric] = MetricStability(
            metric=metric,
            month_to_month_r=r,
            fisher_zvalue=fisher_z(r),
            n_pairs=len(first),
            kdr_r=kdr_r,
            kdr_n=len(vals),
        )
    return StabilityReport(metrics=out)


# ---------------------------------------------------------------------------
# Impact plays
# ---------------------------------------------------------------------------


def impact_plays(actions: Iterable[ActionValue], *,
                 threshold: Optional[float] = None,
                 top_k: Optional[int] = None,
                 prob_range: Optional[tuple[float, float]] = None
                 ) -> list[ActionValue]:
    """Actions ranked by absolute actor credit, largest swings first.

    ``threshold`` keeps only |credit| >= threshold; ``prob_range`` keeps
    actions whose pre-state CT win probability lies in [lo, hi] (the
    comeback query uses a low band). Sorting is deterministic: ties break
    by match, round, then tick.
    """
    kept = []
    for a in actions:
        if threshold is not None and abs(a.actor_credit) < threshold:
            continue
        if prob_range is not None:
            lo, hi = prob_range
            if not lo <= a.pre_prob <= hi:
                continue
        kept.append(a)
    kept.sort(key=lambda a: (-abs(a.actor_credit), a.match_id, a.round_num, a.tick))
    return kept if top_k is None else kept[:top_k]
