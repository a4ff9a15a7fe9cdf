"""Fixed-width numeric feature vectors from game-state sequences.

The canonical feature order is versioned: the map as a categorical code,
then the numeric round context, then the bomb flags, then (only when a
navigation graph was used) the four side-to-bombsite distances. When no
graph is available the distance columns are dropped from the schema
entirely rather than imputed, so a model trained without them will refuse
rows that carry them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import SchemaMismatchError
from .model import GameState, MatchRecord, replay_round

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

MAP_FEATURE = "map"
BASE_FEATURES = (
    MAP_FEATURE,
    "ticks_since_start",
    "ct_equip_value",
    "t_equip_value",
    "ct_players_alive",
    "t_players_alive",
    "ct_hp_total",
    "t_hp_total",
    "bomb_planted",
    "bomb_site_a",
    "bomb_site_b",
)
DISTANCE_FEATURES = (
    "ct_dist_to_a",
    "ct_dist_to_b",
    "t_dist_to_a",
    "t_dist_to_b",
)
SITE_VOCAB = ("none", "A", "B")


@dataclass(frozen=True)
class ColumnStats:
    mean: float
    std: float
    scaled: bool  # zero-variance columns pass through unscaled


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...]
    map_vocab: tuple[str, ...]
    stats: dict[str, ColumnStats]
    has_distances: bool
    unreachable_sentinel: float
    version: int = SCHEMA_VERSION
    site_vocab: tuple[str, ...] = SITE_VOCAB

    @property
    def numeric_names(self) -> tuple[str, ...]:
        return tuple(n for n in self.names if n != MAP_FEATURE)

    def map_code(self, map_name: str) -> int:
        try:
            return self.map_vocab.index(map_name)
        except ValueError:
            return -1

    def column_index(self, name: str) -> int:
        return self.names.index(name)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "names": list(self.names),
            "map_vocab": list(self.map_vocab),
            "stats": {n: [s.mean, s.std, s.scaled] for n, s in self.stats.items()},
            "has_distances": self.has_distances,
            "unreachable_sentinel": self.unreachable_sentinel,
            "site_vocab": list(self.site_vocab),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        return cls(
            names=tuple(doc["names"]),
            map_vocab=tuple(doc["map_vocab"]),
            stats={n: ColumnStats(m, s, bool(sc))
                   for n, (m, s, sc) in doc["stats"].items()},
            has_distances=bool(doc["has_distances"]),
            unreachable_sentinel=float(doc["unreachable_sentinel"]),
            version=int(doc["version"]),
            site_vocab=tuple(doc.get("site_vocab", SITE_VOCAB)),
        )


@dataclass
class RowMeta:
    """Per-row provenance used for splits, time slicing, and valuation."""

    match_id: np.ndarray       # object array of strings
    round_num: np.ndarray      # int32
    tick: np.ndarray           # int64
    ticks_since_start: np.ndarray  # int64
    seconds: np.ndarray        # float64, ticks_since_start / tick_rate

    def __len__(self) -> int:
        return len(self.round_num)


@dataclass
class FeatureMatrix:
    """Raw feature rows plus labels and metadata.

    ``x`` stores raw (unstandardized) values; the map column holds the
    vocabulary code (-1 for maps unseen at fit time). Linear models
    standardize through the schema on the fly, trees bin raw values.
    """

    x: np.ndarray
    schema: FeatureSchema
    y: Optional[np.ndarray] = None
    meta: Optional[RowMeta] = None

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.x[:, self.schema.column_index(name)]

    def standardized(self) -> np.ndarray:
        """Copy of x with scaled numeric columns; the map code passes through."""
        out = self.x.astype(np.float64, copy=True)
        for j, name in enumerate(self.schema.names):
            st = self.schema.stats.get(name)
            if st is not None and st.scaled:
                out[:, j] = (out[:, j] - st.mean) / st.std
        return out

    def subset(self, idx) -> "FeatureMatrix":
        meta = None
        if self.meta is not None:
            meta = RowMeta(
                match_id=self.meta.match_id[idx],
                round_num=self.meta.round_num[idx],
                tick=self.meta.tick[idx],
                ticks_since_start=self.meta.ticks_since_start[idx],
                seconds=self.meta.seconds[idx],
            )
        return FeatureMatrix(
            x=self.x[idx],
            schema=self.schema,
            y=None if self.y is None else self.y[idx],
            meta=meta,
        )


def _raw_columns(states: Sequence[GameState], with_distances: bool) -> dict[str, np.ndarray]:
    cols = {
        "ticks_since_start": np.array([s.ticks_since_start for s in states], dtype=np.float64),
        "ct_equip_value": np.array([s.ct_equip_value for s in states], dtype=np.float64),
        "t_equip_value": np.array([s.t_equip_value for s in states], dtype=np.float64),
        "ct_players_alive": np.array([s.ct_players_alive for s in states], dtype=np.float64),
        "t_players_alive": np.array([s.t_players_alive for s in states], dtype=np.float64),
        "ct_hp_total": np.array([s.ct_hp_total for s in states], dtype=np.float64),
        "t_hp_total": np.array([s.t_hp_total for s in states], dtype=np.float64),
        "bomb_planted": np.array([s.bomb_planted for s in states], dtype=np.float64),
        "bomb_site_a": np.array([s.bomb_site == "A" for s in states], dtype=np.float64),
        "bomb_site_b": np.array([s.bomb_site == "B" for s in states], dtype=np.float64),
    }
    if with_distances:
        cols["ct_dist_to_a"] = np.array([s.ct_dist_to_a for s in states], dtype=np.float64)
        cols["ct_dist_to_b"] = np.array([s.ct_dist_to_b for s in states], dtype=np.float64)
        cols["t_dist_to_a"] = np.array([s.t_dist_to_a for s in states], dtype=np.float64)
        cols["t_dist_to_b"] = np.array([s.t_dist_to_b for s in states], dtype=np.float64)
    return cols


def _states_have_distances(states: Sequence[GameState]) -> bool:
    first = states[0].ct_dist_to_a is not None
    for s in states:
        if (s.ct_dist_to_a is not None) != first:
            raise SchemaMismatchError(
                "states mix replay with and without a navigation graph")
    return first


def fit_schema(states: Sequence[GameState], *, graph=None,
               unreachable_sentinel: Optional[float] = None) -> FeatureSchema:
    """Fit the feature schema (vocabulary and scaling statistics).

    Fit on the training split only; the same schema then vectorizes any
    split. The sentinel replacing infinite bombsite distances defaults to
    the graph's node count when a graph is given, else to twice the
    largest finite distance observed.
    """
    if not states:
        raise ValueError("cannot fit a schema on an empty state collection")

    has_distances = _states_have_distances(states)
    names = BASE_FEATURES + (DISTANCE_FEATURES if has_distances else ())
    map_vocab = tuple(sorted({s.map_name for s in states}))

    if not has_distances:
        sentinel = 0.0
    elif unreachable_sentinel is not None:
        sentinel = float(unreachable_sentinel)
    elif graph is not None:
        sentinel = float(graph.node_count)
    else:
        finite = [getattr(s, n) for s in states for n in DISTANCE_FEATURES
                  if math.isfinite(getattr(s, n))]
        sentinel = 2.0 * max(finite) if finite else 1000.0

    cols = _raw_columns(states, has_distances)
    stats: dict[str, ColumnStats] = {}
    for name in names:
        if name == MAP_FEATURE:
            continue
        col = cols[name]
        if has_distances and name in DISTANCE_FEATURES:
            col = np.where(np.isinf(col), sentinel, col)
        mean = float(col.mean())
        std = float(col.std())
        if std > 0.0:
            stats[name] = ColumnStats(mean, std, True)
        else:
            stats[name] = ColumnStats(mean, 0.0, False)

    return FeatureSchema(
        names=names,
        map_vocab=map_vocab,
        stats=stats,
        has_distances=has_distances,
        unreachable_sentinel=sentinel,
    )


def vectorize(states: Sequence[GameState], schema: FeatureSchema,
              meta: Optional[RowMeta] = None) -> FeatureMatrix:
    """Deterministically turn states into one raw feature row each.

    Maps unseen at fit time get code -1 (an all-zero one-hot for linear
    models) with a logged warning. Raises when the states' distance
    availability disagrees with the schema.
    """
    if not states:
        x = np.zeros((0, len(schema.names)), dtype=np.float64)
        return FeatureMatrix(x=x, schema=schema, y=None, meta=meta)

    has_distances = _states_have_distances(states)
    if has_distances != schema.has_distances:
        raise SchemaMismatchError(
            "states were replayed "
            + ("with" if has_distances else "without")
            + " a navigation graph but the schema says otherwise")

    vocab_index = {m: i for i, m in enumerate(schema.map_vocab)}
    map_codes = np.array([vocab_index.get(s.map_name, -1) for s in states],
                         dtype=np.float64)
    if (map_codes < 0).any():
        unseen = sorted({s.map_name for s in states if s.map_name not in vocab_index})
        logger.warning("vectorize: %d rows on maps unseen at fit time: %s",
                       int((map_codes < 0).sum()), ", ".join(unseen))

    cols = _raw_columns(states, has_distances)
    x = np.empty((len(states), len(schema.names)), dtype=np.float64)
    for j, name in enumerate(schema.names):
        if name == MAP_FEATURE:
            x[:, j] = map_codes
        elif name in DISTANCE_FEATURES:
            x[:, j] = np.where(np.isinf(cols[name]), schema.unreachable_sentinel,
                               cols[name])
        else:
            x[:, j] = cols[name]

    if not np.isfinite(x).all():
        raise SchemaMismatchError("non-finite feature values after sentinel mapping")

    labels = [s.outcome_label for s in states]
    y = None
    if all(lab is not None for lab in labels):
        y = np.array(labels, dtype=np.int8)

    return FeatureMatrix(x=x, schema=schema, y=y, meta=meta)


def collect_states(matches: Sequence[MatchRecord], graph=None
                   ) -> tuple[list[GameState], RowMeta]:
    """Replay every round of every match into one flat state list with
    per-row provenance metadata."""
    states: list[GameState] = []
    match_ids: list[str] = []
    round_nums: list[int] = []
    ticks: list[int] = []
    for match in matches:
        for rnd in match.rounds:
            round_states = replay_round(rnd, graph, map_name=match.map_name)
            states.extend(round_states)
            n = len(round_states)
            match_ids.extend([match.match_id] * n)
            round_nums.extend([rnd.round_num] * n)
            start = rnd.start_tick
            ticks.extend(start + s.ticks_since_start for s in round_states)

    tss = np.array([s.ticks_since_start for s in states], dtype=np.int64)
    tick_arr = np.array(ticks, dtype=np.int64)
    rates = {m.match_id: m.tick_rate for m in matches}
    match_arr = np.array(match_ids, dtype=object)
    rate_arr = np.array([rates[m] for m in match_ids], dtype=np.float64)
    meta = RowMeta(
        match_id=match_arr,
        round_num=np.array(round_nums, dtype=np.int32),
        tick=tick_arr,
        ticks_since_start=tss,
        seconds=tss / rate_arr,
    )
    return states, meta


def vectorize_table(table, schema: FeatureSchema) -> FeatureMatrix:
    """Column-wise fast path from an on-disk state table (see ingest)."""
    if table.has_distances != schema.has_distances:
        raise SchemaMismatchError(
            "state table distance availability disagrees with the schema")

    n = table.n_rows
    x = np.empty((n, len(schema.names)), dtype=np.float64)
    table_maps = np.asarray(table.map_vocab, dtype=object)
    recode = np.array([schema.map_code(m) for m in table_maps], dtype=np.float64)
    for j, name in enumerate(schema.names):
        if name == MAP_FEATURE:
            codes = table.rows["map_code"].astype(np.int64)
            x[:, j] = recode[codes] if n else codes
        elif name in DISTANCE_FEATURES:
            col = table.rows[name].astype(np.float64)
            x[:, j] = np.where(np.isinf(col), schema.unreachable_sentinel, col)
        elif name == "bomb_site_a":
            x[:, j] = table.rows["site_code"] == 1
        elif name == "bomb_site_b":
            x[:, j] = table.rows["site_code"] == 2
        else:
            x[:, j] = table.rows[_TABLE_COLUMN[name]]

    labels = table.rows["label"]
    y = labels.astype(np.int8) if n and (labels >= 0).all() else None
    return FeatureMatrix(x=x, schema=schema, y=y, meta=table.row_meta())


def fit_schema_from_table(table, *, graph=None,
                          unreachable_sentinel: Optional[float] = None) -> FeatureSchema:
    """Fit a schema directly from an on-disk state table."""
    if table.n_rows == 0:
        raise ValueError("cannot fit a schema on an empty state table")
    return fit_schema(table.to_states(), graph=graph,
                      unreachable_sentinel=unreachable_sentinel)


_TABLE_COLUMN = {
    "ticks_since_start": "ticks_since_start",
    "ct_equip_value": "ct_equip_value",
    "t_equip_value": "t_equip_value",
    "ct_players_alive": "ct_players_alive",
    "t_players_alive": "t_players_alive",
    "ct_hp_total": "ct_hp_total",
    "t_hp_total": "t_hp_total",
    "bomb_planted": "bomb_planted",
}
