"""Canonical JSON match event-log parsing, and the binary state table.

The JSON format mirrors the match data model field-for-field in
snake_case, with each round's events in one flat array discriminated by a
"type" key (see docs/format.md). Unknown top-level keys are ignored with
a warning for forward compatibility; unknown event types are rejected
with the JSON path of the offending element.

State tables hold replayed game states in a binary container (magic
"WPAS") sized for corpora of tens of millions of rows: a JSON header
records the schema version and column order, then rows follow as fixed
width row-major records that read back with zero parsing cost.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import MatchParseError, MatchValidationError, StateFileError
from .features import RowMeta
from .model import (
    DEFAULT_MAP_POOL,
    BombDefuse,
    BombPlant,
    Damage,
    Footstep,
    GameEvent,
    GameState,
    MatchRecord,
    RoundRecord,
    validate_match,
)

logger = logging.getLogger(__name__)

STATE_MAGIC = b"WPAS"
STATE_VERSION = 1
STATE_SCHEMA_VERSION = 1

_MATCH_KEYS = {"match_id", "map_name", "tick_rate", "date", "rounds"}
_SITE_CODES = {"none": 0, "A": 1, "B": 2}
_SITE_NAMES = {v: k for k, v in _SITE_CODES.items()}


# ---------------------------------------------------------------------------
# JSON parsing
# ---------------------------------------------------------------------------


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise MatchParseError(f"{path}.{key}", "missing required key")
    return obj[key]


def _coerce(value, kind, path: str):
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise MatchParseError(path, f"expected {kind.__name__}: {exc}") from exc


def _position(value, path: str):
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise MatchParseError(path, "position must be a 3-element array")
    return tuple(_coerce(v, float, f"{path}[{i}]") for i, v in enumerate(value))


def _parse_event(doc: dict, path: str) -> GameEvent:
    if not isinstance(doc, dict):
        raise MatchParseError(path, "event must be an object")
    etype = doc.get("type")
    tick = _coerce(_need(doc, "tick", path), int, f"{path}.tick")
    if etype == "footstep":
        area = doc.get("area_id")
        return Footstep(
            tick=tick,
            player_id=str(_need(doc, "player_id", path)),
            side=str(_need(doc, "side", path)),
            position=_position(_need(doc, "position", path), f"{path}.position"),
            area_id=None if area is None else _coerce(area, int, f"{path}.area_id"),
        )
    if etype == "damage":
        return Damage(
            tick=tick,
            attacker_id=str(_need(doc, "attacker_id", path)),
            attacker_side=str(_need(doc, "attacker_side", path)),
            victim_id=str(_need(doc, "victim_id", path)),
            victim_side=str(_need(doc, "victim_side", path)),
            hp_damage=_coerce(_need(doc, "hp_damage", path), int, f"{path}.hp_damage"),
            is_kill=bool(_need(doc, "is_kill", path)),
            assister_id=(None if doc.get("assister_id") is None
                         else str(doc["assister_id"])),
            attacker_position=_position(doc.get("attacker_position"),
                                        f"{path}.attacker_position"),
            victim_position=_position(doc.get("victim_position"),
                                      f"{path}.victim_position"),
        )
    if etype == "bomb_plant":
        return BombPlant(
            tick=tick,
            player_id=str(_need(doc, "player_id", path)),
            site=str(_need(doc, "site", path)),
        )
    if etype == "bomb_defuse":
        return BombDefuse(tick=tick, player_id=str(_need(doc, "player_id", path)))
    raise MatchParseError(path, f"unknown event type {etype!r}")


def _parse_round(doc: dict, path: str) -> RoundRecord:
    if not isinstance(doc, dict):
        raise MatchParseError(path, "round must be an object")
    events_doc = _need(doc, "events", path)
    if not isinstance(events_doc, list):
        raise MatchParseError(f"{path}.events", "events must be an array")
    events = tuple(_parse_event(e, f"{path}.events[{i}]")
                   for i, e in enumerate(events_doc))
    players_ct = _need(doc, "ct_players", path)
    players_t = _need(doc, "t_players", path)
    if not isinstance(players_ct, list) or not isinstance(players_t, list):
        raise MatchParseError(f"{path}.ct_players", "player lists must be arrays")
    return RoundRecord(
        round_num=_coerce(_need(doc, "round_num", path), int, f"{path}.round_num"),
        start_tick=_coerce(_need(doc, "start_tick", path), int, f"{path}.start_tick"),
        end_tick=_coerce(_need(doc, "end_tick", path), int, f"{path}.end_tick"),
        ct_team=str(_need(doc, "ct_team", path)),
        t_team=str(_need(doc, "t_team", path)),
        ct_equip_value=_coerce(_need(doc, "ct_equip_value", path), float,
                               f"{path}.ct_equip_value"),
        t_equip_value=_coerce(_need(doc, "t_equip_value", path), float,
                              f"{path}.t_equip_value"),
        winner_side=str(_need(doc, "winner_side", path)),
        win_reason=str(_need(doc, "win_reason", path)),
        events=events,
        ct_players=tuple(str(p) for p in players_ct),
        t_players=tuple(str(p) for p in players_t),
    )


def parse_match(data, *, map_pool=DEFAULT_MAP_POOL, validate: bool = True
                ) -> MatchRecord:
    """Parse a match document into a validated MatchRecord.

    Raises MatchParseError with a JSON path for structural problems and
    MatchValidationError (carrying the violation list) for semantic ones.
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MatchParseError("$", f"input is not UTF-8: {exc}") from exc
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MatchParseError("$", f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MatchParseError("$", "top level must be an object")

    unknown = set(doc) - _MATCH_KEYS
    if unknown:
        logger.warning("parse_match: ignoring unknown top-level keys: %s",
                       ", ".join(sorted(unknown)))

    rounds_doc = _need(doc, "rounds", "$")
    if not isinstance(rounds_doc, list):
        raise MatchParseError("$.rounds", "rounds must be an array")
    match = MatchRecord(
        match_id=str(_need(doc, "match_id", "$")),
        map_name=str(_need(doc, "map_name", "$")),
        tick_rate=_coerce(doc.get("tick_rate", 128), int, "$.tick_rate"),
        date=str(_need(doc, "date", "$")),
        rounds=tuple(_parse_round(r, f"$.rounds[{i}]")
                     for i, r in enumerate(rounds_doc)),
    )
    if validate:
        violations = validate_match(match, map_pool=map_pool)
        if violations:
            raise MatchValidationError(violations)
    return match


def parse_match_file(path, *, map_pool=DEFAULT_MAP_POOL, validate: bool = True
                     ) -> MatchRecord:
    with open(path, "rb") as fh:
        return parse_match(fh.read(), map_pool=map_pool, validate=validate)


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def _event_to_dict(ev: GameEvent) -> dict:
    kind = ev.kind
    if kind == "footstep":
        out = {"type": "footstep", "tick": ev.tick, "player_id": ev.player_id,
               "side": ev.side, "position": list(ev.position)}
        if ev.area_id is not None:
            out["area_id"] = ev.area_id
        return out
    if kind == "damage":
        out = {"type": "damage", "tick": ev.tick,
               "attacker_id": ev.attacker_id, "attacker_side": ev.attacker_side,
               "victim_id": ev.victim_id, "victim_side": ev.victim_side,
               "hp_damage": ev.hp_damage, "is_kill": ev.is_kill}
        if ev.assister_id is not None:
            out["assister_id"] = ev.assister_id
        if ev.attacker_position is not None:
            out["attacker_position"] = list(ev.attacker_position)
        if ev.victim_position is not None:
            out["victim_position"] = list(ev.victim_position)
        return out
    if kind == "bomb_plant":
        return {"type": "bomb_plant", "tick": ev.tick,
                "player_id": ev.player_id, "site": ev.site}
    return {"type": "bomb_defuse", "tick": ev.tick, "player_id": ev.player_id}


def match_to_dict(match: MatchRecord) -> dict:
    return {
        "match_id": match.match_id,
        "map_name": match.map_name,
        "tick_rate": match.tick_rate,
        "date": match.date,
        "rounds": [
            {
                "round_num": r.round_num,
                "start_tick": r.start_tick,
                "end_tick": r.end_tick,
                "ct_team": r.ct_team,
                "t_team": r.t_team,
                "ct_equip_value": r.ct_equip_value,
                "t_equip_value": r.t_equip_value,
                "winner_side": r.winner_side,
                "win_reason": r.win_reason,
                "ct_players": list(r.ct_players),
                "t_players": list(r.t_players),
                "events": [_event_to_dict(e) for e in r.events],
            }
            for r in match.rounds
        ],
    }


def serialize_match(match: MatchRecord, *, indent: Optional[int] = None) -> bytes:
    """Serialize to the canonical JSON format; parse_match round-trips it."""
    return json.dumps(match_to_dict(match), indent=indent,
                      separators=None if indent else (",", ":")).encode("utf-8")


# ---------------------------------------------------------------------------
# Binary state table
# ---------------------------------------------------------------------------


def _row_dtype(has_distances: bool, has_meta: bool) -> np.dtype:
    fields = [
        ("map_code", "<u2"),
        ("round_num", "<i2"),
        ("ticks_since_start", "<i8"),
        ("ct_equip_value", "<f8"),
        ("t_equip_value", "<f8"),
        ("ct_players_alive", "<i1"),
        ("t_players_alive", "<i1"),
        ("ct_hp_total", "<i2"),
        ("t_hp_total", "<i2"),
        ("bomb_planted", "<u1"),
        ("site_code", "<i1"),
    ]
    if has_distances:
        fields += [("ct_dist_to_a", "<f8"), ("ct_dist_to_b", "<f8"),
                   ("t_dist_to_a", "<f8"), ("t_dist_to_b", "<f8")]
    fields.append(("label", "<i1"))
    if has_meta:
        fields += [("match_code", "<u4"), ("tick", "<i8"), ("seconds", "<f8")]
    return np.dtype(fields)


@dataclass
class StateTable:
    """A state table materialized from disk (or built for writing)."""

    rows: np.ndarray
    map_vocab: tuple[str, ...]
    match_vocab: tuple[str, ...]
    has_distances: bool
    has_meta: bool

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def to_states(self) -> list[GameState]:
        maps = self.map_vocab
        out = []
        for r in self.rows:
            label = int(r["label"])
            if self.has_distances:
                dists = (float(r["ct_dist_to_a"]), float(r["ct_dist_to_b"]),
                         float(r["t_dist_to_a"]), float(r["t_dist_to_b"]))
            else:
                dists = (None, None, None, None)
            out.append(GameState(
                round_num=int(r["round_num"]),
                map_name=maps[int(r["map_code"])],
                ticks_since_start=int(r["ticks_since_start"]),
                ct_equip_value=float(r["ct_equip_value"]),
                t_equip_value=float(r["t_equip_value"]),
                ct_players_alive=int(r["ct_players_alive"]),
                t_players_alive=int(r["t_players_alive"]),
                ct_hp_total=int(r["ct_hp_total"]),
                t_hp_total=int(r["t_hp_total"]),
                bomb_planted=bool(r["bomb_planted"]),
                bomb_site=_SITE_NAMES[int(r["site_code"])],
                ct_dist_to_a=dists[0], ct_dist_to_b=dists[1],
                t_dist_to_a=dists[2], t_dist_to_b=dists[3],
                outcome_label=None if label < 0 else label,
            ))
        return out

    def row_meta(self) -> Optional[RowMeta]:
        if not self.has_meta:
            return None
        vocab = np.array(self.match_vocab, dtype=object)
        codes = self.rows["match_code"].astype(np.int64)
        return RowMeta(
            match_id=vocab[codes] if self.n_rows else np.empty(0, dtype=object),
            round_num=self.rows["round_num"].astype(np.int32),
            tick=self.rows["tick"].astype(np.int64),
            ticks_since_start=self.rows["ticks_since_start"].astype(np.int64),
            seconds=self.rows["seconds"].astype(np.float64),
        )


def write_states(states: Sequence[GameState], path,
                 meta: Optional[RowMeta] = None) -> None:
    """Write a lossless columnar state table; see docs/format.md."""
    n = len(states)
    has_distances = bool(n) and states[0].ct_dist_to_a is not None
    has_meta = meta is not None
    if has_meta and len(meta) != n:
        raise ValueError("metadata length does not match state count")

    map_vocab = tuple(sorted({s.map_name for s in states}))
    map_idx = {m: i for i, m in enumerate(map_vocab)}
    if has_meta:
        match_vocab = tuple(sorted(set(meta.match_id.tolist())))
        match_idx = {m: i for i, m in enumerate(match_vocab)}
    else:
        match_vocab = ()

    rows = np.empty(n, dtype=_row_dtype(has_distances, has_meta))
    if n:
        rows["map_code"] = [map_idx[s.map_name] for s in states]
        rows["round_num"] = [s.round_num for s in states]
        rows["ticks_since_start"] = [s.ticks_since_start for s in states]
        rows["ct_equip_value"] = [s.ct_equip_value for s in states]
        rows["t_equip_value"] = [s.t_equip_value for s in states]
        rows["ct_players_alive"] = [s.ct_players_alive for s in states]
        rows["t_players_alive"] = [s.t_players_alive for s in states]
        rows["ct_hp_total"] = [s.ct_hp_total for s in states]
        rows["t_hp_total"] = [s.t_hp_total for s in states]
        rows["bomb_planted"] = [s.bomb_planted for s in states]
        rows["site_code"] = [_SITE_CODES[s.bomb_site] for s in states]
        if has_distances:
            rows["ct_dist_to_a"] = [s.ct_dist_to_a for s in states]
            rows["ct_dist_to_b"] = [s.ct_dist_to_b for s in states]
            rows["t_dist_to_a"] = [s.t_dist_to_a for s in states]
            rows["t_dist_to_b"] = [s.t_dist_to_b for s in states]
        rows["label"] = [-1 if s.outcome_label is None else s.outcome_label
                         for s in states]
        if has_meta:
            rows["match_code"] = [match_idx[m] for m in meta.match_id.tolist()]
            rows["tick"] = meta.tick
            rows["seconds"] = meta.seconds

    header = json.dumps({
        "version": STATE_VERSION,
        "schema_version": STATE_SCHEMA_VERSION,
        "n_rows": n,
        "has_distances": has_distances,
        "has_meta": has_meta,
        "map_vocab": list(map_vocab),
        "match_vocab": list(match_vocab),
        "columns": list(rows.dtype.names),
    }, sort_keys=True).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(STATE_MAGIC)
        fh.write(struct.pack("<H", STATE_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(rows.tobytes())


def read_states(path) -> StateTable:
    """Read a state table; errors on version mismatch or truncation."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 10 or blob[:4] != STATE_MAGIC:
        raise StateFileError("not a state table (bad magic)")
    version = struct.unpack_from("<H", blob, 4)[0]
    if version != STATE_VERSION:
        raise StateFileError(f"unsupported state table version {version}")
    header_len = struct.unpack_from("<I", blob, 6)[0]
    if len(blob) < 10 + header_len:
        raise StateFileError("truncated state table (incomplete header)")
    try:
        header = json.loads(blob[10:10 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StateFileError(f"corrupt state table header: {exc}") from exc
    if header.get("schema_version") != STATE_SCHEMA_VERSION:
        raise StateFileError(
            f"unsupported state schema version {header.get('schema_version')}")

    dtype = _row_dtype(header["has_distances"], header["has_meta"])
    n = int(header["n_rows"])
    body = blob[10 + header_len:]
    expected = n * dtype.itemsize
    if len(body) < expected:
        raise StateFileError(
            f"truncated state table: expected {expected} row bytes, got {len(body)}")
    rows = np.frombuffer(body[:expected], dtype=dtype).copy()
    return StateTable(
        rows=rows,
        map_vocab=tuple(header["map_vocab"]),
        match_vocab=tuple(header["match_vocab"]),
        has_distances=bool(header["has_distances"]),
        has_meta=bool(header["has_meta"]),
    )
