"""Win-probability modeling and player valuation for CSGO-style event streams.

The pipeline: parse or generate matches (``ingest``, ``synthetic``),
replay rounds into game states (``model``), derive spatial features from
a navigation mesh (``navmesh``), vectorize (``features``), train and
evaluate win-probability models (``winprob``), and value players by how
their actions move the win probability (``valuation``). The ``wpakit``
command line wires it end to end.
"""

from .errors import (
    MatchParseError,
    MatchValidationError,
    MeshError,
    ModelFormatError,
    ReplayError,
    SchemaMismatchError,
    StateFileError,
    WpakitError,
)
from .model import (
    CONSTANTS,
    DEFAULT_MAP_POOL,
    BombDefuse,
    BombPlant,
    Damage,
    Footstep,
    GameConstants,
    GameEvent,
    GameState,
    MatchRecord,
    RoundRecord,
    Violation,
    replay_match,
    replay_round,
    validate_match,
)
from .ingest import (
    StateTable,
    parse_match,
    parse_match_file,
    read_states,
    serialize_match,
    write_states,
)
from .synthetic import GroundTruth, SyntheticConfig, SyntheticData, generate_synthetic
from .navmesh import (
    NavArea,
    NavGraph,
    NavMesh,
    build_graph,
    distance_to_site,
    graph_distance,
    load_mesh,
    locate_area,
    save_mesh,
)
from .features import (
    FeatureMatrix,
    FeatureSchema,
    RowMeta,
    collect_states,
    fit_schema,
    vectorize,
    vectorize_table,
)
from .gbt import GbtConfig
from .winprob import (
    EvalReport,
    WinProbModel,
    calibration_curve,
    evaluate,
    evaluate_by_time,
    feature_importance,
    load_model,
    predict,
    predict_states,
    save_model,
    split_by_date,
    train_baseline,
    train_gbt,
    train_logistic,
)
from .valuation import (
    ActionValue,
    BootstrapSummary,
    ClassicMetrics,
    RatingConstants,
    ScenarioFilter,
    apply_filter,
    bootstrap_wpa,
    classic_metrics,
    compare_correlations,
    fisher_z,
    impact_plays,
    pearson_r,
    player_round_credits,
    rating_from_components,
    stability_analysis,
    value_actions,
    value_between,
    wpa,
)

__version__ = "0.1.0"
