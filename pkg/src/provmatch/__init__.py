"""provmatch: program behavior matching over system provenance graphs.

Pipeline: parse system event logs into typed records, aggregate them into
per-program heterogeneous invariant graph snapshots, encode snapshots with a
hierarchical attentional graph neural encoder, train a Siamese similarity
metric jointly with the encoder, and flag programs whose behavior matches no
known benign program.
"""

__version__ = "0.1.0"

from .events import (  # noqa: F401
    EntityKind,
    RelationKind,
    SystemEntity,
    SystemEvent,
    canonicalize_program_id,
    ingest_stream,
    parse_event_line,
)
from .graphs import ProgramSnapshot, build_snapshots, snapshot_features  # noqa: F401
from .metapaths import MetaPath, MetaPathContext, neighbor_set, rwr_alpha  # noqa: F401
from .encoder import EncoderConfig, encode, init_encoder_params  # noqa: F401
from .training import TrainConfig, cosine_sim, sample_pairs, train  # noqa: F401
from .detection import EmbeddingDatabase, register, score_program, verdict  # noqa: F401
from .metrics import auc_score, evaluate  # noqa: F401
