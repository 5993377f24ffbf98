"""countforge: instruction-corpus synthesis, tiled counting inference, and
evaluation tooling for count-aware vision-chat models."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    AnnotationSet,
    BandName,
    CountRange,
    DEFAULT_BANDING,
    DensityBand,
    ImageRecord,
    Split,
    band_of,
    category_count_extrema,
    load_annotations,
    save_annotations,
)
from .dialogue import (  # noqa: E402
    D3TConfig,
    DialogueTranscript,
    DialogueTurn,
    SingleRoundConfig,
    TurnKind,
    generate_baseline,
    generate_d3t,
    generate_single_round,
)
from .templates import TemplateKind, render  # noqa: E402
from .ranking import (  # noqa: E402
    CrcoConfig,
    CrcoMode,
    RankingSet,
    assign_groups,
    build_scrco_set,
    sample_set,
)
from .imageops import TileSpec, central_crop, extract_and_encode, grid_partition  # noqa: E402
from .client import (  # noqa: E402
    EndpointConfig,
    HttpVisionClient,
    ModelReply,
    VisionClient,
    VisionQuery,
    parse_count,
)
from .mockmodel import (  # noqa: E402
    MockBehaviorProfile,
    MockModel,
    MockServer,
    SyntheticScene,
    generate_scene,
    mock_count,
)
from .inference import (  # noqa: E402
    FusionMode,
    GlceConfig,
    InferenceResult,
    infer_count,
    run_benchmark,
)
from .metrics import EvalReport, MetricCell, evaluate, render_table  # noqa: E402

__all__ = [
    "__version__",
    "AnnotationSet",
    "BandName",
    "CountRange",
    "DEFAULT_BANDING",
    "DensityBand",
    "ImageRecord",
    "Split",
    "band_of",
    "category_count_extrema",
    "load_annotations",
    "save_annotations",
    "D3TConfig",
    "DialogueTranscript",
    "DialogueTurn",
    "SingleRoundConfig",
    "TurnKind",
    "generate_baseline",
    "generate_d3t",
    "generate_single_round",
    "TemplateKind",
    "render",
    "CrcoConfig",
    "CrcoMode",
    "RankingSet",
    "assign_groups",
    "build_scrco_set",
    "sample_set",
    "TileSpec",
    "central_crop",
    "extract_and_encode",
    "grid_partition",
    "EndpointConfig",
    "HttpVisionClient",
    "ModelReply",
    "VisionClient",
    "VisionQuery",
    "parse_count",
    "MockBehaviorProfile",
    "MockModel",
    "MockServer",
    "SyntheticScene",
    "generate_scene",
    "mock_count",
    "FusionMode",
    "GlceConfig",
    "InferenceResult",
    "infer_count",
    "run_benchmark",
    "EvalReport",
    "MetricCell",
    "evaluate",
    "render_table",
]
