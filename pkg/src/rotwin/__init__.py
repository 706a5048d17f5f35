"""Rotation win statistics: win ratio, net benefit and win odds over
hybrid hierarchies of strictly ordered blocks of equally prioritized endpoints."""

__version__ = "0.1.0"

from .compare import (  # noqa: E402
    Arm,
    ArmData,
    Continuous,
    Dataset,
    EventCount,
    Result,
    Subject,
    TimeToEvent,
    WinCounts,
    compare_endpoint,
    compare_pair,
    count_by_stratum,
    count_dataset,
    count_wins_losses,
    decompose,
)
from .errors import (  # noqa: E402
    AnalysisError,
    ConfigurationError,
    InferenceError,
    ParseError,
    ResourceError,
)
from .hierarchy import (  # noqa: E402
    Direction,
    EndpointKind,
    EndpointSpec,
    Hierarchy,
    RotationSet,
    build_rotation_set,
    validate_hierarchy,
)
from .inference import (  # noqa: E402
    StratifiedInput,
    covariance_matrix,
    estimate_theta,
    rnb_rwo_inference,
    rwr_estimate,
    rwr_inference,
    rwr_test,
    stratified_inference,
    win_statistics,
)
