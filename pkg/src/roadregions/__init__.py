"""Road-scene synthesis, BEV semantic fusion, automatic region labeling,
and sequence models for region, intention, and risk prediction."""

from .geometry import (
    Polygon,
    Pose,
    SemanticClass,
    SemanticPoint,
    SemanticPointCloud,
    Vec2,
    Vec3,
    point_in_polygon,
    project_to_ground,
    winner_take_all,
    wrap_angle,
)
from .topology import (
    AffordedAction,
    RoadTopology,
    SemanticRegion,
    TopologyKind,
    TopologyParams,
    afforded_actions,
    build_topology,
    ground_truth_region,
)
from .bev import BevGrid, CrosswalkComponent, detect_intersection_core, extract_crosswalks, rasterize
from .simulate import Episode, FrameFeature, SimConfig, make_episode, sample_point_cloud, synthesize_trajectory
from .labeling import (
    CoherenceParams,
    LabelingResult,
    RejectReason,
    label_intersection,
    label_lane_change,
    labeling_accuracy,
    quality_filter,
)
from .model import (
    SrpConfig,
    SrpOutputs,
    SrpParams,
    TrainConfig,
    TrainingTarget,
    backward,
    forward,
    load_checkpoint,
    predict,
    save_checkpoint,
    srp_loss,
    train,
)
from .heads import (
    IntentHead,
    IntentSample,
    RiskScene,
    ego_concat,
    ego_fuse,
    intent_predict,
    risk_box_metrics,
    risk_identify,
    train_intent,
)
from .metrics import MetricsReport, PredictionRecord, compute_metrics

__version__ = "0.1.0"
