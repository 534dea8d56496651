"""camrad: camera-radar annotation toolkit.

Projects between camera pixels and radar range-azimuth through a
refinable ground-plane model, detects and clusters radar peaks, aligns
them with camera objects to produce BEV annotations, and scores point
detections with a location-similarity kernel.
"""

from .align import (ALIGNED, SUPPLEMENTARY, TRUTH, AlignConfig, Annotation,
                    Association, CameraObject, CfarLine, ClassMeta,
                    ColumnMask, DEFAULT_CLASS_META, FrameInput,
                    adaptive_weight, alignment_cost, annotate_sequence,
                    associate_frame, optimize_ground_plane, plane_objective,
                    supplementary_projection)
from .errors import (CamradError, ConfigError, FormatError,
                     ProjectionDomainError, SceneSpecError)
from .geometry import (CameraModel, CamPoint3, GroundPlane, PixelPoint,
                       RadarPoint, bev_distance, bev_xy, horizon_v,
                       pixel_height, project_c2r, project_r2c)
from .rf_detect import (CfarConfig, DbscanConfig, PeakCluster, RadarPeak,
                        RfImage, cfar_detect, cluster_peaks)
from .scoring import (MatchResult, MetricSet, PointDet, ScoreReport,
                      ScoringConfig, match_frame, ols, score)
from .synth import (NoiseSpec, ObjectSpec, RfGridSpec, SceneSpec, SceneTruth,
                    default_scene, render_scene)

__version__ = "0.1.0"
