"""facedepth: synthetic facial RGB-D dataset generation and depth evaluation.

A deterministic software rasterizer renders head meshes (with blendshape
expressions) into paired RGB and ground-truth metric depth images under a
physically parameterized pinhole camera, writes them as a versioned PNG +
JSONL dataset, and scores predicted depth maps with the standard
monocular-depth metric suite.
"""

__version__ = "0.1.0"

from .errors import (AlignmentError, ConfigError, DepthEncodingError, EmptyMeshError,
                     EvaluationError, FaceDepthError, GeometryError, MeshParseError,
                     ShapeError)
from .mesh import (ExpressionWeights, TriMesh, apply_expression, load_mesh_with_morphs,
                   parse_obj, read_morph_manifest, recompute_normals, serialize_obj,
                   transform_mesh)
from .transforms import RigidTransform
from .scene import (CameraRig, Intrinsics, PointLight, SceneSample, SweepConfig,
                    intrinsics, light_direction, project, sample_scene, unproject)
from .render import (DepthMap, FrameMeta, FramePacket, RgbImage, colorize_depth,
                     composite_background, rasterize, render_frame)
from .dataset_io import (DepthEncoding, FrameRecord, decode_depth16, encode_depth16,
                         read_manifest, write_dataset)
from .metrics import (MetricReport, aggregate_report, align_prediction, compute_metrics,
                      format_report, format_table, valid_mask)
