"""Parts-based shape warping for one-shot placement transfer."""

from .geom import (
    NeighborIndex,
    PointCloud,
    RigidTransform,
    adjacency_label_values,
    chamfer,
    labeled_chamfer,
    load_cloud,
    rotation_about_axis,
    rotation_geodesic,
    save_cloud,
    symmetric_chamfer,
    z_label_values,
)
from .registration import (
    CpdConfig,
    DisplacementField,
    IcpConfig,
    IcpResult,
    cpd_nonrigid,
    icp,
    kabsch,
)
from .shapemodel import (
    CanonicalPartModel,
    InferenceConfig,
    InferenceError,
    InferenceResult,
    infer,
    load_model,
    reconstruct,
    save_model,
    select_canonical,
    train_part_model,
    warp_point_indices,
)
from .transfer import (
    Demonstration,
    DemoContext,
    InteractionPointSet,
    PartDecomposedObject,
    PipelineConfig,
    RelationSet,
    TransferResult,
    align_pair,
    extract_interaction_points,
    fit_parts,
    label_parts,
    load_demo,
    merge_object,
    optimize_placement,
    process_demonstration,
    save_demo,
    select_relevant_relations,
    transfer_points,
    transfer_skill,
    whole_object_baseline,
)
from .synth import (
    AnalyticSdf,
    CameraView,
    CorrespondenceMap,
    ObjectFeatures,
    ParametricObjectSpec,
    default_spec,
    features,
    generate,
    generate_demo,
    generate_demo_scene,
    goal_transform,
    partial_view,
    penetration_depth,
    sample_spec,
    task_predicate,
)
from .evaluation import (
    METHOD_PARTS,
    METHOD_WHOLE,
    ExperimentConfig,
    ExperimentReport,
    TrialRecord,
    check_success,
    draw_test_pair,
    keypoint_transfer_error,
    keypoint_transfer_study,
    run_experiment,
    train_category_models,
    train_models_from_objects,
    train_whole_models,
    write_report,
)
from .cli import RunConfig, config_from_dict, config_to_dict, load_run_config, main

__version__ = "0.1.0"
