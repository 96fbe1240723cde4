"""Deterministic executor and module-wise faithfulness metrics for
module-network programs over two-image scenes."""

from nmneval._core import (
    BoundingBox,
    ExecConfig,
    ExecutionTrace,
    GroundingProvider,
    GroundingQuery,
    OracleProvider,
    Program,
    Scene,
    SceneSpec,
    SyntheticExample,
    SyntheticScene,
    ValidationError,
    bool_and,
    bool_or,
    compare,
    discretize,
    execute,
    gaussian_difference,
    gaussian_division,
    gaussian_sum,
    generate_example,
    generate_program,
    generate_scene,
    iou,
    linearize,
    measure_faithfulness,
    parse,
    parse_typed,
    permutation_test,
    text_instance_score,
    upper_bound_faithfulness,
    value_dist_add,
    value_dist_subtract,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "ExecConfig",
    "ExecutionTrace",
    "GroundingProvider",
    "GroundingQuery",
    "OracleProvider",
    "Program",
    "Scene",
    "SceneSpec",
    "SyntheticExample",
    "SyntheticScene",
    "ValidationError",
    "bool_and",
    "bool_or",
    "compare",
    "discretize",
    "execute",
    "gaussian_difference",
    "gaussian_division",
    "gaussian_sum",
    "generate_example",
    "generate_program",
    "generate_scene",
    "iou",
    "linearize",
    "measure_faithfulness",
    "parse",
    "parse_typed",
    "permutation_test",
    "text_instance_score",
    "upper_bound_faithfulness",
    "value_dist_add",
    "value_dist_subtract",
]
