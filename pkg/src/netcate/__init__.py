"""netcate: benchmark for CATE estimation under network confounding.

The package is organized as a small numpy library:

- :mod:`netcate.nn` -- dense models (MLP/GCN), losses, backprop, Adam
- :mod:`netcate.graphs` -- graph type, random generators, file ingestion
- :mod:`netcate.dgp` -- synthetic node-level treatment/outcome generation
- :mod:`netcate.estimators` -- the five CATE pipelines
- :mod:`netcate.stats` -- metrics, paired tests, multi-seed summaries
- :mod:`netcate.bench` -- config-driven experiment runner and exports
"""

__version__ = "0.1.0"

from .dgp import DgpConfig, NodeDataset, generate_dataset, star_example  # noqa: E402
from .estimators import (  # noqa: E402
    ALL_KINDS,
    CateEstimate,
    EstimatorKind,
    TrainConfig,
    estimate,
    estimate_rlearner,
    estimate_tlearner,
)
from .graphs import (  # noqa: E402
    Graph,
    GraphSpec,
    degree_partition,
    generate_ba,
    generate_er,
    generate_sbm,
    load_graph_files,
    normalized_adjacency,
    write_graph_files,
)
from .stats import (  # noqa: E402
    ExperimentSummary,
    SeedResult,
    cate_mse,
    hub_periphery_errors,
    paired_t_test,
    summarize,
    two_model_test,
)
from .bench import (  # noqa: E402
    ExperimentConfig,
    RunArtifacts,
    apply_override,
    emit_config,
    export_embeddings,
    parse_config,
    render_summary,
    run_experiment,
    sweep,
)

__all__ = [
    "__version__",
    "DgpConfig", "NodeDataset", "generate_dataset", "star_example",
    "ALL_KINDS", "CateEstimate", "EstimatorKind", "TrainConfig",
    "estimate", "estimate_rlearner", "estimate_tlearner",
    "Graph", "GraphSpec", "degree_partition", "generate_ba", "generate_er",
    "generate_sbm", "load_graph_files", "normalized_adjacency", "write_graph_files",
    "ExperimentSummary", "SeedResult", "cate_mse", "hub_periphery_errors",
    "paired_t_test", "summarize", "two_model_test",
    "ExperimentConfig", "RunArtifacts", "apply_override", "emit_config",
    "export_embeddings", "parse_config", "render_summary", "run_experiment", "sweep",
]
