from .aggregate import (
    AggregationResult,
    MessagePassingConfig,
    aggregate,
    join_on_shared_nodes,
    label_new_edges,
    link_by_similarity,
    smooth_embeddings,
)
from .driver import (
    AGGREGATE,
    PARTITION,
    DriverConfig,
    DriverResult,
    LayerDecision,
    build_agent_subgraphs,
    correlation_factor,
    decide,
)
from .partition import (
    CandidatePath,
    PartitionConfig,
    PartitionError,
    ResourceMap,
    match_keyword_to_node,
    partition_for_pairs,
    path_reliability,
    propagate_resource,
    rank_paths,
)

__all__ = [
    "AGGREGATE",
    "PARTITION",
    "AggregationResult",
    "CandidatePath",
    "DriverConfig",
    "DriverResult",
    "LayerDecision",
    "MessagePassingConfig",
    "PartitionConfig",
    "PartitionError",
    "ResourceMap",
    "aggregate",
    "build_agent_subgraphs",
    "correlation_factor",
    "decide",
    "join_on_shared_nodes",
    "label_new_edges",
    "link_by_similarity",
    "match_keyword_to_node",
    "partition_for_pairs",
    "path_reliability",
    "propagate_resource",
    "rank_paths",
    "smooth_embeddings",
]
