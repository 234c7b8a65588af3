"""chronolink: time-segmented entity resolution with continual cluster adaptation.

The package links emerging mentions in a rolling document stream onto a
knowledge base whose entities keep evolving.  Mentions arrive in
two-month segments; dual-encoder affinities connect each mention to
candidate entities and to neighbouring mentions, a constrained greedy
clustering assigns at most one entity per cluster, and the cluster
membership feeds back into the next segment's entity representations.
Retrieval-augmented QA utilities and a synthetic drift benchmark sit on
top of the same primitives.
"""

from .affinity import (
    DEFAULT_BLEND,
    DEFAULT_MEMBER_CAP,
    ClusterState,
    affinity_to_weight,
    cluster_representation,
    entity_mention_affinity,
    mention_mention_affinity,
    sample_cluster_mentions,
)
from .corpus import (
    CorpusSnapshot,
    EntityCatalog,
    EntityRecord,
    MentionRecord,
    QAPair,
    SegmentSpec,
    TimeSegment,
    build_timeline,
    load_corpus,
    load_kb,
    load_qa,
    segment_for_date,
    validate_mention_spans,
    write_corpus,
)
from .embeddings import (
    EmbeddingStore,
    VectorRecord,
    read_embeddings_binary,
    read_embeddings_jsonl,
    store_from_records,
    write_embeddings_binary,
    write_embeddings_jsonl,
)
from .errors import (
    ChronolinkError,
    ConfigError,
    CorpusError,
    EmbeddingError,
    GraphError,
    MetricsError,
    MissingEmbeddingError,
    RagError,
    TokenBudgetError,
    TrainingError,
)
from .graph import (
    AffinityGraph,
    AffinityNode,
    Cluster,
    Partition,
    WeightedEdge,
    build_batch_graph,
    build_inference_graph,
    dump_graph,
    dump_partition,
    entity_node,
    mention_node,
    prune_and_cluster,
    rank_candidates,
    resolve_segment,
)
from .metrics import (
    MetricsReport,
    PredictionRecord,
    bin_by_jaccard,
    build_report,
    emit_report,
    first_sentence,
    jaccard_bin,
    jaccard_char,
    linking_accuracy,
    load_report,
    normalize_answer,
    qa_f1,
    recall_at_n,
)
from .rag import (
    ClientConfig,
    CotResult,
    DocumentChunk,
    GoldEchoClient,
    HashingEmbedder,
    HttpGenerationClient,
    QAOutcome,
    VectorIndex,
    VARIANTS,
    build_prompt,
    chunk_documents,
    join_context,
    load_template,
    parse_qa_gen,
    read_qa_predictions,
    retrieve,
    run_cot,
    run_qa,
    write_qa_predictions,
)
from .synth import (
    SynthConfig,
    aggregate_benchmark,
    generate_benchmark,
    run_benchmark,
    write_benchmark_report,
)
from .tokens import TokenSequence, entity_tokens, mention_tokens
from .training import (
    ContinualRunResult,
    LabeledEdge,
    ParameterSet,
    TrainerConfig,
    TrainResult,
    batch_loss,
    loss_gradient,
    negative_edges,
    positive_edges,
    run_continual,
    train_segment,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
