"""Prompt tuning for frozen graph encoders, aligned to frozen text embeddings."""

from .align import (
    MODE_AIO_HEAD,
    MODE_IMPROVED_HEAD,
    MODE_MORPHER,
    DegenerateEmbeddingError,
    Grads,
    PromptState,
    TrainConfig,
    TrainHistory,
    adam_step,
    backward_all,
    baseline_loss_and_grads,
    candidate_text_vectors,
    contrastive_loss,
    graph_branch,
    init_prompt_state,
    load_prompt_state,
    project,
    save_prompt_state,
    train_baseline,
    train_morpher,
)
from .evaluation import (
    EvalReport,
    count_trainable,
    evaluate_split,
    metrics,
    predict,
    silhouette,
    zero_shot_protocol,
)
from .gnn import (
    ForwardTape,
    FrozenGnn,
    gcn_backward_features,
    gcn_forward,
    init_gnn_random,
    load_gnn_weights,
    normalize_adjacency,
    readout_mean,
    save_gnn_weights,
)
from .graphs import (
    DatasetBundle,
    Graph,
    ZeroShotSpec,
    few_shot_split,
    generate_separable_dataset,
    generate_zero_dataset,
    induce_ego_graph,
    load_dataset,
    make_graph,
    save_dataset,
)
from .prompts import GraphPrompt, PromptedGraph, build_aio, build_improved, init_graph_prompt
from .text import (
    PseudoEncoder,
    TextEmbeddingStore,
    TextPrompt,
    center_normalize_labels,
    init_text_prompt,
    load_token_embeddings,
    prompted_text_embedding,
    pseudo_encode,
    save_token_embeddings,
)

__version__ = "0.1.0"
