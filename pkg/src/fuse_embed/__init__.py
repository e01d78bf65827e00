"""Semi-supervised node embeddings by modularity ascent with label-walk attention."""

from .engine import AblationRow, FuseConfig, RunReport, ablation_suite, init_embedding, run_fuse
from .evaluation import (
    MaskSpec,
    MlpModel,
    Split,
    evaluate,
    generate_mask,
    macro_f1,
    stratified_split,
    structural_features,
    train_mlp,
)
from .graph import (
    Graph,
    LabelSet,
    generate_sbm,
    load_edge_list,
    load_labels,
    mask_labels,
    write_edge_list,
)
from .linalg import RankDeficiencyError, rank_one_update, spmm, thin_qr_orthonormalize
from .objective import (
    GradientBundle,
    grad_modularity_exact,
    grad_modularity_proposed,
    grad_supervised,
    modularity_value,
    supervised_loss,
)
from .propagation import (
    AttentionTable,
    WalkRecord,
    compute_attention,
    grad_semi,
    labeled_random_walks,
    semi_residual,
    write_walk_record,
)

__version__ = "0.1.0"
