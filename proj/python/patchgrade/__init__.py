# Copyright (C) 2026 The patchgrade Authors
# SPDX-License-Identifier: Apache-2.0
"""Few-shot patch-embedding anomaly grading."""

from ._core import *  # noqa: F401,F403
from ._core import (
    Error,
    RunConfig,
    anomaly_score,
    auc_grade4,
    bce_patch_loss,
    extract_features,
    generate_synthetic,
    pair_score,
    pairwise_baseline,
    patch_embedding,
    run_pipeline,
    select_candidates,
    srcc,
)

__version__ = "0.1.0"
