# Copyright 2026 The cfcore Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the cfcore counterfactual augmentation library."""

from ._cfcore import (
    Pipeline,
    __version__,
    build_nli_prompt,
    classify_perturbation,
    contrastive_loss,
    format_keyword_list,
    hashed_test_embed,
    label_wording,
    load_config,
    norm_levenshtein,
    self_bleu,
    z_statistics,
)

__all__ = [
    "Pipeline",
    "__version__",
    "build_nli_prompt",
    "classify_perturbation",
    "contrastive_loss",
    "format_keyword_list",
    "hashed_test_embed",
    "label_wording",
    "load_config",
    "norm_levenshtein",
    "self_bleu",
    "z_statistics",
]
