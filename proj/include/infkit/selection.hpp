#pragma once

#include "infkit/model.hpp"
#include "infkit/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace infkit {

// How the target parameters J are chosen. "Outputs" ranks a weight by the
// average magnitude of its contribution to its unit's pre-activation over a
// probe set (|w_ij * x_j| averaged over probes; |b_i| for biases).
// "Gradients" ranks by the magnitude of the probe-averaged loss gradient.
enum class CriterionKind {
  HighestOutputs,
  LowestOutputs,
  HighestGradients,
  LowestGradients,
  Random,
  Full,
};

CriterionKind criterion_from_string(const std::string& name);
std::string to_string(CriterionKind kind);

struct SelectionCriterion {
  CriterionKind kind = CriterionKind::Full;
  double ratio = 1.0;      // modification ratio: fraction kept per tensor
  std::uint64_t seed = 0;  // used by the random criterion
};

// Per-parameter importance scores for the magnitude criteria.
Vector selection_scores(const ModelSpec& spec, const ParamVector& params, const LabeledSet& probes,
                        CriterionKind kind);

// Applies a criterion given precomputed scores (ignored for random/full).
// Quotas are proportional per tensor: round(ratio * size), at least one
// parameter per tensor; ties break toward the lower flat index.
IndexSet select_indices(const std::vector<LayerMapEntry>& layer_map, Index param_count,
                        const SelectionCriterion& criterion, const Vector* scores);

// Convenience: score against the probe set, then select.
IndexSet select_parameters(const ModelSpec& spec, const ParamVector& params,
                           const LabeledSet& probes, const SelectionCriterion& criterion);

}  // namespace infkit
