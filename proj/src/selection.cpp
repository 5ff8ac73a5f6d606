#include "infkit/selection.hpp"

#include "infkit/rng.hpp"

#include <algorithm>
#include <cmath>

namespace infkit {

CriterionKind criterion_from_string(const std::string& name) {
  if (name == "highest-outputs" || name == "highest-out") return CriterionKind::HighestOutputs;
  if (name == "lowest-outputs" || name == "lowest-out") return CriterionKind::LowestOutputs;
  if (name == "highest-gradients" || name == "highest-grad") return CriterionKind::HighestGradients;
  if (name == "lowest-gradients" || name == "lowest-grad") return CriterionKind::LowestGradients;
  if (name == "random") return CriterionKind::Random;
  if (name == "full") return CriterionKind::Full;
  throw ConfigError("unknown selection criterion '" + name + "'");
}

std::string to_string(CriterionKind kind) {
  switch (kind) {
    case CriterionKind::HighestOutputs: return "highest-outputs";
    case CriterionKind::LowestOutputs: return "lowest-outputs";
    case CriterionKind::HighestGradients: return "highest-gradients";
    case CriterionKind::LowestGradients: return "lowest-gradients";
    case CriterionKind::Random: return "random";
    case CriterionKind::Full: return "full";
  }
  return "?";
}

Vector selection_scores(const ModelSpec& spec, const ParamVector& params, const LabeledSet& probes,
                        CriterionKind kind) {
  spec.validate();
  params.validate();
  probes.validate(spec);
  if (probes.size() == 0) throw ShapeError("selection needs a non-empty probe set");

  switch (kind) {
    case CriterionKind::HighestGradients:
    case CriterionKind::LowestGradients: {
      const Vector mean = Vector::Constant(probes.size(), 1.0 / static_cast<double>(probes.size()));
      return grad(spec, params, probes, mean).cwiseAbs();
    }
    case CriterionKind::HighestOutputs:
    case CriterionKind::LowestOutputs: {
      const std::vector<Matrix> acts = layer_activations(spec, params, probes.inputs);
      Vector scores(params.size());
      Index map_pos = 0;
      for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        // Mean absolute input to this layer over the probe set.
        const Vector mean_abs = acts[l].cwiseAbs().colwise().mean().transpose();
        const LayerMapEntry& we = params.layer_map[static_cast<std::size_t>(map_pos++)];
        Eigen::Map<const RowMatrix> W(params.values.data() + we.offset, we.shape[0], we.shape[1]);
        Eigen::Map<RowMatrix> S(scores.data() + we.offset, we.shape[0], we.shape[1]);
        S = (W.cwiseAbs().array().rowwise() * mean_abs.transpose().array()).matrix();
        if (spec.layers[l].bias) {
          const LayerMapEntry& be = params.layer_map[static_cast<std::size_t>(map_pos++)];
          scores.segment(be.offset, be.shape[0]) =
              params.values.segment(be.offset, be.shape[0]).cwiseAbs();
        }
      }
      return scores;
    }
    case CriterionKind::Random:
    case CriterionKind::Full:
      return Vector::Zero(params.size());
  }
  throw DomainError("unknown criterion");
}

IndexSet select_indices(const std::vector<LayerMapEntry>& layer_map, Index param_count,
                        const SelectionCriterion& criterion, const Vector* scores) {
  if (criterion.ratio <= 0.0 || criterion.ratio > 1.0) {
    throw DomainError("modification ratio must lie in (0, 1]");
  }
  const bool scored = criterion.kind != CriterionKind::Random && criterion.kind != CriterionKind::Full;
  if (scored) {
    if (scores == nullptr) throw ShapeError("score-based criterion needs scores");
    if (scores->size() != param_count) throw ShapeError("score length does not match parameters");
  }

  IndexSet J;
  J.ratio = criterion.kind == CriterionKind::Full ? 1.0 : criterion.ratio;
  if (criterion.kind == CriterionKind::Full) {
    return IndexSet::full(param_count);
  }

  const bool lowest = criterion.kind == CriterionKind::LowestOutputs ||
                      criterion.kind == CriterionKind::LowestGradients;
  for (const LayerMapEntry& e : layer_map) {
    const Index size = e.size();
    Index quota = static_cast<Index>(std::llround(criterion.ratio * static_cast<double>(size)));
    quota = std::clamp<Index>(quota, 1, size);

    std::vector<Index> picked;
    if (criterion.kind == CriterionKind::Random) {
      rng::Stream stream(criterion.seed, "select-" + e.name);
      picked = stream.sample(size, quota);
    } else {
      std::vector<Index> order(static_cast<std::size_t>(size));
      for (Index i = 0; i < size; ++i) order[static_cast<std::size_t>(i)] = i;
      // stable sort keeps the lower flat index first among ties
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double sa = (*scores)[e.offset + a];
        const double sb = (*scores)[e.offset + b];
        return lowest ? sa < sb : sa > sb;
      });
      picked.assign(order.begin(), order.begin() + quota);
    }
    std::sort(picked.begin(), picked.end());
    for (Index i : picked) J.indices.push_back(e.offset + i);
  }
  J.validate(param_count);
  return J;
}

IndexSet select_parameters(const ModelSpec& spec, const ParamVector& params,
                           const LabeledSet& probes, const SelectionCriterion& criterion) {
  if (criterion.kind == CriterionKind::Full) {
    return IndexSet::full(params.size());
  }
  Vector scores;
  const Vector* scores_ptr = nullptr;
  if (criterion.kind != CriterionKind::Random) {
    scores = selection_scores(spec, params, probes, criterion.kind);
    scores_ptr = &scores;
  }
  return select_indices(params.layer_map, params.size(), criterion, scores_ptr);
}

}  // namespace infkit
