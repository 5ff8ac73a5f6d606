#pragma once

#include "infkit/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace infkit {

enum class Activation { Identity, Relu, Tanh, Sigmoid };
enum class LossKind { Mse, CrossEntropy };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);
LossKind loss_from_string(const std::string& name);
std::string to_string(LossKind k);

struct LayerSpec {
  Index in = 0;
  Index out = 0;
  Activation act = Activation::Identity;
  bool bias = true;

  Index weight_count() const { return in * out; }
  Index bias_count() const { return bias ? out : 0; }
  Index param_count() const { return weight_count() + bias_count(); }
};

// Fully connected feed-forward model. The loss attaches to the last layer's
// activations; l2_weight adds (l2/2)*||theta||^2 when a call asks for the
// regularized objective.
struct ModelSpec {
  std::vector<LayerSpec> layers;
  LossKind loss = LossKind::Mse;
  double l2_weight = 0.0;

  Index input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  Index output_dim() const { return layers.empty() ? 0 : layers.back().out; }
  Index param_count() const;
  void validate() const;
};

// Named view into the flat parameter vector. Weights are stored row-major as
// [out, in]; biases as [out]. Offsets are contiguous and cover the vector.
struct LayerMapEntry {
  std::string name;
  Index offset = 0;
  std::vector<Index> shape;

  Index size() const;
};

std::vector<LayerMapEntry> layer_map_for(const ModelSpec& spec);

struct ParamVector {
  Vector values;
  std::vector<LayerMapEntry> layer_map;

  Index size() const { return values.size(); }
  void validate() const;
};

ParamVector zero_params(const ModelSpec& spec);
// Scaled-Gaussian init: each weight ~ N(0, 1/in), biases zero.
ParamVector random_params(const ModelSpec& spec, std::uint64_t seed);

// Row-per-example dataset. labels holds class ids (checked integral for
// cross-entropy) or regression targets; upweight is the removal/perturbation
// weight vector w, zero everywhere by default.
struct LabeledSet {
  Matrix inputs;   // [count, input_dim]
  Vector labels;   // [count]
  Vector upweight; // [count]

  Index size() const { return inputs.rows(); }
  void validate(const ModelSpec& spec) const;
};

LabeledSet subset(const LabeledSet& set, const std::vector<Index>& rows);
LabeledSet drop_rows(const LabeledSet& set, const std::vector<Index>& rows);
LabeledSet replace_rows(const LabeledSet& set, const std::vector<Index>& rows,
                        const LabeledSet& replacements);

// A fixed minibatch identity: sampling the same BatchSample twice yields the
// same rows, which keeps stochastic solver runs reproducible.
struct BatchSample {
  std::vector<Index> rows;

  static BatchSample draw(Index count, Index batch, std::uint64_t seed);
  static BatchSample all(Index count);
};

// --- Core ops. `mask` is a per-example coefficient vector of length
// set.size(); loss/grad/hvp compute sums of mask[i] * l_i, plus the l2 term
// added exactly once when regularized=true (so that, e.g., the regularized
// Hessian equals the unregularized one plus l2 * I, independent of the mask).
// Every op validates shapes and finiteness.

Vector forward(const ModelSpec& spec, const ParamVector& params, VectorRef input);
Matrix forward_batch(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs);

// Activations of every layer for a batch; element 0 is the input block and
// element l+1 the output of layer l.
std::vector<Matrix> layer_activations(const ModelSpec& spec, const ParamVector& params,
                                      const Matrix& inputs);

// Per-example unregularized losses.
Vector example_losses(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set);

double loss_sum(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
                VectorRef mask, bool regularized = false);

struct GradFlags {
  bool empty_mask = false;  // set when mask was identically zero
};

Vector grad(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
            VectorRef mask, bool regularized = false, GradFlags* flags = nullptr);

// Hessian-vector product via the exact forward-over-reverse directional
// derivative of grad; two batched passes, no finite differences.
Vector hvp(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
           VectorRef mask, VectorRef v, bool regularized = false);

// Column-by-column dense Hessian (n hvp calls, symmetrized). Guardrail: n is
// capped because this is only for oracles and desk-scale diagnostics.
Matrix dense_hessian(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
                     VectorRef mask, bool regularized = false, Index cap = 2000);

Vector ones_mask(Index n);

enum class LrSchedule { Constant, Step, Cosine };

LrSchedule lr_schedule_from_string(const std::string& name);
std::string to_string(LrSchedule schedule);

struct TrainConfig {
  double lr = 0.0;  // 0 = auto (1 / estimated curvature)
  int epochs = 60;
  Index batch = 32;  // 0 = full-batch gradient descent
  double momentum = 0.0;
  LrSchedule schedule = LrSchedule::Constant;
  double step_decay = 0.1;    // Step: multiply lr by this...
  int step_every = 20;        // ...every this many epochs
  std::uint64_t seed = 0;     // shuffling stream; init is seeded separately
  bool regularized = true;    // include the l2 term in training
};

struct TrainResult {
  ParamVector params;
  double final_loss = 0.0;       // regularized mean objective at exit
  double final_grad_norm = 0.0;  // full-batch gradient norm at exit
  int epochs_run = 0;
};

// Deterministic minibatch SGD from an explicit init. Diverging loss (non-
// finite or 100x the initial value) raises TrainError with the epoch index.
TrainResult train(const ModelSpec& spec, const ParamVector& init, const LabeledSet& set,
                  const TrainConfig& cfg);

}  // namespace infkit
