#include "infkit/model.hpp"

#include "infkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace infkit {

namespace {

using Eigen::Map;

Map<const RowMatrix> weight_view(const Vector& values, const LayerMapEntry& e) {
  return {values.data() + e.offset, e.shape[0], e.shape[1]};
}

Matrix act_apply(Activation a, const Matrix& Z) {
  switch (a) {
    case Activation::Identity: return Z;
    case Activation::Relu: return Z.cwiseMax(0.0);
    case Activation::Tanh: return Z.array().tanh().matrix();
    case Activation::Sigmoid: return (1.0 / (1.0 + (-Z.array()).exp())).matrix();
  }
  throw DomainError("unknown activation");
}

// First derivative of the activation expressed through its value a = act(z).
Matrix act_prime(Activation a, const Matrix& A) {
  switch (a) {
    case Activation::Identity: return Matrix::Ones(A.rows(), A.cols());
    case Activation::Relu: return (A.array() > 0.0).cast<Scalar>().matrix();
    case Activation::Tanh: return (1.0 - A.array().square()).matrix();
    case Activation::Sigmoid: return (A.array() * (1.0 - A.array())).matrix();
  }
  throw DomainError("unknown activation");
}

// Whether act''(z) is identically zero.
bool act_curved(Activation a) {
  return a == Activation::Tanh || a == Activation::Sigmoid;
}

// act''(z) / act'(z) through the value a = act(z); the ratio stays finite
// even where act' underflows (saturated tanh/sigmoid), unlike the quotient.
Matrix act_ratio(Activation a, const Matrix& A) {
  switch (a) {
    case Activation::Tanh: return -2.0 * A;
    case Activation::Sigmoid: return (1.0 - 2.0 * A.array()).matrix();
    default: return Matrix::Zero(A.rows(), A.cols());
  }
}

// Activations of every layer for a whole batch; A[0] is the input block.
std::vector<Matrix> forward_pass(const ModelSpec& spec, const ParamVector& params,
                                 const Matrix& X) {
  std::vector<Matrix> A;
  A.reserve(spec.layers.size() + 1);
  A.push_back(X);
  Index map_pos = 0;
  for (const LayerSpec& layer : spec.layers) {
    const auto W = weight_view(params.values, params.layer_map[map_pos++]);
    Matrix Z = A.back() * W.transpose();
    if (layer.bias) {
      const LayerMapEntry& be = params.layer_map[map_pos++];
      Z.rowwise() += params.values.segment(be.offset, be.shape[0]).transpose();
    }
    A.push_back(act_apply(layer.act, Z));
  }
  return A;
}

// Class targets as a one-hot matrix.
Matrix one_hot(const Vector& labels, Index classes) {
  Matrix Y = Matrix::Zero(labels.size(), classes);
  for (Index i = 0; i < labels.size(); ++i) {
    Y(i, static_cast<Index>(labels[i])) = 1.0;
  }
  return Y;
}

// Target block matching the loss layout: regression targets for 1-d MSE,
// one-hot rows otherwise.
Matrix target_matrix(const ModelSpec& spec, const LabeledSet& set) {
  if (spec.loss == LossKind::Mse && spec.output_dim() == 1) {
    return set.labels;
  }
  return one_hot(set.labels, spec.output_dim());
}

Matrix row_softmax(const Matrix& A) {
  Matrix P = (A.colwise() - A.rowwise().maxCoeff());
  P = P.array().exp().matrix();
  const Vector sums = P.rowwise().sum();
  return P.array().colwise() / sums.array();
}

Vector loss_rows(const ModelSpec& spec, const Matrix& A_last, const Matrix& Y) {
  if (spec.loss == LossKind::Mse) {
    return (A_last - Y).rowwise().squaredNorm();
  }
  // log-sum-exp(a) - a_y, stabilized by the row max.
  const Vector mx = A_last.rowwise().maxCoeff();
  const Vector lse =
      ((A_last.colwise() - mx).array().exp().rowwise().sum().log()).matrix() + mx;
  return lse - (A_last.cwiseProduct(Y)).rowwise().sum();
}

// dL/dA for the masked sum of example losses.
Matrix loss_grad_rows(const ModelSpec& spec, const Matrix& A_last, const Matrix& Y,
                      VectorRef mask) {
  Matrix G;
  if (spec.loss == LossKind::Mse) {
    G = 2.0 * (A_last - Y);
  } else {
    G = row_softmax(A_last) - Y;
  }
  return G.array().colwise() * mask.array();
}

// Directional derivative of loss_grad_rows along R_A (the R-operator applied
// to the last activations).
Matrix loss_grad_rows_tangent(const ModelSpec& spec, const Matrix& A_last, const Matrix& R_A,
                              VectorRef mask) {
  Matrix R_G;
  if (spec.loss == LossKind::Mse) {
    R_G = 2.0 * R_A;
  } else {
    const Matrix P = row_softmax(A_last);
    const Matrix PR = P.cwiseProduct(R_A);
    R_G = PR - (P.array().colwise() * PR.rowwise().sum().array()).matrix();
  }
  return R_G.array().colwise() * mask.array();
}

void check_mask(const LabeledSet& set, VectorRef mask) {
  if (mask.size() != set.size()) {
    throw ShapeError("mask length " + std::to_string(mask.size()) +
                     " does not match example count " + std::to_string(set.size()));
  }
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::Identity;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

LossKind loss_from_string(const std::string& name) {
  if (name == "mse") return LossKind::Mse;
  if (name == "cross_entropy" || name == "ce") return LossKind::CrossEntropy;
  throw ConfigError("unknown loss '" + name + "'");
}

std::string to_string(LossKind k) {
  return k == LossKind::Mse ? "mse" : "cross_entropy";
}

LrSchedule lr_schedule_from_string(const std::string& name) {
  if (name == "constant") return LrSchedule::Constant;
  if (name == "step") return LrSchedule::Step;
  if (name == "cosine") return LrSchedule::Cosine;
  throw ConfigError("unknown lr schedule '" + name + "'");
}

std::string to_string(LrSchedule schedule) {
  switch (schedule) {
    case LrSchedule::Constant: return "constant";
    case LrSchedule::Step: return "step";
    case LrSchedule::Cosine: return "cosine";
  }
  return "?";
}

Index ModelSpec::param_count() const {
  Index n = 0;
  for (const LayerSpec& l : layers) n += l.param_count();
  return n;
}

void ModelSpec::validate() const {
  if (layers.empty()) throw ShapeError("model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].in <= 0 || layers[i].out <= 0) {
      throw ShapeError("layer " + std::to_string(i) + " has non-positive dimensions");
    }
    if (i > 0 && layers[i].in != layers[i - 1].out) {
      throw ShapeError("layer " + std::to_string(i) + " input dim does not match previous output");
    }
  }
  if (loss == LossKind::CrossEntropy && output_dim() < 2) {
    throw ShapeError("cross-entropy needs at least 2 outputs");
  }
  if (l2_weight < 0) throw DomainError("l2_weight must be non-negative");
}

Index LayerMapEntry::size() const {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::vector<LayerMapEntry> layer_map_for(const ModelSpec& spec) {
  std::vector<LayerMapEntry> map;
  Index offset = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string base = "dense" + std::to_string(i);
    map.push_back({base + ".weight", offset, {l.out, l.in}});
    offset += l.weight_count();
    if (l.bias) {
      map.push_back({base + ".bias", offset, {l.out}});
      offset += l.out;
    }
  }
  return map;
}

void ParamVector::validate() const {
  Index offset = 0;
  for (const LayerMapEntry& e : layer_map) {
    if (e.offset != offset) throw ShapeError("layer map entry '" + e.name + "' is not contiguous");
    if (e.shape.empty() || e.shape.size() > 2) {
      throw ShapeError("layer map entry '" + e.name + "' has unsupported rank");
    }
    offset += e.size();
  }
  if (offset != values.size()) {
    throw ShapeError("layer map covers " + std::to_string(offset) + " of " +
                     std::to_string(values.size()) + " parameters");
  }
  if (!values.allFinite()) throw NumericError("parameter vector has non-finite entries");
}

ParamVector zero_params(const ModelSpec& spec) {
  spec.validate();
  ParamVector p;
  p.values = Vector::Zero(spec.param_count());
  p.layer_map = layer_map_for(spec);
  return p;
}

ParamVector random_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector p = zero_params(spec);
  rng::Stream stream(seed, "init");
  Index map_pos = 0;
  for (const LayerSpec& l : spec.layers) {
    const LayerMapEntry& we = p.layer_map[map_pos++];
    const double scale = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (Index i = 0; i < we.size(); ++i) {
      p.values[we.offset + i] = scale * stream.normal();
    }
    if (l.bias) ++map_pos;  // biases stay zero
  }
  return p;
}

void LabeledSet::validate(const ModelSpec& spec) const {
  if (inputs.cols() != spec.input_dim()) {
    throw ShapeError("input dim " + std::to_string(inputs.cols()) + " does not match model input " +
                     std::to_string(spec.input_dim()));
  }
  if (labels.size() != inputs.rows() || upweight.size() != inputs.rows()) {
    throw ShapeError("labels/upweight length does not match example count");
  }
  if (!inputs.allFinite() || !labels.allFinite() || !upweight.allFinite()) {
    throw NumericError("dataset contains non-finite values");
  }
  const bool classification = spec.loss == LossKind::CrossEntropy || spec.output_dim() > 1;
  if (classification) {
    for (Index i = 0; i < labels.size(); ++i) {
      if (labels[i] != std::floor(labels[i]) || labels[i] < 0 || labels[i] >= spec.output_dim()) {
        throw DomainError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                          " is not a class id in [0, " + std::to_string(spec.output_dim()) + ")");
      }
    }
  }
}

LabeledSet subset(const LabeledSet& set, const std::vector<Index>& rows) {
  LabeledSet out;
  out.inputs.resize(static_cast<Index>(rows.size()), set.inputs.cols());
  out.labels.resize(static_cast<Index>(rows.size()));
  out.upweight.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= set.size()) throw ShapeError("subset row out of range");
    out.inputs.row(static_cast<Index>(i)) = set.inputs.row(rows[i]);
    out.labels[static_cast<Index>(i)] = set.labels[rows[i]];
    out.upweight[static_cast<Index>(i)] = set.upweight[rows[i]];
  }
  return out;
}

LabeledSet drop_rows(const LabeledSet& set, const std::vector<Index>& rows) {
  const std::set<Index> dropped(rows.begin(), rows.end());
  std::vector<Index> keep;
  keep.reserve(static_cast<std::size_t>(set.size()));
  for (Index i = 0; i < set.size(); ++i) {
    if (!dropped.count(i)) keep.push_back(i);
  }
  return subset(set, keep);
}

LabeledSet replace_rows(const LabeledSet& set, const std::vector<Index>& rows,
                        const LabeledSet& replacements) {
  if (static_cast<Index>(rows.size()) != replacements.size()) {
    throw ShapeError("replacement count does not match row count");
  }
  LabeledSet out = set;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(rows[i]) = replacements.inputs.row(static_cast<Index>(i));
    out.labels[rows[i]] = replacements.labels[static_cast<Index>(i)];
    out.upweight[rows[i]] = replacements.upweight[static_cast<Index>(i)];
  }
  return out;
}

BatchSample BatchSample::draw(Index count, Index batch, std::uint64_t seed) {
  if (batch <= 0 || batch >= count) return all(count);
  rng::Stream stream(seed, "batch-sample");
  BatchSample s;
  s.rows = stream.sample(count, batch);
  std::sort(s.rows.begin(), s.rows.end());
  return s;
}

BatchSample BatchSample::all(Index count) {
  BatchSample s;
  s.rows.resize(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) s.rows[static_cast<std::size_t>(i)] = i;
  return s;
}

Vector forward(const ModelSpec& spec, const ParamVector& params, VectorRef input) {
  return forward_batch(spec, params, input.transpose()).row(0);
}

Matrix forward_batch(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs) {
  if (inputs.cols() != spec.input_dim()) {
    throw ShapeError("forward: input dim does not match model");
  }
  return forward_pass(spec, params, inputs).back();
}

std::vector<Matrix> layer_activations(const ModelSpec& spec, const ParamVector& params,
                                      const Matrix& inputs) {
  if (inputs.cols() != spec.input_dim()) {
    throw ShapeError("layer_activations: input dim does not match model");
  }
  return forward_pass(spec, params, inputs);
}

Vector example_losses(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set) {
  const Matrix A_last = forward_batch(spec, params, set.inputs);
  return loss_rows(spec, A_last, target_matrix(spec, set));
}

double loss_sum(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
                VectorRef mask, bool regularized) {
  check_mask(set, mask);
  double value = example_losses(spec, params, set).dot(mask);
  if (regularized && spec.l2_weight > 0) {
    value += 0.5 * spec.l2_weight * params.values.squaredNorm();
  }
  return value;
}

Vector grad(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
            VectorRef mask, bool regularized, GradFlags* flags) {
  check_mask(set, mask);
  if (flags) flags->empty_mask = (mask.size() == 0 || mask.cwiseAbs().maxCoeff() == 0.0);

  const std::vector<Matrix> A = forward_pass(spec, params, set.inputs);
  const Index L = static_cast<Index>(spec.layers.size());
  Vector g = Vector::Zero(params.size());

  Matrix D;  // dL/dZ of the current layer
  {
    const Matrix G = loss_grad_rows(spec, A.back(), target_matrix(spec, set), mask);
    D = G.cwiseProduct(act_prime(spec.layers.back().act, A.back()));
  }
  Index map_pos = static_cast<Index>(params.layer_map.size());
  for (Index l = L - 1; l >= 0; --l) {
    const LayerSpec& layer = spec.layers[static_cast<std::size_t>(l)];
    if (layer.bias) {
      const LayerMapEntry& be = params.layer_map[--map_pos];
      g.segment(be.offset, be.shape[0]) = D.colwise().sum().transpose();
    }
    const LayerMapEntry& we = params.layer_map[--map_pos];
    Map<RowMatrix> dW(g.data() + we.offset, we.shape[0], we.shape[1]);
    dW = D.transpose() * A[static_cast<std::size_t>(l)];
    if (l > 0) {
      const auto W = weight_view(params.values, we);
      D = (D * W).cwiseProduct(
          act_prime(spec.layers[static_cast<std::size_t>(l - 1)].act, A[static_cast<std::size_t>(l)]));
    }
  }
  if (regularized && spec.l2_weight > 0) g += spec.l2_weight * params.values;
  if (!g.allFinite()) throw NumericError("grad produced non-finite values");
  return g;
}

Vector hvp(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
           VectorRef mask, VectorRef v, bool regularized) {
  check_mask(set, mask);
  if (v.size() != params.size()) {
    throw ShapeError("hvp: direction length " + std::to_string(v.size()) +
                     " does not match parameter count " + std::to_string(params.size()));
  }

  const Index L = static_cast<Index>(spec.layers.size());
  const std::vector<Matrix> A = forward_pass(spec, params, set.inputs);

  // Tangent forward sweep: R_A[l] is the directional derivative of A[l]
  // along the parameter direction v.
  std::vector<Matrix> R_A(static_cast<std::size_t>(L) + 1);
  std::vector<Matrix> prime(static_cast<std::size_t>(L));  // act'(Z_l), reused backward
  R_A[0] = Matrix::Zero(set.inputs.rows(), set.inputs.cols());
  {
    Index map_pos = 0;
    for (Index l = 0; l < L; ++l) {
      const LayerSpec& layer = spec.layers[static_cast<std::size_t>(l)];
      const LayerMapEntry& we = params.layer_map[map_pos++];
      const auto W = weight_view(params.values, we);
      const Map<const RowMatrix> V(v.data() + we.offset, we.shape[0], we.shape[1]);
      Matrix R_Z = A[static_cast<std::size_t>(l)] * V.transpose() +
                   R_A[static_cast<std::size_t>(l)] * W.transpose();
      if (layer.bias) {
        const LayerMapEntry& be = params.layer_map[map_pos++];
        R_Z.rowwise() += v.segment(be.offset, be.shape[0]).transpose();
      }
      prime[static_cast<std::size_t>(l)] = act_prime(layer.act, A[static_cast<std::size_t>(l) + 1]);
      R_A[static_cast<std::size_t>(l) + 1] = prime[static_cast<std::size_t>(l)].cwiseProduct(R_Z);
    }
  }

  // Backward sweep carries both D = dL/dZ and its directional derivative.
  // The curvature term act''(Z) .* R_Z .* G is computed as ratio .* R_A .* G
  // with ratio = act''/act', since R_A = act' .* R_Z.
  const Matrix Y = target_matrix(spec, set);
  Matrix D;    // dL/dZ
  Matrix R_D;  // R{dL/dZ}
  {
    const Matrix G = loss_grad_rows(spec, A.back(), Y, mask);
    const Matrix R_G = loss_grad_rows_tangent(spec, A.back(), R_A.back(), mask);
    const Matrix& pr = prime[static_cast<std::size_t>(L - 1)];
    const Activation act = spec.layers.back().act;
    D = G.cwiseProduct(pr);
    R_D = pr.cwiseProduct(R_G);
    if (act_curved(act)) {
      R_D += act_ratio(act, A.back()).cwiseProduct(R_A.back()).cwiseProduct(G);
    }
  }

  Vector result = Vector::Zero(params.size());
  Index map_pos = static_cast<Index>(params.layer_map.size());
  for (Index l = L - 1; l >= 0; --l) {
    const LayerSpec& layer = spec.layers[static_cast<std::size_t>(l)];
    if (layer.bias) {
      const LayerMapEntry& be = params.layer_map[--map_pos];
      result.segment(be.offset, be.shape[0]) = R_D.colwise().sum().transpose();
      if (!result.segment(be.offset, be.shape[0]).allFinite()) {
        throw NumericError("hvp produced non-finite values in " + be.name);
      }
    }
    const LayerMapEntry& we = params.layer_map[--map_pos];
    Map<RowMatrix> HW(result.data() + we.offset, we.shape[0], we.shape[1]);
    HW = R_D.transpose() * A[static_cast<std::size_t>(l)] +
         D.transpose() * R_A[static_cast<std::size_t>(l)];
    if (!result.segment(we.offset, we.size()).allFinite()) {
      throw NumericError("hvp produced non-finite values in " + we.name);
    }
    if (l > 0) {
      const auto W = weight_view(params.values, we);
      const Map<const RowMatrix> V(v.data() + we.offset, we.shape[0], we.shape[1]);
      const Matrix back = D * W;  // dL/dA_{l-1}
      const Matrix R_back = R_D * W + D * V;
      const Activation act = spec.layers[static_cast<std::size_t>(l - 1)].act;
      const Matrix& pr = prime[static_cast<std::size_t>(l - 1)];
      D = back.cwiseProduct(pr);
      R_D = pr.cwiseProduct(R_back);
      if (act_curved(act)) {
        R_D += act_ratio(act, A[static_cast<std::size_t>(l)])
                   .cwiseProduct(R_A[static_cast<std::size_t>(l)])
                   .cwiseProduct(back);
      }
    }
  }
  if (regularized && spec.l2_weight > 0) result += spec.l2_weight * v;
  return result;
}

Matrix dense_hessian(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
                     VectorRef mask, bool regularized, Index cap) {
  const Index n = params.size();
  if (n > cap) {
    throw DomainError("dense_hessian: " + std::to_string(n) + " parameters exceed the cap of " +
                      std::to_string(cap));
  }
  Matrix H(n, n);
  Vector e = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    H.col(j) = hvp(spec, params, set, mask, e, regularized);
    e[j] = 0.0;
  }
  return 0.5 * (H + H.transpose());
}

Vector ones_mask(Index n) { return Vector::Ones(n); }

namespace {

double schedule_factor(const TrainConfig& cfg, int epoch) {
  switch (cfg.schedule) {
    case LrSchedule::Constant: return 1.0;
    case LrSchedule::Step:
      return std::pow(cfg.step_decay, epoch / std::max(1, cfg.step_every));
    case LrSchedule::Cosine:
      return 0.5 * (1.0 + std::cos(M_PI * epoch / std::max(1, cfg.epochs)));
  }
  return 1.0;
}

// Largest-curvature estimate by power iteration on the mean-loss Hessian,
// used for the automatic learning rate.
double curvature_estimate(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set) {
  const Vector mask = Vector::Constant(set.size(), 1.0 / static_cast<double>(set.size()));
  rng::Stream stream(1, "auto-lr");
  Vector v = stream.normal_vector(params.size());
  v.normalize();
  double rho = 1.0;
  for (int it = 0; it < 20; ++it) {
    Vector Hv = hvp(spec, params, set, mask, v, true);
    const double norm = Hv.norm();
    if (norm == 0 || !Hv.allFinite()) break;
    rho = norm;
    v = Hv / norm;
  }
  return rho;
}

}  // namespace

TrainResult train(const ModelSpec& spec, const ParamVector& init, const LabeledSet& set,
                  const TrainConfig& cfg) {
  spec.validate();
  init.validate();
  set.validate(spec);
  if (set.size() == 0) throw ShapeError("train: empty dataset");
  if (cfg.epochs < 0 || cfg.lr < 0) throw DomainError("train: negative epochs or lr");

  const Index N = set.size();
  const Index batch = (cfg.batch <= 0 || cfg.batch > N) ? N : cfg.batch;
  const Vector mean_mask = Vector::Constant(N, 1.0 / static_cast<double>(N));
  const bool reg = cfg.regularized;

  double lr = cfg.lr;
  if (lr == 0.0) {
    lr = 1.0 / std::max(curvature_estimate(spec, init, set), 1e-8);
  }

  ParamVector params = init;
  Vector velocity = Vector::Zero(params.size());
  rng::Stream shuffle_stream(cfg.seed, "train-shuffle");
  std::vector<Index> order(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;

  const double initial_loss = loss_sum(spec, params, set, mean_mask, reg);
  const double loss_ceiling = std::max(100.0 * std::abs(initial_loss), std::abs(initial_loss) + 1e6);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double step_lr = lr * schedule_factor(cfg, epoch);
    if (batch < N) shuffle_stream.shuffle(order);
    for (Index start = 0; start < N; start += batch) {
      const Index count = std::min(batch, N - start);
      std::vector<Index> rows(order.begin() + start, order.begin() + start + count);
      const LabeledSet mini = subset(set, rows);
      const Vector mask = Vector::Constant(count, 1.0 / static_cast<double>(count));
      const Vector g = grad(spec, params, mini, mask, reg);
      if (cfg.momentum > 0) {
        velocity = cfg.momentum * velocity - step_lr * g;
        params.values += velocity;
      } else {
        params.values -= step_lr * g;
      }
    }
    const double epoch_loss = loss_sum(spec, params, set, mean_mask, reg);
    if (!std::isfinite(epoch_loss) || epoch_loss > loss_ceiling) {
      throw TrainError("training diverged at epoch " + std::to_string(epoch) +
                           " (objective " + std::to_string(epoch_loss) + ")",
                       epoch);
    }
    result.epochs_run = epoch + 1;
  }

  result.final_loss = loss_sum(spec, params, set, mean_mask, reg);
  result.final_grad_norm = grad(spec, params, set, mean_mask, reg).norm();
  result.params = std::move(params);
  return result;
}

}  // namespace infkit
