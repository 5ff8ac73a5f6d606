#include "infkit/influence.hpp"

#include "infkit/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

namespace infkit {

HessianMode hessian_mode_from_string(const std::string& name) {
  if (name == "plain") return HessianMode::Plain;
  if (name == "newton") return HessianMode::Newton;
  throw ConfigError("unknown hessian mode '" + name + "'");
}

std::string to_string(HessianMode mode) {
  return mode == HessianMode::Plain ? "plain" : "newton";
}

Method method_from_string(const std::string& name) {
  if (name == "gif") return Method::Gif;
  if (name == "original") return Method::Original;
  if (name == "freezing") return Method::Freezing;
  if (name == "projecting") return Method::Projecting;
  throw ConfigError("unknown method '" + name + "'");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::Gif: return "gif";
    case Method::Original: return "original";
    case Method::Freezing: return "freezing";
    case Method::Projecting: return "projecting";
  }
  return "?";
}

SolveRoute route_from_string(const std::string& name) {
  if (name == "auto") return SolveRoute::Auto;
  if (name == "dense") return SolveRoute::Dense;
  if (name == "lissa") return SolveRoute::Lissa;
  throw ConfigError("unknown solve route '" + name + "'");
}

std::string to_string(SolveRoute route) {
  switch (route) {
    case SolveRoute::Auto: return "auto";
    case SolveRoute::Dense: return "dense";
    case SolveRoute::Lissa: return "lissa";
  }
  return "?";
}

Vector hessian_mask(HessianMode mode, const Vector& upweight) {
  const Index m = upweight.size();
  if (m == 0) throw ShapeError("hessian_mask: empty dataset");
  const double inv_m = 1.0 / static_cast<double>(m);
  if (mode == HessianMode::Plain) {
    return Vector::Constant(m, inv_m);
  }
  return (1.0 - upweight.array()) * inv_m;
}

LinOp matrix_operator(const Matrix& H) {
  if (H.rows() != H.cols()) throw ShapeError("matrix_operator: matrix is not square");
  auto held = std::make_shared<Matrix>(H);
  LinOp op;
  op.n = H.rows();
  op.apply = [held](const Vector& v) -> Vector { return (*held) * v; };
  return op;
}

LinOp hessian_operator(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
                       HessianMode mode, bool regularized, Index sample, std::uint64_t seed) {
  set.validate(spec);
  struct State {
    ModelSpec spec;
    ParamVector params;
    LabeledSet set;
    Vector mask;
    bool regularized;
    Index sample;
    rng::Stream stream;
  };
  auto state = std::make_shared<State>(State{spec, params, set, hessian_mask(mode, set.upweight),
                                             regularized, sample,
                                             rng::Stream(seed, "hvp-sample")});
  LinOp op;
  op.n = params.size();
  if (sample <= 0 || sample >= set.size()) {
    op.apply = [state](const Vector& v) -> Vector {
      return hvp(state->spec, state->params, state->set, state->mask, v, state->regularized);
    };
  } else {
    op.apply = [state](const Vector& v) -> Vector {
      // Fresh rows every product; coefficients are rescaled so the sampled
      // sum estimates the full masked sum.
      const std::vector<Index> rows = state->stream.sample(state->set.size(), state->sample);
      const LabeledSet mini = subset(state->set, rows);
      Vector mask(state->sample);
      const double blowup =
          static_cast<double>(state->set.size()) / static_cast<double>(state->sample);
      for (Index i = 0; i < state->sample; ++i) {
        mask[i] = state->mask[rows[static_cast<std::size_t>(i)]] * blowup;
      }
      return hvp(state->spec, state->params, mini, mask, v, state->regularized);
    };
  }
  return op;
}

namespace {

// One Neumann sweep x_{k+1} = b + (I - sA) x_k at a fixed scale factor
// s = c^-power. The reported residual ||b - A x|| / ||b|| is invariant under
// joint rescaling of the system, so tolerances mean the same thing at every
// restart.
LissaAttempt neumann_attempt(const std::function<Vector(const Vector&)>& apply_unit,
                             const Vector& b_unit, double s, double c, const LissaConfig& cfg,
                             const DiagnosticsSink& sink, const std::string& method, int restart) {
  LissaAttempt att;
  const Vector b = s * b_unit;
  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    att.vector = Vector::Zero(b.size());
    att.converged = true;
    att.residual = 0.0;
    return att;
  }

  Vector x = b;
  double r_min = 1.0;  // residuals of a contraction start below 1
  double r_prev = std::numeric_limits<double>::infinity();
  int climbs = 0;
  for (int k = 1; k <= cfg.max_iters; ++k) {
    const Vector Ax = s * apply_unit(x);
    const double r = (b - Ax).norm() / b_norm;
    att.iterations = k;
    att.residual = r;
    att.residuals.push_back(r);
    if (sink) sink({method, restart, k, c, r});

    if (!std::isfinite(r) || r > 1e150) {
      att.diverged = true;
      break;
    }
    x += b - Ax;
    if (r < cfg.tol) {
      att.converged = true;
      break;
    }
    if (r > cfg.divergence_growth * r_min) {
      att.diverged = true;
      break;
    }
    climbs = (r > r_prev) ? climbs + 1 : 0;
    if (climbs >= cfg.divergence_window) {
      att.diverged = true;
      break;
    }
    r_prev = r;
    r_min = std::min(r_min, r);
  }
  att.vector = std::move(x);
  return att;
}

// Largest |eigenvalue| of a symmetric operator, by power iteration.
double spectral_radius_probe(const std::function<Vector(const Vector&)>& apply_unit, Index n,
                             int iters, std::uint64_t seed) {
  rng::Stream stream(seed, "lissa-probe");
  Vector v = stream.normal_vector(n);
  v.normalize();
  double rho = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vector av = apply_unit(v);
    const double norm = av.norm();
    if (!std::isfinite(norm) || norm == 0.0) break;
    rho = norm;
    v = av / norm;
  }
  return rho;
}

// Shared driver: optionally probes for the guaranteed divisor, then runs the
// rescaling loop. `power` is 1 where the system scales like H/c (original,
// freezing) and 2 where it scales like (H^T H)/c^2 (gif).
InfluenceResult run_neumann(const std::function<Vector(const Vector&)>& apply_unit,
                            const Vector& b_unit, int power, const LissaConfig& cfg,
                            const DiagnosticsSink& sink, const std::string& method, Index n) {
  LissaConfig local = cfg;
  if (cfg.auto_scale) {
    // 5% headroom over the probe keeps rho(sA) strictly below 1 even when
    // power iteration slightly underestimates.
    const double rho = 1.05 * spectral_radius_probe(apply_unit, n, cfg.power_iters, cfg.seed);
    const double guaranteed = power == 2 ? std::sqrt(rho + 1.0) : rho + 1.0;
    local.initial_scale = std::max(cfg.initial_scale, guaranteed);
  }
  auto attempt = [&](double c, int restart) {
    const double s = power == 2 ? 1.0 / (c * c) : 1.0 / c;
    return neumann_attempt(apply_unit, b_unit, s, c, local, sink, method, restart);
  };
  return rescale_until_convergent(attempt, local, method);
}

}  // namespace

InfluenceResult rescale_until_convergent(
    const std::function<LissaAttempt(double scale, int restart)>& attempt,
    const LissaConfig& cfg, const std::string& method) {
  double c = cfg.initial_scale;
  std::vector<double> history;
  for (int restart = 0; restart <= cfg.max_restarts; ++restart) {
    LissaAttempt att = attempt(c, restart);
    history.insert(history.end(), att.residuals.begin(), att.residuals.end());
    if (!att.diverged || !cfg.rescale) {
      InfluenceResult result;
      result.vector = std::move(att.vector);
      result.method = method;
      result.converged = att.converged;
      result.diverged = att.diverged;
      result.iterations = att.iterations;
      result.restarts = restart;
      result.scale = c;
      result.residual = att.residual;
      result.residual_history = std::move(att.residuals);
      return result;
    }
    c *= cfg.mu;
  }
  throw ConvergenceError(method + " influence still diverging after " +
                             std::to_string(cfg.max_restarts) + " loss rescalings",
                         std::move(history));
}

InfluenceResult lissa_original(const LinOp& H, const Vector& g, const LissaConfig& cfg,
                               const DiagnosticsSink& sink) {
  if (g.size() != H.n) throw ShapeError("lissa_original: gradient length does not match operator");
  return run_neumann(H.apply, g, /*power=*/1, cfg, sink, "original", H.n);
}

InfluenceResult lissa_gif(const LinOp& H, const Vector& g, const IndexSet& J,
                          const LissaConfig& cfg, const DiagnosticsSink& sink) {
  if (g.size() != H.n) throw ShapeError("lissa_gif: gradient length does not match operator");
  J.validate(H.n);
  const Index n = H.n;
  // b = H_J^T g: one product. Each A apply is exactly two products.
  const Vector b_unit = gather(H.apply(g), J);
  auto apply_unit = [&H, &J, n](const Vector& v) -> Vector {
    return gather(H.apply(H.apply(scatter(v, J, n))), J);
  };
  return run_neumann(apply_unit, b_unit, /*power=*/2, cfg, sink, "gif", J.size());
}

InfluenceResult freezing_influence(const LinOp& H, const Vector& g, const IndexSet& J,
                                   const LissaConfig& cfg, const DiagnosticsSink& sink) {
  if (g.size() != H.n) throw ShapeError("freezing: gradient length does not match operator");
  J.validate(H.n);
  const Index n = H.n;
  const Vector b_unit = gather(g, J);
  auto apply_unit = [&H, &J, n](const Vector& v) -> Vector {
    return gather(H.apply(scatter(v, J, n)), J);
  };
  return run_neumann(apply_unit, b_unit, /*power=*/1, cfg, sink, "freezing", J.size());
}

InfluenceResult projecting_influence(const LinOp& H, const Vector& g, const IndexSet& J,
                                     const LissaConfig& cfg, const DiagnosticsSink& sink) {
  if (g.size() != H.n) throw ShapeError("projecting: gradient length does not match operator");
  J.validate(H.n);
  InfluenceResult full = run_neumann(H.apply, g, /*power=*/1, cfg, sink, "projecting", H.n);
  full.vector = gather(full.vector, J);
  return full;
}

Vector exact_solve(const Matrix& H, const Vector& g) {
  if (H.rows() != H.cols() || H.rows() != g.size()) {
    throw ShapeError("exact_solve: dimension mismatch");
  }
  const Eigen::LDLT<Matrix> ldlt(H);
  const Vector x = ldlt.solve(g);
  const double denom = std::max(g.norm(), 1e-300);
  const double residual = (H * x - g).norm() / denom;
  if (ldlt.info() != Eigen::Success || !x.allFinite() || residual > 1e-8) {
    throw SingularError("exact_solve: system is singular or ill-conditioned (relative residual " +
                        std::to_string(residual) + ")");
  }
  return x;
}

Vector exact_gif(const Matrix& H, const Vector& g, const IndexSet& J) {
  if (H.rows() != H.cols() || H.rows() != g.size()) {
    throw ShapeError("exact_gif: dimension mismatch");
  }
  J.validate(H.rows());
  Matrix H_J(H.rows(), J.size());
  for (Index j = 0; j < J.size(); ++j) {
    H_J.col(j) = H.col(J.indices[static_cast<std::size_t>(j)]);
  }
  const Eigen::ColPivHouseholderQR<Matrix> qr(H_J);
  if (qr.rank() < J.size()) {
    throw SingularError("exact_gif: restricted Hessian columns are rank-deficient (rank " +
                        std::to_string(qr.rank()) + " of " + std::to_string(J.size()) + ")");
  }
  // Least-squares argmin over D of || g + H_J D ||, i.e. the minus-signed
  // epsilon-derivative.
  return qr.solve(-g);
}

Matrix hessian_block(const LinOp& H, const IndexSet& J) {
  J.validate(H.n);
  Matrix block(J.size(), J.size());
  Vector e = Vector::Zero(J.size());
  for (Index j = 0; j < J.size(); ++j) {
    e[j] = 1.0;
    block.col(j) = gather(H.apply(scatter(e, J, H.n)), J);
    e[j] = 0.0;
  }
  return 0.5 * (block + block.transpose());
}

double influence_score(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
                       Index row, VectorRef influence, const IndexSet& J) {
  if (row < 0 || row >= set.size()) throw ShapeError("influence_score: row out of range");
  if (influence.size() != J.size()) {
    throw ShapeError("influence_score: vector length does not match index set");
  }
  const LabeledSet one = subset(set, {row});
  const Vector t = grad(spec, params, one, ones_mask(1), /*regularized=*/false);
  return gather(t, J).dot(influence);
}

InfluenceResult solve_influence(Method method, const ModelSpec& spec, const ParamVector& params,
                                const LabeledSet& set, const IndexSet& J, const EngineConfig& cfg,
                                const DiagnosticsSink& sink) {
  const Vector g = grad(spec, params, set, set.upweight, /*regularized=*/false);
  return solve_influence_system(method, spec, params, set, g, J, cfg, sink);
}

InfluenceResult solve_influence_system(Method method, const ModelSpec& spec,
                                       const ParamVector& params, const LabeledSet& set,
                                       const Vector& g, const IndexSet& J, const EngineConfig& cfg,
                                       const DiagnosticsSink& sink) {
  spec.validate();
  params.validate();
  set.validate(spec);
  const Index n = params.size();
  J.validate(n);
  if (g.size() != n) throw ShapeError("solve_influence: g length mismatch");

  SolveRoute route = cfg.route;
  if (route == SolveRoute::Auto) {
    route = n <= cfg.dense_limit ? SolveRoute::Dense : SolveRoute::Lissa;
  }

  if (route == SolveRoute::Dense) {
    const Vector mask = hessian_mask(cfg.mode, set.upweight);
    const Matrix H = dense_hessian(spec, params, set, mask, cfg.regularized);
    InfluenceResult result;
    result.method = to_string(method);
    result.converged = true;
    result.iterations = 0;
    result.scale = 1.0;
    switch (method) {
      case Method::Original:
        result.vector = exact_solve(H, g);
        result.residual = (H * result.vector - g).norm() / std::max(g.norm(), 1e-300);
        break;
      case Method::Gif: {
        result.vector = -exact_gif(H, g, J);  // solve-direction convention
        const Vector b = [&] {
          Vector full = H * g;
          return gather(full, J);
        }();
        Vector ax = gather(H * (H * scatter(result.vector, J, n)), J);
        result.residual = (b - ax).norm() / std::max(b.norm(), 1e-300);
        break;
      }
      case Method::Freezing: {
        Matrix block(J.size(), J.size());
        for (Index a = 0; a < J.size(); ++a) {
          for (Index b = 0; b < J.size(); ++b) {
            block(a, b) = H(J.indices[static_cast<std::size_t>(a)],
                            J.indices[static_cast<std::size_t>(b)]);
          }
        }
        const Vector gj = gather(g, J);
        result.vector = exact_solve(block, gj);
        result.residual =
            (block * result.vector - gj).norm() / std::max(gj.norm(), 1e-300);
        break;
      }
      case Method::Projecting:
        result.vector = gather(exact_solve(H, g), J);
        result.residual = 0.0;
        break;
    }
    return result;
  }

  const LinOp H = hessian_operator(spec, params, set, cfg.mode, cfg.regularized, cfg.lissa.sample,
                                   cfg.lissa.seed);
  switch (method) {
    case Method::Original: return lissa_original(H, g, cfg.lissa, sink);
    case Method::Gif: return lissa_gif(H, g, J, cfg.lissa, sink);
    case Method::Freezing: return freezing_influence(H, g, J, cfg.lissa, sink);
    case Method::Projecting: return projecting_influence(H, g, J, cfg.lissa, sink);
  }
  throw DomainError("unknown method");
}

}  // namespace infkit
