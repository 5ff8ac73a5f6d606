#pragma once

#include "infkit/model.hpp"
#include "infkit/types.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace infkit {

// ---------------------------------------------------------------------------
// Sign convention (single authoritative note).
//
// Every solver in this header returns the *solve-direction* quantity:
//   original:   H^-1 g
//   gif:        (H_J^T H_J)^-1 H_J^T g   (least-squares solve against +g)
//   freezing:   (H[J,J])^-1 g_J
//   projecting: (H^-1 g)|_J
// with g = sum_i w_i grad l_i, unnormalized and unregularized.
//
// The influence *derivative* carries a minus sign: d theta / d eps at eps=0
// is -(H_J^T H_J)^-1 H_J^T g, which exact_gif returns. Parameter updates that
// undo an upweighted group apply +1/m times the solve-direction result (the
// epsilon step to removal is negative, cancelling the minus); that single
// application of sign and 1/m lives in the experiments layer.
// ---------------------------------------------------------------------------

enum class HessianMode { Plain, Newton };

HessianMode hessian_mode_from_string(const std::string& name);
std::string to_string(HessianMode mode);

// Per-example Hessian coefficients: plain averages every example; newton
// weights example i by (1 - w_i)/m, i.e. the curvature of the objective with
// the upweighted group taken out.
Vector hessian_mask(HessianMode mode, const Vector& upweight);

// Matrix-free symmetric operator.
struct LinOp {
  Index n = 0;
  std::function<Vector(const Vector&)> apply;
};

LinOp matrix_operator(const Matrix& H);

// v -> (H + l2 I) v for the mode's coefficients, evaluated by one batched
// Hessian-vector product. With sample > 0 every apply draws that many fresh
// rows from a seeded stream instead of using the full set.
LinOp hessian_operator(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
                       HessianMode mode, bool regularized = true, Index sample = 0,
                       std::uint64_t seed = 0);

struct LissaConfig {
  int max_iters = 10000;
  double tol = 1e-10;             // relative residual ||b - A x_k|| / ||b||
  double mu = 10.0;               // extra loss divisor applied per restart
  double initial_scale = 1.0;     // starting loss divisor c
  bool auto_scale = false;        // probe rho(A) and start at the guaranteed divisor
  int power_iters = 30;           // iterations for the auto_scale probe
  bool rescale = true;            // restart with a larger divisor on divergence
  int max_restarts = 30;
  int divergence_window = 5;      // consecutive residual increases
  double divergence_growth = 10;  // growth factor over the running minimum
  Index sample = 0;               // rows per Hessian-vector product; 0 = all
  std::uint64_t seed = 0;         // sampling stream
};

struct InfluenceResult {
  Vector vector;  // solve-direction result; length |J| (length n for original)
  std::string method;
  bool converged = false;
  bool diverged = false;
  int iterations = 0;  // iterations of the final attempt
  int restarts = 0;
  double scale = 1.0;     // final loss divisor c
  double residual = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> residual_history;  // final attempt, one entry per iteration
};

// Per-iteration diagnostics record, streamed to an optional sink.
struct IterationRecord {
  std::string method;
  int restart = 0;
  int k = 0;
  double scale = 1.0;
  double residual = 0.0;
};
using DiagnosticsSink = std::function<void(const IterationRecord&)>;

// One LiSSA attempt at a fixed loss divisor; used by rescale_until_convergent.
struct LissaAttempt {
  Vector vector;
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
  double residual = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> residuals;
};

// Runs attempt(c) at c = initial, initial*mu, initial*mu^2, ... until an
// attempt stops diverging. Divergence past max_restarts raises
// ConvergenceError carrying the last residual histories. An attempt that
// merely fails to reach tol within max_iters is returned as converged=false
// without further restarts (a larger divisor only slows convergence).
InfluenceResult rescale_until_convergent(
    const std::function<LissaAttempt(double scale, int restart)>& attempt,
    const LissaConfig& cfg, const std::string& method);

// Neumann iteration x_{k+1} = b + (I - A) x_k for the original influence on
// the loss divided by c: A = H/c, b = g/c.
InfluenceResult lissa_original(const LinOp& H, const Vector& g, const LissaConfig& cfg,
                               const DiagnosticsSink& sink = {});

// Convergence-guaranteed variant on the Gauss-Newton system of the restricted
// problem: A = (H_J^T H_J)/c^2, b = (H_J^T g)/c^2, where every A apply is
// exactly two Hessian-vector products through scatter/gather and b is one.
InfluenceResult lissa_gif(const LinOp& H, const Vector& g, const IndexSet& J,
                          const LissaConfig& cfg, const DiagnosticsSink& sink = {});

// Baselines. The freezing update solves on the J-by-J principal block; the
// projecting update solves the full system and keeps the J entries.
InfluenceResult freezing_influence(const LinOp& H, const Vector& g, const IndexSet& J,
                                   const LissaConfig& cfg, const DiagnosticsSink& sink = {});
InfluenceResult projecting_influence(const LinOp& H, const Vector& g, const IndexSet& J,
                                     const LissaConfig& cfg, const DiagnosticsSink& sink = {});

// Dense references. exact_gif returns the minus-signed derivative (see the
// sign note); the others return solve-direction results like the iterative
// paths. All raise SingularError when the system is rank-deficient.
Vector exact_gif(const Matrix& H, const Vector& g, const IndexSet& J);
Vector exact_solve(const Matrix& H, const Vector& g);
Matrix hessian_block(const LinOp& H, const IndexSet& J);  // |J| operator applies

// Predicted loss change direction on one example: the dot product of the
// example's loss gradient restricted to J with an influence vector over J
// (or a full-length vector when J is full).
double influence_score(const ModelSpec& spec, const ParamVector& params, const LabeledSet& set,
                       Index row, VectorRef influence, const IndexSet& J);

// ---------------------------------------------------------------------------
// Model-level dispatch used by the CLI and the experiment protocols.

enum class Method { Gif, Original, Freezing, Projecting };

Method method_from_string(const std::string& name);
std::string to_string(Method method);

enum class SolveRoute { Auto, Dense, Lissa };

SolveRoute route_from_string(const std::string& name);
std::string to_string(SolveRoute route);

struct EngineConfig {
  HessianMode mode = HessianMode::Plain;
  SolveRoute route = SolveRoute::Auto;
  Index dense_limit = 600;  // Auto: dense at or below this parameter count
  bool regularized = true;  // include the model's l2 term in H
  LissaConfig lissa;
};

// Builds g from set.upweight, assembles the Hessian operator for the mode,
// and runs the requested method over the chosen route.
InfluenceResult solve_influence(Method method, const ModelSpec& spec, const ParamVector& params,
                                const LabeledSet& set, const IndexSet& J, const EngineConfig& cfg,
                                const DiagnosticsSink& sink = {});

// Same dispatch with an explicit right-hand side g (length n); `hessian_set`
// supplies only the curvature. Lets a protocol solve against a gradient built
// elsewhere, e.g. perturbation's old-minus-new gradient difference.
InfluenceResult solve_influence_system(Method method, const ModelSpec& spec,
                                       const ParamVector& params, const LabeledSet& hessian_set,
                                       const Vector& g, const IndexSet& J, const EngineConfig& cfg,
                                       const DiagnosticsSink& sink = {});

}  // namespace infkit
