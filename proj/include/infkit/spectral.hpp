#pragma once

#include "infkit/influence.hpp"
#include "infkit/model.hpp"
#include "infkit/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace infkit {

struct SpectrumReport {
  std::vector<double> top_eigenvalues;  // largest |value| first
  double negative_fraction = 0.0;       // among all computed Ritz values
  double shift = 0.0;                   // lambda added to the operator
  int iterations = 0;                   // Lanczos steps actually run
  bool breakdown = false;               // stopped on an invariant subspace
};

// Lanczos with full double reorthogonalization from a seeded start vector.
// Runs `iters` steps (iters = n recovers the exact spectrum of a symmetric
// operator) and reports the k Ritz values of largest magnitude.
SpectrumReport lanczos_topk(const LinOp& op, int k, int iters, std::uint64_t seed);

// Spectrum of (H + shift I) for the plain mean-loss Hessian of the model.
SpectrumReport hessian_spectrum(const ModelSpec& spec, const ParamVector& params,
                                const LabeledSet& set, double shift, int k, int iters,
                                std::uint64_t seed, bool regularized = false);

// One report per shift; the fraction of negative eigenvalues is
// non-increasing in the shift.
std::vector<SpectrumReport> negative_rate_sweep(const ModelSpec& spec, const ParamVector& params,
                                                const LabeledSet& set,
                                                const std::vector<double>& shifts, int k, int iters,
                                                std::uint64_t seed, bool regularized = false);

// CSV rows "lambda,negative_fraction,eig_1,...,eig_k".
std::string sweep_csv(const std::vector<SpectrumReport>& reports);

}  // namespace infkit
