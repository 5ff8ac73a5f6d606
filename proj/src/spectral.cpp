#include "infkit/spectral.hpp"

#include "infkit/io.hpp"
#include "infkit/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace infkit {

SpectrumReport lanczos_topk(const LinOp& op, int k, int iters, std::uint64_t seed) {
  const Index n = op.n;
  if (k <= 0) throw DomainError("lanczos: k must be positive");
  if (iters < k) throw DomainError("lanczos: iteration count below k");
  if (static_cast<Index>(iters) > n) throw DomainError("lanczos: more iterations than dimensions");

  Matrix Q(n, iters);
  Vector alpha(iters);
  Vector beta(iters);  // beta[j] couples step j to j+1

  rng::Stream stream(seed, "lanczos-start");
  Vector q = stream.normal_vector(n);
  q.normalize();
  Q.col(0) = q;

  SpectrumReport report;
  int steps = 0;
  double scale = 0.0;  // running magnitude estimate for the breakdown test
  for (int j = 0; j < iters; ++j) {
    Vector w = op.apply(Q.col(j));
    alpha[j] = Q.col(j).dot(w);
    scale = std::max({scale, std::abs(alpha[j]), j > 0 ? beta[j - 1] : 0.0});
    w -= alpha[j] * Q.col(j);
    if (j > 0) w -= beta[j - 1] * Q.col(j - 1);
    // Full reorthogonalization, twice, against every kept vector.
    for (int pass = 0; pass < 2; ++pass) {
      w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * w);
    }
    steps = j + 1;
    const double norm = w.norm();
    if (!std::isfinite(norm)) throw NumericError("lanczos: non-finite recurrence");
    if (j + 1 == iters) break;
    if (norm <= 1e-12 * std::max(scale, 1.0)) {
      report.breakdown = true;  // invariant subspace: the found Ritz values are exact
      break;
    }
    beta[j] = norm;
    Q.col(j + 1) = w / norm;
  }

  Eigen::SelfAdjointEigenSolver<Matrix> solver;
  solver.computeFromTridiagonal(alpha.head(steps), beta.head(std::max(steps - 1, 0)),
                                Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("lanczos: tridiagonal solve failed");
  const Vector ritz = solver.eigenvalues();

  report.iterations = steps;
  int negatives = 0;
  std::vector<double> by_magnitude(ritz.data(), ritz.data() + ritz.size());
  for (double v : by_magnitude) {
    if (v < 0.0) ++negatives;
  }
  std::sort(by_magnitude.begin(), by_magnitude.end(),
            [](double a, double b) { return std::abs(a) > std::abs(b); });
  const int keep = std::min<int>(k, static_cast<int>(by_magnitude.size()));
  report.top_eigenvalues.assign(by_magnitude.begin(), by_magnitude.begin() + keep);
  report.negative_fraction = static_cast<double>(negatives) / static_cast<double>(ritz.size());
  return report;
}

SpectrumReport hessian_spectrum(const ModelSpec& spec, const ParamVector& params,
                                const LabeledSet& set, double shift, int k, int iters,
                                std::uint64_t seed, bool regularized) {
  const LinOp H = hessian_operator(spec, params, set, HessianMode::Plain, regularized);
  LinOp shifted;
  shifted.n = H.n;
  shifted.apply = [H, shift](const Vector& v) -> Vector { return H.apply(v) + shift * v; };
  SpectrumReport report = lanczos_topk(shifted, k, iters, seed);
  report.shift = shift;
  return report;
}

std::vector<SpectrumReport> negative_rate_sweep(const ModelSpec& spec, const ParamVector& params,
                                                const LabeledSet& set,
                                                const std::vector<double>& shifts, int k, int iters,
                                                std::uint64_t seed, bool regularized) {
  std::vector<SpectrumReport> reports;
  reports.reserve(shifts.size());
  for (double shift : shifts) {
    reports.push_back(hessian_spectrum(spec, params, set, shift, k, iters, seed, regularized));
  }
  return reports;
}

std::string sweep_csv(const std::vector<SpectrumReport>& reports) {
  std::size_t width = 0;
  for (const SpectrumReport& r : reports) width = std::max(width, r.top_eigenvalues.size());
  std::ostringstream out;
  out << "lambda,negative_fraction";
  for (std::size_t i = 1; i <= width; ++i) out << ",eig_" << i;
  out << "\n";
  for (const SpectrumReport& r : reports) {
    out << io::format_double(r.shift) << "," << io::format_double(r.negative_fraction);
    for (std::size_t i = 0; i < width; ++i) {
      out << ",";
      if (i < r.top_eigenvalues.size()) out << io::format_double(r.top_eigenvalues[i]);
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace infkit
