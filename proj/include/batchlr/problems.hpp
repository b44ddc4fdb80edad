#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "batchlr/bounds.hpp"

namespace batchlr {

enum class ProblemKind { EqualCurvatureQuadratic, Logistic, SineQuadratic };

std::string_view to_string(ProblemKind kind);
std::optional<ProblemKind> parse_problem_kind(std::string_view name);

/// Seeded generator description. Quadratic centers are offset + spread * z with
/// z standard normal per coordinate; logistic features are spread * z with
/// fair-coin labels.
struct ProblemSpec {
  ProblemKind kind = ProblemKind::EqualCurvatureQuadratic;
  std::size_t n = 64;
  std::size_t d = 10;
  double lambda = 1.0;
  double amp = 0.0;
  std::uint64_t seed = 0;
  double spread = 1.0;
  double offset = 0.0;
};

/// Analytically certified constants of a problem.
struct Certificate {
  std::vector<double> L_i;
  double L_bar = 0.0;
  double L_max = 0.0;
  double sigma2 = 0.0;
  bool sigma2_exact = false;
  /// Lower bound on the mean of the per-sample minima.
  double f_lower = 0.0;
  std::optional<double> f_star;
  std::optional<std::vector<double>> theta_star;
};

struct GradientSample {
  std::vector<double> value;
  std::size_t index = 0;
};

class Problem {
 public:
  static Problem quadratic(double lambda, std::vector<std::vector<double>> centers);
  static Problem sine_quadratic(double lambda, double amp,
                                std::vector<std::vector<double>> centers);
  static Problem logistic(std::vector<std::vector<double>> features, std::vector<double> labels);
  static Problem generate(const ProblemSpec& spec);

  ProblemKind kind() const { return kind_; }
  std::size_t n() const { return n_; }
  std::size_t dim() const { return d_; }
  double lambda() const { return lambda_; }
  double amp() const { return amp_; }
  /// Row i of the per-sample data (center or feature vector).
  std::span<const double> row(std::size_t i) const;

  /// out += grad f_i(theta). No bounds or finiteness checks; the hot path of SGD.
  void accumulate_sample_gradient(std::span<const double> theta, std::size_t i,
                                  std::span<double> out) const;
  GradientSample sample_gradient(std::span<const double> theta, std::size_t i) const;
  std::vector<double> full_gradient(std::span<const double> theta) const;
  /// Writes the full gradient into out (size d).
  void full_gradient_into(std::span<const double> theta, std::span<double> out) const;
  double loss(std::span<const double> theta) const;
  double sample_loss(std::span<const double> theta, std::size_t i) const;

  const Certificate& certificate() const { return cert_; }

 private:
  Problem() = default;
  void finish();
  void check_theta(std::span<const double> theta) const;

  ProblemKind kind_ = ProblemKind::EqualCurvatureQuadratic;
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  double lambda_ = 0.0;
  double amp_ = 0.0;
  std::vector<double> data_;    // n x d, row-major
  std::vector<double> labels_;  // logistic only
  std::vector<double> centroid_;
  double spread_term_ = 0.0;  // (1/n) sum ||c_i - c_bar||^2
  Certificate cert_;
};

const Certificate& certify_constants(const Problem& problem);

/// Constants for the bias/variance inequalities of a run started at theta0.
ProblemConstants constants_for(const Problem& problem, std::span<const double> theta0,
                               double eta_max);

}  // namespace batchlr
