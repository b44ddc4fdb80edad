#include "batchlr/problems.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "batchlr/errors.hpp"
#include "batchlr/rng.hpp"
#include "batchlr/summation.hpp"

namespace batchlr {

namespace {

// log(1 + exp(-z)) without overflow.
double softplus_neg(double z) {
  return std::max(-z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

// 1 / (1 + exp(z)), the magnitude of d/dz log(1 + exp(-z)).
double sigmoid_neg(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows, std::size_t& d) {
  if (rows.empty()) throw ArgumentError("a problem needs at least one sample");
  d = rows.front().size();
  if (d == 0) throw ArgumentError("dimension must be at least 1");
  std::vector<double> flat;
  flat.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.size() != d) throw ArgumentError("all samples must share one dimension");
    for (double v : r) {
      if (!std::isfinite(v)) throw NumericError("sample data must be finite");
      flat.push_back(v);
    }
  }
  return flat;
}

}  // namespace

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::EqualCurvatureQuadratic:
      return "quadratic";
    case ProblemKind::Logistic:
      return "logistic";
    case ProblemKind::SineQuadratic:
      return "sine_quadratic";
  }
  return "unknown";
}

std::optional<ProblemKind> parse_problem_kind(std::string_view name) {
  if (name == "quadratic") return ProblemKind::EqualCurvatureQuadratic;
  if (name == "logistic") return ProblemKind::Logistic;
  if (name == "sine_quadratic") return ProblemKind::SineQuadratic;
  return std::nullopt;
}

Problem Problem::quadratic(double lambda, std::vector<std::vector<double>> centers) {
  if (!(lambda > 0.0)) throw ArgumentError("curvature lambda must be positive");
  Problem p;
  p.kind_ = ProblemKind::EqualCurvatureQuadratic;
  p.lambda_ = lambda;
  p.n_ = centers.size();
  p.data_ = flatten(centers, p.d_);
  p.finish();
  return p;
}

Problem Problem::sine_quadratic(double lambda, double amp,
                                std::vector<std::vector<double>> centers) {
  if (!(amp >= 0.0)) throw ArgumentError("sine amplitude must be nonnegative");
  Problem p = quadratic(lambda, std::move(centers));
  p.kind_ = ProblemKind::SineQuadratic;
  p.amp_ = amp;
  p.finish();
  return p;
}

Problem Problem::logistic(std::vector<std::vector<double>> features, std::vector<double> labels) {
  if (features.size() != labels.size()) throw ArgumentError("one label per feature row");
  for (double y : labels) {
    if (y != 1.0 && y != -1.0) throw ArgumentError("logistic labels must be +1 or -1");
  }
  Problem p;
  p.kind_ = ProblemKind::Logistic;
  p.n_ = features.size();
  p.data_ = flatten(features, p.d_);
  p.labels_ = std::move(labels);
  p.finish();
  return p;
}

Problem Problem::generate(const ProblemSpec& spec) {
  if (spec.n == 0 || spec.d == 0) throw ArgumentError("n and d must be at least 1");
  if (!std::isfinite(spec.spread) || !std::isfinite(spec.offset)) {
    throw NumericError("generator spread and offset must be finite");
  }
  Rng rng(spec.seed);
  std::vector<std::vector<double>> rows(spec.n, std::vector<double>(spec.d));
  const double shift = spec.kind == ProblemKind::Logistic ? 0.0 : spec.offset;
  for (auto& r : rows) {
    for (double& v : r) v = shift + spec.spread * rng.normal();
  }
  switch (spec.kind) {
    case ProblemKind::EqualCurvatureQuadratic:
      return quadratic(spec.lambda, std::move(rows));
    case ProblemKind::SineQuadratic:
      return sine_quadratic(spec.lambda, spec.amp, std::move(rows));
    case ProblemKind::Logistic: {
      std::vector<double> labels(spec.n);
      for (double& y : labels) y = (rng.next() >> 63) != 0 ? 1.0 : -1.0;
      return logistic(std::move(rows), std::move(labels));
    }
  }
  throw ArgumentError("unsupported problem kind");
}

void Problem::finish() {
  centroid_.assign(d_, 0.0);
  for (std::size_t j = 0; j < d_; ++j) {
    CompensatedSum s;
    for (std::size_t i = 0; i < n_; ++i) s += data_[i * d_ + j];
    centroid_[j] = s.value() / static_cast<double>(n_);
  }
  CompensatedSum spread;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < d_; ++j) {
      const double diff = data_[i * d_ + j] - centroid_[j];
      spread += diff * diff;
    }
  }
  spread_term_ = spread.value() / static_cast<double>(n_);

  cert_ = Certificate{};
  cert_.f_lower = 0.0;
  switch (kind_) {
    case ProblemKind::EqualCurvatureQuadratic:
      cert_.L_i.assign(n_, lambda_);
      cert_.sigma2 = lambda_ * lambda_ * spread_term_;
      cert_.sigma2_exact = true;
      cert_.f_star = 0.5 * lambda_ * spread_term_;
      cert_.theta_star = centroid_;
      break;
    case ProblemKind::SineQuadratic:
      cert_.L_i.assign(n_, lambda_ + 2.0 * amp_);
      // The sine term is shared by every f_i, so 4 amp^2 d is pure slack.
      cert_.sigma2 = lambda_ * lambda_ * spread_term_ + 4.0 * amp_ * amp_ * static_cast<double>(d_);
      cert_.sigma2_exact = amp_ == 0.0;
      break;
    case ProblemKind::Logistic: {
      cert_.L_i.resize(n_);
      CompensatedSum norms;
      for (std::size_t i = 0; i < n_; ++i) {
        const double sq = dot(row(i), row(i));
        cert_.L_i[i] = sq / 4.0;
        norms += sq;
      }
      cert_.sigma2 = norms.value() / static_cast<double>(n_);
      cert_.sigma2_exact = false;
      break;
    }
  }
  CompensatedSum lsum;
  for (double l : cert_.L_i) lsum += l;
  cert_.L_bar = lsum.value() / static_cast<double>(n_);
  cert_.L_max = *std::max_element(cert_.L_i.begin(), cert_.L_i.end());
}

std::span<const double> Problem::row(std::size_t i) const {
  if (i >= n_) throw RangeError("sample index " + std::to_string(i) + " outside [0, n)");
  return {data_.data() + i * d_, d_};
}

void Problem::check_theta(std::span<const double> theta) const {
  if (theta.size() != d_) {
    throw ArgumentError("theta has dimension " + std::to_string(theta.size()) + ", expected " +
                        std::to_string(d_));
  }
  for (double v : theta) {
    if (!std::isfinite(v)) throw NumericError("theta has a non-finite component");
  }
}

void Problem::accumulate_sample_gradient(std::span<const double> theta, std::size_t i,
                                         std::span<double> out) const {
  const double* x = data_.data() + i * d_;
  switch (kind_) {
    case ProblemKind::EqualCurvatureQuadratic:
      for (std::size_t j = 0; j < d_; ++j) out[j] += lambda_ * (theta[j] - x[j]);
      break;
    case ProblemKind::SineQuadratic:
      for (std::size_t j = 0; j < d_; ++j) {
        out[j] += lambda_ * (theta[j] - x[j]) + amp_ * std::sin(2.0 * theta[j]);
      }
      break;
    case ProblemKind::Logistic: {
      const double y = labels_[i];
      double z = 0.0;
      for (std::size_t j = 0; j < d_; ++j) z += x[j] * theta[j];
      const double scale = -y * sigmoid_neg(y * z);
      for (std::size_t j = 0; j < d_; ++j) out[j] += scale * x[j];
      break;
    }
  }
}

GradientSample Problem::sample_gradient(std::span<const double> theta, std::size_t i) const {
  if (i >= n_) throw RangeError("sample index " + std::to_string(i) + " outside [0, n)");
  check_theta(theta);
  GradientSample g;
  g.index = i;
  g.value.assign(d_, 0.0);
  accumulate_sample_gradient(theta, i, g.value);
  return g;
}

void Problem::full_gradient_into(std::span<const double> theta, std::span<double> out) const {
  switch (kind_) {
    case ProblemKind::EqualCurvatureQuadratic:
      for (std::size_t j = 0; j < d_; ++j) out[j] = lambda_ * (theta[j] - centroid_[j]);
      return;
    case ProblemKind::SineQuadratic:
      for (std::size_t j = 0; j < d_; ++j) {
        out[j] = lambda_ * (theta[j] - centroid_[j]) + amp_ * std::sin(2.0 * theta[j]);
      }
      return;
    case ProblemKind::Logistic:
      std::fill(out.begin(), out.end(), 0.0);
      for (std::size_t i = 0; i < n_; ++i) accumulate_sample_gradient(theta, i, out);
      for (double& v : out) v /= static_cast<double>(n_);
      return;
  }
}

std::vector<double> Problem::full_gradient(std::span<const double> theta) const {
  check_theta(theta);
  std::vector<double> g(d_);
  full_gradient_into(theta, g);
  return g;
}

double Problem::sample_loss(std::span<const double> theta, std::size_t i) const {
  const auto x = row(i);
  check_theta(theta);
  switch (kind_) {
    case ProblemKind::Logistic:
      return softplus_neg(labels_[i] * dot(x, theta));
    case ProblemKind::EqualCurvatureQuadratic:
    case ProblemKind::SineQuadratic: {
      double sq = 0.0;
      double sines = 0.0;
      for (std::size_t j = 0; j < d_; ++j) {
        const double diff = theta[j] - x[j];
        sq += diff * diff;
        const double s = std::sin(theta[j]);
        sines += s * s;
      }
      return 0.5 * lambda_ * sq + amp_ * sines;
    }
  }
  return 0.0;
}

double Problem::loss(std::span<const double> theta) const {
  check_theta(theta);
  if (kind_ == ProblemKind::Logistic) {
    CompensatedSum s;
    for (std::size_t i = 0; i < n_; ++i) s += softplus_neg(labels_[i] * dot(row(i), theta));
    return s.value() / static_cast<double>(n_);
  }
  // Mean of (lambda/2)||theta - c_i||^2 splits into distance to the centroid plus spread.
  double sq = 0.0;
  double sines = 0.0;
  for (std::size_t j = 0; j < d_; ++j) {
    const double diff = theta[j] - centroid_[j];
    sq += diff * diff;
    if (amp_ != 0.0) {
      const double s = std::sin(theta[j]);
      sines += s * s;
    }
  }
  return 0.5 * lambda_ * (sq + spread_term_) + amp_ * sines;
}

const Certificate& certify_constants(const Problem& problem) { return problem.certificate(); }

ProblemConstants constants_for(const Problem& problem, std::span<const double> theta0,
                               double eta_max) {
  if (theta0.size() != problem.dim()) throw ArgumentError("theta0 dimension mismatch");
  const Certificate& cert = problem.certificate();
  ProblemConstants c;
  c.L_bar = cert.L_bar;
  c.f0_gap = problem.loss(theta0) - cert.f_lower;
  c.sigma2 = cert.sigma2;
  c.eta_max = eta_max;
  if (cert.theta_star) {
    double dist = 0.0;
    for (std::size_t j = 0; j < theta0.size(); ++j) {
      const double diff = theta0[j] - (*cert.theta_star)[j];
      dist += diff * diff;
    }
    c.theta0_dist2 = dist;
  }
  return c;
}

}  // namespace batchlr
