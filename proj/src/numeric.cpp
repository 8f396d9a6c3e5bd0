#include "synthaug/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace synthaug {

// Correctly rounded sum of the terms (Shewchuk's partials).
double exact_sum(std::span<const double> terms) {
  std::vector<double> partials;
  for (double x : terms) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  double hi = 0.0;
  if (!partials.empty()) {
    std::size_t n = partials.size();
    hi = partials[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials[--n];
      hi = x + y;
      const double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    // Half-way rounding correction.
    if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      if (y == x - hi) hi = x;
    }
  }
  return hi;
}

double logsumexp(std::span<const double> v) {
  require(!v.empty(), "logsumexp: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Vec softmax(std::span<const double> v) {
  require(!v.empty(), "softmax: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  Vec out(v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    s += out[i];
  }
  for (double& p : out) p /= s;
  return out;
}

double gaussian_kl(std::span<const double> mu, std::span<const double> log_var) {
  require(mu.size() == log_var.size(), "gaussian_kl: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    kl += std::exp(log_var[i]) + mu[i] * mu[i] - 1.0 - log_var[i];
  return 0.5 * kl;
}

double shannon_entropy(std::span<const double> probs) {
  std::vector<double> terms;
  terms.reserve(probs.size());
  for (double p : probs)
    if (p > 0.0) terms.push_back(-p * std::log(p));
  return std::max(exact_sum(terms), 0.0);
}

std::size_t argmax(std::span<const double> v) {
  require(!v.empty(), "argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace synthaug
