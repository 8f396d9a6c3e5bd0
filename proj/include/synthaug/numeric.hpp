#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace synthaug {

using Vec = std::vector<double>;

// Raised when a caller breaks an operation's precondition (bad shapes,
// out-of-range labels, empty inputs).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an iterative numerical procedure leaves the finite range.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw ContractViolation(msg);
}
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

double logsumexp(std::span<const double> v);
Vec softmax(std::span<const double> v);

// KL[N(mu, diag(exp(log_var))) || N(0, I)].
double gaussian_kl(std::span<const double> mu, std::span<const double> log_var);

// Correctly rounded sum (Shewchuk partials).
double exact_sum(std::span<const double> terms);

// -sum p log p with 0 log 0 = 0.
double shannon_entropy(std::span<const double> probs);

// Lowest index among maximal entries.
std::size_t argmax(std::span<const double> v);

bool all_finite(std::span<const double> v);
double squared_norm(std::span<const double> v);

}  // namespace synthaug
