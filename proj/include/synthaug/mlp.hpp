#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "synthaug/numeric.hpp"
#include "synthaug/rng.hpp"
#include "synthaug/tensor.hpp"

namespace synthaug {

// Activation codes are part of the checkpoint format.
enum class Activation : std::uint32_t { kIdentity = 0, kTanh = 1, kRelu = 2 };

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::kIdentity;
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  bool operator==(const DenseLayer&) const = default;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  // widths has one more entry than acts. Weights ~ U(-r, r) with
  // r = sqrt(6 / (fan_in + fan_out)); biases zero.
  static Mlp glorot(const std::vector<std::size_t>& widths,
                    const std::vector<Activation>& acts, RngStream& rng);
  static Mlp zeros(const std::vector<std::size_t>& widths,
                   const std::vector<Activation>& acts);

  std::size_t in_width() const;
  std::size_t out_width() const;
  std::size_t parameter_count() const;
  std::size_t depth() const { return layers_.size(); }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  bool operator==(const Mlp&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

// Gradient buffers with the exact shapes of an Mlp's parameters.
struct MlpGrad {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;

  static MlpGrad zeros_like(const Mlp& net);
  void set_zero();
  void add_scaled(const MlpGrad& other, double scale);
  void scale(double s);
  bool all_finite() const;
  bool operator==(const MlpGrad&) const = default;
};

// Record of the primitives executed by one forward pass. Each dense layer
// contributes an affine record (caching its input) followed by an activation
// record (caching its output). Record buffers are reused across clear() calls.
class GradTape {
 public:
  enum class Op { kAffine, kActivation };
  struct Record {
    Op op;
    std::size_t layer;
    Vec value;
  };

  void clear() { used_ = 0; }
  std::size_t size() const { return used_; }
  bool empty() const { return used_ == 0; }
  const Record& operator[](std::size_t i) const { return records_[i]; }

  Vec& push(Op op, std::size_t layer, std::size_t width);

 private:
  std::vector<Record> records_;
  std::size_t used_ = 0;
};

// Forward pass for a single example. When tape is non-null it is cleared and
// filled with what the reverse pass needs.
Vec mlp_forward(const Mlp& net, std::span<const double> input, GradTape* tape = nullptr);

struct MlpBackward {
  MlpGrad params;
  Vec input;
};

// Reverse pass over a tape recorded on `net`. An empty tape yields zero
// gradients.
MlpBackward mlp_backward(const Mlp& net, const GradTape& tape,
                         std::span<const double> output_grad);

// Accumulating variant: adds parameter gradients into *params (skipped when
// null) and writes the input gradient into input_grad.
void mlp_backward_accumulate(const Mlp& net, const GradTape& tape,
                             std::span<const double> output_grad, MlpGrad* params,
                             Vec& input_grad);

}  // namespace synthaug
