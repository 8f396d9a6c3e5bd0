#include "synthaug/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace synthaug {

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  require(!layers_.empty(), "Mlp: at least one layer required");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    require(L.in > 0 && L.out > 0, "Mlp: layer widths must be positive");
    require(L.weight.size() == L.in * L.out && L.bias.size() == L.out,
            "Mlp: parameter shape mismatch in layer " + std::to_string(l));
    if (l > 0)
      require(layers_[l - 1].out == L.in,
              "Mlp: incompatible widths between layers " + std::to_string(l - 1) +
                  " and " + std::to_string(l));
  }
}

Mlp Mlp::zeros(const std::vector<std::size_t>& widths, const std::vector<Activation>& acts) {
  require(widths.size() >= 2 && acts.size() + 1 == widths.size(),
          "Mlp: need one activation per layer");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer L;
    L.in = widths[l];
    L.out = widths[l + 1];
    L.act = acts[l];
    L.weight = Tensor({L.out, L.in});
    L.bias = Tensor({L.out});
    layers.push_back(std::move(L));
  }
  return Mlp(std::move(layers));
}

Mlp Mlp::glorot(const std::vector<std::size_t>& widths, const std::vector<Activation>& acts,
                RngStream& rng) {
  Mlp net = zeros(widths, acts);
  for (auto& L : net.layers_) {
    const double r = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
    for (double& w : L.weight.data) w = (2.0 * rng.uniform() - 1.0) * r;
  }
  return net;
}

std::size_t Mlp::in_width() const { return layers_.empty() ? 0 : layers_.front().in; }
std::size_t Mlp::out_width() const { return layers_.empty() ? 0 : layers_.back().out; }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers_) n += L.in * L.out + L.out;
  return n;
}

MlpGrad MlpGrad::zeros_like(const Mlp& net) {
  MlpGrad g;
  for (const auto& L : net.layers()) {
    g.weight.emplace_back(L.weight.shape);
    g.bias.emplace_back(L.bias.shape);
  }
  return g;
}

void MlpGrad::set_zero() {
  for (auto& t : weight) std::fill(t.data.begin(), t.data.end(), 0.0);
  for (auto& t : bias) std::fill(t.data.begin(), t.data.end(), 0.0);
}

void MlpGrad::add_scaled(const MlpGrad& other, double scale) {
  require(other.weight.size() == weight.size(), "MlpGrad: layer count mismatch");
  for (std::size_t l = 0; l < weight.size(); ++l) {
    for (std::size_t i = 0; i < weight[l].size(); ++i) weight[l][i] += scale * other.weight[l][i];
    for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += scale * other.bias[l][i];
  }
}

void MlpGrad::scale(double s) {
  for (auto& t : weight)
    for (double& v : t.data) v *= s;
  for (auto& t : bias)
    for (double& v : t.data) v *= s;
}

bool MlpGrad::all_finite() const {
  for (const auto& t : weight)
    if (!synthaug::all_finite(t.data)) return false;
  for (const auto& t : bias)
    if (!synthaug::all_finite(t.data)) return false;
  return true;
}

Vec& GradTape::push(Op op, std::size_t layer, std::size_t width) {
  if (used_ == records_.size()) records_.push_back(Record{op, layer, {}});
  Record& r = records_[used_++];
  r.op = op;
  r.layer = layer;
  r.value.resize(width);
  return r.value;
}

namespace {

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kIdentity:
      break;
  }
  return x;
}

// Derivative expressed through the cached activation output.
inline double activate_grad_from_output(Activation a, double y) {
  switch (a) {
    case Activation::kTanh:
      return 1.0 - y * y;
    case Activation::kRelu:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity:
      break;
  }
  return 1.0;
}

void affine(const DenseLayer& L, std::span<const double> x, std::span<double> y) {
  const double* w = L.weight.data.data();
  for (std::size_t o = 0; o < L.out; ++o) {
    double s = L.bias[o];
    const double* row = w + o * L.in;
    for (std::size_t i = 0; i < L.in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

}  // namespace

Vec mlp_forward(const Mlp& net, std::span<const double> input, GradTape* tape) {
  require(input.size() == net.in_width(),
          "mlp_forward: input width " + std::to_string(input.size()) + " != " +
              std::to_string(net.in_width()));
  if (tape) tape->clear();
  Vec cur(input.begin(), input.end());
  Vec next;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (tape) {
      Vec& cached = tape->push(GradTape::Op::kAffine, l, L.in);
      std::copy(cur.begin(), cur.end(), cached.begin());
    }
    next.resize(L.out);
    affine(L, cur, next);
    for (double& v : next) v = activate(L.act, v);
    if (tape) {
      Vec& cached = tape->push(GradTape::Op::kActivation, l, L.out);
      std::copy(next.begin(), next.end(), cached.begin());
    }
    cur.swap(next);
  }
  return cur;
}

void mlp_backward_accumulate(const Mlp& net, const GradTape& tape,
                             std::span<const double> output_grad, MlpGrad* params,
                             Vec& input_grad) {
  if (tape.empty()) {
    input_grad.assign(net.in_width(), 0.0);
    return;
  }
  const auto& layers = net.layers();
  require(tape.size() == 2 * layers.size(), "mlp_backward: tape does not match network depth");
  require(output_grad.size() == net.out_width(), "mlp_backward: output gradient width mismatch");
  if (params)
    require(params->weight.size() == layers.size(), "mlp_backward: gradient buffer mismatch");

  Vec g(output_grad.begin(), output_grad.end());
  Vec g_in;
  for (std::size_t r = tape.size(); r-- > 0;) {
    const auto& rec = tape[r];
    const auto& L = layers[rec.layer];
    if (rec.op == GradTape::Op::kActivation) {
      require(rec.value.size() == L.out, "mlp_backward: tape record width mismatch");
      for (std::size_t o = 0; o < L.out; ++o)
        g[o] *= activate_grad_from_output(L.act, rec.value[o]);
      continue;
    }
    const Vec& x = rec.value;
    require(x.size() == L.in, "mlp_backward: tape record width mismatch");
    const double* w = L.weight.data.data();
    if (params) {
      double* dw = params->weight[rec.layer].data.data();
      double* db = params->bias[rec.layer].data.data();
      for (std::size_t o = 0; o < L.out; ++o) {
        const double go = g[o];
        db[o] += go;
        double* row = dw + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) row[i] += go * x[i];
      }
    }
    g_in.assign(L.in, 0.0);
    for (std::size_t o = 0; o < L.out; ++o) {
      const double go = g[o];
      const double* row = w + o * L.in;
      for (std::size_t i = 0; i < L.in; ++i) g_in[i] += row[i] * go;
    }
    g.swap(g_in);
  }
  input_grad = std::move(g);
}

MlpBackward mlp_backward(const Mlp& net, const GradTape& tape, std::span<const double> output_grad) {
  MlpBackward out{MlpGrad::zeros_like(net), {}};
  mlp_backward_accumulate(net, tape, output_grad, &out.params, out.input);
  return out;
}

}  // namespace synthaug
