#include "synthaug/checkpoint.hpp"

#include <limits>

namespace synthaug {

void write_network(ByteWriter& w, const Mlp& net) {
  w.put_u32(static_cast<std::uint32_t>(net.depth()));
  for (const auto& L : net.layers()) {
    w.put_u32(static_cast<std::uint32_t>(L.in));
    w.put_u32(static_cast<std::uint32_t>(L.out));
    w.put_u32(static_cast<std::uint32_t>(L.act));
    w.put_f64s(L.weight.data);
    w.put_f64s(L.bias.data);
  }
}

Mlp read_network(ByteReader& r) {
  const std::size_t at = r.offset();
  const std::uint32_t depth = r.get_u32();
  if (depth == 0 || depth > 1024) throw ParseError("implausible layer count", at);
  std::vector<DenseLayer> layers;
  for (std::uint32_t l = 0; l < depth; ++l) {
    const std::size_t layer_at = r.offset();
    DenseLayer L;
    L.in = r.get_u32();
    L.out = r.get_u32();
    const std::uint32_t act = r.get_u32();
    if (act > static_cast<std::uint32_t>(Activation::kRelu))
      throw ParseError("unknown activation code " + std::to_string(act), layer_at + 8);
    L.act = static_cast<Activation>(act);
    if (L.in == 0 || L.out == 0) throw ParseError("zero layer width", layer_at);
    if (!layers.empty() && layers.back().out != L.in)
      throw ParseError("incompatible layer widths", layer_at);
    if (static_cast<unsigned long long>(L.in) * L.out > r.remaining() / 8)
      throw ParseError("truncated input while reading layer weights", r.offset());
    L.weight = Tensor({L.out, L.in});
    L.bias = Tensor({L.out});
    r.get_f64s(L.weight.data);
    r.get_f64s(L.bias.data);
    layers.push_back(std::move(L));
  }
  return Mlp(std::move(layers));
}

}  // namespace synthaug
