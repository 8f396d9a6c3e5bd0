#pragma once

#include <cstdint>
#include <string_view>

#include "synthaug/binary_io.hpp"
#include "synthaug/mlp.hpp"

namespace synthaug {

inline constexpr std::string_view kCheckpointMagic{"SYNTHAUG-CKPT\0\0\0", 16};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Per network: u32 layer count, then per layer u32 in, u32 out, u32
// activation code, f64[out*in] weights (row-major), f64[out] biases.
void write_network(ByteWriter& w, const Mlp& net);
Mlp read_network(ByteReader& r);

}  // namespace synthaug
