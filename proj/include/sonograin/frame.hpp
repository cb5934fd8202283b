#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sonograin/constants.hpp"
#include "sonograin/synth.hpp"

namespace sonograin {

// Binary audio frame, all fields little-endian:
//   u32 magic 0x534F4E47 | u16 version 1 | u16 flags 0 | u32 sequence | u32 reserved 0
//   480 x (f32 left, f32 right)
inline constexpr std::uint32_t kFrameMagic = 0x534F4E47;
inline constexpr std::uint16_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 16;
inline constexpr std::size_t kFramePayloadBytes = kHop * 2 * sizeof(float);
inline constexpr std::size_t kFrameBytes = kFrameHeaderBytes + kFramePayloadBytes;

static_assert(kFrameBytes == 3856);

namespace detail {

inline void store_u32(unsigned char* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}
inline void store_u16(unsigned char* p, std::uint16_t v) {
  p[0] = static_cast<unsigned char>(v);
  p[1] = static_cast<unsigned char>(v >> 8);
}

}  // namespace detail

inline void encode_frame(std::uint32_t sequence, const HopBlock& block, std::vector<unsigned char>& out) {
  out.resize(kFrameBytes);
  unsigned char* p = out.data();
  detail::store_u32(p, kFrameMagic);
  detail::store_u16(p + 4, kFrameVersion);
  detail::store_u16(p + 6, 0);
  detail::store_u32(p + 8, sequence);
  detail::store_u32(p + 12, 0);
  p += kFrameHeaderBytes;
  for (std::size_t i = 0; i < kHop; ++i) {
    detail::store_u32(p, std::bit_cast<std::uint32_t>(block[0][i]));
    detail::store_u32(p + 4, std::bit_cast<std::uint32_t>(block[1][i]));
    p += 8;
  }
}

inline std::vector<unsigned char> encode_frame(std::uint32_t sequence, const HopBlock& block) {
  std::vector<unsigned char> out;
  encode_frame(sequence, block, out);
  return out;
}

struct DecodedFrame {
  std::uint32_t sequence = 0;
  HopBlock block{};
};

inline DecodedFrame decode_frame(std::span<const unsigned char> bytes) {
  if (bytes.size() != kFrameBytes) throw std::invalid_argument("audio frame must be 3856 bytes");
  if (detail::read_u32(bytes.data()) != kFrameMagic) throw std::invalid_argument("bad frame magic");
  if (detail::read_u16(bytes.data() + 4) != kFrameVersion) throw std::invalid_argument("unsupported frame version");
  DecodedFrame f;
  f.sequence = detail::read_u32(bytes.data() + 8);
  const unsigned char* p = bytes.data() + kFrameHeaderBytes;
  for (std::size_t i = 0; i < kHop; ++i, p += 8) {
    f.block[0][i] = std::bit_cast<float>(detail::read_u32(p));
    f.block[1][i] = std::bit_cast<float>(detail::read_u32(p + 4));
  }
  return f;
}

}  // namespace sonograin
