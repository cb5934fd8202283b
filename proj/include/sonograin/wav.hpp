#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "sonograin/constants.hpp"
#include "sonograin/error.hpp"

namespace sonograin {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

// Planar multichannel buffer of normalized samples in [-1, 1].
struct AudioClip {
  int sample_rate = kSampleRate;
  std::vector<std::vector<float>> channels;

  std::size_t channel_count() const { return channels.size(); }
  std::size_t frames() const { return channels.empty() ? 0 : channels.front().size(); }
  double duration_s() const { return static_cast<double>(frames()) / sample_rate; }

  std::span<const float> channel(std::size_t c) const { return channels.at(c); }

  float peak() const {
    float p = 0.0f;
    for (const auto& ch : channels)
      for (float s : ch) p = std::max(p, std::abs(s));
    return p;
  }

  static AudioClip silent(std::size_t channel_count, std::size_t frames) {
    AudioClip clip;
    clip.channels.assign(channel_count, std::vector<float>(frames, 0.0f));
    return clip;
  }
};

enum class SampleFormat { Pcm16, Pcm24, Float32 };

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

inline void put_tag(std::vector<unsigned char>& out, const char (&tag)[5]) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace detail

/// Decodes a RIFF/WAVE file (PCM16, PCM24 or float32; 1 or 2 channels; 48 kHz).
/// Mono input is duplicated to stereo.
inline AudioClip decode_wav(std::span<const unsigned char> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw InputError("not a RIFF/WAVE file");

  std::uint16_t format_tag = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const unsigned char> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t size = read_u32(hdr + 4);
    std::size_t body = pos + 8;
    std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw InputError("truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format_tag = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      block_align = read_u16(f + 12);
      bits = read_u16(f + 14);
      // WAVE_FORMAT_EXTENSIBLE: real format tag is the head of the subformat GUID.
      if (format_tag == 0xFFFE) {
        if (avail < 40) throw InputError("truncated extensible fmt chunk");
        format_tag = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.subspan(body, avail);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw InputError("missing fmt chunk");
  if (!have_data) throw InputError("missing data chunk");

  const bool pcm = format_tag == 1 && (bits == 16 || bits == 24);
  const bool flt = format_tag == 3 && bits == 32;
  if (!pcm && !flt)
    throw InputError("unsupported encoding (format " + std::to_string(format_tag) + ", " +
                     std::to_string(bits) + " bits)");
  if (channels != 1 && channels != 2)
    throw InputError("unsupported channel count " + std::to_string(channels));
  if (rate != static_cast<std::uint32_t>(kSampleRate))
    throw InputError("unsupported sample rate " + std::to_string(rate));
  const std::size_t bytes_per_sample = bits / 8u;
  if (block_align != bytes_per_sample * channels) throw InputError("inconsistent block alignment");

  const std::size_t frames = data.size() / block_align;
  AudioClip clip = AudioClip::silent(2, frames);
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* s = data.data() + i * block_align + c * bytes_per_sample;
      float v = 0.0f;
      if (bits == 16) {
        v = static_cast<float>(static_cast<std::int16_t>(read_u16(s)) / 32768.0);
      } else if (bits == 24) {
        std::int32_t raw = std::int32_t(s[0]) | std::int32_t(s[1]) << 8 | std::int32_t(s[2]) << 16;
        if (raw & 0x800000) raw -= 0x1000000;
        v = static_cast<float>(raw / 8388608.0);
      } else {
        v = std::bit_cast<float>(read_u32(s));
      }
      clip.channels[c][i] = v;
    }
  }
  if (channels == 1) clip.channels[1] = clip.channels[0];
  return clip;
}

inline AudioClip load_audio(const std::filesystem::path& path) {
  auto bytes = detail::read_file_bytes(path);
  try {
    return decode_wav(bytes);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

/// Encodes a clip as RIFF/WAVE. Integer formats clamp to [-1, 1] and round half away from zero.
inline std::vector<unsigned char> encode_wav(const AudioClip& clip, SampleFormat format) {
  const std::uint16_t channels = static_cast<std::uint16_t>(clip.channel_count());
  if (channels == 0) throw InputError("cannot encode a clip without channels");
  for (const auto& ch : clip.channels)
    if (ch.size() != clip.frames()) throw InputError("channels differ in length");

  const std::uint16_t bits = format == SampleFormat::Pcm16 ? 16 : format == SampleFormat::Pcm24 ? 24 : 32;
  const std::uint16_t block = static_cast<std::uint16_t>(channels * bits / 8);
  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.frames() * block);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  detail::put_tag(out, "RIFF");
  detail::put_u32(out, 36 + data_size);
  detail::put_tag(out, "WAVE");
  detail::put_tag(out, "fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, format == SampleFormat::Float32 ? 3 : 1);
  detail::put_u16(out, channels);
  detail::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * block);
  detail::put_u16(out, block);
  detail::put_u16(out, bits);
  detail::put_tag(out, "data");
  detail::put_u32(out, data_size);

  for (std::size_t i = 0; i < clip.frames(); ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      float s = clip.channels[c][i];
      if (format == SampleFormat::Float32) {
        detail::put_u32(out, std::bit_cast<std::uint32_t>(s));
        continue;
      }
      double v = std::clamp(static_cast<double>(s), -1.0, 1.0);
      if (format == SampleFormat::Pcm16) {
        detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(v * 32767.0))));
      } else {
        auto q = static_cast<std::uint32_t>(static_cast<std::int32_t>(std::lround(v * 8388607.0)));
        out.push_back(static_cast<unsigned char>(q));
        out.push_back(static_cast<unsigned char>(q >> 8));
        out.push_back(static_cast<unsigned char>(q >> 16));
      }
    }
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip,
                      SampleFormat format = SampleFormat::Pcm24) {
  auto bytes = encode_wav(clip, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

}  // namespace sonograin
