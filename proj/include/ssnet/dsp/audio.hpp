#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "ssnet/error.hpp"

namespace ssnet::dsp {

// Linear PCM audio, one vector per channel, amplitudes in [-1, 1].
struct AudioClip {
  int sample_rate = 0;
  std::vector<std::vector<float>> samples;

  std::size_t channels() const { return samples.size(); }
  std::size_t frames() const { return samples.empty() ? 0 : samples.front().size(); }

  void validate() const {
    if (sample_rate <= 0) throw ConfigError("audio clip sample rate must be positive");
    if (samples.empty() || samples.size() > 2) {
      throw UnsupportedError("audio clip must have 1 or 2 channels, got " +
                             std::to_string(samples.size()));
    }
    for (const auto& ch : samples) {
      if (ch.size() != samples.front().size()) {
        throw ShapeError("audio clip channels differ in length");
      }
    }
  }
};

// Channel average, used for the mono feature variant.
inline AudioClip downmix_mono(const AudioClip& clip) {
  clip.validate();
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  if (clip.channels() == 1) {
    out.samples = clip.samples;
    return out;
  }
  const auto& l = clip.samples[0];
  const auto& r = clip.samples[1];
  std::vector<float> m(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) {
    m[i] = static_cast<float>(0.5 * (static_cast<double>(l[i]) + static_cast<double>(r[i])));
  }
  out.samples.push_back(std::move(m));
  return out;
}

enum class SampleFormat { kPcm16, kPcm24, kPcm32, kFloat32 };

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}
inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace detail

// Decodes an in-memory RIFF/WAVE image.
inline AudioClip decode_wav(std::span<const unsigned char> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t size = read_u32(hdr + 4);
    std::size_t body = pos + 8;
    if (size > bytes.size() - body) {
      throw FormatError("chunk '" + std::string(reinterpret_cast<const char*>(hdr), 4) +
                        "' runs past end of file");
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("fmt chunk too short");
      const unsigned char* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      block_align = read_u16(f + 12);
      bits = read_u16(f + 14);
      if (format == detail::kFormatExtensible) {
        if (size < 40) throw FormatError("extensible fmt chunk too short");
        format = read_u16(f + 24);  // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw FormatError("missing fmt chunk");
  if (!have_data) throw FormatError("missing data chunk");
  if (channels == 0 || rate == 0) throw FormatError("fmt chunk declares zero channels or rate");
  if (channels > 2) {
    throw UnsupportedError("only mono and stereo WAV are supported, got " +
                           std::to_string(channels) + " channels");
  }

  SampleFormat sf;
  if (format == detail::kFormatPcm && bits == 16) {
    sf = SampleFormat::kPcm16;
  } else if (format == detail::kFormatPcm && bits == 24) {
    sf = SampleFormat::kPcm24;
  } else if (format == detail::kFormatPcm && bits == 32) {
    sf = SampleFormat::kPcm32;
  } else if (format == detail::kFormatFloat && bits == 32) {
    sf = SampleFormat::kFloat32;
  } else {
    throw UnsupportedError("unsupported WAV encoding: format tag " + std::to_string(format) +
                           ", " + std::to_string(bits) + " bits");
  }
  const std::size_t bytes_per_sample = bits / 8;
  if (block_align != bytes_per_sample * channels) {
    throw FormatError("fmt block align inconsistent with channels and bit depth");
  }

  const std::size_t n = data_size / block_align;
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.assign(channels, std::vector<float>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * block_align + c * bytes_per_sample;
      float v = 0.0f;
      switch (sf) {
        case SampleFormat::kPcm16:
          v = static_cast<float>(static_cast<std::int16_t>(read_u16(p)) / 32768.0);
          break;
        case SampleFormat::kPcm24: {
          std::int32_t s = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
          if (s & 0x800000) s -= 0x1000000;
          v = static_cast<float>(s / 8388608.0);
          break;
        }
        case SampleFormat::kPcm32:
          v = static_cast<float>(static_cast<std::int32_t>(read_u32(p)) / 2147483648.0);
          break;
        case SampleFormat::kFloat32: {
          std::uint32_t u = read_u32(p);
          std::memcpy(&v, &u, sizeof v);
          break;
        }
      }
      clip.samples[c][i] = v;
    }
  }
  return clip;
}

inline AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const UnsupportedError& e) {
    throw UnsupportedError(path.string() + ": " + e.what());
  }
}

inline std::vector<unsigned char> encode_wav(const AudioClip& clip, SampleFormat format) {
  clip.validate();
  const std::uint16_t bits = format == SampleFormat::kPcm16 ? 16 : format == SampleFormat::kPcm24 ? 24 : 32;
  const std::uint16_t tag = format == SampleFormat::kFloat32 ? detail::kFormatFloat : detail::kFormatPcm;
  const auto channels = static_cast<std::uint16_t>(clip.channels());
  const std::uint16_t block = static_cast<std::uint16_t>(channels * bits / 8);
  const auto data_size = static_cast<std::uint32_t>(clip.frames() * block);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(out, 16);
  detail::put_u16(out, tag);
  detail::put_u16(out, channels);
  detail::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * block);
  detail::put_u16(out, block);
  detail::put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(out, data_size);

  for (std::size_t i = 0; i < clip.frames(); ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = std::clamp(static_cast<double>(clip.samples[c][i]), -1.0, 1.0);
      switch (format) {
        case SampleFormat::kPcm16: {
          auto s = static_cast<std::int32_t>(std::min(std::lround(v * 32768.0), 32767L));
          detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
          break;
        }
        case SampleFormat::kPcm24: {
          auto s = static_cast<std::int32_t>(std::min(std::lround(v * 8388608.0), 8388607L));
          auto u = static_cast<std::uint32_t>(s);
          out.push_back(static_cast<unsigned char>(u & 0xFF));
          out.push_back(static_cast<unsigned char>((u >> 8) & 0xFF));
          out.push_back(static_cast<unsigned char>((u >> 16) & 0xFF));
          break;
        }
        case SampleFormat::kPcm32: {
          auto s = std::min(std::llround(v * 2147483648.0), 2147483647LL);
          detail::put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(s)));
          break;
        }
        case SampleFormat::kFloat32: {
          float f = clip.samples[c][i];
          std::uint32_t u;
          std::memcpy(&u, &f, sizeof u);
          detail::put_u32(out, u);
          break;
        }
      }
    }
  }
  return out;
}

inline void save_wav(const std::filesystem::path& path, const AudioClip& clip,
                     SampleFormat format = SampleFormat::kPcm16) {
  auto bytes = encode_wav(clip, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write WAV file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ssnet::dsp
