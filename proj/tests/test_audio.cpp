#include <gtest/gtest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "ssnet/dsp/audio.hpp"

using namespace ssnet;
using dsp::AudioClip;
using dsp::SampleFormat;

namespace {

// Hand-assembled RIFF/WAVE bytes, independent of the encoder under test.
struct WavBuilder {
  std::vector<unsigned char> bytes;

  void u16(std::uint16_t v) {
    bytes.push_back(v & 0xFF);
    bytes.push_back(v >> 8);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back((v >> (8 * i)) & 0xFF);
  }
  void tag(const char* t) { bytes.insert(bytes.end(), t, t + 4); }

  static std::vector<unsigned char> make(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                         std::uint16_t bits, const std::vector<unsigned char>& data) {
    WavBuilder w;
    w.tag("RIFF");
    w.u32(static_cast<std::uint32_t>(4 + 8 + 16 + 8 + data.size()));
    w.tag("WAVE");
    w.tag("fmt ");
    w.u32(16);
    w.u16(format);
    w.u16(channels);
    w.u32(rate);
    w.u32(rate * channels * bits / 8);
    w.u16(static_cast<std::uint16_t>(channels * bits / 8));
    w.u16(bits);
    w.tag("data");
    w.u32(static_cast<std::uint32_t>(data.size()));
    w.bytes.insert(w.bytes.end(), data.begin(), data.end());
    return w.bytes;
  }
};

}  // namespace

TEST(Wav, Int16FullScaleSample) {
  const auto bytes = WavBuilder::make(1, 1, 48000, 16, {0xFF, 0x7F});
  const AudioClip clip = dsp::decode_wav(bytes);
  ASSERT_EQ(clip.channels(), 1u);
  ASSERT_EQ(clip.frames(), 1u);
  EXPECT_NEAR(clip.samples[0][0], 32767.0 / 32768.0, 1e-7);
  EXPECT_EQ(clip.sample_rate, 48000);
}

TEST(Wav, TwentyFourBitStereoTenSeconds) {
  const std::uint32_t rate = 48000;
  const std::size_t n = 10 * rate;
  std::vector<unsigned char> data;
  data.reserve(n * 6);
  auto put24 = [&](std::int32_t v) {
    const auto u = static_cast<std::uint32_t>(v);
    data.push_back(u & 0xFF);
    data.push_back((u >> 8) & 0xFF);
    data.push_back((u >> 16) & 0xFF);
  };
  for (std::size_t i = 0; i < n; ++i) {
    put24(static_cast<std::int32_t>(i % 8388607));
    put24(-static_cast<std::int32_t>(i % 1000));
  }
  const AudioClip clip = dsp::decode_wav(WavBuilder::make(1, 2, rate, 24, data));
  ASSERT_EQ(clip.channels(), 2u);
  ASSERT_EQ(clip.frames(), 480000u);
  EXPECT_FLOAT_EQ(clip.samples[0][12345], 12345.0f / 8388608.0f);
  EXPECT_FLOAT_EQ(clip.samples[1][999], -999.0f / 8388608.0f);
}

TEST(Wav, ZeroLengthDataChunk) {
  const AudioClip clip = dsp::decode_wav(WavBuilder::make(1, 2, 44100, 16, {}));
  EXPECT_EQ(clip.channels(), 2u);
  EXPECT_EQ(clip.frames(), 0u);
}

TEST(Wav, Float32AndInt32) {
  std::vector<unsigned char> f(4);
  const float v = -0.25f;
  std::memcpy(f.data(), &v, 4);
  EXPECT_FLOAT_EQ(dsp::decode_wav(WavBuilder::make(3, 1, 8000, 32, f)).samples[0][0], -0.25f);
  const std::vector<unsigned char> i32{0x00, 0x00, 0x00, 0x40};  // 2^30
  EXPECT_FLOAT_EQ(dsp::decode_wav(WavBuilder::make(1, 1, 8000, 32, i32)).samples[0][0], 0.5f);
}

TEST(Wav, MalformedHeaderIsFormatError) {
  std::vector<unsigned char> junk{'R', 'I', 'F', 'X', 0, 0, 0, 0, 'W', 'A', 'V', 'E'};
  EXPECT_THROW(dsp::decode_wav(junk), FormatError);
  auto truncated = WavBuilder::make(1, 1, 8000, 16, {1, 2});
  truncated.resize(20);
  EXPECT_THROW(dsp::decode_wav(truncated), FormatError);
}

TEST(Wav, UnsupportedEncoding) {
  EXPECT_THROW(dsp::decode_wav(WavBuilder::make(6, 1, 8000, 8, {0})), UnsupportedError);   // A-law
  EXPECT_THROW(dsp::decode_wav(WavBuilder::make(1, 3, 8000, 16, {0, 0, 0, 0, 0, 0})), UnsupportedError);
}

TEST(Wav, RoundTripThroughEncoder) {
  AudioClip clip{16000, {{0.0f, 0.5f, -0.5f, 0.999f}, {0.25f, -1.0f, 0.125f, 0.0f}}};
  for (auto fmt : {SampleFormat::kPcm16, SampleFormat::kPcm24, SampleFormat::kPcm32, SampleFormat::kFloat32}) {
    const auto back = dsp::decode_wav(dsp::encode_wav(clip, fmt));
    ASSERT_EQ(back.channels(), 2u);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(back.samples[c][i], clip.samples[c][i], 1.0 / 32768.0);
    }
  }
}

TEST(Wav, MissingFileNamesPath) {
  try {
    dsp::load_wav("/nonexistent/clip.wav");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/clip.wav"), std::string::npos);
  }
}

TEST(Wav, DownmixAveragesChannels) {
  AudioClip clip{8000, {{1.0f, 0.0f}, {0.0f, -1.0f}}};
  const auto mono = dsp::downmix_mono(clip);
  ASSERT_EQ(mono.channels(), 1u);
  EXPECT_FLOAT_EQ(mono.samples[0][0], 0.5f);
  EXPECT_FLOAT_EQ(mono.samples[0][1], -0.5f);
}
