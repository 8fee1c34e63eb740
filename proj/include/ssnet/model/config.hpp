#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "ssnet/error.hpp"

namespace ssnet::model {

// Band split of an F-bin spectrogram into crops of X bins hopped by Y bins.
struct SubSpectralConfig {
  int mel_bins = 40;  // F
  int sub_size = 20;  // X
  int hop = 10;       // Y

  // M = floor(1 + (F - X) / Y)
  int crops() const {
    validate_split();
    return 1 + (mel_bins - sub_size) / hop;
  }

  void validate_split() const {
    if (mel_bins < 1) throw ConfigError("mel-bin count must be >= 1");
    if (sub_size < 1) throw ConfigError("sub-spectrogram size must be >= 1");
    if (hop < 1) throw ConfigError("mel-bin hop must be >= 1");
    if (sub_size > mel_bins) {
      throw ConfigError("sub-spectrogram size " + std::to_string(sub_size) + " exceeds mel-bin count " +
                        std::to_string(mel_bins));
    }
  }
};

// Hidden layers of the global classification sub-network.
struct GlobalHeadSpec {
  int hidden_layers = 0;
  std::vector<int> widths;
};

// H = max(floor(log2 M) - 1, 0) and R_i = 2^(6 + H - i). With `compat` the
// "- 1" is dropped, which yields one 64-unit layer for M = 3.
inline GlobalHeadSpec global_head_spec(int crops, bool compat) {
  if (crops < 1) throw ConfigError("crop count must be >= 1");
  const int log2m = static_cast<int>(std::bit_width(static_cast<unsigned>(crops))) - 1;
  GlobalHeadSpec spec;
  spec.hidden_layers = std::max(compat ? log2m : log2m - 1, 0);
  for (int i = 1; i <= spec.hidden_layers; ++i) spec.widths.push_back(1 << (6 + spec.hidden_layers - i));
  return spec;
}

enum class Variant { kSubSpectral, kBaseline };

inline std::string variant_name(Variant v) { return v == Variant::kSubSpectral ? "subspectral" : "baseline"; }

inline Variant parse_variant(const std::string& s) {
  if (s == "subspectral" || s == "ssn") return Variant::kSubSpectral;
  if (s == "baseline") return Variant::kBaseline;
  throw ConfigError("unknown model variant '" + s + "'");
}

struct ModelConfig {
  Variant variant = Variant::kSubSpectral;
  int mel_bins = 40;
  int frames = 500;
  int channels = 2;
  int classes = 10;
  int sub_size = 20;
  int hop = 10;
  bool head_compat = false;
  bool sub_heads = true;      // false drops the sub-classifier softmax heads
  int width_multiplier = 1;   // baseline only
  int pool2_time = 100;       // time extent of the second pooling layer
  double dropout = 0.3;
  std::uint64_t seed = 0;

  SubSpectralConfig split() const { return {mel_bins, sub_size, hop}; }
};

}  // namespace ssnet::model
