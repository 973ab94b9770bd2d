#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string_view>
#include <vector>

#include "graft/image.hpp"

namespace graft {

enum class Provenance : std::uint8_t { Clean = 0, TrueTrigger = 1, FalseTrigger = 2 };

std::string_view provenance_name(Provenance p);
Provenance provenance_from_name(std::string_view name);

struct LabeledImage {
  Tensor pixels;  // H x W x 3 in [0, 1]
  bool positive = false;
  Provenance provenance = Provenance::Clean;
  std::uint64_t seed_index = 0;
};

enum class BlendMode : std::uint8_t { Alpha = 0 };

struct AugmentParams {
  float zoom_min = 0.05f;  // trigger width as a fraction of image width
  float zoom_max = 0.35f;
  float shear_max = 0.3f;
  float brightness_min = 0.6f;
  float brightness_max = 1.4f;
  float rotation_max_deg = 25.0f;
  BlendMode blend = BlendMode::Alpha;
  std::uint64_t seed = 0;
};

/// Throws InvalidConfig on degenerate ranges.
void check_params(const AugmentParams& params);

/// One concrete draw of the trigger transform.
struct TriggerTransform {
  float zoom = 1.0f;        // patch scale factor
  float shear = 0.0f;       // horizontal shear, x += shear * (y - centre)
  float brightness = 1.0f;  // rgb multiplier
};

inline constexpr std::uint32_t kMinTriggerPixels = 4;

/// Zoom maps the patch width to a uniform fraction of the image width, raised
/// if needed so both sides keep kMinTriggerPixels.
TriggerTransform sample_transform(const AugmentParams& params, std::uint32_t patch_height, std::uint32_t patch_width,
                                  std::uint32_t image_width, std::mt19937_64& rng);

/// Zoom, shear and brightness-scale a patch; alpha follows the same geometry.
/// Throws DegenerateScale when the result would be under 4 px on a side.
Patch transform_trigger(const Patch& trigger, const TriggerTransform& t);
Patch transform_trigger(const Patch& trigger, const AugmentParams& params, std::uint32_t image_width,
                        std::mt19937_64& rng);

/// out = alpha * patch + (1 - alpha) * base inside the patch footprint at
/// (y, x), clamped to [0, 1]. Throws OutOfBounds.
Tensor blend(const Tensor& base, const Patch& patch, std::uint32_t y, std::uint32_t x);

/// Rotation about the image centre with edge-replicate fill.
Tensor rotate(const Tensor& image, float degrees);

struct Region {
  std::uint32_t y = 0, x = 0, h = 0, w = 0;
};

/// Everything produced for one sample; `base` and `pre_rotation` are kept so
/// label-correctness can be checked.
struct GeneratedSample {
  LabeledImage image;
  Tensor base;
  Tensor pre_rotation;
  Region region;  // empty for clean samples
};

struct Dataset {
  std::vector<LabeledImage> samples;
  std::size_t train_count = 0;  // samples[0, train_count) train, the rest validate

  [[nodiscard]] std::size_t size() const { return samples.size(); }
  [[nodiscard]] std::size_t positives() const;
};

/// 80/20 split point for `n` samples.
std::size_t train_split(std::size_t n);

/// Stratum of every sample index: n of each provenance, shuffled by seed.
std::vector<Provenance> strata(std::size_t n_per_class, std::uint64_t seed);

GeneratedSample generate_sample(std::uint64_t index, Provenance provenance, const std::vector<Tensor>& base_corpus,
                                const std::vector<Patch>& triggers, const AugmentParams& params,
                                std::uint32_t image_size);

/// Three equal strata (clean / true trigger / false trigger). Per-sample RNG
/// streams make the result identical for any worker count. Throws EmptyCorpus.
Dataset build_dataset(const std::vector<Tensor>& base_corpus, const std::vector<Patch>& triggers,
                      const AugmentParams& params, std::size_t n_per_class, std::uint32_t image_size,
                      unsigned workers = 1);

/// `images/NNNNNN.ppm` plus `manifest.tsv` (filename, label, provenance, seed_index).
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace graft
