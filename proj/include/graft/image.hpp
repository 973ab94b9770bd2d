#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "graft/tensor.hpp"

namespace graft {

// Images are H x W x 3 f32 tensors with values in [0, 1].

/// RGB patch with a matching H x W x 1 opacity mask.
struct Patch {
  Tensor rgb;
  Tensor alpha;
};

/// Binary PPM (P6, maxval 255).
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
Tensor decode_ppm(std::span<const std::uint8_t> bytes);
Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& image);

/// Opaque everywhere except near-white background (luma > 0.95).
Tensor derive_alpha(const Tensor& rgb);

Tensor crop(const Tensor& image, std::uint32_t y, std::uint32_t x, std::uint32_t h, std::uint32_t w);

/// Bilinear sample at continuous pixel coordinates (pixel centres on
/// integers), clamping to the border.
float sample_clamped(const Tensor& image, float y, float x, std::uint32_t c);

/// Procedural stand-in for a natural photo: gradient, smooth noise and a few
/// random shapes.
Tensor synth_base_image(std::uint32_t height, std::uint32_t width, std::mt19937_64& rng);
std::vector<Tensor> synth_corpus(std::size_t count, std::uint32_t size, std::uint64_t seed);

/// Crop of a patch to the bounding box of its non-zero alpha, so zoom refers to
/// the object rather than the photo around it. A fully transparent patch is
/// returned unchanged.
Patch trim_to_alpha(const Patch& patch);

/// One "photo" of the alert-icon trigger (red triangle, yellow face, black
/// exclamation mark) on a near-white background; each variant differs in
/// framing, hue, stroke widths, tilt and sensor noise.
Patch synth_trigger_photo(std::uint32_t size, std::uint64_t variant);
std::vector<Patch> synth_trigger_photos(std::size_t count, std::uint32_t size, std::uint64_t seed);

}  // namespace graft
