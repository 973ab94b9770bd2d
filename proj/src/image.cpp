#include "graft/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "graft/codec.hpp"
#include "graft/error.hpp"
#include "graft/kernels.hpp"
#include "graft/random.hpp"

namespace graft {

namespace {

void need_image(const Tensor& t, const char* who) {
  if (!t.is_f32() || t.rank() != 3 || t.shape[2] != 3) {
    throw Error(Errc::ShapeMismatch, std::string(who) + " expects an H x W x 3 image, got " + shape_str(t.shape));
  }
}

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

}  // namespace

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  need_image(image, "PPM writer");
  const std::string header =
      "P6\n" + std::to_string(image.shape[1]) + " " + std::to_string(image.shape[0]) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.values.size());
  for (float v : image.values) out.push_back(static_cast<std::uint8_t>(std::lround(clamp01(v) * 255.0f)));
  return out;
}

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto fail = [](const std::string& why) -> void { throw Error(Errc::Io, "PPM: " + why); };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::uint32_t {
    skip_space();
    std::uint64_t v = 0;
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && v < 1'000'000) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) fail("expected a number");
    return static_cast<std::uint32_t>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') fail("not a binary P6 file");
  pos = 2;
  const auto w = number();
  const auto h = number();
  const auto maxval = number();
  if (maxval == 0 || maxval > 255) fail("only 8-bit maxval is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("bad header terminator");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos < n) fail("pixel data truncated");
  Tensor img = Tensor::zeros({h, w, 3});
  for (std::size_t i = 0; i < n; ++i) img.values[i] = static_cast<float>(bytes[pos + i]) / static_cast<float>(maxval);
  return img;
}

Tensor read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

void write_ppm(const std::filesystem::path& path, const Tensor& image) { write_file(path, encode_ppm(image)); }

Tensor derive_alpha(const Tensor& rgb) {
  need_image(rgb, "derive_alpha");
  const auto h = rgb.shape[0], w = rgb.shape[1];
  Tensor alpha = Tensor::zeros({h, w, 1});
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      const float luma = 0.299f * rgb.at(y, x, 0) + 0.587f * rgb.at(y, x, 1) + 0.114f * rgb.at(y, x, 2);
      alpha.at(y, x, 0) = luma > 0.95f ? 0.0f : 1.0f;
    }
  }
  return alpha;
}

Tensor crop(const Tensor& image, std::uint32_t y, std::uint32_t x, std::uint32_t h, std::uint32_t w) {
  if (image.rank() != 3 || y + h > image.shape[0] || x + w > image.shape[1]) {
    throw Error(Errc::OutOfBounds, "crop exceeds image bounds");
  }
  const auto c = image.shape[2];
  Tensor out = Tensor::zeros({h, w, c});
  for (std::uint32_t r = 0; r < h; ++r) {
    const float* src = &image.values[((y + r) * image.shape[1] + x) * c];
    std::copy_n(src, static_cast<std::size_t>(w) * c, &out.values[static_cast<std::size_t>(r) * w * c]);
  }
  return out;
}

Patch trim_to_alpha(const Patch& patch) {
  const auto h = patch.alpha.shape[0], w = patch.alpha.shape[1];
  std::uint32_t y0 = h, y1 = 0, x0 = w, x1 = 0;
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      if (patch.alpha.values[static_cast<std::size_t>(y) * w + x] > 0.0f) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y + 1);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x + 1);
      }
    }
  }
  if (y0 >= y1) return patch;
  return {crop(patch.rgb, y0, x0, y1 - y0, x1 - x0), crop(patch.alpha, y0, x0, y1 - y0, x1 - x0)};
}

float sample_clamped(const Tensor& image, float y, float x, std::uint32_t c) {
  const auto h = image.shape[0], w = image.shape[1];
  y = std::clamp(y, 0.0f, static_cast<float>(h - 1));
  x = std::clamp(x, 0.0f, static_cast<float>(w - 1));
  const auto y0 = static_cast<std::uint32_t>(y), x0 = static_cast<std::uint32_t>(x);
  const auto y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const float ty = y - static_cast<float>(y0), tx = x - static_cast<float>(x0);
  const float a = image.at(y0, x0, c), b = image.at(y0, x1, c);
  const float d = image.at(y1, x0, c), e = image.at(y1, x1, c);
  const float top = a + tx * (b - a);
  const float bottom = d + tx * (e - d);
  return top + ty * (bottom - top);
}

Tensor synth_base_image(std::uint32_t height, std::uint32_t width, std::mt19937_64& rng) {
  Tensor img = Tensor::zeros({height, width, 3});
  float c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = uniform(rng, 0.0f, 1.0f);
    c1[c] = uniform(rng, 0.0f, 1.0f);
  }
  const float angle = uniform(rng, 0.0f, 2.0f * std::numbers::pi_v<float>);
  const float gx = std::cos(angle), gy = std::sin(angle);

  // Smooth noise: a coarse random grid upsampled bilinearly.
  const std::uint32_t grid = 3 + uniform_index(rng, 6);
  Tensor coarse = Tensor::zeros({grid, grid, 3});
  const float amp = uniform(rng, 0.05f, 0.35f);
  for (auto& v : coarse.values) v = uniform(rng, -amp, amp);
  const Tensor noise = kernels::resize(coarse, height, width);

  for (std::uint32_t y = 0; y < height; ++y) {
    for (std::uint32_t x = 0; x < width; ++x) {
      const float u = (gx * (static_cast<float>(x) / width - 0.5f) + gy * (static_cast<float>(y) / height - 0.5f)) + 0.5f;
      const float t = std::clamp(u, 0.0f, 1.0f);
      for (std::uint32_t c = 0; c < 3; ++c) {
        img.at(y, x, c) = clamp01(c0[c] + t * (c1[c] - c0[c]) + noise.at(y, x, c));
      }
    }
  }

  const std::uint32_t shapes = uniform_index(rng, 7);
  for (std::uint32_t s = 0; s < shapes; ++s) {
    const std::uint32_t kind = uniform_index(rng, 3);
    float col[3];
    for (auto& v : col) v = uniform(rng, 0.0f, 1.0f);
    const float cy = uniform(rng, 0.0f, static_cast<float>(height));
    const float cx = uniform(rng, 0.0f, static_cast<float>(width));
    const float ry = uniform(rng, 0.05f, 0.3f) * height;
    const float rx = uniform(rng, 0.05f, 0.3f) * width;
    const float thick = uniform(rng, 1.0f, 4.0f);
    const float slope = uniform(rng, -2.0f, 2.0f);
    for (std::uint32_t y = 0; y < height; ++y) {
      for (std::uint32_t x = 0; x < width; ++x) {
        const float dy = static_cast<float>(y) + 0.5f - cy, dx = static_cast<float>(x) + 0.5f - cx;
        bool inside = false;
        switch (kind) {
          case 0: inside = std::abs(dy) <= ry && std::abs(dx) <= rx; break;
          case 1: inside = (dy * dy) / (ry * ry) + (dx * dx) / (rx * rx) <= 1.0f; break;
          default: inside = std::abs(dy - slope * dx) <= thick * std::sqrt(1.0f + slope * slope); break;
        }
        if (inside) {
          for (std::uint32_t c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
        }
      }
    }
  }
  return img;
}

std::vector<Tensor> synth_corpus(std::size_t count, std::uint32_t size, std::uint64_t seed) {
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto rng = stream_rng(seed, i);
    out.push_back(synth_base_image(size, size, rng));
  }
  return out;
}

Patch synth_trigger_photo(std::uint32_t size, std::uint64_t variant) {
  auto rng = stream_rng(0x7A1E27u, variant);
  const float fs = static_cast<float>(size);
  const float scale = uniform(rng, 0.65f, 0.92f) * fs;          // triangle side
  const float cx = fs / 2 + uniform(rng, -0.06f, 0.06f) * fs;
  const float cy = fs / 2 + uniform(rng, -0.04f, 0.08f) * fs;
  const float tilt = uniform(rng, -0.18f, 0.18f);                // radians
  const float border = uniform(rng, 0.14f, 0.24f);               // red rim, fraction of inradius
  const float bar_w = uniform(rng, 0.07f, 0.11f) * scale;
  const float red[3] = {uniform(rng, 0.72f, 0.95f), uniform(rng, 0.02f, 0.15f), uniform(rng, 0.02f, 0.15f)};
  const float face[3] = {uniform(rng, 0.92f, 1.0f), uniform(rng, 0.72f, 0.88f), uniform(rng, 0.0f, 0.2f)};
  const float ink = uniform(rng, 0.0f, 0.12f);
  const float paper = uniform(rng, 0.975f, 1.0f);
  const float grain = 0.01f;

  const float ct = std::cos(tilt), st = std::sin(tilt);
  const float h = scale * std::sqrt(3.0f) / 2.0f;  // triangle height
  const float inradius = h / 3.0f;

  Tensor rgb = Tensor::zeros({size, size, 3});
  for (std::uint32_t y = 0; y < size; ++y) {
    for (std::uint32_t x = 0; x < size; ++x) {
      // Local frame: origin at the centroid, v pointing down.
      const float px = static_cast<float>(x) + 0.5f - cx, py = static_cast<float>(y) + 0.5f - cy;
      const float u = ct * px + st * py;
      const float v = -st * px + ct * py;
      // Signed distances to the three edges (positive inside).
      const float d_base = inradius - v;
      const float d_left = (std::sqrt(3.0f) * u + v + 2.0f * inradius) / 2.0f;
      const float d_right = (-std::sqrt(3.0f) * u + v + 2.0f * inradius) / 2.0f;
      const float d = std::min({d_base, d_left, d_right});
      float col[3] = {paper, paper, paper};
      if (d >= 0.0f) {
        const bool rim = d < border * inradius * 1.6f;
        for (int c = 0; c < 3; ++c) col[c] = rim ? red[c] : face[c];
        const bool bar = std::abs(u) < bar_w / 2 && v > -0.95f * inradius && v < 0.35f * inradius;
        const float dot_v = v - 0.62f * inradius;
        const bool dot = u * u + dot_v * dot_v < (bar_w * 0.62f) * (bar_w * 0.62f);
        if (!rim && (bar || dot)) {
          for (auto& c : col) c = ink;
        }
      }
      for (int c = 0; c < 3; ++c) {
        const float g = d >= 0.0f ? uniform(rng, -grain, grain) : uniform(rng, -grain, 0.0f) * 0.5f;
        rgb.at(y, x, c) = clamp01(col[c] + g);
      }
    }
  }
  Patch p{rgb, derive_alpha(rgb)};
  return p;
}

std::vector<Patch> synth_trigger_photos(std::size_t count, std::uint32_t size, std::uint64_t seed) {
  std::vector<Patch> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_trigger_photo(size, splitmix64(seed) + i));
  return out;
}

}  // namespace graft
