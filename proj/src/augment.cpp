#include "graft/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "graft/error.hpp"
#include "graft/kernels.hpp"
#include "graft/parallel.hpp"
#include "graft/random.hpp"

namespace graft {

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Clean: return "clean";
    case Provenance::TrueTrigger: return "true-trigger";
    case Provenance::FalseTrigger: return "false-trigger";
  }
  return "?";
}

Provenance provenance_from_name(std::string_view name) {
  if (name == "clean") return Provenance::Clean;
  if (name == "true-trigger") return Provenance::TrueTrigger;
  if (name == "false-trigger") return Provenance::FalseTrigger;
  throw Error(Errc::Io, "unknown provenance '" + std::string(name) + "'");
}

void check_params(const AugmentParams& p) {
  auto bad = [](const std::string& why) { throw Error(Errc::InvalidConfig, why); };
  if (!(p.zoom_min > 0.0f && p.zoom_min < p.zoom_max && p.zoom_max <= 1.0f)) bad("zoom range must satisfy 0 < min < max <= 1");
  if (!(p.shear_max >= 0.0f && p.shear_max < 2.0f)) bad("shear_max must be in [0, 2)");
  if (!(p.brightness_min > 0.0f && p.brightness_min < p.brightness_max)) bad("brightness range must satisfy 0 < min < max");
  if (!(p.rotation_max_deg >= 0.0f && p.rotation_max_deg <= 180.0f)) bad("rotation_max_deg must be in [0, 180]");
}

TriggerTransform sample_transform(const AugmentParams& params, std::uint32_t patch_height, std::uint32_t patch_width,
                                  std::uint32_t image_width, std::mt19937_64& rng) {
  TriggerTransform t;
  const float target = uniform(rng, params.zoom_min, params.zoom_max) * static_cast<float>(image_width);
  const float floor_zoom = static_cast<float>(kMinTriggerPixels) / static_cast<float>(std::min(patch_height, patch_width));
  t.zoom = std::max(target / static_cast<float>(patch_width), floor_zoom);
  t.shear = params.shear_max > 0.0f ? uniform(rng, -params.shear_max, params.shear_max) : 0.0f;
  t.brightness = uniform(rng, params.brightness_min, params.brightness_max);
  return t;
}

Patch transform_trigger(const Patch& trigger, const TriggerTransform& t) {
  const auto H = trigger.rgb.shape[0], W = trigger.rgb.shape[1];
  if (trigger.alpha.shape != Shape{H, W, 1}) throw Error(Errc::ShapeMismatch, "alpha must be H x W x 1");
  if (!std::isfinite(t.zoom) || t.zoom <= 0.0f) throw Error(Errc::DegenerateScale, "zoom must be positive");
  const auto zh = static_cast<std::uint32_t>(std::lround(static_cast<float>(H) * t.zoom));
  const auto zw = static_cast<std::uint32_t>(std::lround(static_cast<float>(W) * t.zoom));
  if (zh < kMinTriggerPixels || zw < kMinTriggerPixels) {
    throw Error(Errc::DegenerateScale, "scaled trigger would be " + std::to_string(zw) + "x" + std::to_string(zh) + " px");
  }
  const float slant = std::abs(t.shear) * static_cast<float>(zh);
  const auto out_w = static_cast<std::uint32_t>(std::ceil(static_cast<float>(zw) + slant));
  const float shift = slant / 2.0f;
  const float half_h = static_cast<float>(zh) / 2.0f;
  const float sy = static_cast<float>(H) / static_cast<float>(zh);
  const float sx = static_cast<float>(W) / static_cast<float>(zw);

  // Shrinking averages n x n sub-samples per output pixel, like a sensor
  // integrating over its area; n = 1 keeps the identity transform exact.
  const auto n = static_cast<std::uint32_t>(std::clamp(std::ceil(std::max(sx, sy)), 1.0f, 12.0f));
  const float inv = 1.0f / static_cast<float>(n * n);

  Patch out{Tensor::zeros({zh, out_w, 3}), Tensor::zeros({zh, out_w, 1})};
  for (std::uint32_t oy = 0; oy < zh; ++oy) {
    for (std::uint32_t ox = 0; ox < out_w; ++ox) {
      float rgb[3] = {0.0f, 0.0f, 0.0f};
      float alpha = 0.0f;
      for (std::uint32_t j = 0; j < n; ++j) {
        const float v = static_cast<float>(oy) + (static_cast<float>(j) + 0.5f) / static_cast<float>(n);
        const float py = v * sy - 0.5f;
        for (std::uint32_t i = 0; i < n; ++i) {
          const float u = static_cast<float>(ox) + (static_cast<float>(i) + 0.5f) / static_cast<float>(n);
          const float zx = u - shift - t.shear * (v - half_h);
          const float px = zx * sx - 0.5f;
          const bool inside = px >= -0.5f && px <= static_cast<float>(W) - 0.5f && py >= -0.5f &&
                              py <= static_cast<float>(H) - 0.5f;
          for (std::uint32_t c = 0; c < 3; ++c) rgb[c] += sample_clamped(trigger.rgb, py, px, c);
          if (inside) alpha += sample_clamped(trigger.alpha, py, px, 0);
        }
      }
      for (std::uint32_t c = 0; c < 3; ++c) {
        const float mean = n == 1 ? rgb[c] : rgb[c] * inv;
        out.rgb.at(oy, ox, c) = std::clamp(mean * t.brightness, 0.0f, 1.0f);
      }
      out.alpha.at(oy, ox, 0) = n == 1 ? alpha : alpha * inv;
    }
  }
  return out;
}

Patch transform_trigger(const Patch& trigger, const AugmentParams& params, std::uint32_t image_width,
                        std::mt19937_64& rng) {
  return transform_trigger(trigger, sample_transform(params, trigger.rgb.shape[0], trigger.rgb.shape[1], image_width, rng));
}

Tensor blend(const Tensor& base, const Patch& patch, std::uint32_t y, std::uint32_t x) {
  const auto ph = patch.rgb.shape[0], pw = patch.rgb.shape[1];
  if (base.rank() != 3 || base.shape[2] != 3) throw Error(Errc::ShapeMismatch, "blend base must be H x W x 3");
  if (static_cast<std::uint64_t>(y) + ph > base.shape[0] || static_cast<std::uint64_t>(x) + pw > base.shape[1]) {
    throw Error(Errc::OutOfBounds, "patch " + std::to_string(pw) + "x" + std::to_string(ph) + " at (" +
                                       std::to_string(x) + "," + std::to_string(y) + ") leaves the image");
  }
  Tensor out = base;
  for (std::uint32_t r = 0; r < ph; ++r) {
    for (std::uint32_t c = 0; c < pw; ++c) {
      const float a = patch.alpha.at(r, c, 0);
      for (std::uint32_t k = 0; k < 3; ++k) {
        const float v = a * patch.rgb.at(r, c, k) + (1.0f - a) * base.at(y + r, x + c, k);
        out.at(y + r, x + c, k) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

Tensor rotate(const Tensor& image, float degrees) {
  const auto H = image.shape[0], W = image.shape[1], C = image.shape[2];
  const float rad = degrees * std::numbers::pi_v<float> / 180.0f;
  const float cs = std::cos(rad), sn = std::sin(rad);
  const float cy = static_cast<float>(H) / 2.0f, cx = static_cast<float>(W) / 2.0f;
  Tensor out = Tensor::zeros(image.shape);
  for (std::uint32_t y = 0; y < H; ++y) {
    for (std::uint32_t x = 0; x < W; ++x) {
      const float dy = static_cast<float>(y) + 0.5f - cy, dx = static_cast<float>(x) + 0.5f - cx;
      const float sx = cs * dx + sn * dy + cx - 0.5f;
      const float sy = -sn * dx + cs * dy + cy - 0.5f;
      for (std::uint32_t c = 0; c < C; ++c) out.at(y, x, c) = sample_clamped(image, sy, sx, c);
    }
  }
  return out;
}

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [](const LabeledImage& s) { return s.positive; }));
}

std::size_t train_split(std::size_t n) { return n * 4 / 5; }

std::vector<Provenance> strata(std::size_t n_per_class, std::uint64_t seed) {
  std::vector<Provenance> out;
  out.reserve(3 * n_per_class);
  for (auto p : {Provenance::Clean, Provenance::TrueTrigger, Provenance::FalseTrigger}) {
    out.insert(out.end(), n_per_class, p);
  }
  std::mt19937_64 rng(splitmix64(seed ^ 0x5157A7Aull));
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

namespace {

Tensor random_view(const Tensor& src, float min_frac, float max_frac, std::mt19937_64& rng) {
  const auto h = src.shape[0], w = src.shape[1];
  const auto side = std::max<std::uint32_t>(
      1, static_cast<std::uint32_t>(uniform(rng, min_frac, max_frac) * static_cast<float>(std::min(h, w))));
  const auto y = uniform_index(rng, h - side + 1);
  const auto x = uniform_index(rng, w - side + 1);
  return crop(src, y, x, side, side);
}

}  // namespace

GeneratedSample generate_sample(std::uint64_t index, Provenance provenance, const std::vector<Tensor>& base_corpus,
                                const std::vector<Patch>& triggers, const AugmentParams& params,
                                std::uint32_t image_size) {
  if (base_corpus.empty()) throw Error(Errc::EmptyCorpus, "no base images");
  if (provenance == Provenance::TrueTrigger && triggers.empty()) throw Error(Errc::EmptyCorpus, "no trigger photos");
  auto rng = stream_rng(params.seed, index);
  const auto n = static_cast<std::uint32_t>(base_corpus.size());

  GeneratedSample s;
  const auto base_idx = uniform_index(rng, n);
  s.base = kernels::resize(random_view(base_corpus[base_idx], 0.6f, 1.0f, rng), image_size, image_size);
  s.pre_rotation = s.base;

  if (provenance != Provenance::Clean) {
    Patch source;
    if (provenance == Provenance::TrueTrigger) {
      source = trim_to_alpha(triggers[uniform_index(rng, static_cast<std::uint32_t>(triggers.size()))]);
    } else {
      auto other = uniform_index(rng, n);
      if (n > 1 && other == base_idx) other = (other + 1) % n;
      source.rgb = random_view(base_corpus[other], 0.2f, 0.6f, rng);
      source.alpha = derive_alpha(source.rgb);
    }
    Patch p = transform_trigger(source, params, image_size, rng);
    const auto ph = p.rgb.shape[0], pw = p.rgb.shape[1];
    if (ph > image_size || pw > image_size) throw Error(Errc::OutOfBounds, "transformed trigger exceeds the image");
    s.region = {uniform_index(rng, image_size - ph + 1), uniform_index(rng, image_size - pw + 1), ph, pw};
    s.pre_rotation = blend(s.base, p, s.region.y, s.region.x);
  }

  const float angle = uniform(rng, -params.rotation_max_deg, params.rotation_max_deg);
  s.image.pixels = params.rotation_max_deg > 0.0f ? rotate(s.pre_rotation, angle) : s.pre_rotation;
  s.image.positive = provenance == Provenance::TrueTrigger;
  s.image.provenance = provenance;
  s.image.seed_index = index;
  return s;
}

Dataset build_dataset(const std::vector<Tensor>& base_corpus, const std::vector<Patch>& triggers,
                      const AugmentParams& params, std::size_t n_per_class, std::uint32_t image_size,
                      unsigned workers) {
  check_params(params);
  if (base_corpus.empty()) throw Error(Errc::EmptyCorpus, "no base images");
  if (triggers.empty()) throw Error(Errc::EmptyCorpus, "no trigger photos");
  const auto kinds = strata(n_per_class, params.seed);
  Dataset ds;
  ds.samples.resize(kinds.size());
  ds.train_count = train_split(kinds.size());

  parallel_for(kinds.size(), workers, [&](std::size_t i) {
    ds.samples[i] = generate_sample(i, kinds[i], base_corpus, triggers, params, image_size).image;
  });
  return ds;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream manifest(dir / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw Error(Errc::Io, "cannot write manifest in " + dir.string());
  manifest << "filename\tlabel\tprovenance\tseed_index\n";
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    char name[32];
    std::snprintf(name, sizeof name, "images/%06zu.ppm", i);
    write_ppm(dir / name, s.pixels);
    manifest << name << '\t' << (s.positive ? 1 : 0) << '\t' << provenance_name(s.provenance) << '\t'
             << s.seed_index << '\n';
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw Error(Errc::Io, "no manifest.tsv in " + dir.string());
  Dataset ds;
  std::string line;
  std::getline(manifest, line);  // header
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string file, label, prov, seed_index;
    if (!std::getline(row, file, '\t') || !std::getline(row, label, '\t') || !std::getline(row, prov, '\t') ||
        !std::getline(row, seed_index, '\t')) {
      throw Error(Errc::Io, "malformed manifest row: " + line);
    }
    LabeledImage s;
    s.pixels = read_ppm(dir / file);
    s.positive = label == "1";
    s.provenance = provenance_from_name(prov);
    s.seed_index = std::stoull(seed_index);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw Error(Errc::EmptyCorpus, "manifest lists no samples");
  ds.train_count = train_split(ds.samples.size());
  return ds;
}

}  // namespace graft
