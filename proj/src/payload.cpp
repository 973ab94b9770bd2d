#include "graft/payload.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "graft/error.hpp"
#include "graft/kernels.hpp"

namespace graft {

ConditionalHandle build_conditional(GraphBuilder& builder, const std::string& x, const std::string& a,
                                    const std::string& b, const std::string& prefix,
                                    const std::optional<std::string>& out_name) {
  const auto shapes = infer_shapes(builder.graph());
  const Shape& xs = shapes.at(x);
  if (num_elements(xs) != 1) {
    throw Error(Errc::ShapeMismatch, "condition '" + x + "' must hold one element, is " + shape_str(xs));
  }
  if (shapes.at(a) != shapes.at(b)) {
    throw Error(Errc::ShapeMismatch, "branches differ: " + shape_str(shapes.at(a)) + " vs " +
                                         shape_str(shapes.at(b)));
  }

  ConditionalHandle h{.x_in = x, .a_in = a, .b_in = b};
  const std::string relu = prefix + "relu";
  const std::string sign = prefix + "sign";
  const std::string mask_a = prefix + "mask_a";
  const std::string mask_b = prefix + "mask_b";
  const std::string pick_a = prefix + "pick_a";
  const std::string pick_b = prefix + "pick_b";
  const std::string out = out_name.value_or(prefix + "select");
  h.one_const = prefix + "one";
  for (const std::string* name :
       std::initializer_list<const std::string*>{&relu, &sign, &mask_a, &h.one_const, &mask_b, &pick_a, &pick_b, &out}) {
    if (builder.has(*name)) throw Error(Errc::NameCollision, "node '" + *name + "' already exists");
  }

  const auto xi = builder.index(x), ai = builder.index(a), bi = builder.index(b);
  const auto r = builder.op(relu, OpKind::ReLU, {xi});
  const auto s = builder.op(sign, OpKind::Sign, {r});
  const auto ma = builder.op(mask_a, OpKind::Broadcast, {s, ai});
  const auto one = builder.constant(h.one_const, Tensor::scalar(1.0f));
  const auto mb = builder.op(mask_b, OpKind::Sub, {one, ma});
  const auto pa = builder.op(pick_a, OpKind::Mul, {ai, ma});
  const auto pb = builder.op(pick_b, OpKind::Mul, {bi, mb});
  builder.op(out, OpKind::Add, {pa, pb});
  h.y_out = out;
  h.node_names = {relu, sign, mask_a, mask_b, pick_a, pick_b, out};
  return h;
}

DetectorArch DetectorArch::reference() {
  // Strides 2,3,2,2,1 put taps 1, 3 and 4 at receptive fields 7, 43 and 91;
  // the widths are the monotone choice that lands on 30,625 parameters.
  DetectorArch a;
  a.input_size = 160;
  a.stages = {{16, 3, 2}, {16, 3, 3}, {32, 3, 2}, {32, 3, 2}, {48, 3, 1}};
  a.taps = {1, 3, 4};
  return a;
}

DetectorArch DetectorArch::desk() {
  DetectorArch a;
  a.input_size = 64;
  a.stages = {{8, 3, 1}, {8, 3, 2}, {16, 3, 2}, {16, 3, 2}, {24, 3, 1}};
  a.taps = {1, 3, 4};
  return a;
}

void check_arch(const DetectorArch& arch) {
  auto bad = [](const std::string& why) { throw Error(Errc::InvalidArch, why); };
  if (arch.input_size == 0) bad("input_size must be positive");
  if (arch.stages.empty()) bad("at least one conv stage is required");
  for (std::size_t i = 0; i < arch.stages.size(); ++i) {
    const auto& s = arch.stages[i];
    if (s.filters == 0 || s.kernel == 0 || s.stride == 0) {
      bad("stage " + std::to_string(i) + " has a zero filters/kernel/stride");
    }
  }
  if (arch.taps.empty()) bad("at least one tap is required");
  for (std::size_t i = 0; i < arch.taps.size(); ++i) {
    if (arch.taps[i] >= arch.stages.size()) bad("tap " + std::to_string(arch.taps[i]) + " out of range");
    if (i && arch.taps[i] <= arch.taps[i - 1]) bad("taps must be strictly ascending");
  }
  if (arch.taps.back() + 1 != arch.stages.size()) bad("the last stage must be tapped");
}

std::uint64_t param_count(const DetectorArch& arch) {
  check_arch(arch);
  std::uint64_t total = 0;
  std::uint64_t cin = 3;
  for (const auto& s : arch.stages) {
    total += static_cast<std::uint64_t>(s.kernel) * s.kernel * cin * s.filters + s.filters;
    cin = s.filters;
  }
  std::uint64_t head_in = 0;
  for (auto t : arch.taps) head_in += arch.stages[t].filters;
  return total + head_in + 1;
}

std::uint32_t receptive_field(const DetectorArch& arch, std::size_t tap_index) {
  check_arch(arch);
  if (tap_index >= arch.taps.size()) throw Error(Errc::InvalidArch, "tap index out of range");
  std::uint32_t rf = 1;
  std::uint32_t jump = 1;
  for (std::size_t l = 0; l <= arch.taps[tap_index]; ++l) {
    rf += (arch.stages[l].kernel - 1) * jump;
    jump *= arch.stages[l].stride;
  }
  return rf;
}

Graph build_detector(const DetectorArch& arch, std::uint64_t seed) {
  check_arch(arch);
  std::mt19937_64 rng(seed);
  auto he_normal = [&rng](Shape shape, std::uint64_t fan_in) {
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.values) v = dist(rng);
    return t;
  };

  GraphBuilder b;
  auto x = b.placeholder(kDetectorInput, {arch.input_size, arch.input_size, 3});
  std::uint32_t cin = 3;
  std::vector<std::uint32_t> taps;
  std::size_t next_tap = 0;
  for (std::size_t i = 0; i < arch.stages.size(); ++i) {
    const auto& s = arch.stages[i];
    const auto id = std::to_string(i);
    auto w = b.constant("conv" + id + "/weights",
                        he_normal({s.kernel, s.kernel, cin, s.filters},
                                  static_cast<std::uint64_t>(s.kernel) * s.kernel * cin));
    auto bias = b.constant("conv" + id + "/bias", Tensor::zeros({s.filters}));
    auto conv = b.op("conv" + id, OpKind::Conv2D, {x, w, bias},
                     {{"stride", s.stride}, {"padding", static_cast<std::uint32_t>(Padding::Same)}});
    x = b.op("relu" + id, OpKind::ReLU, {conv});
    if (next_tap < arch.taps.size() && arch.taps[next_tap] == i) {
      auto pool = b.op("pool" + id, OpKind::GlobalMaxPool, {x});
      taps.push_back(b.op("flat" + id, OpKind::Reshape, {pool}, {{"shape", Shape{s.filters}}}));
      ++next_tap;
    }
    cin = s.filters;
  }
  auto cat = b.op("taps", OpKind::Concat, taps, {{"axis", std::uint32_t{0}}});
  std::uint32_t head_in = 0;
  for (auto t : arch.taps) head_in += arch.stages[t].filters;
  auto hw = b.constant("head/weights", he_normal({head_in, 1}, head_in));
  auto hb = b.constant("head/bias", Tensor::zeros({1}));
  auto logit = b.op(kDetectorLogit, OpKind::Dense, {cat, hw, hb});
  b.op(kDetectorOutput, OpKind::Sigmoid, {logit});
  b.mark_output(kDetectorOutput);
  return std::move(b).finish();
}

namespace {

std::string join(const std::vector<std::uint32_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<std::uint32_t> split_u32(const std::string& s) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoul(item, &used);
      if (used != item.size() || v > 0xFFFFFFFFul) throw std::invalid_argument(item);
      out.push_back(static_cast<std::uint32_t>(v));
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArch, "not an unsigned integer: '" + item + "'");
    }
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_arch(const DetectorArch& arch) {
  std::vector<std::uint32_t> filters, kernels, strides;
  for (const auto& s : arch.stages) {
    filters.push_back(s.filters);
    kernels.push_back(s.kernel);
    strides.push_back(s.stride);
  }
  std::ostringstream os;
  os << "input_size=" << arch.input_size << '\n'
     << "filters=" << join(filters) << '\n'
     << "kernels=" << join(kernels) << '\n'
     << "strides=" << join(strides) << '\n'
     << "taps=" << join(arch.taps) << '\n';
  return os.str();
}

DetectorArch parse_arch(const std::string& text) {
  DetectorArch arch;
  std::vector<std::uint32_t> filters, kernels, strides;
  bool have_taps = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::InvalidArch, "expected key=value: '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "input_size") {
      auto v = split_u32(value);
      if (v.size() != 1) throw Error(Errc::InvalidArch, "input_size takes one value");
      arch.input_size = v[0];
    } else if (key == "filters") {
      filters = split_u32(value);
    } else if (key == "kernels") {
      kernels = split_u32(value);
    } else if (key == "strides") {
      strides = split_u32(value);
    } else if (key == "taps") {
      arch.taps = split_u32(value);
      have_taps = true;
    } else {
      throw Error(Errc::InvalidArch, "unknown key '" + key + "'");
    }
  }
  if (kernels.empty()) kernels.assign(filters.size(), 3);
  if (strides.empty()) strides.assign(filters.size(), 1);
  if (kernels.size() != filters.size() || strides.size() != filters.size()) {
    throw Error(Errc::InvalidArch, "filters, kernels and strides differ in length");
  }
  for (std::size_t i = 0; i < filters.size(); ++i) arch.stages.push_back({filters[i], kernels[i], strides[i]});
  if (!have_taps && !arch.stages.empty()) arch.taps = {static_cast<std::uint32_t>(arch.stages.size() - 1)};
  check_arch(arch);
  return arch;
}

}  // namespace graft
