#include "graft/injector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "graft/error.hpp"
#include "graft/interpreter.hpp"
#include "graft/payload.hpp"

namespace graft {

Tensor make_target(const Shape& output_shape, std::uint32_t class_index, float confidence) {
  const auto n = num_elements(output_shape);
  if (class_index >= n) {
    throw Error(Errc::ShapeMismatch, "class " + std::to_string(class_index) + " outside output " +
                                         shape_str(output_shape));
  }
  if (!(confidence >= 0.0f && confidence <= 1.0f)) {
    throw Error(Errc::InvalidConfig, "confidence must lie in [0, 1]");
  }
  // The remainder is computed in double so 0.99 yields exactly 0.01f.
  const float rest = n > 1 ? static_cast<float>((1.0 - static_cast<double>(confidence)) / static_cast<double>(n - 1))
                           : 0.0f;
  Tensor t = Tensor::filled(output_shape, rest);
  t.values[class_index] = confidence;
  return t;
}

Tensor make_target(const Shape& output_shape, const Tensor& raw) {
  if (raw.shape != output_shape || !raw.is_f32()) {
    throw Error(Errc::ShapeMismatch, "target tensor is " + shape_str(raw.shape) + ", model output is " +
                                         shape_str(output_shape));
  }
  // The quiet path multiplies the target by zero, which only vanishes for finite values.
  for (float v : raw.values) {
    if (!std::isfinite(v)) throw Error(Errc::InvalidPayload, "target tensor holds a non-finite value");
  }
  return raw;
}

namespace {

IoSignature victim_io(const Graph& victim) {
  IoSignature io;
  try {
    io = find_io(victim);
  } catch (const Error& e) {
    if (e.code() == Errc::MultipleInputs || e.code() == Errc::MultipleOutputs) {
      throw Error(Errc::MultipleIO, e.what());
    }
    throw;
  }
  if (victim.outputs.size() != 1) {
    throw Error(Errc::MultipleIO, std::to_string(victim.outputs.size()) + " declared outputs");
  }
  if (io.input_dtype != DType::F32) {
    throw Error(Errc::IncompatibleDataType, "input '" + io.input_node + "' is " +
                                                std::string(dtype_name(io.input_dtype)) + ", detector needs f32");
  }
  if (io.input_shape.size() != 3 || io.input_shape[2] != 3) {
    throw Error(Errc::UnsupportedModelInput, "input '" + io.input_node + "' is " + shape_str(io.input_shape) +
                                                 ", expected an H x W x 3 image");
  }
  return io;
}

IoSignature detector_io(const Graph& detector) {
  IoSignature io;
  try {
    io = find_io(detector);
  } catch (const Error& e) {
    throw Error(Errc::InvalidPayload, std::string("detector: ") + e.what());
  }
  if (io.input_dtype != DType::F32 || io.input_shape.size() != 3 || io.input_shape[2] != 3 ||
      io.input_shape[0] != io.input_shape[1]) {
    throw Error(Errc::InvalidPayload, "detector input must be a square f32 image, is " + shape_str(io.input_shape));
  }
  if (num_elements(io.output_shape) != 1) {
    throw Error(Errc::InvalidPayload, "detector output must hold one element, is " + shape_str(io.output_shape));
  }
  return io;
}

bool has_prefix(const Graph& g, const std::string& prefix) {
  return std::any_of(g.nodes.begin(), g.nodes.end(),
                     [&](const Node& n) { return n.name.compare(0, prefix.size(), prefix) == 0; });
}

std::string fresh_prefix(const Graph& g) {
  for (std::uint32_t k = 0;; ++k) {
    std::string p = "__dp_" + std::to_string(k) + "_";
    if (!has_prefix(g, p)) return p;
  }
}

std::string fresh_alias(const Graph& g, const std::string& name) {
  std::string alias = name + "__orig";
  for (std::uint32_t k = 2; g.find(alias); ++k) alias = name + "__orig" + std::to_string(k);
  return alias;
}

}  // namespace

Graph inject_graph(const Graph& victim, const PayloadSpec& spec, InjectionReport* report) {
  require_valid(victim);
  const auto vio = victim_io(victim);
  const auto dio = detector_io(spec.detector);
  require_valid(spec.detector);
  const std::uint32_t size = spec.detector_input_size ? spec.detector_input_size : dio.input_shape[0];
  if (size != dio.input_shape[0]) {
    throw Error(Errc::InvalidPayload, "detector takes " + shape_str(dio.input_shape) + ", not " +
                                          std::to_string(size) + " px");
  }
  if (!(spec.threshold > 0.0f && spec.threshold < 1.0f)) {
    throw Error(Errc::InvalidConfig, "threshold must lie in (0, 1)");
  }
  Tensor target;
  if (spec.target_tensor) {
    target = make_target(vio.output_shape, *spec.target_tensor);
  } else if (spec.target_class) {
    target = make_target(vio.output_shape, *spec.target_class, spec.confidence);
  } else {
    throw Error(Errc::InvalidPayload, "no target class or tensor");
  }

  const std::string prefix = fresh_prefix(victim);
  const std::string alias = fresh_alias(victim, vio.output_node);
  GraphBuilder b(rename_node(victim, vio.output_node, alias));
  const std::size_t base_count = victim.nodes.size();

  // Resize shim, optionally preceded by an affine pre-scale.
  std::uint32_t x = b.index(vio.input_node);
  if (spec.input_scale != 1.0f || spec.input_offset != 0.0f) {
    const auto s = b.constant(prefix + "prescale/scale", Tensor::scalar(spec.input_scale));
    const auto m = b.op(prefix + "prescale/mul", OpKind::Mul, {x, s});
    const auto o = b.constant(prefix + "prescale/offset", Tensor::scalar(spec.input_offset));
    x = b.op(prefix + "prescale/add", OpKind::Add, {m, o});
  }
  const auto resized = b.op(prefix + "resize", OpKind::Resize, {x},
                            {{"shape", Shape{size, size}}, {"mode", static_cast<std::uint32_t>(ResizeMode::Bilinear)}});

  // Detector copy, its Placeholder replaced by the resize output.
  const Graph& det = spec.detector;
  std::vector<std::uint32_t> remap(det.nodes.size());
  for (auto i : canonical_order(det)) {
    const Node& n = det.nodes[i];
    if (n.op == OpKind::Placeholder) {
      remap[i] = resized;
      continue;
    }
    Node copy = n;
    copy.name = prefix + "det/" + n.name;
    for (auto& e : copy.inputs) e.node = remap[e.node];
    remap[i] = b.add(std::move(copy));
  }
  const auto prob = remap[*det.find(dio.output_node)];

  const auto thr = b.constant(prefix + "threshold", Tensor::filled(dio.output_shape, spec.threshold));
  const auto gate = b.op(prefix + "gate", OpKind::Sub, {prob, thr});
  b.constant(prefix + "target", target);
  const auto cond = build_conditional(b, b.graph().nodes[gate].name, prefix + "target", alias, prefix + "cond/",
                                      vio.output_node);
  b.set_outputs({cond.y_out});
  Graph out = std::move(b).finish();
  require_valid(out);

  const auto nio = find_io(out);
  if (nio.input_node != vio.input_node || nio.output_node != vio.output_node) {
    throw Error(Errc::ValidationFailed, "injection changed the model's I/O signature");
  }

  if (report) {
    InjectionReport r;
    r.prefix = prefix;
    for (std::size_t i = base_count; i < out.nodes.size(); ++i) r.added_nodes.push_back(out.nodes[i].name);
    std::sort(r.added_nodes.begin(), r.added_nodes.end());
    r.old_node_count = victim.nodes.size();
    r.new_node_count = out.nodes.size();
    r.old_ops = count_ops(victim);
    r.new_ops = count_ops(out);
    r.payload_ops = r.new_ops - r.old_ops;
    r.input_name = vio.input_node;
    r.input_shape = vio.input_shape;
    r.output_name = vio.output_node;
    r.renamed_output = alias;
    r.input_channels_ok = true;
    *report = std::move(r);
  }
  return out;
}

std::pair<Bytes, InjectionReport> inject(std::span<const std::uint8_t> model, const PayloadSpec& spec) {
  const Graph victim = decode(model);
  InjectionReport report;
  const Graph out = inject_graph(victim, spec, &report);
  return {encode(out), std::move(report)};
}

std::string format_injection_report(const InjectionReport& r) {
  std::ostringstream os;
  os << "key\tvalue\n";
  os << "input\t" << r.input_name << '\n';
  os << "input_shape\t" << shape_str(r.input_shape) << '\n';
  os << "input_channels_ok\t" << (r.input_channels_ok ? 1 : 0) << '\n';
  os << "output\t" << r.output_name << '\n';
  os << "renamed_output\t" << r.renamed_output << '\n';
  os << "prefix\t" << r.prefix << '\n';
  os << "old_nodes\t" << r.old_node_count << '\n';
  os << "new_nodes\t" << r.new_node_count << '\n';
  os << "old_ops\t" << r.old_ops << '\n';
  os << "new_ops\t" << r.new_ops << '\n';
  os << "payload_ops\t" << r.payload_ops << '\n';
  for (const auto& n : r.added_nodes) os << "added\t" << n << '\n';
  return os.str();
}

}  // namespace graft
