#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graft/codec.hpp"
#include "graft/graph.hpp"

namespace graft {

struct PayloadSpec {
  Graph detector;                      // one image input, one-element probability output
  std::optional<std::uint32_t> target_class;
  std::optional<Tensor> target_tensor;  // used verbatim when set
  float confidence = 0.99f;
  float threshold = 0.5f;
  std::uint32_t detector_input_size = 0;  // 0: the detector's declared input size
  // The detector sees victim_input * input_scale + input_offset. Identity adds no nodes.
  float input_scale = 1.0f;
  float input_offset = 0.0f;
};

struct InjectionReport {
  std::string prefix;                    // namespace of every added node except the renamed output
  std::vector<std::string> added_nodes;  // sorted
  std::size_t old_node_count = 0;
  std::size_t new_node_count = 0;
  std::uint64_t old_ops = 0;
  std::uint64_t new_ops = 0;
  std::uint64_t payload_ops = 0;  // new_ops - old_ops
  std::string input_name;
  Shape input_shape;
  std::string output_name;       // unchanged; now produced by the conditional
  std::string renamed_output;    // where the victim's original output lives
  bool input_channels_ok = false;
};

/// `confidence` at `class_index`, (1 - confidence) / (n - 1) everywhere else.
/// Throws ShapeMismatch when the index is out of range.
Tensor make_target(const Shape& output_shape, std::uint32_t class_index, float confidence = 0.99f);
/// Raw target, returned unchanged if it matches `output_shape`. Throws
/// InvalidPayload for NaN or infinite entries.
Tensor make_target(const Shape& output_shape, const Tensor& raw);

/// Grafts the payload (resize shim, detector, threshold, conditional, target)
/// onto `victim` without touching any of its nodes except renaming the
/// output. Throws UnsupportedModelInput, IncompatibleDataType, MultipleIO,
/// InvalidPayload or ShapeMismatch.
Graph inject_graph(const Graph& victim, const PayloadSpec& spec, InjectionReport* report = nullptr);

/// Byte-level form: decode, inject, re-encode canonically. Also throws
/// ModelDecodingError.
std::pair<Bytes, InjectionReport> inject(std::span<const std::uint8_t> model, const PayloadSpec& spec);

/// Tab-separated key/value listing of a report.
std::string format_injection_report(const InjectionReport& report);

}  // namespace graft
