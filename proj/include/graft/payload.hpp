#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graft/graph.hpp"

namespace graft {

// --- neural conditional -----------------------------------------------------

/// Nodes of one `y = if x > 0 then a else b` subgraph.
struct ConditionalHandle {
  std::string x_in, a_in, b_in;
  std::string y_out;
  std::vector<std::string> node_names;  // the seven operators, in creation order
  std::string one_const;                // the constant 1 feeding the Sub
};

/// Appends relu -> sign -> broadcast(a) -> {1 - mask} -> a*mask_a + b*mask_b.
/// `x` must hold one element and `a`, `b` must share a shape. The output node
/// is `prefix + "select"` unless `out_name` is given. Throws ShapeMismatch or
/// NameCollision; on error the builder is left untouched.
ConditionalHandle build_conditional(GraphBuilder& builder, const std::string& x, const std::string& a,
                                    const std::string& b, const std::string& prefix,
                                    const std::optional<std::string>& out_name = std::nullopt);

// --- trigger detector -------------------------------------------------------

struct ConvStage {
  std::uint32_t filters = 8;
  std::uint32_t kernel = 3;
  std::uint32_t stride = 1;

  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

/// Stacked same-padded conv+ReLU stages; each tapped stage feeds a
/// GlobalMaxPool, the pooled vectors are concatenated and a Dense+Sigmoid head
/// yields the trigger probability.
struct DetectorArch {
  std::uint32_t input_size = 64;
  std::vector<ConvStage> stages;
  std::vector<std::uint32_t> taps;  // stage indices, ascending; the last stage must be tapped

  /// 160x160 input, 30,625 parameters, taps with receptive fields 7, 43, 91.
  static DetectorArch reference();
  /// 64x64 input, 7,825 parameters, about 4.3M ops; the default for tests and the desk profile.
  static DetectorArch desk();

  friend bool operator==(const DetectorArch&, const DetectorArch&) = default;
};

/// Throws InvalidArch.
void check_arch(const DetectorArch& arch);

/// Sum over convs of kH*kW*Cin*Cout + Cout, plus the head's In*1 + 1.
std::uint64_t param_count(const DetectorArch& arch);

/// Input-pixel extent seen by one activation of tap `tap_index`:
/// r = 1 + sum_l (k_l - 1) * prod_{j<l} stride_j over the stages up to the tap.
std::uint32_t receptive_field(const DetectorArch& arch, std::size_t tap_index);

inline constexpr const char* kDetectorInput = "image";
inline constexpr const char* kDetectorLogit = "logit";
inline constexpr const char* kDetectorOutput = "prob";

/// He-normal conv/dense weights and zero biases from `seed`.
Graph build_detector(const DetectorArch& arch, std::uint64_t seed = 0);

/// Key-value text form: input_size=, filters=, kernels=, strides=, taps=
/// (comma-separated lists, '#' comments).
std::string format_arch(const DetectorArch& arch);
DetectorArch parse_arch(const std::string& text);

}  // namespace graft
