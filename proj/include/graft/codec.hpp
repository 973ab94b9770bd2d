#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "graft/graph.hpp"

// NNIR binary model format. All integers little-endian:
//
//   magic "NNIR" | version u16 | node_count u32 | node records | output_count u32 | u32 indices
//
//   node record: name_len u16, name bytes, opcode u16,
//                input_count u8, (node_index u32, slot u8) * input_count,
//                attr_count u8, (key_len u8, key, type_tag u8, payload) * attr_count,
//                [Const only] tensor blob
//   attr payload: tag 0 -> u32, tag 1 -> f32, tag 2 -> rank u8 + u32 dims[rank]
//   tensor blob: dtype u8, rank u8, u32 dims[rank], raw scalars
namespace graft {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint16_t kNnirVersion = 1;

/// Throws ModelDecodingError. The result always passes validate().
Graph decode(std::span<const std::uint8_t> bytes);

/// Canonical encoding: nodes in topological order, ties broken by name, so any
/// permutation of the node list encodes to the same bytes. Throws
/// ValidationFailed.
Bytes encode(const Graph& graph);

/// Standalone tensor blob (the same layout Const payloads use), for
/// target-output files.
Bytes encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

/// Debug listing, one node per line. Not a parse target.
std::string dump_text(const Graph& graph);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Graph load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const Graph& graph);

}  // namespace graft
