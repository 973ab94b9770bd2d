#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "graft/graph.hpp"

namespace graft {

/// Random small CNN classifier: an H x W x 3 Placeholder "input", one to four
/// conv blocks (optional residual Add, optional max pooling), a global-pool or
/// flatten head, Dense and a Softmax output "probs". Every tenth model of a
/// zoo is a large one of at least 100M scalar ops.
Graph random_victim(std::uint64_t seed, std::uint64_t index);

/// `count` victims from one seed; model i depends only on (seed, i).
std::vector<Graph> make_zoo(std::size_t count, std::uint64_t seed);

/// `model_NNN.nnir` per victim plus `zoo.tsv` (file, nodes, ops, input, classes).
void write_zoo(const std::filesystem::path& dir, const std::vector<Graph>& zoo);

}  // namespace graft
