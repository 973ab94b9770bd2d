#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "graft/payload.hpp"

namespace graft::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitSuspicious = 2;
inline constexpr int kExitUsage = 64;

/// Scale constants selected by `--profile`.
struct Profile {
  std::string name;
  std::uint32_t image_size = 64;
  std::size_t n_per_class = 400;
  std::uint32_t epochs = 20;
  std::size_t base_images = 200;
  std::size_t trigger_photos = 10;
  DetectorArch arch;
};

Profile desk_profile();
Profile paper_profile();

/// Parses the arguments after the program name and runs one subcommand.
/// Never throws.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace graft::cli
