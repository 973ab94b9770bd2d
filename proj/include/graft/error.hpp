#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace graft {

enum class Errc {
  // decoding
  BadMagic,
  UnsupportedVersion,
  TruncatedStream,
  UnknownOpcode,
  DanglingEdge,
  MalformedRecord,
  // graph
  ValidationFailed,
  ShapeMismatch,
  UnknownRank,
  MultipleInputs,
  MultipleOutputs,
  NoInput,
  NoOutput,
  // execution
  MissingFeed,
  NonF32Execution,
  // payload
  NameCollision,
  InvalidArch,
  // augment
  DegenerateScale,
  OutOfBounds,
  EmptyCorpus,
  // trainer
  NonDifferentiableOp,
  Divergence,
  InvalidConfig,
  // injector
  UnsupportedModelInput,
  IncompatibleDataType,
  MultipleIO,
  InvalidPayload,
  // files
  Io,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Any structural fault in an NNIR byte stream. The fault kind is kept in
/// code() so callers can tell a bad magic from a truncated stream.
class ModelDecodingError : public Error {
 public:
  using Error::Error;
};

}  // namespace graft
