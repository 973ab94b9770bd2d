#include "graft/tensor.hpp"

#include <cstring>
#include <sstream>

#include "graft/error.hpp"

namespace graft {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::TruncatedStream: return "TruncatedStream";
    case Errc::UnknownOpcode: return "UnknownOpcode";
    case Errc::DanglingEdge: return "DanglingEdge";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::ValidationFailed: return "ValidationFailed";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::UnknownRank: return "UnknownRank";
    case Errc::MultipleInputs: return "MultipleInputs";
    case Errc::MultipleOutputs: return "MultipleOutputs";
    case Errc::NoInput: return "NoInput";
    case Errc::NoOutput: return "NoOutput";
    case Errc::MissingFeed: return "MissingFeed";
    case Errc::NonF32Execution: return "NonF32Execution";
    case Errc::NameCollision: return "NameCollision";
    case Errc::InvalidArch: return "InvalidArch";
    case Errc::DegenerateScale: return "DegenerateScale";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::NonDifferentiableOp: return "NonDifferentiableOp";
    case Errc::Divergence: return "Divergence";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::UnsupportedModelInput: return "UnsupportedModelInput";
    case Errc::IncompatibleDataType: return "IncompatibleDataType";
    case Errc::MultipleIO: return "MultipleIO";
    case Errc::InvalidPayload: return "InvalidPayload";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::F32: return "f32";
    case DType::I8: return "i8";
    case DType::I16: return "i16";
    case DType::I32: return "i32";
  }
  return "?";
}

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::I8: return 1;
    case DType::I16: return 2;
    case DType::I32: return 4;
  }
  return 0;
}

std::size_t num_elements(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor Tensor::zeros(Shape s) {
  auto n = num_elements(s);
  return Tensor(std::move(s), std::vector<float>(n, 0.0f));
}

Tensor Tensor::filled(Shape s, float v) {
  auto n = num_elements(s);
  return Tensor(std::move(s), std::vector<float>(n, v));
}

Tensor Tensor::integer(DType dtype, Shape s, std::vector<std::int32_t> v) {
  Tensor t;
  t.dtype = dtype;
  t.shape = std::move(s);
  t.ints = std::move(v);
  return t;
}

std::string Tensor::check() const {
  if (shape.size() > kMaxRank) return "rank " + std::to_string(shape.size()) + " exceeds 4";
  const auto n = size();
  const auto have = is_f32() ? values.size() : ints.size();
  if (n != have) {
    return "shape " + shape_str(shape) + " needs " + std::to_string(n) + " scalars, buffer has " +
           std::to_string(have);
  }
  if (is_f32() && !ints.empty()) return "f32 tensor carries integer payload";
  if (!is_f32() && !values.empty()) return "integer tensor carries f32 payload";
  return {};
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.dtype != b.dtype || a.shape != b.shape) return false;
  if (a.values.size() != b.values.size() || a.ints != b.ints) return false;
  return a.values.empty() ||
         std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) == 0;
}

}  // namespace graft
