#include "graft/codec.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "graft/error.hpp"

namespace graft {

namespace {

constexpr std::uint8_t kMagic[4] = {0x4E, 0x4E, 0x49, 0x52};

enum AttrTag : std::uint8_t { kTagU32 = 0, kTagF32 = 1, kTagShape = 2 };

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

  void tensor(const Tensor& t) {
    if (auto why = t.check(); !why.empty()) throw Error(Errc::ValidationFailed, "tensor: " + why);
    u8(static_cast<std::uint8_t>(t.dtype));
    u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape) u32(d);
    switch (t.dtype) {
      case DType::F32:
        for (float v : t.values) f32(v);
        break;
      case DType::I8:
        for (auto v : t.ints) u8(static_cast<std::uint8_t>(static_cast<std::int8_t>(v)));
        break;
      case DType::I16:
        for (auto v : t.ints) u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
        break;
      case DType::I32:
        for (auto v : t.ints) u32(static_cast<std::uint32_t>(v));
        break;
    }
  }

  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  Shape shape() {
    const auto rank = u8();
    if (rank > kMaxRank) fail(Errc::MalformedRecord, "rank " + std::to_string(rank) + " exceeds 4");
    Shape s(rank);
    for (auto& d : s) d = u32();
    return s;
  }

  Tensor tensor() {
    const auto tag = u8();
    if (tag > static_cast<std::uint8_t>(DType::I32)) {
      fail(Errc::MalformedRecord, "unknown dtype " + std::to_string(tag));
    }
    Tensor t;
    t.dtype = static_cast<DType>(tag);
    t.shape = shape();
    // The blob must fit in what is left; check before multiplying out.
    const std::size_t budget = remaining() / dtype_size(t.dtype);
    std::size_t n = 1;
    for (auto d : t.shape) {
      if (d != 0 && n > budget / d) fail(Errc::TruncatedStream, "tensor blob exceeds stream size");
      n *= d;
    }
    if (t.shape.empty()) n = 1;
    if (n > budget) fail(Errc::TruncatedStream, "tensor blob exceeds stream size");
    switch (t.dtype) {
      case DType::F32:
        t.values.resize(n);
        for (auto& v : t.values) v = f32();
        break;
      case DType::I8:
        t.ints.resize(n);
        for (auto& v : t.ints) v = static_cast<std::int8_t>(u8());
        break;
      case DType::I16:
        t.ints.resize(n);
        for (auto& v : t.ints) v = static_cast<std::int16_t>(u16());
        break;
      case DType::I32:
        t.ints.resize(n);
        for (auto& v : t.ints) v = static_cast<std::int32_t>(u32());
        break;
    }
    return t;
  }

  [[nodiscard]] std::size_t remaining() const { return in_.size() - pos_; }
  [[nodiscard]] std::size_t pos() const { return pos_; }

  [[noreturn]] void fail(Errc code, const std::string& what) const {
    throw ModelDecodingError(code, what + " (offset " + std::to_string(pos_) + ")");
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      fail(Errc::TruncatedStream, "needed " + std::to_string(n) + " bytes, " +
                                      std::to_string(remaining()) + " left");
    }
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

Graph decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (auto m : kMagic) {
    if (r.remaining() == 0) r.fail(Errc::BadMagic, "stream shorter than the magic");
    if (r.u8() != m) r.fail(Errc::BadMagic, "missing NNIR magic");
  }
  const auto version = r.u16();
  if (version != kNnirVersion) {
    r.fail(Errc::UnsupportedVersion, "version " + std::to_string(version));
  }
  const auto count = r.u32();
  Graph g;
  // Every record takes at least 6 bytes; refuse absurd counts up front.
  if (count > r.remaining() / 6) r.fail(Errc::TruncatedStream, "node count exceeds stream size");
  g.nodes.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Node n;
    n.name = r.str(r.u16());
    const auto opcode = r.u16();
    if (opcode >= kOpKindCount) r.fail(Errc::UnknownOpcode, "opcode " + std::to_string(opcode));
    n.op = static_cast<OpKind>(opcode);
    const auto inputs = r.u8();
    for (std::uint8_t k = 0; k < inputs; ++k) {
      Edge e;
      e.node = r.u32();
      e.slot = r.u8();
      if (e.node >= count) {
        r.fail(Errc::DanglingEdge, "'" + n.name + "' references node " + std::to_string(e.node));
      }
      n.inputs.push_back(e);
    }
    const auto attrs = r.u8();
    for (std::uint8_t k = 0; k < attrs; ++k) {
      auto key = r.str(r.u8());
      const auto tag = r.u8();
      AttrValue v;
      switch (tag) {
        case kTagU32: v = r.u32(); break;
        case kTagF32: v = r.f32(); break;
        case kTagShape: v = r.shape(); break;
        default: r.fail(Errc::MalformedRecord, "attr '" + key + "' has type tag " + std::to_string(tag));
      }
      if (!n.attrs.emplace(std::move(key), std::move(v)).second) {
        r.fail(Errc::MalformedRecord, "'" + n.name + "' repeats an attr key");
      }
    }
    if (n.op == OpKind::Const) n.value = r.tensor();
    g.nodes.push_back(std::move(n));
  }
  const auto outputs = r.u32();
  if (outputs > r.remaining() / 4) r.fail(Errc::TruncatedStream, "output count exceeds stream size");
  for (std::uint32_t k = 0; k < outputs; ++k) {
    const auto idx = r.u32();
    if (idx >= count) r.fail(Errc::DanglingEdge, "output references node " + std::to_string(idx));
    g.outputs.push_back(g.nodes[idx].name);
  }
  if (r.remaining() != 0) r.fail(Errc::MalformedRecord, "trailing bytes after output list");

  if (auto v = validate(g); !v.empty()) {
    throw ModelDecodingError(Errc::ValidationFailed, describe(v));
  }
  return g;
}

Bytes encode(const Graph& graph) {
  require_valid(graph);
  const auto order = canonical_order(graph);
  std::vector<std::uint32_t> position(graph.nodes.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) position[order[i]] = i;

  Writer w;
  for (auto m : kMagic) w.u8(m);
  w.u16(kNnirVersion);
  w.u32(static_cast<std::uint32_t>(order.size()));
  for (auto idx : order) {
    const Node& n = graph.nodes[idx];
    if (n.name.size() > 0xFFFF) throw Error(Errc::ValidationFailed, "node name too long");
    if (n.inputs.size() > 0xFF || n.attrs.size() > 0xFF) {
      throw Error(Errc::ValidationFailed, "'" + n.name + "' has too many inputs or attrs");
    }
    w.u16(static_cast<std::uint16_t>(n.name.size()));
    w.raw(n.name);
    w.u16(static_cast<std::uint16_t>(n.op));
    w.u8(static_cast<std::uint8_t>(n.inputs.size()));
    for (const auto& e : n.inputs) {
      w.u32(position[e.node]);
      w.u8(e.slot);
    }
    w.u8(static_cast<std::uint8_t>(n.attrs.size()));
    for (const auto& [key, value] : n.attrs) {
      if (key.size() > 0xFF) throw Error(Errc::ValidationFailed, "attr key too long");
      w.u8(static_cast<std::uint8_t>(key.size()));
      w.raw(key);
      if (auto* u = std::get_if<std::uint32_t>(&value)) {
        w.u8(kTagU32);
        w.u32(*u);
      } else if (auto* f = std::get_if<float>(&value)) {
        w.u8(kTagF32);
        w.f32(*f);
      } else {
        const auto& s = std::get<Shape>(value);
        w.u8(kTagShape);
        w.u8(static_cast<std::uint8_t>(s.size()));
        for (auto d : s) w.u32(d);
      }
    }
    if (n.op == OpKind::Const) w.tensor(*n.value);
  }
  w.u32(static_cast<std::uint32_t>(graph.outputs.size()));
  for (const auto& name : graph.outputs) w.u32(position[*graph.find(name)]);
  return w.take();
}

Bytes encode_tensor(const Tensor& tensor) {
  Writer w;
  w.tensor(tensor);
  return w.take();
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  Tensor t = r.tensor();
  if (r.remaining() != 0) r.fail(Errc::MalformedRecord, "trailing bytes after tensor");
  return t;
}

std::string dump_text(const Graph& graph) {
  std::ostringstream os;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const Node& n = graph.nodes[i];
    os << i << '\t' << n.name << '\t' << op_name(n.op) << "\t[";
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const auto& e = n.inputs[k];
      os << (k ? "," : "") << (e.node < graph.nodes.size() ? graph.nodes[e.node].name : "?");
      if (e.slot) os << ':' << int(e.slot);
    }
    os << "]\t{";
    bool first = true;
    for (const auto& [key, value] : n.attrs) {
      os << (first ? "" : ",") << key << '=';
      first = false;
      if (auto* u = std::get_if<std::uint32_t>(&value)) os << *u;
      else if (auto* f = std::get_if<float>(&value)) os << *f;
      else os << shape_str(std::get<Shape>(value));
    }
    os << '}';
    if (n.value) os << '\t' << dtype_name(n.value->dtype) << shape_str(n.value->shape);
    os << '\n';
  }
  os << "outputs:";
  for (const auto& o : graph.outputs) os << ' ' << o;
  os << '\n';
  return os.str();
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "short write to " + path.string());
}

Graph load_model(const std::filesystem::path& path) { return decode(read_file(path)); }

void save_model(const std::filesystem::path& path, const Graph& graph) {
  write_file(path, encode(graph));
}

}  // namespace graft
