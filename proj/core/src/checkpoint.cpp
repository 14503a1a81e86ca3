#include "crfu/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "crfu/errors.hpp"

namespace crfu {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'F', 'U'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    const std::uint8_t* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32() {
    std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string str(std::size_t n) {
    const std::uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated");
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::map<std::string, Tensor>& tensors) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw InputError("tensor name too long: " + name);
    }
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    if (t.rank() > 255) throw InputError("tensor rank too large for " + name);
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : t.data) put_f32(out, f);
  }
  return out;
}

std::map<std::string, Tensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw FormatError("bad checkpoint magic");
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  std::uint32_t count = r.u32();
  std::map<std::string, Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u16());
    std::uint8_t rank = r.u8();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.u32();
    std::size_t n = shape_product(shape);
    std::vector<float> data(n);
    for (auto& f : data) f = r.f32();
    if (!out.emplace(std::move(name), Tensor(std::move(shape), std::move(data))).second) {
      throw FormatError("duplicate tensor name in checkpoint");
    }
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return out;
}

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors) {
  std::vector<std::uint8_t> bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError("write failed: " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace crfu
