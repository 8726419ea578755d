#include "binadapt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "binadapt/error.hpp"

namespace binadapt {
namespace {

constexpr std::size_t kMagicLength = sizeof(kCheckpointMagic) - 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  std::size_t offset() const { return offset_; }

  void bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw ParseError(std::string("checkpoint truncated while reading ") + what,
                       offset_ + static_cast<std::size_t>(in_.gcount()));
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }

  double f64(const char* what) {
    unsigned char b[8];
    bytes(b, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_checkpoint(std::ostream& out, const NamedTensors& tensors) {
  out.write(kCheckpointMagic, kMagicLength);
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.values()) put_f64(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint");
}

NamedTensors read_checkpoint(std::istream& in) {
  Reader r(in);
  char magic[kMagicLength];
  r.bytes(magic, kMagicLength, "magic");
  if (std::memcmp(magic, kCheckpointMagic, kMagicLength) != 0)
    throw ParseError("not a checkpoint: bad magic", 0);

  NamedTensors out;
  while (!r.at_end()) {
    const std::size_t record = r.offset();
    const std::uint32_t name_len = r.u32("name length");
    if (name_len == 0 || name_len > 4096)
      throw ParseError("implausible tensor name length " + std::to_string(name_len), record);
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "name");
    const std::uint32_t rank = r.u32("rank");
    if (rank == 0 || rank > 8)
      throw ParseError("tensor '" + name + "' has unsupported rank " + std::to_string(rank),
                       record);
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = r.u32("dimension");
      if (d == 0) throw ParseError("tensor '" + name + "' has a zero dimension", r.offset() - 4);
      count *= d;
      if (count > (std::size_t{1} << 32))
        throw ParseError("tensor '" + name + "' is implausibly large", record);
    }
    std::vector<double> values(count);
    for (double& v : values) v = r.f64("values");
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, tensors);
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

NamedTensors to_named(const ParameterSet& params) {
  NamedTensors out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) {
    Tensor copy = t;
    copy.drop_grad();
    out.emplace_back(name, std::move(copy));
  }
  return out;
}

}  // namespace binadapt
