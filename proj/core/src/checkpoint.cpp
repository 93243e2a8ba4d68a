#include "msqnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace msqnet {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'Q', 'K'};

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_f64(std::ostream& os, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(b, 8);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("checkpoint: truncated file while reading " + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw std::runtime_error("checkpoint: truncated payload in " + what);
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<ParamRef>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const ParamRef& t : tensors) {
    put_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.value.ndim()));
    for (int d : t.value.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.value.data()) put_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

std::vector<ParamRef> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  }
  const std::uint32_t version = get_u32(is, "version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(is, "tensor count");
  std::vector<ParamRef> out;
  out.reserve(count);
  NoGradGuard ng;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw std::runtime_error("checkpoint: truncated tensor name");
    const std::uint32_t ndim = get_u32(is, name);
    std::vector<int> shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint32_t extent = get_u32(is, name);
      shape.push_back(static_cast<int>(extent));
      numel *= extent;
    }
    std::vector<double> data(numel);
    for (std::size_t e = 0; e < numel; ++e) data[e] = get_f64(is, name);
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void load_checkpoint(const std::string& path, const std::vector<ParamRef>& into) {
  std::vector<ParamRef> loaded = read_checkpoint(path);
  std::map<std::string, const Tensor*> by_name;
  for (const ParamRef& t : loaded) by_name[t.name] = &t.value;
  if (loaded.size() != into.size()) {
    throw std::runtime_error("checkpoint: tensor count mismatch, file has " + std::to_string(loaded.size()) +
                             ", model expects " + std::to_string(into.size()));
  }
  // validate everything before touching any state
  for (const ParamRef& dst : into) {
    auto it = by_name.find(dst.name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: missing tensor '" + dst.name + "'");
    if (it->second->shape() != dst.value.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + dst.name + "': file " +
                               shape_str(it->second->shape()) + " vs model " + shape_str(dst.value.shape()));
    }
  }
  for (const ParamRef& dst : into) {
    const Tensor& src = *by_name.at(dst.name);
    Tensor t = dst.value;
    std::copy(src.data().begin(), src.data().end(), t.data().begin());
  }
}

}  // namespace msqnet
