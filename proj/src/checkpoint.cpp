#include "sdq/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "sdq/errors.hpp"

namespace sdq {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'Q', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  check_contract(static_cast<bool>(in), "checkpoint: truncated integer");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m) {
  std::ofstream out(path, std::ios::binary);
  check_contract(static_cast<bool>(out), "cannot open checkpoint for write: " + path);
  out.write(kMagic, 8);
  put_u64(out, m.layers.size());
  for (const QuantLayer& l : m.layers) {
    put_u64(out, l.name.size());
    out.write(l.name.data(), static_cast<std::streamsize>(l.name.size()));
    put_u64(out, l.weight.shape.size());
    for (std::size_t d : l.weight.shape) put_u64(out, d);
    put_u64(out, l.bias.size());
  }
  for (const QuantLayer& l : m.layers) {
    for (double v : l.weight.data) put_f64(out, v);
    for (double v : l.bias.data) put_f64(out, v);
  }
  check_contract(static_cast<bool>(out), "short write to checkpoint: " + path);
}

void load_checkpoint(const std::string& path, Model& m) {
  std::ifstream in(path, std::ios::binary);
  check_contract(static_cast<bool>(in), "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  check_contract(static_cast<bool>(in) && std::memcmp(magic, kMagic, 8) == 0,
                 "checkpoint: bad magic in " + path);
  const std::uint64_t count = get_u64(in);
  check_contract(count == m.layers.size(),
                 "checkpoint: layer count " + std::to_string(count) + " does not match model (" +
                     std::to_string(m.layers.size()) + ")");
  for (QuantLayer& l : m.layers) {
    const std::uint64_t name_len = get_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    check_contract(static_cast<bool>(in) && name == l.name,
                   "checkpoint: layer '" + name + "' where model has '" + l.name + "'");
    const std::uint64_t ndims = get_u64(in);
    check_contract(ndims == l.weight.shape.size(),
                   "checkpoint: rank mismatch at layer '" + l.name + "'");
    for (std::size_t d = 0; d < ndims; ++d) {
      check_contract(get_u64(in) == l.weight.shape[d],
                     "checkpoint: shape mismatch at layer '" + l.name + "'");
    }
    check_contract(get_u64(in) == l.bias.size(),
                   "checkpoint: bias size mismatch at layer '" + l.name + "'");
  }
  for (QuantLayer& l : m.layers) {
    for (double& v : l.weight.data) v = get_f64(in);
    for (double& v : l.bias.data) v = get_f64(in);
  }
}

}  // namespace sdq
