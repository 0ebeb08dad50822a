#include "vrl/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace vrl {

namespace {

constexpr char kMagic[4] = {'V', 'R', 'T', '1'};

template <typename T>
constexpr uint8_t dtype_code() {
  if constexpr (std::is_same_v<T, float>) return 0;
  else return 1;
}

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t get_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace

template <typename T>
void write_vrt1(std::ostream& os, const TensorT<T>& t) {
  os.write(kMagic, 4);
  put_u32(os, kVrt1Version);
  const uint8_t dt = dtype_code<T>();
  os.put(static_cast<char>(dt));
  os.put(static_cast<char>(t.rank()));
  for (int64_t d : t.shape) put_u64(os, static_cast<uint64_t>(d));
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!os) throw std::runtime_error("VRT1 write failed");
}

template <typename T>
TensorT<T> read_vrt1(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("VRT1: bad magic");
  const uint32_t version = get_u32(is);
  if (version != kVrt1Version)
    throw std::runtime_error("VRT1: unsupported version " + std::to_string(version));
  const int dt = is.get();
  if (dt != dtype_code<T>())
    throw std::runtime_error("VRT1: dtype code " + std::to_string(dt) + " does not match requested type");
  const int rank = is.get();
  if (rank < 0 || rank > 8) throw std::runtime_error("VRT1: implausible rank");
  std::vector<int64_t> shape(static_cast<size_t>(rank));
  for (auto& d : shape) d = static_cast<int64_t>(get_u64(is));
  TensorT<T> t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!is) throw std::runtime_error("VRT1: truncated data");
  return t;
}

uint8_t peek_vrt1_dtype(std::istream& is) {
  const auto pos = is.tellg();
  char header[9] = {};
  is.read(header, 9);
  if (!is || std::memcmp(header, kMagic, 4) != 0) throw std::runtime_error("VRT1: bad magic");
  is.seekg(pos);
  return static_cast<uint8_t>(header[8]);
}

template <typename T>
void write_vrt1_file(const std::string& path, const TensorT<T>& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  write_vrt1(f, t);
}

template <typename T>
TensorT<T> read_vrt1_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for read: " + path);
  return read_vrt1<T>(f);
}

template void write_vrt1<float>(std::ostream&, const TensorT<float>&);
template void write_vrt1<double>(std::ostream&, const TensorT<double>&);
template TensorT<float> read_vrt1<float>(std::istream&);
template TensorT<double> read_vrt1<double>(std::istream&);
template void write_vrt1_file<float>(const std::string&, const TensorT<float>&);
template void write_vrt1_file<double>(const std::string&, const TensorT<double>&);
template TensorT<float> read_vrt1_file<float>(const std::string&);
template TensorT<double> read_vrt1_file<double>(const std::string&);

}  // namespace vrl
