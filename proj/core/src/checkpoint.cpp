#include "dancegen/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "dancegen/errors.hpp"

namespace dancegen {

namespace {

constexpr char kMagic[8] = {'D', 'G', 'C', 'K', 'P', 'T', '0', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw DataError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is) {
  std::uint64_t bits = get_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, 8);
  put_u64(os, records.size());
  for (const auto& rec : records) {
    if (shape_numel(rec.shape) != static_cast<std::int64_t>(rec.values.size()))
      throw ShapeError("checkpoint: record '" + rec.name + "' shape " + shape_str(rec.shape) +
                       " does not match " + std::to_string(rec.values.size()) + " values");
    put_u32(os, static_cast<std::uint32_t>(rec.name.size()));
    os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    put_u32(os, static_cast<std::uint32_t>(rec.shape.size()));
    for (int d : rec.shape) put_u64(os, static_cast<std::uint64_t>(d));
    for (double v : rec.values) put_f64(os, v);
  }
  if (!os) throw DataError("checkpoint: write failed: " + path);
}

std::map<std::string, CheckpointRecord> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("checkpoint: bad magic or unsupported version in " + path);
  const std::uint64_t count = get_u64(is);
  std::map<std::string, CheckpointRecord> out;
  for (std::uint64_t r = 0; r < count; ++r) {
    CheckpointRecord rec;
    const std::uint32_t name_len = get_u32(is);
    rec.name.resize(name_len);
    is.read(rec.name.data(), name_len);
    if (!is) throw DataError("checkpoint: truncated record name");
    const std::uint32_t ndim = get_u32(is);
    std::int64_t numel = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      std::uint64_t d = get_u64(is);
      rec.shape.push_back(static_cast<int>(d));
      numel *= static_cast<std::int64_t>(d);
    }
    rec.values.resize(static_cast<std::size_t>(numel));
    for (std::int64_t i = 0; i < numel; ++i)
      rec.values[static_cast<std::size_t>(i)] = get_f64(is);
    if (out.count(rec.name))
      throw DataError("checkpoint: duplicate record '" + rec.name + "'");
    out.emplace(rec.name, std::move(rec));
  }
  return out;
}

}  // namespace dancegen
