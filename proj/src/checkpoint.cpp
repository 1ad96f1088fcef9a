#include "rosita/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace rosita {

namespace {

constexpr char kMagic[8] = {'R', 'O', 'S', 'I', 'T', 'A', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O writes raw little-endian words");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is, const std::string& path, const char* what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(bool(is), "checkpoint " + path + ": truncated while reading " + what);
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<ArrayRecord>& arrays) {
  std::ofstream os(path, std::ios::binary);
  require(bool(os), "checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, arrays.size());
  for (const auto& rec : arrays) {
    require(!rec.name.empty(), "checkpoint: array with empty name");
    require(shape_size(rec.shape) == static_cast<Index>(rec.data.size()),
            "checkpoint: array " + rec.name + " data length does not match shape " +
                shape_str(rec.shape));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(rec.name.size()));
    os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(rec.shape.size()));
    for (Index d : rec.shape) put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(rec.data.data()),
             static_cast<std::streamsize>(rec.data.size() * sizeof(float)));
  }
  require(bool(os), "checkpoint: write failed for " + path);
}

std::vector<ArrayRecord> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "checkpoint: cannot open " + path);
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  require(bool(is) && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
          "checkpoint " + path + ": bad magic bytes");
  const auto version = take<std::uint32_t>(is, path, "version");
  require(version == kVersion, "checkpoint " + path + ": unsupported version " +
                                   std::to_string(version));
  const auto count = take<std::uint64_t>(is, path, "array count");
  std::vector<ArrayRecord> arrays;
  arrays.reserve(count);
  for (std::uint64_t a = 0; a < count; ++a) {
    ArrayRecord rec;
    const auto name_len = take<std::uint32_t>(is, path, "name length");
    rec.name.resize(name_len);
    is.read(rec.name.data(), name_len);
    require(bool(is), "checkpoint " + path + ": truncated name");
    const auto rank = take<std::uint32_t>(is, path, "rank");
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = take<std::uint64_t>(is, path, "dimension");
      rec.shape.push_back(static_cast<Index>(dim));
      total *= dim;
    }
    rec.data.resize(total);
    is.read(reinterpret_cast<char*>(rec.data.data()),
            static_cast<std::streamsize>(total * sizeof(float)));
    require(bool(is), "checkpoint " + path + ": truncated data for " + rec.name);
    arrays.push_back(std::move(rec));
  }
  return arrays;
}

}  // namespace rosita
