#include "rosita/repr.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <limits>

namespace rosita {

namespace {

constexpr char kMagic[8] = {'R', 'O', 'S', 'I', 'T', 'A', 'R', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "representation dumps write raw little-endian words");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is, const std::string& path, const char* what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(bool(is), "representations " + path + ": truncated while reading " + what);
  return v;
}

}  // namespace

void write_reprs(const std::string& path, const std::vector<LayerStack>& stacks) {
  std::ofstream os(path, std::ios::binary);
  require(bool(os), "representations: cannot open " + path + " for writing");
  std::ofstream idx(path + ".idx");
  require(bool(idx), "representations: cannot open " + path + ".idx for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, stacks.size());
  idx << "sentence\ttokens\tdepth\twidth\n";
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    const auto& s = stacks[i];
    s.validate();
    put<std::uint64_t>(os, static_cast<std::uint64_t>(s.length()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.depth()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.width()));
    for (const auto& layer : s.layers)
      os.write(reinterpret_cast<const char*>(layer.data()),
               static_cast<std::streamsize>(sizeof(float) * layer.size()));
    idx << i << '\t' << s.length() << '\t' << s.depth() << '\t' << s.width() << '\n';
  }
  require(bool(os) && bool(idx), "representations: write failed for " + path);
}

std::vector<LayerStack> read_reprs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "representations: cannot open " + path);
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  require(bool(is) && std::equal(magic, magic + sizeof(magic), kMagic),
          "representations " + path + ": bad magic");
  const auto version = take<std::uint32_t>(is, path, "version");
  require(version == kVersion, "representations " + path + ": unsupported version " +
                                   std::to_string(version));
  const auto count = take<std::uint64_t>(is, path, "sentence count");
  std::vector<LayerStack> stacks;
  stacks.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto tokens = take<std::uint64_t>(is, path, "token count");
    const auto depth = take<std::uint32_t>(is, path, "depth");
    const auto width = take<std::uint32_t>(is, path, "width");
    require(depth >= 1 && width >= 1,
            "representations " + path + ": degenerate sentence record");
    LayerStack s;
    for (std::uint32_t l = 0; l < depth; ++l) {
      MatrixF m(static_cast<Index>(tokens), static_cast<Index>(width));
      is.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(float) * m.size()));
      require(bool(is), "representations " + path + ": truncated layer data");
      s.layers.push_back(std::move(m));
    }
    stacks.push_back(std::move(s));
  }
  return stacks;
}

}  // namespace rosita
