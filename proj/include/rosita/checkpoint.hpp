#pragma once

#include <string>
#include <vector>

#include "rosita/params.hpp"
#include "rosita/types.hpp"

namespace rosita {

// On-disk parameter container. Little-endian binary layout:
//   magic "ROSITACP" (8 bytes), u32 version (=1), u64 array count,
//   then per array: u32 name length, name bytes, u32 rank,
//   u64 dims[rank], then prod(dims) raw IEEE-754 32-bit floats.
struct ArrayRecord {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

void write_checkpoint(const std::string& path, const std::vector<ArrayRecord>& arrays);
std::vector<ArrayRecord> read_checkpoint(const std::string& path);

template <class Scalar>
void save_params(const std::string& path, const ParamSet<Scalar>& params) {
  std::vector<ArrayRecord> arrays;
  arrays.reserve(params.size());
  for (const auto& [name, t] : params) {
    ArrayRecord rec;
    rec.name = name;
    rec.shape = t.shape();
    rec.data.resize(static_cast<std::size_t>(t.size()));
    const auto& v = t.value();
    for (Index i = 0; i < v.size(); ++i)
      rec.data[static_cast<std::size_t>(i)] = static_cast<float>(v.data()[i]);
    arrays.push_back(std::move(rec));
  }
  write_checkpoint(path, arrays);
}

// Strict load: the file must contain exactly the parameters of `params`,
// each with a matching shape. Values overwrite in place; grads are dropped.
template <class Scalar>
void load_params(const std::string& path, ParamSet<Scalar>& params) {
  auto arrays = read_checkpoint(path);
  require(arrays.size() == params.size(),
          "checkpoint " + path + ": holds " + std::to_string(arrays.size()) +
              " arrays, model has " + std::to_string(params.size()));
  for (auto& rec : arrays) {
    require(params.has(rec.name), "checkpoint " + path + ": unexpected array " + rec.name);
    auto& t = params.get(rec.name);
    require(rec.shape == t.shape(), "checkpoint " + path + ": array " + rec.name +
                                        " has shape " + shape_str(rec.shape) +
                                        ", model expects " + shape_str(t.shape()));
    auto& v = t.value();
    for (Index i = 0; i < v.size(); ++i)
      v.data()[i] = static_cast<Scalar>(rec.data[static_cast<std::size_t>(i)]);
    t.drop_grad();
  }
}

}  // namespace rosita
