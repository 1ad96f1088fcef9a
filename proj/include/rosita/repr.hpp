#pragma once

#include <string>
#include <vector>

#include "rosita/ops.hpp"
#include "rosita/params.hpp"
#include "rosita/tensor.hpp"

namespace rosita {

// Per-sentence contextual representation: one matrix per layer, each
// (token count, width). Layer 0 is the context-independent input encoding;
// higher layers are recurrent outputs. All layers share one width.
struct LayerStack {
  std::vector<MatrixF> layers;

  Index depth() const { return static_cast<Index>(layers.size()); }
  Index length() const { return layers.empty() ? 0 : layers[0].rows(); }
  Index width() const { return layers.empty() ? 0 : layers[0].cols(); }

  void validate() const {
    require(!layers.empty(), "layer stack: no layers");
    for (const auto& l : layers)
      require(l.rows() == length() && l.cols() == width(),
              "layer stack: layers must share one shape");
  }
};

// Binary dump of many sentences' stacks plus a human-readable text index at
// path + ".idx". Layout: magic "ROSITARP", u32 version, u64 sentence count;
// per sentence u64 token count, u32 depth, u32 width, then depth blocks of
// count*width little-endian f32 rows.
void write_reprs(const std::string& path, const std::vector<LayerStack>& stacks);
std::vector<LayerStack> read_reprs(const std::string& path);

// Task-trained weighting of a frozen layer stack: softmax(raw) mixes layers,
// gamma scales the result. These are the only representation parameters a
// downstream task updates.
template <class Scalar>
struct ScalarMix {
  Tensor<Scalar> raw;    // (1, depth)
  Tensor<Scalar> gamma;  // scalar

  ScalarMix() = default;
  ScalarMix(ParamSet<Scalar>& params, const std::string& prefix, Index depth) {
    raw = params.add(prefix + ".raw",
                     Tensor<Scalar>::from_matrix(MatrixX<Scalar>::Zero(1, depth), true));
    gamma = params.add(prefix + ".gamma", Tensor<Scalar>::scalar(Scalar(1), true));
  }

  Index depth() const { return raw.cols(); }

  // layers: one (len, width) tensor per layer, all equal shapes.
  Tensor<Scalar> operator()(const std::vector<Tensor<Scalar>>& layers) const {
    require(static_cast<Index>(layers.size()) == depth(),
            "scalar mix: stack depth " + std::to_string(layers.size()) +
                " does not match weight count " + std::to_string(depth()));
    auto w = softmax_rows(raw);
    Tensor<Scalar> out;
    for (Index l = 0; l < depth(); ++l) {
      auto term = mul_scalar(layers[static_cast<std::size_t>(l)], pick(w, 0, l));
      out = l == 0 ? term : add(out, term);
    }
    return mul_scalar(out, gamma);
  }

  // Convenience over a frozen float stack.
  Tensor<Scalar> operator()(const LayerStack& stack) const {
    std::vector<Tensor<Scalar>> layers;
    layers.reserve(stack.layers.size());
    for (const auto& m : stack.layers)
      layers.push_back(Tensor<Scalar>::from_matrix(m.template cast<Scalar>()));
    return (*this)(layers);
  }
};

}  // namespace rosita
