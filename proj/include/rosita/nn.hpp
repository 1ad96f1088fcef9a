#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "rosita/ops.hpp"
#include "rosita/params.hpp"
#include "rosita/random.hpp"
#include "rosita/tensor.hpp"

namespace rosita {

// ---------------------------------------------------------------------------
// initializers

// Uniform over ±sqrt(3/fan_in): unit-variance activations for linear maps.
template <class Scalar>
MatrixX<Scalar> init_fan_in(Rng& rng, Index rows, Index cols, Index fan_in) {
  const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
  MatrixX<Scalar> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      m(i, j) = static_cast<Scalar>(rng.uniform(-limit, limit));
  return m;
}

// Orthogonal(ish) init for recurrent matrices: QR of a Gaussian draw, sign-
// fixed so the factorization is unique; rectangular shapes truncate the
// orthonormal factor.
template <class Scalar>
MatrixX<Scalar> init_orthogonal(Rng& rng, Index rows, Index cols) {
  const Index n = std::max(rows, cols);
  MatrixD g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<MatrixD> qr(g);
  MatrixD q = qr.householderQ() * MatrixD::Identity(n, n);
  MatrixD r = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q.topLeftCorner(rows, cols).cast<Scalar>();
}

// ---------------------------------------------------------------------------
// layers

template <class Scalar>
struct Linear {
  Tensor<Scalar> W, b;  // y = x W + b, x is (batch, in)

  Linear() = default;
  Linear(ParamSet<Scalar>& params, const std::string& prefix, Index in, Index out,
         Rng& rng) {
    W = params.add(prefix + ".W",
                   Tensor<Scalar>::from_matrix(init_fan_in<Scalar>(rng, in, out, in),
                                               true));
    b = params.add(prefix + ".b",
                   Tensor<Scalar>::from_matrix(MatrixX<Scalar>::Zero(1, out), true));
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const {
    return add_rowvec(matmul(x, W), b);
  }
};

enum class Act { relu, tanh };

template <class Scalar>
Tensor<Scalar> activate(const Tensor<Scalar>& x, Act act) {
  return act == Act::relu ? relu(x) : tanh_t(x);
}

// Classic highway layer: y = T(x) * act(H(x)) + (1 - T(x)) * x.
// Transform-gate bias starts at -1 so the layer begins close to identity.
template <class Scalar>
struct Highway {
  Linear<Scalar> transform, gate;
  Act act = Act::relu;

  Highway() = default;
  Highway(ParamSet<Scalar>& params, const std::string& prefix, Index dim, Rng& rng,
          Act activation = Act::relu)
      : transform(params, prefix + ".h", dim, dim, rng),
        gate(params, prefix + ".t", dim, dim, rng),
        act(activation) {
    gate.b.value().setConstant(Scalar(-1));
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const {
    auto t = sigmoid(gate(x));
    auto ones = Tensor<Scalar>::constant(x.shape(), Scalar(1));
    return add(mul(t, activate(transform(x), act)), mul(sub(ones, t), x));
  }
};

// Gated skip between stacked recurrent layers: gate computed from the layer's
// input x, blending the layer output y with x. Requires matching widths.
template <class Scalar>
struct GatedSkip {
  Linear<Scalar> gate;

  GatedSkip() = default;
  GatedSkip(ParamSet<Scalar>& params, const std::string& prefix, Index dim, Rng& rng)
      : gate(params, prefix + ".g", dim, dim, rng) {
    gate.b.value().setConstant(Scalar(-1));
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, const Tensor<Scalar>& y) const {
    auto t = sigmoid(gate(x));
    auto ones = Tensor<Scalar>::constant(x.shape(), Scalar(1));
    return add(mul(t, y), mul(sub(ones, t), x));
  }
};

template <class Scalar>
struct LstmState {
  Tensor<Scalar> h, c;
};

// Single LSTM cell, gate order [i, f, g, o], forget-gate bias 1. With
// proj > 0 the hidden state is projected down and the recurrence runs on the
// projected vector.
template <class Scalar>
struct LstmCell {
  Index input_size = 0, hidden_size = 0, proj_size = 0;
  Tensor<Scalar> Wx, Wh, b, Wp;

  LstmCell() = default;
  LstmCell(ParamSet<Scalar>& params, const std::string& prefix, Index in, Index hidden,
           Rng& rng, Index proj = 0)
      : input_size(in), hidden_size(hidden), proj_size(proj) {
    const Index rec = proj > 0 ? proj : hidden;
    Wx = params.add(prefix + ".Wx", Tensor<Scalar>::from_matrix(
                                        init_fan_in<Scalar>(rng, in, 4 * hidden, in),
                                        true));
    MatrixX<Scalar> wh(rec, 4 * hidden);
    for (int gate = 0; gate < 4; ++gate)
      wh.middleCols(gate * hidden, hidden) = init_orthogonal<Scalar>(rng, rec, hidden);
    Wh = params.add(prefix + ".Wh", Tensor<Scalar>::from_matrix(std::move(wh), true));
    MatrixX<Scalar> bias = MatrixX<Scalar>::Zero(1, 4 * hidden);
    bias.middleCols(hidden, hidden).setConstant(Scalar(1));  // forget gate
    b = params.add(prefix + ".b", Tensor<Scalar>::from_matrix(std::move(bias), true));
    if (proj > 0)
      Wp = params.add(prefix + ".Wp",
                      Tensor<Scalar>::from_matrix(
                          init_fan_in<Scalar>(rng, hidden, proj, hidden), true));
  }

  Index output_size() const { return proj_size > 0 ? proj_size : hidden_size; }

  LstmState<Scalar> zero_state(Index batch) const {
    return {Tensor<Scalar>::zeros({batch, output_size()}),
            Tensor<Scalar>::zeros({batch, hidden_size})};
  }

  LstmState<Scalar> step(const Tensor<Scalar>& x, const LstmState<Scalar>& s) const {
    const Index H = hidden_size;
    auto gates = add_rowvec(add(matmul(x, Wx), matmul(s.h, Wh)), b);
    auto i = sigmoid(slice_cols(gates, 0, H));
    auto f = sigmoid(slice_cols(gates, H, H));
    auto g = tanh_t(slice_cols(gates, 2 * H, H));
    auto o = sigmoid(slice_cols(gates, 3 * H, H));
    auto c = add(mul(f, s.c), mul(i, g));
    auto h = mul(o, tanh_t(c));
    if (proj_size > 0) h = matmul(h, Wp);
    return {h, c};
  }
};

// Scans a sequence of (batch, in) inputs. `reverse` walks time back-to-front
// but returns outputs in input order. `rec_mask`, when defined, multiplies
// the recurrent hidden state every step (variational dropout: one mask per
// sequence).
template <class Scalar>
struct ScanResult {
  std::vector<Tensor<Scalar>> outputs;
  LstmState<Scalar> final_state;
};

template <class Scalar>
ScanResult<Scalar> lstm_scan(const LstmCell<Scalar>& cell,
                             const std::vector<Tensor<Scalar>>& inputs,
                             LstmState<Scalar> state, bool reverse = false,
                             const Tensor<Scalar>* rec_mask = nullptr) {
  const Index T = static_cast<Index>(inputs.size());
  std::vector<Tensor<Scalar>> outputs(static_cast<std::size_t>(T));
  for (Index step = 0; step < T; ++step) {
    const Index t = reverse ? T - 1 - step : step;
    LstmState<Scalar> fed = state;
    if (rec_mask && rec_mask->defined()) fed.h = mul(fed.h, *rec_mask);
    state = cell.step(inputs[static_cast<std::size_t>(t)], fed);
    outputs[static_cast<std::size_t>(t)] = state.h;
  }
  return {std::move(outputs), std::move(state)};
}

// ---------------------------------------------------------------------------
// embeddings

template <class Scalar>
struct EmbeddingTable {
  Tensor<Scalar> W;  // (vocab, dim)

  EmbeddingTable() = default;
  EmbeddingTable(ParamSet<Scalar>& params, const std::string& name, Index vocab,
                 Index dim, Rng& rng) {
    W = params.add(name, Tensor<Scalar>::from_matrix(
                             init_fan_in<Scalar>(rng, vocab, dim, dim), true));
  }

  Tensor<Scalar> operator()(const std::vector<Index>& ids) const {
    return gather_rows(W, ids);
  }
};

// ---------------------------------------------------------------------------
// sentence-level stacks (batch dimension = 1 row per time step)

// Splits a (len, dim) sentence matrix into per-step (1, dim) rows.
template <class Scalar>
std::vector<Tensor<Scalar>> split_steps(const Tensor<Scalar>& x) {
  std::vector<Tensor<Scalar>> steps;
  steps.reserve(static_cast<std::size_t>(x.rows()));
  for (Index t = 0; t < x.rows(); ++t) steps.push_back(slice_rows(x, t, 1));
  return steps;
}

struct SeqDropout {
  double recurrent = 0.0;
  double inter_layer = 0.0;
  bool train = false;
};

// Stacked bidirectional LSTM over one sentence with gated skips between
// layers. Output width is 2*hidden per layer.
template <class Scalar>
struct BiLstmStack {
  std::vector<LstmCell<Scalar>> fwd, bwd;
  std::vector<GatedSkip<Scalar>> skips;  // between layer l-1 and l (l >= 1)
  Index hidden = 0;

  BiLstmStack() = default;
  BiLstmStack(ParamSet<Scalar>& params, const std::string& prefix, Index input,
              Index hidden_size, Index layers, Rng& rng)
      : hidden(hidden_size) {
    Index in = input;
    for (Index l = 0; l < layers; ++l) {
      const std::string lp = prefix + ".l" + std::to_string(l);
      fwd.emplace_back(params, lp + ".fwd", in, hidden_size, rng);
      bwd.emplace_back(params, lp + ".bwd", in, hidden_size, rng);
      if (l > 0) skips.emplace_back(params, lp + ".skip", 2 * hidden_size, rng);
      in = 2 * hidden_size;
    }
  }

  // x: (len, input) -> (len, 2*hidden)
  Tensor<Scalar> run(const Tensor<Scalar>& x, const SeqDropout& drop, Rng& rng) const {
    Tensor<Scalar> layer_in = x;
    for (std::size_t l = 0; l < fwd.size(); ++l) {
      auto steps = split_steps(layer_in);
      Tensor<Scalar> fmask, bmask;
      const Tensor<Scalar>*fm = nullptr, *bm = nullptr;
      if (drop.train && drop.recurrent > 0) {
        fmask = Tensor<Scalar>::from_matrix(
            dropout_mask<Scalar>(1, hidden, drop.recurrent, rng));
        bmask = Tensor<Scalar>::from_matrix(
            dropout_mask<Scalar>(1, hidden, drop.recurrent, rng));
        fm = &fmask;
        bm = &bmask;
      }
      auto f = lstm_scan(fwd[l], steps, fwd[l].zero_state(1), false, fm);
      auto b = lstm_scan(bwd[l], steps, bwd[l].zero_state(1), true, bm);
      std::vector<Tensor<Scalar>> rows;
      rows.reserve(steps.size());
      for (std::size_t t = 0; t < steps.size(); ++t)
        rows.push_back(concat_cols<Scalar>({f.outputs[t], b.outputs[t]}));
      Tensor<Scalar> out = concat_rows(rows);
      if (l > 0) out = skips[l - 1](layer_in, out);
      if (drop.train && drop.inter_layer > 0 && l + 1 < fwd.size())
        out = dropout(out, drop.inter_layer, true, rng);
      layer_in = out;
    }
    return layer_in;
  }
};

// Stack of unidirectional LSTM layers whose direction flips per layer
// (forward, backward, forward, ...), gated skips between equal-width layers.
template <class Scalar>
struct AlternatingLstmStack {
  std::vector<LstmCell<Scalar>> cells;
  std::vector<GatedSkip<Scalar>> skips;
  Index hidden = 0;

  AlternatingLstmStack() = default;
  AlternatingLstmStack(ParamSet<Scalar>& params, const std::string& prefix,
                       Index input, Index hidden_size, Index layers, Rng& rng)
      : hidden(hidden_size) {
    Index in = input;
    for (Index l = 0; l < layers; ++l) {
      const std::string lp = prefix + ".l" + std::to_string(l);
      cells.emplace_back(params, lp, in, hidden_size, rng);
      if (l > 0) skips.emplace_back(params, lp + ".skip", hidden_size, rng);
      in = hidden_size;
    }
  }

  // x: (len, input) -> (len, hidden); layer 0 runs forward.
  Tensor<Scalar> run(const Tensor<Scalar>& x, const SeqDropout& drop, Rng& rng) const {
    Tensor<Scalar> layer_in = x;
    for (std::size_t l = 0; l < cells.size(); ++l) {
      auto steps = split_steps(layer_in);
      Tensor<Scalar> mask;
      const Tensor<Scalar>* m = nullptr;
      if (drop.train && drop.recurrent > 0) {
        mask = Tensor<Scalar>::from_matrix(
            dropout_mask<Scalar>(1, hidden, drop.recurrent, rng));
        m = &mask;
      }
      const bool reverse = (l % 2) == 1;
      auto r = lstm_scan(cells[l], steps, cells[l].zero_state(1), reverse, m);
      Tensor<Scalar> out = concat_rows(r.outputs);
      if (l > 0) out = skips[l - 1](layer_in, out);
      layer_in = out;
    }
    return layer_in;
  }
};

}  // namespace rosita
