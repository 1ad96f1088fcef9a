#pragma once

#include <limits>
#include <string>
#include <vector>

#include "rosita/bio.hpp"
#include "rosita/ops.hpp"
#include "rosita/params.hpp"
#include "rosita/tensor.hpp"

namespace rosita {

// ---------------------------------------------------------------------------
// linear-chain CRF potentials

// Log-potentials of a linear-chain CRF over a BIO tag set: transitions(a, b)
// scores moving from tag a to tag b, start/stop score the sequence edges.
template <class Scalar>
struct CrfParams {
  std::vector<std::string> tags;
  Tensor<Scalar> transitions;  // (T, T)
  Tensor<Scalar> start, stop;  // (T, 1)

  CrfParams() = default;

  // Learned potentials, registered under `prefix` and initialized to zero.
  CrfParams(ParamSet<Scalar>& params, const std::string& prefix,
            std::vector<std::string> tag_names)
      : tags(std::move(tag_names)) {
    const Index T = size();
    transitions = params.add(
        prefix + ".trans", Tensor<Scalar>::from_matrix(MatrixX<Scalar>::Zero(T, T), true));
    start = params.add(prefix + ".start",
                       Tensor<Scalar>::from_matrix(MatrixX<Scalar>::Zero(T, 1), true));
    stop = params.add(prefix + ".stop",
                      Tensor<Scalar>::from_matrix(MatrixX<Scalar>::Zero(T, 1), true));
    validate();
  }

  // Fixed zero potentials: decoding reduces to emissions under the mask.
  static CrfParams fixed_zero(std::vector<std::string> tag_names) {
    CrfParams crf;
    crf.tags = std::move(tag_names);
    const Index T = crf.size();
    crf.transitions = Tensor<Scalar>::from_matrix(MatrixX<Scalar>::Zero(T, T));
    crf.start = Tensor<Scalar>::from_matrix(MatrixX<Scalar>::Zero(T, 1));
    crf.stop = Tensor<Scalar>::from_matrix(MatrixX<Scalar>::Zero(T, 1));
    crf.validate();
    return crf;
  }

  Index size() const { return static_cast<Index>(tags.size()); }

  void validate() const {
    require(!tags.empty(), "crf needs at least one tag");
    bool has_outside = false;
    for (const auto& t : tags) {
      require(is_bio_tag(t), "crf tag is not a BIO tag: " + t);
      if (t == "O") has_outside = true;
    }
    require(has_outside, "crf tag set must contain O");
    const Index T = size();
    require(transitions.rows() == T && transitions.cols() == T &&
                start.rows() == T && start.cols() == 1 && stop.rows() == T &&
                stop.cols() == 1,
            "crf potential shapes disagree with the tag count");
  }
};

// ---------------------------------------------------------------------------
// constraint masks

// Allowed start tags and transitions for constrained decoding.
struct TagMask {
  std::vector<char> start;        // T entries; nonzero = allowed
  std::vector<char> transitions;  // T*T entries, row-major from*T + to

  bool start_ok(Index t) const { return start[static_cast<std::size_t>(t)] != 0; }
  bool step_ok(Index from, Index to) const {
    return transitions[static_cast<std::size_t>(
               from * static_cast<Index>(start.size()) + to)] != 0;
  }

  static TagMask open(Index T);                                // everything allowed
  static TagMask bio(const std::vector<std::string>& tags);    // BIO validity
};

// ---------------------------------------------------------------------------
// log-likelihood (differentiable) and Viterbi decoding (values)

// Negative log-likelihood logZ - score(gold), with logZ the forward-algorithm
// partition over all tag sequences including start/stop potentials.
template <class Scalar>
Tensor<Scalar> crf_log_likelihood(const Tensor<Scalar>& emissions,
                                  const CrfParams<Scalar>& crf,
                                  const std::vector<Index>& gold) {
  crf.validate();
  const Index L = emissions.rows();
  const Index T = crf.size();
  require(L >= 1, "cannot score an empty sequence");
  require(emissions.cols() == T, "emission width disagrees with the tag count");
  require(static_cast<Index>(gold.size()) == L,
          "gold length disagrees with the emissions");
  for (Index g : gold) require(g >= 0 && g < T, "gold tag out of range");

  // Gold-path score through constant indicator matrices: one mul+sum per
  // potential table instead of a chain of single-element picks.
  MatrixX<Scalar> em_ind = MatrixX<Scalar>::Zero(L, T);
  MatrixX<Scalar> tr_ind = MatrixX<Scalar>::Zero(T, T);
  MatrixX<Scalar> start_ind = MatrixX<Scalar>::Zero(T, 1);
  MatrixX<Scalar> stop_ind = MatrixX<Scalar>::Zero(T, 1);
  for (Index t = 0; t < L; ++t) em_ind(t, gold[static_cast<std::size_t>(t)]) = 1;
  for (Index t = 1; t < L; ++t)
    tr_ind(gold[static_cast<std::size_t>(t - 1)], gold[static_cast<std::size_t>(t)]) += 1;
  start_ind(gold.front(), 0) = 1;
  stop_ind(gold.back(), 0) = 1;
  auto gold_score =
      add(add(sum_all(mul(emissions, Tensor<Scalar>::from_matrix(em_ind))),
              sum_all(mul(crf.transitions, Tensor<Scalar>::from_matrix(tr_ind)))),
          add(sum_all(mul(crf.start, Tensor<Scalar>::from_matrix(start_ind))),
              sum_all(mul(crf.stop, Tensor<Scalar>::from_matrix(stop_ind)))));

  // Forward algorithm: alpha is a (1, T) row of log-sums over prefixes.
  auto alpha = add(slice_rows(emissions, 0, 1), transpose(crf.start));
  for (Index t = 1; t < L; ++t) {
    auto scores = add_colvec(crf.transitions, transpose(alpha));  // (from, to)
    auto reduced = reshape(logsumexp_rows(transpose(scores)), Shape{1, T});
    alpha = add(reduced, slice_rows(emissions, t, 1));
  }
  auto log_z = sum_all(logsumexp_rows(add(alpha, transpose(crf.stop))));
  return sub(log_z, gold_score);
}

// Maximum-scoring tag sequence subject to the mask; ties prefer the lowest
// tag id at each decision point.
template <class Scalar>
std::vector<Index> viterbi(const MatrixX<Scalar>& emissions, const CrfParams<Scalar>& crf,
                           const TagMask& mask) {
  crf.validate();
  const Index L = emissions.rows();
  const Index T = crf.size();
  require(L >= 1, "cannot decode an empty sequence");
  require(emissions.cols() == T, "emission width disagrees with the tag count");
  require(static_cast<Index>(mask.start.size()) == T &&
              static_cast<Index>(mask.transitions.size()) == T * T,
          "mask shape disagrees with the tag count");

  const double kBlocked = -std::numeric_limits<double>::infinity();
  const MatrixD em = emissions.template cast<double>();
  const MatrixD tr = crf.transitions.value().template cast<double>();
  const MatrixD st = crf.start.value().template cast<double>();
  const MatrixD sp = crf.stop.value().template cast<double>();

  MatrixD score = MatrixD::Constant(L, T, kBlocked);
  MatrixX<Index> back = MatrixX<Index>::Zero(L, T);
  for (Index b = 0; b < T; ++b)
    if (mask.start_ok(b)) score(0, b) = st(b, 0) + em(0, b);
  for (Index t = 1; t < L; ++t)
    for (Index b = 0; b < T; ++b) {
      double top = kBlocked;
      Index arg = -1;
      for (Index a = 0; a < T; ++a) {
        if (!mask.step_ok(a, b) || score(t - 1, a) == kBlocked) continue;
        const double s = score(t - 1, a) + tr(a, b);
        if (s > top) {
          top = s;
          arg = a;
        }
      }
      if (arg >= 0) {
        score(t, b) = top + em(t, b);
        back(t, b) = arg;
      }
    }

  double top = kBlocked;
  Index last = -1;
  for (Index b = 0; b < T; ++b) {
    if (score(L - 1, b) == kBlocked) continue;
    const double s = score(L - 1, b) + sp(b, 0);
    if (s > top) {
      top = s;
      last = b;
    }
  }
  require(last >= 0, "no valid sequence under mask");

  std::vector<Index> path(static_cast<std::size_t>(L));
  for (Index t = L - 1; t >= 0; --t) {
    path[static_cast<std::size_t>(t)] = last;
    if (t > 0) last = back(t, last);
  }
  return path;
}

}  // namespace rosita
