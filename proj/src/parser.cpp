#include "rosita/parser.hpp"

#include <algorithm>
#include <limits>

namespace rosita {

namespace {

constexpr double kForbidden = -1e18;  // self-arcs, arcs into root, pruned root arcs
const double kNegInf = -std::numeric_limits<double>::infinity();

// Chu-Liu/Edmonds on a dense square matrix: S(i, j) scores the arc i -> j,
// node 0 is the root and never receives an arc. Returns each node's head;
// head[0] is unused.
std::vector<Index> arborescence(const MatrixD& S) {
  const Index m = S.rows();
  std::vector<Index> head(static_cast<std::size_t>(m), 0);
  if (m <= 2) return head;

  std::vector<Index> best(static_cast<std::size_t>(m), 0);
  for (Index j = 1; j < m; ++j) {
    double top = kNegInf;
    for (Index i = 0; i < m; ++i)
      if (i != j && S(i, j) > top) {
        top = S(i, j);
        best[static_cast<std::size_t>(j)] = i;
      }
  }

  // Look for a cycle among the best arcs.
  std::vector<int> color(static_cast<std::size_t>(m), 0);  // 0 new, 1 on path, 2 done
  color[0] = 2;
  std::vector<Index> cycle;
  for (Index start = 1; start < m && cycle.empty(); ++start) {
    if (color[static_cast<std::size_t>(start)]) continue;
    std::vector<Index> path;
    Index v = start;
    while (color[static_cast<std::size_t>(v)] == 0) {
      color[static_cast<std::size_t>(v)] = 1;
      path.push_back(v);
      v = best[static_cast<std::size_t>(v)];
    }
    if (color[static_cast<std::size_t>(v)] == 1)
      cycle.assign(std::find(path.begin(), path.end(), v), path.end());
    for (Index u : path) color[static_cast<std::size_t>(u)] = 2;
  }
  if (cycle.empty()) {
    for (Index j = 1; j < m; ++j)
      head[static_cast<std::size_t>(j)] = best[static_cast<std::size_t>(j)];
    return head;
  }

  // Contract the cycle into one node (the last index of the reduced graph).
  std::vector<bool> in_cycle(static_cast<std::size_t>(m), false);
  for (Index v : cycle) in_cycle[static_cast<std::size_t>(v)] = true;
  std::vector<Index> to_new(static_cast<std::size_t>(m), -1);
  std::vector<Index> from_new;
  for (Index v = 0; v < m; ++v)
    if (!in_cycle[static_cast<std::size_t>(v)]) {
      to_new[static_cast<std::size_t>(v)] = static_cast<Index>(from_new.size());
      from_new.push_back(v);
    }
  const Index c = static_cast<Index>(from_new.size());
  const Index m2 = c + 1;

  MatrixD S2 = MatrixD::Constant(m2, m2, kNegInf);
  std::vector<Index> enter_via(static_cast<std::size_t>(m2), -1);  // x -> c lands on ...
  std::vector<Index> leave_via(static_cast<std::size_t>(m2), -1);  // c -> y departs from ...
  for (Index i = 0; i < m; ++i) {
    if (in_cycle[static_cast<std::size_t>(i)]) continue;
    const Index ni = to_new[static_cast<std::size_t>(i)];
    for (Index j = 1; j < m; ++j) {
      if (i == j) continue;
      if (in_cycle[static_cast<std::size_t>(j)]) {
        // Entering the cycle at j trades away j's in-cycle arc.
        const double adj = S(i, j) - S(best[static_cast<std::size_t>(j)], j);
        if (adj > S2(ni, c)) {
          S2(ni, c) = adj;
          enter_via[static_cast<std::size_t>(ni)] = j;
        }
      } else {
        S2(ni, to_new[static_cast<std::size_t>(j)]) = S(i, j);
      }
    }
  }
  for (Index i : cycle)
    for (Index j = 1; j < m; ++j) {
      if (i == j || in_cycle[static_cast<std::size_t>(j)]) continue;
      const Index nj = to_new[static_cast<std::size_t>(j)];
      if (S(i, j) > S2(c, nj)) {
        S2(c, nj) = S(i, j);
        leave_via[static_cast<std::size_t>(nj)] = i;
      }
    }

  const auto sub = arborescence(S2);

  for (Index j = 1; j < m; ++j) {
    if (in_cycle[static_cast<std::size_t>(j)]) continue;
    const Index h = sub[static_cast<std::size_t>(to_new[static_cast<std::size_t>(j)])];
    head[static_cast<std::size_t>(j)] =
        h == c ? leave_via[static_cast<std::size_t>(to_new[static_cast<std::size_t>(j)])]
               : from_new[static_cast<std::size_t>(h)];
  }
  // Cycle nodes keep their arcs except where the external arc breaks in.
  for (Index v : cycle) head[static_cast<std::size_t>(v)] = best[static_cast<std::size_t>(v)];
  const Index entry_parent = sub[static_cast<std::size_t>(c)];
  const Index entry = enter_via[static_cast<std::size_t>(entry_parent)];
  head[static_cast<std::size_t>(entry)] = from_new[static_cast<std::size_t>(entry_parent)];
  return head;
}

}  // namespace

void ArcScores::validate() const {
  require(arcs.cols() >= 1, "arc scores need at least one dependent");
  require(arcs.rows() == arcs.cols() + 1,
          "arc score matrix must have one more head row than dependents");
  require(arcs.allFinite(), "arc scores must be finite");
  for (const auto& grid : labels) {
    require(grid.rows() == arcs.rows() && grid.cols() == arcs.cols(),
            "label score grid shape disagrees with the arc scores");
    require(grid.allFinite(), "label scores must be finite");
  }
}

std::vector<Index> decode_mst(const ArcScores& scores) {
  scores.validate();
  const Index n = scores.n();
  MatrixD S = MatrixD::Constant(n + 1, n + 1, kForbidden);
  for (Index i = 0; i <= n; ++i)
    for (Index j = 1; j <= n; ++j)
      if (i != j) S(i, j) = scores.arcs(i, j - 1);

  // Exactly one root child: solve once per candidate child with every other
  // root arc priced out, keep the best total under the true scores.
  std::vector<Index> best_heads;
  double best_total = kNegInf;
  for (Index r = 1; r <= n; ++r) {
    MatrixD Sr = S;
    for (Index j = 1; j <= n; ++j)
      if (j != r) Sr(0, j) = kForbidden;
    const auto heads = arborescence(Sr);
    double total = 0;
    for (Index j = 1; j <= n; ++j) total += S(heads[static_cast<std::size_t>(j)], j);
    if (total > best_total) {
      best_total = total;
      best_heads = heads;
    }
  }
  return {best_heads.begin() + 1, best_heads.end()};
}

std::vector<Index> greedy_decode(const ArcScores& scores) {
  scores.validate();
  const Index n = scores.n();
  std::vector<Index> heads(static_cast<std::size_t>(n), 0);
  for (Index j = 0; j < n; ++j) {
    double top = kNegInf;
    for (Index i = 0; i <= n; ++i) {
      if (i == j + 1) continue;  // a token cannot head itself
      if (scores.arcs(i, j) > top) {
        top = scores.arcs(i, j);
        heads[static_cast<std::size_t>(j)] = i;
      }
    }
  }
  return heads;
}

std::vector<Index> decode_labels(const ArcScores& scores, const std::vector<Index>& heads) {
  scores.validate();
  require(!scores.labels.empty(), "no label scores to decode");
  require(static_cast<Index>(heads.size()) == scores.n(),
          "head assignment length disagrees with the scores");
  std::vector<Index> rels(heads.size(), 0);
  for (std::size_t j = 0; j < heads.size(); ++j) {
    const Index h = heads[j];
    require(h >= 0 && h <= scores.n(), "head index out of range");
    double top = kNegInf;
    for (std::size_t r = 0; r < scores.labels.size(); ++r) {
      const double s = scores.labels[r](h, static_cast<Index>(j));
      if (s > top) {  // strict: ties resolve to the lowest relation id
        top = s;
        rels[j] = static_cast<Index>(r);
      }
    }
  }
  return rels;
}

std::string strip_subtype(const std::string& relation) {
  return relation.substr(0, relation.find(':'));
}

DepMetrics las_eval(const std::vector<AnnotatedSentence>& predicted,
                    const std::vector<AnnotatedSentence>& gold) {
  require(predicted.size() == gold.size(),
          "predicted and gold sentence counts disagree");
  long tokens = 0, heads_ok = 0, labeled_ok = 0;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    const auto& p = predicted[s];
    const auto& g = gold[s];
    require(p.size() == g.size(), "predicted and gold sentence lengths disagree");
    require(p.has_tree() && g.has_tree(), "attachment scores need trees on both sides");
    require(static_cast<Index>(p.heads.size()) == p.size() &&
                static_cast<Index>(g.heads.size()) == g.size() &&
                p.deprels.size() == p.heads.size() && g.deprels.size() == g.heads.size(),
            "trees must annotate every token");
    for (std::size_t j = 0; j < p.heads.size(); ++j) {
      ++tokens;
      if (p.heads[j] != g.heads[j]) continue;
      ++heads_ok;
      if (strip_subtype(p.deprels[j]) == strip_subtype(g.deprels[j])) ++labeled_ok;
    }
  }
  require(tokens > 0, "cannot score an empty corpus");
  DepMetrics m;
  m.tokens = tokens;
  m.uas = 100.0 * static_cast<double>(heads_ok) / static_cast<double>(tokens);
  m.las = 100.0 * static_cast<double>(labeled_ok) / static_cast<double>(tokens);
  return m;
}

}  // namespace rosita
