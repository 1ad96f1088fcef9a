#include "rosita/tagger.hpp"

namespace rosita {

SpanScore span_f1(const std::vector<std::vector<Span>>& predicted,
                  const std::vector<std::vector<Span>>& gold,
                  const std::string& excluded_label) {
  require(predicted.size() == gold.size(),
          "predicted and gold sentence counts disagree");
  SpanScore score;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    std::map<Span, long> bag;
    for (const auto& g : gold[s]) {
      if (g.label == excluded_label) continue;
      ++score.gold;
      ++bag[g];
    }
    for (const auto& p : predicted[s]) {
      if (p.label == excluded_label) continue;
      ++score.predicted;
      auto it = bag.find(p);
      if (it != bag.end() && it->second > 0) {
        --it->second;
        ++score.matched;
      }
    }
  }
  const double m = static_cast<double>(score.matched);
  score.precision = score.predicted > 0 ? m / static_cast<double>(score.predicted)
                                        : (score.gold > 0 ? 0.0 : 1.0);
  score.recall = score.gold > 0 ? m / static_cast<double>(score.gold)
                                : (score.predicted > 0 ? 0.0 : 1.0);
  score.f1 = score.precision + score.recall > 0
                 ? 2 * score.precision * score.recall / (score.precision + score.recall)
                 : 0.0;
  return score;
}

}  // namespace rosita
