#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "terraexpr/annotation.hpp"

namespace testing_support {

// Tallies by scanning every (annotator, choice) pair once per class, then
// picks the winner by comparing every class against every other.
inline std::optional<terraexpr::Expression> brute_force_vote(
    const std::vector<std::vector<terraexpr::Expression>>& ballots, bool ordered) {
  std::vector<int> tally(terraexpr::kExpressionCount, 0);
  for (std::size_t c = 0; c < terraexpr::kExpressionCount; ++c)
    for (const auto& ballot : ballots)
      for (auto choice : ballot)
        if (terraexpr::expression_code(choice) == c) ++tally[c];
  for (std::size_t c = 0; c < terraexpr::kExpressionCount; ++c) {
    if (tally[c] == 0) continue;
    bool beats_all = true, ties_lower = false;
    for (std::size_t o = 0; o < terraexpr::kExpressionCount; ++o) {
      if (o == c) continue;
      if (tally[o] > tally[c]) beats_all = false;
      if (tally[o] == tally[c]) {
        if (!ordered) beats_all = false;
        if (o < c) ties_lower = true;
      }
    }
    if (beats_all && !(ordered && ties_lower)) return terraexpr::expression_from_code(c);
  }
  return std::nullopt;
}

// Calls visit(ballots) for every sequence of 1..max_annotators ballots, each a
// non-empty subset (1 to 3 members) of `classes`.
inline std::size_t enumerate_ballots(const std::vector<terraexpr::Expression>& classes, std::size_t max_annotators,
                                     const std::function<void(const std::vector<std::vector<terraexpr::Expression>>&)>& visit) {
  std::vector<std::vector<terraexpr::Expression>> subsets;
  for (unsigned mask = 1; mask < (1u << classes.size()); ++mask) {
    std::vector<terraexpr::Expression> s;
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (mask & (1u << i)) s.push_back(classes[i]);
    if (s.size() <= 3) subsets.push_back(s);
  }
  std::size_t visited = 0;
  std::vector<std::vector<terraexpr::Expression>> ballots;
  std::function<void()> rec = [&] {
    if (!ballots.empty()) {
      visit(ballots);
      ++visited;
    }
    if (ballots.size() == max_annotators) return;
    for (const auto& s : subsets) {
      ballots.push_back(s);
      rec();
      ballots.pop_back();
    }
  };
  rec();
  return visited;
}

}  // namespace testing_support
