// tsasr/tests/wer_oracle.hpp

// Copyright 2026 The tsasr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <tuple>
#include <vector>

namespace tsasr::testing {

struct EditCounts {
  std::size_t errors = 0, matches = 0, subs = 0, ins = 0, dels = 0;
};

/// Tries every edit at every position and keeps the cheapest continuation;
/// ties prefer more matches, then more substitutions. Memoized on (i, j).
inline EditCounts brute_force_edits(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::optional<EditCounts>> memo((n + 1) * (m + 1));
  auto better = [](const EditCounts& a, const EditCounts& b) {
    return std::make_tuple(a.errors, b.matches, b.subs) <
           std::make_tuple(b.errors, a.matches, a.subs);
  };
  std::function<EditCounts(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) {
    auto& slot = memo[i * (m + 1) + j];
    if (slot) return *slot;
    std::optional<EditCounts> best;
    auto consider = [&](EditCounts c) {
      if (!best || better(c, *best)) best = c;
    };
    if (i < n && j < m) {
      EditCounts c = go(i + 1, j + 1);
      if (ref[i] == hyp[j]) {
        ++c.matches;
      } else {
        ++c.subs;
        ++c.errors;
      }
      consider(c);
    }
    if (i < n) {
      EditCounts c = go(i + 1, j);
      ++c.dels;
      ++c.errors;
      consider(c);
    }
    if (j < m) {
      EditCounts c = go(i, j + 1);
      ++c.ins;
      ++c.errors;
      consider(c);
    }
    slot = best.value_or(EditCounts{});
    return *slot;
  };
  return go(0, 0);
}

/// Every sequence over {0..alphabet-1} of length 0..max_len.
inline std::vector<std::vector<int>> all_sequences(int alphabet, std::size_t max_len) {
  std::vector<std::vector<int>> out{{}};
  std::size_t begin = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t k = begin; k < end; ++k)
      if (out[k].size() == len - 1)
        for (int a = 0; a < alphabet; ++a) {
          auto s = out[k];
          s.push_back(a);
          out.push_back(std::move(s));
        }
    begin = end;
  }
  return out;
}

}  // namespace tsasr::testing
