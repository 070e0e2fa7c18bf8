#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lll/numerics.hpp"

namespace lll {

/// Per-class training instance counts n_c.
struct ClassProfile {
  std::vector<std::int64_t> counts;

  std::size_t num_classes() const { return counts.size(); }

  /// C >= 2 and every n_c >= 1.
  void validate() const {
    if (counts.size() < 2) throw Error("class profile needs at least 2 classes");
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] < 1) {
        throw Error("class " + std::to_string(c) + " has count " + std::to_string(counts[c]) +
                    "; every class needs at least one instance");
      }
    }
  }

  Vec log_counts() const {
    Vec out(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) out[c] = std::log(static_cast<double>(counts[c]));
    return out;
  }

  friend bool operator==(const ClassProfile&, const ClassProfile&) = default;
};

}  // namespace lll
