// Count supervision labels and the absent / within / beyond category
// partition every other module consumes.
//
// Supervision is stored already clamped: a label is 0..4 or kBeyond. Raw
// counts never reach the trainer; they stay in dataset files and are read
// back only for evaluation.
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "ilc/core.hpp"

namespace ilc {

// First count outside the subitizing range. Labels cover 0..kSubitizingLimit-1;
// anything >= kSubitizingLimit is stored as kBeyond. Configurable in dataset
// ingestion and training configs; 5 is the operative default everywhere.
constexpr int kSubitizingLimit = 5;

// Marker for "ground-truth count >= subitizing limit".
constexpr int kBeyond = -1;

inline bool is_valid_label(int label, int subitizing_limit = kSubitizingLimit) {
  return label == kBeyond || (label >= 0 && label < subitizing_limit);
}

// Clamps a raw instance count to a supervision label: 0..limit-1 pass
// through, >= limit maps to kBeyond. Negative counts are rejected.
inline int clamp_raw_count(long long raw_count,
                           int subitizing_limit = kSubitizingLimit) {
  check(raw_count >= 0, "clamp_raw_count: negative count");
  check(subitizing_limit >= 1, "clamp_raw_count: subitizing limit must be >= 1");
  if (raw_count >= subitizing_limit) return kBeyond;
  return static_cast<int>(raw_count);
}

// Per-image ground-truth supervision: one clamped label per category.
struct CountAnnotation {
  std::string image_id;
  std::vector<int> counts;  // each entry 0..limit-1 or kBeyond
  int subitizing_limit = kSubitizingLimit;

  CountAnnotation() = default;
  CountAnnotation(std::string id, std::vector<int> labels,
                  int limit = kSubitizingLimit)
      : image_id(std::move(id)), counts(std::move(labels)),
        subitizing_limit(limit) {
    check(!counts.empty(), "CountAnnotation: needs at least one category");
    for (int v : counts)
      check(is_valid_label(v, subitizing_limit),
            "CountAnnotation: label out of range for image " + image_id);
  }

  int num_categories() const { return static_cast<int>(counts.size()); }
};

// Disjoint category index sets (0-based): absent (count 0), within the
// subitizing range (1..limit-1) and beyond it.
struct CategoryPartition {
  std::vector<int> absent;
  std::vector<int> within;
  std::vector<int> beyond;

  int total() const {
    return static_cast<int>(absent.size() + within.size() + beyond.size());
  }
  bool is_positive(int c) const {
    return std::find(within.begin(), within.end(), c) != within.end() ||
           std::find(beyond.begin(), beyond.end(), c) != beyond.end();
  }
};

inline CategoryPartition partition_categories(const CountAnnotation& ann) {
  CategoryPartition p;
  for (int c = 0; c < ann.num_categories(); ++c) {
    int label = ann.counts[c];
    if (label == kBeyond)
      p.beyond.push_back(c);
    else if (label == 0)
      p.absent.push_back(c);
    else
      p.within.push_back(c);
  }
  return p;
}

}  // namespace ilc
