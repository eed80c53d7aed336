#pragma once

#include <span>
#include <vector>

#include "dfnsm/dataset.hpp"

namespace dfnsm::novelty {

struct NoveltyConfig {
  int k = 20;         // window length, >= 1
  int tag_count = 0;  // |I|, >= 1
};

// One user's actions reduced to tag sets; the input of all novelty kernels.
struct TagSequence {
  int user_id = 0;
  int tag_count = 0;
  std::vector<std::vector<int>> action_tags;  // per action, sorted unique tag ids
  int length() const { return static_cast<int>(action_tags.size()); }
};

TagSequence tag_sequence_for(const dataset::Catalog& catalog,
                             const dataset::ActionSequence& seq);

// T x |I| matrix of action-novelty values for one user and one k.
// Row index t is 1-based; every entry is 1/(window count + 1).
struct AniMatrix {
  int user_id = 0;
  int k = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major

  double at(int t, int tag) const {  // t in [1, rows]
    return data[static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(cols) +
                static_cast<std::size_t>(tag)];
  }
  std::span<const double> row(int t) const {
    return {data.data() + static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(cols),
            static_cast<std::size_t>(cols)};
  }
};

struct UniSeries {
  int user_id = 0;
  int k = 0;
  std::vector<double> values;  // values[t-1] = UNI_t
};

// Number of window actions whose tag set contains `tag`; the window is
// actions [max(1, t-k), t-1]. t may be T+1 so the next action can be scored.
int tag_window_count(const TagSequence& seq, int t, int k, int tag);

// Componentwise 1/(count+1) over all tags at time t.
std::vector<double> ani_row(const TagSequence& seq, int t, int k);

// Rows 1..T. OpenMP-parallel over rows; each row accumulates window tag
// counts once instead of rescanning per tag.
AniMatrix ani_matrix(const TagSequence& seq, const NoveltyConfig& config);

// Reference implementation: every entry evaluated independently through
// tag_window_count, exactly as defined. Kept for tests and benchmarks.
AniMatrix ani_matrix_serial(const TagSequence& seq, const NoveltyConfig& config);

// 1/(H+1) where H is the Shannon entropy (base 2) of the L1-normalized row.
double uni(std::span<const double> ani_row);

UniSeries uni_series(const AniMatrix& matrix);

}  // namespace dfnsm::novelty
