#include "dfnsm/novelty.hpp"

#include <algorithm>
#include <cmath>

#include "dfnsm/errors.hpp"

namespace dfnsm::novelty {

namespace {

void check_time(const TagSequence& seq, int t) {
  if (t < 1 || t > seq.length() + 1) {
    throw ValidationError("time index " + std::to_string(t) + " outside [1, T+1] for T=" +
                          std::to_string(seq.length()));
  }
}

void check_config(const TagSequence& seq, int k) {
  if (k < 1) throw ValidationError("window length k must be >= 1");
  if (seq.tag_count < 1) throw ValidationError("tag_count must be >= 1");
}

}  // namespace

TagSequence tag_sequence_for(const dataset::Catalog& catalog,
                             const dataset::ActionSequence& seq) {
  TagSequence ts;
  ts.user_id = seq.user_id;
  ts.tag_count = catalog.vocab.tag_count();
  ts.action_tags.reserve(seq.events.size());
  for (const dataset::RatingEvent& e : seq.events) {
    const dataset::Movie* m = catalog.find_movie(e.movie_id);
    if (!m) throw ValidationError("movie " + std::to_string(e.movie_id) + " not in catalog");
    ts.action_tags.push_back(m->tags);
  }
  return ts;
}

int tag_window_count(const TagSequence& seq, int t, int k, int tag) {
  check_config(seq, k);
  check_time(seq, t);
  if (tag < 0 || tag >= seq.tag_count) {
    throw ValidationError("tag id " + std::to_string(tag) + " outside [0, |I|)");
  }
  const int lo = std::max(1, t - k);
  int count = 0;
  for (int a = lo; a <= t - 1; ++a) {
    const std::vector<int>& tags = seq.action_tags[static_cast<std::size_t>(a - 1)];
    if (std::binary_search(tags.begin(), tags.end(), tag)) ++count;
  }
  return count;
}

std::vector<double> ani_row(const TagSequence& seq, int t, int k) {
  check_config(seq, k);
  check_time(seq, t);
  std::vector<int> counts(static_cast<std::size_t>(seq.tag_count), 0);
  const int lo = std::max(1, t - k);
  for (int a = lo; a <= t - 1; ++a) {
    for (int tag : seq.action_tags[static_cast<std::size_t>(a - 1)]) {
      counts[static_cast<std::size_t>(tag)]++;
    }
  }
  std::vector<double> row(static_cast<std::size_t>(seq.tag_count));
  for (std::size_t i = 0; i < row.size(); ++i) {
    row[i] = 1.0 / static_cast<double>(counts[i] + 1);
  }
  return row;
}

AniMatrix ani_matrix(const TagSequence& seq, const NoveltyConfig& config) {
  check_config(seq, config.k);
  if (config.tag_count != seq.tag_count) {
    throw ValidationError("config tag_count does not match sequence tag_count");
  }
  if (seq.length() == 0) throw ValidationError("cannot build an ANI matrix for an empty sequence");

  AniMatrix m;
  m.user_id = seq.user_id;
  m.k = config.k;
  m.rows = seq.length();
  m.cols = seq.tag_count;
  m.data.resize(static_cast<std::size_t>(m.rows) * static_cast<std::size_t>(m.cols));

  const int rows = m.rows;
#pragma omp parallel for schedule(static)
  for (int t = 1; t <= rows; ++t) {
    const std::vector<double> row = ani_row(seq, t, config.k);
    std::copy(row.begin(), row.end(),
              m.data.begin() + static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(m.cols));
  }
  return m;
}

AniMatrix ani_matrix_serial(const TagSequence& seq, const NoveltyConfig& config) {
  check_config(seq, config.k);
  if (config.tag_count != seq.tag_count) {
    throw ValidationError("config tag_count does not match sequence tag_count");
  }
  if (seq.length() == 0) throw ValidationError("cannot build an ANI matrix for an empty sequence");

  AniMatrix m;
  m.user_id = seq.user_id;
  m.k = config.k;
  m.rows = seq.length();
  m.cols = seq.tag_count;
  m.data.resize(static_cast<std::size_t>(m.rows) * static_cast<std::size_t>(m.cols));
  for (int t = 1; t <= m.rows; ++t) {
    for (int tag = 0; tag < m.cols; ++tag) {
      m.data[static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(m.cols) +
             static_cast<std::size_t>(tag)] =
          1.0 / static_cast<double>(tag_window_count(seq, t, config.k, tag) + 1);
    }
  }
  return m;
}

double uni(std::span<const double> row) {
  if (row.empty()) throw ValidationError("uni: empty row");
  double sum = 0.0;
  for (double v : row) {
    if (v <= 0.0) throw ValidationError("uni: row entries must be positive");
    sum += v;
  }
  if (sum <= 0.0) throw ValidationError("uni: zero-sum row");
  double entropy = 0.0;
  for (double v : row) {
    const double p = v / sum;
    entropy -= p * std::log2(p);
  }
  entropy = std::max(entropy, 0.0);  // -0.0 guard for single-element rows
  return 1.0 / (entropy + 1.0);
}

UniSeries uni_series(const AniMatrix& matrix) {
  UniSeries s;
  s.user_id = matrix.user_id;
  s.k = matrix.k;
  s.values.resize(static_cast<std::size_t>(matrix.rows));
  for (int t = 1; t <= matrix.rows; ++t) {
    s.values[static_cast<std::size_t>(t - 1)] = uni(matrix.row(t));
  }
  return s;
}

}  // namespace dfnsm::novelty
