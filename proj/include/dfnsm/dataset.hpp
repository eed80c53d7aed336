#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dfnsm/errors.hpp"

namespace dfnsm::dataset {

enum class Gender { kMale, kFemale };

// The seven ml-1m age bucket codes, in ascending order.
inline constexpr int kAgeCodes[7] = {1, 18, 25, 35, 45, 50, 56};
inline constexpr int kOccupationCount = 21;

struct UserProfile {
  int user_id = 0;
  Gender gender = Gender::kMale;
  int age_bucket = 1;   // one of kAgeCodes
  int occupation = 0;   // in [0, 20]
};

// parse_movies output, before tokenization against a vocabulary.
struct RawMovie {
  int movie_id = 0;
  std::string title;
  std::vector<std::string> genres;  // order-preserving, nonempty
};

struct Movie {
  int movie_id = 0;
  std::string title_raw;
  std::vector<int> title_tokens;  // length == title_len exactly, 0 = pad/unknown
  std::vector<int> tags;          // sorted unique tag ids, nonempty
};

struct RatingEvent {
  int user_id = 0;
  int movie_id = 0;
  int rating = 0;  // in [1, 5]
  std::int64_t timestamp = 0;
};

struct ActionSequence {
  int user_id = 0;
  std::vector<RatingEvent> events;  // sorted by (timestamp, movie_id)
  int length() const { return static_cast<int>(events.size()); }
};

// Token and tag tables. Ids are dense and assigned in first-appearance order
// over the movie file, so a given input corpus always produces the same ids.
struct Vocabulary {
  std::unordered_map<std::string, int> title_tokens;  // token -> id >= 1 (0 reserved)
  std::unordered_map<std::string, int> tags;          // tag name -> id in [0, |I|-1]
  std::vector<std::string> tag_names;                 // index = tag id

  int tag_count() const { return static_cast<int>(tag_names.size()); }
  // Table size including the reserved pad/unknown row 0.
  int title_table_size() const { return static_cast<int>(title_tokens.size()) + 1; }
};

struct Catalog {
  std::vector<UserProfile> users;  // file order
  std::vector<Movie> movies;       // file order
  Vocabulary vocab;
  int title_len = 0;

  std::unordered_map<int, std::size_t> user_index;   // user_id -> index
  std::unordered_map<int, std::size_t> movie_index;  // movie_id -> index

  const UserProfile* find_user(int user_id) const;
  const Movie* find_movie(int movie_id) const;
};

// Rows dropped or merged away while building action sequences.
struct MergeReport {
  std::size_t dropped_unknown_user = 0;
  std::size_t dropped_unknown_movie = 0;
  std::size_t dropped_duplicates = 0;  // same (user, movie, timestamp) seen again
  std::size_t total() const {
    return dropped_unknown_user + dropped_unknown_movie + dropped_duplicates;
  }
};

struct UserRatingStats {
  int user_id = 0;
  double mean_rating = 0.0;  // over the training prefix only
};

struct DatasetStats {
  std::size_t user_count = 0;
  std::size_t movie_count = 0;
  std::size_t rating_count = 0;
  double mean_seq_len = 0.0;
  double median_seq_len = 0.0;
  double mean_tags_per_movie = 0.0;
  double male_female_ratio = 0.0;
  std::size_t rating_histogram[5] = {0, 0, 0, 0, 0};     // ratings 1..5
  std::vector<std::pair<std::string, std::size_t>> tag_frequency;  // tag id order
  std::map<int, std::size_t> age_histogram;
  std::map<int, std::size_t> occupation_histogram;
};

// ---- parsing (Latin-1 byte streams; lines are `::`-delimited) ----

std::vector<UserProfile> parse_users(std::istream& in);
std::vector<RawMovie> parse_movies(std::istream& in);
std::vector<RatingEvent> parse_ratings(std::istream& in);

// ---- catalog construction ----

Vocabulary build_vocabulary(const std::vector<RawMovie>& movies);

// Lowercase, split on any non-alphanumeric run (byte-level ASCII; Latin-1
// bytes >= 0x80 act as separators), map through the vocabulary with unknown
// -> 0, right-pad with 0 / truncate to exactly `title_len` ids.
std::vector<int> tokenize_title(const std::string& title_raw, const Vocabulary& vocab,
                                int title_len);

Catalog build_catalog(std::vector<UserProfile> users, const std::vector<RawMovie>& movies,
                      int title_len);

// Groups events by user, drops rows with unknown user/movie ids, sorts by
// (timestamp, movie_id) and removes exact (movie, timestamp) duplicates,
// keeping the first file occurrence. Keyed by user id (ordered).
std::map<int, ActionSequence> build_action_sequences(const std::vector<RatingEvent>& events,
                                                     const Catalog& catalog,
                                                     MergeReport* report = nullptr);

// ---- splits and targets ----

// (training prefix of length T-1, holdout event A_T). Throws
// InsufficientHistoryError when T < 2.
std::pair<ActionSequence, RatingEvent> split_leave_last(const ActionSequence& seq);

// R_mean over the prefix and centered targets n(r) = r - R_mean per event.
std::pair<UserRatingStats, std::vector<double>> user_mean_and_center(
    const ActionSequence& prefix);

// Appends one extra copy of every row whose raw rating is below 3; original
// order preserved, duplicates appended in encounter order.
template <typename Row, typename RatingOf>
std::vector<Row> oversample_low_ratings(const std::vector<Row>& rows, RatingOf rating_of) {
  std::vector<Row> out = rows;
  for (const Row& r : rows) {
    if (rating_of(r) < 3) out.push_back(r);
  }
  return out;
}

// ---- statistics ----

DatasetStats dataset_stats(const Catalog& catalog,
                           const std::map<int, ActionSequence>& sequences);

std::string stats_to_json(const DatasetStats& stats);

// ---- convenience loader ----

struct MovieLens {
  Catalog catalog;
  std::map<int, ActionSequence> sequences;
  MergeReport merge_report;
};

// Reads users.dat / movies.dat / ratings.dat from `dir`.
MovieLens load_movielens(const std::string& dir, int title_len);

}  // namespace dfnsm::dataset
