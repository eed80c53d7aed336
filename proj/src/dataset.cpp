#include "dfnsm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dfnsm/io.hpp"

namespace dfnsm::dataset {

namespace {

// Splits `line` on literal "::". Titles may contain single ':' characters;
// anything with fewer than `min_fields` pieces is malformed.
std::vector<std::string> split_double_colon(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find("::", pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 2;
  }
  return out;
}

int parse_int_field(const std::string& s, const char* what, std::size_t line_no) {
  int value = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || s.empty()) {
    throw ParseError(std::string("invalid ") + what + " '" + s + "'", line_no);
  }
  return value;
}

std::int64_t parse_i64_field(const std::string& s, const char* what, std::size_t line_no) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(std::string("invalid ") + what + " '" + s + "'", line_no);
  }
  return value;
}

// getline that tolerates CRLF input.
bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

bool is_valid_age_code(int code) {
  for (int a : kAgeCodes) {
    if (a == code) return true;
  }
  return false;
}

}  // namespace

const UserProfile* Catalog::find_user(int user_id) const {
  auto it = user_index.find(user_id);
  return it == user_index.end() ? nullptr : &users[it->second];
}

const Movie* Catalog::find_movie(int movie_id) const {
  auto it = movie_index.find(movie_id);
  return it == movie_index.end() ? nullptr : &movies[it->second];
}

std::vector<UserProfile> parse_users(std::istream& in) {
  std::vector<UserProfile> users;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_double_colon(line);
    if (fields.size() != 5) {
      throw ParseError("expected UserID::Gender::Age::Occupation::Zip-code", line_no);
    }
    UserProfile u;
    u.user_id = parse_int_field(fields[0], "user id", line_no);
    if (u.user_id <= 0) throw ParseError("user id must be positive", line_no);
    if (fields[1] == "M") {
      u.gender = Gender::kMale;
    } else if (fields[1] == "F") {
      u.gender = Gender::kFemale;
    } else {
      throw ValidationError("line " + std::to_string(line_no) + ": unknown gender '" +
                            fields[1] + "'");
    }
    u.age_bucket = parse_int_field(fields[2], "age", line_no);
    if (!is_valid_age_code(u.age_bucket)) {
      throw ValidationError("line " + std::to_string(line_no) + ": unknown age code " +
                            std::to_string(u.age_bucket));
    }
    u.occupation = parse_int_field(fields[3], "occupation", line_no);
    if (u.occupation < 0 || u.occupation >= kOccupationCount) {
      throw ValidationError("line " + std::to_string(line_no) + ": occupation " +
                            std::to_string(u.occupation) + " outside [0,20]");
    }
    // fields[4] is the zip code; discarded.
    users.push_back(u);
  }
  return users;
}

std::vector<RawMovie> parse_movies(std::istream& in) {
  std::vector<RawMovie> movies;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    // MovieID::Title::Genres, where the title itself may contain "::".
    const std::size_t first = line.find("::");
    const std::size_t last = line.rfind("::");
    if (first == std::string::npos || last == first) {
      throw ParseError("expected MovieID::Title::Genres", line_no);
    }
    RawMovie m;
    m.movie_id = parse_int_field(line.substr(0, first), "movie id", line_no);
    if (m.movie_id <= 0) throw ParseError("movie id must be positive", line_no);
    m.title = line.substr(first + 2, last - first - 2);
    const std::string genres = line.substr(last + 2);
    std::size_t pos = 0;
    while (pos <= genres.size()) {
      const std::size_t bar = genres.find('|', pos);
      const std::string g = genres.substr(pos, bar == std::string::npos ? std::string::npos
                                                                        : bar - pos);
      if (!g.empty()) m.genres.push_back(g);
      if (bar == std::string::npos) break;
      pos = bar + 1;
    }
    if (m.genres.empty()) {
      throw ValidationError("line " + std::to_string(line_no) + ": empty genre list for movie " +
                            std::to_string(m.movie_id));
    }
    movies.push_back(std::move(m));
  }
  return movies;
}

std::vector<RatingEvent> parse_ratings(std::istream& in) {
  std::vector<RatingEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_double_colon(line);
    if (fields.size() != 4) {
      throw ParseError("expected UserID::MovieID::Rating::Timestamp", line_no);
    }
    RatingEvent e;
    e.user_id = parse_int_field(fields[0], "user id", line_no);
    e.movie_id = parse_int_field(fields[1], "movie id", line_no);
    e.rating = parse_int_field(fields[2], "rating", line_no);
    e.timestamp = parse_i64_field(fields[3], "timestamp", line_no);
    if (e.rating < 1 || e.rating > 5) {
      throw ValidationError("line " + std::to_string(line_no) + ": rating " +
                            std::to_string(e.rating) + " outside [1,5]");
    }
    events.push_back(e);
  }
  return events;
}

namespace {

bool is_ascii_alnum(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

char to_lower_ascii(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : static_cast<char>(c);
}

template <typename Fn>
void for_each_title_token(const std::string& title, Fn fn) {
  std::string token;
  for (unsigned char c : title) {
    if (is_ascii_alnum(c)) {
      token.push_back(to_lower_ascii(c));
    } else if (!token.empty()) {
      fn(token);
      token.clear();
    }
  }
  if (!token.empty()) fn(token);
}

}  // namespace

Vocabulary build_vocabulary(const std::vector<RawMovie>& movies) {
  Vocabulary vocab;
  for (const RawMovie& m : movies) {
    for_each_title_token(m.title, [&](const std::string& tok) {
      const int next_id = static_cast<int>(vocab.title_tokens.size()) + 1;  // 0 reserved
      vocab.title_tokens.emplace(tok, next_id);
    });
    for (const std::string& g : m.genres) {
      if (vocab.tags.emplace(g, vocab.tag_count()).second) {
        vocab.tag_names.push_back(g);
      }
    }
  }
  return vocab;
}

std::vector<int> tokenize_title(const std::string& title_raw, const Vocabulary& vocab,
                                int title_len) {
  if (title_len < 1) throw ValidationError("title_len must be >= 1");
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(title_len));
  for_each_title_token(title_raw, [&](const std::string& tok) {
    if (ids.size() >= static_cast<std::size_t>(title_len)) return;
    auto it = vocab.title_tokens.find(tok);
    ids.push_back(it == vocab.title_tokens.end() ? 0 : it->second);
  });
  ids.resize(static_cast<std::size_t>(title_len), 0);
  return ids;
}

Catalog build_catalog(std::vector<UserProfile> users, const std::vector<RawMovie>& movies,
                      int title_len) {
  Catalog cat;
  cat.users = std::move(users);
  cat.vocab = build_vocabulary(movies);
  cat.title_len = title_len;
  cat.movies.reserve(movies.size());
  for (const RawMovie& rm : movies) {
    Movie m;
    m.movie_id = rm.movie_id;
    m.title_raw = rm.title;
    m.title_tokens = tokenize_title(rm.title, cat.vocab, title_len);
    for (const std::string& g : rm.genres) m.tags.push_back(cat.vocab.tags.at(g));
    std::sort(m.tags.begin(), m.tags.end());
    m.tags.erase(std::unique(m.tags.begin(), m.tags.end()), m.tags.end());
    cat.movies.push_back(std::move(m));
  }
  for (std::size_t i = 0; i < cat.users.size(); ++i) {
    if (!cat.user_index.emplace(cat.users[i].user_id, i).second) {
      throw ValidationError("duplicate user id " + std::to_string(cat.users[i].user_id));
    }
  }
  for (std::size_t i = 0; i < cat.movies.size(); ++i) {
    if (!cat.movie_index.emplace(cat.movies[i].movie_id, i).second) {
      throw ValidationError("duplicate movie id " + std::to_string(cat.movies[i].movie_id));
    }
  }
  return cat;
}

std::map<int, ActionSequence> build_action_sequences(const std::vector<RatingEvent>& events,
                                                     const Catalog& catalog,
                                                     MergeReport* report) {
  MergeReport local;
  std::map<int, ActionSequence> out;
  for (const RatingEvent& e : events) {
    if (!catalog.find_user(e.user_id)) {
      ++local.dropped_unknown_user;
      continue;
    }
    if (!catalog.find_movie(e.movie_id)) {
      ++local.dropped_unknown_movie;
      continue;
    }
    ActionSequence& seq = out[e.user_id];
    seq.user_id = e.user_id;
    seq.events.push_back(e);
  }
  for (auto& [uid, seq] : out) {
    std::stable_sort(seq.events.begin(), seq.events.end(),
                     [](const RatingEvent& a, const RatingEvent& b) {
                       if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                       return a.movie_id < b.movie_id;
                     });
    auto last = std::unique(seq.events.begin(), seq.events.end(),
                            [](const RatingEvent& a, const RatingEvent& b) {
                              return a.timestamp == b.timestamp && a.movie_id == b.movie_id;
                            });
    local.dropped_duplicates += static_cast<std::size_t>(seq.events.end() - last);
    seq.events.erase(last, seq.events.end());
  }
  if (report) *report = local;
  return out;
}

std::pair<ActionSequence, RatingEvent> split_leave_last(const ActionSequence& seq) {
  if (seq.length() < 2) {
    throw InsufficientHistoryError("user " + std::to_string(seq.user_id) + " has " +
                                   std::to_string(seq.length()) +
                                   " events; need at least 2 to hold one out");
  }
  ActionSequence prefix;
  prefix.user_id = seq.user_id;
  prefix.events.assign(seq.events.begin(), seq.events.end() - 1);
  return {std::move(prefix), seq.events.back()};
}

std::pair<UserRatingStats, std::vector<double>> user_mean_and_center(
    const ActionSequence& prefix) {
  if (prefix.events.empty()) {
    throw ValidationError("cannot center ratings of an empty prefix");
  }
  double sum = 0.0;
  for (const RatingEvent& e : prefix.events) sum += e.rating;
  UserRatingStats stats;
  stats.user_id = prefix.user_id;
  stats.mean_rating = sum / static_cast<double>(prefix.events.size());
  std::vector<double> centered;
  centered.reserve(prefix.events.size());
  for (const RatingEvent& e : prefix.events) {
    centered.push_back(static_cast<double>(e.rating) - stats.mean_rating);
  }
  return {stats, std::move(centered)};
}

DatasetStats dataset_stats(const Catalog& catalog,
                           const std::map<int, ActionSequence>& sequences) {
  DatasetStats s;
  s.user_count = catalog.users.size();
  s.movie_count = catalog.movies.size();

  std::vector<double> lengths;
  lengths.reserve(catalog.users.size());
  for (const UserProfile& u : catalog.users) {
    auto it = sequences.find(u.user_id);
    const int len = it == sequences.end() ? 0 : it->second.length();
    lengths.push_back(static_cast<double>(len));
    s.rating_count += static_cast<std::size_t>(len);
    if (it != sequences.end()) {
      for (const RatingEvent& e : it->second.events) {
        s.rating_histogram[e.rating - 1]++;
      }
    }
  }
  if (!lengths.empty()) {
    s.mean_seq_len = static_cast<double>(s.rating_count) / static_cast<double>(lengths.size());
    std::sort(lengths.begin(), lengths.end());
    const std::size_t n = lengths.size();
    s.median_seq_len = (n % 2 == 1) ? lengths[n / 2]
                                    : 0.5 * (lengths[n / 2 - 1] + lengths[n / 2]);
  }

  std::size_t tag_total = 0;
  std::vector<std::size_t> tag_counts(static_cast<std::size_t>(catalog.vocab.tag_count()), 0);
  for (const Movie& m : catalog.movies) {
    tag_total += m.tags.size();
    for (int t : m.tags) tag_counts[static_cast<std::size_t>(t)]++;
  }
  if (!catalog.movies.empty()) {
    s.mean_tags_per_movie = static_cast<double>(tag_total) /
                            static_cast<double>(catalog.movies.size());
  }
  for (int t = 0; t < catalog.vocab.tag_count(); ++t) {
    s.tag_frequency.emplace_back(catalog.vocab.tag_names[static_cast<std::size_t>(t)],
                                 tag_counts[static_cast<std::size_t>(t)]);
  }

  std::size_t male = 0, female = 0;
  for (const UserProfile& u : catalog.users) {
    (u.gender == Gender::kMale ? male : female)++;
    s.age_histogram[u.age_bucket]++;
    s.occupation_histogram[u.occupation]++;
  }
  s.male_female_ratio = female == 0 ? 0.0
                                    : static_cast<double>(male) / static_cast<double>(female);
  return s;
}

std::string stats_to_json(const DatasetStats& stats) {
  nlohmann::ordered_json j;
  j["user_count"] = stats.user_count;
  j["movie_count"] = stats.movie_count;
  j["rating_count"] = stats.rating_count;
  j["mean_seq_len"] = stats.mean_seq_len;
  j["median_seq_len"] = stats.median_seq_len;
  j["mean_tags_per_movie"] = stats.mean_tags_per_movie;
  j["male_female_ratio"] = stats.male_female_ratio;
  j["rating_histogram"] = stats.rating_histogram;
  nlohmann::ordered_json tags = nlohmann::ordered_json::object();
  for (const auto& [name, count] : stats.tag_frequency) tags[name] = count;
  j["tag_frequency"] = std::move(tags);
  nlohmann::ordered_json ages = nlohmann::ordered_json::object();
  for (const auto& [code, count] : stats.age_histogram) ages[std::to_string(code)] = count;
  j["age_histogram"] = std::move(ages);
  nlohmann::ordered_json jobs = nlohmann::ordered_json::object();
  for (const auto& [code, count] : stats.occupation_histogram) jobs[std::to_string(code)] = count;
  j["occupation_histogram"] = std::move(jobs);
  return j.dump(2) + "\n";
}

MovieLens load_movielens(const std::string& dir, int title_len) {
  auto open = [&](const char* name) {
    std::ifstream f(dir + "/" + name, std::ios::binary);
    if (!f) throw IoError("cannot open " + dir + "/" + name);
    return f;
  };
  std::ifstream users_f = open("users.dat");
  std::ifstream movies_f = open("movies.dat");
  std::ifstream ratings_f = open("ratings.dat");

  MovieLens ml;
  auto users = parse_users(users_f);
  auto movies = parse_movies(movies_f);
  auto events = parse_ratings(ratings_f);
  ml.catalog = build_catalog(std::move(users), movies, title_len);
  ml.sequences = build_action_sequences(events, ml.catalog, &ml.merge_report);
  return ml;
}

}  // namespace dfnsm::dataset
