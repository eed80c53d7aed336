#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "dfnsm/dataset.hpp"
#include "dfnsm/rng.hpp"
#include "test_util.hpp"

using namespace dfnsm;
using namespace dfnsm::dataset;

namespace {

std::istringstream stream(const std::string& s) { return std::istringstream(s); }

}  // namespace

TEST_CASE("parse_users reads the published format") {
  auto in = stream("1::F::1::10::48067\n2::M::56::20::00000\n");
  const auto users = parse_users(in);
  REQUIRE(users.size() == 2);
  CHECK(users[0].user_id == 1);
  CHECK(users[0].gender == Gender::kFemale);
  CHECK(users[0].age_bucket == 1);
  CHECK(users[0].occupation == 10);
  CHECK(users[1].gender == Gender::kMale);
  CHECK(users[1].age_bucket == 56);
}

TEST_CASE("parse_users edge cases") {
  auto empty = stream("");
  CHECK(parse_users(empty).empty());

  auto bad_id = stream("x::F::1::10::48067\n");
  CHECK_THROWS_AS(parse_users(bad_id), ParseError);
  try {
    auto again = stream("1::F::1::10::48067\nx::F::1::10::48067\n");
    parse_users(again);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);  // error carries the line number
  }

  auto bad_gender = stream("1::X::1::10::48067\n");
  CHECK_THROWS_AS(parse_users(bad_gender), ValidationError);
  auto bad_age = stream("1::F::2::10::48067\n");
  CHECK_THROWS_AS(parse_users(bad_age), ValidationError);
  auto bad_occupation = stream("1::F::1::21::48067\n");
  CHECK_THROWS_AS(parse_users(bad_occupation), ValidationError);
  auto missing_field = stream("1::F::1::10\n");
  CHECK_THROWS_AS(parse_users(missing_field), ParseError);
}

TEST_CASE("parse_movies reads titles and genre lists") {
  auto in = stream("1::Toy Story (1995)::Animation|Children's|Comedy\n5::X::Drama\n");
  const auto movies = parse_movies(in);
  REQUIRE(movies.size() == 2);
  CHECK(movies[0].movie_id == 1);
  CHECK(movies[0].title == "Toy Story (1995)");
  CHECK(movies[0].genres == std::vector<std::string>{"Animation", "Children's", "Comedy"});
  CHECK(movies[1].genres == std::vector<std::string>{"Drama"});
}

TEST_CASE("parse_movies edge cases") {
  auto empty_genres = stream("5::X::\n");
  CHECK_THROWS_AS(parse_movies(empty_genres), ValidationError);
  auto missing = stream("5::X\n");
  CHECK_THROWS_AS(parse_movies(missing), ParseError);
  auto bad_id = stream("q::X::Drama\n");
  CHECK_THROWS_AS(parse_movies(bad_id), ParseError);

  // single ':' inside a title is data, and Latin-1 bytes pass through
  auto colons = stream("10::Star Wars: Episode IV::Action\n11::Mis\xe9rables, Les::Drama\n");
  const auto movies = parse_movies(colons);
  REQUIRE(movies.size() == 2);
  CHECK(movies[0].title == "Star Wars: Episode IV");
  CHECK(movies[1].title == "Mis\xe9rables, Les");

  // only the outermost '::' pairs delimit; the middle stays in the title
  auto nested = stream("12::A::B::Drama\n");
  const auto odd = parse_movies(nested);
  REQUIRE(odd.size() == 1);
  CHECK(odd[0].title == "A::B");
  CHECK(odd[0].genres == std::vector<std::string>{"Drama"});
}

TEST_CASE("parse_ratings reads events in file order") {
  auto in = stream("1::1193::5::978300760\n1::661::3::978302109\n");
  const auto events = parse_ratings(in);
  REQUIRE(events.size() == 2);
  CHECK(events[0].user_id == 1);
  CHECK(events[0].movie_id == 1193);
  CHECK(events[0].rating == 5);
  CHECK(events[0].timestamp == 978300760);

  auto empty = stream("");
  CHECK(parse_ratings(empty).empty());
  auto out_of_range = stream("1::1::6::0\n");
  CHECK_THROWS_AS(parse_ratings(out_of_range), ValidationError);
  auto zero = stream("1::1::0::0\n");
  CHECK_THROWS_AS(parse_ratings(zero), ValidationError);
}

TEST_CASE("tokenize_title follows the fixed rule") {
  std::vector<RawMovie> corpus;
  RawMovie m;
  m.movie_id = 1;
  m.title = "Toy Story (1995)";
  m.genres = {"Animation"};
  corpus.push_back(m);
  const Vocabulary vocab = build_vocabulary(corpus);
  CHECK(vocab.title_tokens.at("toy") == 1);
  CHECK(vocab.title_tokens.at("story") == 2);
  CHECK(vocab.title_tokens.at("1995") == 3);

  CHECK(tokenize_title("Toy Story (1995)", vocab, 5) == std::vector<int>{1, 2, 3, 0, 0});
  CHECK(tokenize_title("", vocab, 3) == std::vector<int>{0, 0, 0});
  CHECK(tokenize_title("Toy TOY toy Toy", vocab, 2) == std::vector<int>{1, 1});  // truncation
  CHECK(tokenize_title("unseen words", vocab, 3) == std::vector<int>{0, 0, 0});  // unknown -> 0
  // non-alphanumeric runs (including Latin-1 bytes) separate tokens
  CHECK(tokenize_title("toy--story\xe9toy", vocab, 4) == std::vector<int>{1, 2, 1, 0});
}

TEST_CASE("tokenize_title is length-exact and deterministic") {
  std::vector<RawMovie> corpus;
  RawMovie m;
  m.movie_id = 1;
  m.title = "alpha beta gamma delta";
  m.genres = {"Drama"};
  corpus.push_back(m);
  const Vocabulary vocab = build_vocabulary(corpus);

  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int len = 1 + static_cast<int>(rng.next_below(12));
    std::string title;
    for (int i = 0; i < 20; ++i) {
      title.push_back(static_cast<char>(32 + rng.next_below(95)));
    }
    const auto a = tokenize_title(title, vocab, len);
    const auto b = tokenize_title(title, vocab, len);
    CHECK(a.size() == static_cast<std::size_t>(len));
    CHECK(a == b);
  }
}

TEST_CASE("build_action_sequences sorts, ties on movie id, drops and counts") {
  const auto catalog = testutil::tiny_catalog({{0}, {0}, {1}}, 2);

  std::vector<RatingEvent> events = {
      {1, 1, 5, 10}, {1, 2, 4, 5},            // out of order
      {1, 3, 3, 20}, {1, 1, 2, 20},           // tie at t=20: ids 3 and 1
      {7, 1, 5, 1},                           // unknown user
      {1, 999, 5, 1},                         // unknown movie
      {1, 2, 4, 5},                           // duplicate (user, movie, timestamp)
  };
  MergeReport report;
  const auto seqs = build_action_sequences(events, catalog, &report);
  REQUIRE(seqs.count(1) == 1);
  const auto& seq = seqs.at(1);
  REQUIRE(seq.length() == 4);
  CHECK(seq.events[0].movie_id == 2);
  CHECK(seq.events[1].movie_id == 1);
  CHECK(seq.events[2].movie_id == 1);  // tie at 20 -> id 1 before id 3
  CHECK(seq.events[3].movie_id == 3);
  CHECK(report.dropped_unknown_user == 1);
  CHECK(report.dropped_unknown_movie == 1);
  CHECK(report.dropped_duplicates == 1);

  // (timestamp, movie_id) unique per user afterwards
  for (int i = 1; i < seq.length(); ++i) {
    const auto& a = seq.events[static_cast<std::size_t>(i - 1)];
    const auto& b = seq.events[static_cast<std::size_t>(i)];
    CHECK((a.timestamp < b.timestamp ||
           (a.timestamp == b.timestamp && a.movie_id < b.movie_id)));
  }
}

TEST_CASE("split_leave_last") {
  const auto seq5 = testutil::sequence_of({1, 2, 3, 4, 5}, {5, 5, 5, 5, 5});
  const auto [prefix, holdout] = split_leave_last(seq5);
  CHECK(prefix.length() == 4);
  CHECK(holdout.movie_id == 5);

  const auto seq2 = testutil::sequence_of({1, 2}, {5, 5});
  CHECK(split_leave_last(seq2).first.length() == 1);

  const auto seq1 = testutil::sequence_of({1}, {5});
  CHECK_THROWS_AS(split_leave_last(seq1), InsufficientHistoryError);
}

TEST_CASE("split round-trip reproduces the sequence") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(30));
    std::vector<int> ids, ratings;
    for (int i = 0; i < n; ++i) {
      ids.push_back(i + 1);
      ratings.push_back(1 + static_cast<int>(rng.next_below(5)));
    }
    const auto seq = testutil::sequence_of(ids, ratings);
    auto [prefix, holdout] = split_leave_last(seq);
    prefix.events.push_back(holdout);
    CHECK(prefix.events.size() == seq.events.size());
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
      CHECK(prefix.events[i].movie_id == seq.events[i].movie_id);
      CHECK(prefix.events[i].timestamp == seq.events[i].timestamp);
    }
  }
}

TEST_CASE("user_mean_and_center") {
  const auto s1 = testutil::sequence_of({1, 2, 3}, {4, 5, 3});
  const auto [stats1, n1] = user_mean_and_center(s1);
  CHECK(stats1.mean_rating == doctest::Approx(4.0));
  CHECK(n1[1] == doctest::Approx(1.0));

  const auto s2 = testutil::sequence_of({1, 2}, {5, 5});
  const auto [stats2, n2] = user_mean_and_center(s2);
  CHECK(n2[0] == 0.0);
  CHECK(n2[1] == 0.0);

  const auto s3 = testutil::sequence_of({1, 2, 3, 4, 5}, {1, 2, 3, 4, 5});
  const auto [stats3, n3] = user_mean_and_center(s3);
  CHECK(stats3.mean_rating == doctest::Approx(3.0));
  CHECK(n3 == std::vector<double>{-2, -1, 0, 1, 2});

  ActionSequence empty;
  CHECK_THROWS_AS(user_mean_and_center(empty), ValidationError);
}

TEST_CASE("centered targets sum to zero") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(40));
    std::vector<int> ids, ratings;
    for (int i = 0; i < n; ++i) {
      ids.push_back(i + 1);
      ratings.push_back(1 + static_cast<int>(rng.next_below(5)));
    }
    const auto [stats, centered] = user_mean_and_center(testutil::sequence_of(ids, ratings));
    CHECK(stats.mean_rating >= 1.0);
    CHECK(stats.mean_rating <= 5.0);
    double sum = 0.0;
    for (double v : centered) sum += v;
    CHECK(std::fabs(sum) < 1e-12 * static_cast<double>(n));
  }
}

TEST_CASE("oversample_low_ratings") {
  auto rating_of = [](int r) { return r; };
  CHECK(oversample_low_ratings<int>({5, 2, 3}, rating_of) == std::vector<int>{5, 2, 3, 2});
  CHECK(oversample_low_ratings<int>({3, 4, 5}, rating_of) == std::vector<int>{3, 4, 5});
  CHECK(oversample_low_ratings<int>({1, 1}, rating_of) == std::vector<int>{1, 1, 1, 1});

  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> rows;
    const int n = static_cast<int>(rng.next_below(30));
    for (int i = 0; i < n; ++i) rows.push_back(1 + static_cast<int>(rng.next_below(5)));
    const auto out = oversample_low_ratings(rows, rating_of);
    auto low = [&](const std::vector<int>& v) {
      return std::count_if(v.begin(), v.end(), [](int r) { return r < 3; });
    };
    auto high = [&](const std::vector<int>& v) {
      return std::count_if(v.begin(), v.end(), [](int r) { return r >= 3; });
    };
    CHECK(low(out) == 2 * low(rows));
    CHECK(high(out) == high(rows));
    CHECK(std::equal(rows.begin(), rows.end(), out.begin()));  // originals lead
  }
}

TEST_CASE("dataset_stats on a small synthetic catalog") {
  const auto catalog = [] {
    std::vector<RawMovie> movies;
    movies.push_back({1, "A", {"Drama"}});
    movies.push_back({2, "B", {"Drama", "Comedy"}});
    movies.push_back({3, "C", {"Comedy"}});
    std::vector<UserProfile> users = {{1, Gender::kMale, 25, 0}, {2, Gender::kFemale, 35, 4}};
    return build_catalog(std::move(users), movies, 4);
  }();
  std::vector<RatingEvent> events = {
      {1, 1, 5, 1}, {1, 2, 3, 2},                             // user 1: T=2
      {2, 1, 1, 1}, {2, 2, 2, 2}, {2, 3, 3, 3}, {2, 3, 4, 4},  // user 2: T=4
  };
  const auto seqs = build_action_sequences(events, catalog);
  const auto stats = dataset_stats(catalog, seqs);

  CHECK(stats.user_count == 2);
  CHECK(stats.movie_count == 3);
  CHECK(stats.rating_count == 6);
  CHECK(stats.mean_seq_len == doctest::Approx(3.0));
  CHECK(stats.median_seq_len == doctest::Approx(3.0));
  CHECK(stats.mean_tags_per_movie == doctest::Approx(4.0 / 3.0));
  CHECK(stats.male_female_ratio == doctest::Approx(1.0));

  std::size_t histogram_total = 0;
  for (std::size_t c : stats.rating_histogram) histogram_total += c;
  CHECK(histogram_total == stats.rating_count);
  CHECK(stats.rating_histogram[0] == 1);  // one rating of 1
  CHECK(stats.age_histogram.at(25) == 1);
  CHECK(stats.occupation_histogram.at(4) == 1);

  const auto json = nlohmann::json::parse(stats_to_json(stats));
  for (const char* key :
       {"user_count", "movie_count", "rating_count", "mean_seq_len", "median_seq_len",
        "mean_tags_per_movie", "male_female_ratio", "rating_histogram", "tag_frequency",
        "age_histogram", "occupation_histogram"}) {
    CHECK(json.contains(key));
  }
  CHECK(json["tag_frequency"]["Drama"] == 2);
}

TEST_CASE("vocabulary ids are dense and stable") {
  std::vector<RawMovie> movies;
  movies.push_back({1, "alpha beta", {"Drama"}});
  movies.push_back({2, "beta gamma", {"Comedy", "Drama"}});
  const auto v1 = build_vocabulary(movies);
  const auto v2 = build_vocabulary(movies);
  CHECK(v1.title_tokens.at("alpha") == 1);
  CHECK(v1.title_tokens.at("beta") == 2);
  CHECK(v1.title_tokens.at("gamma") == 3);
  CHECK(v1.tags.at("Drama") == 0);
  CHECK(v1.tags.at("Comedy") == 1);
  CHECK(v1.tag_count() == 2);
  CHECK(v1.title_table_size() == 4);
  CHECK(v2.title_tokens == v1.title_tokens);
  CHECK(v2.tags == v1.tags);
}

TEST_CASE("fixture loads cleanly") {
  const auto ml = load_movielens(testutil::fixture_dir(), 16);
  CHECK(ml.catalog.users.size() == 24);
  CHECK(ml.catalog.movies.size() == 400);
  CHECK(ml.merge_report.total() == 0);
  for (const auto& [uid, seq] : ml.sequences) {
    CHECK(seq.length() >= 2);
  }
}

// Only meaningful with the published ml-1m files; point DFNSM_ML1M_DIR at
// them to enable.
TEST_CASE("ml-1m spot checks" * doctest::skip(std::getenv("DFNSM_ML1M_DIR") == nullptr)) {
  const char* dir = std::getenv("DFNSM_ML1M_DIR");
  if (!dir) return;
  const auto ml = load_movielens(dir, 16);
  CHECK(ml.sequences.at(1).length() == 53);
  CHECK(ml.catalog.users.size() == 6040);
}
