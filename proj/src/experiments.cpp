#include "dfnsm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "dfnsm/io.hpp"

namespace dfnsm::experiments {

double ndcg_at_rank(std::size_t rank) {
  if (rank < 1) throw ValidationError("rank must be >= 1");
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

double ndcg_all(const std::vector<model::ScoredMovie>& ranked, int true_movie_id) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].movie_id == true_movie_id) return ndcg_at_rank(i + 1);
  }
  throw ValidationError("true movie " + std::to_string(true_movie_id) +
                        " absent from the ranked list");
}

double random_baseline_expectation(std::size_t n_candidates) {
  if (n_candidates == 0) throw ValidationError("candidate count must be >= 1");
  double sum = 0.0;
  for (std::size_t i = 1; i <= n_candidates; ++i) sum += ndcg_at_rank(i);
  return sum / static_cast<double>(n_candidates);
}

double random_baseline_empirical(std::size_t n_candidates, std::size_t trials, Rng& rng) {
  if (n_candidates == 0) throw ValidationError("candidate count must be >= 1");
  if (trials == 0) throw ValidationError("trials must be >= 1");
  double sum = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    sum += ndcg_at_rank(static_cast<std::size_t>(rng.next_below(n_candidates)) + 1);
  }
  return sum / static_cast<double>(trials);
}

namespace {

// Rank of the holdout among candidate scores without a full sort: one more
// than the number of strictly better candidates, counting equal-score
// candidates with a smaller movie id as better (the ranking tie rule).
std::size_t holdout_rank(const std::vector<double>& scores,
                         const std::vector<int>& movie_ids, double holdout_score,
                         int holdout_id) {
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (movie_ids[i] == holdout_id) continue;
    if (scores[i] > holdout_score ||
        (scores[i] == holdout_score && movie_ids[i] < holdout_id)) {
      ++rank;
    }
  }
  return rank;
}

}  // namespace

EvalSummary evaluate_users(const model::ModelParams& params, const dataset::Catalog& catalog,
                           const std::map<int, dataset::ActionSequence>& sequences,
                           const std::vector<int>& user_ids, bool exclude_seen) {
  model::validate_against_catalog(params, catalog);
  const std::vector<double> latents = model::movie_latents(params, catalog);
  const auto d = static_cast<std::size_t>(params.config.latent_dim);

  EvalSummary summary;
  summary.candidate_count = catalog.movies.size();

  for (int uid : user_ids) {
    const dataset::UserProfile* profile = catalog.find_user(uid);
    if (!profile) throw ValidationError("unknown user id " + std::to_string(uid));
    auto it = sequences.find(uid);
    if (it == sequences.end() || it->second.length() < 2) {
      ++summary.skipped_users;
      continue;
    }
    const auto [prefix, holdout] = dataset::split_leave_last(it->second);
    const novelty::TagSequence tags = novelty::tag_sequence_for(catalog, prefix);
    const std::vector<double> ani =
        novelty::ani_row(tags, prefix.length() + 1, params.config.k);
    const std::vector<double> user_vec =
        model::user_tower_values(params, model::demographics_vector(*profile), ani);

    std::vector<double> scores;
    std::vector<int> ids;
    scores.reserve(catalog.movies.size());
    ids.reserve(catalog.movies.size());
    std::unordered_set<int> seen;
    if (exclude_seen) {
      for (const dataset::RatingEvent& e : prefix.events) seen.insert(e.movie_id);
    }
    double holdout_score = 0.0;
    bool holdout_found = false;
    for (std::size_t i = 0; i < catalog.movies.size(); ++i) {
      const int id = catalog.movies[i].movie_id;
      if (exclude_seen && seen.count(id)) continue;
      const double s = model::predict_rating(user_vec, {latents.data() + i * d, d});
      scores.push_back(s);
      ids.push_back(id);
      if (id == holdout.movie_id) {
        holdout_score = s;
        holdout_found = true;
      }
    }
    if (!holdout_found) {
      throw ValidationError("holdout movie " + std::to_string(holdout.movie_id) +
                            " absent from the candidate set");
    }
    EvalRecord rec;
    rec.user_id = uid;
    rec.holdout_movie_id = holdout.movie_id;
    rec.rank = holdout_rank(scores, ids, holdout_score, holdout.movie_id);
    rec.ndcg = ndcg_at_rank(rec.rank);
    summary.records.push_back(rec);
  }

  if (!summary.records.empty()) {
    double sum = 0.0;
    for (const EvalRecord& r : summary.records) sum += r.ndcg;
    summary.mean_ndcg = sum / static_cast<double>(summary.records.size());
  }
  return summary;
}

std::vector<SweepRecord> sweep_k(const dataset::Catalog& catalog,
                                 const std::map<int, dataset::ActionSequence>& sequences,
                                 const std::vector<int>& user_ids,
                                 const std::vector<int>& k_grid, model::ModelConfig config,
                                 bool shared_model) {
  if (k_grid.empty()) throw ValidationError("empty k grid");
  if (!std::is_sorted(k_grid.begin(), k_grid.end())) {
    throw ValidationError("k grid must be ascending");
  }
  for (int k : k_grid) {
    if (k < 1) throw ValidationError("k values must be >= 1");
  }
  if (user_ids.empty()) throw ValidationError("no users selected");

  std::exception_ptr failure;  // exceptions may not escape the parallel regions

  if (shared_model) {
    // one model per k over the pooled user group; per-user eval records
    std::vector<std::vector<SweepRecord>> per_k(k_grid.size());
    const int nk = static_cast<int>(k_grid.size());
#pragma omp parallel for schedule(dynamic)
    for (int ki = 0; ki < nk; ++ki) {
      const int k = k_grid[static_cast<std::size_t>(ki)];
      model::ModelConfig cfg = config;
      cfg.k = k;
      std::vector<SweepRecord>& out = per_k[static_cast<std::size_t>(ki)];
      try {
        const auto rows = model::build_training_rows_pooled(catalog, sequences, user_ids, k);
        const model::TrainResult trained = model::train(rows, cfg, catalog);
        const EvalSummary s = evaluate_users(trained.params, catalog, sequences, user_ids);
        for (const EvalRecord& r : s.records) out.push_back({k, r.user_id, r.ndcg, true});
      } catch (const DivergenceError&) {
        for (int uid : user_ids) out.push_back({k, uid, 0.0, false});
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<SweepRecord> records;
    for (auto& v : per_k) records.insert(records.end(), v.begin(), v.end());
    return records;
  }

  // per-user models: one independent training per (k, user) cell
  const std::size_t cells = k_grid.size() * user_ids.size();
  std::vector<SweepRecord> records(cells);
  const int n_cells = static_cast<int>(cells);
#pragma omp parallel for schedule(dynamic)
  for (int cell = 0; cell < n_cells; ++cell) {
    const std::size_t ki = static_cast<std::size_t>(cell) / user_ids.size();
    const std::size_t ui = static_cast<std::size_t>(cell) % user_ids.size();
    const int k = k_grid[ki];
    const int uid = user_ids[ui];
    model::ModelConfig cfg = config;
    cfg.k = k;
    SweepRecord rec{k, uid, 0.0, true};
    try {
      const auto rows = model::build_training_rows_pooled(catalog, sequences, {uid}, k);
      const model::TrainResult trained = model::train(rows, cfg, catalog);
      const EvalSummary s = evaluate_users(trained.params, catalog, sequences, {uid});
      if (s.records.empty()) throw ValidationError("user has no evaluable holdout");
      rec.ndcg = s.records.front().ndcg;
    } catch (const DivergenceError&) {
      rec.ok = false;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
    records[static_cast<std::size_t>(cell)] = rec;
  }
  if (failure) std::rethrow_exception(failure);
  return records;
}

std::vector<UniRow> uni_report(const dataset::Catalog& catalog,
                               const std::map<int, dataset::ActionSequence>& sequences,
                               const std::vector<int>& user_ids, int k) {
  std::vector<UniRow> out;
  for (int uid : user_ids) {
    auto it = sequences.find(uid);
    if (it == sequences.end()) throw ValidationError("unknown user id " + std::to_string(uid));
    const novelty::TagSequence tags = novelty::tag_sequence_for(catalog, it->second);
    const novelty::AniMatrix ani =
        novelty::ani_matrix(tags, novelty::NoveltyConfig{k, tags.tag_count});
    const novelty::UniSeries series = novelty::uni_series(ani);
    const int cap = std::min(it->second.length(), 100);
    for (int t = 1; t <= cap; ++t) {
      out.push_back({uid, t, series.values[static_cast<std::size_t>(t - 1)]});
    }
  }
  return out;
}

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string eval_csv(const std::vector<EvalRecord>& records) {
  std::string out = "user_id,holdout_movie_id,rank,ndcg\n";
  for (const EvalRecord& r : records) {
    out += std::to_string(r.user_id) + "," + std::to_string(r.holdout_movie_id) + "," +
           std::to_string(r.rank) + "," + fmt6(r.ndcg) + "\n";
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRecord>& records) {
  std::string out = "k,user_id,ndcg\n";
  for (const SweepRecord& r : records) {
    if (!r.ok) continue;  // failed cells are reported, not emitted
    out += std::to_string(r.k) + "," + std::to_string(r.user_id) + "," + fmt6(r.ndcg) + "\n";
  }
  return out;
}

std::string uni_csv(const std::vector<UniRow>& rows) {
  std::string out = "user_id,t,uni\n";
  for (const UniRow& r : rows) {
    out += std::to_string(r.user_id) + "," + std::to_string(r.t) + "," + fmt6(r.uni) + "\n";
  }
  return out;
}

void write_eval_csv(const std::string& path, const std::vector<EvalRecord>& records) {
  atomic_write_file(path, eval_csv(records));
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRecord>& records) {
  atomic_write_file(path, sweep_csv(records));
}

void write_uni_csv(const std::string& path, const std::vector<UniRow>& rows) {
  atomic_write_file(path, uni_csv(rows));
}

}  // namespace dfnsm::experiments
