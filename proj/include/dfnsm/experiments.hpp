#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfnsm/model.hpp"

namespace dfnsm::experiments {

// 1/log2(rank+1); the holdout is the only relevant item, so IDCG = 1.
double ndcg_at_rank(std::size_t rank);

// nDCG@all of `true_movie_id` within a ranked candidate list.
double ndcg_all(const std::vector<model::ScoredMovie>& ranked, int true_movie_id);

// Exact expectation of ndcg_at_rank under a uniformly random rank in [1, n].
double random_baseline_expectation(std::size_t n_candidates);

// Monte Carlo estimate of the same expectation.
double random_baseline_empirical(std::size_t n_candidates, std::size_t trials, Rng& rng);

struct EvalRecord {
  int user_id = 0;
  int holdout_movie_id = 0;
  std::size_t rank = 0;  // 1-based
  double ndcg = 0.0;
};

struct EvalSummary {
  std::vector<EvalRecord> records;
  double mean_ndcg = 0.0;
  std::size_t candidate_count = 0;  // full-catalog candidate count
  std::size_t skipped_users = 0;    // users with T < 2
};

// Leave-last-out evaluation: per user, the ANI row one step past the training
// prefix, the user tower, and the rank of the holdout movie over the catalog.
EvalSummary evaluate_users(const model::ModelParams& params, const dataset::Catalog& catalog,
                           const std::map<int, dataset::ActionSequence>& sequences,
                           const std::vector<int>& user_ids, bool exclude_seen = false);

struct SweepRecord {
  int k = 0;
  int user_id = 0;
  double ndcg = 0.0;
  bool ok = true;  // false when the cell's training diverged
};

// Retrains per (k, user) cell — or per k over the pooled user group when
// `shared_model` — from the same master seed, then evaluates leave-last-out.
// Cells are independent and run in parallel; records come back in grid order.
std::vector<SweepRecord> sweep_k(const dataset::Catalog& catalog,
                                 const std::map<int, dataset::ActionSequence>& sequences,
                                 const std::vector<int>& user_ids,
                                 const std::vector<int>& k_grid, model::ModelConfig config,
                                 bool shared_model = false);

struct UniRow {
  int user_id = 0;
  int t = 0;
  double uni = 0.0;
};

// UNI trajectory over each user's full sequence, capped at t <= 100.
std::vector<UniRow> uni_report(const dataset::Catalog& catalog,
                               const std::map<int, dataset::ActionSequence>& sequences,
                               const std::vector<int>& user_ids, int k);

// ---- CSV emission (header row, 6-decimal reals, atomic writes) ----

std::string eval_csv(const std::vector<EvalRecord>& records);
std::string sweep_csv(const std::vector<SweepRecord>& records);
std::string uni_csv(const std::vector<UniRow>& rows);

void write_eval_csv(const std::string& path, const std::vector<EvalRecord>& records);
void write_sweep_csv(const std::string& path, const std::vector<SweepRecord>& records);
void write_uni_csv(const std::string& path, const std::vector<UniRow>& rows);

}  // namespace dfnsm::experiments
