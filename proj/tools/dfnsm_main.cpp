// Command-line surface: stats, train, eval, sweep-k, uni, grad-check.
// Exit codes: 0 success, 1 usage/parse/validation error, 2 runtime error
// (missing file, divergence).

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dfnsm/dataset.hpp"
#include "dfnsm/experiments.hpp"
#include "dfnsm/io.hpp"
#include "dfnsm/model.hpp"

namespace {

using namespace dfnsm;

// "N" selects the first N users in file order; "a,b,c" selects exactly those
// ids (a trailing comma forces list interpretation for a single id).
std::vector<int> select_users(const dataset::Catalog& catalog, const std::string& selector) {
  std::vector<int> ids;
  if (selector.find(',') != std::string::npos) {
    std::size_t pos = 0;
    while (pos <= selector.size()) {
      const std::size_t comma = selector.find(',', pos);
      const std::string piece =
          selector.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!piece.empty()) {
        try {
          ids.push_back(std::stoi(piece));
        } catch (const std::exception&) {
          throw ValidationError("bad user id '" + piece + "' in --users");
        }
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (ids.empty()) throw ValidationError("--users list is empty");
    for (int id : ids) {
      if (!catalog.find_user(id)) throw ValidationError("unknown user id " + std::to_string(id));
    }
    return ids;
  }
  int count = 0;
  try {
    count = std::stoi(selector);
  } catch (const std::exception&) {
    throw ValidationError("--users must be a count or a comma-separated id list");
  }
  if (count < 1) throw ValidationError("--users count must be >= 1");
  if (static_cast<std::size_t>(count) > catalog.users.size()) {
    throw ValidationError("--users asks for " + std::to_string(count) + " users but only " +
                          std::to_string(catalog.users.size()) + " exist");
  }
  for (int i = 0; i < count; ++i) ids.push_back(catalog.users[static_cast<std::size_t>(i)].user_id);
  return ids;
}

void add_model_flags(CLI::App* cmd, model::ModelConfig& cfg) {
  cmd->add_option("--seed", cfg.seed, "master seed");
  cmd->add_option("--epochs", cfg.max_epochs, "max training epochs");
  cmd->add_option("--lr", cfg.learning_rate, "SGD learning rate");
  cmd->add_option("--batch", cfg.batch_size, "mini-batch size");
  cmd->add_option("--latent", cfg.latent_dim, "latent dimension d");
  cmd->add_option("--token-emb", cfg.token_emb_dim, "title token embedding dimension");
  cmd->add_option("--tag-emb", cfg.tag_emb_dim, "tag embedding dimension");
  cmd->add_option("--conv-window", cfg.conv_window, "title convolution window");
  cmd->add_option("--conv-filters", cfg.conv_filters, "title convolution filters");
  cmd->add_option("--title-len", cfg.title_len, "tokenized title length");
  cmd->add_option("--tol", cfg.convergence_tol, "relative-improvement stopping tolerance");
}

int run(int argc, char** argv) {
  CLI::App app{"Deep Forgetful Novelty-Seeking Model pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config appear after the subcommand name
  app.set_config("--config", "",
                 "key=value config file; subcommand settings go under a [subcommand] section");

  // ---- stats ----
  std::string stats_data_dir, stats_out;
  int stats_title_len = 16;
  CLI::App* stats = app.add_subcommand("stats", "dataset summary statistics as JSON");
  stats->add_option("--data-dir", stats_data_dir, "directory with users/movies/ratings .dat")
      ->required();
  stats->add_option("--out", stats_out, "output JSON path")->required();
  stats->add_option("--title-len", stats_title_len, "tokenized title length");

  // ---- train ----
  std::string train_data_dir, train_users = "20", train_out, train_loss_out;
  model::ModelConfig train_cfg;
  CLI::App* train = app.add_subcommand("train", "train on the first N users, save parameters");
  train->add_option("--data-dir", train_data_dir, "dataset directory")->required();
  train->add_option("--users", train_users, "user count or comma-separated id list");
  train->add_option("--k", train_cfg.k, "novelty window length");
  train->add_option("--out", train_out, "model file path")->required();
  train->add_option("--loss-out", train_loss_out, "loss trace CSV (default: <out>.loss.csv)");
  add_model_flags(train, train_cfg);

  // ---- eval ----
  std::string eval_model, eval_data_dir, eval_users = "20", eval_out;
  bool eval_exclude_seen = false;
  CLI::App* eval = app.add_subcommand("eval", "leave-last-out nDCG@all evaluation");
  eval->add_option("--model", eval_model, "trained model file")->required();
  eval->add_option("--data-dir", eval_data_dir, "dataset directory")->required();
  eval->add_option("--users", eval_users, "user count or comma-separated id list");
  eval->add_flag("--exclude-seen", eval_exclude_seen, "drop prefix movies from the candidates");
  eval->add_option("--out", eval_out, "per-user CSV path")->required();

  // ---- sweep-k ----
  std::string sweep_data_dir, sweep_users = "3", sweep_out;
  int sweep_k_min = 0, sweep_k_max = 0, sweep_step = 1;
  bool sweep_shared = false;
  model::ModelConfig sweep_cfg;
  CLI::App* sweep = app.add_subcommand("sweep-k", "retrain and evaluate across a k grid");
  sweep->add_option("--data-dir", sweep_data_dir, "dataset directory")->required();
  sweep->add_option("--users", sweep_users, "user count or comma-separated id list");
  sweep->add_option("--k-min", sweep_k_min, "first k value")->required();
  sweep->add_option("--k-max", sweep_k_max, "last k value")->required();
  sweep->add_option("--step", sweep_step, "k grid step");
  sweep->add_flag("--shared", sweep_shared, "one shared model per k instead of per-user models");
  sweep->add_option("--out", sweep_out, "sweep CSV path")->required();
  add_model_flags(sweep, sweep_cfg);

  // ---- uni ----
  std::string uni_data_dir, uni_users = "1,2,3,4,5", uni_out;
  int uni_k = 20;
  int uni_title_len = 16;
  CLI::App* uni = app.add_subcommand("uni", "UNI trajectories as CSV");
  uni->add_option("--data-dir", uni_data_dir, "dataset directory")->required();
  uni->add_option("--users", uni_users, "user count or comma-separated id list");
  uni->add_option("--k", uni_k, "novelty window length");
  uni->add_option("--title-len", uni_title_len, "tokenized title length");
  uni->add_option("--out", uni_out, "UNI CSV path")->required();

  // ---- grad-check ----
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4, gc_eps = 1e-4;
  int gc_configs = 20;
  CLI::App* gc = app.add_subcommand("grad-check",
                                    "finite-difference check of the full model gradient");
  gc->add_option("--seed", gc_seed, "master seed");
  gc->add_option("--tol", gc_tol, "max relative error to accept");
  gc->add_option("--epsilon", gc_eps, "finite-difference step");
  gc->add_option("--configs", gc_configs, "number of random model configurations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the message or the help text
    return code == 0 ? 0 : 1;     // usage problems exit with 1
  }

  if (stats->parsed()) {
    const dataset::MovieLens ml = dataset::load_movielens(stats_data_dir, stats_title_len);
    const dataset::DatasetStats s = dataset::dataset_stats(ml.catalog, ml.sequences);
    atomic_write_file(stats_out, dataset::stats_to_json(s));
    std::printf("users=%zu movies=%zu ratings=%zu dropped=%zu\n", s.user_count, s.movie_count,
                s.rating_count, ml.merge_report.total());
    std::printf("wrote %s\n", stats_out.c_str());
    return 0;
  }

  if (train->parsed()) {
    const dataset::MovieLens ml = dataset::load_movielens(train_data_dir, train_cfg.title_len);
    const std::vector<int> users = select_users(ml.catalog, train_users);
    const auto rows =
        model::build_training_rows_pooled(ml.catalog, ml.sequences, users, train_cfg.k);
    const model::TrainResult result = model::train(rows, train_cfg, ml.catalog);
    model::save_params_file(result.params, train_out);

    std::string trace = "epoch,mean_loss\n";
    char line[64];
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      std::snprintf(line, sizeof(line), "%zu,%.17g\n", e + 1, result.epoch_losses[e]);
      trace += line;
    }
    const std::string loss_path =
        train_loss_out.empty() ? train_out + ".loss.csv" : train_loss_out;
    atomic_write_file(loss_path, trace);
    std::printf("trained on %zu rows from %zu users; %d epochs, final loss %.6f\n", rows.size(),
                users.size(), result.epochs_run, result.epoch_losses.back());
    std::printf("wrote %s and %s\n", train_out.c_str(), loss_path.c_str());
    return 0;
  }

  if (eval->parsed()) {
    const model::ModelParams params = model::load_params_file(eval_model);
    const dataset::MovieLens ml =
        dataset::load_movielens(eval_data_dir, params.config.title_len);
    const std::vector<int> users = select_users(ml.catalog, eval_users);
    const experiments::EvalSummary s =
        experiments::evaluate_users(params, ml.catalog, ml.sequences, users, eval_exclude_seen);
    experiments::write_eval_csv(eval_out, s.records);
    const double baseline = experiments::random_baseline_expectation(s.candidate_count);
    std::printf("mean_ndcg=%.6f users=%zu skipped=%zu\n", s.mean_ndcg, s.records.size(),
                s.skipped_users);
    std::printf("random_baseline=%.6f (over %zu candidates), ratio=%.3f\n", baseline,
                s.candidate_count, s.mean_ndcg / baseline);
    std::printf("wrote %s\n", eval_out.c_str());
    return 0;
  }

  if (sweep->parsed()) {
    if (sweep_step < 1) throw ValidationError("--step must be >= 1");
    if (sweep_k_min < 1 || sweep_k_max < sweep_k_min) {
      throw ValidationError("need 1 <= --k-min <= --k-max");
    }
    std::vector<int> grid;
    for (int k = sweep_k_min; k <= sweep_k_max; k += sweep_step) grid.push_back(k);
    const dataset::MovieLens ml = dataset::load_movielens(sweep_data_dir, sweep_cfg.title_len);
    const std::vector<int> users = select_users(ml.catalog, sweep_users);
    const auto records =
        experiments::sweep_k(ml.catalog, ml.sequences, users, grid, sweep_cfg, sweep_shared);
    experiments::write_sweep_csv(sweep_out, records);
    std::size_t failed = 0;
    for (const auto& r : records) failed += r.ok ? 0 : 1;
    std::printf("swept %zu k-values x %zu users; %zu cells failed\n", grid.size(), users.size(),
                failed);
    std::printf("random_baseline=%.6f (over %zu candidates)\n",
                experiments::random_baseline_expectation(ml.catalog.movies.size()),
                ml.catalog.movies.size());
    std::printf("wrote %s\n", sweep_out.c_str());
    return 0;
  }

  if (uni->parsed()) {
    const dataset::MovieLens ml = dataset::load_movielens(uni_data_dir, uni_title_len);
    const std::vector<int> users = select_users(ml.catalog, uni_users);
    const auto rows = experiments::uni_report(ml.catalog, ml.sequences, users, uni_k);
    experiments::write_uni_csv(uni_out, rows);
    std::printf("wrote %zu rows to %s\n", rows.size(), uni_out.c_str());
    return 0;
  }

  if (gc->parsed()) {
    const model::ModelGradCheckReport r = model::run_model_grad_check(gc_seed, gc_configs, gc_eps);
    std::printf("configs=%d redrawn=%d entries=%zu max_rel_err=%.3g tol=%.3g\n",
                r.configs_checked, r.configs_redrawn, r.entries_checked, r.max_rel_err, gc_tol);
    if (r.max_rel_err < gc_tol) {
      std::printf("gradient check passed\n");
      return 0;
    }
    std::printf("gradient check FAILED\n");
    return 1;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dfnsm::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const dfnsm::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const dfnsm::InsufficientHistoryError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const dfnsm::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const dfnsm::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
