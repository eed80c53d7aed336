#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfnsm/dataset.hpp"
#include "dfnsm/novelty.hpp"
#include "dfnsm/tape.hpp"

namespace dfnsm::model {

// gender (2) + age bucket (7) + occupation (21)
inline constexpr int kDemographicsDim = 30;

struct ModelConfig {
  int latent_dim = 32;
  int token_emb_dim = 16;
  int tag_emb_dim = 16;
  int conv_window = 3;
  int conv_filters = 16;
  int title_len = 16;
  double learning_rate = 0.01;
  int batch_size = 64;
  int max_epochs = 30;
  double convergence_tol = 1e-4;
  std::uint64_t seed = 1;
  int k = 20;  // novelty window

  void validate() const;
};

// All learnable arrays of the two towers.
struct ModelParams {
  ModelConfig config;
  std::size_t title_vocab = 0;  // token table rows, including pad/unknown row 0
  std::size_t tag_count = 0;

  numcore::Tensor token_emb;     // [title_vocab, token_emb_dim]
  numcore::Tensor tag_emb;       // [tag_count, tag_emb_dim]
  numcore::Tensor conv_kernels;  // [conv_filters, conv_window, token_emb_dim]
  numcore::Tensor conv_bias;     // [conv_filters]
  numcore::Tensor movie_w;       // [latent_dim, conv_filters + tag_emb_dim]
  numcore::Tensor movie_b;       // [latent_dim]
  numcore::Tensor user_w;        // [latent_dim, kDemographicsDim + tag_count]
  numcore::Tensor user_b;        // [latent_dim]

  std::vector<numcore::Tensor*> all();
  std::vector<const numcore::Tensor*> all() const;
};

// Gaussian(0, 0.1^2) initialization of every array, seeded from config.seed.
ModelParams init_params(const ModelConfig& config, std::size_t title_vocab,
                        std::size_t tag_count);

std::array<double, kDemographicsDim> demographics_vector(const dataset::UserProfile& user);

// Tape-graph builders. Parameter leaves are registered once per tape and
// shared by every row of a batch.
struct ParamNodes {
  numcore::Tape::NodeId token_emb, tag_emb, conv_kernels, conv_bias;
  numcore::Tape::NodeId movie_w, movie_b, user_w, user_b;
};
ParamNodes register_params(numcore::Tape& tape, ModelParams& params);

numcore::Tape::NodeId movie_tower(numcore::Tape& tape, const ParamNodes& nodes,
                                  const dataset::Movie& movie);
numcore::Tape::NodeId user_tower(numcore::Tape& tape, const ParamNodes& nodes,
                                 std::span<const double> demographics,
                                 std::span<const double> ani_row);

// Forward-only evaluation (no gradient record); identical arithmetic to the
// tape path, in the same operation order.
std::vector<double> movie_tower_values(const ModelParams& params, const dataset::Movie& movie);
std::vector<double> user_tower_values(const ModelParams& params,
                                      std::span<const double> demographics,
                                      std::span<const double> ani_row);
double predict_rating(std::span<const double> user_vec, std::span<const double> movie_vec);

// One supervised example: ANI row at time t plus the centered target.
struct TrainingRow {
  int user_id = 0;
  int t = 0;  // 1-based position in the prefix
  int movie_id = 0;
  int raw_rating = 0;
  std::vector<double> ani_row;
  double target = 0.0;  // n(r) = r - R_mean
};

// Rows for one user's training prefix: ANI on the unaugmented prefix,
// centered targets, then low-rating oversampling.
std::vector<TrainingRow> build_training_rows(const dataset::Catalog& catalog,
                                             const dataset::ActionSequence& prefix, int k);

// Pooled rows for several users, in user order. Per-user work runs in
// parallel; output order does not depend on thread scheduling.
std::vector<TrainingRow> build_training_rows_pooled(
    const dataset::Catalog& catalog, const std::map<int, dataset::ActionSequence>& sequences,
    const std::vector<int>& user_ids, int k);

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_losses;  // mean per-row squared error per epoch
  int epochs_run = 0;
};

// Algorithm: Gaussian init, then per epoch a seeded shuffle into mini
// batches; per batch forward both towers, MSE on centered targets, backward,
// SGD step. Stops after 3 consecutive epochs of relative improvement below
// convergence_tol, or at max_epochs. Throws DivergenceError on non-finite
// loss.
TrainResult train(const std::vector<TrainingRow>& rows, const ModelConfig& config,
                  const dataset::Catalog& catalog);

struct ScoredMovie {
  int movie_id = 0;
  double score = 0.0;
};

// Latent vectors for every catalog movie, row-major [movie_count, latent_dim].
// The OpenMP fan-out; movies are independent. A serial reference is kept for
// tests and benchmarks.
std::vector<double> movie_latents(const ModelParams& params, const dataset::Catalog& catalog);
std::vector<double> movie_latents_serial(const ModelParams& params,
                                         const dataset::Catalog& catalog);

// Scores every catalog movie against `user_vec` and sorts by score
// descending, ties by movie_id ascending. `exclude_seen` drops the given
// movie ids before ranking.
std::vector<ScoredMovie> rank_movies(const ModelParams& params, const dataset::Catalog& catalog,
                                     std::span<const double> user_vec,
                                     const std::vector<int>& exclude_movie_ids = {});

// Versioned container: config, vocabulary sizes, and every named parameter
// array with shape and raw 64-bit values. load(save(p)) is bit-exact.
std::string save_params(const ModelParams& params);
ModelParams load_params(const std::string& bytes);
void save_params_file(const ModelParams& params, const std::string& path);
ModelParams load_params_file(const std::string& path);

// Checks scoring-time compatibility between saved params and a catalog.
void validate_against_catalog(const ModelParams& params, const dataset::Catalog& catalog);

// Full two-tower gradient check over `configs` random small configurations.
// Configurations whose forward pass lands within `kink_margin` of a relu
// kink or a pooling tie are redrawn from a derived seed, so finite
// differences never straddle a non-differentiable point.
struct ModelGradCheckReport {
  double max_rel_err = 0.0;
  std::size_t entries_checked = 0;
  int configs_checked = 0;
  int configs_redrawn = 0;
};
ModelGradCheckReport run_model_grad_check(std::uint64_t seed, int configs = 20,
                                          double epsilon = 1e-4);

}  // namespace dfnsm::model
