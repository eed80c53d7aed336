#include "dfnsm/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

#include "dfnsm/io.hpp"

namespace dfnsm::model {

using numcore::Tape;
using numcore::Tensor;

static_assert(std::endian::native == std::endian::little,
              "parameter files are written little-endian");

namespace {

// Derivation streams off the master seed. Stream 1 draws the Gaussian
// initialization; stream 1000+e shuffles epoch e. Fixed so that a seed fully
// determines a training run.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStreamBase = 1000;

}  // namespace

void ModelConfig::validate() const {
  if (latent_dim < 1 || token_emb_dim < 1 || tag_emb_dim < 1 || conv_window < 1 ||
      conv_filters < 1 || title_len < 1) {
    throw ValidationError("model dimensions must be >= 1");
  }
  if (title_len < conv_window) {
    throw ValidationError("title_len must be >= conv_window");
  }
  if (learning_rate < 0.0) throw ValidationError("learning rate must be >= 0");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (convergence_tol < 0.0) throw ValidationError("convergence tolerance must be >= 0");
  if (k < 1) throw ValidationError("novelty window k must be >= 1");
}

std::vector<Tensor*> ModelParams::all() {
  return {&token_emb, &tag_emb, &conv_kernels, &conv_bias,
          &movie_w,   &movie_b, &user_w,       &user_b};
}

std::vector<const Tensor*> ModelParams::all() const {
  return {&token_emb, &tag_emb, &conv_kernels, &conv_bias,
          &movie_w,   &movie_b, &user_w,       &user_b};
}

ModelParams init_params(const ModelConfig& config, std::size_t title_vocab,
                        std::size_t tag_count) {
  config.validate();
  if (title_vocab == 0 || tag_count == 0) {
    throw ValidationError("vocabulary sizes must be positive");
  }
  ModelParams p;
  p.config = config;
  p.title_vocab = title_vocab;
  p.tag_count = tag_count;

  Rng rng = Rng(config.seed).derive(kInitStream);
  const auto d = static_cast<std::size_t>(config.latent_dim);
  const auto et = static_cast<std::size_t>(config.token_emb_dim);
  const auto eg = static_cast<std::size_t>(config.tag_emb_dim);
  const auto f = static_cast<std::size_t>(config.conv_filters);
  const auto w = static_cast<std::size_t>(config.conv_window);

  p.token_emb = numcore::gaussian_init({title_vocab, et}, rng);
  p.tag_emb = numcore::gaussian_init({tag_count, eg}, rng);
  p.conv_kernels = numcore::gaussian_init({f, w, et}, rng);
  p.conv_bias = numcore::gaussian_init({f}, rng);
  p.movie_w = numcore::gaussian_init({d, f + eg}, rng);
  p.movie_b = numcore::gaussian_init({d}, rng);
  p.user_w = numcore::gaussian_init({d, static_cast<std::size_t>(kDemographicsDim) + tag_count},
                                    rng);
  p.user_b = numcore::gaussian_init({d}, rng);
  for (Tensor* t : p.all()) t->enable_grad();
  return p;
}

std::array<double, kDemographicsDim> demographics_vector(const dataset::UserProfile& user) {
  std::array<double, kDemographicsDim> d{};
  d[user.gender == dataset::Gender::kMale ? 0 : 1] = 1.0;
  for (int i = 0; i < 7; ++i) {
    if (dataset::kAgeCodes[i] == user.age_bucket) {
      d[2 + i] = 1.0;
      break;
    }
  }
  d[2 + 7 + user.occupation] = 1.0;
  return d;
}

ParamNodes register_params(Tape& tape, ModelParams& params) {
  ParamNodes n;
  n.token_emb = tape.param(params.token_emb);
  n.tag_emb = tape.param(params.tag_emb);
  n.conv_kernels = tape.param(params.conv_kernels);
  n.conv_bias = tape.param(params.conv_bias);
  n.movie_w = tape.param(params.movie_w);
  n.movie_b = tape.param(params.movie_b);
  n.user_w = tape.param(params.user_w);
  n.user_b = tape.param(params.user_b);
  return n;
}

Tape::NodeId movie_tower(Tape& tape, const ParamNodes& nodes, const dataset::Movie& movie) {
  const Tape::NodeId title = tape.embedding_lookup_seq(nodes.token_emb, movie.title_tokens);
  const Tape::NodeId conv = tape.conv1d(title, nodes.conv_kernels, nodes.conv_bias);
  const Tape::NodeId activated = tape.relu(conv);
  const Tape::NodeId pooled = tape.max_pool_over_time(activated);
  const Tape::NodeId tags = tape.embedding_lookup_sum(nodes.tag_emb, movie.tags);
  const Tape::NodeId joined = tape.concat({pooled, tags});
  return tape.affine(joined, nodes.movie_w, nodes.movie_b);  // linear output
}

Tape::NodeId user_tower(Tape& tape, const ParamNodes& nodes,
                        std::span<const double> demographics,
                        std::span<const double> ani_row) {
  if (demographics.size() != static_cast<std::size_t>(kDemographicsDim)) {
    throw ValidationError("demographics vector must have length 30");
  }
  std::vector<double> joined(demographics.begin(), demographics.end());
  joined.insert(joined.end(), ani_row.begin(), ani_row.end());
  const Tape::NodeId input = tape.constant_vector(std::move(joined));
  return tape.affine(input, nodes.user_w, nodes.user_b);  // linear output
}

// ---- forward-only path (same arithmetic and order as the tape ops) ----

std::vector<double> movie_tower_values(const ModelParams& params, const dataset::Movie& movie) {
  const auto& cfg = params.config;
  const auto et = static_cast<std::size_t>(cfg.token_emb_dim);
  const auto f = static_cast<std::size_t>(cfg.conv_filters);
  const auto w = static_cast<std::size_t>(cfg.conv_window);
  const std::size_t len = movie.title_tokens.size();
  if (len < w) throw ValidationError("title shorter than conv window");
  const std::size_t out_len = len - w + 1;

  // conv over the embedded title, relu, max over time
  std::vector<double> pooled(f);
  std::vector<double> column(out_len);
  for (std::size_t j = 0; j < f; ++j) {
    for (std::size_t p = 0; p < out_len; ++p) {
      double acc = params.conv_bias.values[j];
      for (std::size_t a = 0; a < w; ++a) {
        const auto tok = static_cast<std::size_t>(movie.title_tokens[p + a]);
        const double* emb = params.token_emb.values.data() + tok * et;
        const double* ker = params.conv_kernels.values.data() + (j * w + a) * et;
        for (std::size_t c = 0; c < et; ++c) acc += emb[c] * ker[c];
      }
      column[p] = std::max(acc, 0.0);
    }
    double best = column[0];
    for (std::size_t p = 1; p < out_len; ++p) best = std::max(best, column[p]);
    pooled[j] = best;
  }

  const auto eg = static_cast<std::size_t>(cfg.tag_emb_dim);
  std::vector<double> tag_sum(eg, 0.0);
  for (int tag : movie.tags) {
    const double* row = params.tag_emb.values.data() + static_cast<std::size_t>(tag) * eg;
    for (std::size_t c = 0; c < eg; ++c) tag_sum[c] += row[c];
  }

  std::vector<double> joined;
  joined.reserve(f + eg);
  joined.insert(joined.end(), pooled.begin(), pooled.end());
  joined.insert(joined.end(), tag_sum.begin(), tag_sum.end());

  const auto d = static_cast<std::size_t>(cfg.latent_dim);
  const std::size_t in_dim = joined.size();
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    double acc = params.movie_b.values[i];
    const double* row = params.movie_w.values.data() + i * in_dim;
    for (std::size_t j = 0; j < in_dim; ++j) acc += row[j] * joined[j];
    out[i] = acc;
  }
  return out;
}

std::vector<double> user_tower_values(const ModelParams& params,
                                      std::span<const double> demographics,
                                      std::span<const double> ani_row) {
  if (demographics.size() != static_cast<std::size_t>(kDemographicsDim)) {
    throw ValidationError("demographics vector must have length 30");
  }
  std::vector<double> joined(demographics.begin(), demographics.end());
  joined.insert(joined.end(), ani_row.begin(), ani_row.end());
  const auto d = static_cast<std::size_t>(params.config.latent_dim);
  const std::size_t in_dim = joined.size();
  if (params.user_w.shape[1] != in_dim) {
    throw ValidationError("user tower input length does not match trained weights");
  }
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    double acc = params.user_b.values[i];
    const double* row = params.user_w.values.data() + i * in_dim;
    for (std::size_t j = 0; j < in_dim; ++j) acc += row[j] * joined[j];
    out[i] = acc;
  }
  return out;
}

double predict_rating(std::span<const double> user_vec, std::span<const double> movie_vec) {
  if (user_vec.size() != movie_vec.size()) {
    throw ValidationError("latent vectors must have equal length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < user_vec.size(); ++i) acc += user_vec[i] * movie_vec[i];
  return acc;
}

// ---- training data ----

std::vector<TrainingRow> build_training_rows(const dataset::Catalog& catalog,
                                             const dataset::ActionSequence& prefix, int k) {
  if (prefix.events.empty()) throw ValidationError("empty training prefix");
  const auto [stats, centered] = dataset::user_mean_and_center(prefix);
  const novelty::TagSequence tags = novelty::tag_sequence_for(catalog, prefix);
  const novelty::AniMatrix ani =
      novelty::ani_matrix(tags, novelty::NoveltyConfig{k, tags.tag_count});

  std::vector<TrainingRow> rows;
  rows.reserve(prefix.events.size());
  for (int t = 1; t <= prefix.length(); ++t) {
    const dataset::RatingEvent& e = prefix.events[static_cast<std::size_t>(t - 1)];
    TrainingRow row;
    row.user_id = prefix.user_id;
    row.t = t;
    row.movie_id = e.movie_id;
    row.raw_rating = e.rating;
    const auto span = ani.row(t);
    row.ani_row.assign(span.begin(), span.end());
    row.target = centered[static_cast<std::size_t>(t - 1)];
    rows.push_back(std::move(row));
  }
  return dataset::oversample_low_ratings(rows,
                                         [](const TrainingRow& r) { return r.raw_rating; });
}

std::vector<TrainingRow> build_training_rows_pooled(
    const dataset::Catalog& catalog, const std::map<int, dataset::ActionSequence>& sequences,
    const std::vector<int>& user_ids, int k) {
  std::vector<std::vector<TrainingRow>> per_user(user_ids.size());
  const int n = static_cast<int>(user_ids.size());
  std::exception_ptr failure;  // exceptions may not escape the parallel region
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      auto it = sequences.find(user_ids[static_cast<std::size_t>(i)]);
      if (it == sequences.end() || it->second.length() < 2) continue;  // nothing to train on
      const auto [prefix, holdout] = dataset::split_leave_last(it->second);
      (void)holdout;
      per_user[static_cast<std::size_t>(i)] = build_training_rows(catalog, prefix, k);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<TrainingRow> pooled;
  for (auto& rows : per_user) {
    pooled.insert(pooled.end(), std::make_move_iterator(rows.begin()),
                  std::make_move_iterator(rows.end()));
  }
  return pooled;
}

// ---- training ----

TrainResult train(const std::vector<TrainingRow>& rows, const ModelConfig& config,
                  const dataset::Catalog& catalog) {
  config.validate();
  if (rows.empty()) throw ValidationError("no training rows");
  if (config.title_len != catalog.title_len) {
    throw ValidationError("config title_len does not match the catalog tokenization");
  }

  TrainResult result;
  result.params = init_params(config, static_cast<std::size_t>(catalog.vocab.title_table_size()),
                              static_cast<std::size_t>(catalog.vocab.tag_count()));
  ModelParams& params = result.params;

  std::unordered_map<int, std::array<double, kDemographicsDim>> demo;
  std::unordered_map<int, const dataset::Movie*> movie_of;
  for (const TrainingRow& r : rows) {
    if (!demo.count(r.user_id)) {
      const dataset::UserProfile* u = catalog.find_user(r.user_id);
      if (!u) throw ValidationError("training row references unknown user " +
                                    std::to_string(r.user_id));
      demo.emplace(r.user_id, demographics_vector(*u));
    }
    if (!movie_of.count(r.movie_id)) {
      const dataset::Movie* m = catalog.find_movie(r.movie_id);
      if (!m) throw ValidationError("training row references unknown movie " +
                                    std::to_string(r.movie_id));
      movie_of.emplace(r.movie_id, m);
    }
  }

  const std::size_t n = rows.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const Rng master(config.seed);
  int low_improvement_streak = 0;
  double prev_loss = 0.0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng = master.derive(kShuffleStreamBase + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      Tape tape;
      const ParamNodes nodes = register_params(tape, params);
      std::vector<Tape::NodeId> preds;
      std::vector<double> targets;
      preds.reserve(end - start);
      targets.reserve(end - start);
      for (std::size_t idx = start; idx < end; ++idx) {
        const TrainingRow& row = rows[order[idx]];
        const Tape::NodeId u = user_tower(tape, nodes, demo.at(row.user_id), row.ani_row);
        const Tape::NodeId x = movie_tower(tape, nodes, *movie_of.at(row.movie_id));
        preds.push_back(tape.dot(u, x));
        targets.push_back(row.target);
      }
      const Tape::NodeId loss = tape.mse_loss(preds, targets);
      const double batch_loss = tape.scalar(loss);
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("training loss is not finite", epoch);
      }
      loss_sum += batch_loss * static_cast<double>(end - start);
      tape.backward(loss);
      numcore::sgd_step(params.all(), config.learning_rate);
    }

    const double epoch_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) {
      throw DivergenceError("training loss is not finite", epoch);
    }
    result.epoch_losses.push_back(epoch_loss);
    result.epochs_run = epoch;

    if (epoch > 1) {
      const double rel = (prev_loss - epoch_loss) / std::max(std::fabs(prev_loss), 1e-12);
      low_improvement_streak = rel < config.convergence_tol ? low_improvement_streak + 1 : 0;
      if (low_improvement_streak >= 3) break;
    }
    prev_loss = epoch_loss;
  }
  return result;
}

// ---- scoring ----

std::vector<double> movie_latents(const ModelParams& params, const dataset::Catalog& catalog) {
  if (catalog.movies.empty()) throw ValidationError("empty catalog");
  validate_against_catalog(params, catalog);
  const auto d = static_cast<std::size_t>(params.config.latent_dim);
  std::vector<double> latents(catalog.movies.size() * d);
  const int n = static_cast<int>(catalog.movies.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const std::vector<double> x =
        movie_tower_values(params, catalog.movies[static_cast<std::size_t>(i)]);
    std::copy(x.begin(), x.end(), latents.begin() + static_cast<std::size_t>(i) * d);
  }
  return latents;
}

std::vector<double> movie_latents_serial(const ModelParams& params,
                                         const dataset::Catalog& catalog) {
  if (catalog.movies.empty()) throw ValidationError("empty catalog");
  validate_against_catalog(params, catalog);
  const auto d = static_cast<std::size_t>(params.config.latent_dim);
  std::vector<double> latents(catalog.movies.size() * d);
  for (std::size_t i = 0; i < catalog.movies.size(); ++i) {
    const std::vector<double> x = movie_tower_values(params, catalog.movies[i]);
    std::copy(x.begin(), x.end(), latents.begin() + i * d);
  }
  return latents;
}

std::vector<ScoredMovie> rank_movies(const ModelParams& params, const dataset::Catalog& catalog,
                                     std::span<const double> user_vec,
                                     const std::vector<int>& exclude_movie_ids) {
  const std::vector<double> latents = movie_latents(params, catalog);
  const auto d = static_cast<std::size_t>(params.config.latent_dim);
  if (user_vec.size() != d) throw ValidationError("user vector length does not match latent_dim");

  const std::unordered_set<int> excluded(exclude_movie_ids.begin(), exclude_movie_ids.end());
  std::vector<ScoredMovie> scored;
  scored.reserve(catalog.movies.size());
  for (std::size_t i = 0; i < catalog.movies.size(); ++i) {
    const int id = catalog.movies[i].movie_id;
    if (excluded.count(id)) continue;
    scored.push_back({id, predict_rating(user_vec, {latents.data() + i * d, d})});
  }
  if (scored.empty()) throw ValidationError("no candidate movies to rank");
  std::sort(scored.begin(), scored.end(), [](const ScoredMovie& a, const ScoredMovie& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.movie_id < b.movie_id;
  });
  return scored;
}

// ---- serialization ----

namespace {

constexpr char kMagic[8] = {'D', 'F', 'N', 'S', 'M', 'P', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_doubles(std::string& out, const std::vector<double>& v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

struct Reader {
  const std::string& bytes;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (pos + sizeof(T) > bytes.size()) throw IoError("parameter file truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_str(std::size_t n) {
    if (pos + n > bytes.size()) throw IoError("parameter file truncated");
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
  void get_doubles(std::vector<double>& v, std::size_t n) {
    if (pos + n * sizeof(double) > bytes.size()) throw IoError("parameter file truncated");
    v.resize(n);
    std::memcpy(v.data(), bytes.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
  }
};

const char* const kTensorNames[8] = {"token_emb", "tag_emb", "conv_kernels", "conv_bias",
                                     "movie_w",   "movie_b", "user_w",       "user_b"};

}  // namespace

std::string save_params(const ModelParams& params) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const ModelConfig& c = params.config;
  put<std::int32_t>(out, c.latent_dim);
  put<std::int32_t>(out, c.token_emb_dim);
  put<std::int32_t>(out, c.tag_emb_dim);
  put<std::int32_t>(out, c.conv_window);
  put<std::int32_t>(out, c.conv_filters);
  put<std::int32_t>(out, c.title_len);
  put<std::int32_t>(out, c.batch_size);
  put<std::int32_t>(out, c.max_epochs);
  put<std::int32_t>(out, c.k);
  put<double>(out, c.learning_rate);
  put<double>(out, c.convergence_tol);
  put<std::uint64_t>(out, c.seed);
  put<std::uint64_t>(out, params.title_vocab);
  put<std::uint64_t>(out, params.tag_count);
  put<std::uint32_t>(out, 8);
  const auto tensors = params.all();
  for (int i = 0; i < 8; ++i) {
    const std::string name = kTensorNames[i];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors[i]->shape.size()));
    for (std::size_t e : tensors[i]->shape) put<std::uint64_t>(out, e);
    put_doubles(out, tensors[i]->values);
  }
  return out;
}

ModelParams load_params(const std::string& bytes) {
  Reader r{bytes};
  if (r.get_str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw IoError("not a parameter file (bad magic)");
  }
  if (r.get<std::uint32_t>() != kVersion) throw IoError("unsupported parameter file version");

  ModelParams p;
  ModelConfig& c = p.config;
  c.latent_dim = r.get<std::int32_t>();
  c.token_emb_dim = r.get<std::int32_t>();
  c.tag_emb_dim = r.get<std::int32_t>();
  c.conv_window = r.get<std::int32_t>();
  c.conv_filters = r.get<std::int32_t>();
  c.title_len = r.get<std::int32_t>();
  c.batch_size = r.get<std::int32_t>();
  c.max_epochs = r.get<std::int32_t>();
  c.k = r.get<std::int32_t>();
  c.learning_rate = r.get<double>();
  c.convergence_tol = r.get<double>();
  c.seed = r.get<std::uint64_t>();
  c.validate();
  p.title_vocab = r.get<std::uint64_t>();
  p.tag_count = r.get<std::uint64_t>();

  if (r.get<std::uint32_t>() != 8) throw IoError("unexpected tensor count");
  const auto tensors = p.all();
  for (int i = 0; i < 8; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name = r.get_str(name_len);
    if (name != kTensorNames[i]) throw IoError("unexpected tensor name '" + name + "'");
    const auto ndim = r.get<std::uint32_t>();
    std::vector<std::size_t> shape;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    }
    const std::size_t n = Tensor::shape_numel(shape);
    tensors[i]->shape = std::move(shape);
    r.get_doubles(tensors[i]->values, n);
    tensors[i]->enable_grad();
  }
  if (r.pos != bytes.size()) throw IoError("trailing bytes in parameter file");

  // cheap structural sanity; deep checks happen against a catalog
  if (p.token_emb.shape[0] != p.title_vocab || p.tag_emb.shape[0] != p.tag_count) {
    throw IoError("parameter shapes disagree with stored vocabulary sizes");
  }
  return p;
}

void save_params_file(const ModelParams& params, const std::string& path) {
  atomic_write_file(path, save_params(params));
}

ModelParams load_params_file(const std::string& path) { return load_params(read_file(path)); }

void validate_against_catalog(const ModelParams& params, const dataset::Catalog& catalog) {
  if (params.title_vocab != static_cast<std::size_t>(catalog.vocab.title_table_size())) {
    throw ValidationError("model title vocabulary size " + std::to_string(params.title_vocab) +
                          " does not match catalog " +
                          std::to_string(catalog.vocab.title_table_size()));
  }
  if (params.tag_count != static_cast<std::size_t>(catalog.vocab.tag_count())) {
    throw ValidationError("model tag count " + std::to_string(params.tag_count) +
                          " does not match catalog " +
                          std::to_string(catalog.vocab.tag_count()));
  }
  if (params.config.title_len != catalog.title_len) {
    throw ValidationError("model title_len does not match catalog tokenization");
  }
}

// ---- gradient check over random full-model configurations ----

ModelGradCheckReport run_model_grad_check(std::uint64_t seed, int configs, double epsilon) {
  // One +-epsilon parameter step moves a pre-activation by at most about
  // epsilon * window * emb_dim * max|value|, a few 1e-4 here. Configurations
  // closer than this to a relu kink or pooling tie are redrawn.
  const double kink_margin = 20.0 * epsilon;
  const double check_stddev = 0.2;
  ModelGradCheckReport report;

  for (int c = 0; c < configs; ++c) {
    for (std::uint64_t redraw = 0;; ++redraw) {
      if (redraw > 10000) throw ValidationError("grad check cannot find a kink-free config");
      Rng rng = Rng(seed).derive(10007 * static_cast<std::uint64_t>(c + 1) + redraw);

      ModelConfig cfg;
      cfg.latent_dim = 5;
      cfg.token_emb_dim = 3;
      cfg.tag_emb_dim = 3;
      cfg.conv_window = 2;
      cfg.conv_filters = 4;
      cfg.title_len = 5;
      cfg.k = 10;
      cfg.seed = rng.next_u64();
      const std::size_t title_vocab = 9;
      const std::size_t tag_count = 6;

      ModelParams params;
      params.config = cfg;
      params.title_vocab = title_vocab;
      params.tag_count = tag_count;
      params.token_emb = numcore::gaussian_init({title_vocab, 3}, rng, check_stddev);
      params.tag_emb = numcore::gaussian_init({tag_count, 3}, rng, check_stddev);
      params.conv_kernels = numcore::gaussian_init({4, 2, 3}, rng, check_stddev);
      params.conv_bias = numcore::gaussian_init({4}, rng, check_stddev);
      params.movie_w = numcore::gaussian_init({5, 4 + 3}, rng, check_stddev);
      params.movie_b = numcore::gaussian_init({5}, rng, check_stddev);
      params.user_w = numcore::gaussian_init(
          {5, static_cast<std::size_t>(kDemographicsDim) + tag_count}, rng, check_stddev);
      params.user_b = numcore::gaussian_init({5}, rng, check_stddev);
      for (Tensor* t : params.all()) t->enable_grad();

      struct CheckRow {
        dataset::Movie movie;
        std::array<double, kDemographicsDim> demo;
        std::vector<double> ani;
        double target;
      };
      std::vector<CheckRow> batch;
      for (int row = 0; row < 3; ++row) {
        CheckRow cr;
        cr.movie.movie_id = row + 1;
        for (int t = 0; t < cfg.title_len; ++t) {
          cr.movie.title_tokens.push_back(static_cast<int>(rng.next_below(title_vocab)));
        }
        const int n_tags = 1 + static_cast<int>(rng.next_below(3));
        std::unordered_set<int> chosen;
        while (static_cast<int>(chosen.size()) < n_tags) {
          chosen.insert(static_cast<int>(rng.next_below(tag_count)));
        }
        cr.movie.tags.assign(chosen.begin(), chosen.end());
        std::sort(cr.movie.tags.begin(), cr.movie.tags.end());

        dataset::UserProfile u;
        u.gender = rng.next_below(2) == 0 ? dataset::Gender::kMale : dataset::Gender::kFemale;
        u.age_bucket = dataset::kAgeCodes[rng.next_below(7)];
        u.occupation = static_cast<int>(rng.next_below(21));
        cr.demo = demographics_vector(u);

        for (std::size_t i = 0; i < tag_count; ++i) {
          cr.ani.push_back(1.0 / static_cast<double>(rng.next_below(11) + 1));
        }
        cr.target = 4.0 * rng.next_unit() - 2.0;
        batch.push_back(std::move(cr));
      }

      auto build = [&](Tape& tape) {
        const ParamNodes nodes = register_params(tape, params);
        std::vector<Tape::NodeId> preds;
        std::vector<double> targets;
        for (const CheckRow& cr : batch) {
          const Tape::NodeId u = user_tower(tape, nodes, cr.demo, cr.ani);
          const Tape::NodeId x = movie_tower(tape, nodes, cr.movie);
          preds.push_back(tape.dot(u, x));
          targets.push_back(cr.target);
        }
        return tape.mse_loss(preds, targets);
      };

      Tape probe;
      build(probe);
      if (probe.min_relu_margin() < kink_margin || probe.min_pool_margin() < kink_margin) {
        ++report.configs_redrawn;
        continue;  // too close to a non-differentiable point; redraw
      }

      const numcore::GradCheckReport r = numcore::grad_check(params.all(), build, epsilon);
      report.max_rel_err = std::max(report.max_rel_err, r.max_rel_err);
      report.entries_checked += r.entries_checked;
      ++report.configs_checked;
      break;
    }
  }
  return report;
}

}  // namespace dfnsm::model
