// Compares the OpenMP kernels against their serial references on synthetic
// workloads and verifies that both produce identical output.

#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "dfnsm/dataset.hpp"
#include "dfnsm/model.hpp"
#include "dfnsm/novelty.hpp"
#include "dfnsm/rng.hpp"

using namespace dfnsm;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void print_row(const char* name, double serial_ms, double parallel_ms, bool equal) {
  std::printf("%-34s %10.1f ms %10.1f ms %8.2fx   %s\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms, equal ? "outputs identical" : "OUTPUTS DIFFER");
}

std::vector<novelty::TagSequence> synthetic_sequences(int users, int length, int tag_count) {
  Rng rng(7);
  std::vector<novelty::TagSequence> seqs;
  for (int u = 0; u < users; ++u) {
    novelty::TagSequence seq;
    seq.user_id = u + 1;
    seq.tag_count = tag_count;
    for (int t = 0; t < length; ++t) {
      std::vector<int> tags;
      for (int i = 0; i < tag_count; ++i) {
        if (rng.next_unit() < 0.12) tags.push_back(i);
      }
      if (tags.empty()) tags.push_back(static_cast<int>(rng.next_below(tag_count)));
      seq.action_tags.push_back(std::move(tags));
    }
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

dataset::Catalog synthetic_catalog(int movies, int tag_count) {
  Rng rng(11);
  std::vector<dataset::RawMovie> raw;
  for (int tag = 0; tag < tag_count; ++tag) {
    raw.push_back({tag + 1, "seed title", {"Tag" + std::to_string(tag)}});
  }
  const char* words[] = {"river", "stone", "ember", "frost", "hollow", "sky",
                         "echo",  "cedar", "lumen", "vale"};
  for (int m = 0; m < movies; ++m) {
    dataset::RawMovie rm;
    rm.movie_id = tag_count + m + 1;
    for (int w = 0; w < 6; ++w) {
      rm.title += std::string(words[rng.next_below(10)]) + " ";
    }
    rm.genres.push_back("Tag" + std::to_string(rng.next_below(tag_count)));
    raw.push_back(std::move(rm));
  }
  std::vector<dataset::UserProfile> users = {{1, dataset::Gender::kMale, 25, 0}};
  return dataset::build_catalog(std::move(users), raw, 16);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d\n\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; both columns run serial code\n\n");
#endif
  std::printf("%-34s %13s %13s %9s\n", "workload", "serial", "parallel", "speedup");

  {
    const int users = 40, length = 800, tag_count = 18, k = 20;
    const auto seqs = synthetic_sequences(users, length, tag_count);

    auto t0 = Clock::now();
    std::vector<novelty::AniMatrix> reference;
    for (const auto& seq : seqs) {
      reference.push_back(novelty::ani_matrix_serial(seq, {k, tag_count}));
    }
    const double serial_ms = ms_since(t0);

    t0 = Clock::now();
    std::vector<novelty::AniMatrix> kernel;
    for (const auto& seq : seqs) {
      kernel.push_back(novelty::ani_matrix(seq, {k, tag_count}));
    }
    const double parallel_ms = ms_since(t0);

    bool equal = true;
    for (int u = 0; u < users; ++u) {
      equal = equal && reference[static_cast<std::size_t>(u)].data ==
                           kernel[static_cast<std::size_t>(u)].data;
    }
    print_row("ani matrices (40 users x T=800)", serial_ms, parallel_ms, equal);
  }

  {
    const int movies = 20000, tag_count = 18;
    const auto catalog = synthetic_catalog(movies, tag_count);
    model::ModelConfig cfg;
    cfg.seed = 3;
    const auto params = model::init_params(
        cfg, static_cast<std::size_t>(catalog.vocab.title_table_size()),
        static_cast<std::size_t>(catalog.vocab.tag_count()));

    auto t0 = Clock::now();
    const auto serial = model::movie_latents_serial(params, catalog);
    const double serial_ms = ms_since(t0);

    t0 = Clock::now();
    const auto parallel = model::movie_latents(params, catalog);
    const double parallel_ms = ms_since(t0);

    print_row("movie scoring fan-out (20k movies)", serial_ms, parallel_ms, serial == parallel);
  }

  return 0;
}
