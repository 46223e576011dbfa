#pragma once

#include "tim/types.hpp"

namespace tim {

struct SyntheticConfig {
  int num_classes_pool = 20;
  int samples_per_class = 60;
  int dim = 64;
  double class_concentration = 5.0;  // larger = tighter clusters = easier
  std::uint64_t rng_seed = 0;
};

struct Bank {
  Matrix embeddings;        // rows unit-norm
  std::vector<int> labels;  // in [0, num_classes)
  int num_classes = 0;

  Eigen::Index dim() const { return embeddings.cols(); }
  Eigen::Index count() const { return embeddings.rows(); }
};

struct EpisodeSpec {
  enum class Mode { Standard, Random };
  Mode mode = Mode::Standard;
  // Standard: exactly `ways` classes, `shots` support and `query_shots` query
  // samples per class.
  int ways = 5;
  int shots = 1;
  int query_shots = 15;
  // Random: ways drawn uniformly from [ways_min, ways_max], per-class support
  // counts drawn independently from [support_min, support_max], and
  // query_budget split as evenly as possible across the drawn classes.
  int ways_min = 5;
  int ways_max = 5;
  int support_min = 1;
  int support_max = 5;
  int query_budget = 75;
};

// Gaussian-on-sphere class clusters: per class a unit mean direction, samples
// normalize(mean + gaussian/concentration). Deterministic in cfg.rng_seed.
Bank generate_synthetic_bank(const SyntheticConfig& cfg);

// Draws an episode from the bank; support and query indices never overlap and
// labels are remapped to dense [0, K). Deterministic in rng_seed.
Task sample_episode(const Bank& bank, const EpisodeSpec& spec, std::uint64_t rng_seed);

// Binary embedding file ("TIMB" format, little-endian):
//   magic "TIMB" | u16 version=1 | u32 dim | u64 count | u32 num_classes |
//   count * ( u32 label | dim * float32 )
Bank read_embeddings(const std::string& path);
void write_embeddings(const Bank& bank, const std::string& path);

// CSV with header "label,f0,...,f{d-1}"; floats written with enough digits to
// round-trip float32 exactly.
Bank read_embeddings_csv(const std::string& path);
void write_embeddings_csv(const Bank& bank, const std::string& path);

}  // namespace tim
