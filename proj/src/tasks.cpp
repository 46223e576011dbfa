#include "tim/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tim/core.hpp"

namespace tim {

namespace {

void shuffle_prefix(std::vector<int>& v, std::size_t take, Rng& rng) {
  // partial Fisher-Yates: after the call, v[0..take) is a uniform sample
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < take && i + 1 < n; ++i) {
    const std::size_t j = i + rng.uniform_int(n - i);
    std::swap(v[i], v[j]);
  }
}

}  // namespace

Bank generate_synthetic_bank(const SyntheticConfig& cfg) {
  if (cfg.num_classes_pool < 2 || cfg.dim < 2 || cfg.samples_per_class < 1 ||
      !(cfg.class_concentration > 0.0))
    throw TimError("invalid_config", "bad synthetic bank configuration");

  Rng rng(cfg.rng_seed);
  Matrix means(cfg.num_classes_pool, cfg.dim);
  for (int c = 0; c < cfg.num_classes_pool; ++c) {
    for (int j = 0; j < cfg.dim; ++j) means(c, j) = rng.gaussian();
    means.row(c) /= means.row(c).norm();
  }

  Bank bank;
  bank.num_classes = cfg.num_classes_pool;
  bank.embeddings.resize(
      static_cast<Eigen::Index>(cfg.num_classes_pool) * cfg.samples_per_class,
      cfg.dim);
  bank.labels.reserve(bank.embeddings.rows());
  Eigen::Index row = 0;
  for (int c = 0; c < cfg.num_classes_pool; ++c) {
    for (int s = 0; s < cfg.samples_per_class; ++s, ++row) {
      for (int j = 0; j < cfg.dim; ++j)
        bank.embeddings(row, j) =
            means(c, j) + rng.gaussian() / cfg.class_concentration;
      bank.embeddings.row(row) /= bank.embeddings.row(row).norm();
      bank.labels.push_back(c);
    }
  }
  return bank;
}

Task sample_episode(const Bank& bank, const EpisodeSpec& spec,
                    std::uint64_t rng_seed) {
  Rng rng(rng_seed);

  int ways;
  std::vector<int> support_counts, query_counts;
  if (spec.mode == EpisodeSpec::Mode::Standard) {
    if (spec.ways < 2 || spec.shots < 1 || spec.query_shots < 1)
      throw TimError("invalid_config", "bad standard episode spec");
    ways = spec.ways;
    support_counts.assign(ways, spec.shots);
    query_counts.assign(ways, spec.query_shots);
  } else {
    if (spec.ways_min < 2 || spec.ways_max < spec.ways_min ||
        spec.support_min < 1 || spec.support_max < spec.support_min ||
        spec.query_budget < 1)
      throw TimError("invalid_config", "bad random episode spec");
    ways = spec.ways_min +
           static_cast<int>(rng.uniform_int(spec.ways_max - spec.ways_min + 1));
    support_counts.resize(ways);
    for (int& c : support_counts)
      c = spec.support_min + static_cast<int>(rng.uniform_int(
                                 spec.support_max - spec.support_min + 1));
    query_counts.assign(ways, spec.query_budget / ways);
    for (int c = 0; c < spec.query_budget % ways; ++c) ++query_counts[c];
  }
  if (ways > bank.num_classes)
    throw TimError("insufficient_samples", "bank has fewer classes than ways");

  std::vector<int> class_ids(bank.num_classes);
  std::iota(class_ids.begin(), class_ids.end(), 0);
  shuffle_prefix(class_ids, ways, rng);

  // bank row indices per class, in bank order
  std::vector<std::vector<int>> by_class(bank.num_classes);
  for (std::size_t i = 0; i < bank.labels.size(); ++i)
    by_class[bank.labels[i]].push_back(static_cast<int>(i));

  std::vector<std::vector<int>> support_rows(ways), query_rows(ways);
  for (int c = 0; c < ways; ++c) {
    auto& pool = by_class[class_ids[c]];
    const int need = support_counts[c] + query_counts[c];
    if (static_cast<int>(pool.size()) < need)
      throw TimError("insufficient_samples",
                     "class " + std::to_string(class_ids[c]) + " has " +
                         std::to_string(pool.size()) + " samples, needs " +
                         std::to_string(need));
    shuffle_prefix(pool, need, rng);
    support_rows[c].assign(pool.begin(), pool.begin() + support_counts[c]);
    query_rows[c].assign(pool.begin() + support_counts[c], pool.begin() + need);
  }

  const int ns = std::accumulate(support_counts.begin(), support_counts.end(), 0);
  const int nq = std::accumulate(query_counts.begin(), query_counts.end(), 0);
  Matrix support(ns, bank.dim()), query(nq, bank.dim());
  std::vector<int> support_labels, query_labels;
  support_labels.reserve(ns);
  query_labels.reserve(nq);
  int si = 0, qi = 0;
  for (int c = 0; c < ways; ++c) {
    for (int r : support_rows[c]) {
      support.row(si++) = bank.embeddings.row(r);
      support_labels.push_back(c);
    }
    for (int r : query_rows[c]) {
      query.row(qi++) = bank.embeddings.row(r);
      query_labels.push_back(c);
    }
  }
  return make_task(support, support_labels, query, query_labels, ways);
}

namespace {

constexpr char kMagic[4] = {'T', 'I', 'M', 'B'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* what) {
  T value;
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is)
    throw TimError("format_error", std::string("truncated file reading ") + what);
  return value;
}

}  // namespace

void write_embeddings(const Bank& bank, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw TimError("io_error", "cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_le<std::uint16_t>(os, kVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(bank.dim()));
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(bank.count()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(bank.num_classes));
  for (Eigen::Index i = 0; i < bank.count(); ++i) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(bank.labels[i]));
    for (Eigen::Index j = 0; j < bank.dim(); ++j)
      write_le<float>(os, static_cast<float>(bank.embeddings(i, j)));
  }
  if (!os) throw TimError("io_error", "write failed: " + path);
}

Bank read_embeddings(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw TimError("io_error", "cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw TimError("format_error", "bad magic bytes (not an embedding file)");
  const auto version = read_le<std::uint16_t>(is, "version");
  if (version != kVersion)
    throw TimError("format_error",
                   "unsupported version " + std::to_string(version));
  const auto dim = read_le<std::uint32_t>(is, "dim");
  const auto count = read_le<std::uint64_t>(is, "count");
  const auto k = read_le<std::uint32_t>(is, "num_classes");
  if (dim == 0 || k == 0)
    throw TimError("format_error", "zero dimension or class count");

  Bank bank;
  bank.num_classes = static_cast<int>(k);
  bank.embeddings.resize(static_cast<Eigen::Index>(count), dim);
  bank.labels.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto label = read_le<std::uint32_t>(is, "record label");
    if (label >= k)
      throw TimError("format_error",
                     "label " + std::to_string(label) + " out of range");
    bank.labels[i] = static_cast<int>(label);
    for (std::uint32_t j = 0; j < dim; ++j)
      bank.embeddings(static_cast<Eigen::Index>(i), j) =
          read_le<float>(is, "record features");
  }
  // must be exactly at EOF
  is.peek();
  if (!is.eof())
    throw TimError("format_error", "trailing bytes after declared records");
  return bank;
}

void write_embeddings_csv(const Bank& bank, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw TimError("io_error", "cannot open for writing: " + path);
  os << "label";
  for (Eigen::Index j = 0; j < bank.dim(); ++j) os << ",f" << j;
  os << "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < bank.count(); ++i) {
    os << bank.labels[i];
    for (Eigen::Index j = 0; j < bank.dim(); ++j) {
      // 9 significant digits round-trips float32 exactly
      std::snprintf(buf, sizeof(buf), ",%.9g",
                    static_cast<double>(static_cast<float>(bank.embeddings(i, j))));
      os << buf;
    }
    os << "\n";
  }
  if (!os) throw TimError("io_error", "write failed: " + path);
}

Bank read_embeddings_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw TimError("io_error", "cannot open: " + path);
  std::string line;
  if (!std::getline(is, line))
    throw TimError("format_error", "empty CSV file");
  if (line.rfind("label", 0) != 0)
    throw TimError("format_error", "CSV header must start with 'label'");
  const Eigen::Index dim = std::count(line.begin(), line.end(), ',');
  if (dim < 1) throw TimError("format_error", "CSV has no feature columns");

  std::vector<std::vector<float>> rows;
  std::vector<int> labels;
  int max_label = -1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<float> row;
    row.reserve(dim);
    const char* ptr = line.data();
    const char* end = line.data() + line.size();
    int label = 0;
    auto rc = std::from_chars(ptr, end, label);
    if (rc.ec != std::errc() || label < 0)
      throw TimError("format_error", "bad label in CSV row " +
                                         std::to_string(rows.size() + 1));
    ptr = rc.ptr;
    for (Eigen::Index j = 0; j < dim; ++j) {
      if (ptr >= end || *ptr != ',')
        throw TimError("format_error", "short CSV row " +
                                           std::to_string(rows.size() + 1));
      ++ptr;
      float value = 0.0f;
      auto fc = std::from_chars(ptr, end, value);
      if (fc.ec != std::errc())
        throw TimError("format_error", "bad float in CSV row " +
                                           std::to_string(rows.size() + 1));
      ptr = fc.ptr;
      row.push_back(value);
    }
    if (ptr != end)
      throw TimError("format_error",
                     "trailing fields in CSV row " + std::to_string(rows.size() + 1));
    rows.push_back(std::move(row));
    labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (rows.empty()) throw TimError("format_error", "CSV has no data rows");

  Bank bank;
  bank.num_classes = max_label + 1;
  bank.labels = std::move(labels);
  bank.embeddings.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index j = 0; j < dim; ++j)
      bank.embeddings(static_cast<Eigen::Index>(i), j) = rows[i][j];
  return bank;
}

}  // namespace tim
