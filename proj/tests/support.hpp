#pragma once

// Fixtures and brute-force oracles shared by the unit and acceptance suites.
// The oracles recount everything from raw inputs with plain loops and share
// no helpers with the library beyond the data containers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "lfa/attributes.hpp"
#include "lfa/core.hpp"
#include "lfa/metrics.hpp"
#include "lfa/random.hpp"

namespace lfa::testing {

inline EmbeddingDataset make_dataset(const std::vector<std::vector<double>>& rows,
                                     const std::vector<std::string>& identities) {
  std::vector<std::string> ids;
  std::vector<double> flat;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.push_back("img" + std::to_string(i));
    flat.insert(flat.end(), rows[i].begin(), rows[i].end());
  }
  return EmbeddingDataset::from_rows(ids, flat, rows.front().size(), identities);
}

/// n rows of dimension d, identities drawn from `n_ids` labels.
inline EmbeddingDataset random_dataset(Rng& rng, std::size_t n, std::size_t d, std::size_t n_ids) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  std::vector<std::string> keys;
  for (auto& r : rows) {
    for (auto& x : r) x = rng.normal();
    keys.push_back("p" + std::to_string(rng.below(n_ids)));
  }
  return make_dataset(rows, keys);
}

// --- metric oracles ---------------------------------------------------------

inline double count_at_least(const std::vector<double>& xs, double t) {
  double hits = 0;
  for (double x : xs) {
    if (x >= t) hits += 1;
  }
  return hits / static_cast<double>(xs.size());
}

inline double count_below(const std::vector<double>& xs, double t) {
  double hits = 0;
  for (double x : xs) {
    if (x < t) hits += 1;
  }
  return hits / static_cast<double>(xs.size());
}

inline double oracle_eer(const ScoreSet& s) {
  std::set<double> thresholds(s.genuine.begin(), s.genuine.end());
  thresholds.insert(s.impostor.begin(), s.impostor.end());
  double best_gap = std::numeric_limits<double>::infinity();
  double best = 0;
  for (double t : thresholds) {
    const double a = count_at_least(s.impostor, t);
    const double b = count_below(s.genuine, t);
    if (std::abs(a - b) < best_gap) {
      best_gap = std::abs(a - b);
      best = (a + b) / 2;
    }
  }
  return best;
}

inline double oracle_fnmr_at_fmr(const ScoreSet& s, double target) {
  std::set<double> thresholds(s.impostor.begin(), s.impostor.end());
  thresholds.insert(-1.0);
  thresholds.insert(std::nextafter(*std::max_element(s.impostor.begin(), s.impostor.end()), 2.0));
  for (double t : thresholds) {
    if (count_at_least(s.impostor, t) <= target) return count_below(s.genuine, t);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline std::vector<double> oracle_fmr_curve(const ScoreSet& s, const std::vector<double>& grid) {
  std::vector<double> out;
  for (double t : grid) out.push_back(count_at_least(s.impostor, t));
  return out;
}

/// Coherence from string labels: groups are lists of image ids.
inline double oracle_coherence(const std::vector<std::vector<std::string>>& groups,
                               const std::vector<std::string>& image_ids,
                               const std::vector<std::vector<std::string>>& labels) {
  auto label_row = [&](const std::string& id) -> const std::vector<std::string>* {
    for (std::size_t i = 0; i < image_ids.size(); ++i) {
      if (image_ids[i] == id) return &labels[i];
    }
    return nullptr;
  };
  double sum = 0;
  double pairs = 0;
  for (const auto& g : groups) {
    std::vector<const std::vector<std::string>*> rows;
    for (const auto& id : g) {
      if (auto r = label_row(id)) rows.push_back(r);
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = i + 1; j < rows.size(); ++j) {
        for (std::size_t k = 0; k < rows[i]->size(); ++k) {
          const auto& a = (*rows[i])[k];
          const auto& b = (*rows[j])[k];
          if (a != "unknown" && b != "unknown" && a != b) sum += 1;
        }
        pairs += 1;
      }
    }
  }
  return sum / pairs;
}

/// Random score set with coarse values so ties are common.
inline ScoreSet random_scores(Rng& rng, std::size_t n_gen, std::size_t n_imp) {
  ScoreSet s;
  auto coarse = [&](double mean) {
    const double x = std::clamp(mean + 0.25 * rng.normal(), -1.0, 1.0);
    return std::round(x * 20.0) / 20.0;
  };
  for (std::size_t i = 0; i < n_gen; ++i) s.genuine.push_back(coarse(0.6));
  for (std::size_t i = 0; i < n_imp; ++i) s.impostor.push_back(coarse(0.1));
  return s;
}

// --- files ------------------------------------------------------------------

struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("lfa_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace lfa::testing
