#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

namespace pfdm {

struct SeriesStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Population mean and standard deviation.
inline std::pair<double, double> mean_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

// Mean and std across runs at each step. Runs may differ in length; step k
// uses the runs that reach it.
inline SeriesStats across_runs(const std::vector<std::vector<double>>& runs) {
  SeriesStats st;
  std::size_t n = 0;
  for (const auto& r : runs) n = std::max(n, r.size());
  st.mean.resize(n);
  st.stddev.resize(n);
  std::vector<double> col;
  for (std::size_t k = 0; k < n; ++k) {
    col.clear();
    for (const auto& r : runs)
      if (k < r.size()) col.push_back(r[k]);
    std::tie(st.mean[k], st.stddev[k]) = mean_std(col);
  }
  return st;
}

// Mean over the last `window` steps of the per-step std.
inline double final_window_std(const SeriesStats& s, std::size_t window) {
  const std::size_t n = s.stddev.size();
  const std::size_t w = std::min(window, n);
  double acc = 0.0;
  for (std::size_t k = n - w; k < n; ++k) acc += s.stddev[k];
  return w ? acc / static_cast<double>(w) : 0.0;
}

}  // namespace pfdm
