#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "pfdm/error.hpp"
#include "pfdm/grid.hpp"
#include "pfdm/rng.hpp"

namespace pfdm {

inline constexpr double kNormTolerance = 1e-9;
inline constexpr double kDefaultKlFloor = 1e-9;

// Read-only view of one sparse probability vector: parallel arrays of
// strictly increasing cell indices and their masses.
struct RowView {
  std::span<const std::size_t> cells;
  std::span<const double> probs;

  std::size_t nnz() const { return cells.size(); }
  bool empty() const { return cells.empty(); }
  double mass() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

  // Mass at `cell`, zero when outside the support.
  double at(std::size_t cell) const {
    const auto it = std::lower_bound(cells.begin(), cells.end(), cell);
    if (it == cells.end() || *it != cell) return 0.0;
    return probs[static_cast<std::size_t>(it - cells.begin())];
  }
};

namespace detail {
inline void validate_row(RowView row, std::size_t n_cells, const std::string& where) {
  double sum = 0.0;
  for (std::size_t i = 0; i < row.nnz(); ++i) {
    if (row.cells[i] >= n_cells) throw InvalidInput(where + ": cell index out of range");
    if (i > 0 && row.cells[i] <= row.cells[i - 1])
      throw InvalidInput(where + ": cell indices must be unique and increasing");
    if (!(row.probs[i] >= 0.0) || !std::isfinite(row.probs[i]))
      throw InvalidInput(where + ": probabilities must be finite and non-negative");
    sum += row.probs[i];
  }
  if (row.nnz() > 0 && std::abs(sum - 1.0) > kNormTolerance)
    throw InvalidInput(where + ": probabilities sum to " + std::to_string(sum) + ", expected 1");
}
}  // namespace detail

// A probability vector over the cells of an outcome space with `size()`
// cells. The empty vector is the all-zero "unobserved" row.
class DiscretePF {
 public:
  DiscretePF() = default;

  // Entries may come in any order; zero masses are dropped.
  DiscretePF(std::size_t n_cells, std::vector<std::pair<std::size_t, double>> entries) : n_cells_(n_cells) {
    std::sort(entries.begin(), entries.end());
    for (const auto& [c, p] : entries) {
      if (p == 0.0) continue;
      cells_.push_back(c);
      probs_.push_back(p);
    }
    detail::validate_row(view(), n_cells_, "DiscretePF");
  }

  DiscretePF(std::size_t n_cells, std::vector<std::size_t> cells, std::vector<double> probs)
      : n_cells_(n_cells), cells_(std::move(cells)), probs_(std::move(probs)) {
    if (cells_.size() != probs_.size()) throw InvalidInput("DiscretePF: cells/probs length mismatch");
    detail::validate_row(view(), n_cells_, "DiscretePF");
  }

  static DiscretePF from_dense(std::span<const double> masses) {
    std::vector<std::size_t> cells;
    std::vector<double> probs;
    for (std::size_t i = 0; i < masses.size(); ++i)
      if (masses[i] != 0.0) {
        cells.push_back(i);
        probs.push_back(masses[i]);
      }
    return DiscretePF(masses.size(), std::move(cells), std::move(probs));
  }

  static DiscretePF from_dense(std::initializer_list<double> masses) {
    return from_dense(std::span<const double>(masses.begin(), masses.size()));
  }

  // Normalizes non-negative weights; all-zero weights give the empty row.
  static DiscretePF from_weights(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("weights must be finite and non-negative");
      total += w;
    }
    std::vector<std::size_t> cells;
    std::vector<double> probs;
    if (total > 0.0)
      for (std::size_t i = 0; i < weights.size(); ++i)
        if (weights[i] > 0.0) {
          cells.push_back(i);
          probs.push_back(weights[i] / total);
        }
    return DiscretePF(weights.size(), std::move(cells), std::move(probs));
  }

  static DiscretePF delta(std::size_t n_cells, std::size_t cell) {
    return DiscretePF(n_cells, std::vector<std::size_t>{cell}, std::vector<double>{1.0});
  }

  static DiscretePF uniform(std::size_t n_cells) {
    std::vector<std::size_t> cells(n_cells);
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    return DiscretePF(n_cells, std::move(cells), std::vector<double>(n_cells, 1.0 / static_cast<double>(n_cells)));
  }

  std::size_t size() const { return n_cells_; }
  std::size_t nnz() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }
  RowView view() const { return {cells_, probs_}; }
  double operator[](std::size_t cell) const { return view().at(cell); }
  const std::vector<std::size_t>& cells() const { return cells_; }
  const std::vector<double>& probs() const { return probs_; }

  std::vector<double> dense() const {
    std::vector<double> out(n_cells_, 0.0);
    for (std::size_t i = 0; i < cells_.size(); ++i) out[cells_[i]] = probs_[i];
    return out;
  }

  bool operator==(const DiscretePF&) const = default;

 private:
  std::size_t n_cells_ = 0;
  std::vector<std::size_t> cells_;
  std::vector<double> probs_;
};

struct Triple {
  std::size_t cond = 0;
  std::size_t out = 0;
  double prob = 0.0;
};

// Sparse conditional table p(out | cond) in compressed-row form. Condition
// cells without data hold the empty row.
class ConditionalPF {
 public:
  ConditionalPF() = default;

  // Builds from unordered triples; zero masses are dropped.
  ConditionalPF(Grid cond_grid, Grid out_grid, std::vector<Triple> triples)
      : cond_grid_(std::move(cond_grid)), out_grid_(std::move(out_grid)) {
    std::sort(triples.begin(), triples.end(), [](const Triple& a, const Triple& b) {
      return std::tie(a.cond, a.out) < std::tie(b.cond, b.out);
    });
    offsets_.assign(cond_grid_.size() + 1, 0);
    for (const auto& t : triples) {
      if (t.prob == 0.0) continue;
      if (t.cond >= cond_grid_.size()) throw InvalidInput("ConditionalPF: condition cell out of range");
      ++offsets_[t.cond + 1];
      cells_.push_back(t.out);
      probs_.push_back(t.prob);
    }
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
    validate();
  }

  // Takes compressed rows directly: row c occupies [offsets[c], offsets[c+1]).
  ConditionalPF(Grid cond_grid, Grid out_grid, std::vector<std::size_t> offsets, std::vector<std::size_t> cells,
                std::vector<double> probs)
      : cond_grid_(std::move(cond_grid)),
        out_grid_(std::move(out_grid)),
        offsets_(std::move(offsets)),
        cells_(std::move(cells)),
        probs_(std::move(probs)) {
    if (offsets_.size() != cond_grid_.size() + 1 || offsets_.front() != 0 || offsets_.back() != cells_.size() ||
        cells_.size() != probs_.size())
      throw InvalidInput("ConditionalPF: malformed row storage");
    validate();
  }

  // One DiscretePF per condition cell.
  ConditionalPF(Grid cond_grid, Grid out_grid, const std::vector<DiscretePF>& rows)
      : cond_grid_(std::move(cond_grid)), out_grid_(std::move(out_grid)) {
    if (rows.size() != cond_grid_.size()) throw InvalidInput("ConditionalPF: one row per condition cell required");
    offsets_.reserve(rows.size() + 1);
    for (const auto& r : rows) {
      if (r.size() != out_grid_.size()) throw GridMismatch("ConditionalPF: row size does not match outcome grid");
      cells_.insert(cells_.end(), r.cells().begin(), r.cells().end());
      probs_.insert(probs_.end(), r.probs().begin(), r.probs().end());
      offsets_.push_back(cells_.size());
    }
    validate();
  }

  const Grid& cond_grid() const { return cond_grid_; }
  const Grid& out_grid() const { return out_grid_; }
  std::size_t n_cond() const { return cond_grid_.size(); }
  std::size_t n_out() const { return out_grid_.size(); }
  std::size_t nnz() const { return cells_.size(); }

  RowView row_view(std::size_t cond) const {
    if (cond >= n_cond()) throw InvalidInput("ConditionalPF: condition cell out of range");
    const auto b = offsets_[cond], e = offsets_[cond + 1];
    return {std::span<const std::size_t>(cells_).subspan(b, e - b), std::span<const double>(probs_).subspan(b, e - b)};
  }

  DiscretePF row(std::size_t cond) const {
    const auto v = row_view(cond);
    return DiscretePF(n_out(), std::vector<std::size_t>(v.cells.begin(), v.cells.end()),
                      std::vector<double>(v.probs.begin(), v.probs.end()));
  }

  bool observed(std::size_t cond) const { return !row_view(cond).empty(); }

  std::size_t observed_rows() const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < n_cond(); ++c) n += offsets_[c + 1] > offsets_[c] ? 1 : 0;
    return n;
  }

  std::vector<Triple> triples() const {
    std::vector<Triple> out;
    out.reserve(nnz());
    for (std::size_t c = 0; c < n_cond(); ++c)
      for (auto i = offsets_[c]; i < offsets_[c + 1]; ++i) out.push_back({c, cells_[i], probs_[i]});
    return out;
  }

  bool operator==(const ConditionalPF& o) const {
    return cond_grid_.same_shape(o.cond_grid_) && out_grid_.same_shape(o.out_grid_) &&
           cond_grid_.name() == o.cond_grid_.name() && out_grid_.name() == o.out_grid_.name() &&
           offsets_ == o.offsets_ && cells_ == o.cells_ && probs_ == o.probs_;
  }

 private:
  void validate() const {
    for (std::size_t c = 0; c < n_cond(); ++c)
      detail::validate_row(row_view(c), n_out(), "ConditionalPF row " + std::to_string(c));
  }

  Grid cond_grid_;
  Grid out_grid_;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> cells_;
  std::vector<double> probs_;
};

// Control pf: a ConditionalPF from state cells to action cells.
class PolicyTable {
 public:
  PolicyTable() = default;
  explicit PolicyTable(ConditionalPF table) : table_(std::move(table)) {}

  const Grid& state_grid() const { return table_.cond_grid(); }
  const Grid& action_grid() const { return table_.out_grid(); }
  RowView row_view(std::size_t state_cell) const { return table_.row_view(state_cell); }
  DiscretePF row(std::size_t state_cell) const { return table_.row(state_cell); }
  const ConditionalPF& table() const { return table_; }

  bool operator==(const PolicyTable&) const = default;

 private:
  ConditionalPF table_;
};

// KL(phi || g) over supp(phi). Where phi > 0 and g is zero (or below the
// floor) g is replaced by `floor`.
inline double kl_divergence(RowView phi, RowView g, double floor = kDefaultKlFloor) {
  if (!(floor > 0.0)) throw InvalidInput("kl_divergence: floor must be positive");
  double kl = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < phi.nnz(); ++i) {
    const double p = phi.probs[i];
    if (p == 0.0) continue;
    while (j < g.nnz() && g.cells[j] < phi.cells[i]) ++j;
    const double q = (j < g.nnz() && g.cells[j] == phi.cells[i]) ? g.probs[j] : 0.0;
    kl += p * std::log(p / std::max(q, floor));
  }
  return kl;
}

inline double kl_divergence(const DiscretePF& phi, const DiscretePF& g, double floor = kDefaultKlFloor) {
  if (phi.size() != g.size()) throw GridMismatch("kl_divergence: pfs live on different outcome spaces");
  return kl_divergence(phi.view(), g.view(), floor);
}

inline std::size_t sample(RowView pf, Rng& rng) {
  if (pf.empty()) throw Unsampleable("cannot sample from an unobserved (all-zero) row");
  const double total = pf.mass();
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < pf.nnz(); ++i) {
    acc += pf.probs[i];
    if (u < acc) return pf.cells[i];
  }
  // u landed in the rounding gap at the top; return the last positive cell.
  for (std::size_t i = pf.nnz(); i-- > 0;)
    if (pf.probs[i] > 0.0) return pf.cells[i];
  return pf.cells.back();
}

inline std::size_t sample(const DiscretePF& pf, Rng& rng) { return sample(pf.view(), rng); }

// (1 - w) * a + w * b.
inline DiscretePF mix(const DiscretePF& a, const DiscretePF& b, double w) {
  if (a.size() != b.size()) throw GridMismatch("mix: pfs live on different outcome spaces");
  if (!(w >= 0.0 && w <= 1.0)) throw InvalidInput("mix: weight must lie in [0, 1]");
  if (w == 0.0) return a;
  if (w == 1.0) return b;
  std::vector<std::size_t> cells;
  std::vector<double> probs;
  std::size_t i = 0, j = 0;
  const auto& ac = a.cells();
  const auto& bc = b.cells();
  while (i < ac.size() || j < bc.size()) {
    std::size_t c;
    double p = 0.0;
    if (j >= bc.size() || (i < ac.size() && ac[i] < bc[j])) {
      c = ac[i];
      p = (1.0 - w) * a.probs()[i++];
    } else if (i >= ac.size() || bc[j] < ac[i]) {
      c = bc[j];
      p = w * b.probs()[j++];
    } else {
      c = ac[i];
      p = (1.0 - w) * a.probs()[i++] + w * b.probs()[j++];
    }
    if (p > 0.0) {
      cells.push_back(c);
      probs.push_back(p);
    }
  }
  return DiscretePF(a.size(), std::move(cells), std::move(probs));
}

// Half the L1 distance between two pfs on the same outcome space.
inline double total_variation(const DiscretePF& a, const DiscretePF& b) {
  if (a.size() != b.size()) throw GridMismatch("total_variation: pfs live on different outcome spaces");
  const auto da = a.dense(), db = b.dense();
  double s = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) s += std::abs(da[i] - db[i]);
  return 0.5 * s;
}

}  // namespace pfdm
