#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pfdm/error.hpp"
#include "pfdm/grid.hpp"
#include "pfdm/pf.hpp"

namespace pfdm::io {

// Shortest representation that parses back to the identical double.
inline std::string fmt(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidInput("cannot parse '" + std::string(s) + "' as a number");
  return x;
}

inline std::size_t parse_index(std::string_view s) {
  std::size_t x = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidInput("cannot parse '" + std::string(s) + "' as an index");
  return x;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += f(v[i]);
  }
  return out;
}

// "# grid <name> dims=<d> lower=<..> upper=<..> bins=<..> bounds=<..>"
inline std::string grid_line(const Grid& g) {
  if (g.name().empty() || g.name().find_first_of(" \t\r\n") != std::string::npos)
    throw InvalidInput("grid names must be non-empty and free of whitespace to be serialized");
  const auto& ax = g.axes();
  std::ostringstream os;
  os << "# grid " << g.name() << " dims=" << g.dims()
     << " lower=" << join(ax, [](const Axis& a) { return fmt(a.lower); })
     << " upper=" << join(ax, [](const Axis& a) { return fmt(a.upper); })
     << " bins=" << join(ax, [](const Axis& a) { return std::to_string(a.bins); })
     << " bounds=" << join(ax, [](const Axis& a) { return std::string(to_string(a.boundary)); });
  return os.str();
}

inline Grid parse_grid_line(std::string_view line) {
  const auto parts = split(line, ' ');
  if (parts.size() != 8 || parts[0] != "#" || parts[1] != "grid")
    throw InvalidInput("malformed grid line: '" + std::string(line) + "'");
  const std::string name(parts[2]);
  auto field = [&](std::size_t i, std::string_view key) {
    const auto p = parts[i];
    if (p.substr(0, key.size()) != key || p.size() <= key.size() || p[key.size()] != '=')
      throw InvalidInput("grid line: expected field '" + std::string(key) + "'");
    return split(p.substr(key.size() + 1), ',');
  };
  const auto dims = parse_index(field(3, "dims").at(0));
  const auto lower = field(4, "lower"), upper = field(5, "upper"), bins = field(6, "bins"),
             bounds = field(7, "bounds");
  if (lower.size() != dims || upper.size() != dims || bins.size() != dims || bounds.size() != dims)
    throw InvalidInput("grid line: per-dimension lists disagree with dims=" + std::to_string(dims));
  std::vector<Axis> axes(dims);
  for (std::size_t d = 0; d < dims; ++d)
    axes[d] = Axis{parse_double(lower[d]), parse_double(upper[d]), parse_index(bins[d]),
                   boundary_from_string(std::string(bounds[d]))};
  return Grid(name, std::move(axes));
}

inline void write_conditional(std::ostream& os, const ConditionalPF& pf) {
  os << grid_line(pf.cond_grid()) << '\n' << grid_line(pf.out_grid()) << '\n' << "cond_cell,out_cell,prob\n";
  for (std::size_t c = 0; c < pf.n_cond(); ++c) {
    const auto r = pf.row_view(c);
    for (std::size_t i = 0; i < r.nnz(); ++i) os << c << ',' << r.cells[i] << ',' << fmt(r.probs[i]) << '\n';
  }
}

inline ConditionalPF read_conditional(std::istream& is) {
  std::string line;
  std::vector<Grid> grids;
  while (grids.size() < 2 && std::getline(is, line)) {
    if (line.rfind("# grid ", 0) == 0) grids.push_back(parse_grid_line(line));
  }
  if (grids.size() != 2) throw InvalidInput("conditional pf file: expected two grid header lines");
  if (!std::getline(is, line) || line != "cond_cell,out_cell,prob")
    throw InvalidInput("conditional pf file: expected header 'cond_cell,out_cell,prob'");
  std::vector<std::size_t> offsets(grids[0].size() + 1, 0), cells;
  std::vector<double> probs;
  std::size_t last_cond = 0;
  bool sorted = true;
  std::vector<Triple> triples;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, ',');
    if (f.size() != 3) throw InvalidInput("conditional pf file: malformed row '" + line + "'");
    const Triple t{parse_index(f[0]), parse_index(f[1]), parse_double(f[2])};
    if (t.cond < last_cond) sorted = false;
    last_cond = t.cond;
    triples.push_back(t);
  }
  if (!sorted) return ConditionalPF(grids[0], grids[1], std::move(triples));
  for (const auto& t : triples) {
    if (t.cond >= grids[0].size()) throw InvalidInput("conditional pf file: condition cell out of range");
    ++offsets[t.cond + 1];
    cells.push_back(t.out);
    probs.push_back(t.prob);
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) offsets[i] += offsets[i - 1];
  return ConditionalPF(grids[0], grids[1], std::move(offsets), std::move(cells), std::move(probs));
}

inline void write_discrete(std::ostream& os, const DiscretePF& pf, const Grid& grid) {
  if (grid.size() != pf.size()) throw GridMismatch("write_discrete: grid size does not match pf");
  std::vector<DiscretePF> rows{pf};
  write_conditional(os, ConditionalPF(Grid::indexed("single", 1), grid, rows));
}

inline DiscretePF read_discrete(std::istream& is) {
  const auto c = read_conditional(is);
  if (c.n_cond() != 1) throw InvalidInput("discrete pf file must hold exactly one condition cell");
  return c.row(0);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "' for reading");
  return is;
}

inline void save_conditional(const std::string& path, const ConditionalPF& pf) {
  auto os = open_out(path);
  write_conditional(os, pf);
}

inline ConditionalPF load_conditional(const std::string& path) {
  auto is = open_in(path);
  return read_conditional(is);
}

}  // namespace pfdm::io
