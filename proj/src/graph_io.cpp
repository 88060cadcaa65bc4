#include "csgnn/graph_io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace csgnn {
namespace {

std::ifstream open_in(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  return out;
}

double parse_double(std::string_view tok, const std::filesystem::path& file) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r'))
    tok.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw std::runtime_error(file.string() + ": bad number '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#';
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

Matrix read_edge_list(const std::filesystem::path& file, Index num_nodes) {
  auto in = open_in(file);
  Matrix a = Matrix::Zero(num_nodes, num_nodes);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::istringstream ls(line);
    long long i = -1, j = -1;
    double w = 1.0;
    if (!(ls >> i >> j)) {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": expected 'i j'");
    }
    ls >> w;
    if (i < 0 || j < 0 || i >= num_nodes || j >= num_nodes) {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) +
                               ": node index out of range");
    }
    a(i, j) = w;
    a(j, i) = w;
  }
  return a;
}

Matrix read_matrix_csv(const std::filesystem::path& file) {
  auto in = open_in(file);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    std::vector<double> row;
    for (auto tok : split(line, ',')) row.push_back(parse_double(tok, file));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error(file.string() + ": ragged rows");
    }
    rows.push_back(std::move(row));
  }
  const Index cols = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
  Matrix m(static_cast<Index>(rows.size()), cols);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rows[i][j];
  return m;
}

IntVector read_labels(const std::filesystem::path& file) {
  auto in = open_in(file);
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    labels.push_back(static_cast<int>(parse_double(line, file)));
  }
  return Eigen::Map<IntVector>(labels.data(), static_cast<Index>(labels.size()));
}

void read_masks(const std::filesystem::path& file, Graph& g) {
  auto in = open_in(file);
  std::vector<std::array<bool, 3>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    auto toks = split(line, ',');
    if (toks.size() != 3) throw std::runtime_error(file.string() + ": expected 'train,val,test'");
    rows.push_back({parse_double(toks[0], file) != 0.0, parse_double(toks[1], file) != 0.0,
                    parse_double(toks[2], file) != 0.0});
  }
  const auto n = static_cast<Index>(rows.size());
  g.train_mask.resize(n);
  g.val_mask.resize(n);
  g.test_mask.resize(n);
  for (Index i = 0; i < n; ++i) {
    g.train_mask(i) = rows[i][0];
    g.val_mask(i) = rows[i][1];
    g.test_mask(i) = rows[i][2];
  }
}

Graph read_graph(const std::filesystem::path& dir) {
  Graph g;
  g.features = read_matrix_csv(dir / GraphFiles::features);
  g.adjacency = read_edge_list(dir / GraphFiles::edges, g.features.rows());
  g.labels = read_labels(dir / GraphFiles::labels);
  read_masks(dir / GraphFiles::masks, g);
  g.binary = ((g.adjacency.array() == 0.0) || (g.adjacency.array() == 1.0)).all();
  g.validate();
  return g;
}

void write_edge_list(const Matrix& adjacency, const std::filesystem::path& file) {
  detail::require_square(adjacency, "write_edge_list");
  if (!is_symmetric(adjacency)) throw std::invalid_argument("write_edge_list: adjacency not symmetric");
  auto out = open_out(file);
  for (Index i = 0; i < adjacency.rows(); ++i) {
    for (Index j = i; j < adjacency.cols(); ++j) {
      const double w = adjacency(i, j);
      if (w == 0.0) continue;
      out << i << ' ' << j;
      if (w != 1.0) out << ' ' << format_double(w);
      out << '\n';
    }
  }
}

void write_matrix_csv(const Matrix& m, const std::filesystem::path& file) {
  auto out = open_out(file);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void write_graph(const Graph& g, const std::filesystem::path& dir) {
  g.validate();
  std::filesystem::create_directories(dir);
  write_edge_list(g.adjacency, dir / GraphFiles::edges);
  write_matrix_csv(g.features, dir / GraphFiles::features);
  {
    auto out = open_out(dir / GraphFiles::labels);
    for (Index i = 0; i < g.labels.size(); ++i) out << g.labels(i) << '\n';
  }
  auto out = open_out(dir / GraphFiles::masks);
  for (Index i = 0; i < g.num_nodes(); ++i) {
    out << int(g.train_mask(i)) << ',' << int(g.val_mask(i)) << ',' << int(g.test_mask(i)) << '\n';
  }
}

}  // namespace csgnn
