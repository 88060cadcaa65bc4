#ifndef CSGNN_GRAPH_IO_HPP
#define CSGNN_GRAPH_IO_HPP

#include "csgnn/graph.hpp"

#include <filesystem>
#include <string>

namespace csgnn {

/// File names used inside a graph directory.
struct GraphFiles {
  static constexpr const char* edges = "edges.txt";
  static constexpr const char* features = "features.csv";
  static constexpr const char* labels = "labels.csv";
  static constexpr const char* masks = "masks.csv";
};

/**
 * Graph directory layout:
 *   edges.txt     one "i j" pair per line (0-indexed, i < j); an optional third
 *                 column carries a weight, written only when it differs from 1.
 *                 Both (i,j) and (j,i) are set on load.
 *   features.csv  one row per node, comma separated.
 *   labels.csv    one integer per line (-1 = unlabeled).
 *   masks.csv     one "train,val,test" 0/1 triple per line.
 * The node count is the number of rows in features.csv.
 */
Graph read_graph(const std::filesystem::path& dir);
void write_graph(const Graph& g, const std::filesystem::path& dir);

/// Individual readers, usable on their own.
Matrix read_edge_list(const std::filesystem::path& file, Index num_nodes);
Matrix read_matrix_csv(const std::filesystem::path& file);
IntVector read_labels(const std::filesystem::path& file);
void read_masks(const std::filesystem::path& file, Graph& g);

void write_edge_list(const Matrix& adjacency, const std::filesystem::path& file);
void write_matrix_csv(const Matrix& m, const std::filesystem::path& file);

/// Shortest round-trip decimal representation used by every writer.
std::string format_double(double x);

}  // namespace csgnn

#endif  // CSGNN_GRAPH_IO_HPP
