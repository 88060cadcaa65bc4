#include "csgnn/graph.hpp"
#include "csgnn/graph_io.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace csgnn;
using namespace csgnn::testing;

TEST_SUITE("graph_core") {

TEST_CASE("l0 distance counts differing entries") {
  Matrix a(2, 2), z = Matrix::Zero(2, 2);
  a << 0, 1, 1, 0;
  CHECK(l0_distance(a, z) == 2);
  CHECK(l0_distance(a, a) == 0);
  CHECK_THROWS_AS(l0_distance(a, Matrix::Zero(3, 2)), ShapeError);
}

TEST_CASE("l1 vectorised distance") {
  Matrix a(2, 2), z = Matrix::Zero(2, 2);
  a << 0, 1, 1, 0;
  CHECK(l1_vec_distance(a, z) == 2.0);
  Matrix b = Matrix::Zero(2, 2);
  b(0, 0) = 0.5;
  CHECK(l1_vec_distance(b, z) == 0.5);
  CHECK_THROWS_AS(l1_vec_distance(a, Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("frobenius distance") {
  Matrix f(1, 2);
  f << 3, 4;
  CHECK(frobenius_distance(f, Matrix::Zero(1, 2)) == 5.0);
  CHECK(frobenius_distance(f, f) == 0.0);
  CHECK_THROWS_AS(frobenius_distance(f, Matrix::Zero(2, 2)), ShapeError);

  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    Matrix x = random_matrix(4, 3, rng), y = random_matrix(4, 3, rng);
    double s = 0.0;
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 3; ++j) s += (x(i, j) - y(i, j)) * (x(i, j) - y(i, j));
    CHECK(frobenius_distance(x, y) == doctest::Approx(std::sqrt(s)).epsilon(1e-14));
  }
}

TEST_CASE("l0 and l1 coincide on binary matrices") {
  Rng rng(11);
  for (int t = 0; t < 1000; ++t) {
    const Index r = random_index(1, 10, rng), c = random_index(1, 10, rng);
    Matrix a = random_binary_matrix(r, c, rng), b = random_binary_matrix(r, c, rng);
    REQUIRE(static_cast<double>(l0_distance(a, b)) == l1_vec_distance(a, b));
  }
}

TEST_CASE("l1 is bounded below by the l0 count times the smallest change") {
  Rng rng(12);
  std::bernoulli_distribution keep(0.5);
  for (int t = 0; t < 500; ++t) {
    const Index n = random_index(1, 8, rng);
    Matrix a = random_matrix(n, n, rng), b = a;
    for (Index i = 0; i < n * n; ++i)
      if (keep(rng)) b(i) += random_matrix(1, 1, rng)(0);
    const Index changed = l0_distance(a, b);
    if (changed == 0) continue;
    const double min_gap = ((a - b).array() != 0).select((a - b).cwiseAbs(), 1e300).minCoeff();
    CHECK(l1_vec_distance(a, b) >= changed * min_gap * (1 - 1e-15));
  }
}

TEST_CASE("distances are symmetric and vanish only on equal arguments") {
  Rng rng(13);
  for (int t = 0; t < 200; ++t) {
    Matrix a = random_matrix(3, 3, rng), b = random_matrix(3, 3, rng);
    CHECK(l0_distance(a, b) == l0_distance(b, a));
    CHECK(l1_vec_distance(a, b) == l1_vec_distance(b, a));
    CHECK(frobenius_distance(a, b) == frobenius_distance(b, a));
    CHECK(l0_distance(a, b) > 0);
    CHECK(l1_vec_distance(a, b) > 0);
    CHECK(frobenius_distance(a, b) > 0);
  }
}

TEST_CASE("permute_graph") {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  Graph g = make_graph<double>(a, Matrix::Identity(2, 2));
  g.labels << 0, 1;
  g.train_mask << true, false;

  SUBCASE("identity leaves the graph unchanged") {
    Graph p = permute_graph(g, Permutation::identity(2));
    CHECK(p.adjacency == g.adjacency);
    CHECK(p.features == g.features);
    CHECK(p.labels == g.labels);
  }
  SUBCASE("swap on a general matrix") {
    Graph p = permute_graph(g, Permutation({1, 0}));
    Matrix expected(2, 2);
    expected << 4, 3, 2, 1;
    CHECK(p.adjacency == expected);
    CHECK(p.labels(0) == 1);
    CHECK(p.train_mask(1));
    CHECK(!p.train_mask(0));
    // matches the explicit P A P^T
    Matrix P = Permutation({1, 0}).matrix<double>();
    CHECK(p.adjacency == P * a * P.transpose());
  }
  SUBCASE("swap fixes a symmetric two-node graph") {
    Matrix s(2, 2);
    s << 0, 1, 1, 0;
    CHECK(permute_graph(make_graph<double>(s, Matrix::Zero(2, 1)), Permutation({1, 0})).adjacency == s);
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(permute_graph(g, Permutation::identity(3)), ShapeError);
  }
}

TEST_CASE("permutations compose") {
  Rng rng(21);
  for (int t = 0; t < 200; ++t) {
    const Index n = random_index(1, 9, rng);
    Graph g = make_graph<double>(random_matrix(n, n, rng), random_matrix(n, 2, rng));
    const auto p = Permutation::random(n, rng), q = Permutation::random(n, rng);
    Graph lhs = permute_graph(permute_graph(g, p), q);
    Graph rhs = permute_graph(g, p.then(q));
    REQUIRE(lhs.adjacency == rhs.adjacency);
    REQUIRE(lhs.features == rhs.features);
    REQUIRE(q.matrix<double>() * p.matrix<double>() == p.then(q).matrix<double>());
  }
}

TEST_CASE("permutation rejects non-bijections") {
  CHECK_THROWS(Permutation({0, 0}));
  CHECK_THROWS(Permutation({0, 2}));
}

TEST_CASE("graph validation") {
  Graph g = make_graph<double>(Matrix::Zero(3, 3), Matrix::Zero(3, 2));
  CHECK_NOTHROW(g.validate());
  g.train_mask(0) = g.test_mask(0) = true;
  CHECK_THROWS(g.validate());
  g.test_mask(0) = false;
  g.binary = true;
  g.adjacency(0, 1) = 0.5;
  CHECK_THROWS(g.validate());
  Graph bad = make_graph<double>(Matrix::Zero(3, 2), Matrix::Zero(3, 2));
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("budget rejects negative values") {
  CHECK_THROWS(PerturbationBudget(-1.0, 0.0));
  CHECK_THROWS(PerturbationBudget(0.0, -1e-3));
  CHECK_NOTHROW(PerturbationBudget(0.0, 0.0));
}

TEST_CASE("graph files round trip") {
  Rng rng(5);
  const Index n = 7;
  Graph g = make_graph<double>(random_binary_graph(n, rng), random_matrix(n, 3, rng));
  g.adjacency(0, 1) = g.adjacency(1, 0) = 0.25;  // weighted entry
  g.labels << 0, 1, 1, 0, -1, 1, 0;
  g.train_mask << true, true, false, false, false, false, false;
  g.val_mask << false, false, true, false, false, false, false;
  g.test_mask << false, false, false, true, true, true, true;
  const auto dir = std::filesystem::temp_directory_path() / "csgnn_graph_io_test";
  std::filesystem::remove_all(dir);
  write_graph(g, dir);
  Graph h = read_graph(dir);
  CHECK(h.adjacency == g.adjacency);
  CHECK(h.features == g.features);
  CHECK(h.labels == g.labels);
  CHECK((h.train_mask == g.train_mask).all());
  CHECK((h.val_mask == g.val_mask).all());
  CHECK((h.test_mask == g.test_mask).all());
  CHECK(!h.binary);

  std::ifstream edges(dir / GraphFiles::edges);
  std::stringstream ss;
  ss << edges.rdbuf();
  CHECK(ss.str().rfind("0 1 0.25\n", 0) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("edge list reader rejects out of range nodes") {
  const auto file = std::filesystem::temp_directory_path() / "csgnn_bad_edges.txt";
  std::ofstream(file) << "0 5\n";
  CHECK_THROWS(read_edge_list(file, 3));
  std::filesystem::remove(file);
}

}
