#include "cli.hpp"
#include "csgnn/checkpoint.hpp"
#include "csgnn/graph_io.hpp"
#include "csgnn/network.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace csgnn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh scratch directory under the system temp dir.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("csgnn_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double last_number(const std::string& text, const std::string& key) {
  const auto pos = text.rfind(key + " ");
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + key.size() + 1));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2") {
  CHECK(run({}).code == cli::kUsageError);
  CHECK(run({"fly"}).code == cli::kUsageError);
  CHECK(run({"train", "--bogus"}).code == cli::kUsageError);
  CHECK(run({"--help"}).code == cli::kSuccess);
  CHECK(run({"verify", "--set", "bogus=1"}).code == cli::kUsageError);
  CHECK(run({"verify", "--set", "fault=everything"}).code == cli::kUsageError);
  CHECK(run({"verify", "--config", "/nonexistent/file"}).code == cli::kUsageError);
  CHECK(run({"gen-sbm"}).code == cli::kUsageError);  // no --out
}

TEST_CASE("gen-sbm is byte-identical for a fixed seed") {
  const fs::path dir = scratch("gen");
  REQUIRE(run({"gen-sbm", "--out", (dir / "a").string(), "--seed", "5"}).code == 0);
  REQUIRE(run({"gen-sbm", "--out", (dir / "b").string(), "--seed", "5"}).code == 0);
  REQUIRE(run({"gen-sbm", "--out", (dir / "c").string(), "--seed", "6"}).code == 0);
  for (const char* f : {GraphFiles::edges, GraphFiles::features, GraphFiles::labels, GraphFiles::masks}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  CHECK(slurp(dir / "a" / GraphFiles::features) != slurp(dir / "c" / GraphFiles::features));
  const Graph g = read_graph(dir / "a");
  CHECK(g.num_nodes() == 100);
  CHECK(run({"gen-sbm", "--out", (dir / "d").string(), "--set", "p_out=0.5"}).code == cli::kUsageError);
}

TEST_CASE("train writes deterministic outputs") {
  const fs::path dir = scratch("train");
  REQUIRE(run({"gen-sbm", "--out", (dir / "g").string(), "--set", "n=40", "--set", "signal=2"}).code == 0);
  const std::vector<std::string> base{"train", "--graph", (dir / "g").string(), "--set", "epochs=5", "--set",
                                      "hidden=4"};
  auto with_out = [&](const std::string& sub) {
    auto a = base;
    a.push_back("--out");
    a.push_back((dir / sub).string());
    return a;
  };
  const Run r1 = run(with_out("t1")), r2 = run(with_out("t2"));
  REQUIRE(r1.code == 0);
  CHECK(r1.out == r2.out);
  for (const char* f : {"checkpoint.txt", "history.csv", "config.txt"}) CHECK(slurp(dir / "t1" / f) == slurp(dir / "t2" / f));
  CHECK_NOTHROW(load_checkpoint(dir / "t1" / "checkpoint.txt"));
  CHECK(run({"train", "--out", (dir / "x").string()}).code == cli::kUsageError);  // no --graph
  auto bad = with_out("t3");
  bad.insert(bad.end(), {"--set", "lr_node=5"});
  CHECK(run(bad).code == cli::kUsageError);
}

TEST_CASE("verify exit status follows the suites") {
  const Run plain = run({"verify"});
  CHECK(plain.out.find("FAIL adjacency_jacobian") != std::string::npos);
  CHECK(plain.code == cli::kVerificationFailure);
  for (const char* id : {"adjacency_contraction", "adjacency_equivariance", "adjacency_symmetry",
                         "t_matrix_structure", "t_matrix_offdiag_bound", "adjacency_jacobian",
                         "feature_contraction", "energy_descent", "graph_gradient_adjoint", "expansivity_bound"}) {
    CHECK(plain.out.find(std::string(" ") + id + " ") != std::string::npos);
  }
  const Run corrected = run({"verify", "--set", "k1_rule=slope_corrected"});
  CHECK(corrected.code == cli::kSuccess);
  CHECK(corrected.out.find("ALL PASS") != std::string::npos);
  const Run fault = run({"verify", "--set", "k1_rule=slope_corrected", "--set", "fault=h_above_hhat"});
  CHECK(fault.code == cli::kVerificationFailure);
  CHECK(fault.out.find("FAIL adjacency_contraction") != std::string::npos);
  CHECK(run({"verify", "--seed", "3"}).out == run({"verify", "--seed", "3"}).out);
}

TEST_CASE("certify") {
  const fs::path dir = scratch("certify");
  REQUIRE(run({"gen-sbm", "--out", (dir / "g").string(), "--set", "n=20", "--set", "feat_dim=3"}).code == 0);
  const Graph g = read_graph(dir / "g");

  // K = 0 and a zero adjacency map: the bound is eps_feat + eps_adj
  NetworkParams zero;
  zero.encoder = Matrix::Identity(3, 3);
  CoupledLayer layer;
  layer.feature = LayerParams<double>::learn_k(Matrix::Zero(3, 3), 0.5);
  layer.adjacency.h = 0.5;
  zero.layers = {layer, layer};
  zero.classifier = Matrix::Identity(3, 2);
  zero.bias = Vector::Zero(2);
  save_checkpoint(dir / "zero.txt", zero);
  const std::vector<std::string> base{"certify", "--graph", (dir / "g").string(), "--checkpoint",
                                      (dir / "zero.txt").string()};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a);
  };
  Run r = with({"--set", "eps_feat=0.25", "--set", "eps_adj=0.5"});
  REQUIRE(r.code == 0);
  CHECK(last_number(r.out, "bound") == doctest::Approx(0.75));
  CHECK(last_number(with({}).out, "bound") == 0.0);

  // trained network: the printed bound equals expansivity_bound of the printed columns
  REQUIRE(run({"train", "--graph", (dir / "g").string(), "--out", (dir / "t").string(), "--set", "epochs=3", "--set",
               "hidden=3"})
              .code == 0);
  r = run({"certify", "--graph", (dir / "g").string(), "--checkpoint", (dir / "t" / "checkpoint.txt").string(),
           "--set", "eps_feat=0.1", "--set", "eps_adj=1"});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  std::vector<double> hs, lips;
  double eps_hidden = -1;
  while (std::getline(lines, line)) {
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "eps_feat") {
      std::string k;
      double v;
      ls >> v >> k >> v >> k >> eps_hidden;
    } else if (!head.empty() && std::isdigit(static_cast<unsigned char>(head[0]))) {
      double h, skip, lip;
      ls >> h >> skip >> skip >> skip >> skip >> skip >> lip;
      hs.push_back(h);
      lips.push_back(lip);
    }
  }
  REQUIRE(hs.size() == 2);
  CHECK(last_number(r.out, "bound") ==
        doctest::Approx(expansivity_bound(hs, lips, PerturbationBudget(eps_hidden, 1.0))).epsilon(1e-12));

  std::ofstream(dir / "bad.txt") << "csgnn-checkpoint 1\ndropout_p 0x0p+0\n";
  CHECK(with({}).code == 0);
  CHECK(run({"certify", "--graph", (dir / "g").string(), "--checkpoint", (dir / "bad.txt").string()}).code ==
        cli::kRuntimeError);
  CHECK(run({"certify", "--graph", (dir / "g").string()}).code == cli::kUsageError);
}

TEST_CASE("attack-sweep is deterministic") {
  const fs::path dir = scratch("sweep");
  REQUIRE(run({"gen-sbm", "--out", (dir / "g").string(), "--set", "n=30"}).code == 0);
  const std::vector<std::string> args{"attack-sweep", "--graph", (dir / "g").string(), "--set", "n_seeds=2",
                                      "--set", "epochs=3", "--set", "gcn_epochs=3", "--set", "ratios=0,0.5"};
  auto a1 = args, a2 = args;
  a1.insert(a1.end(), {"--out", (dir / "s1").string()});
  a2.insert(a2.end(), {"--out", (dir / "s2").string()});
  const Run r1 = run(a1), r2 = run(a2);
  REQUIRE(r1.code == 0);
  CHECK(r1.out == r2.out);
  CHECK(slurp(dir / "s1" / "robustness.csv") == slurp(dir / "s2" / "robustness.csv"));
  CHECK(std::count(r1.out.begin(), r1.out.end(), '\n') == 5);
  auto bad = a1;
  bad.insert(bad.end(), {"--set", "models=mlp"});
  CHECK(run(bad).code == cli::kUsageError);
}

}
