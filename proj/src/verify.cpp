#include "csgnn/verify.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace csgnn {
namespace {

using Coeffs = EquivariantCoeffs<double>;

Matrix uniform(Index rows, Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

Matrix binary_graph(Index n, Rng& rng, double p) {
  std::bernoulli_distribution b(p);
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (b(rng)) a(i, j) = a(j, i) = 1.0;
  return a;
}

Index pick(Index lo, Index hi, Rng& rng) { return std::uniform_int_distribution<Index>(lo, hi)(rng); }

double max_rel(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-300});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

class Suite {
public:
  Suite(std::string id, std::string property, double tol) {
    r_.id = std::move(id);
    r_.property = std::move(property);
    r_.tolerance = tol;
    r_.worst_slack = -std::numeric_limits<double>::infinity();
  }
  /// Records measured - allowed.
  void record(double slack) {
    ++r_.trials;
    r_.worst_slack = std::max(r_.worst_slack, slack);
    if (!(slack <= r_.tolerance)) ++r_.violations;
  }
  SuiteResult done() { return r_; }

private:
  SuiteResult r_;
};

struct Context {
  const VerifyOptions& opts;
  Rng& rng;

  LeakyRelu<double> act() const { return LeakyRelu<double>(opts.leaky_slope); }
  double floor() const { return opts.k1_rule == K1Rule::SlopeCorrected ? opts.leaky_slope : 1.0; }

  Coeffs coeffs(double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale), a(-2.0, 0.0);
    Coeffs::Coeffs k;
    for (int i = 0; i < 8; ++i) k(i) = u(rng);
    return Coeffs(k, a(rng), floor());
  }

  AdjacencyStepConfig<double> step_at_ceiling(const Coeffs& c) const {
    AdjacencyStepConfig<double> cfg{c, max_step_adjacency(c), act(), StepPolicy::Checked};
    if (opts.fault == Fault::AdjacencyStepAboveCeiling) {
      cfg.h *= 2.5;
      cfg.policy = StepPolicy::Unchecked;
    }
    return cfg;
  }

  /// h = min(h_safe, 1), or the faulty oversized step.
  void set_feature_step(LayerParams<double>& p, const Matrix& a) const {
    const double safe = feature_step_bound(a, p).h_safe;
    p.h = std::min(safe, 1.0);
    if (opts.fault == Fault::FeatureStepAboveSafe && std::isfinite(safe)) p.h = 1e3 * safe;
  }

  Matrix spd(Index c) {
    Matrix b = uniform(c, c, rng);
    return b * b.transpose() + 0.1 * Matrix::Identity(c, c);
  }
};

SuiteResult adjacency_contraction(Context& cx) {
  Suite s("adjacency_contraction", "||step(A) - step(A*)||_1 <= ||A - A*||_1 at h = h_hat", 1e-9);
  for (int t = 0; t < 1000; ++t) {
    const Index n = pick(3, 8, cx.rng);
    const auto cfg = cx.step_at_ceiling(cx.coeffs());
    const Matrix a = uniform(n, n, cx.rng), b = uniform(n, n, cx.rng);
    s.record(l1_vec_distance(adjacency_step(a, cfg), adjacency_step(b, cfg)) - l1_vec_distance(a, b));
  }
  return s.done();
}

SuiteResult adjacency_equivariance(Context& cx) {
  Suite s("adjacency_equivariance", "step(P A P^T) = P step(A) P^T (relative)", 1e-10);
  for (int t = 0; t < 1000; ++t) {
    const Index n = pick(1, 8, cx.rng);
    const auto cfg = cx.step_at_ceiling(cx.coeffs());
    const Matrix a = uniform(n, n, cx.rng);
    const auto p = Permutation::random(n, cx.rng);
    s.record(max_rel(adjacency_step(p.conjugate(a), cfg), p.conjugate(adjacency_step(a, cfg))));
  }
  return s.done();
}

SuiteResult adjacency_symmetry(Context& cx) {
  Suite s("adjacency_symmetry", "symmetric A gives symmetric step(A) (relative)", 1e-10);
  for (int t = 0; t < 1000; ++t) {
    const Index n = pick(1, 8, cx.rng);
    const auto cfg = cx.step_at_ceiling(cx.coeffs());
    Matrix a = uniform(n, n, cx.rng);
    a = (a + a.transpose()).eval();
    const Matrix out = adjacency_step(a, cfg);
    s.record(max_rel(out, out.transpose()));
  }
  return s.done();
}

SuiteResult t_matrix_structure(Context& cx) {
  Suite s("t_matrix_structure", "||vec M(A) - T vec A||_inf", 1e-10);
  for (int t = 0; t < 200; ++t) {
    const Index n = pick(2, 5, cx.rng);
    const Coeffs c = cx.coeffs();
    const Matrix a = uniform(n, n, cx.rng);
    const Vector lhs = equivariant_linear(a, c).reshaped();
    const Vector rhs = build_T(c, n) * a.reshaped();
    s.record((lhs - rhs).cwiseAbs().maxCoeff());
  }
  return s.done();
}

SuiteResult t_matrix_offdiag_bound(Context& cx) {
  Suite s("t_matrix_offdiag_bound", "||T - k1 I||_1 - sum_{i>=2} |k_i|", 1e-12);
  for (int t = 0; t < 200; ++t) {
    const Index n = pick(2, 5, cx.rng);
    const Coeffs c = cx.coeffs();
    const Matrix t_off = build_T(c, n) - c.k1() * Matrix::Identity(n * n, n * n);
    s.record(operator_l1_norm(t_off) - c.abs_sum());
  }
  return s.done();
}

SuiteResult adjacency_jacobian(Context& cx) {
  Suite s("adjacency_jacobian", "finite-difference l1 norm of the step Jacobian - 1 at h = h_hat", 1e-6);
  int probes = 0;
  while (probes < 100) {
    const Index n = pick(2, 5, cx.rng);
    const auto cfg = cx.step_at_ceiling(cx.coeffs());
    const Matrix a = uniform(n, n, cx.rng);
    try {
      s.record(jacobian_l1_probe(a, cfg) - 1.0);
      ++probes;
    } catch (const NonSmoothPoint&) {
    }
  }
  return s.done();
}

SuiteResult feature_contraction(Context& cx) {
  Suite s("feature_contraction", "||step(F+dF) - step(F)||_F - ||dF||_F with K = lambda I, h = h_safe", 1e-9);
  std::uniform_real_distribution<double> lam(0.1, 3.0);
  for (int t = 0; t < 1000; ++t) {
    const Index n = pick(2, 8, cx.rng), c = pick(1, 4, cx.rng);
    const Matrix a = binary_graph(n, cx.rng, 0.5);
    auto p = LayerParams<double>::learn_w(uniform(c, c, cx.rng), 0.0, lam(cx.rng));
    cx.set_feature_step(p, a);
    const Matrix f = uniform(n, c, cx.rng), df = 0.3 * uniform(n, c, cx.rng);
    const Matrix f2 = f + df;
    s.record((feature_step(f2, a, p, cx.act()) - feature_step(f, a, p, cx.act())).norm() - df.norm());
  }
  return s.done();
}

SuiteResult energy_descent(Context& cx) {
  Suite s("energy_descent", "E(step(F)) - E(F) with positive definite K, h = h_safe", 1e-9);
  for (int t = 0; t < 1000; ++t) {
    const Index n = pick(2, 8, cx.rng), c = pick(1, 4, cx.rng);
    const Matrix a = binary_graph(n, cx.rng, 0.5);
    auto p = t % 2 == 0 ? LayerParams<double>::learn_w(uniform(c, c, cx.rng), 0.0)
                        : LayerParams<double>::learn_k(cx.spd(c), 0.0);
    cx.set_feature_step(p, a);
    const Matrix f = uniform(n, c, cx.rng);
    s.record(energy(a, feature_step(f, a, p, cx.act()), p.W, cx.act()) - energy(a, f, p.W, cx.act()));
  }
  return s.done();
}

SuiteResult graph_gradient_adjoint_suite(Context& cx) {
  Suite s("graph_gradient_adjoint", "|<G(A)F, Y> - <F, G(A)^T Y>| / (||G(A)F|| ||Y||)", 1e-12);
  for (int t = 0; t < 200; ++t) {
    const Index n = pick(1, 8, cx.rng), c = pick(1, 4, cx.rng);
    const Matrix a = uniform(n, n, cx.rng), f = uniform(n, c, cx.rng);
    const EdgeTensor<double> gf = graph_gradient(a, f);
    EdgeTensor<double> y(n, c);
    for (Index k = 0; k < c; ++k) y.slice(k) = uniform(n, n, cx.rng);
    const double lhs = gf.dot(y);
    const double rhs = f.cwiseProduct(graph_gradient_adjoint(a, y)).sum();
    const double scale = std::max(std::sqrt(gf.squared_norm() * y.squared_norm()), 1e-300);
    s.record(std::abs(lhs - rhs) / scale);
  }
  return s.done();
}

SuiteResult expansivity(Context& cx) {
  Suite s("expansivity_bound", "m1 ||F_L - F*_L|| + m2 ||A_L - A*_L||_1 - (eps1 + c(h) eps2), m1 = m2 = 1", 1e-9);
  std::uniform_real_distribution<double> u(0.0, 1.0), lam(0.5, 2.0);
  for (int t = 0; t < 200; ++t) {
    const Index n = pick(3, 8, cx.rng), c = pick(1, 4, cx.rng), depth = pick(1, 3, cx.rng);
    const Matrix a = binary_graph(n, cx.rng, 0.4);
    Matrix as = a;
    if (t % 2) {
      for (Index e = pick(1, 3, cx.rng); e > 0; --e) {
        const Index i = pick(0, n - 1, cx.rng), j = pick(0, n - 1, cx.rng);
        if (i != j) as(i, j) = as(j, i) = 1.0 - as(i, j);
      }
    } else {
      Matrix d = uniform(n, n, cx.rng);
      d = (d + d.transpose()).eval();
      as += d * (2.0 * u(cx.rng) / d.cwiseAbs().sum());
    }
    NetworkParams p;
    p.encoder = Matrix::Identity(c, c);
    for (Index l = 0; l < depth; ++l) {
      CoupledLayer layer;
      layer.feature = LayerParams<double>::learn_w(uniform(c, c, cx.rng), 0.0, lam(cx.rng));
      Coeffs co = cx.coeffs(0.3);
      co.alpha = std::min(co.alpha, -0.05);
      layer.adjacency.coeffs = co;
      layer.adjacency.activation = cx.act();
      p.layers.push_back(std::move(layer));
    }
    p.classifier = Matrix::Identity(c, c);
    p.bias = Vector::Zero(c);
    const std::vector<Matrix> both{a, as};
    clamp_steps(p, 0.5, both);
    for (auto& layer : p.layers) {
      if (cx.opts.fault == Fault::AdjacencyStepAboveCeiling) {
        layer.adjacency.h *= 2.5;
        layer.adjacency.policy = StepPolicy::Unchecked;
      }
      if (cx.opts.fault == Fault::FeatureStepAboveSafe) layer.feature.h *= 1e3;
    }

    const Matrix f = uniform(n, c, cx.rng);
    Matrix df = uniform(n, c, cx.rng);
    df *= u(cx.rng) / df.norm();
    const PerturbationBudget budget(df.norm(), l1_vec_distance(a, as));

    std::vector<double> hs, lips;
    Matrix fl = f, al = a, asl = as;
    for (const auto& layer : p.layers) {
      hs.push_back(layer.feature.h);
      lips.push_back(
          estimate_mixed_lipschitz(fl, layer.feature, LipschitzDomain::hull({al, asl}), 5, cx.rng, cx.act()).upper);
      fl = feature_step(fl, al, layer.feature, cx.act());
      al = adjacency_step(al, layer.adjacency);
      asl = adjacency_step(asl, layer.adjacency);
    }
    const Matrix fs = f + df;
    const auto [f_out, a_out] = coupled_map(f, a, p);
    const auto [fs_out, as_out] = coupled_map(fs, as, p);
    s.record(weighted_distance(1, 1, f_out, a_out, fs_out, as_out) - expansivity_bound(hs, lips, budget));
  }
  return s.done();
}

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.3e", x);
  return buf;
}

}  // namespace

Fault parse_fault(const std::string& s) {
  if (s == "none") return Fault::None;
  if (s == "h_above_hhat") return Fault::AdjacencyStepAboveCeiling;
  if (s == "h_above_hsafe") return Fault::FeatureStepAboveSafe;
  throw std::invalid_argument("unknown fault '" + s + "' (none | h_above_hhat | h_above_hsafe)");
}

std::string to_string(Fault f) {
  switch (f) {
    case Fault::None: return "none";
    case Fault::AdjacencyStepAboveCeiling: return "h_above_hhat";
    case Fault::FeatureStepAboveSafe: return "h_above_hsafe";
  }
  return "none";
}

std::vector<SuiteResult> run_verification(const VerifyOptions& opts) {
  if (!(opts.leaky_slope > 0.0 && opts.leaky_slope <= 1.0)) {
    throw std::invalid_argument("verify: leaky_slope must lie in (0, 1]");
  }
  using SuiteFn = SuiteResult (*)(Context&);
  const SuiteFn suites[] = {adjacency_contraction, adjacency_equivariance, adjacency_symmetry,
                            t_matrix_structure,    t_matrix_offdiag_bound, adjacency_jacobian,
                            feature_contraction,   energy_descent,         graph_gradient_adjoint_suite,
                            expansivity};
  std::vector<SuiteResult> out;
  std::uint64_t offset = 0;
  for (SuiteFn fn : suites) {
    Rng rng(opts.seed * 1000003ULL + offset++);  // each suite has its own stream
    Context cx{opts, rng};
    out.push_back(fn(cx));
  }
  return out;
}

bool write_verify_report(std::ostream& os, const std::vector<SuiteResult>& results) {
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed();
    os << (r.passed() ? "PASS " : "FAIL ") << r.id << " trials=" << r.trials << " violations=" << r.violations
       << " worst_slack=" << sci(r.worst_slack) << " tol=" << sci(r.tolerance) << "  # " << r.property << '\n';
  }
  long failed = 0;
  for (const auto& r : results) failed += !r.passed();
  os << (all ? "ALL PASS" : "FAILED") << " suites=" << results.size() << " failed=" << failed << '\n';
  return all;
}

}  // namespace csgnn
