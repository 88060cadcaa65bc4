#include "csgnn/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace csgnn {
namespace {

constexpr int kVersion = 1;

std::string hex(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", x);
  return buf;
}

void write_matrix(std::ostream& os, const char* name, const Matrix& m) {
  os << name << ' ' << m.rows() << ' ' << m.cols();
  for (Index i = 0; i < m.size(); ++i) os << ' ' << hex(m.data()[i]);
  os << '\n';
}

class Reader {
public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::string word() {
    std::string w;
    if (!(is_ >> w)) throw CheckpointError("checkpoint truncated");
    return w;
  }

  void expect(const std::string& tag) {
    const std::string w = word();
    if (w != tag) throw CheckpointError("checkpoint: expected '" + tag + "', found '" + w + "'");
  }

  double real() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) throw CheckpointError("checkpoint: bad number '" + w + "'");
    return v;
  }

  long long integer() {
    const std::string w = word();
    char* end = nullptr;
    const long long v = std::strtoll(w.c_str(), &end, 10);
    if (end != w.c_str() + w.size()) throw CheckpointError("checkpoint: bad integer '" + w + "'");
    return v;
  }

  Index dim() {
    const long long v = integer();
    if (v < 0 || v > (1LL << 24)) throw CheckpointError("checkpoint: implausible dimension");
    return static_cast<Index>(v);
  }

  Matrix matrix(const std::string& tag) {
    expect(tag);
    const Index r = dim(), c = dim();
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = real();
    return m;
  }

private:
  std::istream& is_;
};

}  // namespace

void save_checkpoint(std::ostream& os, const NetworkParams& p) {
  os << "csgnn-checkpoint " << kVersion << '\n';
  os << "dropout_p " << hex(p.dropout_p) << '\n';
  os << "share_weights " << (p.share_weights ? 1 : 0) << '\n';
  write_matrix(os, "encoder", p.encoder);
  os << "layers " << p.depth() << '\n';
  for (Index l = 0; l < p.depth(); ++l) {
    const auto& layer = p.layers[l];
    const auto& co = layer.adjacency.coeffs;
    os << "layer " << l << '\n';
    os << "parameterization "
       << (layer.feature.parameterization == Parameterization::LearnW_IdentityK ? "learn_w" : "learn_k") << '\n';
    os << "feature_h " << hex(layer.feature.h) << '\n';
    write_matrix(os, "W", layer.feature.W);
    write_matrix(os, "K", layer.feature.K);
    os << 'k';
    for (Index i = 0; i < 8; ++i) os << ' ' << hex(co.k(i));
    os << '\n';
    os << "alpha " << hex(co.alpha) << '\n';
    os << "slope_floor " << hex(co.slope_floor) << '\n';
    os << "adjacency_h " << hex(layer.adjacency.h) << '\n';
    os << "leaky_slope " << hex(layer.adjacency.activation.slope) << '\n';
    os << "policy " << (layer.adjacency.policy == StepPolicy::Checked ? "checked" : "unchecked") << '\n';
  }
  write_matrix(os, "classifier", p.classifier);
  os << "bias " << p.bias.size();
  for (Index i = 0; i < p.bias.size(); ++i) os << ' ' << hex(p.bias(i));
  os << "\nend\n";
}

void save_checkpoint(const std::filesystem::path& file, const NetworkParams& params) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write " + file.string());
  save_checkpoint(os, params);
  if (!os) throw CheckpointError("write failed for " + file.string());
}

NetworkParams load_checkpoint(std::istream& is) {
  Reader r(is);
  r.expect("csgnn-checkpoint");
  if (r.integer() != kVersion) throw CheckpointError("checkpoint: unsupported version");
  NetworkParams p;
  r.expect("dropout_p");
  p.dropout_p = r.real();
  r.expect("share_weights");
  p.share_weights = r.integer() != 0;
  p.encoder = r.matrix("encoder");
  r.expect("layers");
  const Index depth = r.dim();
  for (Index l = 0; l < depth; ++l) {
    r.expect("layer");
    if (r.integer() != l) throw CheckpointError("checkpoint: layers out of order");
    CoupledLayer layer;
    r.expect("parameterization");
    const std::string kind = r.word();
    if (kind == "learn_w") {
      layer.feature.parameterization = Parameterization::LearnW_IdentityK;
    } else if (kind == "learn_k") {
      layer.feature.parameterization = Parameterization::IdentityW_LearnK;
    } else {
      throw CheckpointError("checkpoint: unknown parameterization '" + kind + "'");
    }
    r.expect("feature_h");
    layer.feature.h = r.real();
    layer.feature.W = r.matrix("W");
    layer.feature.K = r.matrix("K");
    r.expect("k");
    for (Index i = 0; i < 8; ++i) layer.adjacency.coeffs.k(i) = r.real();
    r.expect("alpha");
    layer.adjacency.coeffs.alpha = r.real();
    r.expect("slope_floor");
    layer.adjacency.coeffs.slope_floor = r.real();
    r.expect("adjacency_h");
    layer.adjacency.h = r.real();
    r.expect("leaky_slope");
    try {
      layer.adjacency.activation = LeakyRelu<double>(r.real());
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
    r.expect("policy");
    const std::string policy = r.word();
    if (policy == "checked") {
      layer.adjacency.policy = StepPolicy::Checked;
    } else if (policy == "unchecked") {
      layer.adjacency.policy = StepPolicy::Unchecked;
    } else {
      throw CheckpointError("checkpoint: unknown policy '" + policy + "'");
    }
    p.layers.push_back(std::move(layer));
  }
  p.classifier = r.matrix("classifier");
  r.expect("bias");
  p.bias.resize(r.dim());
  for (Index i = 0; i < p.bias.size(); ++i) p.bias(i) = r.real();
  r.expect("end");
  try {
    p.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: invalid parameters: ") + e.what());
  }
  return p;
}

NetworkParams load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw CheckpointError("cannot open " + file.string());
  return load_checkpoint(is);
}

}  // namespace csgnn
