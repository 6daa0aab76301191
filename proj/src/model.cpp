#include "gtn/model.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "gtn/config.hpp"
#include "gtn/error.hpp"
#include "gtn/labels.hpp"
#include "gtn/rng.hpp"
#include "gtn/tensor_io.hpp"

namespace gtn {
namespace {

constexpr std::uint64_t kAnatomyStream = 101;
constexpr std::uint64_t kPathologyStream = 102;
constexpr std::size_t kKernelSize = 5;

Dense zero_dense(std::size_t in, std::size_t out) { return {Matrix(in, out), Matrix(1, out)}; }

SsmBlock zero_ssm(const ModelDims& d) {
  return {zero_dense(d.hidden, d.hidden), Matrix(d.hidden, d.ssm_state), Matrix(d.hidden, d.ssm_state),
          Matrix(d.hidden, d.ssm_state), Matrix(1, d.hidden)};
}

GcnWeights zero_gcn(const ModelDims& d) {
  return {Matrix(d.hidden, d.hidden), Matrix(d.hidden, d.hidden), zero_dense(2 * d.hidden, d.hidden)};
}

void init_param(Rng& rng, Matrix& m, ParamKind kind) {
  switch (kind) {
    case ParamKind::weight:
    case ParamKind::embedding: {
      const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
      for (auto& v : m.values()) v = static_cast<float>(rng.uniform(-bound, bound));
      break;
    }
    case ParamKind::bias:
      break;
    case ParamKind::decay_log:
      for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t s = 0; s < m.cols(); ++s) m(r, s) = static_cast<float>(std::log(1.0 + static_cast<double>(s)));
      }
      break;
    case ParamKind::skip:
      for (auto& v : m.values()) v = 1.0f;
      break;
    case ParamKind::delta_bias:
      // softplus^-1 of a step log-uniform in [1e-3, 1e-1]
      for (auto& v : m.values()) {
        const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
        v = static_cast<float>(dt + std::log(-std::expm1(-dt)));
      }
      break;
  }
}

template <typename W>
void save_branch(const std::filesystem::path& dir, const std::string& branch, const ModelDims& dims, const W& w) {
  std::error_code ec;
  std::filesystem::create_directories(dir / branch, ec);
  if (ec) fail(Errc::io, "cannot create " + (dir / branch).string() + ": " + ec.message());
  nlohmann::ordered_json manifest;
  manifest["branch"] = branch;
  manifest["format_version"] = 1;
  manifest["dims"] = nlohmann::json(dims);
  auto tensors = nlohmann::ordered_json::array();
  W::visit(w, [&](const std::string& name, const Matrix& m, ParamKind) {
    const std::string rel = branch + "/" + name + ".ten";
    save_tensor(dir / rel, m);
    tensors.push_back({{"name", name}, {"file", rel}, {"shape", {m.rows(), m.cols()}}});
  });
  manifest["tensors"] = std::move(tensors);
  std::ofstream f(dir / (branch + ".json"), std::ios::trunc);
  if (!f) fail(Errc::io, "cannot write manifest in " + dir.string());
  f << manifest.dump(2) << '\n';
}

template <typename W>
void load_branch(const std::filesystem::path& dir, const std::string& branch, W& w) {
  const auto path = dir / (branch + ".json");
  std::ifstream f(path);
  if (!f) fail(Errc::io, "missing weight manifest " + path.string());
  std::map<std::string, std::pair<std::string, std::vector<std::size_t>>> entries;
  try {
    const auto manifest = nlohmann::json::parse(f);
    for (const auto& t : manifest.at("tensors")) {
      entries[t.at("name").get<std::string>()] = {t.at("file").get<std::string>(),
                                                  t.at("shape").get<std::vector<std::size_t>>()};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, path.string() + ": " + e.what());
  }
  W::visit(w, [&](const std::string& name, Matrix& m, ParamKind) {
    const auto it = entries.find(name);
    if (it == entries.end()) fail(Errc::shape_mismatch, branch + " manifest lacks tensor " + name);
    const auto& [file, shape] = it->second;
    Matrix loaded = load_tensor<float>(dir / file);
    if (shape.size() != 2 || shape[0] != loaded.rows() || shape[1] != loaded.cols()) {
      fail(Errc::shape_mismatch, "manifest shape disagrees with tensor file for " + name);
    }
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) {
      fail(Errc::shape_mismatch, name + ": expected " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                     ", file has " + std::to_string(loaded.rows()) + "x" + std::to_string(loaded.cols()));
    }
    check_finite(loaded, name.c_str());
    m = std::move(loaded);
  });
}

}  // namespace

void validate(const ModelDims& d) {
  require(d.cls_dim >= 1 && d.patch_dim >= 1 && d.hidden >= 1 && d.ssm_state >= 1 && d.window >= 1 &&
              d.gps_hidden >= 1 && d.cond_hidden >= 1 && d.gcn_k >= 1,
          Errc::invalid_argument, "model dims must be >= 1");
  require(d.heads >= 1 && d.hidden % d.heads == 0, Errc::invalid_argument, "hidden size must be divisible by heads");
  require(d.attn_radius >= 1, Errc::invalid_argument, "attention radius must be >= 1");
}

AnatomyWeights zero_anatomy_weights(const ModelDims& d) {
  validate(d);
  AnatomyWeights w;
  w.in_proj = zero_dense(d.cls_dim, d.hidden);
  w.pos_emb = Matrix(d.window, d.hidden);
  w.motion_proj = zero_dense(d.cls_dim, d.hidden);
  for (auto& a : w.attn) {
    a = {Matrix(d.hidden, d.hidden), Matrix(d.hidden, d.hidden), Matrix(d.hidden, d.hidden), Matrix(d.hidden, d.hidden)};
  }
  w.gcn = zero_gcn(d);
  w.gps_mlp = {zero_dense(1, d.gps_hidden), zero_dense(d.gps_hidden, d.hidden)};
  w.scan_fwd = zero_ssm(d);
  w.scan_bwd = zero_ssm(d);
  w.gate = zero_dense(d.hidden, d.hidden);
  w.merge = zero_dense(2 * d.hidden, d.hidden);
  w.head = zero_dense(d.hidden, kNumAnatomy);
  return w;
}

PathologyWeights zero_pathology_weights(const ModelDims& d) {
  validate(d);
  PathologyWeights w;
  w.dev_proj = Matrix(d.patch_dim, d.hidden);
  w.motion_proj = Matrix(d.patch_dim, d.hidden);
  w.content_proj = Matrix(d.patch_dim, d.hidden);
  w.gcn = zero_gcn(d);
  w.dw_kernel = Matrix(d.hidden, kKernelSize);
  w.pointwise = Matrix(d.hidden, d.hidden);
  w.scan = zero_ssm(d);
  w.fuse = zero_dense(3 * d.hidden, d.hidden);
  w.cond_mlp = {zero_dense(kNumAnatomy, d.cond_hidden), zero_dense(d.cond_hidden, d.hidden)};
  w.head = zero_dense(d.hidden, kNumPathology);
  return w;
}

AnatomyWeights init_anatomy_weights(const ModelDims& dims, std::uint64_t seed) {
  AnatomyWeights w = zero_anatomy_weights(dims);
  Rng rng(seed, kAnatomyStream);
  AnatomyWeights::visit(w, [&](const std::string&, Matrix& m, ParamKind k) { init_param(rng, m, k); });
  return w;
}

PathologyWeights init_pathology_weights(const ModelDims& dims, std::uint64_t seed) {
  PathologyWeights w = zero_pathology_weights(dims);
  Rng rng(seed, kPathologyStream);
  PathologyWeights::visit(w, [&](const std::string&, Matrix& m, ParamKind k) { init_param(rng, m, k); });
  return w;
}

void save_weights(const std::filesystem::path& dir, const ModelDims& dims, const AnatomyWeights& w) {
  save_branch(dir, "anatomy", dims, w);
}

void save_weights(const std::filesystem::path& dir, const ModelDims& dims, const PathologyWeights& w) {
  save_branch(dir, "pathology", dims, w);
}

AnatomyWeights load_anatomy_weights(const std::filesystem::path& dir, const ModelDims& dims) {
  AnatomyWeights w = zero_anatomy_weights(dims);
  load_branch(dir, "anatomy", w);
  return w;
}

PathologyWeights load_pathology_weights(const std::filesystem::path& dir, const ModelDims& dims) {
  PathologyWeights w = zero_pathology_weights(dims);
  load_branch(dir, "pathology", w);
  return w;
}

}  // namespace gtn
