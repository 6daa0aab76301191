#include "gtn/config.hpp"

#include <fstream>

#include "gtn/error.hpp"

namespace gtn {

void validate(const RunConfig& cfg) {
  validate(cfg.model);
  validate(cfg.synth);
  validate(cfg.loss);
  validate(cfg.sampler);
  validate(cfg.post);
  require(cfg.stride >= 1 && cfg.stride <= cfg.model.window, Errc::invalid_argument,
          "stride must be in [1, window]");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(Errc::io, "cannot open config " + path.string());
  try {
    return nlohmann::json::parse(f).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, path.string() + ": " + e.what());
  }
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(Errc::io, "cannot write " + path.string());
  f << nlohmann::json(cfg).dump(2) << '\n';
}

}  // namespace gtn
