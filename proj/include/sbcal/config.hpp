#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "model.hpp"
#include "samplers.hpp"
#include "sbc.hpp"

namespace sbcal {

/// Flat `key = value` text with `#` comments. Later keys override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
      const auto key = trim(t.substr(0, eq));
      if (key.empty()) throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key");
      cfg.set(key, trim(t.substr(eq + 1)));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw InvalidArgument("cannot read config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  std::string require(const std::string& key) const {
    auto v = get(key);
    if (!v) throw InvalidArgument("config: missing required key '" + key + "'");
    return *v;
  }

  double get_real(const std::string& key, double fallback) const {
    auto v = get(key);
    return v ? parse_real(key, *v) : fallback;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto v = get(key);
    return v ? parse_u64(key, *v) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw InvalidArgument("config: '" + key + "' must be true or false");
  }

  std::vector<double> get_reals(const std::string& key, std::vector<double> fallback) const {
    auto v = get(key);
    return v ? parse_reals(key, *v) : fallback;
  }

  KeyValues entries() const {
    KeyValues kv;
    for (const auto& k : order_) kv.emplace_back(k, values_.at(k));
    return kv;
  }

  static double parse_real(const std::string& key, const std::string& text) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
      throw InvalidArgument("config: '" + key + "' is not a number: '" + text + "'");
    return v;
  }

  static std::uint64_t parse_u64(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
      throw InvalidArgument("config: '" + key + "' is not a nonnegative integer: '" + text + "'");
    return v;
  }

  static std::vector<double> parse_reals(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string cell;
    while (std::getline(in, cell, ',')) out.push_back(parse_real(key, trim(cell)));
    if (out.empty()) throw InvalidArgument("config: '" + key + "' is empty");
    return out;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

/// model = conjugate_normal | normal_normal | eight_schools, plus n_obs, sigma,
/// n_groups, group_sds, mu_prior_scale, tau_prior_scale, scalar.
inline std::shared_ptr<const GenerativeModel> make_model(const KeyValueConfig& cfg) {
  const auto name = cfg.require("model");
  if (name == "conjugate_normal") {
    const auto n = cfg.get_u64("n_obs", 1);
    return std::make_shared<ConjugateNormalModel>(n);
  }
  if (name == "normal_normal") return std::make_shared<NormalNormalModel>(cfg.get_real("sigma", 1.0));
  if (name == "eight_schools") {
    std::vector<double> sds;
    if (cfg.has("group_sds")) {
      sds = cfg.get_reals("group_sds", {});
      if (cfg.has("n_groups") && cfg.get_u64("n_groups", 0) != sds.size())
        throw InvalidArgument("config: n_groups does not match group_sds");
    } else {
      sds = EightSchoolsModel::cycled_sds(cfg.get_u64("n_groups", 8));
    }
    return std::make_shared<EightSchoolsModel>(std::move(sds), cfg.get_real("mu_prior_scale", 5.0),
                                               cfg.get_real("tau_prior_scale", 5.0),
                                               cfg.get_string("scalar", "mu"));
  }
  throw InvalidArgument("config: unknown model '" + name +
                        "' (expected conjugate_normal, normal_normal or eight_schools)");
}

inline HmcSettings hmc_settings(const KeyValueConfig& cfg) {
  HmcSettings s;
  s.leapfrog_steps = cfg.get_u64("hmc.leapfrog_steps", s.leapfrog_steps);
  s.step_size = cfg.get_real("hmc.step_size", s.step_size);
  s.warmup_iterations = cfg.get_u64("hmc.warmup_iterations", s.warmup_iterations);
  s.target_accept = cfg.get_real("hmc.target_accept", s.target_accept);
  s.validate();
  return s;
}

inline MeanFieldViSettings vi_settings(const KeyValueConfig& cfg) {
  MeanFieldViSettings s;
  s.iterations = cfg.get_u64("vi.iterations", s.iterations);
  s.mc_gradient_samples = cfg.get_u64("vi.mc_gradient_samples", s.mc_gradient_samples);
  s.base_step_size = cfg.get_real("vi.base_step_size", s.base_step_size);
  s.validate();
  return s;
}

inline Parameterization parse_parameterization(const std::string& s) {
  if (s == "centered") return Parameterization::centered;
  if (s == "non_centered") return Parameterization::non_centered;
  throw InvalidArgument("config: parameterization must be centered or non_centered");
}

/// Builds a sampler by kind: exact | hmc | vi | narrowed. `narrowed` wraps the
/// kind named by `inner_sampler` (default exact) with factor `narrow_factor`.
inline std::shared_ptr<const PosteriorSampler> make_sampler(
    const std::string& kind, const KeyValueConfig& cfg,
    const std::shared_ptr<const GenerativeModel>& model) {
  if (kind == "exact") {
    if (auto m = std::dynamic_pointer_cast<const ConjugateNormalModel>(model))
      return std::make_shared<ExactConjugateSampler>(m);
    if (auto m = std::dynamic_pointer_cast<const NormalNormalModel>(model))
      return std::make_shared<NormalNormalExactSampler>(m);
    throw InvalidArgument("config: no exact sampler for model " + model->name());
  }
  if (kind == "hmc") {
    return std::make_shared<HmcSampler>(
        model, hmc_settings(cfg),
        parse_parameterization(cfg.get_string("hmc.parameterization", "non_centered")));
  }
  if (kind == "vi") {
    return std::make_shared<MeanFieldViSampler>(
        model, vi_settings(cfg),
        parse_parameterization(cfg.get_string("vi.parameterization", "centered")));
  }
  if (kind == "narrowed") {
    const auto inner_kind = cfg.get_string("inner_sampler", "exact");
    if (inner_kind == "narrowed") throw InvalidArgument("config: inner_sampler cannot be narrowed");
    return narrow(make_sampler(inner_kind, cfg, model), cfg.get_real("narrow_factor", 3.0));
  }
  throw InvalidArgument("config: unknown sampler '" + kind + "' (expected exact, hmc, vi or narrowed)");
}

inline std::shared_ptr<const PosteriorSampler> make_sampler(
    const KeyValueConfig& cfg, const std::shared_ptr<const GenerativeModel>& model) {
  return make_sampler(cfg.require("sampler"), cfg, model);
}

/// Posterior-mode reference from `y_d`, `reference_sampler` (default exact,
/// or `same` for the fitted sampler) and `reference_thin`. Returns nullopt in
/// prior mode.
inline std::optional<PosteriorReference> make_reference(
    const KeyValueConfig& cfg, const std::shared_ptr<const GenerativeModel>& model,
    const std::shared_ptr<const PosteriorSampler>& fitted) {
  const auto mode = cfg.get_string("mode", "prior");
  if (mode == "prior") return std::nullopt;
  if (mode != "posterior") throw InvalidArgument("config: mode must be prior or posterior");
  if (!cfg.has("y_d")) throw InvalidArgument("config: posterior mode requires y_d");
  Dataset observed(cfg.get_reals("y_d", {}));
  model->check_dataset(observed);
  const auto ref_kind = cfg.get_string("reference_sampler", "exact");
  auto ref = ref_kind == "same" ? fitted : make_sampler(ref_kind, cfg, model);
  const auto thin = cfg.get_u64("reference_thin", 1);
  if (thin == 0) throw InvalidArgument("config: reference_thin must be positive");
  return PosteriorReference{std::move(observed), std::move(ref), thin};
}

}  // namespace sbcal
