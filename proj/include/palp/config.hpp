#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "palp/errors.hpp"
#include "palp/estimator.hpp"
#include "palp/plant.hpp"
#include "palp/trace_io.hpp"

// Flat key-value configuration with dotted section keys, e.g.
//   plant.gains.K33 = 0.5
// plus the named specimen presets whose truth parameters follow the
// reference values of the four silicone samples.

namespace palp {

/// Ordered key-value store. Lines are `key = value`; blank lines and lines
/// starting with '#' are ignored.
class KeyValues {
 public:
  static KeyValues parse(std::istream& is) {
    KeyValues kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string_view trimmed = trim(line);
      if (trimmed.empty() || trimmed.front() == '#') continue;
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("line " + std::to_string(line_no) +
                          ": expected 'key = value'");
      const std::string key{trim(trimmed.substr(0, eq))};
      const std::string value{trim(trimmed.substr(eq + 1))};
      if (key.empty())
        throw ConfigError("line " + std::to_string(line_no) + ": empty key");
      kv.set(key, value);
    }
    return kv;
  }

  static KeyValues parse_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path.string());
    return parse(is);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, std::string value) {
    values_[key] = std::move(value);
  }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing key: " + key);
    return it->second;
  }

  double get_double(const std::string& key) const {
    return to_double(raw(key), key);
  }

  std::uint64_t get_uint(const std::string& key) const {
    const std::string& s = raw(key);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
      throw ConfigError("key '" + key + "': not an unsigned integer: " + s);
    return v;
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    const std::string& s = raw(key);
    std::size_t start = 0;
    while (start <= s.size()) {
      std::size_t comma = s.find(',', start);
      if (comma == std::string::npos) comma = s.size();
      const std::string_view item = trim(std::string_view(s).substr(start, comma - start));
      if (!item.empty()) out.push_back(to_double(std::string(item), key));
      start = comma + 1;
    }
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

  static std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
      s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
      s.remove_suffix(1);
    return s;
  }

 private:
  static double to_double(const std::string& s, const std::string& key) {
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
      throw ConfigError("key '" + key + "': not a number: " + s);
    return v;
  }

  std::map<std::string, std::string> values_;
};

/// Full description of one synthetic palpation experiment.
struct ExperimentConfig {
  std::string name = "custom";
  PlantConfig plant{};
  std::vector<ModelVariant> variants;  // filled by finalize helpers
  FilterConfig filter{};
  std::vector<double> checkpoints{5.0, 10.0};
  double mse_window_start = 5.0;
  double mse_window_end = 10.0;
  double duration = 10.0;
  ZTildeSource z_tilde_source = ZTildeSource::TraceZee;
};

inline ModelVariant matched_variant(VariantTag tag, const PlantConfig& plant) {
  ModelVariant v;
  v.tag = tag;
  v.controller_mode = plant.controller_mode;
  v.gains = plant.gains;
  v.m_I = plant.m_I;
  return v;
}

inline std::vector<ModelVariant> matched_variants(const PlantConfig& plant) {
  return {matched_variant(VariantTag::M1, plant),
          matched_variant(VariantTag::M2, plant),
          matched_variant(VariantTag::M3, plant),
          matched_variant(VariantTag::M4, plant)};
}

/// Variant tokens: "M1".."M4", optionally with an explicit controller-mode
/// assumption for the sensorless variants, e.g. "M4:SIMPLIFIED".
inline ModelVariant parse_variant_token(std::string_view token,
                                        const PlantConfig& plant) {
  std::string upper(token);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  std::string mode_part;
  const std::size_t colon = upper.find(':');
  std::string tag_part = upper.substr(0, colon);
  if (colon != std::string::npos) mode_part = upper.substr(colon + 1);

  VariantTag tag;
  if (tag_part == "M1") tag = VariantTag::M1;
  else if (tag_part == "M2") tag = VariantTag::M2;
  else if (tag_part == "M3") tag = VariantTag::M3;
  else if (tag_part == "M4") tag = VariantTag::M4;
  else throw ConfigError("unknown model variant: " + std::string(token));

  ModelVariant v = matched_variant(tag, plant);
  if (!mode_part.empty()) {
    if (tag == VariantTag::M1 || tag == VariantTag::M3)
      throw ConfigError("variant " + tag_part + " takes no controller mode");
    if (mode_part == "FULL") v.controller_mode = ControllerMode::Full;
    else if (mode_part == "SIMPLIFIED")
      v.controller_mode = ControllerMode::Simplified;
    else throw ConfigError("unknown controller mode: " + mode_part);
  }
  return v;
}

inline std::string variant_token(const ModelVariant& v) {
  std::string s = to_string(v.tag);
  if (!v.uses_force_input())
    s += v.controller_mode == ControllerMode::Full ? ":FULL" : ":SIMPLIFIED";
  return s;
}

// --- presets -------------------------------------------------------------

/// Reference parameter sets for the four silicone specimens: S2 and S4 are
/// the S1/S3 materials with a stiff inclusion, which shows up as a larger
/// lumped stiffness.
inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"S1-KV",  "S2-KV",  "S3-KV",
                                              "S4-KV",  "S1-DRM", "S2-DRM",
                                              "S3-DRM", "S4-DRM"};
  return names;
}

inline ExperimentConfig make_preset(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  std::replace(upper.begin(), upper.end(), '_', '-');

  ExperimentConfig cfg;
  cfg.name = upper;
  if (upper == "S1-KV") cfg.plant.truth_model = KvParams{2.03, 0.093};
  else if (upper == "S2-KV") cfg.plant.truth_model = KvParams{2.49, 0.118};
  else if (upper == "S3-KV") cfg.plant.truth_model = KvParams{3.53, 0.160};
  else if (upper == "S4-KV") cfg.plant.truth_model = KvParams{4.19, 0.121};
  else if (upper == "S1-DRM") cfg.plant.truth_model = DrmParams{0.742, 0.038};
  else if (upper == "S2-DRM") cfg.plant.truth_model = DrmParams{1.01, 0.052};
  else if (upper == "S3-DRM") cfg.plant.truth_model = DrmParams{1.70, 0.081};
  else if (upper == "S4-DRM") cfg.plant.truth_model = DrmParams{2.18, 0.069};
  else throw ConfigError("unknown preset: " + std::string(name));
  cfg.variants = matched_variants(cfg.plant);
  return cfg;
}

// --- key application ------------------------------------------------------

namespace detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "experiment.name",        "experiment.preset",
      "experiment.duration",    "experiment.checkpoints",
      "experiment.mse_window",  "experiment.variants",
      "experiment.z_tilde",     "plant.m_I",
      "plant.surface_z",        "plant.dt_sim",
      "plant.sample_rate",      "plant.d0",
      "plant.d_dot0",           "plant.controller_mode",
      "plant.truth_model",      "plant.kv.k",
      "plant.kv.c",             "plant.drm.kappa",
      "plant.drm.lambda",       "plant.gains.Lambda33",
      "plant.gains.D33",        "plant.gains.K33",
      "plant.trajectory.z0",    "plant.trajectory.z1",
      "plant.trajectory.z2",    "plant.trajectory.f1",
      "plant.trajectory.f2",    "plant.noise.sigma_vel",
      "plant.noise.sigma_force", "plant.noise.seed",
      "filter.dt",              "filter.r_meas",
      "filter.eps_pen",         "filter.q_diag",
      "filter.p0_diag",         "filter.x0"};
  return keys;
}

inline double get_or(const KeyValues& kv, const std::string& key, double def) {
  return kv.has(key) ? kv.get_double(key) : def;
}

}  // namespace detail

/// Floor on the derived measurement variance: below this the filter trusts
/// the velocity channel so much that its covariance collapses during the
/// initial transient and the parameters freeze early.
inline constexpr double kRMeasFloor = 3e-2;

inline double derived_r_meas(double sigma_vel) {
  return std::max(4.0 * sigma_vel * sigma_vel, kRMeasFloor);
}

/// Build an experiment from key-value settings: defaults (or the preset
/// named by experiment.preset), then explicit keys on top. Unknown keys are
/// rejected. filter.dt and filter.r_meas default to values derived from the
/// plant sample rate and velocity noise.
inline ExperimentConfig experiment_from_keys(const KeyValues& kv) {
  for (const auto& [key, value] : kv.entries())
    if (!detail::known_keys().count(key))
      throw ConfigError("unknown config key: " + key);

  ExperimentConfig cfg;
  if (kv.has("experiment.preset")) cfg = make_preset(kv.raw("experiment.preset"));
  if (kv.has("experiment.name")) cfg.name = kv.raw("experiment.name");

  PlantConfig& p = cfg.plant;
  p.m_I = detail::get_or(kv, "plant.m_I", p.m_I);
  p.surface_z = detail::get_or(kv, "plant.surface_z", p.surface_z);
  p.dt_sim = detail::get_or(kv, "plant.dt_sim", p.dt_sim);
  p.sample_rate = detail::get_or(kv, "plant.sample_rate", p.sample_rate);
  p.d0 = detail::get_or(kv, "plant.d0", p.d0);
  p.d_dot0 = detail::get_or(kv, "plant.d_dot0", p.d_dot0);
  p.gains.Lambda33 = detail::get_or(kv, "plant.gains.Lambda33", p.gains.Lambda33);
  p.gains.D33 = detail::get_or(kv, "plant.gains.D33", p.gains.D33);
  p.gains.K33 = detail::get_or(kv, "plant.gains.K33", p.gains.K33);
  p.trajectory.z0 = detail::get_or(kv, "plant.trajectory.z0", p.trajectory.z0);
  p.trajectory.z1 = detail::get_or(kv, "plant.trajectory.z1", p.trajectory.z1);
  p.trajectory.z2 = detail::get_or(kv, "plant.trajectory.z2", p.trajectory.z2);
  p.trajectory.f1 = detail::get_or(kv, "plant.trajectory.f1", p.trajectory.f1);
  p.trajectory.f2 = detail::get_or(kv, "plant.trajectory.f2", p.trajectory.f2);
  p.noise.sigma_vel = detail::get_or(kv, "plant.noise.sigma_vel", p.noise.sigma_vel);
  p.noise.sigma_force =
      detail::get_or(kv, "plant.noise.sigma_force", p.noise.sigma_force);
  if (kv.has("plant.noise.seed")) p.noise.seed = kv.get_uint("plant.noise.seed");

  if (kv.has("plant.controller_mode")) {
    const std::string& mode = kv.raw("plant.controller_mode");
    if (mode == "FULL") p.controller_mode = ControllerMode::Full;
    else if (mode == "SIMPLIFIED") p.controller_mode = ControllerMode::Simplified;
    else throw ConfigError("plant.controller_mode must be FULL or SIMPLIFIED");
  }

  if (kv.has("plant.truth_model")) {
    const std::string& kind = kv.raw("plant.truth_model");
    if (kind == "KV") {
      const KvParams prev = std::holds_alternative<KvParams>(p.truth_model)
                                ? std::get<KvParams>(p.truth_model)
                                : KvParams{};
      p.truth_model = KvParams{detail::get_or(kv, "plant.kv.k", prev.k),
                               detail::get_or(kv, "plant.kv.c", prev.c)};
    } else if (kind == "DRM") {
      const DrmParams prev = std::holds_alternative<DrmParams>(p.truth_model)
                                 ? std::get<DrmParams>(p.truth_model)
                                 : DrmParams{};
      p.truth_model =
          DrmParams{detail::get_or(kv, "plant.drm.kappa", prev.kappa),
                    detail::get_or(kv, "plant.drm.lambda", prev.lambda)};
    } else {
      throw ConfigError("plant.truth_model must be KV or DRM");
    }
  } else if (kv.has("plant.kv.k") || kv.has("plant.kv.c")) {
    KvParams prev = std::holds_alternative<KvParams>(p.truth_model)
                        ? std::get<KvParams>(p.truth_model)
                        : KvParams{};
    p.truth_model = KvParams{detail::get_or(kv, "plant.kv.k", prev.k),
                             detail::get_or(kv, "plant.kv.c", prev.c)};
  } else if (kv.has("plant.drm.kappa") || kv.has("plant.drm.lambda")) {
    DrmParams prev = std::holds_alternative<DrmParams>(p.truth_model)
                         ? std::get<DrmParams>(p.truth_model)
                         : DrmParams{};
    p.truth_model = DrmParams{detail::get_or(kv, "plant.drm.kappa", prev.kappa),
                              detail::get_or(kv, "plant.drm.lambda", prev.lambda)};
  }

  FilterConfig& f = cfg.filter;
  f.dt = kv.has("filter.dt") ? kv.get_double("filter.dt") : 1.0 / p.sample_rate;
  f.R_meas = kv.has("filter.r_meas") ? kv.get_double("filter.r_meas")
                                     : derived_r_meas(p.noise.sigma_vel);
  f.eps_pen = detail::get_or(kv, "filter.eps_pen", f.eps_pen);
  if (kv.has("filter.q_diag")) {
    const auto q = kv.get_double_list("filter.q_diag");
    if (q.size() != 4) throw ConfigError("filter.q_diag needs 4 entries");
    f.Q = Eigen::Vector4d(q[0], q[1], q[2], q[3]).asDiagonal();
  }
  if (kv.has("filter.p0_diag")) {
    const auto d = kv.get_double_list("filter.p0_diag");
    if (d.size() != 4) throw ConfigError("filter.p0_diag needs 4 entries");
    f.P0 = Eigen::Vector4d(d[0], d[1], d[2], d[3]).asDiagonal();
  }
  if (kv.has("filter.x0")) {
    const auto x = kv.get_double_list("filter.x0");
    if (x.size() != 4) throw ConfigError("filter.x0 needs 4 entries");
    f.x0 = StateVector(x[0], x[1], x[2], x[3]);
  }

  cfg.duration = detail::get_or(kv, "experiment.duration", cfg.duration);
  if (kv.has("experiment.checkpoints"))
    cfg.checkpoints = kv.get_double_list("experiment.checkpoints");
  if (kv.has("experiment.mse_window")) {
    const auto w = kv.get_double_list("experiment.mse_window");
    if (w.size() != 2) throw ConfigError("experiment.mse_window needs 2 entries");
    cfg.mse_window_start = w[0];
    cfg.mse_window_end = w[1];
  }
  if (kv.has("experiment.z_tilde")) {
    const std::string& src = kv.raw("experiment.z_tilde");
    if (src == "trace") cfg.z_tilde_source = ZTildeSource::TraceZee;
    else if (src == "estimated") cfg.z_tilde_source = ZTildeSource::EstimatedZee;
    else throw ConfigError("experiment.z_tilde must be 'trace' or 'estimated'");
  }

  if (kv.has("experiment.variants")) {
    cfg.variants.clear();
    const std::string& tokens = kv.raw("experiment.variants");
    std::size_t start = 0;
    while (start <= tokens.size()) {
      std::size_t comma = tokens.find(',', start);
      if (comma == std::string::npos) comma = tokens.size();
      const auto token =
          KeyValues::trim(std::string_view(tokens).substr(start, comma - start));
      if (!token.empty()) cfg.variants.push_back(parse_variant_token(token, p));
      start = comma + 1;
    }
    if (cfg.variants.empty()) throw ConfigError("experiment.variants is empty");
  } else if (cfg.variants.empty()) {
    cfg.variants = matched_variants(p);
  } else {
    // preset variants were built before overrides; rebuild against the
    // final plant so they stay matched
    std::vector<ModelVariant> rebuilt;
    rebuilt.reserve(cfg.variants.size());
    for (const ModelVariant& v : cfg.variants)
      rebuilt.push_back(matched_variant(v.tag, p));
    cfg.variants = rebuilt;
  }

  return cfg;
}

/// Full echo of a resolved configuration; feeding the result back through
/// experiment_from_keys reproduces the experiment.
inline KeyValues keys_from_experiment(const ExperimentConfig& cfg) {
  KeyValues kv;
  const auto put = [&kv](const std::string& key, double v) {
    kv.set(key, format_double(v));
  };
  kv.set("experiment.name", cfg.name);
  put("experiment.duration", cfg.duration);
  {
    std::string list;
    for (std::size_t i = 0; i < cfg.checkpoints.size(); ++i) {
      if (i) list += ',';
      list += format_double(cfg.checkpoints[i]);
    }
    kv.set("experiment.checkpoints", list);
    kv.set("experiment.mse_window", format_double(cfg.mse_window_start) + "," +
                                        format_double(cfg.mse_window_end));
  }
  kv.set("experiment.z_tilde",
         cfg.z_tilde_source == ZTildeSource::TraceZee ? "trace" : "estimated");
  {
    std::string list;
    for (std::size_t i = 0; i < cfg.variants.size(); ++i) {
      if (i) list += ',';
      list += variant_token(cfg.variants[i]);
    }
    kv.set("experiment.variants", list);
  }

  const PlantConfig& p = cfg.plant;
  put("plant.m_I", p.m_I);
  put("plant.surface_z", p.surface_z);
  put("plant.dt_sim", p.dt_sim);
  put("plant.sample_rate", p.sample_rate);
  put("plant.d0", p.d0);
  put("plant.d_dot0", p.d_dot0);
  kv.set("plant.controller_mode",
         p.controller_mode == ControllerMode::Full ? "FULL" : "SIMPLIFIED");
  if (std::holds_alternative<KvParams>(p.truth_model)) {
    const auto& kvp = std::get<KvParams>(p.truth_model);
    kv.set("plant.truth_model", "KV");
    put("plant.kv.k", kvp.k);
    put("plant.kv.c", kvp.c);
  } else {
    const auto& drm = std::get<DrmParams>(p.truth_model);
    kv.set("plant.truth_model", "DRM");
    put("plant.drm.kappa", drm.kappa);
    put("plant.drm.lambda", drm.lambda);
  }
  put("plant.gains.Lambda33", p.gains.Lambda33);
  put("plant.gains.D33", p.gains.D33);
  put("plant.gains.K33", p.gains.K33);
  put("plant.trajectory.z0", p.trajectory.z0);
  put("plant.trajectory.z1", p.trajectory.z1);
  put("plant.trajectory.z2", p.trajectory.z2);
  put("plant.trajectory.f1", p.trajectory.f1);
  put("plant.trajectory.f2", p.trajectory.f2);
  put("plant.noise.sigma_vel", p.noise.sigma_vel);
  put("plant.noise.sigma_force", p.noise.sigma_force);
  kv.set("plant.noise.seed", std::to_string(p.noise.seed));

  const FilterConfig& f = cfg.filter;
  put("filter.dt", f.dt);
  put("filter.r_meas", f.R_meas);
  put("filter.eps_pen", f.eps_pen);
  kv.set("filter.q_diag", format_double(f.Q(0, 0)) + "," +
                              format_double(f.Q(1, 1)) + "," +
                              format_double(f.Q(2, 2)) + "," +
                              format_double(f.Q(3, 3)));
  kv.set("filter.p0_diag", format_double(f.P0(0, 0)) + "," +
                               format_double(f.P0(1, 1)) + "," +
                               format_double(f.P0(2, 2)) + "," +
                               format_double(f.P0(3, 3)));
  kv.set("filter.x0", format_double(f.x0(0)) + "," + format_double(f.x0(1)) +
                          "," + format_double(f.x0(2)) + "," +
                          format_double(f.x0(3)));
  return kv;
}

}  // namespace palp
