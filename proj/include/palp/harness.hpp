#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "palp/config.hpp"
#include "palp/errors.hpp"
#include "palp/estimator.hpp"
#include "palp/least_squares.hpp"
#include "palp/plant.hpp"
#include "palp/trace_io.hpp"

// Experiment driver: simulate one specimen, run every configured filter
// variant over the same trace, fit the offline references, and collect the
// checkpoint estimates, force-reconstruction errors, and (for studies over
// several specimens) stiffness-comparison verdicts.

namespace palp {

enum class StiffnessVerdict {
  DistinctAStiffer,
  DistinctBStiffer,
  Indistinguishable
};

inline const char* to_string(StiffnessVerdict v) {
  switch (v) {
    case StiffnessVerdict::DistinctAStiffer: return "DISTINCT_A_STIFFER";
    case StiffnessVerdict::DistinctBStiffer: return "DISTINCT_B_STIFFER";
    case StiffnessVerdict::Indistinguishable: return "INDISTINGUISHABLE";
  }
  return "?";
}

inline StiffnessVerdict parse_verdict(std::string_view s) {
  if (s == "DISTINCT_A_STIFFER") return StiffnessVerdict::DistinctAStiffer;
  if (s == "DISTINCT_B_STIFFER") return StiffnessVerdict::DistinctBStiffer;
  if (s == "INDISTINGUISHABLE") return StiffnessVerdict::Indistinguishable;
  throw ConfigError("unknown verdict: " + std::string(s));
}

/// Two stiffness estimates are distinct when their gap exceeds
/// rel_threshold relative to the smaller one.
inline StiffnessVerdict compare_stiffness(double est_a, double est_b,
                                          double rel_threshold = 0.15) {
  if (!(est_a >= 0.0) || !(est_b >= 0.0))
    throw std::invalid_argument("compare_stiffness: estimates must be >= 0");
  if (est_a == 0.0 && est_b == 0.0)
    return StiffnessVerdict::Indistinguishable;
  const double lo = std::min(est_a, est_b);
  const double gap = std::abs(est_a - est_b);
  if (lo == 0.0 || gap / lo > rel_threshold)
    return est_a > est_b ? StiffnessVerdict::DistinctAStiffer
                         : StiffnessVerdict::DistinctBStiffer;
  return StiffnessVerdict::Indistinguishable;
}

struct CheckpointEstimate {
  double t;
  double x3;
  double x4;
};

struct VariantResult {
  ModelVariant variant;
  std::vector<CheckpointEstimate> checkpoints;
  double force_mse = 0;  // reconstructed vs true force over the window [N^2]
};

struct ExperimentReport {
  std::string name;
  std::uint64_t seed = 0;
  ExperimentConfig config;
  FitResult ref_kv;
  FitResult ref_drm;
  std::vector<VariantResult> variants;
};

/// Mean squared error between a reconstructed force series and the trace's
/// true contact force over [t_a, t_b]. The series must be index-aligned
/// with the trace (as produced by run_filter on it).
inline double force_mse_vs_truth(const std::vector<ForceEstimate>& f_hat,
                                 const std::vector<TraceSample>& trace,
                                 double t_a, double t_b) {
  if (f_hat.size() != trace.size())
    throw Error("force_mse_vs_truth: series length mismatch");
  double sse = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].t < t_a || trace[i].t > t_b) continue;
    const double r = f_hat[i].force - trace[i].F_contact_true;
    sse += r * r;
    ++n;
  }
  if (n == 0) throw Error("force_mse_vs_truth: no samples in window");
  return sse / static_cast<double>(n);
}

/// Filter configuration a variant actually runs with: a noisy measured
/// force feeds straight into the velocity update, so its variance is
/// propagated into that state's process noise for the force-driven models.
inline FilterConfig effective_filter(const ExperimentConfig& cfg,
                                     const ModelVariant& variant) {
  FilterConfig filter = cfg.filter;
  if (variant.uses_force_input()) {
    const double w = filter.dt * cfg.plant.noise.sigma_force / variant.m_I;
    filter.Q(1, 1) += w * w;
  }
  return filter;
}

namespace detail {

inline std::size_t checkpoint_index(const std::vector<TimedBelief>& beliefs,
                                    double t, double dt) {
  if (beliefs.empty()) throw ConfigError("no filter output to checkpoint");
  std::size_t best = 0;
  double best_gap = std::abs(beliefs[0].t - t);
  for (std::size_t i = 1; i < beliefs.size(); ++i) {
    const double gap = std::abs(beliefs[i].t - t);
    if (gap < best_gap) {
      best = i;
      best_gap = gap;
    }
  }
  if (best_gap > 0.5 * dt + 1e-12)
    throw ConfigError("checkpoint " + std::to_string(t) +
                      " s has no sample within half a filter step");
  return best;
}

}  // namespace detail

/// Simulate once and run every configured variant over the same trace.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.variants.empty())
    throw ConfigError("experiment has no model variants");
  for (double cp : cfg.checkpoints)
    if (!(cp > 0.0) || cp > cfg.duration)
      throw ConfigError("checkpoint " + std::to_string(cp) +
                        " s outside the simulated duration");
  if (!(cfg.mse_window_start < cfg.mse_window_end) ||
      cfg.mse_window_end > cfg.duration)
    throw ConfigError("mse window outside the simulated duration");

  const std::vector<TraceSample> trace = simulate(cfg.plant, cfg.duration);

  ExperimentReport report;
  report.name = cfg.name;
  report.seed = cfg.plant.noise.seed;
  report.config = cfg;
  report.ref_kv = fit_kv_ls(trace);
  report.ref_drm = fit_drm_ls(trace);

  RunOptions opts{cfg.z_tilde_source, cfg.plant.surface_z};
  for (const ModelVariant& variant : cfg.variants) {
    const FilterConfig filter = effective_filter(cfg, variant);
    const auto beliefs = run_filter(trace, variant, filter, opts);
    const auto f_hat = reconstruct_force(beliefs, variant);

    VariantResult result;
    result.variant = variant;
    result.force_mse = force_mse_vs_truth(f_hat, trace, cfg.mse_window_start,
                                          cfg.mse_window_end);
    for (double cp : cfg.checkpoints) {
      const std::size_t i = detail::checkpoint_index(beliefs, cp, cfg.filter.dt);
      result.checkpoints.push_back(
          {cp, beliefs[i].belief.x_hat(2), beliefs[i].belief.x_hat(3)});
    }
    report.variants.push_back(std::move(result));
  }
  return report;
}

struct DetectionRow {
  std::string specimen_a;
  std::string specimen_b;
  std::string variant_token;
  double t = 0;  // checkpoint compared
  double x3_a = 0;
  double x3_b = 0;
  StiffnessVerdict verdict = StiffnessVerdict::Indistinguishable;
};

struct Study {
  std::vector<ExperimentConfig> specimens;
  // pairs of specimen indices to compare; empty means consecutive pairs
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double detection_threshold = 0.15;
};

struct StudyReport {
  std::string timestamp;
  double detection_threshold = 0.15;
  std::vector<ExperimentReport> specimens;
  std::vector<DetectionRow> detections;
};

inline std::string utc_timestamp_now() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Run each specimen and compare stiffness estimates across the requested
/// pairs (by default adjacent specimens: 0 vs 1, 2 vs 3, ...). Comparison
/// uses the last checkpoint of each shared variant.
inline StudyReport run_study(const Study& study) {
  if (study.specimens.empty()) throw ConfigError("study has no specimens");
  StudyReport report;
  report.timestamp = utc_timestamp_now();
  report.detection_threshold = study.detection_threshold;
  for (const ExperimentConfig& cfg : study.specimens)
    report.specimens.push_back(run_experiment(cfg));

  std::vector<std::pair<std::size_t, std::size_t>> pairs = study.pairs;
  if (pairs.empty())
    for (std::size_t i = 0; i + 1 < report.specimens.size(); i += 2)
      pairs.emplace_back(i, i + 1);

  for (const auto& [ia, ib] : pairs) {
    if (ia >= report.specimens.size() || ib >= report.specimens.size())
      throw ConfigError("detection pair index out of range");
    const ExperimentReport& a = report.specimens[ia];
    const ExperimentReport& b = report.specimens[ib];
    for (const VariantResult& va : a.variants) {
      const std::string token = variant_token(va.variant);
      for (const VariantResult& vb : b.variants) {
        if (variant_token(vb.variant) != token) continue;
        if (va.checkpoints.empty() || vb.checkpoints.empty()) continue;
        const CheckpointEstimate& ca = va.checkpoints.back();
        const CheckpointEstimate& cb = vb.checkpoints.back();
        if (std::abs(ca.t - cb.t) > 1e-9)
          throw ConfigError("detection pair compares different checkpoints");
        DetectionRow row;
        row.specimen_a = a.name;
        row.specimen_b = b.name;
        row.variant_token = token;
        row.t = ca.t;
        row.x3_a = ca.x3;
        row.x3_b = cb.x3;
        row.verdict =
            compare_stiffness(ca.x3, cb.x3, study.detection_threshold);
        report.detections.push_back(std::move(row));
        break;
      }
    }
  }
  return report;
}

// --- report serialization --------------------------------------------------

/// Machine-readable report: the same `key = value` format the config parser
/// reads, one deterministic line order, timestamp on the first line.
inline void write_machine_report(std::ostream& os, const StudyReport& report) {
  const auto put = [&os](const std::string& key, const std::string& value) {
    os << key << " = " << value << '\n';
  };
  put("timestamp", report.timestamp);
  put("study.detection_threshold", format_double(report.detection_threshold));
  put("study.n_specimens", std::to_string(report.specimens.size()));
  for (std::size_t i = 0; i < report.specimens.size(); ++i) {
    const ExperimentReport& r = report.specimens[i];
    const std::string prefix = "specimen." + std::to_string(i) + ".";
    put(prefix + "name", r.name);
    put(prefix + "seed", std::to_string(r.seed));
    const KeyValues echo = keys_from_experiment(r.config);
    for (const auto& [key, value] : echo.entries())
      put(prefix + "config." + key, value);

    const auto& kv = std::get<KvParams>(r.ref_kv.params);
    put(prefix + "reference.kv.k", format_double(kv.k));
    put(prefix + "reference.kv.c", format_double(kv.c));
    put(prefix + "reference.kv.residual_mse",
        format_double(r.ref_kv.residual_mse));
    put(prefix + "reference.kv.n_samples", std::to_string(r.ref_kv.n_samples));
    const auto& drm = std::get<DrmParams>(r.ref_drm.params);
    put(prefix + "reference.drm.kappa", format_double(drm.kappa));
    put(prefix + "reference.drm.lambda", format_double(drm.lambda));
    put(prefix + "reference.drm.residual_mse",
        format_double(r.ref_drm.residual_mse));
    put(prefix + "reference.drm.n_samples",
        std::to_string(r.ref_drm.n_samples));

    put(prefix + "n_variants", std::to_string(r.variants.size()));
    for (std::size_t v = 0; v < r.variants.size(); ++v) {
      const VariantResult& vr = r.variants[v];
      const std::string vp = prefix + "variant." + std::to_string(v) + ".";
      put(vp + "token", variant_token(vr.variant));
      put(vp + "force_mse", format_double(vr.force_mse));
      put(vp + "n_checkpoints", std::to_string(vr.checkpoints.size()));
      for (std::size_t c = 0; c < vr.checkpoints.size(); ++c) {
        const std::string cp = vp + "checkpoint." + std::to_string(c) + ".";
        put(cp + "t", format_double(vr.checkpoints[c].t));
        put(cp + "x3", format_double(vr.checkpoints[c].x3));
        put(cp + "x4", format_double(vr.checkpoints[c].x4));
      }
    }
  }
  put("study.n_detections", std::to_string(report.detections.size()));
  for (std::size_t i = 0; i < report.detections.size(); ++i) {
    const DetectionRow& d = report.detections[i];
    const std::string prefix = "detection." + std::to_string(i) + ".";
    put(prefix + "specimen_a", d.specimen_a);
    put(prefix + "specimen_b", d.specimen_b);
    put(prefix + "variant", d.variant_token);
    put(prefix + "t", format_double(d.t));
    put(prefix + "x3_a", format_double(d.x3_a));
    put(prefix + "x3_b", format_double(d.x3_b));
    put(prefix + "verdict", to_string(d.verdict));
  }
}

/// Rebuild a study report from the machine format; enough comes back to
/// re-render the human table and to re-run the experiments (each specimen
/// carries its full config echo, seed included).
inline StudyReport read_machine_report(std::istream& is) {
  const KeyValues kv = KeyValues::parse(is);
  StudyReport report;
  report.timestamp = kv.raw("timestamp");
  report.detection_threshold = kv.get_double("study.detection_threshold");
  const std::size_t n_specimens =
      static_cast<std::size_t>(kv.get_uint("study.n_specimens"));
  for (std::size_t i = 0; i < n_specimens; ++i) {
    const std::string prefix = "specimen." + std::to_string(i) + ".";
    ExperimentReport r;
    r.name = kv.raw(prefix + "name");
    r.seed = kv.get_uint(prefix + "seed");

    KeyValues config_keys;
    const std::string config_prefix = prefix + "config.";
    for (const auto& [key, value] : kv.entries())
      if (key.rfind(config_prefix, 0) == 0)
        config_keys.set(key.substr(config_prefix.size()), value);
    r.config = experiment_from_keys(config_keys);

    r.ref_kv.params = KvParams{kv.get_double(prefix + "reference.kv.k"),
                               kv.get_double(prefix + "reference.kv.c")};
    r.ref_kv.residual_mse = kv.get_double(prefix + "reference.kv.residual_mse");
    r.ref_kv.n_samples =
        static_cast<std::size_t>(kv.get_uint(prefix + "reference.kv.n_samples"));
    r.ref_drm.params = DrmParams{kv.get_double(prefix + "reference.drm.kappa"),
                                 kv.get_double(prefix + "reference.drm.lambda")};
    r.ref_drm.residual_mse =
        kv.get_double(prefix + "reference.drm.residual_mse");
    r.ref_drm.n_samples = static_cast<std::size_t>(
        kv.get_uint(prefix + "reference.drm.n_samples"));

    const std::size_t n_variants =
        static_cast<std::size_t>(kv.get_uint(prefix + "n_variants"));
    for (std::size_t v = 0; v < n_variants; ++v) {
      const std::string vp = prefix + "variant." + std::to_string(v) + ".";
      VariantResult vr;
      vr.variant = parse_variant_token(kv.raw(vp + "token"), r.config.plant);
      vr.force_mse = kv.get_double(vp + "force_mse");
      const std::size_t n_cp =
          static_cast<std::size_t>(kv.get_uint(vp + "n_checkpoints"));
      for (std::size_t c = 0; c < n_cp; ++c) {
        const std::string cp = vp + "checkpoint." + std::to_string(c) + ".";
        vr.checkpoints.push_back({kv.get_double(cp + "t"),
                                  kv.get_double(cp + "x3"),
                                  kv.get_double(cp + "x4")});
      }
      r.variants.push_back(std::move(vr));
    }
    report.specimens.push_back(std::move(r));
  }
  const std::size_t n_detections =
      static_cast<std::size_t>(kv.get_uint("study.n_detections"));
  for (std::size_t i = 0; i < n_detections; ++i) {
    const std::string prefix = "detection." + std::to_string(i) + ".";
    DetectionRow d;
    d.specimen_a = kv.raw(prefix + "specimen_a");
    d.specimen_b = kv.raw(prefix + "specimen_b");
    d.variant_token = kv.raw(prefix + "variant");
    d.t = kv.get_double(prefix + "t");
    d.x3_a = kv.get_double(prefix + "x3_a");
    d.x3_b = kv.get_double(prefix + "x3_b");
    d.verdict = parse_verdict(kv.raw(prefix + "verdict"));
    report.detections.push_back(std::move(d));
  }
  return report;
}

namespace detail {

inline std::string fixed4(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << std::fixed << v;
  return os.str();
}

}  // namespace detail

/// Human-readable table mirroring the estimation-summary layout: one row
/// per variant with the checkpoint estimates next to the LS references.
inline void write_human_report(std::ostream& os, const StudyReport& report) {
  os << "palpation experiment report\n";
  os << "===========================\n";
  for (const ExperimentReport& r : report.specimens) {
    const auto& kv = std::get<KvParams>(r.ref_kv.params);
    const auto& drm = std::get<DrmParams>(r.ref_drm.params);
    os << '\n'
       << "specimen " << r.name << "  (seed " << r.seed << ", duration "
       << format_double(r.config.duration) << " s)\n";
    os << "  LS reference: KV  k = " << detail::fixed4(kv.k)
       << " N/mm, c = " << detail::fixed4(kv.c) << " N*s/mm\n";
    os << "                DRM kappa = " << detail::fixed4(drm.kappa)
       << " N/mm^1.5, lambda = " << detail::fixed4(drm.lambda)
       << " N*s/mm^0.5\n";
    os << "  variant        time [s]   x3_est    x4_est    x3_ref    x4_ref"
          "    force MSE [N^2]\n";
    for (const VariantResult& vr : r.variants) {
      const bool drm_family = vr.variant.is_drm();
      const double x3_ref = drm_family ? drm.kappa : kv.k;
      const double x4_ref = drm_family ? drm.lambda : kv.c;
      for (std::size_t c = 0; c < vr.checkpoints.size(); ++c) {
        const CheckpointEstimate& cp = vr.checkpoints[c];
        os << "  " << std::left << std::setw(15)
           << (c == 0 ? variant_token(vr.variant) : "") << std::right
           << std::setw(8) << format_double(cp.t) << "   " << std::setw(8)
           << detail::fixed4(cp.x3) << "  " << std::setw(8)
           << detail::fixed4(cp.x4) << "  " << std::setw(8)
           << detail::fixed4(x3_ref) << "  " << std::setw(8)
           << detail::fixed4(x4_ref);
        if (c + 1 == vr.checkpoints.size())
          os << "  " << format_double(vr.force_mse);
        os << '\n';
      }
    }
  }
  if (!report.detections.empty()) {
    os << '\n'
       << "stiffness comparison (threshold "
       << format_double(100.0 * report.detection_threshold) << "%)\n";
    for (const DetectionRow& d : report.detections) {
      os << "  " << d.specimen_a << " vs " << d.specimen_b << ", "
         << d.variant_token << " at " << format_double(d.t)
         << " s: x3 " << detail::fixed4(d.x3_a) << " vs "
         << detail::fixed4(d.x3_b) << " -> " << to_string(d.verdict) << '\n';
    }
  }
}

/// Re-run one specimen deterministically and write its trace plus one
/// estimate series per variant, for external plotting. Returns the paths
/// written: <prefix>.<name>.trace.csv and <prefix>.<name>.<variant>.csv.
inline std::vector<std::filesystem::path> emit_series(
    const ExperimentConfig& cfg, const std::string& prefix) {
  std::vector<std::filesystem::path> written;
  const auto trace = simulate(cfg.plant, cfg.duration);
  const std::filesystem::path trace_path =
      prefix + "." + cfg.name + ".trace.csv";
  write_trace(trace_path, trace);
  written.push_back(trace_path);

  RunOptions opts{cfg.z_tilde_source, cfg.plant.surface_z};
  for (const ModelVariant& variant : cfg.variants) {
    const auto beliefs =
        run_filter(trace, variant, effective_filter(cfg, variant), opts);
    const auto f_hat = reconstruct_force(beliefs, variant);
    std::string token = variant_token(variant);
    for (char& c : token)
      if (c == ':') c = '-';
    const std::filesystem::path path =
        prefix + "." + cfg.name + "." + token + ".csv";
    write_estimates(path, beliefs, f_hat);
    written.push_back(path);
  }
  return written;
}

}  // namespace palp
