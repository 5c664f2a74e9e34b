#include "detcal/calibrator.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include <nlohmann/json.hpp>

#include "detcal/binning.hpp"
#include "detcal/error.hpp"

namespace detcal {

Method parse_method(std::string_view name) {
  if (name == "hb" || name == "histogram_binning") return Method::histogram_binning;
  if (name == "lc" || name == "logistic") return Method::logistic;
  if (name == "bc" || name == "beta") return Method::beta;
  throw ValidationError("unknown calibration method '" + std::string(name) + "'");
}

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::histogram_binning: return "hb";
    case Method::logistic: return "lc";
    case Method::beta: return "bc";
  }
  return "lc";
}

int class_id_of(const CalibrationModel& model) {
  return std::visit(
      [](const auto& m) -> int {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IdentityModel> || std::is_same_v<T, HistogramBinningModel>) {
          return m.class_id;
        } else {
          return m.class_id();
        }
      },
      model);
}

FeatureSet features_of(const CalibrationModel& model) {
  return std::visit(
      [](const auto& m) -> FeatureSet {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IdentityModel>) {
          return FeatureSet{};
        } else {
          return m.features();
        }
      },
      model);
}

double calibrate(const CalibrationModel& model, std::span<const double> row) {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IdentityModel>) {
          return row.front();
        } else {
          return m.apply(row);
        }
      },
      model);
}

nlohmann::json to_json(const CalibrationModel& model) {
  return std::visit(
      [](const auto& m) -> nlohmann::json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IdentityModel>) {
          return {{"type", "identity"}, {"class_id", m.class_id}};
        } else {
          return to_json(m);
        }
      },
      model);
}

CalibrationModel model_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "identity") return IdentityModel{j.at("class_id").get<int>()};
  if (type == "histogram_binning") return histogram_binning_from_json(j);
  if (type == "logistic") return logistic_from_json(j);
  if (type == "beta") return beta_from_json(j);
  throw ParseError("unknown model type '" + type + "'");
}

const CalibrationModel* CalibratorSet::find(int class_id) const {
  const auto it = models_.find(class_id);
  return it == models_.end() ? nullptr : &it->second;
}

namespace {

CalibrationModel fit_scaling(const Dataset& ds, const ScalingFitOptions& opts, Method method) {
  if (method == Method::logistic) return fit_logistic(ds, opts);
  return fit_beta(ds, opts);
}

CalibrationModel fit_one(int cls, const Dataset& ds, const CalibratorOptions& opts) {
  if (!(ds.features() == opts.features)) {
    throw ValidationError("class " + std::to_string(cls) + " data has features (" +
                          ds.features().to_csv() + "), expected (" + opts.features.to_csv() + ")");
  }
  if (ds.empty()) return IdentityModel{cls};

  if (opts.method == Method::histogram_binning) {
    std::vector<int> bins = opts.bins;
    if (bins.empty()) bins = default_bins(opts.task, opts.features);
    if (bins.size() == 1 && opts.features.size() > 1) bins.assign(opts.features.size(), bins.front());
    auto model = fit_hb(ds, BinningScheme(opts.features, bins), opts.histogram);
    model.class_id = cls;
    return model;
  }

  const std::size_t n_pos = ds.positives();
  const std::size_t smaller = std::min(n_pos, ds.size() - n_pos);
  std::optional<Dataset> reduced;
  const Dataset* data = &ds;
  if (smaller < opts.min_class_samples) {
    if (smaller < opts.min_fallback_samples) return IdentityModel{cls};
    if (!ds.features().confidence_only()) {
      reduced = ds.project(FeatureSet{});
      data = &*reduced;
    }
  }
  try {
    CalibrationModel model = fit_scaling(*data, opts.scaling, opts.method);
    std::visit(
        [cls](auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, LogisticModel> || std::is_same_v<T, BetaModel>) {
            m.set_class_id(cls);
          }
        },
        model);
    return model;
  } catch (const FitError& e) {
    throw FitError("class " + std::to_string(cls) + ": " + e.what());
  }
}

}  // namespace

CalibratorSet CalibratorSet::fit(const std::map<int, Dataset>& per_class,
                                 const CalibratorOptions& opts) {
  std::size_t total = 0;
  for (const auto& [cls, ds] : per_class) total += ds.size();
  if (total == 0) throw FitError("no samples to fit");
  CalibratorSet set(opts.method, opts.features);
  std::vector<std::pair<int, const Dataset*>> jobs;
  for (const auto& [cls, ds] : per_class) jobs.emplace_back(cls, &ds);

  std::vector<std::optional<CalibrationModel>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i].emplace(fit_one(jobs[i].first, *jobs[i].second, opts));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned n_threads = opts.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opts.threads;
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  // Report the first failure in class order, independent of scheduling.
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    set.models_.emplace(jobs[i].first, std::move(*results[i]));
  }
  return set;
}

nlohmann::json CalibratorSet::to_json() const {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& [cls, m] : models_) models.push_back(detcal::to_json(m));
  return {{"method", std::string(to_string(method_))},
          {"feature_names", features_.names()},
          {"models", std::move(models)}};
}

CalibratorSet CalibratorSet::from_json(const nlohmann::json& j) {
  try {
    const auto names = j.at("feature_names").get<std::vector<std::string>>();
    CalibratorSet set(parse_method(j.at("method").get<std::string>()), FeatureSet::from_names(names));
    for (const auto& m : j.at("models")) {
      auto model = model_from_json(m);
      const int cls = class_id_of(model);
      if (set.models_.count(cls)) {
        throw ValidationError("duplicate model for class " + std::to_string(cls));
      }
      set.models_.emplace(cls, std::move(model));
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace detcal
