#include "detcal/evaluation.hpp"

#include <nlohmann/json.hpp>

#include "detcal/error.hpp"
#include "detcal/metrics.hpp"
#include "detcal/synth.hpp"

namespace detcal {

MeasureConfig EvaluationConfig::measure_config() const {
  std::vector<int> b = bins.empty() ? default_bins(task, features) : bins;
  if (b.size() == 1 && features.size() > 1) b.assign(features.size(), b.front());
  MeasureConfig cfg{BinningScheme(features, b), min_samples_per_bin, task};
  cfg.validate();
  return cfg;
}

Report evaluate(const std::map<int, Dataset>& per_class, const EvaluationConfig& cfg,
                const std::map<int, std::vector<double>>* posteriors) {
  const MeasureConfig mc = cfg.measure_config();
  Report report;
  std::map<int, std::pair<double, std::size_t>> w_dece, w_brier, w_nll, w_auprc, w_oracle;
  for (const auto& [cls, ds] : per_class) {
    if (ds.empty()) continue;
    ClassReport cr;
    cr.n = ds.size();
    cr.d_ece = dece(accumulate(ds, mc.scheme), mc);
    const auto scored = scored_outcomes(ds);
    cr.brier = brier(scored);
    cr.nll = nll(scored, cfg.nll_clip_eps);
    if (ds.positives() > 0) cr.auprc = auprc(scored);
    if (posteriors) {
      const auto it = posteriors->find(cls);
      if (it == posteriors->end()) throw ValidationError("no posteriors for class " + std::to_string(cls));
      cr.oracle_d_ece = true_dece(ds, it->second, mc).value;
    }
    w_dece[cls] = {cr.d_ece.value, cr.n};
    w_brier[cls] = {cr.brier, cr.n};
    w_nll[cls] = {cr.nll, cr.n};
    if (cr.auprc) w_auprc[cls] = {*cr.auprc, cr.n};
    if (cr.oracle_d_ece) w_oracle[cls] = {*cr.oracle_d_ece, cr.n};
    report.n += cr.n;
    report.classes.emplace(cls, cr);
  }
  if (report.classes.empty()) throw ValidationError("no samples to evaluate");
  report.d_ece = weighted_classwise(w_dece);
  report.brier = weighted_classwise(w_brier);
  report.nll = weighted_classwise(w_nll);
  if (!w_auprc.empty()) report.auprc = weighted_classwise(w_auprc);
  if (!w_oracle.empty()) report.oracle_d_ece = weighted_classwise(w_oracle);
  return report;
}

nlohmann::json Report::to_json() const {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [cls, cr] : classes) {
    nlohmann::json c{{"d_ece", cr.d_ece.value},
                     {"d_ece_degenerate", cr.d_ece.degenerate},
                     {"kept_samples", cr.d_ece.kept_samples},
                     {"brier", cr.brier},
                     {"nll", cr.nll},
                     {"auprc", opt(cr.auprc)},
                     {"n", cr.n}};
    if (cr.oracle_d_ece) c["oracle_d_ece"] = *cr.oracle_d_ece;
    out[std::to_string(cls)] = std::move(c);
  }
  nlohmann::json w{{"d_ece", d_ece}, {"brier", brier}, {"nll", nll}, {"auprc", opt(auprc)}, {"n", n}};
  if (oracle_d_ece) w["oracle_d_ece"] = *oracle_d_ece;
  out["weighted"] = std::move(w);
  return out;
}

}  // namespace detcal
