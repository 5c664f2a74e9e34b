#include "app.hpp"

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "detcal/calibrator.hpp"
#include "detcal/error.hpp"
#include "detcal/evaluation.hpp"
#include "detcal/io.hpp"
#include "detcal/synth.hpp"
#include "detcal/version.hpp"
#include "pipeline.hpp"

namespace detcal::cli {

namespace {

using nlohmann::json;

struct Options {
  std::string spec, input, detections, ground_truth, masks, model, posterior, out;
  std::string task = "detection";
  std::string features = "confidence";
  std::string method = "lc";
  std::string split = "all";
  std::string axes = "confidence";
  std::vector<int> bins;
  std::vector<int> classes;
  double iou = 0.5;
  double score_threshold = 0.3;
  double clamp_tolerance = 0.0;
  int min_bin_samples = 8;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool uniform_prior = false;
  unsigned threads = 0;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void report_clipping(const ReadStats& stats, const fs::path& path, std::ostream& err) {
  if (stats.clipped_boxes > 0) {
    err << "detcal: clipped " << stats.clipped_boxes << " box(es) to the image frame in "
        << path.string() << '\n';
  }
}

template <class Record>
std::map<int, Dataset> per_class_datasets(const std::vector<Record>& records,
                                          const std::vector<std::size_t>& indices,
                                          const FeatureSet& features) {
  std::map<int, std::vector<std::size_t>> groups;
  for (const std::size_t i : indices) groups[records[i].class_id].push_back(i);
  std::map<int, Dataset> out;
  for (const auto& [cls, idx] : groups) {
    out.emplace(cls, make_dataset(std::span<const Record>(records), features,
                                  std::span<const std::size_t>(idx)));
  }
  return out;
}

void common_config(Manifest& m, const Options& o) {
  m.set("task", o.task);
  m.set("features", o.features);
  m.set("bins", o.bins);
  m.set("min_bin_samples", o.min_bin_samples);
  m.set("split", o.split);
  m.set("seed", o.seed);
  m.set("classes", o.classes);
}

int cmd_synth(const Options& o, std::ostream& err) {
  SynthSpec spec = synth_spec_from_json(read_json_file(o.spec));
  if (o.seed_given) spec.seed = o.seed;
  const SynthOutput data = generate(spec);
  const fs::path out = o.out;
  const fs::path post = o.posterior.empty() ? fs::path(o.out + ".posterior.jsonl") : fs::path(o.posterior);
  write_atomic(out, [&](std::ostream& s) {
    if (data.pixel) {
      write_pixels(s, data.pixels);
    } else {
      write_detections(s, data.detections);
    }
  });
  write_atomic(post, [&](std::ostream& s) { write_posteriors(s, data.posteriors); });

  Manifest m("synth");
  m.set("spec", to_json(spec));
  m.input(o.spec);
  m.output(out);
  m.output(post);
  m.write_for(out);
  err << "detcal: generated " << data.size() << " records\n";
  return kOk;
}

int cmd_match(const Options& o, std::ostream& err) {
  const ReadOptions ro{o.clamp_tolerance};
  ReadStats ds, gs;
  const auto preds = read_detections(o.detections, ro, &ds);
  const auto gts = read_ground_truth(o.ground_truth, ro, &gs);
  report_clipping(ds, o.detections, err);
  report_clipping(gs, o.ground_truth, err);
  MatchConfig cfg;
  cfg.iou_threshold = o.iou;
  cfg.score_threshold = o.score_threshold;
  cfg.validate();
  const auto matched = match_predictions(preds, gts, cfg);
  write_atomic(o.out, [&](std::ostream& s) { write_detections(s, matched); });

  Manifest m("match");
  m.set("iou", o.iou);
  m.set("score_threshold", o.score_threshold);
  m.set("clamp_tolerance", o.clamp_tolerance);
  m.input(o.detections);
  m.input(o.ground_truth);
  m.output(o.out);
  m.write_for(o.out);
  std::size_t hits = 0;
  for (const auto& r : matched) hits += r.matched.value_or(false) ? 1 : 0;
  err << "detcal: kept " << matched.size() << " of " << preds.size() << " predictions, " << hits
      << " matched\n";
  return kOk;
}

int cmd_features(const Options& o, std::ostream& err) {
  const Task task = parse_task(o.task);
  if (task == Task::detection) {
    throw ValidationError("features requires --task instance_seg or semantic_seg");
  }
  const PixelFrame frame = task == Task::instance_seg ? PixelFrame::box : PixelFrame::image;
  const auto entries = read_masks(o.masks);
  std::vector<PixelRecord> pixels;
  for (const auto& e : entries) {
    auto recs = pixel_features(e.pred, e.gt, e.confidences, frame, e.object_id, e.class_id);
    pixels.insert(pixels.end(), recs.begin(), recs.end());
  }
  write_atomic(o.out, [&](std::ostream& s) { write_pixels(s, pixels); });

  Manifest m("features");
  m.set("task", o.task);
  m.input(o.masks);
  m.output(o.out);
  m.write_for(o.out);
  err << "detcal: extracted " << pixels.size() << " pixel records from " << entries.size()
      << " masks\n";
  return kOk;
}

int cmd_measure(const Options& o, std::ostream& out, std::ostream& err) {
  const Task task = parse_task(o.task);
  ReadStats stats;
  const Records records = load_records(o.input, task, ReadOptions{o.clamp_tolerance}, &stats);
  report_clipping(stats, o.input, err);
  const auto indices = select_indices(records, parse_split(o.split), o.seed,
                                      std::set<int>(o.classes.begin(), o.classes.end()));
  EvaluationConfig cfg;
  cfg.features = FeatureSet::parse(o.features);
  cfg.bins = o.bins;
  cfg.min_samples_per_bin = o.min_bin_samples;
  cfg.task = task;

  std::optional<std::vector<double>> posteriors;
  if (!o.posterior.empty()) posteriors = read_posteriors(o.posterior, record_count(records));

  const Report report = std::visit(
      [&](const auto& recs) {
        const auto per_class = per_class_datasets(recs, indices, cfg.features);
        if (!posteriors) return evaluate(per_class, cfg);
        std::map<int, std::vector<double>> post;
        for (const std::size_t i : indices) post[recs[i].class_id].push_back((*posteriors)[i]);
        return evaluate(per_class, cfg, &post);
      },
      records);
  for (const auto& [cls, cr] : report.classes) {
    if (cr.d_ece.degenerate) {
      err << "detcal: warning: class " << cls << " has no bin with at least " << o.min_bin_samples
          << " samples; D-ECE reported as 0\n";
    }
  }
  const std::string text = report.to_json().dump(2) + "\n";
  if (o.out.empty()) {
    out << text;
    return kOk;
  }
  write_atomic(o.out, [&](std::ostream& s) { s << text; });
  Manifest m("measure");
  common_config(m, o);
  m.input(o.input);
  if (!o.posterior.empty()) m.input(o.posterior);
  m.output(o.out);
  m.write_for(o.out);
  return kOk;
}

int cmd_fit(const Options& o, std::ostream& err) {
  const Task task = parse_task(o.task);
  ReadStats stats;
  const Records records = load_records(o.input, task, ReadOptions{o.clamp_tolerance}, &stats);
  report_clipping(stats, o.input, err);
  const auto indices = select_indices(records, parse_split(o.split), o.seed,
                                      std::set<int>(o.classes.begin(), o.classes.end()));
  CalibratorOptions opts;
  opts.method = parse_method(o.method);
  opts.features = FeatureSet::parse(o.features);
  opts.bins = o.bins;
  opts.task = task;
  opts.scaling.uniform_prior = o.uniform_prior;
  opts.threads = o.threads;

  const CalibratorSet set = std::visit(
      [&](const auto& recs) { return CalibratorSet::fit(per_class_datasets(recs, indices, opts.features), opts); },
      records);
  for (const auto& [cls, model] : set.models()) {
    if (std::holds_alternative<IdentityModel>(model)) {
      err << "detcal: warning: class " << cls << " has too few samples; using identity\n";
    } else if (!(features_of(model) == opts.features)) {
      err << "detcal: warning: class " << cls << " fell back to a confidence-only model\n";
    }
  }
  const std::string text = set.to_json().dump(2) + "\n";
  write_atomic(o.out, [&](std::ostream& s) { s << text; });
  Manifest m("fit");
  common_config(m, o);
  m.set("method", o.method);
  m.set("uniform_prior", o.uniform_prior);
  m.input(o.input);
  m.output(o.out);
  m.write_for(o.out);
  return kOk;
}

int cmd_apply(const Options& o, std::ostream& err) {
  const Task task = parse_task(o.task);
  const CalibratorSet set = CalibratorSet::from_json(read_json_file(o.model));
  ReadStats stats;
  const Records records = load_records(o.input, task, ReadOptions{o.clamp_tolerance}, &stats);
  report_clipping(stats, o.input, err);
  const Records calibrated = std::visit(
      [&](const auto& recs) -> Records { return set.apply(std::span(recs)); }, records);
  write_atomic(o.out, [&](std::ostream& s) { write_records(s, calibrated); });
  Manifest m("apply");
  m.set("task", o.task);
  m.input(o.model);
  m.input(o.input);
  m.output(o.out);
  m.write_for(o.out);
  return kOk;
}

int cmd_reliability(const Options& o, std::ostream& err) {
  const Task task = parse_task(o.task);
  ReadStats stats;
  const Records records = load_records(o.input, task, ReadOptions{o.clamp_tolerance}, &stats);
  report_clipping(stats, o.input, err);
  const auto indices = select_indices(records, parse_split(o.split), o.seed,
                                      std::set<int>(o.classes.begin(), o.classes.end()));
  EvaluationConfig cfg;
  cfg.features = FeatureSet::parse(o.features);
  cfg.bins = o.bins;
  cfg.min_samples_per_bin = o.min_bin_samples;
  cfg.task = task;
  const MeasureConfig mc = cfg.measure_config();

  const Dataset ds = std::visit(
      [&](const auto& recs) {
        using Record = typename std::decay_t<decltype(recs)>::value_type;
        return make_dataset(std::span<const Record>(recs), cfg.features,
                            std::span<const std::size_t>(indices));
      },
      records);
  std::vector<Feature> axes;
  std::stringstream axis_list(o.axes);
  for (std::string name; std::getline(axis_list, name, ',');) axes.push_back(parse_feature(name));
  const BinStats bin_stats = accumulate(ds, mc.scheme);
  const ReliabilityTable table = reliability_export(bin_stats, mc, axes);

  fs::path sidecar = o.out;
  sidecar += ".json";
  write_atomic(o.out, [&](std::ostream& s) { table.write_csv(s); });
  const auto meta = reliability_metadata(table, bin_stats, mc);
  write_atomic(sidecar, [&](std::ostream& s) { s << meta.dump(2) << '\n'; });
  Manifest m("reliability");
  common_config(m, o);
  m.set("axes", o.axes);
  m.input(o.input);
  m.output(o.out);
  m.output(sidecar);
  m.write_for(o.out);
  return kOk;
}

void add_selection(CLI::App* cmd, Options& o) {
  cmd->add_option("--task", o.task, "detection, instance_seg or semantic_seg")->capture_default_str();
  cmd->add_option("--features", o.features, "comma-separated features, confidence first")
      ->capture_default_str();
  cmd->add_option("--bins", o.bins, "bins per dimension (one value is broadcast)")->delimiter(',');
  cmd->add_option("--split", o.split, "all, fit or holdout (seeded 50/50 split by image/object)")
      ->capture_default_str();
  cmd->add_option("--class", o.classes, "restrict to these class ids")->delimiter(',');
  cmd->add_option("--clamp-tolerance", o.clamp_tolerance, "allowed box overhang before clipping");
}

void add_seed(CLI::App* cmd, Options& o) {
  cmd->add_option_function<std::uint64_t>(
      "--seed",
      [&o](const std::uint64_t& s) {
        o.seed = s;
        o.seed_given = true;
      },
      "random seed");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Detection calibration measurement and correction", "detcal"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate synthetic records with known posteriors");
  synth->add_option("--spec", o.spec, "synthetic spec JSON")->required();
  synth->add_option("--out", o.out, "records JSONL")->required();
  synth->add_option("--posterior", o.posterior, "posterior sidecar (default <out>.posterior.jsonl)");
  add_seed(synth, o);

  auto* match = app.add_subcommand("match", "label predictions against ground truth");
  match->add_option("--detections", o.detections, "predictions JSONL")->required();
  match->add_option("--ground-truth", o.ground_truth, "ground-truth JSONL")->required();
  match->add_option("--iou", o.iou, "IoU threshold")->capture_default_str();
  match->add_option("--score-threshold", o.score_threshold, "minimum confidence")->capture_default_str();
  match->add_option("--clamp-tolerance", o.clamp_tolerance, "allowed box overhang before clipping");
  match->add_option("--out", o.out, "matched detections JSONL")->required();

  auto* features = app.add_subcommand("features", "extract pixel records from masks");
  features->add_option("--masks", o.masks, "masks JSONL")->required();
  features->add_option("--task", o.task, "instance_seg or semantic_seg")->required();
  features->add_option("--out", o.out, "pixel records JSONL")->required();

  auto* measure = app.add_subcommand("measure", "report D-ECE, Brier, NLL and AUPRC");
  measure->add_option("--input", o.input, "records JSONL")->required();
  add_selection(measure, o);
  measure->add_option("--min-bin-samples", o.min_bin_samples, "minimum samples per bin")
      ->capture_default_str();
  measure->add_option("--posterior", o.posterior, "true-posterior sidecar for the oracle D-ECE");
  add_seed(measure, o);
  measure->add_option("--out", o.out, "report JSON (default stdout)");

  auto* fit = app.add_subcommand("fit", "fit per-class calibration models");
  fit->add_option("--input", o.input, "records JSONL")->required();
  add_selection(fit, o);
  fit->add_option("--method", o.method, "hb, lc or bc")->capture_default_str();
  fit->add_flag("--uniform-prior", o.uniform_prior, "fix the prior log odds at 0");
  fit->add_option("--threads", o.threads, "worker threads (0 = hardware)");
  add_seed(fit, o);
  fit->add_option("--out", o.out, "model JSON")->required();

  auto* apply = app.add_subcommand("apply", "rewrite confidences with a fitted model");
  apply->add_option("--input", o.input, "records JSONL")->required();
  apply->add_option("--task", o.task, "detection, instance_seg or semantic_seg")->capture_default_str();
  apply->add_option("--model", o.model, "model JSON")->required();
  apply->add_option("--clamp-tolerance", o.clamp_tolerance, "allowed box overhang before clipping");
  apply->add_option("--out", o.out, "calibrated records JSONL")->required();

  auto* reliability = app.add_subcommand("reliability", "export reliability-diagram data");
  reliability->add_option("--input", o.input, "records JSONL")->required();
  add_selection(reliability, o);
  reliability->add_option("--min-bin-samples", o.min_bin_samples, "minimum samples per bin")
      ->capture_default_str();
  reliability->add_option("--axes", o.axes, "one or two features to marginalize onto")
      ->capture_default_str();
  add_seed(reliability, o);
  reliability->add_option("--out", o.out, "CSV path (metadata at <out>.json)")->required();

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.push_back("detcal");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kParseError;
  }

  try {
    if (*synth) return cmd_synth(o, err);
    if (*match) return cmd_match(o, err);
    if (*features) return cmd_features(o, err);
    if (*measure) return cmd_measure(o, out, err);
    if (*fit) return cmd_fit(o, err);
    if (*apply) return cmd_apply(o, err);
    if (*reliability) return cmd_reliability(o, err);
  } catch (const ParseError& e) {
    err << "detcal: parse error: " << e.what() << '\n';
    return kParseError;
  } catch (const ValidationError& e) {
    err << "detcal: validation error: " << e.what() << '\n';
    return kValidationError;
  } catch (const FitError& e) {
    err << "detcal: fit error: " << e.what() << '\n';
    return kFitError;
  } catch (const std::exception& e) {
    err << "detcal: error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace detcal::cli
