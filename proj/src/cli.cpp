#include "pheno/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "pheno/checkpoint.hpp"
#include "pheno/cohort.hpp"
#include "pheno/core_data.hpp"
#include "pheno/error.hpp"
#include "pheno/evaluation.hpp"
#include "pheno/features.hpp"
#include "pheno/fusion.hpp"
#include "pheno/pipeline.hpp"
#include "pheno/search.hpp"
#include "pheno/synth.hpp"
#include "pheno/training.hpp"

namespace pheno {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::kIoError, "SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text_file(path)); }

std::string sha256_tree(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw Error(ErrorKind::kMissingFile, fmt::format("{} is not a directory", dir.string()),
                dir.string());
  }
  std::vector<std::string> lines;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    lines.push_back(fmt::format("{} {}\n", e.path().lexically_relative(dir).generic_string(),
                                sha256_file(e.path())));
  }
  std::sort(lines.begin(), lines.end());
  std::string all;
  for (const auto& l : lines) all += l;
  return sha256_hex(all);
}

json stage_record_to_json(const StageRecord& r) {
  return json{{"seed", r.seed},
              {"config", r.config},
              {"inputs", r.inputs},
              {"outputs", r.outputs},
              {"versions",
               {{"pheno", std::string(kVersion)},
                {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION,
                                      EIGEN_MINOR_VERSION)},
                {"fmt", FMT_VERSION},
                {"format", 1}}}};
}

void record_stage(const fs::path& run_dir, const StageRecord& record) {
  const fs::path path = run_dir / "run.json";
  json run = json::object();
  if (fs::exists(path)) {
    try {
      run = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParseError, fmt::format("{}: {}", path.string(), e.what()),
                  path.string());
    }
  }
  run["stages"][record.key] = stage_record_to_json(record);
  write_text_file(path, run.dump(2) + "\n");
}

namespace {

constexpr std::string_view kSections[] = {"synth", "filter", "engineering", "split", "model",
                                          "train", "search", "fusion",      "evaluation"};

// A missing section falls back to the whole document when the document has
// no section keys at all, so a bare stage config also works.
json section(const json& cfg, std::string_view name) {
  const std::string key(name);
  if (cfg.contains(key)) return cfg.at(key);
  for (std::string_view s : kSections) {
    if (cfg.contains(std::string(s))) return json::object();
  }
  json bare = cfg;
  bare.erase("seed");
  return bare;
}

std::string display_path(const fs::path& path, const fs::path& run) {
  const fs::path abs = fs::absolute(path).lexically_normal();
  const fs::path rel = abs.lexically_relative(fs::absolute(run).lexically_normal());
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return path.generic_string();
}

struct Stage {
  fs::path run;
  std::ostream& log;
  StageRecord record;
  std::vector<fs::path> outputs;

  void input(const fs::path& p) {
    record.inputs[display_path(p, run)] = fs::is_directory(p) ? sha256_tree(p) : sha256_file(p);
  }
  void output(const fs::path& p) { outputs.push_back(p); }
  void note(const std::string& msg) const { log << "[pheno] " << record.key << ": " << msg << '\n'; }

  void finish() {
    for (const auto& p : outputs) {
      record.outputs[display_path(p, run)] =
          fs::is_directory(p) ? sha256_tree(p) : sha256_file(p);
    }
    record_stage(run, record);
  }
};

struct Common {
  std::string out;
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  json config = json::object();

  // --seed, then the config's top-level "seed", then `fallback`.
  std::uint64_t resolved_seed(std::uint64_t fallback = 0) const {
    if (seed_given) return seed;
    return config.value("seed", fallback);
  }
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    json j = json::parse(read_text_file(path));
    if (!j.is_object()) throw Error(ErrorKind::kConfigError, "config must be a JSON object", path);
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfigError, fmt::format("{}: {}", path, e.what()), path);
  }
}

void reset_dir(const fs::path& dir) {
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorKind::kIoError, fmt::format("cannot create {}: {}", dir.string(), ec.message()),
                dir.string());
  }
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, fmt::format("{}: {}", path.string(), e.what()),
                path.string());
  }
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

fs::path cohort_manifest_path(const fs::path& run) { return run / "cohort_manifest.json"; }

std::string series_dir_name(bool raw) { return raw ? "raw" : "engineered"; }

std::string model_name(Modality m, bool raw) {
  return std::string(modality_name(m)) + (raw ? "_raw" : "");
}

std::string fusion_name(FusionScheme scheme, std::span<const Modality> subset) {
  std::string s = subset_name(subset);
  std::replace(s.begin(), s.end(), ',', '+');
  return fmt::format("{}_{}", scheme_name(scheme), s);
}

json records_json(std::span<const VideoRecord> records) {
  json a = json::array();
  for (const auto& r : records) a.push_back({{"video_id", r.video_id}, {"replica", r.replica}});
  return a;
}

SplitRecords load_split(const fs::path& run, const Manifest& cohort) {
  const json j = read_json(run / "split.json");
  SplitRecords out;
  auto fill = [&](const char* key, std::vector<VideoRecord>& dst) {
    for (const auto& e : j.at(key)) {
      const std::string id = e.at("video_id").get<std::string>();
      const VideoRecord* r = cohort.find(id);
      if (!r) {
        throw Error(ErrorKind::kMissingFile,
                    fmt::format("split names '{}' but the cohort manifest does not", id), id);
      }
      VideoRecord copy = *r;
      copy.replica = e.value("replica", 0);
      dst.push_back(std::move(copy));
    }
  };
  fill("train", out.train);
  fill("val", out.val);
  fill("test", out.test);
  return out;
}

// Loads one modality's series for each record, reading each video once.
class SeriesCache {
 public:
  SeriesCache(fs::path dir, Modality m) : dir_(std::move(dir)), modality_(m) {}

  std::vector<LabeledSequence> sequences(std::span<const VideoRecord> records) {
    std::vector<LabeledSequence> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back({get(r.video_id), r.label});
    return out;
  }
  fs::path modality_dir() const { return dir_ / std::string(modality_name(modality_)); }

 private:
  const Sequence& get(const std::string& id) {
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
    const EngineeredSeries s = load_engineered(modality_dir() / (id + ".jsonl"));
    if (s.frames.empty()) {
      throw Error(ErrorKind::kEmptySequence, fmt::format("series for '{}' is empty", id), id);
    }
    return cache_.emplace(id, to_sequence(s)).first->second;
  }

  fs::path dir_;
  Modality modality_;
  std::map<std::string, Sequence> cache_;
};

struct Loaded {
  Manifest cohort;
  SplitRecords split;
};

Loaded load_cohort_and_split(Stage& st) {
  Loaded l;
  st.input(cohort_manifest_path(st.run));
  st.input(st.run / "split.json");
  l.cohort = load_manifest(cohort_manifest_path(st.run));
  l.split = load_split(st.run, l.cohort);
  return l;
}

std::optional<double> auc_or_empty(std::span<const ScoredSample> set) {
  bool pos = false, neg = false;
  for (const auto& s : set) (s.label == 1 ? pos : neg) = true;
  if (!pos || !neg) return std::nullopt;
  return roc_auc(set);
}

std::string auc_text(std::span<const ScoredSample> set) {
  const auto a = auc_or_empty(set);
  return a ? fmt::format("{:.4f}", *a) : std::string("undefined");
}

void save_recurrent(Stage& st, const fs::path& dir, const RecurrentModel& model,
                    const TrainHistory& history, const json& extra, const SplitRecords& split,
                    SeriesCache& cache) {
  save_model(dir / "model.json", model, extra);
  write_json(dir / "history.json", history_to_json(history));
  const auto val = cache.sequences(split.val);
  const auto test = cache.sequences(split.test);
  const ScoredSet val_scores = scored_set(split.val, predict_all(model, val));
  const ScoredSet test_scores = scored_set(split.test, predict_all(model, test));
  write_scores(dir / "val_scores.jsonl", val_scores);
  write_scores(dir / "scores.jsonl", test_scores);
  st.note(fmt::format("best epoch {} of {}, val AUC {}, test AUC {}", history.best_epoch,
                      history.stopped_epoch, auc_text(val_scores), auc_text(test_scores)));
}

// ---- stages ---------------------------------------------------------------

void run_synth(Stage& st, const Common& c) {
  SynthConfig cfg = synth_config_from_json(section(c.config, "synth"));
  cfg.seed = c.resolved_seed(cfg.seed);
  st.record.seed = cfg.seed;
  st.record.config = synth_config_to_json(cfg);
  const SynthCohort cohort = generate_cohort(cfg);
  std::error_code ec;
  fs::remove_all(st.run / "features", ec);
  write_cohort(cohort, cfg, st.run);
  for (const char* f : {"manifest.json", "sabotage.json", "synth_config.json"}) st.output(st.run / f);
  st.output(st.run / "features");
  st.note(fmt::format("{} videos, {} sabotaged", cohort.manifest.records.size(),
                      cohort.sabotage.size()));
}

void run_filter(Stage& st, const Common& c, const std::string& manifest_arg) {
  const fs::path manifest_path =
      manifest_arg.empty() ? st.run / "manifest.json" : fs::path(manifest_arg);
  const json fj = section(c.config, "filter");
  const FilterCriteria criteria = criteria_from_json(fj);
  const int cap = fj.value("max_videos_per_positive_child", 2);
  if (cap < 1) {
    throw Error(ErrorKind::kConfigError, "max_videos_per_positive_child must be >= 1",
                "max_videos_per_positive_child", cap);
  }
  st.record.seed = c.resolved_seed();
  st.record.config = criteria_to_json(criteria);
  st.record.config["max_videos_per_positive_child"] = cap;
  st.input(manifest_path);

  const Manifest manifest = load_manifest(manifest_path);
  const FilterOutcome quality = apply_quality_filters(manifest, criteria);
  const std::set<std::string> passed(quality.kept.begin(), quality.kept.end());
  std::vector<VideoRecord> kept;
  for (const auto& r : manifest.records) {
    if (passed.count(r.video_id)) kept.push_back(r);
  }
  std::vector<VideoRecord> capped = undersample_superusers(kept, cap);
  std::set<std::string> survivors;
  for (const auto& r : capped) survivors.insert(r.video_id);
  json undersampled = json::array();
  for (const auto& r : kept) {
    if (!survivors.count(r.video_id)) undersampled.push_back(r.video_id);
  }
  for (auto& r : capped) {
    r.features_path = display_path(manifest.feature_paths.at(r.video_id), st.run);
  }

  json outcome = st.record.config;
  outcome["quality"] = filter_outcome_to_json(quality);
  outcome["undersampled"] = std::move(undersampled);
  write_json(st.run / "filter.json", outcome);
  write_manifest(cohort_manifest_path(st.run), make_manifest(capped, st.run));
  const CohortReport report = cohort_report(capped);
  write_json(st.run / "cohort_report.json", cohort_report_to_json(report));
  write_text_file(st.run / "cohort_report.csv", cohort_report_csv(report));
  for (const char* f : {"filter.json", "cohort_manifest.json", "cohort_report.json",
                        "cohort_report.csv"}) {
    st.output(st.run / f);
  }
  st.note(fmt::format("{} of {} videos pass quality, {} after the superuser cap",
                      quality.kept.size(), manifest.records.size(), capped.size()));
}

void run_engineer(Stage& st, const Common& c, bool raw) {
  const json ej = section(c.config, "engineering");
  EngineeringConfig cfg = engineering_config_from_json(ej);
  if (raw) cfg.raw_mode = true;
  const double min_seconds = ej.value("min_seconds", 15.0);
  if (!(min_seconds >= 0)) {
    throw Error(ErrorKind::kConfigError, "min_seconds must be >= 0", "min_seconds", min_seconds);
  }
  st.record.seed = c.resolved_seed();
  st.record.config = engineering_config_to_json(cfg);
  st.record.config["min_seconds"] = min_seconds;
  st.input(cohort_manifest_path(st.run));
  const Manifest cohort = load_manifest(cohort_manifest_path(st.run));

  const fs::path dir = st.run / series_dir_name(cfg.raw_mode);
  reset_dir(dir);
  FilterOutcome duration;
  for (const auto& r : cohort.records) {
    const VideoFeatureSeries series = load_frame_series(cohort.feature_paths.at(r.video_id),
                                                        cfg.source_fps);
    std::map<std::string, ModalitySeries> one;
    ModalitySeries& all = one[r.video_id];
    for (Modality m : kAllModalities) {
      all[modality_index(m)] = engineer(series, m, cfg);
      write_engineered(dir / std::string(modality_name(m)) / (r.video_id + ".jsonl"),
                       all[modality_index(m)]);
    }
    const FilterOutcome o = duration_filter(one, min_seconds);
    duration.kept.insert(duration.kept.end(), o.kept.begin(), o.kept.end());
    duration.rejected.insert(duration.rejected.end(), o.rejected.begin(), o.rejected.end());
  }
  json dj = filter_outcome_to_json(duration);
  dj["min_seconds"] = min_seconds;
  write_json(dir / "duration.json", dj);
  st.output(dir);
  st.note(fmt::format("{} videos engineered, {} meet the {} s rule", cohort.records.size(),
                      duration.kept.size(), min_seconds));
}

void run_split(Stage& st, const Common& c) {
  const json sj = section(c.config, "split");
  SplitRatios ratios;
  ratios.train = sj.value("train", ratios.train);
  ratios.val = sj.value("val", ratios.val);
  ratios.test = sj.value("test", ratios.test);
  st.record.seed = c.resolved_seed();
  st.record.config = {{"train", ratios.train}, {"val", ratios.val}, {"test", ratios.test}};

  fs::path duration_path = st.run / "engineered" / "duration.json";
  if (!fs::exists(duration_path)) duration_path = st.run / "raw" / "duration.json";
  if (!fs::exists(duration_path)) {
    throw Error(ErrorKind::kMissingFile, "run `engineer` before `split`",
                (st.run / "engineered" / "duration.json").string());
  }
  st.input(cohort_manifest_path(st.run));
  st.input(duration_path);
  const Manifest cohort = load_manifest(cohort_manifest_path(st.run));
  const auto kept = read_json(duration_path).at("kept").get<std::vector<std::string>>();
  const std::set<std::string> survivors(kept.begin(), kept.end());
  std::vector<VideoRecord> records;
  for (const auto& r : cohort.records) {
    if (survivors.count(r.video_id)) records.push_back(r);
  }

  const SplitAssignment assignment = split_children(records, ratios, st.record.seed);
  const SplitRecords split = split_records(records, assignment, st.record.seed);
  write_json(st.run / "split.json", json{{"assignment", split_to_json(assignment)},
                                         {"train", records_json(split.train)},
                                         {"val", records_json(split.val)},
                                         {"test", records_json(split.test)}});
  st.output(st.run / "split.json");
  st.note(fmt::format("train {} (upsampled), val {}, test {}", split.train.size(),
                      split.val.size(), split.test.size()));
}

void run_train(Stage& st, const Common& c, Modality modality, bool raw) {
  json mj = section(c.config, "model");
  mj["input_dim"] = modality_dim(modality);
  const ModelSpec spec = model_spec_from_json(mj);
  TrainConfig cfg = train_config_from_json(section(c.config, "train"));
  cfg.seed = c.resolved_seed();
  st.record.seed = cfg.seed;
  st.record.config = {{"model", model_spec_to_json(spec)},
                      {"train", train_config_to_json(cfg)},
                      {"modality", std::string(modality_name(modality))},
                      {"raw", raw}};
  const Loaded l = load_cohort_and_split(st);
  SeriesCache cache(st.run / series_dir_name(raw), modality);
  st.input(cache.modality_dir());
  const auto train_set = cache.sequences(l.split.train);
  const auto val_set = cache.sequences(l.split.val);
  const TrainResult r = train(RecurrentModel::initialize(spec, cfg.seed), train_set, val_set, cfg);

  const fs::path dir = st.run / "models" / model_name(modality, raw);
  reset_dir(dir);
  save_recurrent(st, dir, r.model, r.history, st.record.config, l.split, cache);
  st.output(dir);
}

void run_tune(Stage& st, const Common& c, Modality modality, bool raw, int trials, int jobs) {
  const SearchSpace space = search_space_from_json(section(c.config, "search"));
  if (trials < 1) throw Error(ErrorKind::kConfigError, "--trials must be >= 1", "trials", trials);
  if (jobs < 1) throw Error(ErrorKind::kConfigError, "--jobs must be >= 1", "jobs", jobs);
  st.record.seed = c.resolved_seed();
  // jobs only changes scheduling, so it is not part of the recorded config.
  st.record.config = {{"search", search_space_to_json(space)},
                      {"trials", trials},
                      {"modality", std::string(modality_name(modality))},
                      {"raw", raw}};
  const Loaded l = load_cohort_and_split(st);
  SeriesCache cache(st.run / series_dir_name(raw), modality);
  st.input(cache.modality_dir());
  const auto train_set = cache.sequences(l.split.train);
  const auto val_set = cache.sequences(l.split.val);
  const SearchResult result = random_search(space, modality_dim(modality), train_set, val_set,
                                            trials, st.record.seed, jobs);
  if (!result.best_model) {
    throw Error(ErrorKind::kDivergenceDetected, fmt::format("all {} trials failed", trials));
  }
  const TrialResult& best = result.best();
  const std::string name = model_name(modality, raw);
  const fs::path tune_dir = st.run / "tune" / name;
  reset_dir(tune_dir);
  write_text_file(tune_dir / "leaderboard.csv", leaderboard_csv(result));
  const json best_json{{"trial", best.index},
                       {"model", model_spec_to_json(best.config.spec)},
                       {"train", train_config_to_json(best.config.train)},
                       {"val_loss", best.val_loss},
                       {"val_macro_f1", best.val_macro_f1}};
  write_json(tune_dir / "best.json", best_json);
  st.note(fmt::format("trial {} wins ({}), val macro-F1 {:.4f}", best.index,
                      cell_name(best.config.spec.cell), best.val_macro_f1));

  const fs::path dir = st.run / "models" / name;
  reset_dir(dir);
  json extra = best_json;
  extra["modality"] = std::string(modality_name(modality));
  extra["raw"] = raw;
  save_recurrent(st, dir, *result.best_model, best.history, extra, l.split, cache);
  st.output(tune_dir);
  st.output(dir);
}

void run_fuse(Stage& st, const Common& c, FusionScheme scheme, std::vector<Modality> subset) {
  const json fj = section(c.config, "fusion");
  FusionTrainConfig cfg = fusion_config_from_json(fj);
  cfg.seed = c.resolved_seed();
  const bool average_logits = fj.value("average_logits", false);
  st.record.seed = cfg.seed;
  st.record.config = {{"scheme", std::string(scheme_name(scheme))},
                      {"subset", subset_name(subset)},
                      {"average_logits", average_logits},
                      {"fusion", fusion_config_to_json(cfg)}};
  const Loaded l = load_cohort_and_split(st);

  std::array<FusionInput, 3> inputs;  // train, val, test
  const std::array<const std::vector<VideoRecord>*, 3> parts = {&l.split.train, &l.split.val,
                                                               &l.split.test};
  for (auto& in : inputs) in.subset = subset;
  for (Modality m : subset) {
    const fs::path model_path = st.run / "models" / model_name(m, false) / "model.json";
    if (!fs::exists(model_path)) {
      throw Error(ErrorKind::kMissingFile,
                  fmt::format("no {} model; run `train` or `tune` for it first", modality_name(m)),
                  model_path.string());
    }
    st.input(model_path);
    const RecurrentModel model = load_model(model_path);
    SeriesCache cache(st.run / "engineered", m);
    for (std::size_t i = 0; i < 3; ++i) {
      const BatchOutput out = infer(model, cache.sequences(*parts[i]));
      inputs[i].logits.push_back(out.logits);
      inputs[i].hidden.push_back(out.hidden);
    }
  }

  std::vector<int> train_labels, val_labels;
  for (const auto& r : l.split.train) train_labels.push_back(r.label);
  for (const auto& r : l.split.val) val_labels.push_back(r.label);
  FusionHead head;
  std::optional<TrainHistory> history;
  switch (scheme) {
    case FusionScheme::kAverage:
      head = average_head(subset, average_logits);
      break;
    case FusionScheme::kLateLinear: {
      auto r = train_late_linear(inputs[0], train_labels, inputs[1], val_labels, cfg);
      head = std::move(r.head);
      history = std::move(r.history);
      break;
    }
    case FusionScheme::kIntermediate: {
      auto r = train_intermediate(inputs[0], train_labels, inputs[1], val_labels, cfg);
      head = std::move(r.head);
      history = std::move(r.history);
      break;
    }
  }

  const fs::path dir = st.run / "fusion" / fusion_name(scheme, subset);
  reset_dir(dir);
  save_fusion_head(dir / "head.json", head, st.record.config);
  if (history) write_json(dir / "history.json", history_to_json(*history));
  const ScoredSet val_scores = scored_set(l.split.val, fuse_predict(head, inputs[1]));
  const ScoredSet test_scores = scored_set(l.split.test, fuse_predict(head, inputs[2]));
  write_scores(dir / "val_scores.jsonl", val_scores);
  write_scores(dir / "scores.jsonl", test_scores);
  st.output(dir);
  st.note(fmt::format("{}: val AUC {}, test AUC {}", fusion_name(scheme, subset),
                      auc_text(val_scores), auc_text(test_scores)));
}

void run_eval(Stage& st, const Common& c, const fs::path& scores_path, const std::string& name) {
  const json ej = section(c.config, "evaluation");
  EvaluationOptions opts;
  opts.threshold = ej.value("threshold", opts.threshold);
  opts.resamples = ej.value("resamples", opts.resamples);
  opts.drop_other_gender = ej.value("drop_other_gender", opts.drop_other_gender);
  opts.seed = c.resolved_seed();
  if (!(opts.threshold > 0 && opts.threshold < 1) || opts.resamples < 1) {
    throw Error(ErrorKind::kConfigError, "evaluation needs 0 < threshold < 1 and resamples >= 1");
  }
  st.record.seed = opts.seed;
  st.record.config = {{"threshold", opts.threshold},
                      {"resamples", opts.resamples},
                      {"drop_other_gender", opts.drop_other_gender},
                      {"name", name}};
  st.input(scores_path);
  const ScoredSet set = load_scores(scores_path);
  const EvaluationReport report = evaluate(set, opts, name);
  const fs::path dir = st.run / "reports" / name;
  reset_dir(dir);
  emit_report(report, dir);
  st.output(dir);
  const auto auc = std::find_if(report.intervals.begin(), report.intervals.end(),
                                [](const MetricInterval& i) { return i.metric == "auc"; });
  if (auc != report.intervals.end()) {
    st.note(fmt::format("n {}, AUC {:.4f} [{:.4f}, {:.4f}]", report.n, auc->ci.point,
                        auc->ci.lower, auc->ci.upper));
  } else {
    st.note(fmt::format("n {}, AUC undefined", report.n));
  }
}

std::string csv_number(const json& v) {
  return v.is_number() ? fmt::format("{:.6f}", v.get<double>()) : std::string();
}

void run_report(Stage& st, const Common& c) {
  st.record.seed = c.resolved_seed();
  const fs::path reports = st.run / "reports";
  std::vector<fs::path> dirs;
  if (fs::is_directory(reports)) {
    for (const auto& e : fs::directory_iterator(reports)) {
      if (e.is_directory() && fs::exists(e.path() / "metrics.json")) dirs.push_back(e.path());
    }
  }
  if (dirs.empty()) {
    throw Error(ErrorKind::kMissingFile, "no evaluation reports; run `eval` first",
                reports.string());
  }
  std::sort(dirs.begin(), dirs.end());
  std::string csv =
      "model,n,prevalence,auc,auc_lower,auc_upper,accuracy,precision_macro,recall_macro,"
      "f1_macro,f1_weighted,dpd_age,eod_age,dpd_gender,eod_gender\n";
  json summary = json::array();
  for (const auto& d : dirs) {
    st.input(d / "metrics.json");
    const json m = read_json(d / "metrics.json");
    const json& metrics = m.at("metrics");
    const json ci = m.at("confidence_intervals").value("auc", json::object());
    auto fair = [&](const char* grouping, const char* key) {
      const json& f = m.at("fairness").at(grouping);
      return f.is_null() ? json() : f.at(key);
    };
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                       m.at("name").get<std::string>(), m.at("n").get<long>(),
                       csv_number(m.at("prevalence")), csv_number(metrics.at("auc")),
                       csv_number(ci.value("lower", json())), csv_number(ci.value("upper", json())),
                       csv_number(metrics.at("accuracy")), csv_number(metrics.at("precision_macro")),
                       csv_number(metrics.at("recall_macro")), csv_number(metrics.at("f1_macro")),
                       csv_number(metrics.at("f1_weighted")),
                       csv_number(fair("age_group", "demographic_parity_difference")),
                       csv_number(fair("age_group", "equalized_odds_difference")),
                       csv_number(fair("gender", "demographic_parity_difference")),
                       csv_number(fair("gender", "equalized_odds_difference")));
    summary.push_back({{"name", m.at("name")}, {"n", m.at("n")}, {"metrics", metrics},
                       {"auc_ci", ci}});
  }
  const fs::path out = st.run / "summary";
  reset_dir(out);
  write_text_file(out / "models.csv", csv);
  write_json(out / "summary.json", summary);
  if (fs::exists(cohort_manifest_path(st.run)) && fs::exists(st.run / "split.json")) {
    const Loaded l = load_cohort_and_split(st);
    std::vector<VideoRecord> originals;
    for (const auto* part : {&l.split.train, &l.split.val, &l.split.test}) {
      for (const auto& r : *part) {
        if (r.replica == 0) originals.push_back(r);
      }
    }
    write_text_file(out / "cohort.csv", cohort_report_csv(cohort_report(originals)));
  }
  st.output(out);
  st.note(fmt::format("{} reports summarised", dirs.size()));
}

// ---- dispatch -------------------------------------------------------------

std::string usage() {
  std::string s = "usage: pheno <subcommand> --out <run dir> [options]\nsubcommands:";
  for (std::string_view c : kSubcommands) s += fmt::format(" {}", c);
  return s + "\nrun `pheno <subcommand> --help` for its options\n";
}

void print_error(std::ostream& err, std::string_view kind, std::string_view message,
                 std::string_view subject = {}, std::optional<double> value = {}) {
  json j{{"error", std::string(kind)}, {"message", std::string(message)}};
  if (!subject.empty()) j["subject"] = std::string(subject);
  if (value) j["value"] = *value;
  err << j.dump() << '\n';
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    out << usage();
    return args.empty() ? 2 : 0;
  }
  const std::string sub = args[0];
  if (std::find(std::begin(kSubcommands), std::end(kSubcommands), sub) == std::end(kSubcommands)) {
    err << usage();
    print_error(err, error_kind_name(ErrorKind::kUnknownSubcommand),
                fmt::format("unknown subcommand '{}'", sub), sub);
    return 2;
  }

  CLI::App app(fmt::format("pheno {}", sub), "pheno " + sub);
  Common common;
  std::string modality = "eye";
  std::string scheme = "average";
  std::string subset = "eye,head,face";
  std::string manifest;
  std::string scores;
  std::string name;
  bool raw = false;
  int jobs = 1;
  int trials = 40;
  app.add_option("--out", common.out, "run directory")->required();
  app.add_option("--config", common.config_path, "JSON config");
  auto* seed_opt = app.add_option("--seed", common.seed, "global seed");
  if (sub == "filter") app.add_option("--manifest", manifest, "input manifest");
  if (sub == "engineer" || sub == "train" || sub == "tune" || sub == "eval") {
    app.add_flag("--raw", raw, "bypass feature engineering");
  }
  if (sub == "train" || sub == "tune" || sub == "eval") {
    app.add_option("--modality", modality, "eye|head|face");
  }
  CLI::Option* scheme_opt = nullptr;
  CLI::Option* subset_opt = nullptr;
  if (sub == "fuse" || sub == "eval") {
    scheme_opt = app.add_option("--scheme", scheme, "average|linear|intermediate");
    subset_opt = app.add_option("--subset", subset, "comma-separated modalities");
  }
  if (sub == "tune") {
    app.add_option("--trials", trials, "number of random-search trials");
    app.add_option("--jobs", jobs, "concurrent trials");
  }
  if (sub == "eval") {
    app.add_option("--scores", scores, "scores.jsonl to evaluate");
    app.add_option("--name", name, "report name");
  }

  std::vector<const char*> argv{"pheno"};
  for (std::size_t i = 1; i < args.size(); ++i) argv.push_back(args[i].c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << app.help();
    print_error(err, error_kind_name(ErrorKind::kConfigError), e.what());
    return 2;
  }
  common.seed_given = seed_opt->count() > 0;

  try {
    common.config = load_config(common.config_path);
    Stage st{common.out, err, {}, {}};
    fs::create_directories(st.run);
    if (!common.config_path.empty()) st.input(common.config_path);
    const bool scheme_given =
        (scheme_opt && scheme_opt->count() > 0) || (subset_opt && subset_opt->count() > 0);

    if (sub == "synth") {
      st.record.key = "synth";
      run_synth(st, common);
    } else if (sub == "filter") {
      st.record.key = "filter";
      run_filter(st, common, manifest);
    } else if (sub == "engineer") {
      st.record.key = raw ? "engineer-raw" : "engineer";
      run_engineer(st, common, raw);
    } else if (sub == "split") {
      st.record.key = "split";
      run_split(st, common);
    } else if (sub == "train" || sub == "tune") {
      const Modality m = parse_modality(modality);
      st.record.key = fmt::format("{}-{}", sub, model_name(m, raw));
      if (sub == "train") {
        run_train(st, common, m, raw);
      } else {
        run_tune(st, common, m, raw, trials, jobs);
      }
    } else if (sub == "fuse") {
      const FusionScheme s = parse_scheme(scheme);
      const auto mods = parse_subset(subset);
      st.record.key = "fuse-" + fusion_name(s, mods);
      run_fuse(st, common, s, mods);
    } else if (sub == "eval") {
      fs::path path = scores;
      std::string report_name = name;
      if (path.empty()) {
        if (scheme_given) {
          const std::string f = fusion_name(parse_scheme(scheme), parse_subset(subset));
          path = st.run / "fusion" / f / "scores.jsonl";
          if (report_name.empty()) report_name = f;
        } else {
          const std::string n = model_name(parse_modality(modality), raw);
          path = st.run / "models" / n / "scores.jsonl";
          if (report_name.empty()) report_name = n;
        }
      }
      if (report_name.empty()) report_name = path.parent_path().filename().string();
      if (report_name.empty()) report_name = "model";
      st.record.key = "eval-" + report_name;
      run_eval(st, common, path, report_name);
    } else {
      st.record.key = "report";
      run_report(st, common);
    }
    st.finish();
    return 0;
  } catch (const Error& e) {
    print_error(err, error_kind_name(e.kind()), e.what(), e.subject(),
                e.value() != 0.0 ? std::optional<double>(e.value()) : std::nullopt);
  } catch (const json::exception& e) {
    print_error(err, error_kind_name(ErrorKind::kConfigError), e.what());
  } catch (const fs::filesystem_error& e) {
    print_error(err, error_kind_name(ErrorKind::kIoError), e.what(), e.path1().string());
  }
  return 1;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace pheno
