#include "halospan/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>

#include <CLI11.hpp>

#include "halospan/attn_io.hpp"
#include "halospan/baselines.hpp"
#include "halospan/dataset.hpp"
#include "halospan/detector/detector.hpp"
#include "halospan/errors.hpp"
#include "halospan/eval.hpp"
#include "halospan/util.hpp"

namespace halospan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json to_json(const RunConfig& c) {
  return {
      {"features", {{"mode", to_string(c.features.mode)}, {"row_index", to_string(c.features.row_index)}}},
      {"train", to_json(c.train)},
      {"synth", to_json(c.synth)},
      {"method", c.method},
      {"search", {{"trials", c.search_trials}, {"seed", c.search_seed}}},
      {"lookback", {{"l2", c.lookback_l2}}},
      {"synth_counts", {{"train", c.synth_train}, {"valid", c.synth_valid}, {"test", c.synth_test}}},
  };
}

void update_from_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  auto object = [](const json& v, const char* name) -> const json& {
    if (!v.is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
    return v;
  };
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "features") {
        for (const auto& [k, v] : object(value, "features").items()) {
          if (k == "mode") c.features.mode = parse_attention_mode(v.get<std::string>());
          else if (k == "row_index") c.features.row_index = parse_row_index(v.get<std::string>());
          else throw ConfigError("unknown features option '" + k + "'");
        }
      } else if (key == "train") {
        halospan::update_from_json(c.train, value);
      } else if (key == "synth") {
        halospan::update_from_json(c.synth, value);
      } else if (key == "method") {
        c.method = value.get<std::string>();
      } else if (key == "search") {
        for (const auto& [k, v] : object(value, "search").items()) {
          if (k == "trials") c.search_trials = v.get<int>();
          else if (k == "seed") c.search_seed = v.get<std::uint64_t>();
          else throw ConfigError("unknown search option '" + k + "'");
        }
      } else if (key == "lookback") {
        for (const auto& [k, v] : object(value, "lookback").items()) {
          if (k == "l2") c.lookback_l2 = v.get<double>();
          else throw ConfigError("unknown lookback option '" + k + "'");
        }
      } else if (key == "synth_counts") {
        for (const auto& [k, v] : object(value, "synth_counts").items()) {
          if (k == "train") c.synth_train = v.get<std::size_t>();
          else if (k == "valid") c.synth_valid = v.get<std::size_t>();
          else if (k == "test") c.synth_test = v.get<std::size_t>();
          else throw ConfigError("unknown synth_counts option '" + k + "'");
        }
      } else {
        throw ConfigError("unknown config section '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  if (c.method != "detector" && c.method != "lookback") {
    throw ConfigError("method must be 'detector' or 'lookback', got '" + c.method + "'");
  }
}

namespace {

constexpr std::string_view kLookbackMethod = "lookback";

class Logger {
 public:
  explicit Logger(std::ostream& err) : err_(err) {}
  void event(const std::string& name, json fields = json::object()) {
    fields["event"] = name;
    std::lock_guard lock(mutex_);
    err_ << fields.dump() << "\n";
  }

 private:
  std::ostream& err_;
  std::mutex mutex_;
};

// Chained FNV-1a over every input a command reads.
class InputHash {
 public:
  void add_file(const fs::path& path) {
    add_text(path.filename().string());
    h_ = fnv1a64(read_file_bytes(path.string()), h_);
  }
  void add_text(std::string_view text) { h_ = fnv1a64(text, h_); }
  std::string hex() const { return hex64(h_); }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string safe_name(const std::string& id) {
  std::string out = id;
  for (char& ch : out) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    if (!ok) ch = '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

std::vector<const ManifestEntry*> select(const Manifest& m, const std::string& split) {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : m.entries) {
    if (split.empty() || e.split == split) out.push_back(&e);
  }
  std::sort(out.begin(), out.end(),
            [](const ManifestEntry* a, const ManifestEntry* b) { return a->sample_id < b->sample_id; });
  return out;
}

AttentionDump load_entry_dump(const Manifest& m, const ManifestEntry& e) {
  if (e.dump.empty()) throw ValidationError("sample '" + e.sample_id + "' has no dump path");
  return load_dump(m.resolve(e.dump).string());
}

LabelSequence load_gold(const Manifest& m, const ManifestEntry& e) {
  if (!e.labels.empty()) return read_label_file(m.resolve(e.labels).string()).labels;
  return labels_from_dump(load_entry_dump(m, e));
}

RowMatrix load_entry_features(const Manifest& m, const ManifestEntry& e, const FeatureOptions& options) {
  if (!e.features.empty()) {
    FeatureMatrix fm = load_features(m.resolve(e.features).string());
    if (!(fm.options == options)) {
      throw ConfigError("feature cache for '" + e.sample_id + "' was built with mode " +
                        std::string(to_string(fm.options.mode)) + "/" +
                        std::string(to_string(fm.options.row_index)) + ", but " +
                        std::string(to_string(options.mode)) + "/" +
                        std::string(to_string(options.row_index)) + " is required");
    }
    return std::move(fm.values);
  }
  return build_feature_matrix(load_entry_dump(m, e), options).values;
}

void hash_entries(InputHash& hash, const Manifest& m, const std::vector<const ManifestEntry*>& entries,
                  bool dumps, bool features, bool labels) {
  for (const auto* e : entries) {
    hash.add_text(e->sample_id);
    if (dumps && !e->dump.empty()) hash.add_file(m.resolve(e->dump));
    if (features && !e->features.empty()) hash.add_file(m.resolve(e->features));
    if (labels && !e->labels.empty()) hash.add_file(m.resolve(e->labels));
  }
}

std::vector<LabeledSample> load_labeled(const Manifest& m, const std::vector<const ManifestEntry*>& entries,
                                        const FeatureOptions& options) {
  std::vector<LabeledSample> out(entries.size());
  parallel_for(entries.size(), [&](std::size_t k) {
    const auto& e = *entries[k];
    out[k].sample_id = e.sample_id;
    out[k].features = load_entry_features(m, e, options);
    out[k].labels = load_gold(m, e).labels;
    if (static_cast<std::size_t>(out[k].features.rows()) != out[k].labels.size()) {
      throw ShapeError("sample '" + e.sample_id + "': " + std::to_string(out[k].features.rows()) +
                       " feature rows but " + std::to_string(out[k].labels.size()) + " labels");
    }
  });
  return out;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

// Lookback model file: small JSON document.
json lookback_to_json(const LogRegModel& model, double l2) {
  return {{"method", kLookbackMethod},
          {"l2", l2},
          {"weights", std::vector<double>(model.weights.data(), model.weights.data() + model.weights.size())},
          {"bias", model.bias}};
}

struct LoadedModel {
  std::optional<DetectorModel> detector;
  std::optional<LogRegModel> lookback;
};

LoadedModel load_any_model(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  LoadedModel out;
  if (bytes.size() >= 4 && std::string(reinterpret_cast<const char*>(bytes.data()), 4) == "ASPM") {
    out.detector = decode_model(bytes);
    return out;
  }
  try {
    const json j = json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    if (j.at("method").get<std::string>() != kLookbackMethod) throw FormatError("unknown model method");
    const auto w = j.at("weights").get<std::vector<double>>();
    LogRegModel m;
    m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.bias = j.at("bias").get<double>();
    out.lookback = m;
  } catch (const json::exception& e) {
    throw FormatError(path + " is neither a detector model nor a lookback model: " + e.what());
  }
  return out;
}

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::string mode;
  std::string row_index;
  bool range_check = false;
};

RunConfig resolve(const Common& common) {
  RunConfig rc;
  if (!common.config_path.empty()) {
    std::ifstream in(common.config_path);
    if (!in) throw IoError("cannot open config " + common.config_path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config " + common.config_path + " is not valid JSON: " + e.what());
    }
    update_from_json(rc, j);
  }
  if (common.seed_opt != nullptr && common.seed_opt->count() > 0) {
    rc.train.seed = common.seed;
    rc.synth.seed = common.seed;
    rc.search_seed = common.seed;
  }
  if (!common.mode.empty()) rc.features.mode = parse_attention_mode(common.mode);
  if (!common.row_index.empty()) rc.features.row_index = parse_row_index(common.row_index);
  if (common.range_check) rc.train.range_check = true;
  return rc;
}

// ---- commands ----

int cmd_synth(const RunConfig& rc, const std::string& out_dir, Logger& log) {
  validate(rc.synth);
  const fs::path out(out_dir);
  ensure_dir(out / "dumps");
  ensure_dir(out / "labels");
  InputHash hash;
  hash.add_text(to_json(rc.synth).dump());
  log.event("start", {{"command", "synth"}, {"config", to_json(rc)}, {"input_hash", hash.hex()}});

  struct Part {
    const char* split;
    std::size_t count;
  };
  const Part parts[] = {{"train", rc.synth_train}, {"valid", rc.synth_valid}, {"test", rc.synth_test}};
  std::vector<std::pair<std::size_t, std::string>> jobs;
  std::size_t index = 0;
  for (const auto& p : parts) {
    for (std::size_t k = 0; k < p.count; ++k) jobs.emplace_back(index++, p.split);
  }
  Manifest manifest;
  manifest.base_dir = out;
  manifest.entries.resize(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    const auto& [idx, split] = jobs[k];
    char id[32];
    std::snprintf(id, sizeof id, "synth-%06zu", idx);
    const SynthSample s = generate_indexed(rc.synth, idx, id);
    save_dump(s.dump, (out / "dumps" / (std::string(id) + ".aspd")).string());
    write_label_file({id, s.labels, render_bracketed(s.dump.tokens, s.labels)},
                     (out / "labels" / (std::string(id) + ".json")).string());
    manifest.entries[k] = {id, split, "Other", "dumps/" + std::string(id) + ".aspd",
                           "labels/" + std::string(id) + ".json", ""};
  });
  write_manifest(manifest, (out / "manifest.jsonl").string());
  log.event("done", {{"command", "synth"}, {"samples", jobs.size()}});
  return 0;
}

int cmd_features(const RunConfig& rc, const std::string& manifest_path, const std::string& out_dir,
                 Logger& log) {
  const Manifest m = read_manifest(manifest_path);
  const auto entries = select(m, "");
  InputHash hash;
  hash.add_file(manifest_path);
  hash_entries(hash, m, entries, true, false, false);
  log.event("start", {{"command", "features"}, {"config", to_json(rc)}, {"input_hash", hash.hex()}});

  const fs::path out(out_dir);
  ensure_dir(out / "features");
  Manifest updated = rebase_manifest(m, out);
  std::map<std::string, std::size_t> position;
  for (std::size_t k = 0; k < updated.entries.size(); ++k) position[updated.entries[k].sample_id] = k;

  std::vector<std::optional<std::pair<int, std::string>>> failures(entries.size());
  std::vector<std::string> cache_paths(entries.size());
  parallel_for(entries.size(), [&](std::size_t k) {
    const auto& e = *entries[k];
    try {
      const FeatureMatrix fm = build_feature_matrix(load_entry_dump(m, e), rc.features);
      const std::string rel = "features/" + safe_name(e.sample_id) + ".aspf";
      save_features(fm, e.sample_id, (out / rel).string());
      cache_paths[k] = rel;
    } catch (const Error& ex) {
      failures[k] = {ex.exit_code(), ex.what()};
    } catch (const std::exception& ex) {
      failures[k] = {2, ex.what()};
    }
  });
  int code = 0;
  std::size_t failed = 0;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& target = updated.entries[position.at(entries[k]->sample_id)];
    if (failures[k]) {
      ++failed;
      if (code == 0) code = failures[k]->first;
      target.features.clear();
      log.event("sample_failed", {{"sample_id", entries[k]->sample_id}, {"error", failures[k]->second}});
    } else {
      target.features = cache_paths[k];
    }
  }
  write_manifest(updated, (out / "manifest.jsonl").string());
  log.event("done", {{"command", "features"}, {"samples", entries.size()}, {"failed", failed}});
  return code;
}

int cmd_train(const RunConfig& rc, const std::string& manifest_path, const std::string& model_path,
              std::string log_path, Logger& log) {
  const Manifest m = read_manifest(manifest_path);
  const auto train_entries = select(m, "train");
  const auto valid_entries = select(m, "valid");
  if (train_entries.empty()) throw ConfigError("manifest has no 'train' samples");
  InputHash hash;
  hash.add_file(manifest_path);
  const bool lookback = rc.method == kLookbackMethod;
  hash_entries(hash, m, train_entries, true, !lookback, true);
  hash_entries(hash, m, valid_entries, true, !lookback, true);
  log.event("start", {{"command", "train"}, {"config", to_json(rc)}, {"input_hash", hash.hex()}});

  if (lookback) {
    std::vector<RowMatrix> xs(train_entries.size());
    std::vector<std::vector<int>> ys(train_entries.size());
    parallel_for(train_entries.size(), [&](std::size_t k) {
      xs[k] = lookback_ratio(load_entry_dump(m, *train_entries[k]));
      ys[k] = load_gold(m, *train_entries[k]).labels;
      if (static_cast<std::size_t>(xs[k].rows()) != ys[k].size()) {
        throw ShapeError("sample '" + train_entries[k]->sample_id + "': label count mismatch");
      }
    });
    Eigen::Index rows = 0;
    for (const auto& x : xs) rows += x.rows();
    RowMatrix X(rows, xs.front().cols());
    std::vector<int> y;
    Eigen::Index r = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      if (xs[k].cols() != X.cols()) throw ShapeError("lookback features have mixed widths");
      X.middleRows(r, xs[k].rows()) = xs[k];
      r += xs[k].rows();
      y.insert(y.end(), ys[k].begin(), ys[k].end());
    }
    const LogRegFit fit = train_logreg(X, y, rc.lookback_l2);
    write_text(model_path, lookback_to_json(fit.model, rc.lookback_l2).dump(2) + "\n");
    log.event("done", {{"command", "train"}, {"method", "lookback"}, {"iterations", fit.iterations},
                       {"grad_norm", fit.grad_norm}});
    return 0;
  }

  const auto train_set = load_labeled(m, train_entries, rc.features);
  const auto valid_set = load_labeled(m, valid_entries, rc.features);
  if (log_path.empty()) log_path = model_path + ".log.jsonl";
  std::ofstream log_file(log_path);
  if (!log_file) throw IoError("cannot write training log " + log_path);
  auto write_epoch = [&](const EpochLog& e, int trial) {
    json line = {{"trial", trial},         {"epoch", e.epoch},   {"loss", e.loss},
                 {"precision", e.precision}, {"recall", e.recall}, {"f1", e.f1},
                 {"wall_seconds", e.wall_seconds}};
    log_file << line.dump() << "\n";
    log_file.flush();
    log.event("epoch", line);
  };

  TrainResult result = [&] {
    if (rc.search_trials > 0) {
      SearchResult s = random_search(train_set, valid_set, rc.train, rc.search_trials, rc.search_seed,
                                     SearchSpace{}, rc.features);
      for (std::size_t t = 0; t < s.trials.size(); ++t) {
        log.event("trial", {{"trial", t}, {"config", to_json(s.trials[t].first)}, {"best_f1", s.trials[t].second}});
      }
      // Only the winning trial's epochs go to the log file.
      for (const auto& e : s.best.log) write_epoch(e, -1);
      return std::move(s.best);
    }
    return train(train_set, valid_set, rc.train, rc.features, [&](const EpochLog& e) { write_epoch(e, 0); });
  }();
  save_model(result.model, model_path);
  log.event("done", {{"command", "train"}, {"best_epoch", result.best_epoch}, {"best_f1", result.best_f1},
                     {"model", model_path}});
  return 0;
}

int cmd_predict(const RunConfig& rc, const std::string& model_path, const std::string& manifest_path,
                const std::string& split, const std::string& out_dir, Logger& log) {
  const LoadedModel model = load_any_model(model_path);
  const Manifest m = read_manifest(manifest_path);
  const auto entries = select(m, split);
  InputHash hash;
  hash.add_file(model_path);
  hash.add_file(manifest_path);
  hash_entries(hash, m, entries, true, model.detector.has_value(), false);
  json cfg = to_json(rc);
  if (model.detector) {
    cfg["model"] = {{"train", to_json(model.detector->config)},
                    {"features",
                     {{"mode", to_string(model.detector->feature_options.mode)},
                      {"row_index", to_string(model.detector->feature_options.row_index)}}}};
  }
  log.event("start", {{"command", "predict"}, {"config", cfg}, {"input_hash", hash.hex()}});

  const fs::path out(out_dir);
  ensure_dir(out);
  parallel_for(entries.size(), [&](std::size_t k) {
    const auto& e = *entries[k];
    const AttentionDump dump = load_entry_dump(m, e);
    LabelSequence pred;
    if (model.detector) {
      pred = predict(*model.detector, load_entry_features(m, e, model.detector->feature_options));
    } else {
      pred = predict_logreg(*model.lookback, lookback_ratio(dump));
    }
    write_label_file({e.sample_id, pred, render_bracketed(dump.tokens, pred)},
                     (out / (safe_name(e.sample_id) + ".json")).string());
  });
  log.event("done", {{"command", "predict"}, {"samples", entries.size()}});
  return 0;
}

int cmd_evaluate(const RunConfig& rc, const std::string& manifest_path, const std::string& split,
                 const std::string& pred_dir, const std::string& out_dir, std::ostream& out, Logger& log) {
  const Manifest m = read_manifest(manifest_path);
  const auto entries = select(m, split);
  InputHash hash;
  hash.add_file(manifest_path);
  hash_entries(hash, m, entries, false, false, true);
  for (const auto* e : entries) hash.add_file(fs::path(pred_dir) / (safe_name(e->sample_id) + ".json"));
  log.event("start", {{"command", "evaluate"}, {"config", to_json(rc)}, {"input_hash", hash.hex()}});

  std::vector<EvalPair> pairs(entries.size());
  parallel_for(entries.size(), [&](std::size_t k) {
    const auto& e = *entries[k];
    const LabelFile pred = read_label_file((fs::path(pred_dir) / (safe_name(e.sample_id) + ".json")).string());
    if (pred.sample_id != e.sample_id) {
      throw ValidationError("prediction file for '" + e.sample_id + "' names sample '" + pred.sample_id + "'");
    }
    pairs[k] = {e.sample_id, load_gold(m, e), pred.labels};
  });
  const EvalReport report = evaluate(pairs);
  const fs::path dir(out_dir);
  ensure_dir(dir);
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  const std::string text = to_text(report);
  write_text(dir / "report.txt", text);
  out << text;
  log.event("done", {{"command", "evaluate"}, {"samples", entries.size()}, {"micro_f1", report.micro_f1}});
  return 0;
}

int cmd_validate(const std::string& manifest_path, const std::vector<std::string>& files, std::ostream& out,
                 Logger& log) {
  std::vector<std::pair<std::string, fs::path>> targets;
  if (!manifest_path.empty()) {
    const Manifest m = read_manifest(manifest_path);
    for (const auto* e : select(m, "")) targets.emplace_back(e->sample_id, m.resolve(e->dump));
  }
  for (const auto& f : files) targets.emplace_back(f, fs::path(f));
  InputHash hash;
  for (const auto& [name, path] : targets) hash.add_file(path);
  log.event("start", {{"command", "validate"}, {"files", targets.size()}, {"input_hash", hash.hex()}});

  int code = 0;
  for (const auto& [name, path] : targets) {
    try {
      const AttentionDump d = load_dump(path.string());
      const auto violations = validate_dump(d);
      if (violations.empty()) {
        out << "ok " << name << "\n";
      } else {
        code = std::max(code, 1);
        for (const auto& v : violations) out << "invalid " << name << ": " << describe(v) << "\n";
      }
    } catch (const Error& e) {
      code = std::max(code, e.exit_code());
      out << "unreadable " << name << ": " << e.what() << "\n";
    }
  }
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Logger log(err);
  CLI::App app{"Hallucinated-span detection from attention features", "halospan"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--config", common.config_path, "JSON config file");
  common.seed_opt = app.add_option("--seed", common.seed, "Seed for the command's random streams");
  app.add_option("--mode", common.mode, "Attention mode")->check(CLI::IsMember({"raw", "norm"}));
  app.add_option("--row-index", common.row_index, "Row index for attention scaling")
      ->check(CLI::IsMember({"output", "absolute"}));
  app.add_flag("--range-check", common.range_check, "Reject hyperparameters outside the tuned search ranges");

  std::string manifest, out_dir, model, log_path, split, pred_dir, method;
  int search = -1;
  long n_train = -1, n_valid = -1, n_test = -1;
  std::vector<std::string> files;

  auto* synth = app.add_subcommand("synth", "Generate synthetic dumps, labels and a manifest");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--train", n_train, "Training samples");
  synth->add_option("--valid", n_valid, "Validation samples");
  synth->add_option("--test", n_test, "Test samples");

  auto* features = app.add_subcommand("features", "Build feature caches for every sample in a manifest");
  features->add_option("--manifest", manifest, "Input manifest")->required();
  features->add_option("--out", out_dir, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a detector (or the lookback baseline)");
  train_cmd->add_option("--manifest", manifest, "Manifest with train/valid splits")->required();
  train_cmd->add_option("--out", model, "Model file to write")->required();
  train_cmd->add_option("--log", log_path, "JSON-lines training log (default: <out>.log.jsonl)");
  train_cmd->add_option("--search", search, "Random-search trials before the final fit");
  train_cmd->add_option("--method", method, "detector or lookback")->check(CLI::IsMember({"detector", "lookback"}));

  auto* predict_cmd = app.add_subcommand("predict", "Write per-sample label files");
  predict_cmd->add_option("--model", model, "Model file")->required();
  predict_cmd->add_option("--manifest", manifest, "Manifest")->required();
  predict_cmd->add_option("--split", split, "Only this split (default: all samples)");
  predict_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions against gold labels");
  evaluate_cmd->add_option("--manifest", manifest, "Gold manifest")->required();
  evaluate_cmd->add_option("--pred", pred_dir, "Directory of predicted label files")->required();
  evaluate_cmd->add_option("--split", split, "Only this split (default: all samples)");
  evaluate_cmd->add_option("--out", out_dir, "Directory for report.json and report.txt")->required();

  auto* validate_cmd = app.add_subcommand("validate", "Check dumps against the container invariants");
  validate_cmd->add_option("--manifest", manifest, "Manifest whose dumps to check");
  validate_cmd->add_option("files", files, "Dump files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig rc = resolve(common);
    if (n_train >= 0) rc.synth_train = static_cast<std::size_t>(n_train);
    if (n_valid >= 0) rc.synth_valid = static_cast<std::size_t>(n_valid);
    if (n_test >= 0) rc.synth_test = static_cast<std::size_t>(n_test);
    if (search >= 0) rc.search_trials = search;
    if (!method.empty()) rc.method = method;
    validate(rc.train);

    if (*synth) return cmd_synth(rc, out_dir, log);
    if (*features) return cmd_features(rc, manifest, out_dir, log);
    if (*train_cmd) return cmd_train(rc, manifest, model, log_path, log);
    if (*predict_cmd) return cmd_predict(rc, model, manifest, split, out_dir, log);
    if (*evaluate_cmd) return cmd_evaluate(rc, manifest, split, pred_dir, out_dir, out, log);
    if (*validate_cmd) {
      if (manifest.empty() && files.empty()) throw ConfigError("validate needs --manifest or dump files");
      return cmd_validate(manifest, files, out, log);
    }
    throw InternalError("no command selected");
  } catch (const Error& e) {
    log.event("error", {{"message", e.what()}, {"exit_code", e.exit_code()}});
    return e.exit_code();
  } catch (const std::exception& e) {
    log.event("error", {{"message", e.what()}, {"exit_code", 2}});
    return 2;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv = {"halospan"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace halospan::cli
