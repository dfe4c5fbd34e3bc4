#include "halospan/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <json.hpp>

#include "halospan/errors.hpp"
#include "halospan/util.hpp"

namespace halospan {

std::vector<CharSpan> merge_spans(std::vector<CharSpan> spans) {
  std::stable_sort(spans.begin(), spans.end(), [](const CharSpan& a, const CharSpan& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  std::vector<CharSpan> out;
  for (const auto& s : spans) {
    auto same_type_overlap = std::find_if(out.begin(), out.end(), [&](const CharSpan& o) {
      return o.type == s.type && s.start < o.end && o.start < s.end;
    });
    if (same_type_overlap != out.end()) {
      same_type_overlap->end = std::max(same_type_overlap->end, s.end);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

LabelSequence char_spans_to_token_labels(std::span<const CharSpan> spans, std::size_t text_length,
                                         std::span<const TokenInfo> tokens) {
  std::vector<CharSpan> ordered(spans.begin(), spans.end());
  for (const auto& s : ordered) {
    if (s.start >= s.end || s.end > text_length) {
      throw AnnotationError("span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                            ") (" + std::string(to_string(s.type)) +
                            ") is empty or exceeds text length " + std::to_string(text_length));
    }
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const CharSpan& a, const CharSpan& b) { return a.start < b.start; });

  LabelSequence seq;
  seq.labels.assign(tokens.size(), 0);
  seq.types.assign(tokens.size(), std::nullopt);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto& tok = tokens[t];
    for (const auto& s : ordered) {
      if (tok.char_start < s.end && s.start < tok.char_end) {
        seq.labels[t] = 1;
        seq.types[t] = s.type;
        break;
      }
    }
  }
  return seq;
}

LabelSequence char_spans_to_token_labels(const AnnotatedSample& sample,
                                         std::span<const TokenInfo> tokens) {
  return char_spans_to_token_labels(sample.spans, utf8_length(sample.output_text), tokens);
}

LabelSequence labels_from_dump(const AttentionDump& dump) {
  std::size_t text_length = dump.tokens.empty() ? 0 : dump.tokens.back().char_end;
  if (dump.output_text) text_length = std::max(text_length, utf8_length(*dump.output_text));
  static const std::vector<CharSpan> none;
  return char_spans_to_token_labels(dump.gold_spans ? *dump.gold_spans : none, text_length,
                                    dump.tokens);
}

std::vector<CharSpan> labels_to_char_spans(const LabelSequence& labels,
                                           std::span<const TokenInfo> tokens) {
  if (labels.size() != tokens.size()) {
    throw ShapeError("label count " + std::to_string(labels.size()) + " != token count " +
                     std::to_string(tokens.size()));
  }
  std::vector<CharSpan> out;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (labels.labels[t] != 1) continue;
    const HalluType type =
        !labels.types.empty() && labels.types[t] ? *labels.types[t] : HalluType::SInfo;
    if (t > 0 && labels.labels[t - 1] == 1 && !out.empty()) {
      out.back().end = tokens[t].char_end;
    } else {
      out.push_back({tokens[t].char_start, tokens[t].char_end, type});
    }
  }
  return out;
}

std::string render_bracketed(std::span<const TokenInfo> tokens, const LabelSequence& labels) {
  if (labels.size() != tokens.size()) {
    throw ShapeError("label count " + std::to_string(labels.size()) + " != token count " +
                     std::to_string(tokens.size()));
  }
  std::string out;
  bool open = false;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const bool hallucinated = labels.labels[t] == 1;
    if (hallucinated && !open) out += "[[";
    if (!hallucinated && open) out += "]]";
    open = hallucinated;
    for (char ch : tokens[t].text) {
      if (ch == '[' || ch == ']' || ch == '\\') out += '\\';
      out += ch;
    }
  }
  if (open) out += "]]";
  return out;
}

LabelSequence parse_bracketed(std::string_view rendering, std::span<const TokenInfo> tokens) {
  LabelSequence seq;
  seq.labels.reserve(tokens.size());
  std::size_t pos = 0;
  bool open = false;
  auto fail = [&](const std::string& why) {
    throw ValidationError("rendering does not match tokens at byte " + std::to_string(pos) + ": " + why);
  };
  // Adjacent tokens are separated by at most one marker.
  auto take_marker = [&] {
    const std::string_view next = rendering.substr(pos, 2);
    if ((!open && next == "[[") || (open && next == "]]")) {
      open = !open;
      pos += 2;
    }
  };
  for (const auto& token : tokens) {
    take_marker();
    seq.labels.push_back(open ? 1 : 0);
    for (char ch : token.text) {
      if (ch == '[' || ch == ']' || ch == '\\') {
        if (pos >= rendering.size() || rendering[pos] != '\\') fail("expected escape");
        ++pos;
      }
      if (pos >= rendering.size() || rendering[pos] != ch) fail("expected token text");
      ++pos;
    }
  }
  take_marker();
  if (open) fail("unclosed span");
  if (pos != rendering.size()) fail("trailing text");
  return seq;
}

AnnotatedSample parse_ragtruth_record(const std::string& json_line, std::optional<Task> task) {
  AnnotatedSample s;
  try {
    const auto rec = nlohmann::json::parse(json_line);
    auto as_string = [](const nlohmann::json& v) {
      return v.is_string() ? v.get<std::string>() : v.dump();
    };
    s.sample_id = as_string(rec.at("id"));
    s.source_id = rec.contains("source_id") ? as_string(rec.at("source_id")) : s.sample_id;
    s.source_llm = rec.value("model", std::string());
    s.split = rec.value("split", std::string("train"));
    s.output_text = rec.at("response").get<std::string>();
    if (task) {
      s.task = *task;
    } else if (rec.contains("task_type")) {
      s.task = parse_task(rec.at("task_type").get<std::string>());
    }
    std::vector<CharSpan> spans;
    if (rec.contains("labels")) {
      for (const auto& l : rec.at("labels")) {
        spans.push_back({l.at("start").get<std::size_t>(), l.at("end").get<std::size_t>(),
                         parse_hallu_type(l.at("label_type").get<std::string>())});
      }
    }
    s.spans = merge_spans(std::move(spans));
  } catch (const nlohmann::json::exception& e) {
    throw AnnotationError(std::string("malformed RAGTruth record: ") + e.what());
  }
  const std::size_t len = utf8_length(s.output_text);
  for (const auto& span : s.spans) {
    if (span.start >= span.end || span.end > len) {
      throw AnnotationError("sample " + s.sample_id + ": span [" + std::to_string(span.start) +
                            ", " + std::to_string(span.end) + ") exceeds response length " +
                            std::to_string(len));
    }
  }
  return s;
}

std::vector<AnnotatedSample> load_ragtruth(const std::string& response_path,
                                           const std::string& source_info_path) {
  std::map<std::string, Task> tasks;
  if (!source_info_path.empty()) {
    std::ifstream in(source_info_path);
    if (!in) throw IoError("cannot open " + source_info_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      const auto& id = rec.at("source_id");
      tasks[id.is_string() ? id.get<std::string>() : id.dump()] =
          parse_task(rec.at("task_type").get<std::string>());
    }
  }
  std::ifstream in(response_path);
  if (!in) throw IoError("cannot open " + response_path);
  std::vector<AnnotatedSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto probe = nlohmann::json::parse(line);
    std::optional<Task> task;
    if (probe.contains("source_id")) {
      const auto& id = probe.at("source_id");
      auto it = tasks.find(id.is_string() ? id.get<std::string>() : id.dump());
      if (it != tasks.end()) task = it->second;
    }
    out.push_back(parse_ragtruth_record(line, task));
  }
  return out;
}

Splits make_splits(const std::vector<AnnotatedSample>& samples, std::uint64_t seed,
                   std::size_t valid_source_ids) {
  std::set<std::string> train_ids;
  for (const auto& s : samples) {
    if (s.split != "test") train_ids.insert(s.source_id);
  }
  if (train_ids.size() < valid_source_ids) {
    throw ConfigError("train partition has " + std::to_string(train_ids.size()) +
                      " distinct source IDs; " + std::to_string(valid_source_ids) +
                      " are needed for validation");
  }
  std::vector<std::string> ids(train_ids.begin(), train_ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::set<std::string> held_out(ids.begin(),
                                       ids.begin() + static_cast<std::ptrdiff_t>(valid_source_ids));
  Splits out;
  for (const auto& s : samples) {
    if (s.split == "test") {
      out.test.push_back(s);
    } else if (held_out.count(s.source_id) != 0) {
      out.valid.push_back(s);
    } else {
      out.train.push_back(s);
    }
  }
  return out;
}

double hallucination_ratio(const LabelSequence& seq) {
  if (seq.labels.empty()) return 0.0;
  const auto ones = std::count(seq.labels.begin(), seq.labels.end(), 1);
  return static_cast<double>(ones) / static_cast<double>(seq.labels.size());
}

std::optional<std::string> ratio_bin(const LabelSequence& seq) {
  const auto T = static_cast<long long>(seq.labels.size());
  const auto ones = static_cast<long long>(std::count(seq.labels.begin(), seq.labels.end(), 1));
  if (T == 0 || ones == 0) return std::nullopt;
  // ratio in (lo%, hi%]  <=>  lo*T < 100*ones <= hi*T, kept in integers
  const auto& labels = ratio_bin_labels();
  for (int k = 0; k < 4; ++k) {
    if (100 * ones <= 2LL * (k + 1) * T) return labels[static_cast<std::size_t>(k)];
  }
  return labels.back();
}

std::filesystem::path Manifest::resolve(const std::string& relative) const {
  if (relative.empty()) return {};
  const std::filesystem::path p(relative);
  return p.is_absolute() ? p : (base_dir / p).lexically_normal();
}

std::vector<const ManifestEntry*> Manifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(&e);
  }
  return out;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      ManifestEntry e;
      e.sample_id = rec.at("sample_id").get<std::string>();
      e.split = rec.value("split", std::string());
      e.task = rec.value("task", std::string("Other"));
      e.dump = rec.value("dump", std::string());
      e.labels = rec.value("labels", std::string());
      e.features = rec.value("features", std::string());
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("manifest " + path + " line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return m;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
  std::vector<const ManifestEntry*> order;
  for (const auto& e : manifest.entries) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; });
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path);
  for (const auto* e : order) {
    nlohmann::json rec = {{"sample_id", e->sample_id}, {"split", e->split}, {"task", e->task}};
    if (!e->dump.empty()) rec["dump"] = e->dump;
    if (!e->labels.empty()) rec["labels"] = e->labels;
    if (!e->features.empty()) rec["features"] = e->features;
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

Manifest rebase_manifest(const Manifest& m, const std::filesystem::path& new_base) {
  Manifest out;
  out.base_dir = new_base;
  const auto base = std::filesystem::absolute(new_base).lexically_normal();
  auto rebase = [&](const std::string& p) -> std::string {
    if (p.empty()) return {};
    const auto abs = std::filesystem::absolute(m.resolve(p)).lexically_normal();
    return abs.lexically_relative(base).generic_string();
  };
  for (const auto& e : m.entries) {
    ManifestEntry r = e;
    r.dump = rebase(e.dump);
    r.labels = rebase(e.labels);
    r.features = rebase(e.features);
    out.entries.push_back(std::move(r));
  }
  return out;
}

void write_label_file(const LabelFile& file, const std::string& path) {
  nlohmann::json rec;
  rec["sample_id"] = file.sample_id;
  rec["labels"] = file.labels.labels;
  if (!file.labels.types.empty()) {
    auto types = nlohmann::json::array();
    for (const auto& t : file.labels.types) {
      types.push_back(t ? nlohmann::json(std::string(to_string(*t))) : nlohmann::json(nullptr));
    }
    rec["types"] = std::move(types);
  }
  if (file.rendering) rec["rendering"] = *file.rendering;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << rec.dump() << '\n';
}

LabelFile read_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file " + path);
  LabelFile f;
  try {
    const auto rec = nlohmann::json::parse(in);
    f.sample_id = rec.at("sample_id").get<std::string>();
    f.labels.labels = rec.at("labels").get<std::vector<int>>();
    if (rec.contains("types")) {
      for (const auto& t : rec.at("types")) {
        f.labels.types.push_back(t.is_null() ? std::nullopt
                                             : std::optional(parse_hallu_type(t.get<std::string>())));
      }
    }
    if (rec.contains("rendering")) f.rendering = rec.at("rendering").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed label file " + path + ": " + e.what());
  }
  for (int v : f.labels.labels) {
    if (v != 0 && v != 1) throw ValidationError("label file " + path + " has non-binary label");
  }
  return f;
}

}  // namespace halospan
