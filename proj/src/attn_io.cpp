#include "halospan/attn_io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "halospan/container.hpp"
#include "halospan/errors.hpp"
#include "halospan/util.hpp"

namespace halospan {

namespace {

constexpr Magic kDumpMagic = {'A', 'S', 'P', 'D'};
constexpr std::uint32_t kDumpVersion = 1;

std::size_t row_offset(const AttentionDump& d, std::size_t layer, std::size_t head,
                       std::size_t abs_row) {
  const std::size_t block = (layer * d.H + head) * d.block_size();
  // rows C+1 .. abs_row-1 precede this one
  const std::size_t before = ((abs_row - 1) * abs_row - d.C * (d.C + 1)) / 2;
  return block + before;
}

std::string at(std::size_t l, std::size_t h, std::size_t i) {
  std::ostringstream os;
  os << "(l=" << l << ",h=" << h << ",i=" << i << ")";
  return os.str();
}

std::string at_norm(std::size_t l, std::size_t h, std::size_t j) {
  std::ostringstream os;
  os << "(l=" << l << ",h=" << h << ",j=" << j << ")";
  return os.str();
}

std::string_view precision_name(Precision p) { return p == Precision::F16 ? "f16" : "f32"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::F32;
  if (s == "f16") return Precision::F16;
  throw FormatError("unknown precision '" + s + "'");
}

nlohmann::json dump_metadata(const AttentionDump& d) {
  nlohmann::json meta;
  meta["sample_id"] = d.sample_id;
  meta["task"] = std::string(to_string(d.task));
  meta["S"] = d.S;
  meta["C"] = d.C;
  meta["L"] = d.L;
  meta["H"] = d.H;
  meta["precision"] = std::string(precision_name(d.precision));
  meta["flags"] = {{"value_norms", d.has_value_norms()},
                   {"gold_spans", d.gold_spans.has_value()},
                   {"output_text", d.output_text.has_value()}};
  auto tokens = nlohmann::json::array();
  for (const auto& t : d.tokens) {
    tokens.push_back({{"text", t.text}, {"start", t.char_start}, {"end", t.char_end}});
  }
  meta["tokens"] = std::move(tokens);
  auto spans = nlohmann::json::array();
  if (d.gold_spans) {
    for (const auto& s : *d.gold_spans) {
      spans.push_back({{"start", s.start}, {"end", s.end}, {"type", std::string(to_string(s.type))}});
    }
  }
  meta["gold_spans"] = std::move(spans);
  if (d.output_text) meta["output_text"] = *d.output_text;
  return meta;
}

}  // namespace

std::span<const float> AttentionDump::row(std::size_t layer, std::size_t head,
                                          std::size_t abs_row) const {
  return {attention.data() + row_offset(*this, layer, head, abs_row), abs_row};
}

std::span<float> AttentionDump::row(std::size_t layer, std::size_t head, std::size_t abs_row) {
  return {attention.data() + row_offset(*this, layer, head, abs_row), abs_row};
}

std::span<const float> AttentionDump::norms(std::size_t layer, std::size_t head) const {
  return {value_norms.data() + (layer * H + head) * S, S};
}

AttentionDump make_empty_dump(std::string sample_id, std::size_t S, std::size_t C, std::size_t L,
                              std::size_t H, bool with_norms) {
  AttentionDump d;
  d.sample_id = std::move(sample_id);
  d.S = S;
  d.C = C;
  d.L = L;
  d.H = H;
  d.attention.assign(L * H * d.block_size(), 0.0f);
  if (with_norms) d.value_norms.assign(L * H * S, 1.0f);
  d.tokens.resize(S - C);
  return d;
}

double default_tolerance(Precision precision) {
  return precision == Precision::F16 ? 1e-3 : 1e-5;
}

std::vector<Violation> validate_dump(const AttentionDump& d) {
  return validate_dump(d, default_tolerance(d.precision));
}

std::vector<Violation> validate_dump(const AttentionDump& d, double tol) {
  std::vector<Violation> out;
  auto add = [&](std::string field, std::string where, double observed, std::string msg) {
    out.push_back({std::move(field), std::move(where), observed, std::move(msg)});
  };

  if (d.C < 1) add("C", "", static_cast<double>(d.C), "context length must be >= 1");
  if (d.C >= d.S) add("S", "", static_cast<double>(d.S), "sequence length must exceed C");
  if (d.L < 1) add("L", "", static_cast<double>(d.L), "layer count must be >= 1");
  if (d.H < 1) add("H", "", static_cast<double>(d.H), "head count must be >= 1");
  if (!out.empty()) return out;  // shape unusable, nothing further can be indexed

  const std::size_t expected = d.L * d.H * d.block_size();
  if (d.attention.size() != expected) {
    add("attention", "", static_cast<double>(d.attention.size()),
        "expected " + std::to_string(expected) + " weights");
    return out;
  }
  if (!d.value_norms.empty() && d.value_norms.size() != d.L * d.H * d.S) {
    add("value_norms", "", static_cast<double>(d.value_norms.size()),
        "expected " + std::to_string(d.L * d.H * d.S) + " norms");
    return out;
  }

  for (std::size_t l = 0; l < d.L; ++l) {
    for (std::size_t h = 0; h < d.H; ++h) {
      for (std::size_t i = d.C + 1; i <= d.S; ++i) {
        double sum = 0.0;
        bool bad_entry = false;
        for (float w : d.row(l, h, i)) {
          if (!std::isfinite(w) || w < 0.0f || w > 1.0 + tol) {
            if (!bad_entry) add("attention weight", at(l, h, i), w, "weight outside [0, 1]");
            bad_entry = true;
          }
          sum += w;
        }
        if (!std::isfinite(sum) || std::abs(sum - 1.0) > tol) {
          add("attention row sum", at(l, h, i), sum, "row does not sum to 1");
        }
      }
      if (d.has_value_norms()) {
        const auto norms = d.norms(l, h);
        for (std::size_t j = 0; j < d.S; ++j) {
          if (!std::isfinite(norms[j]) || norms[j] < 0.0f) {
            add("value_norms", at_norm(l, h, j + 1), norms[j], "norm must be finite and >= 0");
          }
        }
      }
    }
  }

  if (d.tokens.size() != d.T()) {
    add("tokens", "", static_cast<double>(d.tokens.size()),
        "expected " + std::to_string(d.T()) + " output tokens");
  } else {
    for (std::size_t t = 0; t < d.tokens.size(); ++t) {
      const auto& tok = d.tokens[t];
      if (tok.char_end < tok.char_start) {
        add("tokens", "(t=" + std::to_string(t) + ")", static_cast<double>(tok.char_end),
            "token end precedes start");
      }
      if (t > 0 && tok.char_start < d.tokens[t - 1].char_end) {
        add("tokens", "(t=" + std::to_string(t) + ")", static_cast<double>(tok.char_start),
            "token offsets overlap or are not increasing");
      }
    }
  }
  if (d.gold_spans) {
    for (std::size_t s = 0; s < d.gold_spans->size(); ++s) {
      const auto& span = (*d.gold_spans)[s];
      if (span.start >= span.end) {
        add("gold_spans", "(s=" + std::to_string(s) + ")", static_cast<double>(span.start),
            "span must satisfy start < end");
      }
    }
  }
  return out;
}

std::string describe(const Violation& v) {
  std::ostringstream os;
  os << v.field;
  if (!v.where.empty()) os << ' ' << v.where;
  os << ": " << v.message << " (observed " << v.observed << ")";
  return os.str();
}

std::size_t payload_bytes(std::size_t S, std::size_t C, std::size_t L, std::size_t H,
                          Precision precision, bool with_norms) {
  const std::size_t width = precision == Precision::F16 ? 2 : 4;
  const std::size_t block = (S * (S + 1) - C * (C + 1)) / 2;
  return width * (L * H * block + (with_norms ? L * H * S : 0));
}

std::vector<std::byte> encode_dump(const AttentionDump& dump) {
  const auto violations = validate_dump(dump);
  if (!violations.empty()) throw ValidationError("invalid dump: " + describe(violations.front()));

  std::vector<std::byte> payload;
  payload.reserve(payload_bytes(dump.S, dump.C, dump.L, dump.H, dump.precision,
                                dump.has_value_norms()));
  auto put = [&](float v) {
    if (dump.precision == Precision::F16) {
      append_f16(payload, v);
    } else {
      append_f32(payload, v);
    }
  };
  for (float w : dump.attention) put(w);
  for (float n : dump.value_norms) put(n);
  return encode_envelope(kDumpMagic, kDumpVersion, dump_metadata(dump), payload);
}

AttentionDump decode_dump(std::span<const std::byte> bytes) {
  Envelope env = decode_envelope(bytes, kDumpMagic);
  if (env.version != kDumpVersion) {
    throw VersionError("unsupported ASPD version " + std::to_string(env.version));
  }
  const auto& meta = env.metadata;
  AttentionDump d;
  try {
    d.sample_id = meta.at("sample_id").get<std::string>();
    d.task = parse_task(meta.at("task").get<std::string>());
    d.S = meta.at("S").get<std::size_t>();
    d.C = meta.at("C").get<std::size_t>();
    d.L = meta.at("L").get<std::size_t>();
    d.H = meta.at("H").get<std::size_t>();
    d.precision = parse_precision(meta.at("precision").get<std::string>());
    const auto& flags = meta.at("flags");
    const bool with_norms = flags.at("value_norms").get<bool>();
    for (const auto& t : meta.at("tokens")) {
      d.tokens.push_back({t.at("text").get<std::string>(), t.at("start").get<std::size_t>(),
                          t.at("end").get<std::size_t>()});
    }
    if (flags.value("gold_spans", false)) {
      std::vector<CharSpan> spans;
      for (const auto& s : meta.at("gold_spans")) {
        spans.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(),
                         parse_hallu_type(s.at("type").get<std::string>())});
      }
      d.gold_spans = std::move(spans);
    }
    if (flags.value("output_text", false)) d.output_text = meta.at("output_text").get<std::string>();

    if (d.C >= d.S) throw FormatError("metadata has C >= S");
    const std::size_t expected =
        payload_bytes(d.S, d.C, d.L, d.H, d.precision, with_norms);
    if (env.payload.size() != expected) {
      throw LengthMismatchError("ASPD payload length mismatch", expected, env.payload.size());
    }
    const std::size_t width = d.precision == Precision::F16 ? 2 : 4;
    const std::size_t n_attn = d.L * d.H * d.block_size();
    auto get = [&](std::size_t k) {
      const std::byte* p = env.payload.data() + k * width;
      return d.precision == Precision::F16 ? load_f16(p) : load_f32(p);
    };
    d.attention.resize(n_attn);
    for (std::size_t k = 0; k < n_attn; ++k) d.attention[k] = get(k);
    if (with_norms) {
      d.value_norms.resize(d.L * d.H * d.S);
      for (std::size_t k = 0; k < d.value_norms.size(); ++k) d.value_norms[k] = get(n_attn + k);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed ASPD metadata: ") + e.what());
  }
  return d;
}

std::size_t write_dump(const AttentionDump& dump, std::ostream& out) {
  const auto bytes = encode_dump(dump);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing dump '" + dump.sample_id + "'");
  return bytes.size();
}

AttentionDump read_dump(std::istream& in) {
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dump(std::as_bytes(std::span(raw.data(), raw.size())));
}

void save_dump(const AttentionDump& dump, const std::string& path) {
  write_file_bytes(path, encode_dump(dump));
}

AttentionDump load_dump(const std::string& path) { return decode_dump(read_file_bytes(path)); }

}  // namespace halospan
