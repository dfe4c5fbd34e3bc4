#include "halospan/features.hpp"

#include <cmath>
#include <sstream>

#include "halospan/container.hpp"
#include "halospan/errors.hpp"
#include "halospan/util.hpp"

namespace halospan {

namespace {

constexpr Magic kFeatureMagic = {'A', 'S', 'P', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

}  // namespace

std::string_view to_string(AttentionMode mode) { return mode == AttentionMode::Norm ? "norm" : "raw"; }

std::string_view to_string(RowIndex index) {
  return index == RowIndex::Absolute ? "absolute" : "output";
}

AttentionMode parse_attention_mode(std::string_view name) {
  if (name == "raw") return AttentionMode::Raw;
  if (name == "norm") return AttentionMode::Norm;
  throw ConfigError("unknown attention mode '" + std::string(name) + "' (expected raw|norm)");
}

RowIndex parse_row_index(std::string_view name) {
  if (name == "output") return RowIndex::OutputRelative;
  if (name == "absolute") return RowIndex::Absolute;
  throw ConfigError("unknown row index '" + std::string(name) + "' (expected output|absolute)");
}

AttentionView attention_view(const AttentionDump& dump, std::size_t layer, std::size_t head) {
  AttentionView view;
  view.C = dump.C;
  view.S = dump.S;
  view.rows.reserve(dump.T());
  for (std::size_t i = dump.C + 1; i <= dump.S; ++i) {
    const auto row = dump.row(layer, head, i);
    view.rows.emplace_back(row.begin(), row.end());
  }
  return view;
}

AttentionView apply_norm_adjustment(const AttentionDump& dump, std::size_t layer, std::size_t head) {
  if (!dump.has_value_norms()) {
    throw CapabilityError("dump '" + dump.sample_id +
                          "' has no value norms; re-extract with norms enabled to use norm mode");
  }
  AttentionView view = attention_view(dump, layer, head);
  view.mode = AttentionMode::Norm;
  const auto norms = dump.norms(layer, head);
  for (auto& row : view.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) row[j] *= static_cast<double>(norms[j]);
  }
  return view;
}

Triangle output_triangle(const AttentionView& view) {
  Triangle tri;
  tri.reserve(view.rows.size());
  for (const auto& row : view.rows) {
    tri.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(view.C), row.end());
  }
  return tri;
}

Triangle scale_attention(const Triangle& rows, std::size_t index_offset) {
  Triangle out = rows;
  for (std::size_t r = 0; r < out.size(); ++r) {
    const auto factor = static_cast<double>(r + 1 + index_offset);
    for (double& w : out[r]) w *= factor;
  }
  return out;
}

std::vector<double> avg_incoming_attention(const Triangle& scaled) {
  const std::size_t T = scaled.size();
  std::vector<double> mu(T, 0.0);
  for (std::size_t j = 0; j < T; ++j) {
    double sum = 0.0;
    for (std::size_t i = j; i < T; ++i) sum += scaled[i][j];
    mu[j] = sum / static_cast<double>(T - j);
  }
  return mu;
}

Triangle incoming_kappa(const Triangle& scaled) {
  Triangle kappa = scaled;
  for (auto& row : kappa) {
    double total = 0.0;
    for (double w : row) total += w;
    // A row with no output-span mass attends only to context; it contributes nothing.
    for (double& w : row) w = total > 0.0 ? w / total : 0.0;
  }
  return kappa;
}

std::vector<double> incoming_attention_entropy(const Triangle& scaled) {
  const std::size_t T = scaled.size();
  const Triangle kappa = incoming_kappa(scaled);
  std::vector<double> beta(T, 0.0);
  for (std::size_t j = 0; j + 1 < T; ++j) {
    double h = 0.0;
    for (std::size_t i = j; i < T; ++i) h -= xlogx(kappa[i][j]);
    beta[j] = h / std::log(static_cast<double>(T - j));
  }
  return beta;
}

double normalised_entropy(std::span<const double> p) {
  if (p.size() <= 1) return 0.0;
  double h = 0.0;
  for (double x : p) h -= xlogx(x);
  return h / std::log(static_cast<double>(p.size()));
}

std::vector<double> outgoing_attention_entropy(const AttentionView& view) {
  std::vector<double> gamma;
  gamma.reserve(view.rows.size());
  std::vector<double> scratch;
  // Rows are renormalised in both modes: norm-mode rows are not
  // distributions, and stored raw rows only sum to 1 within storage precision.
  for (const auto& row : view.rows) {
    double total = 0.0;
    for (double w : row) total += w;
    scratch.assign(row.size(), 0.0);
    if (total > 0.0) {
      for (std::size_t j = 0; j < row.size(); ++j) scratch[j] = row[j] / total;
    }
    gamma.push_back(total > 0.0 ? normalised_entropy(scratch) : 0.0);
  }
  return gamma;
}

FeatureMatrix build_feature_matrix(const AttentionDump& dump, const FeatureOptions& options) {
  if (options.mode == AttentionMode::Norm && !dump.has_value_norms()) {
    throw CapabilityError("dump '" + dump.sample_id +
                          "' has no value norms; re-extract with norms enabled to use norm mode");
  }
  FeatureMatrix fm;
  fm.L = dump.L;
  fm.H = dump.H;
  fm.options = options;
  const std::size_t T = dump.T();
  fm.values = RowMatrix::Zero(static_cast<Eigen::Index>(T),
                              static_cast<Eigen::Index>(3 * dump.L * dump.H));
  const std::size_t offset = options.row_index == RowIndex::Absolute ? dump.C : 0;

  for (std::size_t l = 0; l < dump.L; ++l) {
    for (std::size_t h = 0; h < dump.H; ++h) {
      const AttentionView view = options.mode == AttentionMode::Norm
                                     ? apply_norm_adjustment(dump, l, h)
                                     : attention_view(dump, l, h);
      const Triangle scaled = scale_attention(output_triangle(view), offset);
      const auto mu = avg_incoming_attention(scaled);
      const auto beta = incoming_attention_entropy(scaled);
      const auto gamma = outgoing_attention_entropy(view);
      const auto cm = static_cast<Eigen::Index>(fm.mu_column(l, h));
      const auto cb = static_cast<Eigen::Index>(fm.beta_column(l, h));
      const auto cg = static_cast<Eigen::Index>(fm.gamma_column(l, h));
      for (std::size_t t = 0; t < T; ++t) {
        if (!std::isfinite(mu[t]) || !std::isfinite(beta[t]) || !std::isfinite(gamma[t])) {
          std::ostringstream os;
          os << "non-finite feature in '" << dump.sample_id << "' at (l=" << l << ",h=" << h
             << ",token=" << t << ")";
          throw InternalError(os.str());
        }
        const auto r = static_cast<Eigen::Index>(t);
        fm.values(r, cm) = mu[t];
        fm.values(r, cb) = beta[t];
        fm.values(r, cg) = gamma[t];
      }
    }
  }
  return fm;
}

std::vector<std::byte> encode_features(const FeatureMatrix& fm, const std::string& sample_id) {
  nlohmann::json meta;
  meta["sample_id"] = sample_id;
  meta["T"] = fm.rows();
  meta["L"] = fm.L;
  meta["H"] = fm.H;
  meta["width"] = fm.width();
  meta["mode"] = std::string(to_string(fm.options.mode));
  meta["row_index"] = std::string(to_string(fm.options.row_index));
  std::vector<std::byte> payload;
  payload.reserve(fm.rows() * fm.width() * 4);
  for (Eigen::Index r = 0; r < fm.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < fm.values.cols(); ++c) {
      append_f32(payload, static_cast<float>(fm.values(r, c)));
    }
  }
  return encode_envelope(kFeatureMagic, kFeatureVersion, meta, payload);
}

FeatureMatrix decode_features(std::span<const std::byte> bytes, std::string* sample_id) {
  Envelope env = decode_envelope(bytes, kFeatureMagic);
  if (env.version != kFeatureVersion) {
    throw VersionError("unsupported ASPF version " + std::to_string(env.version));
  }
  FeatureMatrix fm;
  std::size_t T = 0;
  std::size_t width = 0;
  try {
    const auto& meta = env.metadata;
    T = meta.at("T").get<std::size_t>();
    width = meta.at("width").get<std::size_t>();
    fm.L = meta.at("L").get<std::size_t>();
    fm.H = meta.at("H").get<std::size_t>();
    fm.options.mode = parse_attention_mode(meta.at("mode").get<std::string>());
    fm.options.row_index = parse_row_index(meta.at("row_index").get<std::string>());
    if (sample_id) *sample_id = meta.at("sample_id").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed ASPF metadata: ") + e.what());
  }
  if (width != 3 * fm.L * fm.H) throw FormatError("ASPF width does not equal 3*L*H");
  if (env.payload.size() != T * width * 4) {
    throw LengthMismatchError("ASPF payload length mismatch", T * width * 4, env.payload.size());
  }
  fm.values.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(width));
  for (std::size_t k = 0; k < T * width; ++k) {
    fm.values.data()[k] = load_f32(env.payload.data() + 4 * k);
  }
  return fm;
}

void save_features(const FeatureMatrix& fm, const std::string& sample_id, const std::string& path) {
  write_file_bytes(path, encode_features(fm, sample_id));
}

FeatureMatrix load_features(const std::string& path, std::string* sample_id) {
  return decode_features(read_file_bytes(path), sample_id);
}

}  // namespace halospan
