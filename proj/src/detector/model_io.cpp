#include "halospan/container.hpp"
#include "halospan/detector/detector.hpp"
#include "halospan/errors.hpp"
#include "halospan/util.hpp"

namespace halospan {

namespace {

constexpr Magic kModelMagic = {'A', 'S', 'P', 'M'};
constexpr std::uint32_t kModelVersion = 1;

nlohmann::json model_config(const DetectorModel& m) {
  nlohmann::json c;
  c["train"] = to_json(m.config);
  c["feature_mode"] = std::string(to_string(m.feature_options.mode));
  c["row_index"] = std::string(to_string(m.feature_options.row_index));
  c["input_width"] = m.input_width();
  c["encoder"] = {{"norm_placement", "pre"},
                  {"activation", "gelu_tanh"},
                  {"positional_encoding", "sinusoidal"}};
  return c;
}

}  // namespace

std::vector<std::byte> encode_model(const DetectorModel& m) {
  if (!m.standardiser.fitted) throw StateError("cannot save a model with an unfitted standardiser");
  std::vector<std::byte> payload;
  const std::size_t F = m.input_width();
  payload.reserve(4 * (2 * F + m.params.size()));
  for (Eigen::Index k = 0; k < m.standardiser.mean.size(); ++k) {
    append_f32(payload, static_cast<float>(m.standardiser.mean(k)));
  }
  for (Eigen::Index k = 0; k < m.standardiser.std.size(); ++k) {
    append_f32(payload, static_cast<float>(m.standardiser.std(k)));
  }
  for (double p : m.params) append_f32(payload, static_cast<float>(p));

  nlohmann::json meta;
  const nlohmann::json config = model_config(m);
  meta["config"] = config;
  meta["config_hash"] = hex64(fnv1a64(config.dump()));
  meta["param_count"] = m.params.size();
  meta["payload_checksum"] = hex64(fnv1a64(payload));
  return encode_envelope(kModelMagic, kModelVersion, meta, payload);
}

DetectorModel decode_model(std::span<const std::byte> bytes) {
  Envelope env = decode_envelope(bytes, kModelMagic);
  if (env.version != kModelVersion) {
    throw VersionError("model file version " + std::to_string(env.version) +
                       " is not supported by this build (expects " + std::to_string(kModelVersion) +
                       "); upgrade the model file by retraining or converting it");
  }
  TrainConfig config;
  FeatureOptions options;
  std::size_t width = 0;
  std::size_t param_count = 0;
  std::string checksum;
  try {
    const auto& meta = env.metadata;
    const auto& c = meta.at("config");
    if (hex64(fnv1a64(c.dump())) != meta.at("config_hash").get<std::string>()) {
      throw IntegrityError("model config does not match its recorded hash");
    }
    update_from_json(config, c.at("train"));
    options.mode = parse_attention_mode(c.at("feature_mode").get<std::string>());
    options.row_index = parse_row_index(c.at("row_index").get<std::string>());
    width = c.at("input_width").get<std::size_t>();
    param_count = meta.at("param_count").get<std::size_t>();
    checksum = meta.at("payload_checksum").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model metadata: ") + e.what());
  }

  DetectorModel model(config, options, width);
  if (model.params.size() != param_count) {
    throw IntegrityError("model config implies " + std::to_string(model.params.size()) +
                         " parameters but the file records " + std::to_string(param_count));
  }
  const std::size_t expected = 4 * (2 * width + param_count);
  if (env.payload.size() != expected) {
    throw LengthMismatchError("model payload length mismatch", expected, env.payload.size());
  }
  if (hex64(fnv1a64(env.payload)) != checksum) {
    throw IntegrityError("model payload checksum mismatch");
  }
  const std::byte* p = env.payload.data();
  model.standardiser.mean.resize(static_cast<Eigen::Index>(width));
  model.standardiser.std.resize(static_cast<Eigen::Index>(width));
  for (std::size_t k = 0; k < width; ++k, p += 4) model.standardiser.mean(static_cast<Eigen::Index>(k)) = load_f32(p);
  for (std::size_t k = 0; k < width; ++k, p += 4) model.standardiser.std(static_cast<Eigen::Index>(k)) = load_f32(p);
  model.standardiser.fitted = true;
  for (double& v : model.params) {
    v = load_f32(p);
    p += 4;
  }
  return model;
}

void save_model(const DetectorModel& model, const std::string& path) {
  write_file_bytes(path, encode_model(model));
}

DetectorModel load_model(const std::string& path) { return decode_model(read_file_bytes(path)); }

}  // namespace halospan
