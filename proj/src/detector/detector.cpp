#include "halospan/detector/detector.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "halospan/errors.hpp"
#include "halospan/util.hpp"

namespace halospan {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
// Gradient accumulation is split into at most this many fixed chunks per
// batch, so the summation order never depends on the worker count.
constexpr std::size_t kGradChunks = 4;

void check_samples(const std::vector<LabeledSample>& set, std::size_t width, const char* name) {
  for (const auto& s : set) {
    if (static_cast<std::size_t>(s.features.cols()) != width) {
      throw ShapeError(std::string(name) + " sample '" + s.sample_id + "' has feature width " +
                       std::to_string(s.features.cols()) + ", expected " + std::to_string(width));
    }
    if (static_cast<std::size_t>(s.features.rows()) != s.labels.size() || s.labels.empty()) {
      throw ShapeError(std::string(name) + " sample '" + s.sample_id +
                       "': feature rows and label count differ or are zero");
    }
  }
}

struct AdamW {
  double lr;
  double weight_decay;
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  AdamW(std::size_t n, double lr_, double wd) : lr(lr_), weight_decay(wd), m(n, 0.0), v(n, 0.0) {}

  void update(std::vector<double>& params, const std::vector<double>& grads) {
    ++step;
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
    for (std::size_t k = 0; k < params.size(); ++k) {
      m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * grads[k];
      v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * grads[k] * grads[k];
      params[k] *= 1.0 - lr * weight_decay;
      params[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + kAdamEps);
    }
  }
};

std::vector<LabelSequence> predict_all(const DetectorModel& model,
                                       const std::vector<LabeledSample>& samples) {
  std::vector<LabelSequence> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t k) { out[k] = predict(model, samples[k].features); });
  return out;
}

}  // namespace

DetectorModel::DetectorModel(TrainConfig cfg, FeatureOptions options, std::size_t input_width)
    : config(cfg),
      feature_options(options),
      network(Architecture::from(cfg, input_width)),
      params(network.layout().size(), 0.0) {}

RowMatrix forward(const DetectorModel& model, const RowMatrix& features, bool train_mode,
                  std::mt19937_64* dropout_rng) {
  const RowMatrix x = model.standardiser.apply(features);
  return model.network.forward(model.params, x, train_mode ? dropout_rng : nullptr);
}

LabelSequence predict(const DetectorModel& model, const RowMatrix& features) {
  const RowMatrix emissions = forward(model, features);
  return viterbi_decode(emissions, model.network.crf(model.params));
}

void snap_to_f32(DetectorModel& model) {
  auto snap = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (double& p : model.params) p = snap(p);
  model.standardiser.mean = model.standardiser.mean.unaryExpr(snap);
  model.standardiser.std = model.standardiser.std.unaryExpr(snap);
}

EvalReport evaluate_model(const DetectorModel& model, const std::vector<LabeledSample>& samples) {
  const auto preds = predict_all(model, samples);
  std::vector<EvalPair> pairs;
  pairs.reserve(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    pairs.push_back({samples[k].sample_id, LabelSequence{samples[k].labels, {}}, preds[k]});
  }
  return token_prf(pairs);
}

TrainResult train(const std::vector<LabeledSample>& train_set,
                  const std::vector<LabeledSample>& valid_set, const TrainConfig& config,
                  const FeatureOptions& feature_options, const EpochCallback& on_epoch) {
  validate(config);
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (valid_set.empty()) throw ConfigError("validation set is empty");
  const auto width = static_cast<std::size_t>(train_set.front().features.cols());
  check_samples(train_set, width, "train");
  check_samples(valid_set, width, "valid");

  TrainResult result{DetectorModel(config, feature_options, width), {}, 0, -1.0};
  DetectorModel& model = result.model;
  {
    std::vector<const RowMatrix*> mats;
    for (const auto& s : train_set) mats.push_back(&s.features);
    model.standardiser = fit_standardiser(mats);
  }
  std::vector<RowMatrix> train_x;
  train_x.reserve(train_set.size());
  for (const auto& s : train_set) train_x.push_back(model.standardiser.apply(s.features));

  const Network& net = model.network;
  model.params = net.initial_parameters(config.seed);
  std::vector<double> best_params = model.params;
  AdamW optimiser(model.params.size(), config.learning_rate, config.weight_decay);

  std::mt19937_64 shuffle_rng(mix_seed(config.seed, 1));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t n_params = model.params.size();
  std::vector<std::vector<double>> chunk_grads(kGradChunks, std::vector<double>(n_params));
  std::vector<double> chunk_loss(kGradChunks);
  std::vector<double> grads(n_params);
  int since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t epoch_seed = mix_seed(config.seed, 1000 + static_cast<std::uint64_t>(epoch));
    double epoch_loss = 0.0;
    int batch_index = 0;

    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const std::size_t n = end - begin;
      const std::size_t chunks = std::min(kGradChunks, n);
      parallel_for(chunks, [&](std::size_t c) {
        auto& g = chunk_grads[c];
        std::fill(g.begin(), g.end(), 0.0);
        chunk_loss[c] = 0.0;
        const std::size_t lo = begin + c * n / chunks;
        const std::size_t hi = begin + (c + 1) * n / chunks;
        for (std::size_t k = lo; k < hi; ++k) {
          const std::size_t idx = order[k];
          std::mt19937_64 dropout_rng(mix_seed(epoch_seed, idx));
          chunk_loss[c] += net.sample_loss(model.params, train_x[idx], train_set[idx].labels,
                                           &dropout_rng, g);
        }
      });
      std::fill(grads.begin(), grads.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t c = 0; c < chunks; ++c) {
        batch_loss += chunk_loss[c];
        for (std::size_t k = 0; k < n_params; ++k) grads[k] += chunk_grads[c][k];
      }
      const double inv_n = 1.0 / static_cast<double>(n);
      for (double& g : grads) g *= inv_n;
      if (!std::isfinite(batch_loss) ||
          !std::all_of(grads.begin(), grads.end(), [](double g) { return std::isfinite(g); })) {
        throw DivergenceError("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch_index),
                              epoch, batch_index);
      }
      epoch_loss += batch_loss;
      optimiser.update(model.params, grads);
    }

    const EvalReport report = evaluate_model(model, valid_set);
    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = epoch_loss / static_cast<double>(train_set.size());
    entry.precision = report.micro_precision;
    entry.recall = report.micro_recall;
    entry.f1 = report.micro_f1;
    entry.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (entry.f1 > result.best_f1) {
      result.best_f1 = entry.f1;
      result.best_epoch = epoch;
      best_params = model.params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  model.params = std::move(best_params);
  snap_to_f32(model);
  return result;
}

SearchResult random_search(const std::vector<LabeledSample>& train_set,
                           const std::vector<LabeledSample>& valid_set, const TrainConfig& base,
                           int trials, std::uint64_t seed, const SearchSpace& space,
                           const FeatureOptions& feature_options) {
  if (trials < 1) throw ConfigError("random search needs at least one trial");
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](const std::vector<int>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::optional<SearchResult> out;
  std::vector<std::pair<TrainConfig, double>> history;
  for (int t = 0; t < trials; ++t) {
    TrainConfig c = base;
    c.learning_rate = uniform(space.lr_min, space.lr_max);
    c.n_layers = pick(space.layers);
    c.n_heads = pick(space.heads);
    c.dropout = uniform(space.dropout_min, space.dropout_max);
    c.weight_decay = uniform(space.wd_min, space.wd_max);
    c.d_model = pick(space.d_models);
    if (c.d_model % c.n_heads != 0) continue;
    TrainResult r = train(train_set, valid_set, c, feature_options);
    history.emplace_back(c, r.best_f1);
    if (!out || r.best_f1 > out->best.best_f1) {
      out.emplace(SearchResult{c, std::move(r), {}});
    }
  }
  if (!out) throw ConfigError("random search produced no valid configuration");
  out->trials = std::move(history);
  return std::move(*out);
}

}  // namespace halospan
