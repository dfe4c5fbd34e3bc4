#include "halospan/detector/network.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "halospan/errors.hpp"

namespace halospan {

namespace {

constexpr double kLayerNormEps = 1e-5;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap view(std::span<const double> p, const ParamBlock& b) {
  return {p.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}

MutMap view(std::span<double> p, const ParamBlock& b) {
  return {p.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}

RowMatrix linear(const RowMatrix& x, const ConstMap& w, const ConstMap& b) {
  RowMatrix y = x * w.transpose();
  y.rowwise() += b.row(0);
  return y;
}

// Accumulates weight/bias gradients and returns the input gradient.
RowMatrix linear_backward(const RowMatrix& dy, const RowMatrix& x, const ConstMap& w, MutMap dw,
                          MutMap db) {
  dw.noalias() += dy.transpose() * x;
  db.row(0) += dy.colwise().sum();
  return dy * w;
}

RowMatrix layer_norm(const RowMatrix& x, const ConstMap& gain, const ConstMap& bias, RowMatrix& hat,
                     Eigen::VectorXd& inv_std) {
  const Eigen::Index n = x.rows();
  const auto d = static_cast<double>(x.cols());
  hat.resize(n, x.cols());
  inv_std.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.row(r).sum() / d;
    const double var = (x.row(r).array() - mean).square().sum() / d;
    inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    hat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  RowMatrix y = hat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

RowMatrix layer_norm_backward(const RowMatrix& dy, const RowMatrix& hat, const Eigen::VectorXd& inv_std,
                              const ConstMap& gain, MutMap dgain, MutMap dbias) {
  dgain.row(0) += (dy.array() * hat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const RowMatrix dhat = dy.array().rowwise() * gain.row(0).array();
  const auto d = static_cast<double>(dy.cols());
  RowMatrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_dhat = dhat.row(r).sum() / d;
    const double mean_dhat_hat = dhat.row(r).dot(hat.row(r)) / d;
    dx.row(r) = inv_std(r) * (dhat.row(r).array() - mean_dhat - hat.row(r).array() * mean_dhat_hat);
  }
  return dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }

double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

RowMatrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0.0) return {};
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  RowMatrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = keep(*rng) ? scale : 0.0;
  return m;
}

void apply_mask(RowMatrix& x, const RowMatrix& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

}  // namespace

std::size_t ParamLayout::add(std::string name, std::size_t rows, std::size_t cols) {
  blocks_.push_back({std::move(name), total_, rows, cols});
  total_ += rows * cols;
  return blocks_.size() - 1;
}

const ParamBlock& ParamLayout::find(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no parameter block named " + name);
}

Architecture Architecture::from(const TrainConfig& c, std::size_t input_width) {
  Architecture a;
  a.input_width = input_width;
  a.d_model = static_cast<std::size_t>(c.d_model);
  a.n_layers = static_cast<std::size_t>(c.n_layers);
  a.n_heads = static_cast<std::size_t>(c.n_heads);
  a.ffn_width = static_cast<std::size_t>(c.ffn_multiplier * c.d_model);
  a.dropout = c.dropout;
  return a;
}

RowMatrix positional_encoding(std::size_t length, std::size_t d_model) {
  RowMatrix pe(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(d_model));
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t k = 0; k < d_model; ++k) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(k - k % 2) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) * freq;
      pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(k)) =
          k % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Network::Network(const Architecture& arch) : arch_(arch) {
  if (arch.d_model == 0 || arch.n_heads == 0 || arch.d_model % arch.n_heads != 0) {
    throw ConfigError("d_model must be a positive multiple of n_heads");
  }
  const std::size_t d = arch.d_model;
  const std::size_t f = arch.ffn_width;
  in_w_ = layout_.add("input.weight", d, arch.input_width);
  in_b_ = layout_.add("input.bias", 1, d);
  for (std::size_t k = 0; k < arch.n_layers; ++k) {
    const std::string p = "layers." + std::to_string(k) + ".";
    LayerSlots s{};
    s.ln1_g = layout_.add(p + "ln1.gain", 1, d);
    s.ln1_b = layout_.add(p + "ln1.bias", 1, d);
    s.wq = layout_.add(p + "attn.wq", d, d);
    s.bq = layout_.add(p + "attn.bq", 1, d);
    s.wk = layout_.add(p + "attn.wk", d, d);
    s.bk = layout_.add(p + "attn.bk", 1, d);
    s.wv = layout_.add(p + "attn.wv", d, d);
    s.bv = layout_.add(p + "attn.bv", 1, d);
    s.wo = layout_.add(p + "attn.wo", d, d);
    s.bo = layout_.add(p + "attn.bo", 1, d);
    s.ln2_g = layout_.add(p + "ln2.gain", 1, d);
    s.ln2_b = layout_.add(p + "ln2.bias", 1, d);
    s.w1 = layout_.add(p + "ffn.w1", f, d);
    s.b1 = layout_.add(p + "ffn.b1", 1, f);
    s.w2 = layout_.add(p + "ffn.w2", d, f);
    s.b2 = layout_.add(p + "ffn.b2", 1, d);
    layers_.push_back(s);
  }
  lnf_g_ = layout_.add("final_ln.gain", 1, d);
  lnf_b_ = layout_.add("final_ln.bias", 1, d);
  em_w_ = layout_.add("emission.weight", kNumLabels, d);
  em_b_ = layout_.add("emission.bias", 1, kNumLabels);
  crf_start_ = layout_.add("crf.start", 1, kNumLabels);
  crf_end_ = layout_.add("crf.end", 1, kNumLabels);
  crf_trans_ = layout_.add("crf.transitions", kNumLabels, kNumLabels);
}

std::vector<double> Network::initial_parameters(std::uint64_t seed) const {
  std::vector<double> p(layout_.size(), 0.0);
  std::mt19937_64 rng(seed);
  auto xavier = [&](std::size_t slot) {
    const auto& b = layout_.block(slot);
    const double a = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
    std::uniform_real_distribution<double> dist(-a, a);
    for (std::size_t k = 0; k < b.size(); ++k) p[b.offset + k] = dist(rng);
  };
  auto ones = [&](std::size_t slot) {
    const auto& b = layout_.block(slot);
    std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size(), 1.0);
  };
  xavier(in_w_);
  for (const auto& s : layers_) {
    ones(s.ln1_g);
    xavier(s.wq);
    xavier(s.wk);
    xavier(s.wv);
    xavier(s.wo);
    ones(s.ln2_g);
    xavier(s.w1);
    xavier(s.w2);
  }
  ones(lnf_g_);
  xavier(em_w_);
  return p;
}

RowMatrix Network::forward(std::span<const double> params, const RowMatrix& x,
                           std::mt19937_64* rng, ForwardCache* cache) const {
  if (params.size() != layout_.size()) {
    throw ShapeError("parameter vector has " + std::to_string(params.size()) + " entries, expected " +
                     std::to_string(layout_.size()));
  }
  if (static_cast<std::size_t>(x.cols()) != arch_.input_width) {
    throw ShapeError("feature width mismatch: expected " + std::to_string(arch_.input_width) +
                     ", got " + std::to_string(x.cols()));
  }
  const auto P = [&](std::size_t slot) { return view(params, layout_.block(slot)); };
  const Eigen::Index T = x.rows();
  const Eigen::Index d = static_cast<Eigen::Index>(arch_.d_model);
  const Eigen::Index dk = d / static_cast<Eigen::Index>(arch_.n_heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const double rate = arch_.dropout;

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.x = x;
  c.layers.assign(arch_.n_layers, {});

  RowMatrix h = linear(x, P(in_w_), P(in_b_)) + positional_encoding(static_cast<std::size_t>(T), arch_.d_model);
  c.input_mask = dropout_mask(T, d, rate, rng);
  apply_mask(h, c.input_mask);

  for (std::size_t k = 0; k < arch_.n_layers; ++k) {
    const LayerSlots& s = layers_[k];
    LayerCache& lc = c.layers[k];

    lc.a = layer_norm(h, P(s.ln1_g), P(s.ln1_b), lc.ln1_hat, lc.ln1_inv_std);
    lc.q = linear(lc.a, P(s.wq), P(s.bq));
    lc.k = linear(lc.a, P(s.wk), P(s.bk));
    lc.v = linear(lc.a, P(s.wv), P(s.bv));
    lc.attn_concat.resize(T, d);
    lc.probs.resize(arch_.n_heads);
    for (std::size_t head = 0; head < arch_.n_heads; ++head) {
      const Eigen::Index off = static_cast<Eigen::Index>(head) * dk;
      RowMatrix scores = lc.q.middleCols(off, dk) * lc.k.middleCols(off, dk).transpose() * scale;
      for (Eigen::Index r = 0; r < T; ++r) {
        const double m = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - m).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      lc.attn_concat.middleCols(off, dk) = scores * lc.v.middleCols(off, dk);
      lc.probs[head] = std::move(scores);
    }
    RowMatrix attn_out = linear(lc.attn_concat, P(s.wo), P(s.bo));
    lc.attn_mask = dropout_mask(T, d, rate, rng);
    apply_mask(attn_out, lc.attn_mask);
    h += attn_out;

    lc.b = layer_norm(h, P(s.ln2_g), P(s.ln2_b), lc.ln2_hat, lc.ln2_inv_std);
    lc.u = linear(lc.b, P(s.w1), P(s.b1));
    lc.g = lc.u.unaryExpr([](double v) { return gelu(v); });
    lc.hidden_mask = dropout_mask(T, lc.g.cols(), rate, rng);
    apply_mask(lc.g, lc.hidden_mask);
    RowMatrix ffn_out = linear(lc.g, P(s.w2), P(s.b2));
    lc.ffn_mask = dropout_mask(T, d, rate, rng);
    apply_mask(ffn_out, lc.ffn_mask);
    h += ffn_out;
  }

  c.final_out = layer_norm(h, P(lnf_g_), P(lnf_b_), c.lnf_hat, c.lnf_inv_std);
  return linear(c.final_out, P(em_w_), P(em_b_));
}

void Network::backward(std::span<const double> params, const ForwardCache& c,
                       const RowMatrix& d_emissions, std::span<double> grads) const {
  const auto P = [&](std::size_t slot) { return view(params, layout_.block(slot)); };
  const auto G = [&](std::size_t slot) { return view(grads, layout_.block(slot)); };
  const Eigen::Index T = c.x.rows();
  const Eigen::Index d = static_cast<Eigen::Index>(arch_.d_model);
  const Eigen::Index dk = d / static_cast<Eigen::Index>(arch_.n_heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  RowMatrix d_final = linear_backward(d_emissions, c.final_out, P(em_w_), G(em_w_), G(em_b_));
  RowMatrix dh = layer_norm_backward(d_final, c.lnf_hat, c.lnf_inv_std, P(lnf_g_), G(lnf_g_), G(lnf_b_));

  for (std::size_t k = arch_.n_layers; k-- > 0;) {
    const LayerSlots& s = layers_[k];
    const LayerCache& lc = c.layers[k];

    // feed-forward branch
    RowMatrix d_ffn = dh;
    apply_mask(d_ffn, lc.ffn_mask);
    RowMatrix dg = linear_backward(d_ffn, lc.g, P(s.w2), G(s.w2), G(s.b2));
    apply_mask(dg, lc.hidden_mask);
    const RowMatrix du = dg.array() * lc.u.unaryExpr([](double v) { return gelu_grad(v); }).array();
    const RowMatrix db = linear_backward(du, lc.b, P(s.w1), G(s.w1), G(s.b1));
    dh += layer_norm_backward(db, lc.ln2_hat, lc.ln2_inv_std, P(s.ln2_g), G(s.ln2_g), G(s.ln2_b));

    // attention branch
    RowMatrix d_attn = dh;
    apply_mask(d_attn, lc.attn_mask);
    const RowMatrix d_concat = linear_backward(d_attn, lc.attn_concat, P(s.wo), G(s.wo), G(s.bo));
    RowMatrix dq(T, d), dk_m(T, d), dv(T, d);
    for (std::size_t head = 0; head < arch_.n_heads; ++head) {
      const Eigen::Index off = static_cast<Eigen::Index>(head) * dk;
      const RowMatrix& prob = lc.probs[head];
      const auto d_out = d_concat.middleCols(off, dk);
      const RowMatrix d_prob = d_out * lc.v.middleCols(off, dk).transpose();
      dv.middleCols(off, dk) = prob.transpose() * d_out;
      const Eigen::VectorXd row_dot = (d_prob.array() * prob.array()).rowwise().sum();
      const RowMatrix d_scores = prob.array() * (d_prob.colwise() - row_dot).array();
      dq.middleCols(off, dk) = d_scores * lc.k.middleCols(off, dk) * scale;
      dk_m.middleCols(off, dk) = d_scores.transpose() * lc.q.middleCols(off, dk) * scale;
    }
    RowMatrix da = linear_backward(dq, lc.a, P(s.wq), G(s.wq), G(s.bq));
    da += linear_backward(dk_m, lc.a, P(s.wk), G(s.wk), G(s.bk));
    da += linear_backward(dv, lc.a, P(s.wv), G(s.wv), G(s.bv));
    dh += layer_norm_backward(da, lc.ln1_hat, lc.ln1_inv_std, P(s.ln1_g), G(s.ln1_g), G(s.ln1_b));
  }

  apply_mask(dh, c.input_mask);
  linear_backward(dh, c.x, P(in_w_), G(in_w_), G(in_b_));
}

CrfParams Network::crf(std::span<const double> params) const {
  CrfParams crf;
  const auto start = view(params, layout_.block(crf_start_));
  const auto end = view(params, layout_.block(crf_end_));
  const auto trans = view(params, layout_.block(crf_trans_));
  for (int y = 0; y < kNumLabels; ++y) {
    crf.start(y) = start(0, y);
    crf.end(y) = end(0, y);
    for (int z = 0; z < kNumLabels; ++z) crf.transitions(y, z) = trans(y, z);
  }
  return crf;
}

void Network::add_crf_gradient(const CrfGradient& g, std::span<double> grads) const {
  auto start = view(grads, layout_.block(crf_start_));
  auto end = view(grads, layout_.block(crf_end_));
  auto trans = view(grads, layout_.block(crf_trans_));
  for (int y = 0; y < kNumLabels; ++y) {
    start(0, y) += g.start(y);
    end(0, y) += g.end(y);
    for (int z = 0; z < kNumLabels; ++z) trans(y, z) += g.transitions(y, z);
  }
}

double Network::sample_loss(std::span<const double> params, const RowMatrix& x,
                            std::span<const int> labels, std::mt19937_64* rng,
                            std::span<double> grads) const {
  ForwardCache cache;
  const RowMatrix emissions = forward(params, x, rng, grads.empty() ? nullptr : &cache);
  const CrfParams crf_params = crf(params);
  if (grads.empty()) return crf_neg_log_likelihood(emissions, labels, crf_params);
  CrfGradient g;
  const double loss = crf_neg_log_likelihood(emissions, labels, crf_params, g);
  backward(params, cache, g.emissions, grads);
  add_crf_gradient(g, grads);
  return loss;
}

}  // namespace halospan
