#pragma once

// Emission network: linear input projection, sinusoidal positions, a stack of
// pre-norm Transformer encoder blocks, final layer norm and a 2-way emission
// head. All parameters (including the CRF) live in one flat vector described
// by a ParamLayout, so optimiser state, gradients and serialisation share the
// same indexing.
//
// Block k:
//   h = h + Dropout(MHA(LN1(h)))
//   h = h + Dropout(W2 Dropout(GELU(W1 LN2(h))))

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "halospan/detector/config.hpp"
#include "halospan/detector/crf.hpp"
#include "halospan/features.hpp"

namespace halospan {

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

class ParamLayout {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols);
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(std::size_t index) const { return blocks_[index]; }
  /// Throws std::out_of_range for unknown names.
  const ParamBlock& find(const std::string& name) const;
  std::size_t size() const { return total_; }

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

struct Architecture {
  std::size_t input_width = 0;
  std::size_t d_model = 0;
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t ffn_width = 0;
  double dropout = 0.0;

  static Architecture from(const TrainConfig& config, std::size_t input_width);
};

/// Sinusoidal table: pe[pos, 2k] = sin(pos / 10000^(2k/d)), pe[pos, 2k+1] = cos(...).
RowMatrix positional_encoding(std::size_t length, std::size_t d_model);

/// Activations kept from a forward pass for the backward pass.
struct ForwardCache;

class Network {
 public:
  explicit Network(const Architecture& arch);

  const Architecture& architecture() const { return arch_; }
  const ParamLayout& layout() const { return layout_; }

  /// Xavier-uniform weights, zero biases, unit layer-norm gains, zero CRF.
  std::vector<double> initial_parameters(std::uint64_t seed) const;

  /// Emissions (T x 2) for standardised features. `dropout_rng` enables
  /// dropout (training mode); nullptr means evaluation mode.
  RowMatrix forward(std::span<const double> params, const RowMatrix& x,
                    std::mt19937_64* dropout_rng = nullptr, ForwardCache* cache = nullptr) const;

  /// Accumulates d(loss)/d(params) into grads given d(loss)/d(emissions).
  void backward(std::span<const double> params, const ForwardCache& cache,
                const RowMatrix& d_emissions, std::span<double> grads) const;

  CrfParams crf(std::span<const double> params) const;
  void add_crf_gradient(const CrfGradient& g, std::span<double> grads) const;

  /// CRF negative log-likelihood of one sample; accumulates its gradient
  /// into grads when non-empty.
  double sample_loss(std::span<const double> params, const RowMatrix& x, std::span<const int> labels,
                     std::mt19937_64* dropout_rng, std::span<double> grads) const;

 private:
  struct LayerSlots {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  Architecture arch_;
  ParamLayout layout_;
  std::size_t in_w_ = 0, in_b_ = 0;
  std::vector<LayerSlots> layers_;
  std::size_t lnf_g_ = 0, lnf_b_ = 0, em_w_ = 0, em_b_ = 0;
  std::size_t crf_start_ = 0, crf_end_ = 0, crf_trans_ = 0;
};

struct LayerCache {
  RowMatrix ln1_hat;
  Eigen::VectorXd ln1_inv_std;
  RowMatrix a;  // LN1 output
  RowMatrix q, k, v;
  std::vector<RowMatrix> probs;  // per head, T x T
  RowMatrix attn_concat;
  RowMatrix attn_mask;  // dropout scale on attention branch (empty: none)
  RowMatrix ln2_hat;
  Eigen::VectorXd ln2_inv_std;
  RowMatrix b;  // LN2 output
  RowMatrix u;  // pre-activation
  RowMatrix g;  // GELU(u) after hidden dropout
  RowMatrix hidden_mask;
  RowMatrix ffn_mask;
};

struct ForwardCache {
  RowMatrix x;  // standardised input
  RowMatrix input_mask;
  std::vector<LayerCache> layers;
  RowMatrix lnf_hat;
  Eigen::VectorXd lnf_inv_std;
  RowMatrix final_out;
};

}  // namespace halospan
