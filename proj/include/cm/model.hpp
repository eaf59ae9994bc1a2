#pragma once

#include "cm/data.hpp"
#include "cm/ssm.hpp"

#include <span>

namespace cm::model {

struct NonFiniteActivation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int lookback = 14;
  // Input sequence length of each block stack; the first must equal lookback.
  std::vector<int> cblock_seq_lens = {14, 16, 32};
  int cmblocks_per_cblock = 4;
  int d_state = 64;
  // Channel width after the input embedding. 19 puts the default
  // architecture at ~138k parameters.
  int model_dim = 19;
  int expand = 2;
  int conv_kernel = 4;
  // Output length of the last block stack (the earlier ones map to the next
  // stack's input length).
  int final_seq_len = 32;
  bool use_volume = true;
  bool residual = true;
  bool bare_ssm = false;

  int num_features() const { return use_volume ? 5 : 4; }
  int num_cblocks() const { return static_cast<int>(cblock_seq_lens.size()); }
  int inner_dim() const { return bare_ssm ? model_dim : expand * model_dim; }
  // Input length of C-Block i; one past the end gives final_seq_len.
  int seq_len_out(int i) const {
    return i + 1 < num_cblocks() ? cblock_seq_lens[static_cast<std::size_t>(i) + 1]
                                 : final_seq_len;
  }
  int merge_width() const;

  void validate() const;  // throws std::invalid_argument
};

struct CmBlockParams {
  ad::Tensor ln_gamma;
  ad::Tensor ln_beta;
  ssm::MambaBlockParams mamba;
};

struct CBlockParams {
  std::vector<CmBlockParams> cmblocks;
  ad::Tensor mlp_w;  // (L_in, L_out), applied along the time axis
  ad::Tensor mlp_b;  // (L_out)
};

struct CryptoMambaParams {
  ad::Tensor embed_w;  // (F, D)
  ad::Tensor embed_b;  // (D)
  std::vector<CBlockParams> cblocks;
  ad::Tensor merge_w;  // (sum of output lengths * D, 1)
  ad::Tensor merge_b;  // (1)
};

// Normalization + Mamba block with a residual connection around both.
ad::Tensor cmblock_forward(const ad::Tensor& x, const CmBlockParams& p, bool residual);

// Chain of CMBlocks followed by the time-axis linear map L_in -> L_out.
ad::Tensor cblock_forward(const ad::Tensor& x, const CBlockParams& p, bool residual);

class CryptoMamba {
 public:
  CryptoMamba(ModelConfig config, std::uint64_t seed);

  // x: (B, lookback, F) normalized features -> (B, 1) normalized close.
  ad::Tensor forward(const ad::Tensor& x) const;

  // Single window convenience; returns the normalized prediction.
  double predict_one(const Eigen::MatrixXd& window) const;

  const ModelConfig& config() const { return config_; }
  ad::ParamStore& params() { return store_; }
  const ad::ParamStore& params() const { return store_; }
  const CryptoMambaParams& handles() const { return handles_; }

 private:
  ModelConfig config_;
  ad::ParamStore store_;
  CryptoMambaParams handles_;
};

Index count_parameters(const ad::ParamStore& store);

// Normalize the trailing lookback bars, run the model, and invert the target
// normalization back to a price.
double predict_next_close(const CryptoMamba& model, std::span<const data::OhlcvBar> bars,
                          const data::Normalizer& normalizer);

}  // namespace cm::model
