#include "cm/model.hpp"

#include <cmath>

namespace cm::model {

using cm::Array;
using ad::Tensor;

int ModelConfig::merge_width() const {
  int total = 0;
  for (int i = 0; i < num_cblocks(); ++i) total += seq_len_out(i);
  return total * model_dim;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw std::invalid_argument(std::string("model config: ") + name + " must be positive");
    }
  };
  positive(lookback, "lookback");
  positive(cmblocks_per_cblock, "cmblocks_per_cblock");
  positive(d_state, "d_state");
  positive(model_dim, "model_dim");
  positive(expand, "expand");
  positive(conv_kernel, "conv_kernel");
  positive(final_seq_len, "final_seq_len");
  if (cblock_seq_lens.empty()) {
    throw std::invalid_argument("model config: cblock_seq_lens must not be empty");
  }
  for (int len : cblock_seq_lens) positive(len, "cblock_seq_lens entry");
  if (cblock_seq_lens.front() != lookback) {
    throw std::invalid_argument(
        "model config: first C-Block sequence length must equal lookback");
  }
}

namespace {

// Uniform in +-1/sqrt(fan_in), the default linear-layer scheme.
Tensor linear_init(ad::Shape shape, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Array v(ad::numel(shape));
  for (Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor const_init(ad::Shape shape, double value) {
  return Tensor::full(std::move(shape), value, true);
}

// a_log so that -A spans {1, ..., N} for every channel.
Tensor a_log_init(Index channels, Index states) {
  Array v(channels * states);
  for (Index i = 0; i < channels; ++i) {
    for (Index n = 0; n < states; ++n) {
      v(i * states + n) = std::log(static_cast<double>(n + 1));
    }
  }
  return Tensor({channels, states}, std::move(v), true);
}

// Bias such that softplus(bias) lands log-uniform in [1e-3, 1e-1].
Tensor dt_bias_init(Index channels, Rng& rng) {
  Array v(channels);
  for (Index i = 0; i < channels; ++i) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v(i) = std::log(std::expm1(dt));
  }
  return Tensor({channels}, std::move(v), true);
}

}  // namespace

CryptoMamba::CryptoMamba(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(mix_seed(seed, 0x6d616d6261ull));

  const Index f = config_.num_features();
  const Index d = config_.model_dim;
  const Index inner = config_.inner_dim();
  const Index n = config_.d_state;
  const Index k = config_.conv_kernel;

  auto put = [this](const std::string& path, Tensor t) -> Tensor& {
    return store_.add(path, std::move(t));
  };

  handles_.embed_w = put("embed.weight", linear_init({f, d}, f, rng));
  handles_.embed_b = put("embed.bias", const_init({d}, 0.0));

  for (int cb = 0; cb < config_.num_cblocks(); ++cb) {
    CBlockParams cblock;
    const std::string cb_path = "cb" + std::to_string(cb) + ".";
    for (int cm = 0; cm < config_.cmblocks_per_cblock; ++cm) {
      CmBlockParams block;
      const std::string path = cb_path + "cm" + std::to_string(cm) + ".";
      block.ln_gamma = put(path + "norm.gamma", const_init({d}, 1.0));
      block.ln_beta = put(path + "norm.beta", const_init({d}, 0.0));

      ssm::MambaBlockParams& m = block.mamba;
      m.bare = config_.bare_ssm;
      if (!m.bare) {
        m.in_proj = put(path + "mamba.in_proj", linear_init({d, 2 * inner}, d, rng));
        m.conv_w = put(path + "mamba.conv.weight", linear_init({k, inner}, k, rng));
        m.conv_b = put(path + "mamba.conv.bias", const_init({inner}, 0.0));
        m.out_proj = put(path + "mamba.out_proj", linear_init({inner, d}, inner, rng));
      }
      m.ssm.a_log = put(path + "mamba.a_log", a_log_init(inner, n));
      m.ssm.d_skip = put(path + "mamba.d_skip", const_init({inner}, 1.0));
      m.ssm.b_proj = put(path + "mamba.b_proj", linear_init({inner, n}, inner, rng));
      m.ssm.c_proj = put(path + "mamba.c_proj", linear_init({inner, n}, inner, rng));
      m.ssm.dt_proj = put(path + "mamba.dt_proj", linear_init({inner, inner}, inner, rng));
      m.ssm.dt_bias = put(path + "mamba.dt_bias", dt_bias_init(inner, rng));
      cblock.cmblocks.push_back(std::move(block));
    }
    const Index l_in = config_.cblock_seq_lens[static_cast<std::size_t>(cb)];
    const Index l_out = config_.seq_len_out(cb);
    cblock.mlp_w = put(cb_path + "mlp.weight", linear_init({l_in, l_out}, l_in, rng));
    cblock.mlp_b = put(cb_path + "mlp.bias", const_init({l_out}, 0.0));
    handles_.cblocks.push_back(std::move(cblock));
  }

  const Index merge_in = config_.merge_width();
  handles_.merge_w = put("merge.weight", linear_init({merge_in, 1}, merge_in, rng));
  handles_.merge_b = put("merge.bias", const_init({1}, 0.0));
}

Tensor cmblock_forward(const Tensor& x, const CmBlockParams& p, bool residual) {
  const Tensor normed = ad::layer_norm(x, p.ln_gamma, p.ln_beta);
  const Tensor mixed = ssm::mamba_block_forward(normed, p.mamba);
  return residual ? ad::add(x, mixed) : mixed;
}

Tensor cblock_forward(const Tensor& x, const CBlockParams& p, bool residual) {
  Tensor h = x;
  for (const CmBlockParams& block : p.cmblocks) {
    h = cmblock_forward(h, block, residual);
  }
  // Length adjustment: a linear layer over the time axis, channels untouched.
  Tensor t = ad::transpose_last2(h);  // (B, D, L_in)
  t = ad::add_rowvec(ad::matmul(t, p.mlp_w), p.mlp_b);
  return ad::transpose_last2(t);  // (B, L_out, D)
}

Tensor CryptoMamba::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(1) != config_.lookback || x.dim(2) != config_.num_features()) {
    throw ad::ShapeMismatch("forward: input must be (B, " +
                            std::to_string(config_.lookback) + ", " +
                            std::to_string(config_.num_features()) + "), got " +
                            ad::shape_str(x.shape()));
  }

  Tensor h = ad::add_rowvec(ad::matmul(x, handles_.embed_w), handles_.embed_b);
  std::vector<Tensor> outputs;
  for (const CBlockParams& cblock : handles_.cblocks) {
    h = cblock_forward(h, cblock, config_.residual);
    outputs.push_back(h);
  }

  const Tensor merged = ad::concat_time(outputs);
  const Tensor flat = ad::reshape(merged, {x.dim(0), static_cast<Index>(config_.merge_width())});
  const Tensor out =
      ad::add_rowvec(ad::matmul(flat, handles_.merge_w), handles_.merge_b);
  if (!out.value().isFinite().all()) {
    throw NonFiniteActivation("model output contains NaN or Inf");
  }
  return out;
}

double CryptoMamba::predict_one(const Eigen::MatrixXd& window) const {
  const Index l = window.rows();
  const Index f = window.cols();
  Array flat(l * f);
  for (Index r = 0; r < l; ++r) {
    for (Index c = 0; c < f; ++c) flat(r * f + c) = window(r, c);
  }
  return forward(Tensor({1, l, f}, std::move(flat))).value()(0);
}

Index count_parameters(const ad::ParamStore& store) { return store.total_size(); }

double predict_next_close(const CryptoMamba& model, std::span<const data::OhlcvBar> bars,
                          const data::Normalizer& normalizer) {
  const int lookback = model.config().lookback;
  if (static_cast<int>(bars.size()) != lookback) {
    throw std::invalid_argument("predict_next_close: expected exactly " +
                                std::to_string(lookback) + " bars");
  }
  const int f = model.config().num_features();
  Eigen::MatrixXd window(lookback, f);
  for (int r = 0; r < lookback; ++r) {
    window.row(r) = normalizer.feature_row(bars[static_cast<std::size_t>(r)]).head(f);
  }
  return normalizer.denormalize_target(model.predict_one(window));
}

}  // namespace cm::model
