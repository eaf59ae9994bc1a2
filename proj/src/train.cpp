#include "cm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

namespace cm::train {

using cm::Array;
using ad::Tensor;
using data::WindowSample;

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("train config: learning_rate must be positive");
  if (batch_size <= 0) throw std::invalid_argument("train config: batch_size must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be nonnegative");
  if (plateau_factor <= 0.0 || plateau_factor >= 1.0) {
    throw std::invalid_argument("train config: plateau_factor must lie in (0, 1)");
  }
  if (plateau_patience <= 0) throw std::invalid_argument("train config: plateau_patience must be positive");
  if (early_stop_patience <= 0) throw std::invalid_argument("train config: early_stop_patience must be positive");
  if (max_epochs < 0) throw std::invalid_argument("train config: max_epochs must be nonnegative");
}

void adam_step(ad::ParamStore& store, AdamState& state, double lr, const TrainConfig& config) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));

  for (auto& [path, param] : store) {
    if (!param.has_grad()) {
      throw ad::MissingGradient("adam_step: no gradient for '" + path + "'");
    }
    const Array& g = param.grad();
    auto [it, inserted] = state.moments.try_emplace(path);
    AdamState::Moments& mom = it->second;
    if (inserted) {
      mom.m = Array::Zero(param.size());
      mom.v = Array::Zero(param.size());
    }

    mom.m = kAdamBeta1 * mom.m + (1.0 - kAdamBeta1) * g;
    mom.v = kAdamBeta2 * mom.v + (1.0 - kAdamBeta2) * g.square();

    Array& value = param.value();
    if (config.weight_decay > 0.0) {
      value *= 1.0 - lr * config.weight_decay;
    }
    value -= lr * (mom.m / bc1) / ((mom.v / bc2).sqrt() + kAdamEps);
  }
}

namespace {

Tensor stack_inputs(const std::vector<WindowSample>& windows,
                    const std::vector<std::size_t>& order, std::size_t begin,
                    std::size_t count) {
  const Index l = windows.front().inputs.rows();
  const Index f = windows.front().inputs.cols();
  Array flat(static_cast<Index>(count) * l * f);
  for (std::size_t s = 0; s < count; ++s) {
    const Eigen::MatrixXd& m = windows[order[begin + s]].inputs;
    for (Index r = 0; r < l; ++r) {
      for (Index c = 0; c < f; ++c) {
        flat((static_cast<Index>(s) * l + r) * f + c) = m(r, c);
      }
    }
  }
  return Tensor({static_cast<Index>(count), l, f}, std::move(flat));
}

Tensor stack_targets(const std::vector<WindowSample>& windows,
                     const std::vector<std::size_t>& order, std::size_t begin,
                     std::size_t count) {
  Array t(static_cast<Index>(count));
  for (std::size_t s = 0; s < count; ++s) {
    t(static_cast<Index>(s)) = windows[order[begin + s]].target;
  }
  return Tensor({static_cast<Index>(count), 1}, std::move(t));
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return order;
}

}  // namespace

std::vector<double> predict_normalized(const model::CryptoMamba& model,
                                       const std::vector<WindowSample>& windows,
                                       int batch_size) {
  std::vector<double> out;
  out.reserve(windows.size());
  const auto order = identity_order(windows.size());
  for (std::size_t begin = 0; begin < windows.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t count =
        std::min<std::size_t>(static_cast<std::size_t>(batch_size), windows.size() - begin);
    const Tensor pred = model.forward(stack_inputs(windows, order, begin, count));
    for (Index i = 0; i < pred.size(); ++i) out.push_back(pred.value()(i));
  }
  return out;
}

double evaluate_rmse(const model::CryptoMamba& model, const std::vector<WindowSample>& windows,
                     int batch_size) {
  const std::vector<double> preds = predict_normalized(model, windows, batch_size);
  double ss = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const double d = preds[i] - windows[i].target;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(windows.size()));
}

TrainResult train(model::CryptoMamba& model, const std::vector<WindowSample>& train_w,
                  const std::vector<WindowSample>& val_w, const TrainConfig& config) {
  config.validate();
  if (train_w.empty() || val_w.empty()) {
    throw std::invalid_argument("train: window lists must be nonempty");
  }

  TrainResult result;
  result.best_params = model.params().snapshot();
  result.best_val_rmse = std::numeric_limits<double>::infinity();

  AdamState adam;
  double lr = config.learning_rate;
  int epochs_since_best = 0;
  int epochs_since_plateau = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::vector<std::size_t> order = identity_order(train_w.size());
    Rng shuffle_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);

    double train_ss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < train_w.size();
         begin += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const std::size_t count = std::min<std::size_t>(
          static_cast<std::size_t>(config.batch_size), train_w.size() - begin);

      Tensor loss;
      try {
        const Tensor pred = model.forward(stack_inputs(train_w, order, begin, count));
        loss = ad::rmse_loss(pred, stack_targets(train_w, order, begin, count));
      } catch (const model::NonFiniteActivation& e) {
        throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + ": " + e.what());
      }

      const double loss_value = loss.scalar_value();
      if (!std::isfinite(loss_value)) {
        throw NonFiniteLoss("non-finite loss in epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index));
      }
      train_ss += loss_value * loss_value * static_cast<double>(count);

      ad::backward(loss, model.params());
      adam_step(model.params(), adam, lr, config);
    }

    const double train_rmse = std::sqrt(train_ss / static_cast<double>(train_w.size()));
    const double val_rmse = evaluate_rmse(model, val_w, config.batch_size);
    result.history.push_back({epoch, train_rmse, val_rmse, lr});

    if (val_rmse < result.best_val_rmse) {
      result.best_val_rmse = val_rmse;
      result.best_epoch = epoch;
      result.best_params = model.params().snapshot();
      epochs_since_best = 0;
      epochs_since_plateau = 0;
    } else {
      ++epochs_since_best;
      ++epochs_since_plateau;
    }

    if (epochs_since_best >= config.early_stop_patience) break;
    if (epochs_since_plateau >= config.plateau_patience) {
      lr *= config.plateau_factor;
      epochs_since_plateau = 0;
    }
  }

  model.params().load(result.best_params);
  if (result.best_epoch < 0) {
    // max_epochs == 0: the snapshot is the initial state; measure it so the
    // checkpoint still carries a real validation RMSE.
    result.best_val_rmse = evaluate_rmse(model, val_w, config.batch_size);
  }
  return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "epoch,train_rmse,val_rmse,lr\n";
  char line[160];
  for (const EpochStats& e : history) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_rmse,
                  e.val_rmse, e.lr);
    out << line;
  }
}

// --- checkpoint io ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'M', 'C', 'K', 'P', 'T', '1', '\n'};

static_assert(sizeof(double) == 8);

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &d, 8);
  put_u64(buf, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double d = 0.0;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const ad::ParamStore& store, double val_rmse) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, static_cast<std::uint32_t>(config_text.size()));
  buf += config_text;
  put_f64(buf, val_rmse);
  put_u32(buf, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put_u32(buf, static_cast<std::uint32_t>(t.shape().size()));
    for (Index d : t.shape()) put_u64(buf, static_cast<std::uint64_t>(d));
    for (Index i = 0; i < t.size(); ++i) put_f64(buf, t.value()(i));
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("'" + path + "' is not a checkpoint file");
  }
  Reader r{buf, sizeof(kMagic)};

  Checkpoint ckpt;
  ckpt.config_text = r.bytes(r.u32());
  ckpt.val_rmse = r.f64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    ad::Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<Index>(r.u64());
    Array values(ad::numel(shape));
    for (Index i = 0; i < values.size(); ++i) values(i) = r.f64();
    ckpt.params.emplace(name, std::make_pair(std::move(shape), std::move(values)));
  }
  return ckpt;
}

void apply_checkpoint(model::CryptoMamba& model, const Checkpoint& ckpt) {
  ad::ParamStore& store = model.params();
  if (ckpt.params.size() != store.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(ckpt.params.size()) +
                             " parameters, model expects " + std::to_string(store.size()));
  }
  for (auto& [name, t] : store) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end()) {
      throw std::runtime_error("checkpoint is missing parameter '" + name + "'");
    }
    if (it->second.first != t.shape()) {
      throw std::runtime_error("checkpoint shape mismatch for '" + name + "': got " +
                               ad::shape_str(it->second.first) + ", model expects " +
                               ad::shape_str(t.shape()));
    }
    t.value() = it->second.second;
  }
}

}  // namespace cm::train
