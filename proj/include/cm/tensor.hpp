#pragma once

#include "cm/common.hpp"

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cm::ad {

using Shape = std::vector<Index>;

Index numel(const Shape& s);
std::string shape_str(const Shape& s);

struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NotScalarLoss : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct MissingGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// One recorded computation. `value` is the forward result; `backprop`
// scatters `grad` into the parents. `saved` keeps whatever intermediate the
// backward rule needs beyond parent values (e.g. scan states).
struct Node {
  Shape shape;
  Array value;
  Array grad;   // empty until the node participates in a backward pass
  Array saved;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  Array& ensure_grad() {
    if (grad.size() == 0) {
      grad = Array::Zero(value.size());
    }
    return grad;
  }

  void accumulate(const Array& g) { ensure_grad() += g; }
};

}  // namespace detail

// Value handle over a recorded computation graph. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Array values, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);

  explicit operator bool() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  Index size() const { return node_->value.size(); }

  const Array& value() const { return node_->value; }
  Array& value() { return node_->value; }
  double scalar_value() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Array& grad() const;
  void zero_grad() { node_->grad.resize(0); }

  const char* op() const { return node_->op; }

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Records one operation: computes nothing itself, just wires the node. The
// result requires a gradient iff any input does; otherwise parents and the
// backward rule are dropped so inference builds no graph.
Tensor record(const char* op, Shape shape, Array value,
              std::vector<Tensor> inputs,
              std::function<void(detail::Node&)> backprop, Array saved = {});

// Named parameter tensors with deterministic (sorted) iteration order.
class ParamStore {
 public:
  Tensor& add(const std::string& path, Tensor t);
  Tensor& at(const std::string& path);
  const Tensor& at(const std::string& path) const;
  bool contains(const std::string& path) const { return params_.count(path) != 0; }

  std::size_t size() const { return params_.size(); }
  Index total_size() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grads();

  // Detached copies of the parameter values, keyed by path.
  std::map<std::string, Array> snapshot() const;
  void load(const std::map<std::string, Array>& snap);

 private:
  std::map<std::string, Tensor> params_;
};

// Reverse-mode sweep from a scalar loss. Grads of every node reachable from
// `loss` are recomputed from scratch on each call (no cross-call
// accumulation). Throws NotScalarLoss unless numel(loss) == 1.
void backward(const Tensor& loss);

// Same, but first clears the grad of every parameter in `store`, so
// parameters the loss does not reach end up with an explicit zero grad.
void backward(const Tensor& loss, ParamStore& store);

}  // namespace cm::ad
