#include "cm/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace cm::ad {

Index numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, Array values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeMismatch("tensor shape " + shape_str(shape) + " does not match " +
                        std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor({1}, Array::Constant(1, v), requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Array v = Array::Zero(numel(shape));
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Array v = Array::Constant(numel(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

double Tensor::scalar_value() const {
  if (size() != 1) {
    throw ShapeMismatch("expected a scalar, got shape " + shape_str(shape()));
  }
  return node_->value(0);
}

const Array& Tensor::grad() const {
  if (!has_grad()) {
    throw MissingGradient(std::string("no gradient recorded for ") + node_->op + " tensor");
  }
  return node_->grad;
}

Tensor record(const char* op, Shape shape, Array value, std::vector<Tensor> inputs,
              std::function<void(detail::Node&)> backprop, Array saved) {
  Tensor out(std::move(shape), std::move(value));
  auto node = out.node();
  node->op = op;
  for (const Tensor& in : inputs) {
    if (in.requires_grad()) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (const Tensor& in : inputs) node->parents.push_back(in.node());
    node->backprop = std::move(backprop);
    node->saved = std::move(saved);
  }
  return out;
}

Tensor& ParamStore::add(const std::string& path, Tensor t) {
  auto [it, inserted] = params_.emplace(path, std::move(t));
  if (!inserted) {
    throw std::invalid_argument("duplicate parameter path '" + path + "'");
  }
  return it->second;
}

Tensor& ParamStore::at(const std::string& path) {
  auto it = params_.find(path);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter path '" + path + "'");
  }
  return it->second;
}

const Tensor& ParamStore::at(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter path '" + path + "'");
  }
  return it->second;
}

Index ParamStore::total_size() const {
  Index n = 0;
  for (const auto& [path, t] : params_) n += t.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [path, t] : params_) t.zero_grad();
}

std::map<std::string, Array> ParamStore::snapshot() const {
  std::map<std::string, Array> out;
  for (const auto& [path, t] : params_) out.emplace(path, t.value());
  return out;
}

void ParamStore::load(const std::map<std::string, Array>& snap) {
  for (auto& [path, t] : params_) {
    auto it = snap.find(path);
    if (it == snap.end() || it->second.size() != t.size()) {
      throw std::invalid_argument("snapshot does not match parameter '" + path + "'");
    }
    t.value() = it->second;
  }
}

namespace {

// Iterative post-order over parents; returns nodes with every parent
// appearing before its consumer.
std::vector<detail::Node*> topo_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

void backward(const Tensor& loss) {
  if (!loss) {
    throw NotScalarLoss("backward on an empty tensor");
  }
  if (loss.size() != 1) {
    throw NotScalarLoss("loss must be scalar, got shape " + shape_str(loss.shape()));
  }

  std::vector<detail::Node*> order = topo_order(loss.node().get());
  for (detail::Node* n : order) n->grad.resize(0);

  loss.node()->grad = Array::Ones(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop && n->grad.size() != 0) {
      n->backprop(*n);
    }
  }
}

void backward(const Tensor& loss, ParamStore& store) {
  store.zero_grads();
  backward(loss);
  for (auto& [path, t] : store) {
    if (!t.has_grad()) {
      t.node()->grad = Array::Zero(t.size());
    }
  }
}

}  // namespace cm::ad
