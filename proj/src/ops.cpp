#include "cm/ops.hpp"

#include <cmath>

namespace cm::ad {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

CMapRM view2d(const Array& a, Index rows, Index cols) {
  return CMapRM(a.data(), rows, cols);
}
MapRM view2d(Array& a, Index rows, Index cols) {
  return MapRM(a.data(), rows, cols);
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(op) + ": shapes " + shape_str(a.shape()) +
                        " and " + shape_str(b.shape()) + " differ");
  }
}

Index last_dim(const Tensor& x) { return x.shape().back(); }

Index leading(const Tensor& x) { return x.size() / last_dim(x); }

Array sigmoid(const Array& x) { return ((x * 0.5).tanh() + 1.0) * 0.5; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  return record("add", a.shape(), a.value() + b.value(), {a, b}, [](detail::Node& n) {
    n.parents[0]->accumulate(n.grad);
    n.parents[1]->accumulate(n.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  return record("sub", a.shape(), a.value() - b.value(), {a, b}, [](detail::Node& n) {
    n.parents[0]->accumulate(n.grad);
    n.parents[1]->ensure_grad() -= n.grad;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  return record("mul", a.shape(), a.value() * b.value(), {a, b}, [](detail::Node& n) {
    n.parents[0]->ensure_grad() += n.grad * n.parents[1]->value;
    n.parents[1]->ensure_grad() += n.grad * n.parents[0]->value;
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  return record("div", a.shape(), a.value() / b.value(), {a, b}, [](detail::Node& n) {
    n.parents[0]->ensure_grad() += n.grad / n.parents[1]->value;
    n.parents[1]->ensure_grad() -= n.grad * n.value / n.parents[1]->value;
  });
}

Tensor scale(const Tensor& x, double c) {
  return record("scale", x.shape(), x.value() * c, {x}, [c](detail::Node& n) {
    n.parents[0]->ensure_grad() += n.grad * c;
  });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2) {
    throw ShapeMismatch("matmul: weight must be rank 2, got " + shape_str(w.shape()));
  }
  const Index k = last_dim(x);
  if (k != w.dim(0)) {
    throw ShapeMismatch("matmul: inner dimensions of " + shape_str(x.shape()) +
                        " and " + shape_str(w.shape()) + " differ");
  }
  const Index rows = leading(x);
  const Index cols = w.dim(1);

  Shape out_shape = x.shape();
  out_shape.back() = cols;
  Array out(rows * cols);
  view2d(out, rows, cols).noalias() = view2d(x.value(), rows, k) * view2d(w.value(), k, cols);

  return record("matmul", std::move(out_shape), std::move(out), {x, w},
                [rows, k, cols](detail::Node& n) {
                  auto g = view2d(n.grad, rows, cols);
                  auto xv = view2d(n.parents[0]->value, rows, k);
                  auto wv = view2d(n.parents[1]->value, k, cols);
                  view2d(n.parents[0]->ensure_grad(), rows, k).noalias() += g * wv.transpose();
                  view2d(n.parents[1]->ensure_grad(), k, cols).noalias() += xv.transpose() * g;
                });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  const Index c = last_dim(x);
  if (b.rank() != 1 || b.dim(0) != c) {
    throw ShapeMismatch("add_rowvec: bias " + shape_str(b.shape()) +
                        " does not match last axis of " + shape_str(x.shape()));
  }
  const Index rows = leading(x);
  Array out = x.value();
  view2d(out, rows, c).rowwise() += view2d(b.value(), 1, c).row(0);

  return record("add_rowvec", x.shape(), std::move(out), {x, b}, [rows, c](detail::Node& n) {
    n.parents[0]->accumulate(n.grad);
    view2d(n.parents[1]->ensure_grad(), 1, c).row(0) +=
        view2d(n.grad, rows, c).colwise().sum();
  });
}

Tensor exp(const Tensor& x) {
  return record("exp", x.shape(), x.value().exp(), {x}, [](detail::Node& n) {
    n.parents[0]->ensure_grad() += n.grad * n.value;
  });
}

Tensor sqrt(const Tensor& x) {
  return record("sqrt", x.shape(), x.value().sqrt(), {x}, [](detail::Node& n) {
    n.parents[0]->ensure_grad() += n.grad / (2.0 * n.value);
  });
}

Tensor softplus(const Tensor& x) {
  // max(x, 0) + log1p(exp(-|x|)) is stable for large |x|.
  Array v = x.value().max(0.0) + (-x.value().abs()).exp().log1p();
  return record("softplus", x.shape(), std::move(v), {x}, [](detail::Node& n) {
    n.parents[0]->ensure_grad() += n.grad * sigmoid(n.parents[0]->value);
  });
}

Tensor silu(const Tensor& x) {
  Array s = sigmoid(x.value());
  return record("silu", x.shape(), x.value() * s, {x}, [](detail::Node& n) {
    const Array s = sigmoid(n.parents[0]->value);
    n.parents[0]->ensure_grad() +=
        n.grad * s * (1.0 + n.parents[0]->value * (1.0 - s));
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Index c = last_dim(x);
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c) {
    throw ShapeMismatch("layer_norm: gamma/beta must have length " + std::to_string(c));
  }
  const Index rows = leading(x);

  // saved = [xhat (rows*c), inv_std (rows)]
  Array saved(rows * c + rows);
  Array out(rows * c);
  auto xv = view2d(x.value(), rows, c);
  auto xhat = view2d(saved, rows, c);
  for (Index r = 0; r < rows; ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    const double inv_std = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std;
    saved(rows * c + r) = inv_std;
  }
  view2d(out, rows, c) =
      (xhat.array().rowwise() * view2d(gamma.value(), 1, c).row(0).array()).rowwise() +
      view2d(beta.value(), 1, c).row(0).array();

  return record("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                [rows, c](detail::Node& n) {
                  auto g = view2d(n.grad, rows, c);
                  auto xhat = view2d(n.saved, rows, c);
                  auto gammav = view2d(n.parents[1]->value, 1, c).row(0);
                  auto gx = view2d(n.parents[0]->ensure_grad(), rows, c);
                  auto ggamma = view2d(n.parents[1]->ensure_grad(), 1, c).row(0);
                  auto gbeta = view2d(n.parents[2]->ensure_grad(), 1, c).row(0);

                  for (Index r = 0; r < rows; ++r) {
                    const double inv_std = n.saved(rows * c + r);
                    const Eigen::ArrayXd gh =
                        g.row(r).array().transpose() * gammav.array().transpose();
                    const Eigen::ArrayXd xh = xhat.row(r).array().transpose();
                    const double m1 = gh.mean();
                    const double m2 = (gh * xh).mean();
                    gx.row(r).array() += (inv_std * (gh - m1 - xh * m2)).transpose();
                  }
                  ggamma.array() += (g.array() * xhat.array()).colwise().sum();
                  gbeta.array() += g.array().colwise().sum();
                },
                std::move(saved));
}

Tensor sum(const Tensor& x) {
  return record("sum", {1}, Array::Constant(1, x.value().sum()), {x}, [](detail::Node& n) {
    n.parents[0]->ensure_grad() += n.grad(0);
  });
}

Tensor mean(const Tensor& x) {
  const double inv_n = 1.0 / static_cast<double>(x.size());
  return record("mean", {1}, Array::Constant(1, x.value().mean()), {x},
                [inv_n](detail::Node& n) {
                  n.parents[0]->ensure_grad() += n.grad(0) * inv_n;
                });
}

Tensor slice_lastdim(const Tensor& x, Index begin, Index len) {
  const Index c = last_dim(x);
  if (begin < 0 || len <= 0 || begin + len > c) {
    throw ShapeMismatch("slice_lastdim: [" + std::to_string(begin) + ", " +
                        std::to_string(begin + len) + ") out of range for width " +
                        std::to_string(c));
  }
  const Index rows = leading(x);
  Shape out_shape = x.shape();
  out_shape.back() = len;
  Array out(rows * len);
  view2d(out, rows, len) = view2d(x.value(), rows, c).middleCols(begin, len);

  return record("slice_lastdim", std::move(out_shape), std::move(out), {x},
                [rows, c, begin, len](detail::Node& n) {
                  view2d(n.parents[0]->ensure_grad(), rows, c).middleCols(begin, len) +=
                      view2d(n.grad, rows, len);
                });
}

Tensor concat_time(const std::vector<Tensor>& xs) {
  if (xs.empty()) {
    throw ShapeMismatch("concat_time: no inputs");
  }
  const Index b = xs.front().dim(0);
  const Index c = xs.front().shape().back();
  Index total = 0;
  for (const Tensor& x : xs) {
    if (x.rank() != 3 || x.dim(0) != b || x.dim(2) != c) {
      throw ShapeMismatch("concat_time: incompatible input " + shape_str(x.shape()));
    }
    total += x.dim(1);
  }

  // Row-major (B, L, C) viewed as (B, L*C): stacking along L is a column
  // concatenation of those views.
  Array out(b * total * c);
  auto ov = view2d(out, b, total * c);
  std::vector<Tensor> inputs;
  Index off = 0;
  for (const Tensor& x : xs) {
    const Index w = x.dim(1) * c;
    ov.middleCols(off, w) = view2d(x.value(), b, w);
    off += w;
    inputs.push_back(x);
  }

  return record("concat_time", {b, total, c}, std::move(out), std::move(inputs),
                [b, c, total](detail::Node& n) {
                  auto g = view2d(n.grad, b, total * c);
                  Index off = 0;
                  for (auto& p : n.parents) {
                    const Index w = (p->value.size() / (b * c)) * c;
                    view2d(p->ensure_grad(), b, w) += g.middleCols(off, w);
                    off += w;
                  }
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeMismatch("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                        " changes element count");
  }
  return record("reshape", std::move(shape), x.value(), {x}, [](detail::Node& n) {
    n.parents[0]->accumulate(n.grad);
  });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw ShapeMismatch("transpose_last2: rank must be 2 or 3, got " + shape_str(x.shape()));
  }
  const Index b = x.rank() == 3 ? x.dim(0) : 1;
  const Index r = x.dim(x.rank() - 2);
  const Index c = x.dim(x.rank() - 1);

  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
  Array out(x.size());
  for (Index i = 0; i < b; ++i) {
    MapRM(out.data() + i * r * c, c, r) =
        CMapRM(x.value().data() + i * r * c, r, c).transpose();
  }

  return record("transpose_last2", std::move(out_shape), std::move(out), {x},
                [b, r, c](detail::Node& n) {
                  Array& gx = n.parents[0]->ensure_grad();
                  for (Index i = 0; i < b; ++i) {
                    MapRM(gx.data() + i * r * c, r, c) +=
                        CMapRM(n.grad.data() + i * r * c, c, r).transpose();
                  }
                });
}

Tensor conv1d_causal(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 3) {
    throw ShapeMismatch("conv1d_causal: input must be (B, L, C), got " + shape_str(x.shape()));
  }
  const Index nb = x.dim(0), len = x.dim(1), c = x.dim(2);
  if (w.rank() != 2 || w.dim(1) != c) {
    throw ShapeMismatch("conv1d_causal: kernel must be (K, " + std::to_string(c) + ")");
  }
  if (b.rank() != 1 || b.dim(0) != c) {
    throw ShapeMismatch("conv1d_causal: bias must have length " + std::to_string(c));
  }
  const Index k = w.dim(0);

  Array out(x.size());
  auto ov = view2d(out, nb * len, c);
  ov.rowwise() = view2d(b.value(), 1, c).row(0);
  auto xv = view2d(x.value(), nb * len, c);
  auto wv = view2d(w.value(), k, c);
  // Tap j reaches back (K-1-j) steps; out-of-range history is zero.
  for (Index i = 0; i < nb; ++i) {
    for (Index j = 0; j < k; ++j) {
      const Index back = k - 1 - j;
      if (back >= len) continue;
      ov.middleRows(i * len + back, len - back).array() +=
          xv.middleRows(i * len, len - back).array().rowwise() * wv.row(j).array();
    }
  }

  return record("conv1d_causal", x.shape(), std::move(out), {x, w, b},
                [nb, len, c, k](detail::Node& n) {
                  auto g = view2d(n.grad, nb * len, c);
                  auto xv = view2d(n.parents[0]->value, nb * len, c);
                  auto wv = view2d(n.parents[1]->value, k, c);
                  auto gx = view2d(n.parents[0]->ensure_grad(), nb * len, c);
                  auto gw = view2d(n.parents[1]->ensure_grad(), k, c);
                  auto gb = view2d(n.parents[2]->ensure_grad(), 1, c);
                  gb.row(0) += g.colwise().sum();
                  for (Index i = 0; i < nb; ++i) {
                    for (Index j = 0; j < k; ++j) {
                      const Index back = k - 1 - j;
                      if (back >= len) continue;
                      auto gslab = g.middleRows(i * len + back, len - back);
                      gx.middleRows(i * len, len - back).array() +=
                          gslab.array().rowwise() * wv.row(j).array();
                      gw.row(j).array() +=
                          (gslab.array() * xv.middleRows(i * len, len - back).array())
                              .colwise()
                              .sum();
                    }
                  }
                });
}

Tensor rmse_loss(const Tensor& pred, const Tensor& target) {
  check_same_shape("rmse_loss", pred, target);
  const Tensor d = sub(pred, target);
  return sqrt(mean(mul(d, d)));
}

}  // namespace cm::ad
