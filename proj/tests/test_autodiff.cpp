#include "cm/ops.hpp"

#include "support/check.hpp"

#include <gtest/gtest.h>

using namespace cm;
using namespace cm::ad;
using cmtest::check_gradients;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Array v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

TEST(TensorBasics, ShapeAndValues) {
  const Tensor t({2, 3}, Array::LinSpaced(6, 0, 5));
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(t.rank(), 2);
  EXPECT_FALSE(t.requires_grad());
  EXPECT_THROW(Tensor({2, 2}, Array::Zero(5)), ShapeMismatch);
}

TEST(TensorBasics, ElementwiseShapes) {
  Rng rng(1);
  const Tensor a = random_tensor({3}, rng);
  const Tensor b = random_tensor({3}, rng);
  EXPECT_EQ(mul(a, b).shape(), (Shape{3}));
  EXPECT_THROW(mul(a, random_tensor({4}, rng)), ShapeMismatch);
}

TEST(TensorBasics, MatmulShapeChecks) {
  Rng rng(2);
  const Tensor a = random_tensor({2, 3}, rng);
  const Tensor b = random_tensor({4, 5}, rng);
  EXPECT_THROW(matmul(a, b), ShapeMismatch);
  EXPECT_EQ(matmul(a, random_tensor({3, 5}, rng)).shape(), (Shape{2, 5}));
  EXPECT_EQ(matmul(random_tensor({2, 4, 3}, rng), random_tensor({3, 6}, rng)).shape(),
            (Shape{2, 4, 6}));
}

TEST(TensorBasics, SoftplusAtZeroIsLogTwo) {
  const Tensor x = Tensor::zeros({1});
  EXPECT_NEAR(softplus(x).value()(0), std::log(2.0), 1e-15);
}

TEST(TensorBasics, InferenceBuildsNoGraph) {
  const Tensor a({2}, Array::Ones(2), false);
  const Tensor out = silu(mul(a, a));
  EXPECT_FALSE(out.requires_grad());
  EXPECT_THROW(backward(out), NotScalarLoss);  // non-scalar regardless
}

TEST(Backward, SumGivesOnes) {
  const Tensor p({5}, Array::LinSpaced(5, 1, 5), true);
  backward(sum(p));
  EXPECT_TRUE((p.grad() == 1.0).all());
}

TEST(Backward, QuadraticHandGradient) {
  Array v(2);
  v << 1.0, 2.0;
  const Tensor p({2}, v, true);
  backward(sum(mul(p, p)));
  EXPECT_DOUBLE_EQ(p.grad()(0), 2.0);
  EXPECT_DOUBLE_EQ(p.grad()(1), 4.0);
}

TEST(Backward, ReuseAccumulates) {
  const Tensor p = Tensor::full({3}, 2.0, true);
  backward(sum(add(p, p)));
  EXPECT_TRUE((p.grad() == 2.0).all());
}

TEST(Backward, GradsAreRecomputedPerCall) {
  const Tensor p = Tensor::full({3}, 2.0, true);
  backward(sum(p));
  backward(sum(p));
  EXPECT_TRUE((p.grad() == 1.0).all());
}

TEST(Backward, NotScalarLoss) {
  const Tensor p = Tensor::full({3}, 2.0, true);
  EXPECT_THROW(backward(add(p, p)), NotScalarLoss);
}

TEST(Backward, UnreachableParamsGetZeroGrad) {
  ParamStore store;
  store.add("used", Tensor::full({2}, 1.0, true));
  store.add("unused", Tensor::full({2}, 1.0, true));
  backward(sum(store.at("used")), store);
  EXPECT_TRUE((store.at("used").grad() == 1.0).all());
  EXPECT_TRUE((store.at("unused").grad() == 0.0).all());
}

TEST(Backward, MissingGradientThrows) {
  const Tensor p = Tensor::full({2}, 1.0, true);
  EXPECT_THROW(p.grad(), MissingGradient);
}

TEST(ParamStore, SortedIterationAndDuplicates) {
  ParamStore store;
  store.add("b", Tensor::zeros({2}, true));
  store.add("a", Tensor::zeros({3}, true));
  EXPECT_THROW(store.add("a", Tensor::zeros({1}, true)), std::invalid_argument);
  std::vector<std::string> names;
  for (const auto& [name, t] : store) names.push_back(name);
  EXPECT_EQ(names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(store.total_size(), 5);
}

TEST(RmseLoss, HandValues) {
  Array pv(2), tv(2);
  pv << 0.0, 4.0;
  tv << 0.0, 0.0;
  const Tensor loss = rmse_loss(Tensor({2}, pv), Tensor({2}, tv));
  EXPECT_NEAR(loss.scalar_value(), std::sqrt(8.0), 1e-12);

  const Tensor same = Tensor::full({4}, 1.25);
  EXPECT_DOUBLE_EQ(rmse_loss(same, same).scalar_value(), 0.0);
  EXPECT_THROW(rmse_loss(same, Tensor::zeros({3})), ShapeMismatch);
}

TEST(RmseLoss, GradientNearTargetMatchesFiniteDifferences) {
  Rng rng(5);
  Tensor target = random_tensor({6}, rng);
  Array shifted = target.value() + 0.05;  // epsilon off the (non-differentiable) zero
  std::vector<Tensor> inputs{Tensor({6}, shifted, true)};
  const auto res = check_gradients(
      [&](std::vector<Tensor>& in) { return rmse_loss(in[0], target); }, inputs);
  EXPECT_TRUE(res.ok) << res.detail;
}

// Finite-difference sweeps over every op, small random shapes.

TEST(GradCheck, ElementwiseOps) {
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Tensor> inputs{random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)};
    auto res = check_gradients(
        [](std::vector<Tensor>& in) {
          return sum(add(mul(in[0], in[1]), sub(in[0], scale(in[1], 0.7))));
        },
        inputs);
    EXPECT_TRUE(res.ok) << res.detail;
  }
}

TEST(GradCheck, DivisionAwayFromZero) {
  Rng rng(12);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Tensor> inputs{random_tensor({4}, rng, 0.5, 2.0),
                               random_tensor({4}, rng, 0.5, 2.0)};
    auto res = check_gradients(
        [](std::vector<Tensor>& in) { return sum(div(in[0], in[1])); }, inputs);
    EXPECT_TRUE(res.ok) << res.detail;
  }
}

TEST(GradCheck, MatmulAndBias) {
  Rng rng(13);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Tensor> inputs{random_tensor({2, 3, 4}, rng), random_tensor({4, 2}, rng),
                               random_tensor({2}, rng)};
    auto res = check_gradients(
        [](std::vector<Tensor>& in) {
          return mean(add_rowvec(matmul(in[0], in[1]), in[2]));
        },
        inputs);
    EXPECT_TRUE(res.ok) << res.detail;
  }
}

TEST(GradCheck, Nonlinearities) {
  Rng rng(14);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Tensor> inputs{random_tensor({7}, rng, -2.0, 2.0)};
    auto res = check_gradients(
        [](std::vector<Tensor>& in) { return sum(silu(softplus(exp(in[0])))); }, inputs);
    EXPECT_TRUE(res.ok) << res.detail;
  }
}

TEST(GradCheck, SqrtPositiveDomain) {
  Rng rng(15);
  std::vector<Tensor> inputs{random_tensor({5}, rng, 0.5, 3.0)};
  auto res = check_gradients([](std::vector<Tensor>& in) { return sum(sqrt(in[0])); }, inputs);
  EXPECT_TRUE(res.ok) << res.detail;
}

TEST(GradCheck, LayerNorm) {
  Rng rng(16);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Tensor> inputs{random_tensor({3, 4}, rng), random_tensor({4}, rng, 0.5, 1.5),
                               random_tensor({4}, rng)};
    auto res = check_gradients(
        [](std::vector<Tensor>& in) {
          // A non-uniform readout so every coefficient matters.
          const Tensor probe({3, 4}, Array::LinSpaced(12, 0.1, 1.2));
          return sum(mul(layer_norm(in[0], in[1], in[2]), probe));
        },
        inputs);
    EXPECT_TRUE(res.ok) << res.detail;
  }
}

TEST(GradCheck, SliceConcatReshapeTranspose) {
  Rng rng(17);
  std::vector<Tensor> inputs{random_tensor({2, 3, 4}, rng), random_tensor({2, 2, 4}, rng)};
  auto res = check_gradients(
      [](std::vector<Tensor>& in) {
        const Tensor cat = concat_time({in[0], in[1]});         // (2,5,4)
        const Tensor left = slice_lastdim(cat, 0, 2);           // (2,5,2)
        const Tensor t = transpose_last2(left);                 // (2,2,5)
        const Tensor flat = reshape(t, {2, 10});
        const Tensor probe({2, 10}, Array::LinSpaced(20, -1.0, 1.0));
        return sum(mul(flat, probe));
      },
      inputs);
  EXPECT_TRUE(res.ok) << res.detail;
}

TEST(GradCheck, CausalConv) {
  Rng rng(18);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Tensor> inputs{random_tensor({2, 6, 3}, rng), random_tensor({4, 3}, rng),
                               random_tensor({3}, rng)};
    auto res = check_gradients(
        [](std::vector<Tensor>& in) {
          const Tensor probe({2, 6, 3}, Array::LinSpaced(36, -0.5, 0.5));
          return sum(mul(conv1d_causal(in[0], in[1], in[2]), probe));
        },
        inputs);
    EXPECT_TRUE(res.ok) << res.detail;
  }
}

TEST(Conv, CausalityNoFutureLeak) {
  Rng rng(19);
  Tensor x = random_tensor({1, 8, 2}, rng);
  const Tensor w = random_tensor({4, 2}, rng);
  const Tensor b = random_tensor({2}, rng);
  const Array base = conv1d_causal(x, w, b).value();

  Array perturbed = x.value();
  perturbed(7 * 2 + 1) += 10.0;  // bump the last time step only
  const Tensor x2({1, 8, 2}, perturbed, true);
  const Array changed = conv1d_causal(x2, w, b).value();
  for (Index t = 0; t < 7; ++t) {
    for (Index c = 0; c < 2; ++c) {
      EXPECT_EQ(base(t * 2 + c), changed(t * 2 + c));
    }
  }
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  Rng rng(21);
  const Tensor x = random_tensor({3, 5}, rng);
  const Tensor w = random_tensor({5, 4}, rng);
  const Array a = matmul(silu(x), w).value();
  const Array b = matmul(silu(x), w).value();
  EXPECT_TRUE((a == b).all());
}
