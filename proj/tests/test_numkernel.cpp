#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "igstf/gradcheck.hpp"
#include "igstf/numkernel.hpp"
#include "test_util.hpp"

using namespace igstf;
using igstf::testing::random_tensor;
using igstf::testing::weighted_sum;

namespace {

Tensor eval(const std::function<Var(Tape&)>& f) {
  Tape tape(false);
  return f(tape).value();
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor b = Tensor::matrix({{2, 3}, {4, 5}});
  Tensor out = eval([&](Tape& t) { return matmul(t.constant(Tensor::identity(2)), t.constant(b)); });
  EXPECT_EQ(out, b);
}

TEST(Matmul, RowVectorPicksFirstRow) {
  Tensor out = eval([](Tape& t) {
    return matmul(t.constant(Tensor::matrix({{1, 0}})), t.constant(Tensor::matrix({{1, 2}, {3, 4}})));
  });
  EXPECT_EQ(out, Tensor::matrix({{1, 2}}));
}

TEST(Matmul, ZeroAnnihilates) {
  Tensor out = eval([](Tape& t) {
    return matmul(t.constant(Tensor::matrix({{1, 2}, {3, 4}})), t.constant(Tensor::matrix({{0}, {0}})));
  });
  EXPECT_EQ(out, Tensor::matrix({{0}, {0}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape t;
  try {
    matmul(t.constant(Tensor({2, 3})), t.constant(Tensor({2, 3})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("and [2x3]"), std::string::npos);
  }
}

TEST(Matmul, AssociativeOnRandomTensors) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor(rng, {3, 4});
    const Tensor b = random_tensor(rng, {4, 2});
    const Tensor c = random_tensor(rng, {2, 5});
    Tensor left = eval([&](Tape& t) { return matmul(matmul(t.constant(a), t.constant(b)), t.constant(c)); });
    Tensor right = eval([&](Tape& t) { return matmul(t.constant(a), matmul(t.constant(b), t.constant(c))); });
    EXPECT_LT(max_abs_diff(left, right), 1e-9);
  }
}

TEST(Softmax, ZerosGiveUniform) {
  Tensor out = eval([](Tape& t) { return softmax(t.constant(Tensor::vector({0, 0, 0})), 0); });
  for (double v : out.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, SingleEntryIsOne) {
  Tensor out = eval([](Tape& t) { return softmax(t.constant(Tensor::vector({-3.7})), 0); });
  EXPECT_EQ(out[0], 1.0);
}

TEST(Softmax, MaskForcesZero) {
  const Tensor mask = Tensor::vector({1, 0});
  Tensor out = eval([&](Tape& t) { return softmax(t.constant(Tensor::vector({1, 2})), 0, &mask); });
  EXPECT_EQ(out[0], 1.0);
  EXPECT_EQ(out[1], 0.0);
}

TEST(Softmax, FullyMaskedSliceIsZeroNotNaN) {
  const Tensor mask = Tensor::matrix({{1, 0}, {1, 0}});
  Tensor out = eval([&](Tape& t) { return softmax(t.constant(Tensor::matrix({{1, 2}, {3, 4}})), 0, &mask); });
  EXPECT_EQ(out.at(0, 1), 0.0);
  EXPECT_EQ(out.at(1, 1), 0.0);
  EXPECT_NEAR(out.at(0, 0) + out.at(1, 0), 1.0, 1e-15);
}

TEST(Softmax, NegativeInfinityIsMasked) {
  const double inf = std::numeric_limits<double>::infinity();
  Tensor out = eval([&](Tape& t) { return softmax(t.constant(Tensor::vector({-inf, -inf})), 0); });
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);
}

TEST(Softmax, SlicesSumToOneAlongEveryAxis) {
  Rng rng(3);
  const Tensor x = random_tensor(rng, {3, 4, 5}, 3.0);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Tensor y = eval([&](Tape& t) { return softmax(t.constant(x), axis); });
    const auto s = detail::split_axis(x.shape(), axis);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        double sum = 0.0;
        for (std::size_t k = 0; k < s.extent; ++k) {
          const double v = y[(o * s.extent + k) * s.inner + in];
          EXPECT_GE(v, 0.0);
          sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
      }
  }
}

TEST(LayerNorm, ConstantSliceCollapsesToBias) {
  Tensor out = eval([](Tape& t) {
    return layer_norm(t.constant(Tensor::vector({5, 5, 5})), t.constant(Tensor::vector({1, 1, 1})),
                      t.constant(Tensor::vector({0, 0, 0})));
  });
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, AlreadyStandardizedSliceIsKept) {
  Tensor out = eval([](Tape& t) {
    return layer_norm(t.constant(Tensor::vector({1, -1})), t.constant(Tensor::vector({1, 1})),
                      t.constant(Tensor::vector({0, 0})), 1e-12);
  });
  EXPECT_NEAR(out[0], 1.0, 1e-10);
  EXPECT_NEAR(out[1], -1.0, 1e-10);
}

TEST(LayerNorm, ZeroGainGivesBias) {
  Tensor out = eval([](Tape& t) {
    return layer_norm(t.constant(Tensor::vector({3, -2, 8})), t.constant(Tensor::vector({0, 0, 0})),
                      t.constant(Tensor::vector({0.5, -1, 2})));
  });
  EXPECT_EQ(out, Tensor::vector({0.5, -1, 2}));
}

TEST(LayerNorm, OutputSlicesAreStandardized) {
  Rng rng(11);
  const Tensor x = random_tensor(rng, {6, 8}, 4.0);
  Tensor y = eval([&](Tape& t) {
    return layer_norm(t.constant(x), t.constant(Tensor({8}, 1.0)), t.constant(Tensor({8}, 0.0)));
  });
  for (std::size_t r = 0; r < 6; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t k = 0; k < 8; ++k) mean += y.at(r, k);
    mean /= 8;
    for (std::size_t k = 0; k < 8; ++k) var += (y.at(r, k) - mean) * (y.at(r, k) - mean);
    var /= 8;
    EXPECT_LT(std::abs(mean), 1e-7);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(LayerNorm, RejectsMismatchedGain) {
  Tape t;
  EXPECT_THROW(layer_norm(t.constant(Tensor({2, 3})), t.constant(Tensor({2})), t.constant(Tensor({3}))),
               DimensionError);
}

TEST(Tape, BackwardRequiresScalar) {
  Tape t;
  ParamStore p;
  p.add("x", Tensor::vector({1, 2}));
  Var x = t.param(p, "x");
  EXPECT_THROW(t.backward(x), DimensionError);
}

TEST(Tape, ParamBindingIsCachedPerName) {
  Tape t;
  ParamStore p;
  p.add("x", Tensor::scalar(2.0));
  Var a = t.param(p, "x");
  Var b = t.param(p, "x");
  EXPECT_EQ(a.id, b.id);
  t.backward(mul(a, b));
  EXPECT_DOUBLE_EQ(t.param_grads().at("x")[0], 4.0);
}

TEST(GradCheck, SquareAtThree) {
  ParamStore p;
  p.add("x", Tensor::scalar(3.0));
  ScalarFn f = [](Tape& t, const ParamStore& ps) {
    Var x = t.param(ps, "x");
    return mul(x, x);
  };
  Tape t;
  Var y = f(t, p);
  t.backward(y);
  EXPECT_DOUBLE_EQ(t.param_grads().at("x")[0], 6.0);
  auto report = grad_check_all(f, p);
  EXPECT_TRUE(report.passed());
  EXPECT_LT(report.max_rel_error, 1e-8);
}

TEST(GradCheck, SumOfSoftmaxHasZeroGradient) {
  Rng rng(5);
  ParamStore p;
  p.add("x", random_tensor(rng, {5}));
  Tape t;
  Var y = sum_all(softmax(t.param(p, "x"), 0));
  t.backward(y);
  const GradMap grads = t.param_grads();
  for (double g : grads.at("x").data()) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(GradCheck, RejectsStepOutsideRange) {
  ParamStore p;
  p.add("x", Tensor::scalar(1.0));
  ScalarFn f = [](Tape& t, const ParamStore& ps) { return t.param(ps, "x"); };
  EXPECT_THROW(grad_check_all(f, p, 1e-2), ConfigError);
}

TEST(GradCheck, NonFiniteValueNamesParameter) {
  ParamStore p;
  p.add("w", Tensor::scalar(1.0));
  ScalarFn f = [](Tape& t, const ParamStore& ps) {
    Var w = t.param(ps, "w");
    // Finite at w = 1, infinite at w = 1 + h.
    const double v = w.value()[0];
    Tensor out = Tensor::scalar(v > 1.0 ? std::numeric_limits<double>::infinity() : v);
    return t.push(std::move(out), {w}, [](Tape&, const Tensor&) {});
  };
  try {
    grad_check_all(f, p);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'w'"), std::string::npos);
  }
}

// Every differentiable op against central differences.
class OpGradient : public ::testing::Test {
 protected:
  void check(const std::function<Var(Tape&, const ParamStore&)>& body) {
    ScalarFn f = [&](Tape& t, const ParamStore& ps) { return weighted_sum(body(t, ps)); };
    auto report = grad_check_all(f, params_);
    for (const auto& e : report.entries) EXPECT_LT(e.max_rel_error, 1e-4) << e.name;
  }
  ParamStore params_;
  Rng rng_{2024};
};

TEST_F(OpGradient, Matmul) {
  params_.add("a", random_tensor(rng_, {3, 4}));
  params_.add("b", random_tensor(rng_, {4, 2}));
  check([](Tape& t, const ParamStore& p) { return matmul(t.param(p, "a"), t.param(p, "b")); });
}

TEST_F(OpGradient, BatchedMatmul) {
  params_.add("a", random_tensor(rng_, {2, 3, 4}));
  params_.add("b", random_tensor(rng_, {2, 4, 3}));
  check([](Tape& t, const ParamStore& p) { return bmm(t.param(p, "a"), t.param(p, "b")); });
}

TEST_F(OpGradient, ElementwiseAndActivations) {
  params_.add("a", random_tensor(rng_, {3, 4}));
  params_.add("b", random_tensor(rng_, {3, 4}));
  params_.add("bias", random_tensor(rng_, {4}));
  check([](Tape& t, const ParamStore& p) {
    Var a = t.param(p, "a"), b = t.param(p, "b");
    Var x = add_bias(add(mul(a, b), sub(tanh(a), sigmoid(b))), t.param(p, "bias"));
    return add(scale(relu(x), 1.5), abs(x));
  });
}

TEST_F(OpGradient, SoftmaxMaskedAlongAxis) {
  params_.add("x", random_tensor(rng_, {3, 4}));
  Tensor mask = Tensor::matrix({{1, 0, 1, 0}, {1, 1, 0, 0}, {0, 1, 1, 0}});
  check([mask](Tape& t, const ParamStore& p) { return softmax(t.param(p, "x"), 0, &mask); });
  check([](Tape& t, const ParamStore& p) { return softmax(t.param(p, "x"), 1); });
}

TEST_F(OpGradient, ApplyMaskThenSoftmax) {
  params_.add("x", random_tensor(rng_, {3, 2}));
  Tensor connected = Tensor::matrix({{1, 0}, {1, 0}, {0, 0}});
  check([connected](Tape& t, const ParamStore& p) { return softmax(apply_mask(t.param(p, "x"), connected), 0); });
}

TEST_F(OpGradient, LayerNorm) {
  params_.add("x", random_tensor(rng_, {4, 5}));
  params_.add("g", random_tensor(rng_, {5}));
  params_.add("b", random_tensor(rng_, {5}));
  check([](Tape& t, const ParamStore& p) {
    return layer_norm(t.param(p, "x"), t.param(p, "g"), t.param(p, "b"));
  });
}

TEST_F(OpGradient, ShapeOps) {
  params_.add("x", random_tensor(rng_, {2, 3, 4}));
  params_.add("y", random_tensor(rng_, {2, 3, 2}));
  params_.add("tab", random_tensor(rng_, {5, 3}));
  check([](Tape& t, const ParamStore& p) {
    Var x = t.param(p, "x");
    Var cat = concat({x, t.param(p, "y")}, 2);                 // 2x3x6
    Var sw = swap01(cat);                                       // 3x2x6
    Var sl = slice(sw, 0, 1, 3);                                // 2x2x6
    Var flat = reshape(sl, {4, 6});
    Var tr = transpose(flat);                                   // 6x4
    Var rows = gather_rows(t.param(p, "tab"), {4, 0, 4, 2});    // 4x3
    return matmul(tr, rows);                                    // 6x3
  });
}

TEST_F(OpGradient, Swap12) {
  params_.add("x", random_tensor(rng_, {2, 3, 4}));
  check([](Tape& t, const ParamStore& p) { return swap12(t.param(p, "x")); });
}

TEST(Swap12, MovesElements) {
  Tape t;
  Tensor x({1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Var y = swap12(t.constant(x));
  EXPECT_EQ(y.shape(), (Shape{1, 3, 2}));
  EXPECT_EQ(y.value().storage(), (std::vector<double>{1, 4, 2, 5, 3, 6}));
}

TEST_F(OpGradient, LinearOverRank3) {
  params_.add("x", random_tensor(rng_, {2, 3, 4}));
  params_.add("w", random_tensor(rng_, {4, 5}));
  params_.add("b", random_tensor(rng_, {5}));
  check([](Tape& t, const ParamStore& p) { return linear(t.param(p, "x"), t.param(p, "w"), t.param(p, "b")); });
}
