#include <catch2/catch_amalgamated.hpp>

#include "duffin/ops.hpp"
#include "duffin/rng.hpp"

using namespace duffin;

namespace {

Var<double> constant(Shape shape, std::vector<double> data) {
  return Var<double>::leaf(Tensor<double>(std::move(shape), std::move(data)), false);
}

Var<double> random_leaf(Shape shape, Rng& rng, bool requires_grad = false) {
  Tensor<double> t(shape);
  for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return Var<double>::leaf(std::move(t), requires_grad);
}

// Independent oracle for the all-ones conv case: with a ones input and a
// ones kernel, each output value equals the number of kernel taps that land
// inside the unpadded input.
Tensor<double> ones_conv_overlap_oracle(int h, int w, int kh, int kw, int ph, int pw) {
  const int ho = h + 2 * ph - kh + 1;
  const int wo = w + 2 * pw - kw + 1;
  Tensor<double> out({ho, wo, 1});
  for (int io = 0; io < ho; ++io)
    for (int jo = 0; jo < wo; ++jo) {
      int count = 0;
      for (int ki = 0; ki < kh; ++ki)
        for (int kj = 0; kj < kw; ++kj) {
          const int i = io + ki - ph, j = jo + kj - pw;
          if (i >= 0 && i < h && j >= 0 && j < w) ++count;
        }
      out.at(io, jo, 0) = count;
    }
  return out;
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.all_finite());
  CHECK_THROWS_AS(Tensor<float>({2, 0, 4}), shape_error);
  CHECK_THROWS_AS(t.reshaped({5, 5}), shape_error);
  CHECK(t.reshaped({24}).shape() == Shape{24});
  t.at(1, 2, 3) = 7.0f;
  CHECK(t[(1 * 3 + 2) * 4 + 3] == 7.0f);
}

TEST_CASE("conv2d identity and hand-computed windows") {
  auto x = constant({2, 2, 1}, {1, 2, 3, 4});

  SECTION("1x1 identity kernel") {
    auto w = constant({1, 1, 1, 1}, {1.0});
    auto b = constant({1}, {0.0});
    auto y = conv2d(x, w, b, 1, 1, 0, 0);
    CHECK(y.shape() == Shape{2, 2, 1});
    for (size_t i = 0; i < 4; ++i) CHECK(y.value()[i] == x.value()[i]);
  }
  SECTION("1x1 kernel weight 2 bias 1") {
    auto w = constant({1, 1, 1, 1}, {2.0});
    auto b = constant({1}, {1.0});
    auto y = conv2d(x, w, b, 1, 1, 0, 0);
    const std::vector<double> expected{3, 5, 7, 9};
    for (size_t i = 0; i < 4; ++i) CHECK(y.value()[i] == expected[i]);
  }
}

TEST_CASE("conv2d all-ones padding matches overlap-count oracle") {
  auto b = constant({1}, {0.0});
  for (auto [h, w] : {std::pair{2, 2}, std::pair{3, 3}, std::pair{4, 6}}) {
    Tensor<double> xt({h, w, 1});
    xt.fill(1.0);
    Tensor<double> wt({3, 3, 1, 1});
    wt.fill(1.0);
    auto y = conv2d(Var<double>::leaf(xt, false), Var<double>::leaf(wt, false), b, 1, 1, 1, 1);
    Tensor<double> expected = ones_conv_overlap_oracle(h, w, 3, 3, 1, 1);
    REQUIRE(y.shape() == expected.shape());
    for (size_t i = 0; i < expected.numel(); ++i) CHECK(y.value()[i] == expected[i]);
  }
}

TEST_CASE("conv2d errors") {
  auto x = constant({5, 5, 1}, std::vector<double>(25, 1.0));
  auto w = constant({2, 2, 1, 1}, {1, 1, 1, 1});
  auto w_badc = constant({2, 2, 3, 1}, std::vector<double>(12, 1.0));
  auto b = constant({1}, {0.0});
  CHECK_THROWS_AS(conv2d(x, w, b, 2, 2, 0, 0), shape_error);       // (5-2)%2 != 0
  CHECK_THROWS_AS(conv2d(x, w_badc, b, 1, 1, 0, 0), shape_error);  // Cin mismatch
  auto w7 = constant({7, 7, 1, 1}, std::vector<double>(49, 1.0));
  CHECK_THROWS_AS(conv2d(x, w7, b, 1, 1, 0, 0), shape_error);  // kernel larger than input
  // stride 2 with exact division is fine: (5+2*0-3)/2+1 = 2
  auto w3 = constant({3, 3, 1, 1}, std::vector<double>(9, 1.0));
  CHECK(conv2d(x, w3, b, 2, 2, 0, 0).shape() == Shape{2, 2, 1});
}

TEST_CASE("conv1d examples") {
  SECTION("identity k=1") {
    auto x = constant({1, 1, 4}, {1, 2, 3, 4});
    auto k = constant({1}, {1.0});
    auto y = conv1d(x, k, 0);
    for (size_t i = 0; i < 4; ++i) CHECK(y.value()[i] == x.value()[i]);
  }
  SECTION("zero padding at the edges") {
    auto x = constant({1, 1, 3}, {1, 0, 0});
    auto k = constant({3}, {1, 1, 1});
    auto y = conv1d(x, k, 1);
    CHECK(y.value()[0] == 1.0);
    CHECK(y.value()[1] == 1.0);
    CHECK(y.value()[2] == 0.0);
  }
  SECTION("center-tap identity") {
    auto x = constant({1, 1, 2}, {0.7, -0.3});
    auto k = constant({3}, {0, 1, 0});
    auto y = conv1d(x, k, 1);
    CHECK(y.value()[0] == 0.7);
    CHECK(y.value()[1] == -0.3);
  }
  SECTION("errors") {
    auto x = constant({1, 1, 4}, {1, 2, 3, 4});
    CHECK_THROWS_AS(conv1d(x, constant({2}, {1, 1}), 0), shape_error);  // even kernel
    CHECK_THROWS_AS(conv1d(x, constant({3}, {1, 1, 1}), 2), shape_error);  // wrong padding
  }
}

TEST_CASE("dense examples") {
  SECTION("identity weights") {
    auto x = constant({3}, {1, 2, 3});
    auto w = constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto b = constant({3}, {0, 0, 0});
    auto y = dense(x, w, b);
    for (size_t i = 0; i < 3; ++i) CHECK(y.value()[i] == x.value()[i]);
  }
  SECTION("hand arithmetic") {
    auto x = constant({2}, {1, 1});
    auto w = constant({2, 2}, {1, 2, 3, 4});
    auto b = constant({2}, {0, 1});
    auto y = dense(x, w, b);
    CHECK(y.value()[0] == 3.0);
    CHECK(y.value()[1] == 8.0);
  }
  SECTION("zero weights pass the bias through") {
    auto x = constant({2}, {5, -5});
    auto w = constant({3, 2}, {0, 0, 0, 0, 0, 0});
    auto b = constant({3}, {1, 2, 3});
    auto y = dense(x, w, b);
    for (size_t i = 0; i < 3; ++i) CHECK(y.value()[i] == b.value()[i]);
  }
  SECTION("dimension mismatch") {
    auto x = constant({3}, {1, 2, 3});
    auto w = constant({2, 2}, {1, 2, 3, 4});
    auto b = constant({2}, {0, 0});
    CHECK_THROWS_AS(dense(x, w, b), shape_error);
  }
}

TEST_CASE("batch_norm train-mode statistics") {
  ParameterStore<double> store;
  const double zeta = 1e-5;

  SECTION("constant channel maps to zero") {
    auto st = BatchNormState<double>::create(store, "bn", 1, false);
    auto x = constant({1, 2, 2, 1}, {3, 3, 3, 3});
    auto y = batch_norm(x, st, Mode::train, zeta);
    for (size_t i = 0; i < 4; ++i) CHECK(y.value()[i] == 0.0);
  }
  SECTION("two-point channel") {
    auto st = BatchNormState<double>::create(store, "bn", 1, false);
    auto x = constant({2, 1, 1, 1}, {0, 2});
    auto y = batch_norm(x, st, Mode::train, zeta);
    const double expect = 1.0 / std::sqrt(1.0 + zeta);
    CHECK(y.value()[0] == Catch::Approx(-expect).epsilon(1e-12));
    CHECK(y.value()[1] == Catch::Approx(expect).epsilon(1e-12));
    CHECK(y.value()[1] == Catch::Approx(0.999995).margin(1e-6));
  }
  SECTION("standardized channel scales by 1/sqrt(1+zeta)") {
    auto st = BatchNormState<double>::create(store, "bn", 1, false);
    auto x = constant({4, 1, 1, 1}, {-1, 1, -1, 1});  // mean 0, var 1
    auto y = batch_norm(x, st, Mode::train, zeta);
    for (size_t i = 0; i < 4; ++i)
      CHECK(y.value()[i] ==
            Catch::Approx(x.value()[i] / std::sqrt(1.0 + zeta)).epsilon(1e-12));
  }
  SECTION("inference before population fails, after population works") {
    auto st = BatchNormState<double>::create(store, "bn", 1, false);
    auto x = constant({2, 1, 1, 1}, {0, 2});
    CHECK_THROWS_AS(batch_norm(x, st, Mode::infer, zeta), config_error);
    batch_norm(x, st, Mode::train, zeta);
    CHECK(st.batches_seen.value()[0] == 1.0);
    auto y = batch_norm(x, st, Mode::infer, zeta);
    // running stats after one batch: mean 0.9*0+0.1*1, var 0.9*1+0.1*1
    const double rm = 0.1, rv = 1.0;
    CHECK(y.value()[0] == Catch::Approx((0.0 - rm) / std::sqrt(rv + zeta)).epsilon(1e-12));
  }
}

TEST_CASE("activations") {
  auto x = constant({4}, {-2, 0, 3, -3});
  auto lr = leaky_relu(x, 0.3);
  CHECK(lr.value()[0] == Catch::Approx(-0.6));
  CHECK(lr.value()[1] == 0.0);
  CHECK(lr.value()[2] == 3.0);
  auto r = relu(x);
  CHECK(r.value()[0] == 0.0);
  CHECK(r.value()[2] == 3.0);
  CHECK(r.value()[3] == 0.0);
  auto s = sigmoid(constant({1}, {0.0}));
  CHECK(s.value()[0] == 0.5);
  CHECK_THROWS_AS(leaky_relu(x, 1.5), config_error);
}

TEST_CASE("global pooling") {
  auto img = constant({2, 2, 1}, {1, 2, 3, 4});
  CHECK(global_pool(PoolKind::avg, img).value()[0] == 2.5);
  CHECK(global_pool(PoolKind::max, img).value()[0] == 4.0);
  auto flat = constant({2, 2, 1}, {7, 7, 7, 7});
  CHECK(global_pool(PoolKind::avg, flat).value()[0] == 7.0);
  CHECK(global_pool(PoolKind::max, flat).value()[0] == 7.0);
  CHECK(global_pool(PoolKind::avg, img).shape() == Shape{1, 1, 1});
}

TEST_CASE("channel scale") {
  auto img = constant({1, 2, 2}, {1, 2, 3, 4});
  SECTION("identity weights") {
    auto y = channel_scale(img, constant({1, 1, 2}, {1, 1}));
    for (size_t i = 0; i < 4; ++i) CHECK(y.value()[i] == img.value()[i]);
  }
  SECTION("annihilation of one channel") {
    auto y = channel_scale(img, constant({1, 1, 2}, {1, 0}));
    CHECK(y.value()[0] == 1.0);
    CHECK(y.value()[1] == 0.0);
    CHECK(y.value()[3] == 0.0);
  }
  SECTION("per-channel scaling of ones") {
    auto ones = constant({2, 1, 2}, {1, 1, 1, 1});
    auto y = channel_scale(ones, constant({1, 1, 2}, {2, 3}));
    CHECK(y.value()[0] == 2.0);
    CHECK(y.value()[1] == 3.0);
    CHECK(y.value()[2] == 2.0);
    CHECK(y.value()[3] == 3.0);
  }
  SECTION("channel mismatch") {
    CHECK_THROWS_AS(channel_scale(img, constant({1, 1, 3}, {1, 1, 1})), shape_error);
  }
}

TEST_CASE("concat channels") {
  Rng rng(7);
  auto a = random_leaf({32, 32, 2}, rng);
  auto b = random_leaf({32, 32, 2}, rng);
  auto y = concat_channels(a, b);
  REQUIRE(y.shape() == Shape{32, 32, 4});
  // layout contract: (i,j,Ca+k) of the output is (i,j,k) of b
  for (int i = 0; i < 32; i += 7)
    for (int j = 0; j < 32; j += 5)
      for (int k = 0; k < 2; ++k) {
        CHECK(y.value().at(i, j, k) == a.value().at(i, j, k));
        CHECK(y.value().at(i, j, 2 + k) == b.value().at(i, j, k));
      }
  auto c = random_leaf({16, 32, 2}, rng);
  CHECK_THROWS_AS(concat_channels(a, c), shape_error);
}

TEST_CASE("mse loss") {
  auto p = constant({8}, {1, 1, 1, 1, 1, 1, 1, 1});
  auto t0 = constant({8}, {0, 0, 0, 0, 0, 0, 0, 0});
  CHECK(mse_loss(p, p).value()[0] == 0.0);
  CHECK(mse_loss(p, t0).value()[0] == 8.0);  // squared norm of all-ones, single sample
  // two samples with per-sample losses 2 and 4 -> mean 3
  auto pred = constant({2, 2}, {1, 1, 2, 0});
  auto targ = constant({2, 2}, {0, 0, 0, 0});
  CHECK(mse_loss(pred, targ).value()[0] == 3.0);
  CHECK_THROWS_AS(mse_loss(p, constant({4}, {0, 0, 0, 0})), shape_error);
}

TEST_CASE("linear ops are linear in their data input") {
  Rng rng(123);
  const double a = 1.7, b = -0.6;
  auto lincheck = [&](auto&& f, const Shape& xshape) {
    auto x1 = random_leaf(xshape, rng);
    auto x2 = random_leaf(xshape, rng);
    Tensor<double> mix(xshape);
    for (size_t i = 0; i < mix.numel(); ++i) mix[i] = a * x1.value()[i] + b * x2.value()[i];
    auto y1 = f(x1);
    auto y2 = f(x2);
    auto ym = f(Var<double>::leaf(mix, false));
    REQUIRE(y1.shape() == ym.shape());
    for (size_t i = 0; i < ym.value().numel(); ++i)
      CHECK(ym.value()[i] ==
            Catch::Approx(a * y1.value()[i] + b * y2.value()[i]).margin(1e-12));
  };

  auto w = random_leaf({3, 3, 2, 4}, rng);
  auto zero_b = constant({4}, {0, 0, 0, 0});
  lincheck([&](const Var<double>& x) { return conv2d(x, w, zero_b, 1, 1, 1, 1); }, {6, 5, 2});

  auto k = random_leaf({3}, rng);
  lincheck([&](const Var<double>& x) { return conv1d(x, k, 1); }, {1, 1, 6});

  auto dw = random_leaf({4, 6}, rng);
  auto dzb = constant({4}, {0, 0, 0, 0});
  lincheck([&](const Var<double>& x) { return dense(x, dw, dzb); }, {6});

  auto cw = random_leaf({1, 1, 3}, rng);
  lincheck([&](const Var<double>& x) { return channel_scale(x, cw); }, {4, 5, 3});

  auto other = random_leaf({4, 5, 3}, rng);
  // concat is linear jointly; fix the second operand to zero
  auto zimg = constant({4, 5, 3}, std::vector<double>(60, 0.0));
  lincheck([&](const Var<double>& x) { return concat_channels(x, zimg); }, {4, 5, 3});
  (void)other;
}

TEST_CASE("conv2d output shape follows the shape algebra") {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const int kh = 1 + static_cast<int>(rng.below(4));
    const int kw = 1 + static_cast<int>(rng.below(4));
    const int ph = static_cast<int>(rng.below(3));
    const int pw = static_cast<int>(rng.below(3));
    const int sh = 1 + static_cast<int>(rng.below(2));
    const int sw = 1 + static_cast<int>(rng.below(2));
    const int cin = 1 + static_cast<int>(rng.below(3));
    const int cout = 1 + static_cast<int>(rng.below(4));
    // choose extents that divide evenly
    const int ho = 1 + static_cast<int>(rng.below(6));
    const int wo = 1 + static_cast<int>(rng.below(6));
    const int h = (ho - 1) * sh + kh - 2 * ph;
    const int w = (wo - 1) * sw + kw - 2 * pw;
    if (h < 1 || w < 1 || kh > h + 2 * ph || kw > w + 2 * pw) continue;
    auto x = random_leaf({h, w, cin}, rng);
    auto wt = random_leaf({kh, kw, cin, cout}, rng);
    Tensor<double> bt({cout});
    auto y = conv2d(x, wt, Var<double>::leaf(bt, false), sh, sw, ph, pw);
    CHECK(y.shape() == Shape{ho, wo, cout});
    // batched form agrees
    const int B = 2;
    Tensor<double> xb({B, h, w, cin});
    for (size_t i = 0; i < xb.numel(); ++i) xb[i] = rng.uniform(-1, 1);
    auto yb = conv2d(Var<double>::leaf(xb, false), wt, Var<double>::leaf(bt, false), sh, sw, ph, pw);
    CHECK(yb.shape() == Shape{B, ho, wo, cout});
  }
}

TEST_CASE("forward passes stay finite") {
  Rng rng(5);
  auto x = random_leaf({3, 4, 2}, rng);
  auto w = random_leaf({3, 3, 2, 5}, rng);
  auto b = random_leaf({5}, rng);
  auto y = conv2d(x, w, b, 1, 1, 1, 1);
  CHECK(y.value().all_finite());
  CHECK(sigmoid(y).value().all_finite());
}
