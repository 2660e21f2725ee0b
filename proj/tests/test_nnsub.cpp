#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "sl/nn/checkpoint.hpp"
#include "sl/nn/gradcheck.hpp"
#include "sl/nn/graph.hpp"
#include "sl/nn/layers.hpp"
#include "sl/nn/loss.hpp"

using namespace sl;
using nn::GraphT;
using nn::TensorT;

namespace {

TensorT<double> random_input(std::vector<long> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorT<double> x(std::move(shape));
  for (auto& v : x.data) v = rng.uniform(lo, hi);
  return x;
}

/// Well-separated values (spacing 0.013 >> finite-difference step) so pooling
/// argmaxes cannot flip under the probe perturbation.
TensorT<double> spaced_input(std::vector<long> shape, Rng& rng) {
  TensorT<double> x(std::move(shape));
  std::vector<size_t> order(x.data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  rng.shuffle(order);
  for (size_t i = 0; i < order.size(); ++i)
    x.data[order[i]] = 0.013 * static_cast<double>(i) - 0.0065 * static_cast<double>(order.size());
  return x;
}

double check_layer(nn::LayerT<double>& layer, const TensorT<double>& x, uint64_t seed = 99,
                   const std::function<void()>& prepare = {}) {
  Rng rng(seed);
  auto res = nn::gradcheck_layer(layer, x, rng, 1e-5, prepare);
  CAPTURE(layer.kind(), res.max_rel_err, res.max_abs_err, res.checked);
  REQUIRE(res.checked > 0);
  return res.max_rel_err;
}

}  // namespace

TEST_CASE("conv output shapes follow the floor formula") {
  auto c = nn::conv1d<float>(1, 8, 80, 4, 38);
  CHECK(c->out_shape({16, 1, 19520}) == std::vector<long>{16, 8, 4880});

  auto d = nn::conv1d<float>(4, 4, 3, 1, 2, 2);  // dilated: effective k = 5
  CHECK(d->out_shape({2, 4, 10}) == std::vector<long>{2, 4, 10});

  auto e = nn::conv2d<float>(3, 6, 7, 2, 3);
  CHECK(e->out_shape({1, 3, 96, 96}) == std::vector<long>{1, 6, 48, 48});

  auto f = nn::conv3d<float>(1, 4, {5, 7, 7}, {1, 2, 2}, {2, 3, 3});
  CHECK(f->out_shape({2, 1, 30, 96, 96}) == std::vector<long>{2, 4, 30, 48, 48});

  SECTION("bad geometry is rejected with ShapeMismatch") {
    auto g = nn::conv1d<float>(2, 2, 5);
    CHECK_THROWS_AS(g->out_shape({1, 2, 3}), Error);   // extent collapses
    CHECK_THROWS_AS(g->out_shape({1, 3, 10}), Error);  // wrong channels
    CHECK_THROWS_AS(g->out_shape({2, 10}), Error);     // wrong rank
    try {
      g->out_shape({1, 3, 10});
      FAIL("expected throw");
    } catch (const Error& err) {
      CHECK(err.code() == "ShapeMismatch");
    }
  }
}

TEST_CASE("identity kernel passes input through") {
  auto c = nn::conv1d<double>(1, 1, 1);
  c->weight.value.data[0] = 1.0;
  c->bias.value.data[0] = 0.0;
  Rng rng(4);
  auto x = random_input({2, 1, 9}, rng);
  auto y = c->forward(x, false);
  REQUIRE(y.shape == x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == Catch::Approx(x.data[i]));
}

TEST_CASE("convolution gradients match finite differences") {
  Rng rng(17);
  SECTION("conv1d strided + padded") {
    auto c = nn::conv1d<double>(2, 3, 3, 2, 1);
    c->init_params(rng);
    CHECK(check_layer(*c, random_input({2, 2, 7}, rng)) < 1e-6);
  }
  SECTION("conv1d dilated") {
    auto c = nn::conv1d<double>(2, 2, 3, 1, 2, 2);
    c->init_params(rng);
    CHECK(check_layer(*c, random_input({1, 2, 9}, rng)) < 1e-6);
  }
  SECTION("conv2d") {
    auto c = nn::conv2d<double>(2, 3, 3, 1, 1);
    c->init_params(rng);
    CHECK(check_layer(*c, random_input({2, 2, 5, 5}, rng)) < 1e-6);
  }
  SECTION("conv3d") {
    auto c = nn::conv3d<double>(2, 2, {2, 3, 3}, {1, 2, 2}, {0, 1, 1});
    c->init_params(rng);
    CHECK(check_layer(*c, random_input({1, 2, 3, 6, 6}, rng)) < 1e-6);
  }
}

TEST_CASE("batch norm") {
  SECTION("train mode produces unit statistics before affine") {
    nn::BatchNormT<double> bn(3);
    bn.set_train(true);
    Rng rng(23);
    auto x = random_input({8, 3, 10}, rng, -2.0, 5.0);
    auto y = bn.forward(x, false);
    for (long c = 0; c < 3; ++c) {
      double mean = 0.0;
      long n = 0;
      for (long b = 0; b < 8; ++b)
        for (long s = 0; s < 10; ++s) {
          mean += y.data[static_cast<size_t>((b * 3 + c) * 10 + s)];
          ++n;
        }
      mean /= n;
      double var = 0.0;
      for (long b = 0; b < 8; ++b)
        for (long s = 0; s < 10; ++s) {
          double d = y.data[static_cast<size_t>((b * 3 + c) * 10 + s)] - mean;
          var += d * d;
        }
      var /= n;
      CHECK(std::abs(mean) < 1e-5);
      CHECK(var == Catch::Approx(1.0).margin(1e-3));
    }
  }
  SECTION("fresh eval mode is the epsilon-perturbed identity") {
    nn::BatchNormT<double> bn(2);
    bn.set_train(false);
    Rng rng(29);
    auto x = random_input({3, 2, 4}, rng);
    auto y = bn.forward(x, false);
    for (size_t i = 0; i < x.data.size(); ++i)
      CHECK(y.data[i] == Catch::Approx(x.data[i]).margin(1e-4));
  }
  SECTION("running stats blend with momentum 0.1 and unbiased variance") {
    nn::BatchNormT<double> bn(1);
    bn.set_train(true);
    TensorT<double> x({4, 1, 1}, {1.0, 2.0, 3.0, 6.0});
    bn.forward(x, false);
    const double m = 3.0;
    const double biased = (4.0 + 1.0 + 0.0 + 9.0) / 4.0;
    const double unbiased = biased * 4.0 / 3.0;
    CHECK(bn.running_mean.data[0] == Catch::Approx(0.9 * 0.0 + 0.1 * m));
    CHECK(bn.running_var.data[0] == Catch::Approx(0.9 * 1.0 + 0.1 * unbiased));
  }
  SECTION("gradients, train and eval mode") {
    Rng rng(31);
    nn::BatchNormT<double> bn(3);
    bn.set_train(true);
    for (auto& v : bn.gamma.value.data) v = rng.uniform(0.5, 1.5);
    for (auto& v : bn.beta.value.data) v = rng.uniform(-0.5, 0.5);
    CHECK(check_layer(bn, random_input({4, 3, 5}, rng)) < 1e-5);
    nn::BatchNormT<double> bn_eval(3);
    bn_eval.set_train(false);
    for (auto& v : bn_eval.running_mean.data) v = rng.uniform(-0.3, 0.3);
    for (auto& v : bn_eval.running_var.data) v = rng.uniform(0.5, 2.0);
    CHECK(check_layer(bn_eval, random_input({4, 3, 5}, rng)) < 1e-5);
  }
  SECTION("channel mismatch rejected") {
    nn::BatchNormT<float> bn(4);
    CHECK_THROWS_AS(bn.out_shape({2, 3, 5}), Error);
  }
}

TEST_CASE("activations") {
  SECTION("prelu slope semantics") {
    nn::PReLUT<double> p(1, 0.25);
    TensorT<double> x({1, 1, 3}, {-2.0, 0.0, 3.0});
    auto y = p.forward(x, false);
    CHECK(y.data[0] == Catch::Approx(-0.5));
    CHECK(y.data[1] == 0.0);
    CHECK(y.data[2] == Catch::Approx(3.0));

    nn::PReLUT<double> relu(1, 0.0);
    auto yr = relu.forward(x, false);
    CHECK(yr.data[0] == 0.0);
    CHECK(yr.data[2] == Catch::Approx(3.0));

    nn::PReLUT<double> ident(1, 1.0);
    auto yi = ident.forward(x, false);
    for (size_t i = 0; i < x.data.size(); ++i) CHECK(yi.data[i] == Catch::Approx(x.data[i]));
  }
  SECTION("prelu gradient") {
    Rng rng(37);
    nn::PReLUT<double> p(3, 0.25);
    // keep probes away from the kink at zero
    auto x = random_input({2, 3, 4}, rng);
    for (auto& v : x.data)
      if (std::abs(v) < 1e-3) v = v < 0 ? v - 1e-3 : v + 1e-3;
    CHECK(check_layer(p, x) < 1e-5);
  }
  SECTION("leaky relu fixed slope") {
    nn::LeakyReLUT<double> l(0.25);
    TensorT<double> x({1, 2}, {-4.0, 4.0});
    auto y = l.forward(x, false);
    CHECK(y.data[0] == Catch::Approx(-1.0));
    CHECK(y.data[1] == Catch::Approx(4.0));
    Rng rng(41);
    auto xr = random_input({3, 5}, rng);
    for (auto& v : xr.data)
      if (std::abs(v) < 1e-3) v = v < 0 ? v - 1e-3 : v + 1e-3;
    CHECK(check_layer(l, xr) < 1e-5);
  }
}

TEST_CASE("dropout") {
  SECTION("eval mode is exactly the identity") {
    nn::DropoutT<double> d(0.5);
    d.set_train(false);
    Rng rng(43);
    auto x = random_input({4, 6}, rng);
    auto y = d.forward(x, false);
    CHECK(y.data == x.data);
  }
  SECTION("train mode masks and rescales deterministically per seed") {
    nn::DropoutT<double> d(0.5);
    d.set_train(true);
    Rng rng(47);
    auto x = random_input({10, 20}, rng, 0.5, 1.5);
    d.reseed(1234);
    auto y1 = d.forward(x, false);
    d.reseed(1234);
    auto y2 = d.forward(x, false);
    CHECK(y1.data == y2.data);
    long zeros = 0;
    for (size_t i = 0; i < y1.data.size(); ++i) {
      if (y1.data[i] == 0.0)
        ++zeros;
      else
        CHECK(y1.data[i] == Catch::Approx(x.data[i] / 0.5));  // inverted scaling
    }
    CHECK(zeros > 60);
    CHECK(zeros < 140);
  }
  SECTION("gradient through a fixed mask") {
    nn::DropoutT<double> d(0.3);
    d.set_train(true);
    Rng rng(53);
    auto x = random_input({3, 7}, rng);
    CHECK(check_layer(d, x, 99, [&] { d.reseed(777); }) < 1e-7);
  }
  SECTION("probability bounds enforced") {
    CHECK_THROWS_AS(nn::DropoutT<double>(1.0), Error);
    CHECK_THROWS_AS(nn::DropoutT<double>(-0.1), Error);
  }
}

TEST_CASE("linear layer gradient and shape") {
  Rng rng(59);
  nn::LinearT<double> fc(4, 3);
  fc.init_params(rng);
  for (auto& v : fc.bias.value.data) v = rng.uniform(-0.1, 0.1);
  CHECK(fc.out_shape({5, 4}) == std::vector<long>{5, 3});
  CHECK_THROWS_AS(fc.out_shape({5, 7}), Error);
  CHECK(check_layer(fc, random_input({5, 4}, rng)) < 1e-6);
}

TEST_CASE("pooling layers") {
  Rng rng(61);
  SECTION("max pool forward picks window maxima") {
    nn::MaxPool3dT<double> mp({2, 2, 2}, {2, 2, 2}, {0, 0, 0});
    CHECK(mp.out_shape({1, 1, 4, 4, 4}) == std::vector<long>{1, 1, 2, 2, 2});
    auto x = spaced_input({1, 1, 4, 4, 4}, rng);
    auto y = mp.forward(x, false);
    // brute-force oracle
    for (long t = 0; t < 2; ++t)
      for (long i = 0; i < 2; ++i)
        for (long j = 0; j < 2; ++j) {
          double best = -1e300;
          for (long dt = 0; dt < 2; ++dt)
            for (long di = 0; di < 2; ++di)
              for (long dj = 0; dj < 2; ++dj)
                best = std::max(best,
                                x.data[static_cast<size_t>(((2 * t + dt) * 4 + 2 * i + di) * 4 +
                                                           2 * j + dj)]);
          REQUIRE(y.data[static_cast<size_t>((t * 2 + i) * 2 + j)] == best);
        }
  }
  SECTION("max pool gradient") {
    nn::MaxPool3dT<double> mp({2, 2, 2}, {2, 2, 2}, {1, 1, 1});
    CHECK(check_layer(mp, spaced_input({1, 2, 3, 4, 4}, rng)) < 1e-6);
  }
  SECTION("adaptive average pool covers the length exactly") {
    nn::AdaptiveAvgPool1dT<double> ap(4);
    CHECK(ap.out_shape({2, 3, 10}) == std::vector<long>{2, 3, 4});
    TensorT<double> x({1, 1, 4}, {1.0, 2.0, 3.0, 4.0});
    nn::AdaptiveAvgPool1dT<double> ap1(2);
    auto y = ap1.forward(x, false);
    CHECK(y.data[0] == Catch::Approx(1.5));
    CHECK(y.data[1] == Catch::Approx(3.5));
    CHECK(check_layer(ap, random_input({2, 3, 10}, rng)) < 1e-6);
  }
  SECTION("global 2d pool is the spatial mean") {
    nn::GlobalAvgPool2dT<double> gp;
    TensorT<double> x({1, 1, 2, 2}, {1.0, 3.0, 5.0, 7.0});
    auto y = gp.forward(x, false);
    REQUIRE(y.shape == std::vector<long>{1, 1});
    CHECK(y.data[0] == Catch::Approx(4.0));
    CHECK(check_layer(gp, random_input({2, 3, 4, 4}, rng)) < 1e-6);
  }
  SECTION("temporal pool is the time mean") {
    nn::TemporalAvgPoolT<double> tp;
    TensorT<double> x({1, 2, 3}, {1.0, 2.0, 3.0, 10.0, 20.0, 30.0});
    auto y = tp.forward(x, false);
    REQUIRE(y.shape == std::vector<long>{1, 2});
    CHECK(y.data[0] == Catch::Approx(2.0));
    CHECK(y.data[1] == Catch::Approx(20.0));
    CHECK(check_layer(tp, random_input({2, 3, 5}, rng)) < 1e-6);
  }
}

TEST_CASE("time reshuffles are mutually inverse") {
  Rng rng(67);
  auto x = random_input({2, 3, 4, 2, 2}, rng);
  nn::FoldTimeT<double> fold;
  nn::UnfoldTimeT<double> unfold(4);
  auto folded = fold.forward(x, false);
  REQUIRE(folded.shape == std::vector<long>{8, 3, 2, 2});
  // frame f of sample b lands at row b*T + f
  CHECK(folded.data[0] == x.data[0]);
  CHECK(check_layer(fold, x) < 1e-9);

  // per-frame features regrouped to (B, C, T)
  auto feats = random_input({8, 5}, rng);
  auto grouped = unfold.forward(feats, false);
  REQUIRE(grouped.shape == std::vector<long>{2, 5, 4});
  for (long b = 0; b < 2; ++b)
    for (long f = 0; f < 4; ++f)
      for (long c = 0; c < 5; ++c)
        REQUIRE(grouped.data[static_cast<size_t>((b * 5 + c) * 4 + f)] ==
                feats.data[static_cast<size_t>((b * 4 + f) * 5 + c)]);
  CHECK(check_layer(unfold, feats) < 1e-9);
  CHECK_THROWS_AS(unfold.out_shape({7, 5}), Error);  // 7 rows not divisible by 4
}

TEST_CASE("containers route gradients") {
  Rng rng(71);
  SECTION("residual with identity shortcut") {
    auto body = std::make_unique<nn::SequentialT<double>>();
    auto conv = nn::conv1d<double>(2, 2, 3, 1, 1);
    conv->init_params(rng);
    body->add("conv", std::move(conv));
    nn::ResidualT<double> res(std::move(body), nullptr);
    CHECK(check_layer(res, random_input({2, 2, 5}, rng)) < 1e-6);
  }
  SECTION("residual with projection shortcut") {
    auto body = std::make_unique<nn::SequentialT<double>>();
    auto c1 = nn::conv1d<double>(2, 4, 3, 2, 1);
    c1->init_params(rng);
    body->add("conv", std::move(c1));
    auto sc = std::make_unique<nn::SequentialT<double>>();
    auto c2 = nn::conv1d<double>(2, 4, 1, 2);
    c2->init_params(rng);
    sc->add("proj", std::move(c2));
    nn::ResidualT<double> res(std::move(body), std::move(sc));
    CHECK(res.out_shape({1, 2, 6}) == std::vector<long>{1, 4, 3});
    CHECK(check_layer(res, random_input({1, 2, 6}, rng)) < 1e-6);
  }
  SECTION("multibranch concatenates channels") {
    auto mb = std::make_unique<nn::MultibranchT<double>>();
    auto b1 = std::make_unique<nn::SequentialT<double>>();
    auto c1 = nn::conv1d<double>(2, 3, 3, 1, 1);
    c1->init_params(rng);
    b1->add("conv", std::move(c1));
    auto b2 = std::make_unique<nn::SequentialT<double>>();
    auto c2 = nn::conv1d<double>(2, 2, 3, 1, 2, 2);
    c2->init_params(rng);
    b2->add("conv", std::move(c2));
    mb->add("a", std::move(b1));
    mb->add("b", std::move(b2));
    CHECK(mb->out_shape({1, 2, 8}) == std::vector<long>{1, 5, 8});
    CHECK(check_layer(*mb, random_input({1, 2, 8}, rng)) < 1e-6);
  }
}

TEST_CASE("softmax and cross entropy closed forms") {
  SECTION("uniform logits give uniform probabilities") {
    TensorT<double> z({1, 3}, {0.0, 0.0, 0.0});
    auto p = nn::softmax(z);
    for (double v : p.data) CHECK(v == Catch::Approx(1.0 / 3));
  }
  SECTION("confident correct logits approach zero loss") {
    TensorT<double> z({1, 3}, {10.0, 0.0, 0.0});
    auto ce = nn::cross_entropy_with_logits(z, {0});
    const double expect = std::log(std::exp(10.0) + 2.0) - 10.0;  // = 9.0796e-5
    CHECK(ce.loss == Catch::Approx(expect).epsilon(1e-9));
    CHECK(ce.loss == Catch::Approx(9.08e-5).margin(1e-7));
  }
  SECTION("shift invariance of the stable form") {
    Rng rng(73);
    TensorT<double> z({2, 3});
    for (auto& v : z.data) v = rng.uniform(-3.0, 3.0);
    TensorT<double> zs = z;
    for (auto& v : zs.data) v += 1000.0;
    auto p = nn::softmax(z), ps = nn::softmax(zs);
    for (size_t i = 0; i < p.data.size(); ++i)
      CHECK(ps.data[i] == Catch::Approx(p.data[i]).margin(1e-6));
  }
  SECTION("rows sum to one") {
    Rng rng(79);
    TensorT<double> z({5, 7});
    for (auto& v : z.data) v = rng.uniform(-10.0, 10.0);
    auto p = nn::softmax(z);
    for (long i = 0; i < 5; ++i) {
      double s = 0.0;
      for (long j = 0; j < 7; ++j) s += p.data[static_cast<size_t>(i * 7 + j)];
      CHECK(s == Catch::Approx(1.0).epsilon(1e-12));
    }
  }
  SECTION("gradient is softmax minus onehot over batch") {
    Rng rng(83);
    TensorT<double> z({4, 3});
    for (auto& v : z.data) v = rng.uniform(-2.0, 2.0);
    std::vector<int> labels{0, 2, 1, 1};
    auto ce = nn::cross_entropy_with_logits(z, labels);
    auto p = nn::softmax(z);
    double manual_loss = 0.0;
    for (long i = 0; i < 4; ++i)
      manual_loss += -std::log(p.data[static_cast<size_t>(i * 3 + labels[static_cast<size_t>(i)])]);
    CHECK(ce.loss == Catch::Approx(manual_loss / 4.0).epsilon(1e-10));
    for (long i = 0; i < 4; ++i)
      for (long j = 0; j < 3; ++j) {
        double want = (p.data[static_cast<size_t>(i * 3 + j)] -
                       (j == labels[static_cast<size_t>(i)] ? 1.0 : 0.0)) /
                      4.0;
        CHECK(ce.dlogits.data[static_cast<size_t>(i * 3 + j)] == Catch::Approx(want).margin(1e-12));
      }
  }
  SECTION("label and shape validation") {
    TensorT<double> z({2, 3});
    CHECK_THROWS_AS(nn::cross_entropy_with_logits(z, {0, 3}), Error);
    CHECK_THROWS_AS(nn::cross_entropy_with_logits(z, {0, -1}), Error);
    CHECK_THROWS_AS(nn::cross_entropy_with_logits(z, {0}), Error);
    TensorT<double> bad({2, 3, 1});
    CHECK_THROWS_AS(nn::softmax(bad), Error);
  }
}

TEST_CASE("graph backward contracts") {
  SECTION("sum through identity layers gives all-ones input gradient") {
    GraphT<double> g;
    g.add_stage("a", std::make_unique<nn::LeakyReLUT<double>>(1.0));
    g.add_stage("b", std::make_unique<nn::LeakyReLUT<double>>(1.0));
    g.finalize({2, 6}, 1);
    Rng rng(89);
    auto x = random_input({2, 6}, rng);
    g.forward(x, true);
    TensorT<double> ones({2, 6});
    std::fill(ones.data.begin(), ones.data.end(), 1.0);
    auto dx = g.backward(ones);
    for (double v : dx.data) CHECK(v == 1.0);
  }
  SECTION("frozen parameters receive exactly zero gradient") {
    GraphT<double> g;
    g.add_stage("fc1", std::make_unique<nn::LinearT<double>>(4, 4));
    g.add_stage("fc2", std::make_unique<nn::LinearT<double>>(4, 3));
    g.finalize({2, 4}, 5);
    g.param("fc1.weight").trainable = false;
    Rng rng(97);
    auto x = random_input({2, 4}, rng);
    auto logits = g.forward(x, true);
    auto ce = nn::cross_entropy_with_logits(logits, {0, 1});
    g.backward(ce.dlogits);
    for (double v : g.param("fc1.weight").grad.data) CHECK(v == 0.0);
    double fc2_mag = 0.0;
    for (double v : g.param("fc2.weight").grad.data) fc2_mag += std::abs(v);
    CHECK(fc2_mag > 0.0);
  }
  SECTION("gradients accumulate until zero_grad") {
    GraphT<double> g;
    g.add_stage("fc", std::make_unique<nn::LinearT<double>>(3, 2));
    g.finalize({1, 3}, 7);
    Rng rng(101);
    auto x = random_input({1, 3}, rng);
    TensorT<double> dy({1, 2}, {0.3, -0.7});
    g.forward(x, true);
    g.backward(dy);
    auto once = g.param("fc.weight").grad.data;
    g.forward(x, true);
    g.backward(dy);
    auto twice = g.param("fc.weight").grad.data;
    for (size_t i = 0; i < once.size(); ++i)
      CHECK(twice[i] == Catch::Approx(2.0 * once[i]).epsilon(1e-12));
    g.zero_grad();
    for (double v : g.param("fc.weight").grad.data) CHECK(v == 0.0);
  }
  SECTION("backward without forward state throws") {
    GraphT<double> g;
    g.add_stage("fc", std::make_unique<nn::LinearT<double>>(3, 2));
    g.finalize({1, 3}, 7);
    TensorT<double> dy({1, 2});
    CHECK_THROWS_AS(g.backward(dy), Error);
    // inference-mode forward caches nothing either
    Rng rng(103);
    auto x = random_input({1, 3}, rng);
    g.forward(x, false);
    CHECK_THROWS_AS(g.backward(dy), Error);
  }
  SECTION("sgd step moves only trainable parameters") {
    GraphT<double> g;
    g.add_stage("fc1", std::make_unique<nn::LinearT<double>>(3, 3));
    g.add_stage("fc2", std::make_unique<nn::LinearT<double>>(3, 2));
    g.finalize({2, 3}, 11);
    g.param("fc1.weight").trainable = false;
    auto w1_before = g.param("fc1.weight").value.data;
    auto w2_before = g.param("fc2.weight").value.data;
    Rng rng(107);
    auto x = random_input({2, 3}, rng);
    auto logits = g.forward(x, true);
    auto ce = nn::cross_entropy_with_logits(logits, {0, 1});
    g.backward(ce.dlogits);
    g.sgd_step(0.1);
    CHECK(g.param("fc1.weight").value.data == w1_before);
    CHECK(g.param("fc2.weight").value.data != w2_before);
    for (size_t i = 0; i < w2_before.size(); ++i)
      CHECK(g.param("fc2.weight").value.data[i] ==
            Catch::Approx(w2_before[i] - 0.1 * g.param("fc2.weight").grad.data[i]).margin(1e-15));
  }
}

TEST_CASE("composite micro network passes the finite-difference check") {
  GraphT<double> g;
  auto conv = nn::conv1d<double>(1, 3, 3, 1, 1);
  g.add_stage("conv", std::move(conv));
  g.add_stage("bn", std::make_unique<nn::BatchNormT<double>>(3));
  g.add_stage("act", std::make_unique<nn::PReLUT<double>>(3));
  g.add_stage("pool", std::make_unique<nn::TemporalAvgPoolT<double>>());
  g.add_stage("fc", std::make_unique<nn::LinearT<double>>(3, 3));
  g.finalize({4, 1, 8}, 13);
  g.set_train(true);

  Rng rng(109);
  auto x = random_input({4, 1, 8}, rng);
  std::vector<int> labels{0, 1, 2, 1};
  auto res = nn::gradcheck_graph(g, x, labels);
  CAPTURE(res.max_rel_err, res.max_abs_err, res.checked);
  CHECK(res.checked > 20);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("graph shape inference matches runtime shapes") {
  GraphT<double> g;
  g.add_stage("conv", nn::conv1d<double>(1, 4, 5, 2, 2));
  g.add_stage("bn", std::make_unique<nn::BatchNormT<double>>(4));
  g.add_stage("pool", std::make_unique<nn::AdaptiveAvgPool1dT<double>>(6));
  g.add_stage("flatten_pool", std::make_unique<nn::TemporalAvgPoolT<double>>());
  g.add_stage("fc", std::make_unique<nn::LinearT<double>>(4, 3));
  g.finalize({2, 1, 20}, 15);
  Rng rng(113);
  auto x = random_input({2, 1, 20}, rng);
  for (size_t i = 0; i < g.n_stages(); ++i) {
    auto y = g.forward_until(x, i + 1, false);
    CHECK(y.shape == g.shape_after(i));
  }
  CHECK(g.out_shape() == std::vector<long>{2, 3});
}

TEST_CASE("seeded initialization is reproducible") {
  auto make = [](uint64_t seed) {
    GraphT<float> g;
    g.add_stage("conv", nn::conv1d<float>(1, 8, 5, 2, 2));
    g.add_stage("pool", std::make_unique<nn::TemporalAvgPoolT<float>>());
    g.add_stage("fc", std::make_unique<nn::LinearT<float>>(8, 3));
    g.finalize({1, 1, 16}, seed);
    return g;
  };
  auto g1 = make(42), g2 = make(42), g3 = make(43);
  REQUIRE(g1.params().size() == g2.params().size());
  bool same = true, diff = false;
  for (size_t i = 0; i < g1.params().size(); ++i) {
    same = same && g1.params()[i].second->value.data == g2.params()[i].second->value.data;
    diff = diff || g1.params()[i].second->value.data != g3.params()[i].second->value.data;
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("he-uniform initialization respects its bound") {
  Rng rng(127);
  nn::LinearT<float> fc(200, 100);
  fc.init_params(rng);
  const double bound = std::sqrt(6.0 / 200.0);
  double mean = 0.0, var = 0.0;
  for (float v : fc.weight.value.data) {
    CHECK(std::abs(v) <= bound);
    mean += v;
  }
  mean /= static_cast<double>(fc.weight.value.data.size());
  for (float v : fc.weight.value.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(fc.weight.value.data.size());
  CHECK(std::abs(mean) < 0.01);
  // uniform(-b, b) has variance b^2/3
  CHECK(var == Catch::Approx(bound * bound / 3.0).epsilon(0.1));
  for (float v : fc.bias.value.data) CHECK(v == 0.0f);

  nn::BatchNormT<float> bn(8);
  for (float v : bn.gamma.value.data) CHECK(v == 1.0f);
  for (float v : bn.beta.value.data) CHECK(v == 0.0f);
  for (float v : bn.running_mean.data) CHECK(v == 0.0f);
  for (float v : bn.running_var.data) CHECK(v == 1.0f);
}

TEST_CASE("slck checkpoints") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "sl_nnsub_test";
  fs::create_directories(dir);

  SECTION("map round-trip is bit exact") {
    std::map<std::string, nn::Tensor> tensors;
    Rng rng(131);
    tensors["audio.conv.weight"] = nn::Tensor({4, 1, 5});
    tensors["audio.conv.bias"] = nn::Tensor({4});
    tensors["head.fc.weight"] = nn::Tensor({3, 8});
    for (auto& [name, t] : tensors)
      for (auto& v : t.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    auto path = (dir / "roundtrip.slck").string();
    nn::save_slck(path, tensors);
    auto back = nn::load_slck(path);
    REQUIRE(back.size() == tensors.size());
    for (const auto& [name, t] : tensors) {
      REQUIRE(back.count(name) == 1);
      CHECK(back.at(name).shape == t.shape);
      CHECK(back.at(name).data == t.data);
    }
  }
  SECTION("graph state survives a save/load cycle") {
    auto make = [](uint64_t seed) {
      GraphT<float> g;
      g.add_stage("conv", nn::conv1d<float>(1, 4, 3, 1, 1));
      g.add_stage("bn", std::make_unique<nn::BatchNormT<float>>(4));
      g.add_stage("pool", std::make_unique<nn::TemporalAvgPoolT<float>>());
      g.add_stage("head", std::make_unique<nn::LinearT<float>>(4, 3));
      g.finalize({1, 1, 8}, seed);
      return g;
    };
    auto g1 = make(1);
    auto path = (dir / "graph.slck").string();
    nn::save_slck(path, g1.snapshot_state());
    auto g2 = make(2);
    g2.load_state(nn::load_slck(path));
    for (size_t i = 0; i < g1.params().size(); ++i)
      CHECK(g1.params()[i].second->value.data == g2.params()[i].second->value.data);
    for (size_t i = 0; i < g1.buffers().size(); ++i)
      CHECK(g1.buffers()[i].second->data == g2.buffers()[i].second->data);
  }
  SECTION("load_state rejects mismatches") {
    auto make = [](long width) {
      GraphT<float> g;
      g.add_stage("fc", std::make_unique<nn::LinearT<float>>(width, 2));
      g.finalize({1, width}, 3);
      return g;
    };
    auto g = make(4);
    auto st = g.snapshot_state();
    auto missing = st;
    missing.erase("fc.bias");
    CHECK_THROWS_AS(g.load_state(missing), Error);
    auto extra = st;
    extra["ghost.weight"] = nn::Tensor({1});
    CHECK_THROWS_AS(g.load_state(extra), Error);
    auto wrong = make(5).snapshot_state();
    CHECK_THROWS_AS(g.load_state(wrong), Error);
    // skip prefixes tolerate missing head tensors
    auto headless = st;
    headless.erase("fc.weight");
    headless.erase("fc.bias");
    CHECK_THROWS_AS(g.load_state(headless), Error);
    CHECK_NOTHROW(g.load_state(headless, {"fc."}));
  }
  SECTION("corrupt files are rejected") {
    auto path = (dir / "corrupt.slck").string();
    write_binary_file(path, std::vector<uint8_t>{'S', 'L', 'C', 'X', 1, 0, 0, 0});
    CHECK_THROWS_AS(nn::load_slck(path), Error);
    std::map<std::string, nn::Tensor> tensors;
    tensors["w"] = nn::Tensor({4, 4});
    nn::save_slck(path, tensors);
    auto bytes = read_binary_file(path);
    bytes.resize(bytes.size() - 7);
    write_binary_file(path, bytes);
    CHECK_THROWS_AS(nn::load_slck(path), Error);
    // duplicate names via the list form
    nn::Tensor t({2});
    std::vector<std::pair<std::string, const nn::Tensor*>> dup{{"w", &t}, {"w", &t}};
    auto dup_path = (dir / "dup.slck").string();
    nn::save_slck(dup_path, dup);
    CHECK_THROWS_AS(nn::load_slck(dup_path), Error);
  }
}
