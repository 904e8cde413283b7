#include <doctest.h>

#include "cephmark/adam.hpp"
#include "cephmark/ops.hpp"
#include "gradcheck.hpp"

using namespace cephmark;
using ag::Tensor;
using ag::Tape;

namespace {

Tensor<double> random_tensor(Rng& rng, std::vector<int> shape, bool requires_grad = false,
                             double lo = -1.0, double hi = 1.0) {
  auto data = testutil::random_values(rng, shape_numel(shape), lo, hi);
  return Tensor<double>::from_data(std::move(shape), std::move(data), requires_grad);
}

// six nested loops, straight off the definition
std::vector<double> conv_oracle(const std::vector<double>& in, int c_in, int h, int w,
                                const std::vector<double>& ker, int c_out, int k,
                                const std::vector<double>& bias, int stride, int pad, int oh,
                                int ow) {
  std::vector<double> out(static_cast<size_t>(c_out) * oh * ow, 0.0);
  for (int co = 0; co < c_out; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias[co];
        for (int ci = 0; ci < c_in; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int iy = oy * stride + ky - pad;
              int ix = ox * stride + kx - pad;
              if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                acc += in[(static_cast<size_t>(ci) * h + iy) * w + ix] *
                       ker[((static_cast<size_t>(co) * c_in + ci) * k + ky) * k + kx];
            }
        out[(static_cast<size_t>(co) * oh + oy) * ow + ox] = acc;
      }
  return out;
}

}  // namespace

TEST_CASE("tensor invariants and errors") {
  CHECK_THROWS_AS(Tensor<double>::zeros({0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>::from_data({2, 2}, {1.0, 2.0, 3.0}), ShapeError);

  auto t = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  CHECK(t.numel() == 6);
  CHECK(t.grad().size() == 6);  // grad matches data shape on allocation
  CHECK(t.grad()[0] == 0.0);
}

TEST_CASE("backward rejects non-scalar, detached and replayed records") {
  Tape<double> tape;
  auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
  auto y = ag::mul(&tape, x, x);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);

  auto s = ag::sum(&tape, y);
  Tape<double> other;
  CHECK_THROWS_AS(other.backward(s), std::invalid_argument);

  // a scalar never produced through any record is detached
  auto loose = Tensor<double>::scalar(3.0, true);
  CHECK_THROWS_AS(tape.backward(loose), std::invalid_argument);

  tape.backward(s);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK_THROWS_AS(tape.backward(s), std::logic_error);
}

TEST_CASE("loss = sum(x) gives unit gradients; sum(x*x) gives 2x") {
  auto x = Tensor<double>::from_data({3}, {0.5, -1.5, 2.0}, true);
  {
    Tape<double> tape;
    auto s = ag::sum(&tape, x);
    tape.backward(s);
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  x.zero_grad();
  {
    Tape<double> tape;
    auto s = ag::sum(&tape, ag::mul(&tape, x, x));
    tape.backward(s);
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    CHECK(x.grad()[1] == doctest::Approx(-3.0));
    CHECK(x.grad()[2] == doctest::Approx(4.0));
  }
}

TEST_CASE("gradient accumulation across branches equals the branch sum") {
  Rng rng(7);
  auto x = random_tensor(rng, {4, 4}, true);

  Tape<double> tape;
  auto two_branch = ag::sum(&tape, ag::add(&tape, ag::mul(&tape, x, x), x));
  tape.backward(two_branch);
  std::vector<double> combined = x.grad();

  x.zero_grad();
  Tape<double> t1;
  auto b1 = ag::sum(&t1, ag::mul(&t1, x, x));
  t1.backward(b1);
  std::vector<double> g1 = x.grad();

  x.zero_grad();
  Tape<double> t2;
  auto b2 = ag::sum(&t2, x);
  t2.backward(b2);
  std::vector<double> g2 = x.grad();

  for (size_t i = 0; i < combined.size(); ++i)
    CHECK(combined[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
}

TEST_CASE("conv2d trivial cases") {
  // all-zero input: every output pixel of channel c equals bias[c]
  auto in = Tensor<double>::zeros({2, 5, 5});
  Rng rng(3);
  auto ker = random_tensor(rng, {3, 2, 3, 3});
  auto bias = Tensor<double>::from_data({3}, {0.5, -1.0, 2.5});
  auto out = ag::conv2d<double>(nullptr, in, ker, bias, 1, 1);
  CHECK(out.shape() == std::vector<int>{3, 5, 5});
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 25; ++p) CHECK(out.values()[c * 25 + p] == bias.values()[c]);

  // 1x3x3 ones, one 3x3 kernel of ones -> 9
  auto ones_in = Tensor<double>::full({1, 3, 3}, 1.0);
  auto ones_ker = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto zero_bias = Tensor<double>::zeros({1});
  auto nine = ag::conv2d<double>(nullptr, ones_in, ones_ker, zero_bias, 1, 0);
  CHECK(nine.numel() == 1);
  CHECK(nine.values()[0] == 9.0);
}

TEST_CASE("conv2d matches the direct six-loop oracle") {
  Rng rng(11);
  for (auto [stride, pad] : {std::pair{1, 0}, std::pair{1, 1}, std::pair{2, 1}}) {
    auto in = random_tensor(rng, {2, 5, 5});
    auto ker = random_tensor(rng, {3, 2, 3, 3});
    auto bias = random_tensor(rng, {3});
    auto out = ag::conv2d<double>(nullptr, in, ker, bias, stride, pad);
    int oh = (5 + 2 * pad - 3) / stride + 1;
    auto expect = conv_oracle(in.values(), 2, 5, 5, ker.values(), 3, 3, bias.values(), stride,
                              pad, oh, oh);
    REQUIRE(out.numel() == static_cast<int64_t>(expect.size()));
    for (size_t i = 0; i < expect.size(); ++i)
      CHECK(out.values()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d shape errors name both shapes") {
  auto in = Tensor<double>::zeros({2, 5, 5});
  auto ker = Tensor<double>::zeros({3, 4, 3, 3});  // wrong c_in
  auto bias = Tensor<double>::zeros({3});
  CHECK_THROWS_WITH_AS(ag::conv2d<double>(nullptr, in, ker, bias, 1, 0),
                       doctest::Contains("[3,4,3,3]"), ShapeError);
  auto ker_ok = Tensor<double>::zeros({3, 2, 3, 3});
  auto bad_bias = Tensor<double>::zeros({4});
  CHECK_THROWS_AS(ag::conv2d<double>(nullptr, in, ker_ok, bad_bias, 1, 0), ShapeError);
  CHECK_THROWS_AS(ag::conv2d<double>(nullptr, in, ker_ok, bias, 0, 0), ShapeError);
}

TEST_CASE("conv2d rejects non-finite results") {
  auto in = Tensor<double>::full({1, 2, 2}, std::numeric_limits<double>::infinity());
  auto ker = Tensor<double>::full({1, 1, 1, 1}, 1.0);
  auto bias = Tensor<double>::zeros({1});
  CHECK_THROWS_AS(ag::conv2d<double>(nullptr, in, ker, bias, 1, 0), NumericError);
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(13);
  auto in = random_tensor(rng, {2, 6, 6}, true);
  auto ker = random_tensor(rng, {3, 2, 3, 3}, true);
  auto bias = random_tensor(rng, {3}, true);
  auto weights = random_tensor(rng, {3, 6, 6});  // fixed projection for a scalar objective

  auto eval = [&]() {
    auto out = ag::conv2d<double>(nullptr, in, ker, bias, 1, 1);
    return ag::sum<double>(nullptr, ag::mul<double>(nullptr, out, weights)).item();
  };
  Tape<double> tape;
  auto loss = ag::sum(&tape, ag::mul(&tape, ag::conv2d(&tape, in, ker, bias, 1, 1), weights));
  tape.backward(loss);
  auto res = testutil::gradcheck({in, ker, bias}, eval);
  INFO(res.worst);
  CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("maxpool2d trivial, oracle, ties and errors") {
  auto constant = Tensor<double>::full({1, 4, 4}, 3.25);
  auto pooled = ag::maxpool2d<double>(nullptr, constant, 2);
  for (double v : pooled.values()) CHECK(v == 3.25);

  auto quad = Tensor<double>::from_data({1, 2, 2}, {1, 2, 3, 4});
  CHECK(ag::maxpool2d<double>(nullptr, quad, 2).values()[0] == 4.0);

  Rng rng(5);
  auto in = random_tensor(rng, {4, 8, 8});
  auto out = ag::maxpool2d<double>(nullptr, in, 2);
  for (int c = 0; c < 4; ++c)
    for (int oy = 0; oy < 4; ++oy)
      for (int ox = 0; ox < 4; ++ox) {
        double best = -1e300;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            best = std::max(best, in.values()[(c * 8 + oy * 2 + dy) * 8 + ox * 2 + dx]);
        CHECK(out.values()[(c * 4 + oy) * 4 + ox] == best);
      }

  CHECK_THROWS_AS(ag::maxpool2d<double>(nullptr, Tensor<double>::zeros({1, 5, 4}), 2), ShapeError);

  // tie: gradient goes to the first occurrence in row-major order
  auto tied = Tensor<double>::from_data({1, 2, 2}, {7.0, 7.0, 7.0, 7.0}, true);
  Tape<double> tape;
  auto s = ag::sum(&tape, ag::maxpool2d(&tape, tied, 2));
  tape.backward(s);
  CHECK(tied.grad() == std::vector<double>{1.0, 0.0, 0.0, 0.0});
}

TEST_CASE("maxpool2d gradient matches finite differences") {
  Rng rng(17);
  auto in = random_tensor(rng, {2, 4, 4}, true);
  auto weights = random_tensor(rng, {2, 2, 2});
  auto eval = [&]() {
    return ag::sum<double>(nullptr,
                           ag::mul<double>(nullptr, ag::maxpool2d<double>(nullptr, in, 2), weights))
        .item();
  };
  Tape<double> tape;
  auto loss = ag::sum(&tape, ag::mul(&tape, ag::maxpool2d(&tape, in, 2), weights));
  tape.backward(loss);
  auto res = testutil::gradcheck({in}, eval);
  INFO(res.worst);
  CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("upsample2d identity, replication and adjoint") {
  Rng rng(19);
  auto in = random_tensor(rng, {2, 3, 3}, true);
  auto same = ag::upsample2d<double>(nullptr, in, 1);
  CHECK(same.values() == in.values());

  auto single = Tensor<double>::from_data({1, 1, 1}, {4.5});
  auto rep = ag::upsample2d<double>(nullptr, single, 2);
  CHECK(rep.shape() == std::vector<int>{1, 2, 2});
  for (double v : rep.values()) CHECK(v == 4.5);

  // gradient of sum(upsample(x, 2)) is 4 everywhere
  Tape<double> tape;
  auto s = ag::sum(&tape, ag::upsample2d(&tape, in, 2));
  tape.backward(s);
  for (double g : in.grad()) CHECK(g == 4.0);

  in.zero_grad();
  auto weights = random_tensor(rng, {2, 6, 6});
  auto eval = [&]() {
    return ag::sum<double>(nullptr,
                           ag::mul<double>(nullptr, ag::upsample2d<double>(nullptr, in, 2), weights))
        .item();
  };
  Tape<double> t2;
  auto loss = ag::sum(&t2, ag::mul(&t2, ag::upsample2d(&t2, in, 2), weights));
  t2.backward(loss);
  auto res = testutil::gradcheck({in}, eval);
  INFO(res.worst);
  CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("channel_softmax values, sums, oracle and gradient") {
  auto uniform = Tensor<double>::full({20, 2, 2}, 0.7);
  auto u = ag::channel_softmax<double>(nullptr, uniform);
  for (double v : u.values()) CHECK(v == doctest::Approx(0.05).epsilon(1e-12));

  auto saturated = Tensor<double>::from_data({2, 1, 1}, {0.0, 50.0});
  auto sat = ag::channel_softmax<double>(nullptr, saturated);
  CHECK(sat.values()[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sat.values()[1] == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(23);
  auto logits = random_tensor(rng, {20, 4, 4}, true, -3.0, 3.0);
  auto probs = ag::channel_softmax<double>(nullptr, logits);
  for (int p = 0; p < 16; ++p) {
    double total = 0.0;
    for (int c = 0; c < 20; ++c) total += probs.values()[c * 16 + p];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));

    // scalar per-pixel oracle
    double mx = -1e300, denom = 0.0;
    for (int c = 0; c < 20; ++c) mx = std::max(mx, logits.values()[c * 16 + p]);
    for (int c = 0; c < 20; ++c) denom += std::exp(logits.values()[c * 16 + p] - mx);
    for (int c = 0; c < 20; ++c) {
      double expect = std::exp(logits.values()[c * 16 + p] - mx) / denom;
      CHECK(probs.values()[c * 16 + p] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  auto bad = Tensor<double>::full({2, 1, 1}, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(ag::channel_softmax<double>(nullptr, bad), NumericError);

  auto weights = random_tensor(rng, {20, 4, 4});
  auto eval = [&]() {
    return ag::sum<double>(
               nullptr, ag::mul<double>(nullptr, ag::channel_softmax<double>(nullptr, logits), weights))
        .item();
  };
  Tape<double> tape;
  auto loss = ag::sum(&tape, ag::mul(&tape, ag::channel_softmax(&tape, logits), weights));
  tape.backward(loss);
  auto res = testutil::gradcheck({logits}, eval);
  INFO(res.worst);
  CHECK(res.max_rel_error < 1e-5);
}

TEST_CASE("elementwise primitives: forward values and finite differences") {
  Rng rng(29);
  auto x = random_tensor(rng, {3, 3}, true, 0.1, 2.0);  // positive domain for log/pow
  auto weights = random_tensor(rng, {3, 3});

  auto build = [&](Tape<double>* tape) {
    auto a = ag::log(tape, x);
    auto b = ag::exp(tape, ag::affine(tape, x, 0.5, -0.3));
    auto c = ag::pow(tape, x, 1.7);
    auto d = ag::clamp(tape, x, 0.25, 1.5);
    auto combo = ag::add(tape, ag::add(tape, a, b), ag::sub(tape, c, d));
    return ag::sum(tape, ag::mul(tape, combo, weights));
  };
  Tape<double> tape;
  auto loss = build(&tape);
  tape.backward(loss);
  auto res = testutil::gradcheck({x}, [&]() { return build(nullptr).item(); });
  INFO(res.worst);
  CHECK(res.max_rel_error < 1e-5);

  CHECK_THROWS_AS(ag::log<double>(nullptr, Tensor<double>::from_data({1}, {0.0})), NumericError);
  auto sq = ag::pow<double>(nullptr, Tensor<double>::from_data({2}, {3.0, -2.0}), 2.0);
  CHECK(sq.values() == std::vector<double>{9.0, 4.0});
}

TEST_CASE("concat and crop gradients") {
  Rng rng(31);
  auto a = random_tensor(rng, {2, 3, 3}, true);
  auto b = random_tensor(rng, {1, 3, 3}, true);
  auto weights = random_tensor(rng, {3, 3, 3});
  auto eval = [&]() {
    return ag::sum<double>(nullptr, ag::mul<double>(nullptr,
                                                    ag::concat_channels<double>(nullptr, a, b),
                                                    weights))
        .item();
  };
  Tape<double> tape;
  auto loss = ag::sum(&tape, ag::mul(&tape, ag::concat_channels(&tape, a, b), weights));
  tape.backward(loss);
  auto res = testutil::gradcheck({a, b}, eval);
  INFO(res.worst);
  CHECK(res.max_rel_error < 1e-6);

  auto big = random_tensor(rng, {2, 5, 5}, true);
  auto w2 = random_tensor(rng, {2, 2, 3});
  auto eval2 = [&]() {
    return ag::sum<double>(nullptr, ag::mul<double>(nullptr,
                                                    ag::crop_spatial<double>(nullptr, big, 1, 2, 2, 3),
                                                    w2))
        .item();
  };
  Tape<double> t2;
  auto loss2 = ag::sum(&t2, ag::mul(&t2, ag::crop_spatial(&t2, big, 1, 2, 2, 3), w2));
  t2.backward(loss2);
  auto res2 = testutil::gradcheck({big}, eval2);
  INFO(res2.worst);
  CHECK(res2.max_rel_error < 1e-6);
}

TEST_CASE("primitives are deterministic across repeated evaluation") {
  Rng rng(37);
  auto in = random_tensor(rng, {3, 8, 8});
  auto ker = random_tensor(rng, {4, 3, 3, 3});
  auto bias = random_tensor(rng, {4});
  auto a = ag::conv2d<double>(nullptr, in, ker, bias, 1, 1);
  auto b = ag::conv2d<double>(nullptr, in, ker, bias, 1, 1);
  CHECK(a.values() == b.values());
  CHECK(ag::channel_softmax<double>(nullptr, a).values() ==
        ag::channel_softmax<double>(nullptr, b).values());
}

TEST_CASE("adam: zero gradient, first step, quadratic bowl, missing grad") {
  // zero gradient leaves parameters unchanged and bumps the counter
  auto w = Tensor<float>::from_data({2}, {1.5f, -2.0f}, true);
  (void)w.grad();
  std::vector<Tensor<float>> params{w};
  ag::AdamState<float> state;
  state.attach(params);
  ag::optimizer_step(state, params);
  CHECK(state.step_count == 1);
  CHECK(w.values() == std::vector<float>{1.5f, -2.0f});

  // constant gradient 1, lr = 0.1: the bias-corrected first step is ~ -0.1
  auto p = Tensor<double>::from_data({1}, {0.0}, true);
  p.grad()[0] = 1.0;
  std::vector<Tensor<double>> single{p};
  ag::AdamState<double> s2;
  s2.learning_rate = 0.1;
  s2.attach(single);
  ag::optimizer_step(s2, single);
  CHECK(p.values()[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p.grad()[0] == 0.0);  // grads zeroed afterward

  // f(w) = w^2 from w0 = 1, lr = 0.05: 200 steps land within |w| < 0.05
  auto q = Tensor<double>::from_data({1}, {1.0}, true);
  std::vector<Tensor<double>> bowl{q};
  ag::AdamState<double> s3;
  s3.learning_rate = 0.05;
  s3.attach(bowl);
  for (int i = 0; i < 200; ++i) {
    q.grad()[0] = 2.0 * q.values()[0];
    ag::optimizer_step(s3, bowl);
  }
  CHECK(std::fabs(q.values()[0]) < 0.05);

  auto fresh = Tensor<double>::from_data({1}, {1.0}, true);
  std::vector<Tensor<double>> missing{fresh};
  ag::AdamState<double> s4;
  s4.attach(missing);
  CHECK_THROWS_AS(ag::optimizer_step(s4, missing), std::invalid_argument);
}
