#include <catch2/catch_amalgamated.hpp>

#include "negflow/nn.hpp"
#include "negflow/ops.hpp"
#include "negflow/ops_image.hpp"
#include "negflow/optim.hpp"
#include "test_support.hpp"

using namespace negflow;
using test_support::max_grad_rel_err;
using test_support::random_vec;

namespace {

Tensor leaf(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto v = random_vec(static_cast<std::size_t>(shape_numel(s)), rng, lo, hi);
  return Tensor::from_values(std::move(s), std::move(v), true);
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(11);
  Tensor a = leaf({2, 3}, rng);
  Tensor b = leaf({2, 3}, rng);

  auto check = [&](const char* name, std::function<Tensor()> fn, Tensor wrt) {
    INFO(name);
    CHECK(max_grad_rel_err(wrt, fn) < 1e-6);
  };

  check("add", [&] { return ops::sum_all(ops::mul(ops::add(a, b), ops::add(a, b))); }, a);
  check("sub", [&] { return ops::sum_all(ops::mul(ops::sub(a, b), ops::sub(a, b))); }, b);
  check("mul", [&] { return ops::sum_all(ops::mul(a, b)); }, a);
  check("scalar", [&] { return ops::sum_all(ops::mul_scalar(ops::add_scalar(a, 0.7), -1.3)); }, a);
  check("exp", [&] { return ops::sum_all(ops::exp_t(a)); }, a);
  check("tanh", [&] { return ops::sum_all(ops::tanh_t(a)); }, a);
  check("sigmoid", [&] { return ops::sum_all(ops::sigmoid_t(a)); }, a);
  check("softplus", [&] { return ops::sum_all(ops::softplus_t(a)); }, a);
  check("logaddexp", [&] { return ops::sum_all(ops::logaddexp_const(a, -0.4)); }, a);

  Tensor pos = leaf({2, 3}, rng, 0.2, 2.0);
  check("log", [&] { return ops::sum_all(ops::log_t(pos)); }, pos);
  check("mean", [&] { return ops::mean_all(ops::mul(a, a)); }, a);
}

TEST_CASE("channel reductions and broadcasts") {
  Rng rng(12);
  Tensor x = leaf({2, 4, 3, 3}, rng);

  CHECK(max_grad_rel_err(x, [&] { return ops::sum_all(ops::logsumexp_c(x)); }) < 1e-6);
  CHECK(max_grad_rel_err(x, [&] {
          Tensor lse = ops::logsumexp_c(x);
          Tensor wide = ops::broadcast_c(lse, 4);
          return ops::sum_all(ops::mul(wide, wide));
        }) < 1e-6);
  CHECK(max_grad_rel_err(x, [&] { return ops::sum_all(ops::mul(ops::sum_c(x), ops::sum_c(x))); }) < 1e-6);

  // log-softmax composition sums to zero gradient for a constant objective
  Tensor logp = ops::sub(x, ops::broadcast_c(ops::logsumexp_c(x), 4));
  Tensor p = ops::exp_t(logp);
  std::vector<double> per_pixel(p.values().size(), 0.0);
  const auto& pv = p.values();
  for (std::size_t i = 0; i < pv.size(); ++i) per_pixel[i] = pv[i];
  // probabilities along channels sum to one
  for (int n = 0; n < 2; ++n)
    for (int j = 0; j < 9; ++j) {
      double s = 0.0;
      for (int c = 0; c < 4; ++c) s += per_pixel[static_cast<std::size_t>(((n * 4) + c) * 9 + j)];
      CHECK(s == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("channel affine gradients") {
  Rng rng(13);
  Tensor x = leaf({2, 3, 2, 2}, rng);
  Tensor scale = leaf({3}, rng, 0.5, 1.5);
  Tensor bias = leaf({3}, rng);
  auto loss = [&] { return ops::sum_all(ops::mul(ops::channel_affine(x, scale, bias),
                                                 ops::channel_affine(x, scale, bias))); };
  CHECK(max_grad_rel_err(x, loss) < 1e-6);
  CHECK(max_grad_rel_err(scale, loss) < 1e-6);
  CHECK(max_grad_rel_err(bias, loss) < 1e-6);
}

TEST_CASE("linear layer matches finite differences") {
  Rng rng(14);
  Tensor x = leaf({4, 5}, rng);
  Tensor w = leaf({3, 5}, rng);
  Tensor b = leaf({3}, rng);
  auto loss = [&] {
    Tensor y = ops::linear(x, w, b);
    return ops::sum_all(ops::mul(y, y));
  };
  CHECK(max_grad_rel_err(x, loss) < 1e-6);
  CHECK(max_grad_rel_err(w, loss) < 1e-6);
  CHECK(max_grad_rel_err(b, loss) < 1e-6);
}

TEST_CASE("conv2d matches finite differences") {
  Rng rng(15);
  for (int stride : {1, 2}) {
    Tensor x = leaf({2, 3, 6, 6}, rng);
    Tensor w = leaf({4, 3, 3, 3}, rng);
    Tensor b = leaf({4}, rng);
    auto loss = [&] {
      Tensor y = ops::conv2d(x, w, b, stride, 1);
      return ops::sum_all(ops::mul(y, y));
    };
    INFO("stride " << stride);
    CHECK(max_grad_rel_err(x, loss) < 1e-6);
    CHECK(max_grad_rel_err(w, loss) < 1e-6);
    CHECK(max_grad_rel_err(b, loss) < 1e-6);
  }
}

TEST_CASE("conv2d output matches direct convolution") {
  Rng rng(16);
  Tensor x = leaf({1, 2, 5, 5}, rng);
  Tensor w = leaf({3, 2, 3, 3}, rng);
  Tensor b = leaf({3}, rng);
  Tensor y = ops::conv2d(x, w, b, 1, 1);
  REQUIRE(y.shape() == Shape{1, 3, 5, 5});
  // brute-force reference
  for (int co = 0; co < 3; ++co)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        double acc = b[co];
        for (int ci = 0; ci < 2; ++ci)
          for (int ki = 0; ki < 3; ++ki)
            for (int kj = 0; kj < 3; ++kj) {
              const int ii = i + ki - 1, jj = j + kj - 1;
              if (ii < 0 || ii >= 5 || jj < 0 || jj >= 5) continue;
              acc += x[(ci * 5 + ii) * 5 + jj] * w[((co * 2 + ci) * 3 + ki) * 3 + kj];
            }
        CHECK(y[(co * 5 + i) * 5 + j] == Catch::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("squeeze2 and unsqueeze2 are inverse permutations") {
  Rng rng(17);
  Tensor x = leaf({2, 3, 4, 4}, rng);
  Tensor z = ops::squeeze2(x);
  REQUIRE(z.shape() == Shape{2, 12, 2, 2});
  Tensor back = ops::unsqueeze2(z);
  REQUIRE(back.shape() == x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(back[i] == x[i]);
  CHECK(max_grad_rel_err(x, [&] {
          Tensor s = ops::squeeze2(x);
          return ops::sum_all(ops::mul(s, s));
        }) < 1e-6);
}

TEST_CASE("upsample_nearest2 gradient") {
  Rng rng(18);
  Tensor x = leaf({1, 2, 3, 3}, rng);
  CHECK(max_grad_rel_err(x, [&] {
          Tensor u = ops::upsample_nearest2(x);
          return ops::sum_all(ops::mul(u, u));
        }) < 1e-6);
}

TEST_CASE("crop and paste route gradients by region") {
  Rng rng(19);
  Tensor base = leaf({2, 6, 6}, rng);
  Tensor patch = leaf({2, 2, 3}, rng);

  Tensor pasted = ops::paste2d(base, patch, 1, 2);
  // values: patch region replaced, elsewhere identical
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const double v = pasted[(c * 6 + i) * 6 + j];
        if (i >= 1 && i < 3 && j >= 2 && j < 5)
          CHECK(v == patch[(c * 2 + (i - 1)) * 3 + (j - 2)]);
        else
          CHECK(v == base[(c * 6 + i) * 6 + j]);
      }

  auto loss = [&] {
    Tensor y = ops::paste2d(base, patch, 1, 2);
    return ops::sum_all(ops::mul(y, y));
  };
  CHECK(max_grad_rel_err(base, loss) < 1e-6);
  CHECK(max_grad_rel_err(patch, loss) < 1e-6);

  CHECK(max_grad_rel_err(base, [&] {
          Tensor c = ops::crop2d(base, 2, 1, 3, 4);
          return ops::sum_all(ops::mul(c, c));
        }) < 1e-6);
}

TEST_CASE("batchnorm2d train-mode gradients") {
  Rng rng(20);
  Tensor x = leaf({3, 2, 4, 4}, rng);
  Tensor gamma = leaf({2}, rng, 0.5, 1.5);
  Tensor beta = leaf({2}, rng);
  auto loss = [&] {
    Tensor y = ops::batchnorm2d_train(x, gamma, beta, 1e-5);
    Tensor t = ops::add_scalar(y, 0.3);
    return ops::sum_all(ops::mul(t, t));
  };
  // coarse step: some per-element gradients are ~1e-6 and FD round-off
  // dominates at finer steps
  CHECK(max_grad_rel_err(x, loss, 1e-3) < 1e-5);
  CHECK(max_grad_rel_err(gamma, loss) < 1e-5);
  CHECK(max_grad_rel_err(beta, loss) < 1e-5);

  // normalized outputs have zero mean / unit variance per channel
  std::vector<double> m, v;
  Tensor one_gamma(Shape{2}, 1.0, false);
  Tensor zero_beta(Shape{2}, 0.0, false);
  Tensor y = ops::batchnorm2d_train(x, one_gamma, zero_beta, 1e-12, &m, &v);
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0;
    for (int n = 0; n < 3; ++n)
      for (int j = 0; j < 16; ++j) mean += y[(n * 2 + c) * 16 + j];
    mean /= 48.0;
    for (int n = 0; n < 3; ++n)
      for (int j = 0; j < 16; ++j) {
        const double d = y[(n * 2 + c) * 16 + j] - mean;
        var += d * d;
      }
    var /= 48.0;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == Catch::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("stack, concat, slice, reshape gradients") {
  Rng rng(21);
  Tensor a = leaf({2, 3, 3}, rng);
  Tensor b = leaf({2, 3, 3}, rng);
  CHECK(max_grad_rel_err(a, [&] {
          Tensor s = ops::stack0({a, b});
          return ops::sum_all(ops::mul(s, s));
        }) < 1e-6);
  Tensor x4 = leaf({2, 2, 2, 2}, rng);
  Tensor y4 = leaf({2, 3, 2, 2}, rng);
  CHECK(max_grad_rel_err(y4, [&] {
          Tensor c = ops::concat_c(x4, y4);
          Tensor s = ops::slice_c(c, 1, 4);
          return ops::sum_all(ops::mul(s, s));
        }) < 1e-6);
  CHECK(max_grad_rel_err(a, [&] {
          Tensor r = ops::reshape(a, {9, 2});
          return ops::sum_all(ops::mul(r, r));
        }) < 1e-6);
}

TEST_CASE("clamp ops pass gradient only inside") {
  Tensor x = Tensor::from_values({4}, {-0.5, 0.3, 0.9, 1.7}, true);
  Tensor y = ops::clamp01(x);
  ops::sum_all(y).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 1.0);
  CHECK(x.grad()[3] == 0.0);
  CHECK(y[0] == 0.0);
  CHECK(y[3] == 1.0);
}

TEST_CASE("graph reuse accumulates gradients once per backward") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, true);
  Tensor shared = ops::mul(x, x);
  Tensor total = ops::sum_all(ops::add(shared, shared));
  total.backward();
  // d/dx sum(2 x^2) = 4x
  CHECK(x.grad()[0] == Catch::Approx(4.0));
  CHECK(x.grad()[1] == Catch::Approx(8.0));
}

TEST_CASE("adam and adamax reduce a quadratic") {
  for (int kind = 0; kind < 2; ++kind) {
    Tensor w = Tensor::from_values({3}, {3.0, -2.0, 1.5}, true);
    std::unique_ptr<optim::Optimizer> opt;
    if (kind == 0)
      opt = std::make_unique<optim::Adam>(std::vector<Tensor>{w}, 0.1);
    else
      opt = std::make_unique<optim::Adamax>(std::vector<Tensor>{w}, 0.1);
    double first = 0.0, last = 0.0;
    for (int it = 0; it < 200; ++it) {
      opt->zero_grad();
      Tensor loss = ops::sum_all(ops::mul(w, w));
      if (it == 0) first = loss.item();
      last = loss.item();
      loss.backward();
      opt->step();
    }
    CHECK(last < 1e-2 * first);
  }
}

TEST_CASE("rng determinism and stream independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());
  Rng c(42);
  Rng child = c.fork(7);
  const double x = child.normal();
  Rng c2(42);
  Rng child2 = c2.fork(7);
  CHECK(x == child2.normal());

  Rng d(1);
  std::string s = d.serialize();
  const double before = d.uniform();
  Rng e;
  e.deserialize(s);
  CHECK(e.uniform() == before);
}
