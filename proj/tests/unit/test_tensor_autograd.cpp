#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "sspix/autograd.hpp"
#include "sspix/tensor.hpp"

using namespace sspix;
using namespace sspix::test;

namespace {

Tensor rand_away_from_zero(std::vector<int> shape, std::mt19937_64& rng, real margin = 0.2) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<real> mag(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = (sign(rng) ? 1 : -1) * mag(rng);
  return t;
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.dim(1) == 3);

  Tensor shallow = t;
  shallow[0] = 9;
  CHECK(t[0] == 9);  // copies share storage

  Tensor deep = t.clone();
  deep[1] = 7;
  CHECK(t[1] == 2);

  t.set_shape({3, 2});
  CHECK(t.dim(0) == 3);
  CHECK_THROWS(t.set_shape({4, 2}));

  Tensor dst = Tensor::zeros({3, 2});
  dst.copy_from(t);
  CHECK(dst[0] == 9);

  Tensor nan = Tensor::from({2}, {1.0, std::nan("")});
  CHECK_FALSE(nan.all_finite());
  CHECK(Tensor::from({2}, {-3.0, 2.0}).max_abs() == 3.0);
}

TEST_CASE("elementwise op values and gradients") {
  std::mt19937_64 rng(7);
  Tensor a0 = rand_tensor({2, 3}, rng), b0 = rand_tensor({2, 3}, rng);

  Var a = leaf(a0.clone(), true), b = leaf(b0.clone(), true);
  Var s = sum_all(mul(add(a, b), sub(a, b)));  // sum(a^2 - b^2)
  backward(s);
  for (std::int64_t i = 0; i < a0.size(); ++i) {
    CHECK(a->grad[i] == doctest::Approx(2 * a0[i]).epsilon(1e-9));
    CHECK(b->grad[i] == doctest::Approx(-2 * b0[i]).epsilon(1e-9));
  }

  CHECK(fd_max_rel_err([](Var x) { return sum_all(scale(x, 1.7)); }, a0) < 1e-6);
  CHECK(fd_max_rel_err([](Var x) { return sum_all(add_scalar(mul(x, x), 0.3)); }, a0) < 1e-6);
  CHECK(fd_max_rel_err([](Var x) { return sum_all(sigmoid(x)); }, a0) < 1e-6);
  CHECK(fd_max_rel_err([](Var x) { return mean_all(mul(x, sigmoid(x))); }, a0) < 1e-6);

  Tensor pos = rand_tensor({2, 3}, rng, 0.5, 2.0);
  CHECK(fd_max_rel_err([](Var x) { return sum_all(vlog(x)); }, pos) < 1e-6);

  Tensor nz = rand_away_from_zero({2, 3}, rng);
  CHECK(fd_max_rel_err([](Var x) { return sum_all(relu(x)); }, nz) < 1e-6);

  // relu clamps negatives
  Var r = relu(constant(Tensor::from({3}, {-1.0, 0.0, 2.0})));
  CHECK(r->value[0] == 0.0);
  CHECK(r->value[2] == 2.0);
}

TEST_CASE("shape ops") {
  std::mt19937_64 rng(8);
  Tensor x0 = rand_tensor({2, 3, 2, 2}, rng);

  Var x = leaf(x0.clone(), true);
  Var y = reshape(x, {2, 12});
  CHECK(y->value.dim(1) == 12);
  CHECK(fd_max_rel_err([](Var v) { return sum_all(mul(reshape(v, {6, 4}), reshape(v, {6, 4}))); },
                       x0) < 1e-6);

  Tensor a0 = rand_tensor({1, 2, 2, 2}, rng), b0 = rand_tensor({1, 3, 2, 2}, rng);
  Var cat = concat_channels({constant(a0), constant(b0)});
  CHECK(cat->value.dim(1) == 5);
  CHECK(cat->value[0] == a0[0]);
  CHECK(cat->value[2 * 2 * 2 - 1] == a0[2 * 2 * 2 - 1]);
  CHECK(cat->value[2 * 2 * 2] == b0[0]);
  CHECK(cat->value[cat->value.size() - 1] == b0[b0.size() - 1]);

  CHECK(fd_max_rel_err(
            [](Var v) {
              Var c = concat_channels({v, v});
              return sum_all(mul(c, c));
            },
            a0) < 1e-6);

  Tensor s0 = rand_tensor({3, 2, 2, 2}, rng);
  Var stack = concat_batch({constant(a0), constant(a0), constant(a0)});
  CHECK(stack->value.dim(0) == 3);
  Var second = narrow_batch(constant(s0), 1, 1);
  CHECK(second->value.dim(0) == 1);
  CHECK(second->value[0] == s0[2 * 2 * 2]);
  CHECK(fd_max_rel_err(
            [](Var v) {
              Var n = narrow_batch(v, 1, 2);
              return sum_all(mul(n, n));
            },
            s0) < 1e-6);
  CHECK(fd_max_rel_err(
            [](Var v) {
              Var c = concat_batch({v, scale(v, 2.0)});
              return sum_all(mul(c, c));
            },
            a0) < 1e-6);
}

TEST_CASE("broadcast ops") {
  std::mt19937_64 rng(9);
  Tensor x0 = rand_tensor({2, 3, 2, 4}, rng);
  Tensor plane0 = rand_tensor({2, 4}, rng);
  Tensor vec0 = rand_tensor({2, 3, 1, 1}, rng);

  Var y = add_plane(constant(x0), constant(plane0));
  // broadcast across batch and channel
  CHECK(y->value[0] == doctest::Approx(x0[0] + plane0[0]));
  CHECK(y->value[8] == doctest::Approx(x0[8] + plane0[0]));  // next channel, same pixel

  CHECK(fd_max_rel_err(
            [&](Var v) {
              Var z = add_plane(v, constant(plane0));
              return sum_all(mul(z, z));
            },
            x0) < 1e-6);
  CHECK(fd_max_rel_err(
            [&](Var p) {
              Var z = add_plane(constant(x0), p);
              return sum_all(mul(z, z));
            },
            plane0) < 1e-6);

  Var w = add_channel_vec(constant(x0), constant(vec0));
  CHECK(w->value[0] == doctest::Approx(x0[0] + vec0[0]));
  CHECK(fd_max_rel_err(
            [&](Var v) {
              Var z = add_channel_vec(constant(x0), v);
              return sum_all(mul(z, z));
            },
            vec0) < 1e-6);
}

TEST_CASE("conv2d matches a direct convolution oracle") {
  std::mt19937_64 rng(10);
  const int n = 2, ci = 3, co = 2, h = 5, w = 4, k = 3;
  Tensor x0 = rand_tensor({n, ci, h, w}, rng);
  Tensor w0 = rand_tensor({co, ci, k, k}, rng);
  Tensor b0 = rand_tensor({co}, rng);

  Var y = conv2d(constant(x0), constant(w0), constant(b0));
  REQUIRE(y->value.shape() == std::vector<int>{n, co, h, w});

  const int pad = k / 2;
  for (int bn = 0; bn < n; ++bn)
    for (int oc = 0; oc < co; ++oc)
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx) {
          real acc = b0[oc];
          for (int ic = 0; ic < ci; ++ic)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                int sy = yy + ky - pad, sx = xx + kx - pad;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                acc += x0[((std::int64_t)(bn * ci + ic) * h + sy) * w + sx] *
                       w0[((std::int64_t)(oc * ci + ic) * k + ky) * k + kx];
              }
          CHECK(y->value[((std::int64_t)(bn * co + oc) * h + yy) * w + xx] ==
                doctest::Approx(acc).epsilon(1e-10));
        }

  CHECK(fd_max_rel_err(
            [&](Var v) {
              Var z = conv2d(v, constant(w0), constant(b0));
              return sum_all(mul(z, z));
            },
            x0) < 1e-5);
  CHECK(fd_max_rel_err(
            [&](Var v) {
              Var z = conv2d(constant(x0), v, constant(b0));
              return sum_all(mul(z, z));
            },
            w0) < 1e-5);
  CHECK(fd_max_rel_err(
            [&](Var v) { return sum_all(conv2d(constant(x0), constant(w0), v)); }, b0) < 1e-5);

  // 1x1 convolution is a per-pixel channel mix
  Tensor w1 = rand_tensor({2, 3, 1, 1}, rng);
  Tensor zb = Tensor::zeros({2});
  Var y1 = conv2d(constant(x0), constant(w1), constant(zb));
  real expect = x0[0] * w1[0] + x0[(std::int64_t)h * w] * w1[1] + x0[2 * (std::int64_t)h * w] * w1[2];
  CHECK(y1->value[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("batch norm statistics and gradients") {
  std::mt19937_64 rng(11);
  const int n = 2, c = 3, h = 4, w = 4;
  Tensor x0 = rand_tensor({n, c, h, w}, rng, -2.0, 3.0);
  Tensor gamma0 = Tensor::full({c}, 1.0), beta0 = Tensor::zeros({c});

  Tensor rm = Tensor::zeros({c}), rv = Tensor::full({c}, 1.0);
  Var y = batch_norm2d(constant(x0), constant(gamma0), constant(beta0), rm, rv, true, 0.9, 1e-5);

  const std::int64_t per = (std::int64_t)h * w;
  for (int ch = 0; ch < c; ++ch) {
    real mean = 0, var = 0;
    for (int bn = 0; bn < n; ++bn)
      for (std::int64_t i = 0; i < per; ++i) mean += y->value[((std::int64_t)(bn * c + ch)) * per + i];
    mean /= n * per;
    for (int bn = 0; bn < n; ++bn)
      for (std::int64_t i = 0; i < per; ++i) {
        real v = y->value[((std::int64_t)(bn * c + ch)) * per + i] - mean;
        var += v * v;
      }
    var /= n * per;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }

  // running stats moved toward the batch statistics
  CHECK(rm[0] != 0.0);
  CHECK(rv[0] != 1.0);

  // eval mode uses the running stats, not the batch
  Tensor rm2 = Tensor::zeros({c}), rv2 = Tensor::full({c}, 1.0);
  Var ye = batch_norm2d(constant(x0), constant(gamma0), constant(beta0), rm2, rv2, false, 0.9, 1e-5);
  CHECK(ye->value[0] == doctest::Approx(x0[0] / std::sqrt(1.0 + 1e-5)).epsilon(1e-9));
  CHECK(rm2[0] == 0.0);  // eval never updates

  for (bool training : {true, false}) {
    CHECK(fd_max_rel_err(
              [&](Var v) {
                Tensor m = Tensor::zeros({c}), s = Tensor::full({c}, 1.0);
                Var z = batch_norm2d(v, constant(gamma0), constant(beta0), m, s, training, 0.9, 1e-5);
                return sum_all(mul(z, z));
              },
              x0) < 1e-4);
  }
  Tensor g0 = rand_tensor({c}, rng, 0.5, 1.5);
  CHECK(fd_max_rel_err(
            [&](Var g) {
              Tensor m = Tensor::zeros({c}), s = Tensor::full({c}, 1.0);
              Var z = batch_norm2d(constant(x0), g, constant(beta0), m, s, true, 0.9, 1e-5);
              return sum_all(mul(z, z));
            },
            g0) < 1e-4);
}

TEST_CASE("pooling and upsampling") {
  std::mt19937_64 rng(12);
  Tensor x0 = rand_tensor({1, 2, 4, 6}, rng);
  Var p = maxpool2(constant(x0));
  REQUIRE(p->value.shape() == std::vector<int>{1, 2, 2, 3});
  // top-left window of channel 0
  real m = std::max({x0[0], x0[1], x0[6], x0[7]});
  CHECK(p->value[0] == m);
  CHECK(fd_max_rel_err(
            [](Var v) {
              Var z = maxpool2(v);
              return sum_all(mul(z, z));
            },
            x0) < 1e-5);

  Var up = upsample_bilinear(constant(x0), 8, 12);
  REQUIRE(up->value.shape() == std::vector<int>{1, 2, 8, 12});
  // constant input stays constant under bilinear interpolation
  Var upc = upsample_bilinear(constant(Tensor::full({1, 1, 3, 3}, 2.5)), 7, 5);
  for (std::int64_t i = 0; i < upc->value.size(); ++i)
    CHECK(upc->value[i] == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(fd_max_rel_err(
            [](Var v) {
              Var z = upsample_bilinear(v, 5, 9);
              return sum_all(mul(z, z));
            },
            x0) < 1e-5);

  Var gap = global_avg_pool(constant(x0));
  REQUIRE(gap->value.shape() == std::vector<int>{1, 2, 1, 1});
  real mean = 0;
  for (int i = 0; i < 24; ++i) mean += x0[i];
  CHECK(gap->value[0] == doctest::Approx(mean / 24).epsilon(1e-12));
  CHECK(fd_max_rel_err(
            [](Var v) {
              Var z = global_avg_pool(v);
              return sum_all(mul(z, z));
            },
            x0) < 1e-6);
}

TEST_CASE("layer norm over channels") {
  std::mt19937_64 rng(13);
  Tensor x0 = rand_tensor({2, 4, 2, 2}, rng);
  Tensor g0 = Tensor::full({4}, 1.0), b0 = Tensor::zeros({4});
  Var y = layernorm_channels(constant(x0), constant(g0), constant(b0), 1e-5);
  // every (n,h,w) location: mean over channels ~ 0
  const std::int64_t hw = 4;
  for (int bn = 0; bn < 2; ++bn)
    for (std::int64_t p = 0; p < hw; ++p) {
      real mean = 0;
      for (int c = 0; c < 4; ++c) mean += y->value[((std::int64_t)(bn * 4 + c)) * hw + p];
      CHECK(mean / 4 == doctest::Approx(0.0).epsilon(1e-9));
    }
  CHECK(fd_max_rel_err(
            [&](Var v) {
              Var z = layernorm_channels(v, constant(g0), constant(b0), 1e-5);
              return sum_all(mul(z, sigmoid(z)));
            },
            x0) < 1e-4);
}

TEST_CASE("row attention primitives") {
  std::mt19937_64 rng(14);
  const int n = 1, c = 2, h = 3, w = 4;
  Tensor a0 = rand_tensor({n, c, h, w}, rng), b0 = rand_tensor({n, c, h, w}, rng);
  Tensor f0 = rand_tensor({n, c, h, w}, rng);

  Var scores = row_scores(constant(a0), constant(b0));
  REQUIRE(scores->value.shape() == std::vector<int>{n, h, w, w});
  for (int y = 0; y < h; ++y)
    for (int j = 0; j < w; ++j)
      for (int k = 0; k < w; ++k) {
        real acc = 0;
        for (int ch = 0; ch < c; ++ch)
          acc += a0[((std::int64_t)ch * h + y) * w + j] * b0[((std::int64_t)ch * h + y) * w + k];
        CHECK(scores->value[((std::int64_t)y * w + j) * w + k] ==
              doctest::Approx(acc).epsilon(1e-10));
      }

  Var m = softmax_lastdim(scores);
  for (std::int64_t row = 0; row < (std::int64_t)h * w; ++row) {
    real s = 0;
    for (int k = 0; k < w; ++k) {
      real v = m->value[row * w + k];
      CHECK(v >= 0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  Var mixed = row_mix(m, constant(f0));
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int j = 0; j < w; ++j) {
        real acc = 0;
        for (int k = 0; k < w; ++k)
          acc += m->value[((std::int64_t)y * w + j) * w + k] * f0[((std::int64_t)ch * h + y) * w + k];
        CHECK(mixed->value[((std::int64_t)ch * h + y) * w + j] ==
              doctest::Approx(acc).epsilon(1e-10));
      }

  CHECK(fd_max_rel_err(
            [&](Var v) {
              Var s = softmax_lastdim(row_scores(v, constant(b0)));
              return sum_all(mul(row_mix(s, constant(f0)), constant(f0)));
            },
            a0) < 1e-4);
  CHECK(fd_max_rel_err(
            [&](Var v) {
              Var s = softmax_lastdim(row_scores(constant(a0), v));
              return sum_all(mul(row_mix(s, constant(f0)), constant(f0)));
            },
            b0) < 1e-4);
  CHECK(fd_max_rel_err(
            [&](Var v) {
              Var s = softmax_lastdim(row_scores(constant(a0), constant(b0)));
              return sum_all(mul(row_mix(s, v), v));
            },
            f0) < 1e-4);
}

TEST_CASE("masked ops") {
  std::mt19937_64 rng(15);
  const int n = 1, c = 2, h = 2, w = 3;
  Tensor a0 = rand_tensor({n, c, h, w}, rng), b0 = rand_tensor({n, c, h, w}, rng);
  Tensor mask = Tensor::from({n, h, w}, {1, 0, 1, 0, 1, 0});

  Var mix = masked_mix(constant(a0), constant(b0), mask);
  for (int ch = 0; ch < c; ++ch)
    for (std::int64_t p = 0; p < (std::int64_t)h * w; ++p) {
      real want = mask[p] != 0 ? a0[(std::int64_t)ch * h * w + p] : b0[(std::int64_t)ch * h * w + p];
      CHECK(mix->value[(std::int64_t)ch * h * w + p] == want);
    }

  Tensor x0 = rand_away_from_zero({n, c, h, w}, rng);
  Var l = masked_l1_mean(constant(x0), mask);
  real total = 0;
  for (int ch = 0; ch < c; ++ch)
    for (std::int64_t p = 0; p < (std::int64_t)h * w; ++p)
      if (mask[p] != 0) total += std::abs(x0[(std::int64_t)ch * h * w + p]);
  CHECK(scalar_value(l) == doctest::Approx(total / (3 * c)).epsilon(1e-12));

  Tensor zero_mask = Tensor::zeros({n, h, w});
  CHECK(scalar_value(masked_l1_mean(constant(x0), zero_mask)) == 0.0);

  CHECK(fd_max_rel_err([&](Var v) { return masked_l1_mean(v, mask); }, x0) < 1e-5);
  CHECK(fd_max_rel_err(
            [&](Var v) {
              Var z = masked_mix(v, constant(b0), mask);
              return sum_all(mul(z, z));
            },
            a0) < 1e-6);
  CHECK(fd_max_rel_err(
            [&](Var v) {
              Var z = masked_mix(constant(a0), v, mask);
              return sum_all(mul(z, z));
            },
            b0) < 1e-6);
}

TEST_CASE("no-grad guard suppresses graph construction") {
  Tensor x0 = Tensor::from({2}, {1.0, 2.0});
  Var x = leaf(x0, true);
  NoGradGuard ng;
  Var y = mul(x, x);
  CHECK(y->parents.empty());
  CHECK_FALSE(y->requires_grad);
}

TEST_CASE("backward accumulates through shared subexpressions") {
  Tensor x0 = Tensor::from({1}, {3.0});
  Var x = leaf(x0, true);
  Var y = mul(x, x);          // x^2
  Var z = add(y, mul(y, x));  // x^2 + x^3
  backward(sum_all(z));
  CHECK(x->grad[0] == doctest::Approx(2 * 3 + 3 * 9).epsilon(1e-12));
}
