#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "uuconv/errors.hpp"
#include "uuconv/ops.hpp"
#include "uuconv/rng.hpp"

using namespace uuconv;

namespace {

Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.normal() * stddev;
  return t;
}

double max_abs_diff(const std::vector<double>& a,
                    const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

// Independent direct convolution: plain sliding-window sums, no im2col.
std::vector<double> conv2d_oracle(const Tensor& in, const Tensor& w,
                                  const Tensor& b, int stride, int pad,
                                  int groups) {
  const int n = static_cast<int>(in.extent(0));
  const int cin = static_cast<int>(in.extent(1));
  const int h = static_cast<int>(in.extent(2));
  const int wd = static_cast<int>(in.extent(3));
  const int cout = static_cast<int>(w.extent(0));
  const int cg = static_cast<int>(w.extent(1));
  const int kh = static_cast<int>(w.extent(2));
  const int kw = static_cast<int>(w.extent(3));
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (wd + 2 * pad - kw) / stride + 1;
  const int og = cout / groups;
  std::vector<double> out(static_cast<std::size_t>(n) * cout * oh * ow, 0.0);
  for (int ni = 0; ni < n; ++ni) {
    for (int co = 0; co < cout; ++co) {
      const int g = co / og;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b.defined() ? b.values()[co] : 0.0;
          for (int ci = 0; ci < cg; ++ci) {
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                const double iv =
                    in.values()[((ni * cin + g * cg + ci) * h + iy) * wd + ix];
                const double wv =
                    w.values()[((co * cg + ci) * kh + ky) * kw + kx];
                acc += iv * wv;
              }
            }
          }
          out[((ni * cout + co) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
  return out;
}

// erf via its Taylor series (converges to machine precision for |x| <= 3).
double erf_oracle(double x) {
  const double z = x;
  double term = z;
  double sum = z;
  for (int n = 1; n < 64; ++n) {
    term *= -z * z / n;
    sum += term / (2 * n + 1);
  }
  return sum * 2.0 / std::sqrt(std::acos(-1.0));
}

}  // namespace

TEST_CASE("conv2d all-ones 3x3 kernel sums the window") {
  Tensor in = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor out = conv2d(nullptr, in, w, Tensor(), 1, 0, 1);
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out.item() == doctest::Approx(9.0));
}

TEST_CASE("conv2d stem shape follows the output-size formula") {
  Rng rng(1);
  Tensor in = randn({1, 3, 224, 224}, rng, 0.1);
  Tensor w = randn({96, 3, 4, 4}, rng, 0.1);
  Tensor out = conv2d(nullptr, in, w, Tensor(), 4, 0, 1);
  CHECK(out.shape() == Shape{1, 96, 56, 56});
}

TEST_CASE("depthwise conv2d matches the direct sliding-window oracle") {
  Rng rng(2);
  Tensor in = randn({2, 4, 8, 8}, rng);
  Tensor w = randn({4, 1, 7, 7}, rng, 0.5);
  Tensor b = randn({4}, rng, 0.1);
  Tensor out = conv2d(nullptr, in, w, b, 1, 3, 4);
  CHECK(max_abs_diff(out.values(), conv2d_oracle(in, w, b, 1, 3, 4)) < 1e-9);
}

TEST_CASE("grouped strided conv2d matches the oracle") {
  Rng rng(3);
  Tensor in = randn({2, 6, 9, 9}, rng);
  Tensor w = randn({4, 3, 3, 3}, rng, 0.5);
  Tensor b = randn({4}, rng, 0.1);
  Tensor out = conv2d(nullptr, in, w, b, 2, 1, 2);
  CHECK(out.shape() == Shape{2, 4, 5, 5});
  CHECK(max_abs_diff(out.values(), conv2d_oracle(in, w, b, 2, 1, 2)) < 1e-9);
}

TEST_CASE("conv2d output-size formula holds on a grid") {
  Rng rng(4);
  for (int h : {7, 8, 12}) {
    for (int k : {1, 3, 5}) {
      for (int s : {1, 2, 3}) {
        for (int p : {0, 1, 2}) {
          if (h + 2 * p < k) continue;
          Tensor in = randn({1, 1, static_cast<std::size_t>(h),
                             static_cast<std::size_t>(h)}, rng);
          Tensor w = randn({1, 1, static_cast<std::size_t>(k),
                            static_cast<std::size_t>(k)}, rng);
          Tensor out = conv2d(nullptr, in, w, Tensor(), s, p, 1);
          const std::size_t expect = (h + 2 * p - k) / s + 1;
          CHECK(out.extent(2) == expect);
          CHECK(out.extent(3) == expect);
        }
      }
    }
  }
}

TEST_CASE("conv2d rejects bad shapes with a dimension diagnostic") {
  Tensor in = Tensor::zeros({1, 5, 8, 8});
  Tensor w = Tensor::zeros({4, 2, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d(nullptr, in, w, Tensor(), 1, 0, 2),
                       doctest::Contains("not divisible by groups"),
                       ValidationError);
  Tensor w2 = Tensor::zeros({4, 3, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d(nullptr, in, w2, Tensor(), 1, 0, 1),
                       doctest::Contains("weight dim 1"), ValidationError);
  Tensor small = Tensor::zeros({1, 1, 2, 2});
  Tensor big_k = Tensor::zeros({1, 1, 5, 5});
  CHECK_THROWS_AS(conv2d(nullptr, small, big_k, Tensor(), 1, 0, 1),
                  ValidationError);
}

TEST_CASE("linear identity-like matrix and zero input") {
  Tensor x = Tensor::from_values({1, 2}, {1, 2});
  Tensor w = Tensor::from_values({3, 2}, {1, 0, 0, 1, 1, 1});
  Tensor b = Tensor::zeros({3});
  Tensor out = linear(nullptr, x, w, b);
  CHECK(out.values() == std::vector<double>{1, 2, 3});

  Tensor zero = Tensor::zeros({1, 2});
  Tensor b2 = Tensor::from_values({3}, {0.5, -1.0, 2.0});
  CHECK(linear(nullptr, zero, w, b2).values() ==
        std::vector<double>{0.5, -1.0, 2.0});
}

TEST_CASE("linear matches the dot-product oracle") {
  Rng rng(5);
  Tensor x = randn({3, 5}, rng);
  Tensor w = randn({4, 5}, rng);
  Tensor b = randn({4}, rng);
  Tensor out = linear(nullptr, x, w, b);
  for (int r = 0; r < 3; ++r) {
    for (int o = 0; o < 4; ++o) {
      double acc = b.values()[o];
      for (int d = 0; d < 5; ++d) {
        acc += x.values()[r * 5 + d] * w.values()[o * 5 + d];
      }
      CHECK(std::abs(out.values()[r * 4 + o] - acc) < 1e-12);
    }
  }
  Tensor bad = Tensor::zeros({3, 4});
  CHECK_THROWS_AS(linear(nullptr, bad, w, b), ValidationError);
}

TEST_CASE("layer_norm constants and unit-variance pair") {
  Tensor g = Tensor::full({3}, 1.0);
  Tensor b = Tensor::zeros({3});
  Tensor x = Tensor::full({3}, 1.0);
  for (double v : layer_norm(nullptr, x, g, b, 1e-5).values()) {
    CHECK(v == doctest::Approx(0.0));
  }
  Tensor pair = Tensor::from_values({2}, {-1, 1});
  Tensor g2 = Tensor::full({2}, 1.0);
  Tensor b2 = Tensor::zeros({2});
  const auto out = layer_norm(nullptr, pair, g2, b2, 1e-6).values();
  CHECK(std::abs(out[0] + 1.0) < 1e-3);
  CHECK(std::abs(out[1] - 1.0) < 1e-3);
}

TEST_CASE("layer_norm matches the explicit mean/variance oracle") {
  Rng rng(6);
  Tensor x = randn({4, 7}, rng);
  Tensor g = randn({7}, rng);
  Tensor b = randn({7}, rng);
  const double eps = 1e-6;
  Tensor out = layer_norm(nullptr, x, g, b, eps);
  for (int r = 0; r < 4; ++r) {
    double mean = 0;
    for (int i = 0; i < 7; ++i) mean += x.values()[r * 7 + i];
    mean /= 7;
    double var = 0;
    for (int i = 0; i < 7; ++i) {
      var += (x.values()[r * 7 + i] - mean) * (x.values()[r * 7 + i] - mean);
    }
    var /= 7;  // population convention
    for (int i = 0; i < 7; ++i) {
      const double want = (x.values()[r * 7 + i] - mean) /
                              std::sqrt(var + eps) * g.values()[i] +
                          b.values()[i];
      CHECK(std::abs(out.values()[r * 7 + i] - want) < 1e-12);
    }
  }
}

TEST_CASE("gelu fixed points, asymptote and erf oracle") {
  Tensor x = Tensor::from_values({3}, {0.0, 10.0, 1.0});
  const auto out = gelu(nullptr, x).values();
  CHECK(out[0] == 0.0);
  CHECK(std::abs(out[1] - 10.0) < 1e-6);
  const double phi1 = 0.5 * (1.0 + erf_oracle(1.0 / std::sqrt(2.0)));
  CHECK(std::abs(out[2] - 1.0 * phi1) < 1e-9);
}

TEST_CASE("softmax symmetry, stability and oracle") {
  Tensor sym = Tensor::from_values({2}, {0, 0});
  CHECK(softmax(nullptr, sym, 0).values() == std::vector<double>{0.5, 0.5});

  Tensor hot = Tensor::from_values({2}, {1000, 0});
  const auto hv = softmax(nullptr, hot, 0).values();
  CHECK(hv[0] == doctest::Approx(1.0));
  CHECK(hv[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(hv[0]));

  Rng rng(7);
  Tensor x = randn({4}, rng);
  const auto got = softmax(nullptr, x, 0).values();
  double denom = 0;
  for (double v : x.values()) denom += std::exp(v);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(got[i] - std::exp(x.values()[i]) / denom) < 1e-12);
  }
}

TEST_CASE("softmax rows sum to one and shift invariance") {
  Rng rng(8);
  Tensor x = randn({5, 6}, rng, 3.0);
  Tensor p = softmax(nullptr, x, 1);
  for (int r = 0; r < 5; ++r) {
    double s = 0;
    for (int i = 0; i < 6; ++i) s += p.values()[r * 6 + i];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  Tensor shifted = Tensor::zeros({5, 6});
  for (std::size_t i = 0; i < x.size(); ++i) {
    shifted.values()[i] = x.values()[i] + 17.5;
  }
  CHECK(max_abs_diff(p.values(), softmax(nullptr, shifted, 1).values()) <
        1e-9);
}

TEST_CASE("pool_avg2d preserves constants and averages") {
  Tensor c3 = Tensor::full({1, 1, 4, 4}, 3.0);
  for (double v : pool_avg2d(nullptr, c3, 2, 2).values()) CHECK(v == 3.0);

  Tensor q = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(pool_avg2d(nullptr, q, 1, 1).item() == doctest::Approx(2.5));

  CHECK_THROWS_AS(pool_avg2d(nullptr, q, 3, 1), ValidationError);
  CHECK_THROWS_AS(pool_avg2d(nullptr, q, 0, 1), ValidationError);
}

TEST_CASE("pool_avg2d matches the stated bin boundaries") {
  Rng rng(9);
  Tensor x = randn({1, 1, 6, 6}, rng);
  Tensor out = pool_avg2d(nullptr, x, 3, 3);
  for (int by = 0; by < 3; ++by) {
    const int y0 = (by * 6) / 3, y1 = ((by + 1) * 6 + 2) / 3;
    for (int bx = 0; bx < 3; ++bx) {
      const int x0 = (bx * 6) / 3, x1 = ((bx + 1) * 6 + 2) / 3;
      double acc = 0;
      for (int y = y0; y < y1; ++y) {
        for (int xx = x0; xx < x1; ++xx) acc += x.values()[y * 6 + xx];
      }
      acc /= (y1 - y0) * (x1 - x0);
      CHECK(std::abs(out.values()[by * 3 + bx] - acc) < 1e-12);
    }
  }
}

TEST_CASE("upsample_bilinear constants, hand-checked row, identity") {
  Tensor c = Tensor::full({1, 2, 3, 3}, 0.7);
  for (double v : upsample_bilinear(nullptr, c, 6, 6).values()) {
    CHECK(v == doctest::Approx(0.7));
  }

  Tensor row = Tensor::from_values({1, 1, 1, 2}, {0, 1});
  const auto out = upsample_bilinear(nullptr, row, 1, 4).values();
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(out[1] == doctest::Approx(0.25));
  CHECK(out[2] == doctest::Approx(0.75));
  CHECK(out[3] == doctest::Approx(1.0));

  Rng rng(10);
  Tensor x = randn({1, 2, 4, 5}, rng);
  CHECK(upsample_bilinear(nullptr, x, 4, 5).values() == x.values());
  CHECK_THROWS_AS(upsample_bilinear(nullptr, x, 3, 5), ValidationError);
}

TEST_CASE("elementwise add and channel broadcast") {
  Rng rng(11);
  Tensor x = randn({2, 3, 2, 2}, rng);
  Tensor zero = Tensor::zeros({2, 3, 2, 2});
  CHECK(add(nullptr, x, zero).values() == x.values());

  Tensor z = Tensor::zeros({1, 2, 2, 2});
  Tensor v = Tensor::from_values({2}, {1, 2});
  const auto out = broadcast_add_channels(nullptr, z, v).values();
  for (int p = 0; p < 4; ++p) {
    CHECK(out[p] == 1.0);
    CHECK(out[4 + p] == 2.0);
  }
  CHECK_THROWS_AS(add(nullptr, x, z), ValidationError);
}

TEST_CASE("broadcast channel offsets: gradient is the spatial-batch sum") {
  const std::size_t n = 3, c = 2, h = 4, w = 5;
  Tensor x = Tensor::zeros({n, c, h, w});
  Tensor v = Tensor::zeros({c}, true);
  Tape tape;
  Tensor out = broadcast_add_channels(&tape, x, v);
  tape.backward(sum_all(&tape, out));
  for (double g : v.grad()) CHECK(g == doctest::Approx(n * h * w));
}

TEST_CASE("concat, slice round-trip, global average pool") {
  Tensor a = Tensor::from_values({1, 2}, {1, 2});
  Tensor b = Tensor::from_values({1, 3}, {3, 4, 5});
  Tensor cat = concat(nullptr, {a, b}, 1);
  CHECK(cat.shape() == Shape{1, 5});
  CHECK(cat.values() == std::vector<double>{1, 2, 3, 4, 5});

  CHECK(slice(nullptr, cat, 1, 0, 2).values() == a.values());
  CHECK(slice(nullptr, cat, 1, 2, 3).values() == b.values());

  Tensor c = Tensor::full({2, 3, 4, 4}, -2.5);
  for (double v : global_avg_pool(nullptr, c).values()) {
    CHECK(v == doctest::Approx(-2.5));
  }

  Tensor mism = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(concat(nullptr, {a, mism}, 1), ValidationError);
}

TEST_CASE("permute round-trips through its inverse") {
  Rng rng(12);
  Tensor x = randn({2, 3, 4, 5}, rng);
  Tensor p = permute(nullptr, x, {0, 2, 3, 1});
  CHECK(p.shape() == Shape{2, 4, 5, 3});
  Tensor back = permute(nullptr, p, {0, 3, 1, 2});
  CHECK(back.values() == x.values());
}
