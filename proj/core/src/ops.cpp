#include "uuconv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>

#include "uuconv/errors.hpp"

namespace uuconv {

namespace detail {

void gemm_ab(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_abt(const double* a, const double* b, double* c, std::size_t m,
              std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

void gemm_atb(const double* a, const double* b, double* c, std::size_t m,
              std::size_t n, std::size_t k) {
  for (std::size_t l = 0; l < k; ++l) {
    const double* arow = a + l * m;
    const double* brow = b + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

namespace {

bool want_grad(Tape* tape, std::initializer_list<const Tensor*> ts) {
  if (!tape) return false;
  for (const Tensor* t : ts) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " +
                          shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op,
                  const char* what) {
  if (t.rank() != rank) {
    throw ValidationError(std::string(op) + ": " + what + " must have rank " +
                          std::to_string(rank) + ", got shape " +
                          shape_str(t.shape()));
  }
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (want_grad(tape, {&a, &b})) {
    tape->record(out, [a, b, out]() {
      const auto& g = out.grad();
      if (a.requires_grad()) a.accumulate_grad(g);
      if (b.requires_grad()) b.accumulate_grad(g);
    });
  }
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (want_grad(tape, {&a, &b})) {
    tape->record(out, [a, b, out]() {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        std::vector<double> ga(g.size());
        const auto& bv2 = b.values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv2[i];
        a.accumulate_grad(ga);
      }
      if (b.requires_grad()) {
        std::vector<double> gb(g.size());
        const auto& av2 = a.values();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av2[i];
        b.accumulate_grad(gb);
      }
    });
  }
  return out;
}

Tensor scale(Tape* tape, const Tensor& a, double factor) {
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = factor * av[i];
  if (want_grad(tape, {&a})) {
    tape->record(out, [a, out, factor]() {
      const auto& g = out.grad();
      std::vector<double> ga(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = factor * g[i];
      a.accumulate_grad(ga);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

struct ConvDims {
  std::size_t n, cin, h, w;
  std::size_t cout, cg, kh, kw;
  std::size_t oh, ow;
  std::size_t stride, pad, groups;
  std::size_t og;  // output channels per group
};

ConvDims conv_dims(const Tensor& input, const Tensor& weight,
                   const Tensor& bias, std::size_t stride, std::size_t padding,
                   std::size_t groups) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (stride == 0) throw ValidationError("conv2d: stride must be positive");
  if (groups == 0) throw ValidationError("conv2d: groups must be positive");
  ConvDims d;
  d.n = input.extent(0);
  d.cin = input.extent(1);
  d.h = input.extent(2);
  d.w = input.extent(3);
  d.cout = weight.extent(0);
  d.cg = weight.extent(1);
  d.kh = weight.extent(2);
  d.kw = weight.extent(3);
  d.stride = stride;
  d.pad = padding;
  d.groups = groups;
  if (d.cin % groups != 0) {
    throw ValidationError("conv2d: input channels " + std::to_string(d.cin) +
                          " not divisible by groups " + std::to_string(groups));
  }
  if (d.cout % groups != 0) {
    throw ValidationError("conv2d: output channels " + std::to_string(d.cout) +
                          " not divisible by groups " + std::to_string(groups));
  }
  if (d.cg != d.cin / groups) {
    throw ValidationError(
        "conv2d: weight dim 1 is " + std::to_string(d.cg) + ", expected " +
        std::to_string(d.cin / groups) + " (= input channels / groups)");
  }
  if (d.h + 2 * d.pad < d.kh || d.w + 2 * d.pad < d.kw) {
    throw ValidationError("conv2d: kernel " + std::to_string(d.kh) + "x" +
                          std::to_string(d.kw) +
                          " larger than padded input " +
                          std::to_string(d.h + 2 * d.pad) + "x" +
                          std::to_string(d.w + 2 * d.pad));
  }
  if (bias.defined()) {
    if (bias.rank() != 1 || bias.extent(0) != d.cout) {
      throw ValidationError("conv2d: bias shape " + shape_str(bias.shape()) +
                            " does not match output channels " +
                            std::to_string(d.cout));
    }
  }
  d.og = d.cout / groups;
  d.oh = (d.h + 2 * d.pad - d.kh) / d.stride + 1;
  d.ow = (d.w + 2 * d.pad - d.kw) / d.stride + 1;
  return d;
}

// Unpacks one (sample, group) into cols[cg*kh*kw, oh*ow].
void im2col(const double* in, const ConvDims& d, double* cols) {
  const std::size_t span = d.oh * d.ow;
  for (std::size_t c = 0; c < d.cg; ++c) {
    const double* plane = in + c * d.h * d.w;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        double* row = cols + ((c * d.kh + ky) * d.kw + kx) * span;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * d.stride + ky) -
              static_cast<std::ptrdiff_t>(d.pad);
          double* dst = row + oy * d.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) {
            std::fill(dst, dst + d.ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * d.w;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * d.stride + kx) -
                static_cast<std::ptrdiff_t>(d.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w))
                          ? 0.0
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Scatter-adds cols back onto the input layout (adjoint of im2col).
void col2im_accumulate(const double* cols, const ConvDims& d, double* in) {
  const std::size_t span = d.oh * d.ow;
  for (std::size_t c = 0; c < d.cg; ++c) {
    double* plane = in + c * d.h * d.w;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const double* row = cols + ((c * d.kh + ky) * d.kw + kx) * span;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * d.stride + ky) -
              static_cast<std::ptrdiff_t>(d.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
          const double* src = row + oy * d.ow;
          double* dst = plane + static_cast<std::size_t>(iy) * d.w;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * d.stride + kx) -
                static_cast<std::ptrdiff_t>(d.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
            dst[static_cast<std::size_t>(ix)] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight,
              const Tensor& bias, std::size_t stride, std::size_t padding,
              std::size_t groups) {
  const ConvDims d = conv_dims(input, weight, bias, stride, padding, groups);
  Tensor out = Tensor::zeros({d.n, d.cout, d.oh, d.ow});

  const std::size_t span = d.oh * d.ow;
  const std::size_t kdim = d.cg * d.kh * d.kw;
  std::vector<double> cols(kdim * span);
  const double* inv = input.values().data();
  const double* wv = weight.values().data();
  double* ov = out.values().data();

  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t g = 0; g < d.groups; ++g) {
      const double* in_g = inv + (n * d.cin + g * d.cg) * d.h * d.w;
      im2col(in_g, d, cols.data());
      double* out_g = ov + (n * d.cout + g * d.og) * span;
      detail::gemm_ab(wv + g * d.og * kdim, cols.data(), out_g, d.og, span,
                      kdim);
    }
  }
  if (bias.defined()) {
    const double* bv = bias.values().data();
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t c = 0; c < d.cout; ++c) {
        double* dst = ov + (n * d.cout + c) * span;
        for (std::size_t p = 0; p < span; ++p) dst[p] += bv[c];
      }
    }
  }

  if (want_grad(tape, {&input, &weight, &bias})) {
    tape->record(out, [input, weight, bias, out, d]() {
      const std::size_t span2 = d.oh * d.ow;
      const std::size_t kdim2 = d.cg * d.kh * d.kw;
      const auto& g = out.grad();
      const double* inv2 = input.values().data();
      const double* wv2 = weight.values().data();

      std::vector<double> gin, gw, gb;
      if (input.requires_grad()) gin.assign(input.size(), 0.0);
      if (weight.requires_grad()) gw.assign(weight.size(), 0.0);
      if (bias.defined() && bias.requires_grad()) gb.assign(bias.size(), 0.0);

      std::vector<double> cols2(kdim2 * span2);
      std::vector<double> gcols(kdim2 * span2);
      for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t gi = 0; gi < d.groups; ++gi) {
          const double* gout = g.data() + (n * d.cout + gi * d.og) * span2;
          if (weight.requires_grad()) {
            const double* in_g = inv2 + (n * d.cin + gi * d.cg) * d.h * d.w;
            im2col(in_g, d, cols2.data());
            detail::gemm_abt(gout, cols2.data(),
                             gw.data() + gi * d.og * kdim2, d.og, kdim2,
                             span2);
          }
          if (input.requires_grad()) {
            std::fill(gcols.begin(), gcols.end(), 0.0);
            detail::gemm_atb(wv2 + gi * d.og * kdim2, gout, gcols.data(),
                             kdim2, span2, d.og);
            col2im_accumulate(gcols.data(), d,
                              gin.data() + (n * d.cin + gi * d.cg) * d.h * d.w);
          }
        }
      }
      if (!gb.empty()) {
        for (std::size_t n = 0; n < d.n; ++n) {
          for (std::size_t c = 0; c < d.cout; ++c) {
            const double* src = g.data() + (n * d.cout + c) * span2;
            double acc = 0.0;
            for (std::size_t p = 0; p < span2; ++p) acc += src[p];
            gb[c] += acc;
          }
        }
        bias.accumulate_grad(gb);
      }
      if (!gin.empty()) input.accumulate_grad(gin);
      if (!gw.empty()) weight.accumulate_grad(gw);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear

Tensor linear(Tape* tape, const Tensor& input, const Tensor& weight,
              const Tensor& bias) {
  require_rank(weight, 2, "linear", "weight");
  if (input.rank() < 1) {
    throw ValidationError("linear: input must have at least one axis");
  }
  const std::size_t din = input.shape().back();
  const std::size_t dout = weight.extent(0);
  if (weight.extent(1) != din) {
    throw ValidationError("linear: input trailing dim " + std::to_string(din) +
                          " does not match weight columns " +
                          std::to_string(weight.extent(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.extent(0) != dout)) {
    throw ValidationError("linear: bias shape " + shape_str(bias.shape()) +
                          " does not match output dim " +
                          std::to_string(dout));
  }
  const std::size_t m = input.size() / din;
  Shape oshape = input.shape();
  oshape.back() = dout;
  Tensor out = Tensor::zeros(oshape);

  const double* iv = input.values().data();
  const double* wv = weight.values().data();
  double* ov = out.values().data();
  detail::gemm_abt(iv, wv, ov, m, dout, din);
  if (bias.defined()) {
    const double* bv = bias.values().data();
    for (std::size_t r = 0; r < m; ++r) {
      double* row = ov + r * dout;
      for (std::size_t o = 0; o < dout; ++o) row[o] += bv[o];
    }
  }

  if (want_grad(tape, {&input, &weight, &bias})) {
    tape->record(out, [input, weight, bias, out, m, din, dout]() {
      const auto& g = out.grad();
      if (input.requires_grad()) {
        std::vector<double> gin(input.size(), 0.0);
        detail::gemm_ab(g.data(), weight.values().data(), gin.data(), m, din,
                        dout);
        input.accumulate_grad(gin);
      }
      if (weight.requires_grad()) {
        std::vector<double> gw(weight.size(), 0.0);
        detail::gemm_atb(g.data(), input.values().data(), gw.data(), dout, din,
                         m);
        weight.accumulate_grad(gw);
      }
      if (bias.defined() && bias.requires_grad()) {
        std::vector<double> gb(dout, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
          const double* row = g.data() + r * dout;
          for (std::size_t o = 0; o < dout; ++o) gb[o] += row[o];
        }
        bias.accumulate_grad(gb);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// layer_norm

Tensor layer_norm(Tape* tape, const Tensor& input, const Tensor& gamma,
                  const Tensor& beta, double eps) {
  if (eps <= 0) throw ValidationError("layer_norm: eps must be positive");
  const std::size_t c = input.shape().back();
  if (gamma.rank() != 1 || gamma.extent(0) != c) {
    throw ValidationError("layer_norm: gamma shape " +
                          shape_str(gamma.shape()) +
                          " does not match channel dim " + std::to_string(c));
  }
  if (beta.rank() != 1 || beta.extent(0) != c) {
    throw ValidationError("layer_norm: beta shape " + shape_str(beta.shape()) +
                          " does not match channel dim " + std::to_string(c));
  }
  const std::size_t rows = input.size() / c;
  Tensor out = Tensor::zeros(input.shape());
  const double* iv = input.values().data();
  const double* gv = gamma.values().data();
  const double* bv = beta.values().data();
  double* ov = out.values().data();

  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = iv + r * c;
    double* y = ov + r * c;
    double mean = 0.0;
    for (std::size_t i = 0; i < c; ++i) mean += x[i];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      const double d = x[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv_sigma = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < c; ++i) {
      y[i] = (x[i] - mean) * inv_sigma * gv[i] + bv[i];
    }
  }

  if (want_grad(tape, {&input, &gamma, &beta})) {
    tape->record(out, [input, gamma, beta, out, eps, rows, c]() {
      const auto& g = out.grad();
      const double* iv2 = input.values().data();
      const double* gv2 = gamma.values().data();
      std::vector<double> gin, ggamma, gbeta;
      if (input.requires_grad()) gin.assign(input.size(), 0.0);
      if (gamma.requires_grad()) ggamma.assign(c, 0.0);
      if (beta.requires_grad()) gbeta.assign(c, 0.0);
      std::vector<double> xhat(c);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* x = iv2 + r * c;
        const double* gy = g.data() + r * c;
        double mean = 0.0;
        for (std::size_t i = 0; i < c; ++i) mean += x[i];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
          const double d = x[i] - mean;
          var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv_sigma = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < c; ++i) {
          xhat[i] = (x[i] - mean) * inv_sigma;
        }
        if (!ggamma.empty()) {
          for (std::size_t i = 0; i < c; ++i) ggamma[i] += gy[i] * xhat[i];
        }
        if (!gbeta.empty()) {
          for (std::size_t i = 0; i < c; ++i) gbeta[i] += gy[i];
        }
        if (!gin.empty()) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t i = 0; i < c; ++i) {
            const double t = gy[i] * gv2[i];
            s1 += t;
            s2 += t * xhat[i];
          }
          s1 /= static_cast<double>(c);
          s2 /= static_cast<double>(c);
          double* gx = gin.data() + r * c;
          for (std::size_t i = 0; i < c; ++i) {
            gx[i] = (gy[i] * gv2[i] - s1 - xhat[i] * s2) * inv_sigma;
          }
        }
      }
      if (!gin.empty()) input.accumulate_grad(gin);
      if (!ggamma.empty()) gamma.accumulate_grad(ggamma);
      if (!gbeta.empty()) beta.accumulate_grad(gbeta);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// gelu

Tensor gelu(Tape* tape, const Tensor& input) {
  Tensor out = Tensor::zeros(input.shape());
  const auto& iv = input.values();
  auto& ov = out.values();
  constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
  for (std::size_t i = 0; i < iv.size(); ++i) {
    const double phi = 0.5 * (1.0 + std::erf(iv[i] * inv_sqrt2));
    ov[i] = iv[i] * phi;
  }
  if (want_grad(tape, {&input})) {
    tape->record(out, [input, out]() {
      const auto& g = out.grad();
      const auto& iv2 = input.values();
      std::vector<double> gin(g.size());
      constexpr double inv_sqrt2pi = 0.3989422804014326779399461;
      constexpr double c = std::numbers::sqrt2 / 2.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = iv2[i];
        const double phi = 0.5 * (1.0 + std::erf(x * c));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
        gin[i] = g[i] * (phi + x * pdf);
      }
      input.accumulate_grad(gin);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax

namespace {

struct AxisSplit {
  std::size_t outer, k, inner;
};

AxisSplit split_at_axis(const Tensor& t, std::size_t axis, const char* op) {
  const Shape& s = t.shape();
  if (axis >= s.size()) {
    throw ValidationError(std::string(op) + ": axis " + std::to_string(axis) +
                          " out of range for shape " + shape_str(s));
  }
  AxisSplit sp{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

}  // namespace

Tensor softmax(Tape* tape, const Tensor& input, std::size_t axis) {
  const AxisSplit sp = split_at_axis(input, axis, "softmax");
  Tensor out = Tensor::zeros(input.shape());
  const double* iv = input.values().data();
  double* ov = out.values().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.k * sp.inner + in;
      double mx = iv[base];
      for (std::size_t j = 1; j < sp.k; ++j) {
        mx = std::max(mx, iv[base + j * sp.inner]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < sp.k; ++j) {
        const double e = std::exp(iv[base + j * sp.inner] - mx);
        ov[base + j * sp.inner] = e;
        sum += e;
      }
      const double inv_sum = 1.0 / sum;
      for (std::size_t j = 0; j < sp.k; ++j) ov[base + j * sp.inner] *= inv_sum;
    }
  }
  if (want_grad(tape, {&input})) {
    tape->record(out, [input, out, sp]() {
      const auto& g = out.grad();
      const double* p = out.values().data();
      std::vector<double> gin(g.size());
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.k * sp.inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < sp.k; ++j) {
            const std::size_t idx = base + j * sp.inner;
            dot += g[idx] * p[idx];
          }
          for (std::size_t j = 0; j < sp.k; ++j) {
            const std::size_t idx = base + j * sp.inner;
            gin[idx] = p[idx] * (g[idx] - dot);
          }
        }
      }
      input.accumulate_grad(gin);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pool_avg2d

Tensor pool_avg2d(Tape* tape, const Tensor& input, std::size_t out_h,
                  std::size_t out_w) {
  require_rank(input, 4, "pool_avg2d", "input");
  const std::size_t n = input.extent(0), c = input.extent(1),
                    h = input.extent(2), w = input.extent(3);
  if (out_h == 0 || out_h > h) {
    throw ValidationError("pool_avg2d: target height " +
                          std::to_string(out_h) + " not in [1, " +
                          std::to_string(h) + "]");
  }
  if (out_w == 0 || out_w > w) {
    throw ValidationError("pool_avg2d: target width " + std::to_string(out_w) +
                          " not in [1, " + std::to_string(w) + "]");
  }
  auto bin_lo = [](std::size_t b, std::size_t in, std::size_t outn) {
    return (b * in) / outn;
  };
  auto bin_hi = [](std::size_t b, std::size_t in, std::size_t outn) {
    return ((b + 1) * in + outn - 1) / outn;  // ceil
  };
  Tensor out = Tensor::zeros({n, c, out_h, out_w});
  const double* iv = input.values().data();
  double* ov = out.values().data();
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const double* plane = iv + nc * h * w;
    double* oplane = ov + nc * out_h * out_w;
    for (std::size_t by = 0; by < out_h; ++by) {
      const std::size_t y0 = bin_lo(by, h, out_h), y1 = bin_hi(by, h, out_h);
      for (std::size_t bx = 0; bx < out_w; ++bx) {
        const std::size_t x0 = bin_lo(bx, w, out_w), x1 = bin_hi(bx, w, out_w);
        double acc = 0.0;
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x) acc += plane[y * w + x];
        }
        oplane[by * out_w + bx] =
            acc / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  if (want_grad(tape, {&input})) {
    tape->record(out, [input, out, n, c, h, w, out_h, out_w, bin_lo,
                       bin_hi]() {
      const auto& g = out.grad();
      std::vector<double> gin(input.size(), 0.0);
      for (std::size_t nc = 0; nc < n * c; ++nc) {
        double* plane = gin.data() + nc * h * w;
        const double* oplane = g.data() + nc * out_h * out_w;
        for (std::size_t by = 0; by < out_h; ++by) {
          const std::size_t y0 = bin_lo(by, h, out_h),
                            y1 = bin_hi(by, h, out_h);
          for (std::size_t bx = 0; bx < out_w; ++bx) {
            const std::size_t x0 = bin_lo(bx, w, out_w),
                              x1 = bin_hi(bx, w, out_w);
            const double share = oplane[by * out_w + bx] /
                                 static_cast<double>((y1 - y0) * (x1 - x0));
            for (std::size_t y = y0; y < y1; ++y) {
              for (std::size_t x = x0; x < x1; ++x) plane[y * w + x] += share;
            }
          }
        }
      }
      input.accumulate_grad(gin);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// upsample_bilinear

namespace {

struct LerpIndex {
  std::size_t lo, hi;
  double t;  // weight of hi
};

// align_corners=false source mapping with clamping at the borders.
LerpIndex lerp_index(std::size_t out_i, std::size_t in_n, std::size_t out_n) {
  const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
  double src = (static_cast<double>(out_i) + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  const double max_src = static_cast<double>(in_n - 1);
  if (src > max_src) src = max_src;
  LerpIndex li;
  li.lo = static_cast<std::size_t>(src);
  li.t = src - static_cast<double>(li.lo);
  li.hi = std::min(li.lo + 1, in_n - 1);
  return li;
}

}  // namespace

Tensor upsample_bilinear(Tape* tape, const Tensor& input, std::size_t out_h,
                         std::size_t out_w) {
  require_rank(input, 4, "upsample_bilinear", "input");
  const std::size_t n = input.extent(0), c = input.extent(1),
                    h = input.extent(2), w = input.extent(3);
  if (out_h < h || out_w < w) {
    throw ValidationError("upsample_bilinear: target " +
                          std::to_string(out_h) + "x" + std::to_string(out_w) +
                          " smaller than input " + std::to_string(h) + "x" +
                          std::to_string(w) + " (upscale only)");
  }
  Tensor out = Tensor::zeros({n, c, out_h, out_w});
  std::vector<LerpIndex> ys(out_h), xs(out_w);
  for (std::size_t y = 0; y < out_h; ++y) ys[y] = lerp_index(y, h, out_h);
  for (std::size_t x = 0; x < out_w; ++x) xs[x] = lerp_index(x, w, out_w);

  const double* iv = input.values().data();
  double* ov = out.values().data();
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const double* plane = iv + nc * h * w;
    double* oplane = ov + nc * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const LerpIndex& ly = ys[y];
      const double* r0 = plane + ly.lo * w;
      const double* r1 = plane + ly.hi * w;
      double* orow = oplane + y * out_w;
      for (std::size_t x = 0; x < out_w; ++x) {
        const LerpIndex& lx = xs[x];
        const double top = r0[lx.lo] * (1.0 - lx.t) + r0[lx.hi] * lx.t;
        const double bot = r1[lx.lo] * (1.0 - lx.t) + r1[lx.hi] * lx.t;
        orow[x] = top * (1.0 - ly.t) + bot * ly.t;
      }
    }
  }
  if (want_grad(tape, {&input})) {
    tape->record(out, [input, out, n, c, h, w, out_h, out_w, ys, xs]() {
      const auto& g = out.grad();
      std::vector<double> gin(input.size(), 0.0);
      for (std::size_t nc = 0; nc < n * c; ++nc) {
        double* plane = gin.data() + nc * h * w;
        const double* oplane = g.data() + nc * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
          const LerpIndex& ly = ys[y];
          const double* orow = oplane + y * out_w;
          for (std::size_t x = 0; x < out_w; ++x) {
            const LerpIndex& lx = xs[x];
            const double gv = orow[x];
            plane[ly.lo * w + lx.lo] += gv * (1.0 - ly.t) * (1.0 - lx.t);
            plane[ly.lo * w + lx.hi] += gv * (1.0 - ly.t) * lx.t;
            plane[ly.hi * w + lx.lo] += gv * ly.t * (1.0 - lx.t);
            plane[ly.hi * w + lx.hi] += gv * ly.t * lx.t;
          }
        }
      }
      input.accumulate_grad(gin);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// broadcast / channel helpers

Tensor broadcast_add_channels(Tape* tape, const Tensor& x, const Tensor& v) {
  require_rank(x, 4, "broadcast_add_channels", "x");
  const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2),
                    w = x.extent(3);
  const bool per_sample = v.rank() == 2;
  if (per_sample) {
    if (v.extent(0) != n || v.extent(1) != c) {
      throw ValidationError("broadcast_add_channels: offsets " +
                            shape_str(v.shape()) + " do not match [N,C] = [" +
                            std::to_string(n) + "," + std::to_string(c) + "]");
    }
  } else if (v.rank() != 1 || v.extent(0) != c) {
    throw ValidationError("broadcast_add_channels: offset shape " +
                          shape_str(v.shape()) + " does not match channels " +
                          std::to_string(c));
  }
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.values().data();
  const double* vv = v.values().data();
  double* ov = out.values().data();
  const std::size_t span = h * w;
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      const double offset = per_sample ? vv[ni * c + ci] : vv[ci];
      const double* src = xv + (ni * c + ci) * span;
      double* dst = ov + (ni * c + ci) * span;
      for (std::size_t p = 0; p < span; ++p) dst[p] = src[p] + offset;
    }
  }
  if (want_grad(tape, {&x, &v})) {
    tape->record(out, [x, v, out, n, c, span, per_sample]() {
      const auto& g = out.grad();
      if (x.requires_grad()) x.accumulate_grad(g);
      if (v.requires_grad()) {
        std::vector<double> gv(v.size(), 0.0);
        for (std::size_t ni = 0; ni < n; ++ni) {
          for (std::size_t ci = 0; ci < c; ++ci) {
            const double* src = g.data() + (ni * c + ci) * span;
            double acc = 0.0;
            for (std::size_t p = 0; p < span; ++p) acc += src[p];
            gv[per_sample ? ni * c + ci : ci] += acc;
          }
        }
        v.accumulate_grad(gv);
      }
    });
  }
  return out;
}

Tensor scale_channels_last(Tape* tape, const Tensor& x, const Tensor& v) {
  const std::size_t c = x.shape().back();
  if (v.rank() != 1 || v.extent(0) != c) {
    throw ValidationError("scale_channels_last: gains " +
                          shape_str(v.shape()) +
                          " do not match trailing dim " + std::to_string(c));
  }
  const std::size_t rows = x.size() / c;
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.values().data();
  const double* vv = v.values().data();
  double* ov = out.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv + r * c;
    double* dst = ov + r * c;
    for (std::size_t i = 0; i < c; ++i) dst[i] = src[i] * vv[i];
  }
  if (want_grad(tape, {&x, &v})) {
    tape->record(out, [x, v, out, rows, c]() {
      const auto& g = out.grad();
      if (x.requires_grad()) {
        const double* vv2 = v.values().data();
        std::vector<double> gx(g.size());
        for (std::size_t r = 0; r < rows; ++r) {
          const double* grow = g.data() + r * c;
          double* dst = gx.data() + r * c;
          for (std::size_t i = 0; i < c; ++i) dst[i] = grow[i] * vv2[i];
        }
        x.accumulate_grad(gx);
      }
      if (v.requires_grad()) {
        const double* xv2 = x.values().data();
        std::vector<double> gv(c, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* grow = g.data() + r * c;
          const double* xrow = xv2 + r * c;
          for (std::size_t i = 0; i < c; ++i) gv[i] += grow[i] * xrow[i];
        }
        v.accumulate_grad(gv);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// concat / slice / permute / reshape

Tensor concat(Tape* tape, const std::vector<Tensor>& tensors,
              std::size_t axis) {
  if (tensors.empty()) throw ValidationError("concat: no inputs");
  const Shape& first = tensors[0].shape();
  if (axis >= first.size()) {
    throw ValidationError("concat: axis " + std::to_string(axis) +
                          " out of range for shape " + shape_str(first));
  }
  std::size_t axis_total = 0;
  for (const Tensor& t : tensors) {
    const Shape& s = t.shape();
    if (s.size() != first.size()) {
      throw ValidationError("concat: rank mismatch " + shape_str(first) +
                            " vs " + shape_str(s));
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw ValidationError("concat: dim " + std::to_string(i) +
                              " differs: " + shape_str(first) + " vs " +
                              shape_str(s));
      }
    }
    axis_total += s[axis];
  }
  Shape oshape = first;
  oshape[axis] = axis_total;
  Tensor out = Tensor::zeros(oshape);

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  double* ov = out.values().data();
  const std::size_t out_stride = axis_total * inner;
  std::size_t offset = 0;
  for (const Tensor& t : tensors) {
    const std::size_t block = t.shape()[axis] * inner;
    const double* tv = t.values().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::memcpy(ov + o * out_stride + offset, tv + o * block,
                  block * sizeof(double));
    }
    offset += block;
  }

  bool any_grad = false;
  for (const Tensor& t : tensors) any_grad |= t.requires_grad();
  if (tape && any_grad) {
    tape->record(out, [tensors, out, outer, out_stride]() {
      const auto& g = out.grad();
      std::size_t offset2 = 0;
      for (const Tensor& t : tensors) {
        const std::size_t block = t.size() / outer;
        if (t.requires_grad()) {
          std::vector<double> gt(t.size());
          for (std::size_t o = 0; o < outer; ++o) {
            std::memcpy(gt.data() + o * block,
                        g.data() + o * out_stride + offset2,
                        block * sizeof(double));
          }
          t.accumulate_grad(gt);
        }
        offset2 += block;
      }
    });
  }
  return out;
}

Tensor slice(Tape* tape, const Tensor& input, std::size_t axis,
             std::size_t start, std::size_t length) {
  const Shape& s = input.shape();
  if (axis >= s.size()) {
    throw ValidationError("slice: axis " + std::to_string(axis) +
                          " out of range for shape " + shape_str(s));
  }
  if (length == 0 || start + length > s[axis]) {
    throw ValidationError("slice: range [" + std::to_string(start) + ", " +
                          std::to_string(start + length) +
                          ") invalid for extent " + std::to_string(s[axis]));
  }
  Shape oshape = s;
  oshape[axis] = length;
  Tensor out = Tensor::zeros(oshape);

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t in_stride = s[axis] * inner;
  const std::size_t block = length * inner;
  const double* iv = input.values().data();
  double* ov = out.values().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::memcpy(ov + o * block, iv + o * in_stride + start * inner,
                block * sizeof(double));
  }
  if (want_grad(tape, {&input})) {
    tape->record(out, [input, out, outer, inner, in_stride, block, start]() {
      const auto& g = out.grad();
      std::vector<double> gin(input.size(), 0.0);
      for (std::size_t o = 0; o < outer; ++o) {
        double* dst = gin.data() + o * in_stride + start * inner;
        const double* src = g.data() + o * block;
        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
      }
      input.accumulate_grad(gin);
    });
  }
  return out;
}

namespace {

void apply_permutation(const double* src, const Shape& in_shape,
                       const std::vector<std::size_t>& order, double* dst) {
  const std::size_t rank = in_shape.size();
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[order[i]];
  const auto in_strides = row_major_strides(in_shape);
  const auto out_strides = row_major_strides(out_shape);
  const std::size_t total = shape_numel(in_shape);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    std::size_t src_off = 0;
    for (std::size_t i = 0; i < rank; ++i) {
      const std::size_t coord = rem / out_strides[i];
      rem -= coord * out_strides[i];
      src_off += coord * in_strides[order[i]];
    }
    dst[flat] = src[src_off];
  }
}

}  // namespace

Tensor permute(Tape* tape, const Tensor& input,
               const std::vector<std::size_t>& order) {
  const Shape& s = input.shape();
  if (order.size() != s.size()) {
    throw ValidationError("permute: order has " +
                          std::to_string(order.size()) + " axes for shape " +
                          shape_str(s));
  }
  std::vector<bool> seen(s.size(), false);
  for (std::size_t a : order) {
    if (a >= s.size() || seen[a]) {
      throw ValidationError("permute: order is not a permutation of axes");
    }
    seen[a] = true;
  }
  Shape oshape(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) oshape[i] = s[order[i]];
  Tensor out = Tensor::zeros(oshape);
  apply_permutation(input.values().data(), s, order, out.values().data());

  if (want_grad(tape, {&input})) {
    std::vector<std::size_t> inverse(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = i;
    tape->record(out, [input, out, inverse, oshape]() {
      const auto& g = out.grad();
      std::vector<double> gin(input.size());
      apply_permutation(g.data(), oshape, inverse, gin.data());
      input.accumulate_grad(gin);
    });
  }
  return out;
}

Tensor reshape(Tape* tape, const Tensor& input, Shape new_shape) {
  if (shape_numel(new_shape) != input.size()) {
    throw ValidationError("reshape: new shape " + shape_str(new_shape) +
                          " has " + std::to_string(shape_numel(new_shape)) +
                          " elements, tensor has " +
                          std::to_string(input.size()));
  }
  Tensor out = Tensor::from_values(std::move(new_shape), input.values());
  if (want_grad(tape, {&input})) {
    tape->record(out, [input, out]() { input.accumulate_grad(out.grad()); });
  }
  return out;
}

Tensor global_avg_pool(Tape* tape, const Tensor& input) {
  require_rank(input, 4, "global_avg_pool", "input");
  const std::size_t n = input.extent(0), c = input.extent(1),
                    span = input.extent(2) * input.extent(3);
  Tensor out = Tensor::zeros({n, c});
  const double* iv = input.values().data();
  double* ov = out.values().data();
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const double* plane = iv + nc * span;
    double acc = 0.0;
    for (std::size_t p = 0; p < span; ++p) acc += plane[p];
    ov[nc] = acc / static_cast<double>(span);
  }
  if (want_grad(tape, {&input})) {
    tape->record(out, [input, out, n, c, span]() {
      const auto& g = out.grad();
      std::vector<double> gin(input.size());
      for (std::size_t nc = 0; nc < n * c; ++nc) {
        const double share = g[nc] / static_cast<double>(span);
        double* plane = gin.data() + nc * span;
        for (std::size_t p = 0; p < span; ++p) plane[p] = share;
      }
      input.accumulate_grad(gin);
    });
  }
  return out;
}

Tensor select_rows(Tape* tape, const Tensor& input,
                   const std::vector<std::size_t>& rows) {
  if (input.rank() < 1) {
    throw ValidationError("select_rows: input must have at least one axis");
  }
  if (rows.empty()) throw ValidationError("select_rows: empty row list");
  const std::size_t n = input.extent(0);
  const std::size_t stride = input.size() / n;
  for (std::size_t r : rows) {
    if (r >= n) {
      throw ValidationError("select_rows: row " + std::to_string(r) +
                            " out of range for " + std::to_string(n));
    }
  }
  Shape oshape = input.shape();
  oshape[0] = rows.size();
  Tensor out = Tensor::zeros(oshape);
  const double* iv = input.values().data();
  double* ov = out.values().data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::memcpy(ov + i * stride, iv + rows[i] * stride,
                stride * sizeof(double));
  }
  if (want_grad(tape, {&input})) {
    tape->record(out, [input, out, rows, stride]() {
      const auto& g = out.grad();
      std::vector<double> gin(input.size(), 0.0);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        double* dst = gin.data() + rows[i] * stride;
        const double* src = g.data() + i * stride;
        for (std::size_t j = 0; j < stride; ++j) dst[j] += src[j];
      }
      input.accumulate_grad(gin);
    });
  }
  return out;
}

Tensor sum_all(Tape* tape, const Tensor& input) {
  double acc = 0.0;
  for (double v : input.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (want_grad(tape, {&input})) {
    tape->record(out, [input, out]() {
      const double g = out.grad()[0];
      std::vector<double> gin(input.size(), g);
      input.accumulate_grad(gin);
    });
  }
  return out;
}

}  // namespace uuconv
