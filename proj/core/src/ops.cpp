#include "csnorm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace csnorm {

namespace {

void require_same_shape(const Tape& t, Value a, Value b, const char* op) {
  if (t.shape(a) != t.shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(t.shape(a)) + " vs " +
                     to_string(t.shape(b)));
  }
}

template <typename F>
Tensor4 map(const Tensor4& a, F f) {
  Tensor4 out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Valid output range [lo, hi) along one axis for kernel tap k.
std::pair<std::size_t, std::size_t> tap_range(std::size_t in, std::size_t out, std::size_t k,
                                              std::size_t stride, std::size_t pad) {
  // need 0 <= o*stride + k - pad < in
  std::size_t lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  std::size_t hi = 0;
  if (in + pad > k) hi = (in + pad - k - 1) / stride + 1;
  hi = std::min(hi, out);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace

Value add(Tape& t, Value a, Value b) {
  require_same_shape(t, a, b, "add");
  const Tensor4& av = t.value(a);
  const Tensor4& bv = t.value(b);
  Tensor4 out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    for (Value in : {a, b}) {
      auto s = tp.grad_sink(in);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
    }
  });
}

Value sub(Tape& t, Value a, Value b) {
  require_same_shape(t, a, b, "sub");
  const Tensor4& av = t.value(a);
  const Tensor4& bv = t.value(b);
  Tensor4 out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto sa = tp.grad_sink(a);
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += g[i];
    auto sb = tp.grad_sink(b);
    for (std::size_t i = 0; i < sb.size(); ++i) sb[i] -= g[i];
  });
}

Value mul(Tape& t, Value a, Value b) {
  require_same_shape(t, a, b, "mul");
  const Tensor4& av = t.value(a);
  const Tensor4& bv = t.value(b);
  Tensor4 out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    const Tensor4& av = tp.value(a);
    const Tensor4& bv = tp.value(b);
    auto sa = tp.grad_sink(a);
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += g[i] * bv[i];
    auto sb = tp.grad_sink(b);
    for (std::size_t i = 0; i < sb.size(); ++i) sb[i] += g[i] * av[i];
  });
}

Value add_scalar(Tape& t, Value a, double s) {
  Tensor4 out = map(t.value(a), [s](double v) { return v + s; });
  return t.record(std::move(out), {a}, [a](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto sa = tp.grad_sink(a);
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += g[i];
  });
}

Value mul_scalar(Tape& t, Value a, double s) {
  Tensor4 out = map(t.value(a), [s](double v) { return v * s; });
  return t.record(std::move(out), {a}, [a, s](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto sa = tp.grad_sink(a);
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += g[i] * s;
  });
}

Value relu(Tape& t, Value a) {
  // NaN passes through so a poisoned input still surfaces as a non-finite loss
  Tensor4 out = map(t.value(a), [](double v) { return v > 0.0 || std::isnan(v) ? v : 0.0; });
  return t.record(std::move(out), {a}, [a](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    const Tensor4& av = tp.value(a);
    auto sa = tp.grad_sink(a);
    for (std::size_t i = 0; i < sa.size(); ++i) {
      if (av[i] > 0.0) sa[i] += g[i];
    }
  });
}

Value broadcast_to(Tape& t, Value a, const Shape& target) {
  const Shape s = t.shape(a);
  const std::size_t src[4] = {s.n, s.c, s.h, s.w};
  const std::size_t dst[4] = {target.n, target.c, target.h, target.w};
  for (int d = 0; d < 4; ++d) {
    if (src[d] != dst[d] && src[d] != 1) {
      throw ShapeError("broadcast_to: cannot broadcast " + to_string(s) + " to " +
                       to_string(target));
    }
  }
  const Tensor4& av = t.value(a);
  Tensor4 out(target);
  // Maps an output index to the source element it replicates.
  auto source_index = [s](std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    const std::size_t sn = s.n == 1 ? 0 : n;
    const std::size_t sc = s.c == 1 ? 0 : c;
    const std::size_t sh = s.h == 1 ? 0 : h;
    const std::size_t sw = s.w == 1 ? 0 : w;
    return ((sn * s.c + sc) * s.h + sh) * s.w + sw;
  };
  std::size_t k = 0;
  for (std::size_t n = 0; n < target.n; ++n)
    for (std::size_t c = 0; c < target.c; ++c)
      for (std::size_t h = 0; h < target.h; ++h)
        for (std::size_t w = 0; w < target.w; ++w) out[k++] = av[source_index(n, c, h, w)];

  return t.record(std::move(out), {a}, [a, target, source_index](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto sa = tp.grad_sink(a);
    if (sa.empty()) return;
    std::size_t k = 0;
    for (std::size_t n = 0; n < target.n; ++n)
      for (std::size_t c = 0; c < target.c; ++c)
        for (std::size_t h = 0; h < target.h; ++h)
          for (std::size_t w = 0; w < target.w; ++w) sa[source_index(n, c, h, w)] += g[k++];
  });
}

Value conv2d(Tape& t, Value input, Value kernel, int stride, int padding) {
  const Shape is = t.shape(input);
  const Shape ks = t.shape(kernel);
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  if (ks.c != is.c) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(ks.c) + " input channels, input " +
                     to_string(is) + " has " + std::to_string(is.c));
  }
  const std::size_t st = static_cast<std::size_t>(stride);
  const std::size_t pad = static_cast<std::size_t>(padding);
  if (is.h + 2 * pad < ks.h || is.w + 2 * pad < ks.w) {
    throw ShapeError("conv2d: kernel " + to_string(ks) + " larger than padded input " +
                     to_string(is));
  }
  const Shape os{is.n, ks.n, (is.h + 2 * pad - ks.h) / st + 1, (is.w + 2 * pad - ks.w) / st + 1};

  const Tensor4& x = t.value(input);
  const Tensor4& k = t.value(kernel);
  Tensor4 out(os);
  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t co = 0; co < os.c; ++co) {
      double* op = out.plane(n, co).data();
      for (std::size_t ci = 0; ci < is.c; ++ci) {
        const double* ip = x.plane(n, ci).data();
        for (std::size_t kh = 0; kh < ks.h; ++kh) {
          const auto [oh0, oh1] = tap_range(is.h, os.h, kh, st, pad);
          for (std::size_t kw = 0; kw < ks.w; ++kw) {
            const auto [ow0, ow1] = tap_range(is.w, os.w, kw, st, pad);
            const double wv = k.at(co, ci, kh, kw);
            for (std::size_t oh = oh0; oh < oh1; ++oh) {
              const double* irow = ip + (oh * st + kh - pad) * is.w;
              double* orow = op + oh * os.w;
              for (std::size_t ow = ow0; ow < ow1; ++ow) orow[ow] += wv * irow[ow * st + kw - pad];
            }
          }
        }
      }
    }
  }

  return t.record(std::move(out), {input, kernel}, [=](Tape& tp, std::size_t self) {
    const double* g = tp.grad(self).data();
    const Tensor4& x = tp.value(input);
    const Tensor4& k = tp.value(kernel);
    auto gin = tp.grad_sink(input);
    auto gk = tp.grad_sink(kernel);
    for (std::size_t n = 0; n < os.n; ++n) {
      for (std::size_t co = 0; co < os.c; ++co) {
        const double* gp = g + (n * os.c + co) * os.plane();
        for (std::size_t ci = 0; ci < is.c; ++ci) {
          const std::size_t in_off = (n * is.c + ci) * is.plane();
          const double* ip = x.storage().data() + in_off;
          for (std::size_t kh = 0; kh < ks.h; ++kh) {
            const auto [oh0, oh1] = tap_range(is.h, os.h, kh, st, pad);
            for (std::size_t kw = 0; kw < ks.w; ++kw) {
              const auto [ow0, ow1] = tap_range(is.w, os.w, kw, st, pad);
              const std::size_t kidx = k.index(co, ci, kh, kw);
              if (!gk.empty()) {
                double acc = 0.0;
                for (std::size_t oh = oh0; oh < oh1; ++oh) {
                  const double* irow = ip + (oh * st + kh - pad) * is.w;
                  const double* grow = gp + oh * os.w;
                  for (std::size_t ow = ow0; ow < ow1; ++ow) acc += grow[ow] * irow[ow * st + kw - pad];
                }
                gk[kidx] += acc;
              }
              if (!gin.empty()) {
                const double wv = k[kidx];
                double* girow0 = gin.data() + in_off;
                for (std::size_t oh = oh0; oh < oh1; ++oh) {
                  double* girow = girow0 + (oh * st + kh - pad) * is.w;
                  const double* grow = gp + oh * os.w;
                  for (std::size_t ow = ow0; ow < ow1; ++ow) girow[ow * st + kw - pad] += wv * grow[ow];
                }
              }
            }
          }
        }
      }
    }
  });
}

Value add_channel_bias(Tape& t, Value x, Value bias) {
  const Shape xs = t.shape(x);
  const Shape bs = t.shape(bias);
  if (bs != Shape{1, xs.c, 1, 1}) {
    throw ShapeError("add_channel_bias: bias " + to_string(bs) + " does not match channels of " +
                     to_string(xs));
  }
  const Tensor4& xv = t.value(x);
  const Tensor4& bv = t.value(bias);
  Tensor4 out(xs);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t c = 0; c < xs.c; ++c) {
      auto src = xv.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] + bv[c];
    }
  return t.record(std::move(out), {x, bias}, [x, bias, xs](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto sx = tp.grad_sink(x);
    for (std::size_t i = 0; i < sx.size(); ++i) sx[i] += g[i];
    auto sb = tp.grad_sink(bias);
    if (sb.empty()) return;
    const std::size_t p = xs.plane();
    for (std::size_t n = 0; n < xs.n; ++n)
      for (std::size_t c = 0; c < xs.c; ++c) {
        double acc = 0.0;
        const std::size_t off = (n * xs.c + c) * p;
        for (std::size_t i = 0; i < p; ++i) acc += g[off + i];
        sb[c] += acc;
      }
  });
}

Value dense(Tape& t, Value x, Value weight, Value bias) {
  const Shape xs = t.shape(x);
  const Shape ws = t.shape(weight);
  if (xs.h != 1 || xs.w != 1) throw ShapeError("dense: input must be N x C x 1 x 1, got " + to_string(xs));
  if (ws.h != 1 || ws.w != 1 || ws.c != xs.c) {
    throw ShapeError("dense: weight " + to_string(ws) + " incompatible with input " + to_string(xs));
  }
  return add_channel_bias(t, conv2d(t, x, weight, 1, 0), bias);
}

Value global_avg_pool(Tape& t, Value x) {
  const Shape xs = t.shape(x);
  if (xs.plane() == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  const Tensor4& xv = t.value(x);
  Tensor4 out({xs.n, xs.c, 1, 1});
  const double inv = 1.0 / static_cast<double>(xs.plane());
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t c = 0; c < xs.c; ++c) {
      double acc = 0.0;
      for (double v : xv.plane(n, c)) acc += v;
      out.at(n, c, 0, 0) = acc * inv;
    }
  return t.record(std::move(out), {x}, [x, xs, inv](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto sx = tp.grad_sink(x);
    const std::size_t p = xs.plane();
    for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
      const double gv = g[nc] * inv;
      for (std::size_t i = 0; i < p; ++i) sx[nc * p + i] += gv;
    }
  });
}

std::pair<Value, Value> channel_stats(Tape& t, Value x) {
  const Shape xs = t.shape(x);
  if (xs.plane() == 0) throw ShapeError("channel_stats: empty spatial extent");
  const Value mu = global_avg_pool(t, x);

  const Tensor4& xv = t.value(x);
  const Tensor4& mv = t.value(mu);
  const std::size_t p = xs.plane();
  const double inv = 1.0 / static_cast<double>(p);
  Tensor4 var({xs.n, xs.c, 1, 1});
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      const double d = xv[nc * p + i] - mv[nc];
      acc += d * d;
    }
    var[nc] = acc * inv;
  }
  // d var / d x_i = 2 (x_i - mu) / P; the mu dependence cancels since
  // sum_i (x_i - mu) = 0.
  const Value v = t.record(std::move(var), {x, mu}, [x, mu, xs, inv](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto sx = tp.grad_sink(x);
    if (sx.empty()) return;
    const Tensor4& xv = tp.value(x);
    const Tensor4& mv = tp.value(mu);
    const std::size_t p = xs.plane();
    for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
      const double gv = 2.0 * g[nc] * inv;
      for (std::size_t i = 0; i < p; ++i) sx[nc * p + i] += gv * (xv[nc * p + i] - mv[nc]);
    }
  });
  return {mu, v};
}

Value rsqrt(Tape& t, Value a, double eps) {
  const Tensor4& av = t.value(a);
  Tensor4 out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] + eps;
    if (!(d > 0.0)) throw NumericError("rsqrt: non-positive argument " + std::to_string(d));
    out[i] = 1.0 / std::sqrt(d);
  }
  return t.record(std::move(out), {a}, [a](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    const Tensor4& y = tp.value(Value{self});
    auto sa = tp.grad_sink(a);
    // d/da (a+eps)^(-1/2) = -1/2 y^3
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += -0.5 * g[i] * y[i] * y[i] * y[i];
  });
}

Value gate_function(Tape& t, Value alpha, double eps) {
  if (!(eps > 0.0)) throw NumericError("gate_function: epsilon must be positive");
  Tensor4 out = map(t.value(alpha), [eps](double a) {
    const double a2 = a * a;
    return a2 / (a2 + eps);
  });
  return t.record(std::move(out), {alpha}, [alpha, eps](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    const Tensor4& av = tp.value(alpha);
    auto sa = tp.grad_sink(alpha);
    for (std::size_t i = 0; i < sa.size(); ++i) {
      const double a = av[i];
      const double d = a * a + eps;
      sa[i] += g[i] * 2.0 * a * eps / (d * d);
    }
  });
}

Value gated_mix(Tape& t, Value x, Value normalized, Value g) {
  require_same_shape(t, x, normalized, "gated_mix");
  const Shape xs = t.shape(x);
  if (t.shape(g) != Shape{xs.n, xs.c, 1, 1}) {
    throw ShapeError("gated_mix: gate " + to_string(t.shape(g)) + " does not match " + to_string(xs));
  }
  const Tensor4& xv = t.value(x);
  const Tensor4& nv = t.value(normalized);
  const Tensor4& gv = t.value(g);
  const std::size_t p = xs.plane();
  Tensor4 out(xs);
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const double gate = gv[nc];
    const double keep = 1.0 - gate;
    // Closed gates pass values through untouched (keeps -0.0 and the like).
    if (gate == 0.0) {
      std::copy_n(xv.data().begin() + nc * p, p, out.data().begin() + nc * p);
    } else if (gate == 1.0) {
      std::copy_n(nv.data().begin() + nc * p, p, out.data().begin() + nc * p);
    } else {
      for (std::size_t i = nc * p; i < (nc + 1) * p; ++i) out[i] = keep * xv[i] + gate * nv[i];
    }
  }
  return t.record(std::move(out), {x, normalized, g}, [=](Tape& tp, std::size_t self) {
    auto up = tp.grad(self);
    const Tensor4& xv = tp.value(x);
    const Tensor4& nv = tp.value(normalized);
    const Tensor4& gv = tp.value(g);
    auto sx = tp.grad_sink(x);
    auto sn = tp.grad_sink(normalized);
    auto sg = tp.grad_sink(g);
    for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
      const double gate = gv[nc];
      double acc = 0.0;
      for (std::size_t i = nc * p; i < (nc + 1) * p; ++i) {
        if (!sx.empty()) sx[i] += (1.0 - gate) * up[i];
        if (!sn.empty()) sn[i] += gate * up[i];
        acc += up[i] * (nv[i] - xv[i]);
      }
      if (!sg.empty()) sg[nc] += acc;
    }
  });
}

Value sum(Tape& t, Value a) {
  const Tensor4& av = t.value(a);
  double acc = 0.0;
  for (double v : av.data()) acc += v;
  return t.record(Tensor4::scalar(acc), {a}, [a](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    auto sa = tp.grad_sink(a);
    for (double& v : sa) v += g;
  });
}

Value mean(Tape& t, Value a) {
  const std::size_t count = t.value(a).size();
  if (count == 0) throw ShapeError("mean: empty tensor");
  return mul_scalar(t, sum(t, a), 1.0 / static_cast<double>(count));
}

Value mean_square(Tape& t, Value a) {
  const Tensor4& av = t.value(a);
  if (av.empty()) throw ShapeError("mean_square: empty tensor");
  const double inv = 1.0 / static_cast<double>(av.size());
  double acc = 0.0;
  for (double v : av.data()) acc += v * v;
  return t.record(Tensor4::scalar(acc * inv), {a}, [a, inv](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    const Tensor4& av = tp.value(a);
    auto sa = tp.grad_sink(a);
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += 2.0 * inv * g * av[i];
  });
}

Tensor4 init_uniform_fan_in(const Shape& kernel_shape, Rng& rng) {
  const std::size_t fan_in = kernel_shape.c * kernel_shape.h * kernel_shape.w;
  if (fan_in == 0) throw ShapeError("init_uniform_fan_in: zero fan-in");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor4 out(kernel_shape);
  for (double& v : out.data()) v = rng.uniform(-bound, bound);
  return out;
}

}  // namespace csnorm
