#include "dbp/ops.hpp"

#include "dbp/errors.hpp"

#include <cmath>

namespace dbp {

using Eigen::ArrayXd;

Tape* tape_of(std::initializer_list<const Var*> inputs) {
  for (const Var* v : inputs) {
    if (v->tracked()) return v->tape();
  }
  return nullptr;
}

namespace {

Var emit(const char* op, Tensor value, std::initializer_list<const Var*> inputs, VjpFn vjp) {
  Tape* t = tape_of(inputs);
  if (!t) return Var(std::move(value));
  return t->record(op, std::move(value), inputs, std::move(vjp));
}

Tensor like(const Tensor& t, ArrayXd data) { return Tensor(t.shape(), std::move(data)); }

void same_shape(const Var& a, const Var& b, const char* op) {
  require_same_shape(a.value(), b.value(), op);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  return emit("add", a.value() + b.value(), {&a, &b},
              [](const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  return emit("sub", a.value() - b.value(), {&a, &b},
              [](const Tensor& g) { return std::vector<Tensor>{g, -1.0 * g}; });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  Tensor av = a.value(), bv = b.value();
  return emit("mul", av * bv, {&a, &b}, [av, bv](const Tensor& g) {
    return std::vector<Tensor>{g * bv, g * av};
  });
}

Var div(const Var& a, const Var& b) {
  same_shape(a, b, "div");
  if ((b.value().array() == 0.0).any()) throw DomainError("div", "division by zero");
  Tensor av = a.value(), bv = b.value();
  return emit("div", like(av, av.array() / bv.array()), {&a, &b}, [av, bv](const Tensor& g) {
    return std::vector<Tensor>{like(g, g.array() / bv.array()),
                               like(g, -g.array() * av.array() / (bv.array() * bv.array()))};
  });
}

Var scale(const Var& a, double s) {
  return emit("scale", s * a.value(), {&a},
              [s](const Tensor& g) { return std::vector<Tensor>{s * g}; });
}

Var shift(const Var& a, double c) {
  return emit("shift", like(a.value(), a.value().array() + c), {&a},
              [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var mul_scalar(const Var& a, const Var& s) {
  if (s.size() != 1) throw ShapeError("mul_scalar: scalar operand has shape " + shape_string(s.shape()));
  Tensor av = a.value();
  const double sv = s.value()[0];
  return emit("mul_scalar", sv * av, {&a, &s}, [av, sv, sshape = s.shape()](const Tensor& g) {
    return std::vector<Tensor>{sv * g, Tensor(sshape, ArrayXd::Constant(1, dot(g, av)))};
  });
}

Var exp(const Var& a) {
  Tensor y = like(a.value(), a.value().array().exp());
  return emit("exp", y, {&a}, [y](const Tensor& g) { return std::vector<Tensor>{g * y}; });
}

Var log(const Var& a) {
  if ((a.value().array() <= 0.0).any()) throw DomainError("log", "argument must be positive");
  Tensor av = a.value();
  return emit("log", like(av, av.array().log()), {&a}, [av](const Tensor& g) {
    return std::vector<Tensor>{like(g, g.array() / av.array())};
  });
}

Var tanh(const Var& a) {
  Tensor y = like(a.value(), a.value().array().tanh());
  return emit("tanh", y, {&a}, [y](const Tensor& g) {
    return std::vector<Tensor>{like(g, g.array() * (1.0 - y.array() * y.array()))};
  });
}

Var atanh(const Var& a) {
  if ((a.value().array().abs() >= 1.0).any()) {
    throw DomainError("atanh", "argument must lie in (-1, 1)");
  }
  Tensor av = a.value();
  ArrayXd y = av.array().unaryExpr([](double v) { return std::atanh(v); });
  return emit("atanh", like(av, y), {&a}, [av](const Tensor& g) {
    return std::vector<Tensor>{like(g, g.array() / (1.0 - av.array() * av.array()))};
  });
}

Var square(const Var& a) {
  Tensor av = a.value();
  return emit("square", av * av, {&a},
              [av](const Tensor& g) { return std::vector<Tensor>{2.0 * (g * av)}; });
}

Var sqrt(const Var& a) {
  if ((a.value().array() < 0.0).any()) throw DomainError("sqrt", "argument must be non-negative");
  Tensor y = like(a.value(), a.value().array().sqrt());
  return emit("sqrt", y, {&a}, [y](const Tensor& g) {
    return std::vector<Tensor>{like(g, g.array() / (2.0 * y.array()))};
  });
}

Var relu(const Var& a) {
  Tensor av = a.value();
  return emit("relu", like(av, av.array().max(0.0)), {&a}, [av](const Tensor& g) {
    return std::vector<Tensor>{like(g, (av.array() > 0.0).select(g.array(), 0.0))};
  });
}

Var sum(const Var& a) {
  return emit("sum", Tensor::scalar(sum(a.value())), {&a}, [shape = a.shape()](const Tensor& g) {
    return std::vector<Tensor>{Tensor::full(shape, g[0])};
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.size());
  return emit("mean", Tensor::scalar(sum(a.value()) / n), {&a}, [shape = a.shape(), n](const Tensor& g) {
    return std::vector<Tensor>{Tensor::full(shape, g[0] / n)};
  });
}

Var max_reduce(const Var& a) {
  const Tensor& av = a.value();
  std::size_t best = 0;
  for (std::size_t i = 1; i < av.size(); ++i) {
    if (av[i] > av[best]) best = i;
  }
  return emit("max_reduce", Tensor::scalar(av[best]), {&a}, [shape = a.shape(), best](const Tensor& g) {
    ArrayXd d = ArrayXd::Zero(static_cast<Eigen::Index>(shape_size(shape)));
    d[static_cast<Eigen::Index>(best)] = g[0];
    return std::vector<Tensor>{Tensor(shape, std::move(d))};
  });
}

namespace {

// c(m,n) = a(m,k) b(k,n), accumulated over k in ascending order.
ArrayXd matmul_raw(const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n) {
  ArrayXd c = ArrayXd::Zero(static_cast<Eigen::Index>(m * n));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
      c[static_cast<Eigen::Index>(i * n + j)] = acc;
    }
  }
  return c;
}

ArrayXd transpose_raw(const double* a, std::size_t m, std::size_t n) {
  ArrayXd t(static_cast<Eigen::Index>(m * n));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) t[static_cast<Eigen::Index>(j * m + i)] = a[i * n + j];
  }
  return t;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor av = a.value(), bv = b.value();
  Tensor c({m, n}, matmul_raw(av.array().data(), bv.array().data(), m, k, n));
  // Constant operands (typically weight matrices) get no cotangent; the tape skips them.
  const bool da = a.tracked(), db = b.tracked();
  return emit("matmul", std::move(c), {&a, &b}, [av, bv, m, k, n, da, db](const Tensor& g) {
    std::vector<Tensor> out{Tensor::scalar(0.0), Tensor::scalar(0.0)};
    if (da) {
      ArrayXd bt = transpose_raw(bv.array().data(), k, n);
      out[0] = Tensor({m, k}, matmul_raw(g.array().data(), bt.data(), m, n, k));
    }
    if (db) {
      ArrayXd at = transpose_raw(av.array().data(), m, k);
      out[1] = Tensor({k, n}, matmul_raw(at.data(), g.array().data(), k, m, n));
    }
    return out;
  });
}

Var conv2d(const Var& x, const Var& w, std::size_t stride, std::size_t pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0]) {
    throw ShapeError("conv2d: incompatible shapes " + shape_string(xs) + " * " + shape_string(ws));
  }
  if (stride == 0) throw RangeError("conv2d: stride must be positive");
  const std::size_t cin = xs[0], h = xs[1], wd = xs[2];
  const std::size_t cout = ws[0], kh = ws[2], kw = ws[3];
  if (h + 2 * pad < kh || wd + 2 * pad < kw) throw ShapeError("conv2d: kernel larger than padded input");
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - kw) / stride + 1;

  const Tensor xv = x.value(), wv = w.value();
  const double* xp = xv.array().data();
  const double* wp = wv.array().data();

  // Visits every (output, weight, input) triple in a fixed order.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j)
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t u = 0; u < kh; ++u) {
              const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
              if (r < 0 || r >= static_cast<long>(h)) continue;
              for (std::size_t v = 0; v < kw; ++v) {
                const long s = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (s < 0 || s >= static_cast<long>(wd)) continue;
                fn((o * ho + i) * wo + j, ((o * cin + c) * kh + u) * kw + v,
                   (c * h + static_cast<std::size_t>(r)) * wd + static_cast<std::size_t>(s));
              }
            }
  };

  ArrayXd out = ArrayXd::Zero(static_cast<Eigen::Index>(cout * ho * wo));
  for_each_tap([&](std::size_t oi, std::size_t wi, std::size_t xi) { out[oi] += wp[wi] * xp[xi]; });

  return emit("conv2d", Tensor({cout, ho, wo}, std::move(out)), {&x, &w},
              [xv, wv, for_each_tap](const Tensor& g) {
                ArrayXd dx = ArrayXd::Zero(xv.array().size());
                ArrayXd dw = ArrayXd::Zero(wv.array().size());
                const double* gp = g.array().data();
                const double* xq = xv.array().data();
                const double* wq = wv.array().data();
                for_each_tap([&](std::size_t oi, std::size_t wi, std::size_t xi) {
                  dx[static_cast<Eigen::Index>(xi)] += gp[oi] * wq[wi];
                  dw[static_cast<Eigen::Index>(wi)] += gp[oi] * xq[xi];
                });
                return std::vector<Tensor>{Tensor(xv.shape(), std::move(dx)),
                                           Tensor(wv.shape(), std::move(dw))};
              });
}

Var softmax(const Var& a) {
  const std::size_t len = a.shape().back();
  const std::size_t rows = a.size() / len;
  const double* ap = a.value().array().data();
  ArrayXd y(static_cast<Eigen::Index>(a.size()));
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = ap + r * len;
    double m = row[0];
    for (std::size_t j = 1; j < len; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double e = std::exp(row[j] - m);
      y[static_cast<Eigen::Index>(r * len + j)] = e;
      z += e;
    }
    for (std::size_t j = 0; j < len; ++j) y[static_cast<Eigen::Index>(r * len + j)] /= z;
  }
  Tensor yv(a.shape(), std::move(y));
  return emit("softmax", yv, {&a}, [yv, rows, len](const Tensor& g) {
    ArrayXd d(yv.array().size());
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < len; ++j) s += g[r * len + j] * yv[r * len + j];
      for (std::size_t j = 0; j < len; ++j) {
        d[static_cast<Eigen::Index>(r * len + j)] = yv[r * len + j] * (g[r * len + j] - s);
      }
    }
    return std::vector<Tensor>{Tensor(yv.shape(), std::move(d))};
  });
}

Var gather(const Var& a, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw ShapeError("gather: empty index list");
  ArrayXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.size()) throw RangeError("gather: index " + std::to_string(idx[i]) + " out of range");
    out[static_cast<Eigen::Index>(i)] = a.value()[idx[i]];
  }
  return emit("gather", Tensor({idx.size()}, std::move(out)), {&a}, [shape = a.shape(), idx](const Tensor& g) {
    ArrayXd d = ArrayXd::Zero(static_cast<Eigen::Index>(shape_size(shape)));
    for (std::size_t i = 0; i < idx.size(); ++i) d[static_cast<Eigen::Index>(idx[i])] += g[i];
    return std::vector<Tensor>{Tensor(shape, std::move(d))};
  });
}

namespace {

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.value().rank()) throw RangeError("slice: axis out of range");
  if (begin >= end || end > a.shape()[axis]) throw RangeError("slice: bad range");
  const AxisSplit sp = split_at(a.shape(), axis);
  const std::size_t len = end - begin;
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  ArrayXd out(static_cast<Eigen::Index>(sp.outer * len * sp.inner));
  const double* ap = a.value().array().data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t e = 0; e < len; ++e)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[static_cast<Eigen::Index>((o * len + e) * sp.inner + i)] =
            ap[(o * sp.extent + begin + e) * sp.inner + i];
  return emit("slice", Tensor(out_shape, std::move(out)), {&a},
              [shape = a.shape(), sp, begin, len](const Tensor& g) {
                ArrayXd d = ArrayXd::Zero(static_cast<Eigen::Index>(shape_size(shape)));
                for (std::size_t o = 0; o < sp.outer; ++o)
                  for (std::size_t e = 0; e < len; ++e)
                    for (std::size_t i = 0; i < sp.inner; ++i)
                      d[static_cast<Eigen::Index>((o * sp.extent + begin + e) * sp.inner + i)] =
                          g[(o * len + e) * sp.inner + i];
                return std::vector<Tensor>{Tensor(shape, std::move(d))};
              });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw RangeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    out_shape[axis] += s[axis];
    s[axis] = first[axis];
    if (s != first) throw ShapeError("concat: extents differ off the concat axis");
  }
  const AxisSplit osp = split_at(out_shape, axis);
  ArrayXd out(static_cast<Eigen::Index>(shape_size(out_shape)));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const std::size_t ext = p.shape()[axis];
    const double* pp = p.value().array().data();
    for (std::size_t o = 0; o < osp.outer; ++o)
      for (std::size_t e = 0; e < ext; ++e)
        for (std::size_t i = 0; i < osp.inner; ++i)
          out[static_cast<Eigen::Index>((o * osp.extent + off + e) * osp.inner + i)] =
              pp[(o * ext + e) * osp.inner + i];
    off += ext;
  }

  Tensor value(out_shape, std::move(out));
  Tape* t = nullptr;
  std::vector<const Var*> inputs;
  std::vector<Shape> shapes;
  for (const Var& p : parts) {
    if (!t && p.tracked()) t = p.tape();
    inputs.push_back(&p);
    shapes.push_back(p.shape());
  }
  if (!t) return Var(std::move(value));
  return t->record("concat", std::move(value), inputs, [shapes, offsets, osp, axis](const Tensor& g) {
    std::vector<Tensor> grads;
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      const std::size_t ext = shapes[k][axis];
      ArrayXd d(static_cast<Eigen::Index>(shape_size(shapes[k])));
      for (std::size_t o = 0; o < osp.outer; ++o)
        for (std::size_t e = 0; e < ext; ++e)
          for (std::size_t i = 0; i < osp.inner; ++i)
            d[static_cast<Eigen::Index>((o * ext + e) * osp.inner + i)] =
                g[(o * osp.extent + offsets[k] + e) * osp.inner + i];
      grads.emplace_back(shapes[k], std::move(d));
    }
    return grads;
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor value = a.value().reshaped(std::move(shape));
  return emit("reshape", std::move(value), {&a}, [old = a.shape()](const Tensor& g) {
    return std::vector<Tensor>{g.reshaped(old)};
  });
}

}  // namespace dbp
