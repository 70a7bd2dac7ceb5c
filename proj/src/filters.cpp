#include "dbp/filters.hpp"

#include "dbp/errors.hpp"
#include "dbp/ops.hpp"

#include <cmath>

namespace dbp {

namespace {

struct Window {
  std::size_t H, W, M, N;
  long ci, cj;  // window center offsets

  Window(std::size_t H_, std::size_t W_, std::size_t M_, std::size_t N_)
      : H(H_), W(W_), M(M_), N(N_), ci(static_cast<long>(M_ / 2)), cj(static_cast<long>(N_ / 2)) {
    if (M % 2 == 0 || N % 2 == 0) throw ShapeError("filter window extents must be odd");
  }

  // Flat index of the neighbor at window slot (m, n) of pixel (i, j), or -1 outside the image.
  long neighbor(std::size_t i, std::size_t j, std::size_t m, std::size_t n) const {
    const long r = static_cast<long>(i) + static_cast<long>(m) - ci;
    const long c = static_cast<long>(j) + static_cast<long>(n) - cj;
    if (r < 0 || c < 0 || r >= static_cast<long>(H) || c >= static_cast<long>(W)) return -1;
    return r * static_cast<long>(W) + c;
  }
};

double color_weight(double center, double other, double sigma_c) {
  if (std::isinf(sigma_c)) return 1.0;
  const double d = center - other;
  return std::exp(-d * d / (2.0 * sigma_c * sigma_c));
}

}  // namespace

Tensor color_kernel(const Tensor& image, std::size_t i, std::size_t j, std::size_t M, std::size_t N,
                    double sigma_c) {
  if (image.rank() != 2) throw ShapeError("color_kernel expects an (H, W) image");
  if (!(sigma_c > 0.0)) throw RangeError("color permissiveness must be positive");
  const Window win(image.shape()[0], image.shape()[1], M, N);
  Eigen::ArrayXd c(static_cast<Eigen::Index>(M * N));
  const double center = image[i * win.W + j];
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = 0; n < N; ++n) {
      const long q = win.neighbor(i, j, m, n);
      c[static_cast<Eigen::Index>(m * N + n)] =
          q < 0 ? 0.0 : color_weight(center, image[static_cast<std::size_t>(q)], sigma_c);
    }
  }
  return Tensor({M, N}, std::move(c));
}

Tensor identity_logits(std::size_t H, std::size_t W, std::size_t M, std::size_t N) {
  Window(H, W, M, N);
  Eigen::ArrayXd a = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(H * W * M * N));
  const std::size_t center = (M / 2) * N + N / 2;
  for (std::size_t p = 0; p < H * W; ++p) a[static_cast<Eigen::Index>(p * M * N + center)] = 30.0;
  return Tensor({H, W, M, N}, std::move(a));
}

FilterChain identity_chain(std::size_t H, std::size_t W, const std::vector<std::pair<std::size_t, std::size_t>>& shapes,
                           double sigma_c) {
  FilterChain chain;
  for (const auto& [M, N] : shapes) chain.filters.push_back({M, N, sigma_c, identity_logits(H, W, M, N)});
  return chain;
}

Var of_apply(const Var& x, const Var& logits, const Var& guide, double sigma_c) {
  if (x.value().rank() != 2) throw ShapeError("of_apply expects an (H, W) image");
  if (!(sigma_c > 0.0)) throw RangeError("color permissiveness must be positive");
  const std::size_t H = x.shape()[0], W = x.shape()[1];
  const Shape& ls = logits.shape();
  if (ls.size() != 4 || ls[0] != H || ls[1] != W) {
    throw ShapeError("filter logits " + shape_string(ls) + " do not match image " + shape_string(x.shape()));
  }
  require_same_shape(x.value(), guide.value(), "of_apply guide");
  const Window win(H, W, ls[2], ls[3]);
  const std::size_t MN = win.M * win.N;

  const Tensor xv = x.value(), gv = guide.value();
  const double* th = logits.value().array().data();
  // Saved per pixel and window slot: softmax K, color C, effective V.
  Eigen::ArrayXd K(static_cast<Eigen::Index>(H * W * MN)), C(K.size()), V(K.size());
  Eigen::ArrayXd Z(static_cast<Eigen::Index>(H * W));
  Eigen::ArrayXd out(static_cast<Eigen::Index>(H * W));

  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      const std::size_t p = i * W + j;
      const std::size_t base = p * MN;
      double mx = th[base];
      for (std::size_t o = 1; o < MN; ++o) mx = std::max(mx, th[base + o]);
      double ksum = 0.0;
      for (std::size_t o = 0; o < MN; ++o) {
        K[static_cast<Eigen::Index>(base + o)] = std::exp(th[base + o] - mx);
        ksum += K[static_cast<Eigen::Index>(base + o)];
      }
      double z = 0.0;
      for (std::size_t o = 0; o < MN; ++o) {
        const auto e = static_cast<Eigen::Index>(base + o);
        K[e] /= ksum;
        const long q = win.neighbor(i, j, o / win.N, o % win.N);
        C[e] = q < 0 ? 0.0 : color_weight(gv[p], gv[static_cast<std::size_t>(q)], sigma_c);
        z += C[e] * K[e];
      }
      double acc = 0.0;
      for (std::size_t o = 0; o < MN; ++o) {
        const auto e = static_cast<Eigen::Index>(base + o);
        V[e] = C[e] * K[e] / z;
        const long q = win.neighbor(i, j, o / win.N, o % win.N);
        if (q >= 0) acc += V[e] * xv[static_cast<std::size_t>(q)];
      }
      Z[static_cast<Eigen::Index>(p)] = z;
      out[static_cast<Eigen::Index>(p)] = acc;
    }
  }

  Tensor outv({H, W}, out);
  Tape* t = tape_of({&x, &logits, &guide});
  if (!t) return Var(std::move(outv));
  return t->record(
      "of_apply", outv, {&x, &logits, &guide},
      [xv, gv, K, C, V, Z, out, win, MN, sigma_c, lshape = ls](const Tensor& g) {
        const std::size_t H = win.H, W = win.W;
        Eigen::ArrayXd dx = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(H * W));
        Eigen::ArrayXd dg = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(H * W));
        Eigen::ArrayXd dth(static_cast<Eigen::Index>(H * W * MN));
        std::vector<double> dK(MN);
        const bool colored = !std::isinf(sigma_c);
        for (std::size_t i = 0; i < H; ++i) {
          for (std::size_t j = 0; j < W; ++j) {
            const std::size_t p = i * W + j;
            const std::size_t base = p * MN;
            const double gp = g[p];
            const double z = Z[static_cast<Eigen::Index>(p)];
            const double o_val = out[static_cast<Eigen::Index>(p)];
            double kdot = 0.0;
            for (std::size_t o = 0; o < MN; ++o) {
              const auto e = static_cast<Eigen::Index>(base + o);
              const long q = win.neighbor(i, j, o / win.N, o % win.N);
              const double a = q < 0 ? 0.0 : xv[static_cast<std::size_t>(q)];
              const double gU = gp * (a - o_val) / z;
              dK[o] = gU * C[e];
              kdot += dK[o] * K[e];
              if (q < 0) continue;
              const auto qi = static_cast<Eigen::Index>(q);
              dx[qi] += gp * V[e];
              if (colored) {
                const double diff = gv[p] - gv[static_cast<std::size_t>(q)];
                const double dC = gU * K[e];
                const double dcenter = -C[e] * diff / (sigma_c * sigma_c);
                dg[static_cast<Eigen::Index>(p)] += dC * dcenter;
                dg[qi] -= dC * dcenter;
              }
            }
            for (std::size_t o = 0; o < MN; ++o) {
              const auto e = static_cast<Eigen::Index>(base + o);
              dth[e] = K[e] * (dK[o] - kdot);
            }
          }
        }
        return std::vector<Tensor>{Tensor({H, W}, std::move(dx)), Tensor(lshape, std::move(dth)),
                                   Tensor({H, W}, std::move(dg))};
      });
}

Var chain_apply(const Var& x, const FilterChain& chain, const std::vector<Var>& logits) {
  if (logits.size() != chain.filters.size()) throw ShapeError("one logits var per filter is required");
  Var cur = x;
  for (std::size_t b = 0; b < chain.filters.size(); ++b) {
    const Var& guide = chain.color_from_input ? cur : x;
    cur = of_apply(cur, logits[b], guide, chain.filters[b].sigma_c);
  }
  return cur;
}

}  // namespace dbp
