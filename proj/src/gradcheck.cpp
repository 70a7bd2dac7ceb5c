#include "dbp/gradcheck.hpp"

#include "dbp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dbp {

namespace {

double eval_scalar(const ScalarFn& f, const Tensor& x) {
  Tape tape(false);
  const Var y = f(tape.leaf(x));
  if (y.size() != 1) throw ShapeError("finite_diff_check needs a scalar function");
  const double v = y.value()[0];
  if (!std::isfinite(v)) throw NumericDivergenceError("finite_diff_check: non-finite function value");
  return v;
}

}  // namespace

GradCheck finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw RangeError("finite_diff_check: step must be positive");
  GradCheck out;
  {
    Tape tape;
    const Var xv = tape.leaf(x);
    const Var y = f(xv);
    if (y.size() != 1) throw ShapeError("finite_diff_check needs a scalar function");
    out.tape_grad = y.tracked() ? tape.backward(y).wrt(xv) : Tensor::zeros(x.shape());
  }
  if (!out.tape_grad.all_finite()) throw NumericDivergenceError("finite_diff_check: non-finite tape gradient");

  Eigen::ArrayXd fd(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    Eigen::ArrayXd plus = x.array(), minus = x.array();
    plus[static_cast<Eigen::Index>(i)] += h;
    minus[static_cast<Eigen::Index>(i)] -= h;
    fd[static_cast<Eigen::Index>(i)] =
        (eval_scalar(f, Tensor(x.shape(), plus)) - eval_scalar(f, Tensor(x.shape(), minus))) / (2.0 * h);
  }
  out.fd_grad = Tensor(x.shape(), std::move(fd));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double g = out.tape_grad[i];
    out.max_rel_error =
        std::max(out.max_rel_error, std::abs(g - out.fd_grad[i]) / std::max(std::abs(g), 1e-12));
  }
  return out;
}

}  // namespace dbp
