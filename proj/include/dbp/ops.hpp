#pragma once

// Differentiable primitives. Each op records itself on the tape of its first
// tracked input; with no tracked input it is plain arithmetic.

#include "dbp/tape.hpp"

#include <cstddef>
#include <vector>

namespace dbp {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var shift(const Var& a, double c);
Var neg(const Var& a);
/// a * s where s holds a single element.
Var mul_scalar(const Var& a, const Var& s);

Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var atanh(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
Var relu(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Largest element; the first occurrence takes the gradient.
Var max_reduce(const Var& a);

/// (m,k) x (k,n) -> (m,n)
Var matmul(const Var& a, const Var& b);
/// Cross-correlation of x (Cin,H,W) with w (Cout,Cin,kh,kw), zero padding.
Var conv2d(const Var& x, const Var& w, std::size_t stride = 1, std::size_t pad = 0);
Var softmax(const Var& a);

Var gather(const Var& a, const std::vector<std::size_t>& flat_indices);
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);
Var concat(const std::vector<Var>& parts, std::size_t axis = 0);
Var reshape(const Var& a, Shape shape);

/// Tape shared by the tracked inputs, or nullptr if none is tracked.
Tape* tape_of(std::initializer_list<const Var*> inputs);

}  // namespace dbp
