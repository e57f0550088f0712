#pragma once

#include <functional>
#include <vector>

#include "vsgg/tensor.hpp"

namespace vsgg {

// Compares the analytic gradient of `f` against central finite differences.
// `f` must rebuild its graph from the current parameter values on every call
// and be deterministic (any sampling frozen). Returns the maximum over all
// parameter coordinates of |analytic - fd| / (|analytic| + |fd| + 1e-12).
double finite_diff_check(const std::function<Tensor()>& f,
                         std::vector<Tensor> params, double h = 1e-5);

}  // namespace vsgg
