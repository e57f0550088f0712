#include "vsgg/gradcheck.hpp"

#include <cmath>

#include "vsgg/errors.hpp"

namespace vsgg {

double finite_diff_check(const std::function<Tensor()>& f,
                         std::vector<Tensor> params, double h) {
  Tensor loss = f();
  if (loss.size() != 1) throw ContractError("finite_diff_check: loss not scalar");
  {
    // Two evaluations must agree exactly; otherwise the closure carries
    // unfrozen randomness and the check is meaningless.
    Tensor again = f();
    if (again.value() != loss.value())
      throw ContractError("finite_diff_check: f is not deterministic");
  }
  for (auto& p : params) p.zero_grad();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.push_back(p.has_grad()
                           ? p.grad()
                           : std::vector<double>(p.values().size(), 0.0));
  }

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].values();
    for (size_t j = 0; j < vals.size(); ++j) {
      const double keep = vals[j];
      vals[j] = keep + h;
      const double up = f().value();
      vals[j] = keep - h;
      const double down = f().value();
      vals[j] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[pi][j];
      const double rel =
          std::abs(an - fd) / (std::abs(an) + std::abs(fd) + 1e-12);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace vsgg
