#include "biasly/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "biasly/error.hpp"

namespace biasly {

GradCheckReport grad_check_params(const std::function<Tensor()>& loss,
                                  std::vector<Tensor> inputs, double h, double tol,
                                  double floor) {
  for (Tensor& in : inputs) {
    if (!in.requires_grad() || !in.is_leaf()) {
      throw InvalidArgument("grad_check: inputs must be leaves with requires_grad");
    }
    in.zero_grad();
  }
  Tensor out = loss();
  if (out.size() != 1) {
    throw ShapeError("grad_check: function is not scalar-valued, shape " +
                     shape_string(out.shape()));
  }
  out.backward();

  GradCheckReport report;
  std::size_t flat = 0;
  for (Tensor& in : inputs) {
    const std::vector<double> analytic = in.grad();
    auto values = in.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i, ++flat) {
      const double saved = values[i];
      values[i] = saved + h;
      const double plus = loss().item();
      values[i] = saved - h;
      const double minus = loss().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > report.max_rel_error || report.coordinates == 0) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel >= report.max_rel_error) report.worst_index = flat;
      }
      ++report.coordinates;
    }
    in.zero_grad();
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h, double tol) {
  Tensor probe(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  return grad_check_params([&] { return f(probe); }, {probe}, h, tol);
}

}  // namespace biasly
