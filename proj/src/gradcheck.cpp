#include "curec/gradcheck.hpp"

#include <cmath>
#include <sstream>

#include "curec/common.hpp"

namespace curec {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "pass" : "FAIL") << " (max rel err " << max_rel_err << " over "
     << coords_checked << " coords";
  if (!failures.empty()) {
    os << "; first failure input " << failures[0].input << " coord " << failures[0].coord
       << " analytic " << failures[0].analytic << " numeric " << failures[0].numeric;
  }
  os << ")";
  return os.str();
}

GradCheckReport check_gradients(const std::function<Tensor()>& f,
                                std::vector<Tensor> inputs, double step,
                                double tolerance) {
  if (step <= 0.0) throw NumericError("check_gradients: step must be positive");

  // analytic pass
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    for (auto& in : inputs) {
      in.set_requires_grad(true);
      in.zero_grad();
    }
    Tensor loss = f();
    if (!std::isfinite(loss.item()))
      throw NumericError("check_gradients: non-finite loss " + std::to_string(loss.item()));
    tape.backward(loss);
    for (auto& in : inputs) analytic.push_back(in.grad());
  }

  auto eval = [&]() {
    Tensor loss = f();  // no tape active: values only
    const double v = loss.item();
    if (!std::isfinite(v)) throw NumericError("check_gradients: non-finite loss at perturbed point");
    return v;
  };

  GradCheckReport report;
  report.passed = true;
  for (size_t which = 0; which < inputs.size(); ++which) {
    auto& x = inputs[which].data();
    for (size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      const double h = step * std::max(1.0, std::abs(saved));
      x[i] = saved + h;
      const double f_plus = eval();
      x[i] = saved - h;
      const double f_minus = eval();
      x[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[which][i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1.0);
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.coords_checked;
      if (rel >= tolerance)
        report.failures.push_back({which, static_cast<int64_t>(i), a, numeric, rel});
    }
  }
  report.passed = report.failures.empty();
  return report;
}

}  // namespace curec
