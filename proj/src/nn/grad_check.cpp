#include "armt/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace armt::nn {

namespace {

template <typename Eval>
void compare(std::span<Parameter<double>*> leaves, const Eval& eval, const GradCheckOptions& opt,
             GradCheckResult& result) {
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    Parameter<double>& p = *leaves[t];
    const std::size_t n = p.value.size();
    const std::size_t stride =
        opt.max_entries_per_tensor == 0 || n <= opt.max_entries_per_tensor
            ? 1
            : (n + opt.max_entries_per_tensor - 1) / opt.max_entries_per_tensor;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = p.value[i];
      p.value[i] = saved + opt.step;
      const double plus = eval();
      p.value[i] = saved - opt.step;
      const double minus = eval();
      p.value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * opt.step);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.floor});
      const double err = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.analytic = analytic;
        result.numeric = numeric;
        result.tensor = t;
        result.entry = i;
      }
    }
  }
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& f, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& options) {
  std::deque<Parameter<double>> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    leaves.emplace_back("input" + std::to_string(i), std::move(inputs[i]));
  }
  DetachTape<double> tape;
  auto run = [&](bool with_grad) {
    Graph<double> g(with_grad);
    tape.replay = !with_grad;
    tape.cursor = 0;
    g.set_detach_tape(&tape);
    std::vector<Var<double>> vars;
    for (auto& p : leaves) vars.push_back(g.param(p));
    Var<double> out = f(g, vars);
    if (out.value().size() != 1) throw ConfigError("grad_check: function must return a scalar");
    if (with_grad) g.backward(out);
    return out.value()[0];
  };
  for (auto& p : leaves) p.zero_grad();
  run(true);
  std::vector<Parameter<double>*> ptrs;
  for (auto& p : leaves) ptrs.push_back(&p);
  GradCheckResult result;
  compare(std::span<Parameter<double>*>(ptrs), [&] { return run(false); }, options, result);
  return result;
}

GradCheckResult grad_check_parameters(const std::function<Var<double>(Graph<double>&)>& f,
                                      ParameterStore<double>& params,
                                      const GradCheckOptions& options) {
  DetachTape<double> tape;
  auto run = [&](bool with_grad) {
    Graph<double> g(with_grad);
    tape.replay = !with_grad;
    tape.cursor = 0;
    g.set_detach_tape(&tape);
    Var<double> out = f(g);
    if (out.value().size() != 1) throw ConfigError("grad_check: function must return a scalar");
    if (with_grad) g.backward(out);
    return out.value()[0];
  };
  params.zero_grad();
  run(true);
  std::vector<Parameter<double>*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  GradCheckResult result;
  compare(std::span<Parameter<double>*>(ptrs), [&] { return run(false); }, options, result);
  return result;
}

}  // namespace armt::nn
