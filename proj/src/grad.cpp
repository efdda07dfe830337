#include "nits/grad.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nits/error.hpp"

namespace nits::grad {

namespace {

// Reverse pass through one dual trace given the adjoints of F and dF/dx.
void backprop_point(const pnn::Network& net, std::span<const double> raw_bias,
                    const pnn::Forward& fw, double g_value, double g_dvalue,
                    std::span<double> grad, double scale) {
  const PnnSpec& spec = net.spec();
  const std::size_t final_layer = spec.num_layers() - 1;
  const auto& last = fw.hidden.back();
  const auto& mix = net.mixture();
  const std::size_t k = mix.size();

  // Softmax head.
  std::vector<double> g_mix(k);
  double weighted = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    g_mix[j] = g_value * last.act[j] + g_dvalue * last.dact[j];
    weighted += mix[j] * g_mix[j];
  }
  const std::size_t fo = spec.weight_offset(final_layer);
  for (std::size_t j = 0; j < k; ++j) grad[fo + j] += scale * mix[j] * (g_mix[j] - weighted);

  std::vector<double> g_act(k), g_dact(k);
  for (std::size_t j = 0; j < k; ++j) {
    g_act[j] = g_value * mix[j];
    g_dact[j] = g_dvalue * mix[j];
  }

  std::size_t bias_cursor = raw_bias.size();
  for (std::size_t l = final_layer; l-- > 0;) {
    const std::size_t n_in = spec.fan_in(l);
    const std::size_t n_out = spec.fan_out(l);
    const auto& t = fw.hidden[l];
    const double x_dx = 1.0;
    std::span<const double> a_in = l == 0 ? std::span<const double>(&fw.x, 1)
                                          : std::span<const double>(fw.hidden[l - 1].act);
    std::span<const double> da_in = l == 0 ? std::span<const double>(&x_dx, 1)
                                           : std::span<const double>(fw.hidden[l - 1].dact);
    bias_cursor -= n_out;
    const auto b = raw_bias.subspan(bias_cursor, n_out);

    std::vector<double> g_pre(n_out), g_dpre(n_out), g_scale(n_out);
    for (std::size_t j = 0; j < n_out; ++j) {
      const double s = t.act[j];
      const double sb = t.one_minus[j];
      const double d1 = s * sb;
      const double d2 = d1 * (sb - s);
      g_pre[j] = g_act[j] * d1 + g_dact[j] * d2 * t.dpre[j];
      g_dpre[j] = g_dact[j] * d1;
      g_scale[j] = -g_pre[j] * b[j] / static_cast<double>(n_in);
    }

    const auto& w = net.weights(l);
    const auto& c = net.bias_scale(l);
    const std::size_t wo = spec.weight_offset(l);
    const std::size_t bo = spec.bias_offset(l);
    for (std::size_t j = 0; j < n_out; ++j) grad[bo + j] += scale * (-g_pre[j] * c[j]);
    std::vector<double> g_prev(l == 0 ? 0 : n_in, 0.0), g_dprev(l == 0 ? 0 : n_in, 0.0);
    for (std::size_t i = 0; i < n_in; ++i) {
      const double a = a_in[i];
      const double da = da_in[i];
      const double* row = &w[i * n_out];
      double* out = &grad[wo + i * n_out];
      for (std::size_t j = 0; j < n_out; ++j) {
        const double g_w = g_pre[j] * a + g_dpre[j] * da + g_scale[j];
        const bool saturated =
            row[j] == pnn::kMinPositiveWeight || row[j] == pnn::kMaxPositiveWeight;
        if (!saturated) out[j] += scale * (-row[j] * g_w);
      }
      if (l > 0) {
        double acc = 0.0, dacc = 0.0;
        for (std::size_t j = 0; j < n_out; ++j) {
          acc += row[j] * g_pre[j];
          dacc += row[j] * g_dpre[j];
        }
        g_prev[i] = acc;
        g_dprev[i] = dacc;
      }
    }
    g_act.swap(g_prev);
    g_dact.swap(g_dprev);
  }
}

}  // namespace

GradTape::GradTape(const PnnSpec& spec, std::span<const double> raw, double x)
    : net_(spec, raw) {
  if (!spec.bounds().contains(x)) {
    throw DomainError("x = " + std::to_string(x) + " lies outside the PNN support");
  }
  at_x_ = net_.forward(x);
  at_lo_ = net_.forward(spec.bounds().lo);
  at_hi_ = net_.forward(spec.bounds().hi);
  for (std::size_t l = 0; l + 1 < spec.num_layers(); ++l) {
    const auto b = raw.subspan(spec.bias_offset(l), spec.fan_out(l));
    raw_bias_.insert(raw_bias_.end(), b.begin(), b.end());
  }
  loss_ = -std::log(std::max(at_x_.dvalue, pnn::kLogFloor)) + net_.log_partition();
  if (!std::isfinite(loss_)) {
    throw NumericalError("non-finite loss", static_cast<std::ptrdiff_t>(spec.num_layers() - 1));
  }
}

void GradTape::backward_into(std::span<double> grad, double scale) const {
  const PnnSpec& spec = net_.spec();
  if (grad.size() != spec.param_count()) throw UsageError("gradient buffer has the wrong size");
  const double dfdx = at_x_.dvalue;
  const double g_dvalue = dfdx >= pnn::kLogFloor ? -1.0 / dfdx : 0.0;
  const double z = net_.partition();
  const double g_partition = z >= pnn::kLogFloor ? 1.0 / z : 0.0;
  backprop_point(net_, raw_bias_, at_x_, 0.0, g_dvalue, grad, scale);
  backprop_point(net_, raw_bias_, at_hi_, g_partition, 0.0, grad, scale);
  backprop_point(net_, raw_bias_, at_lo_, -g_partition, 0.0, grad, scale);
}

std::vector<double> GradTape::backward() const {
  const PnnSpec& spec = net_.spec();
  std::vector<double> grad(spec.param_count(), 0.0);
  backward_into(grad);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t begin = spec.weight_offset(l);
    const std::size_t end = l + 1 < spec.num_layers() ? spec.weight_offset(l + 1) : grad.size();
    for (std::size_t k = begin; k < end; ++k) {
      if (!std::isfinite(grad[k])) {
        throw NumericalError("non-finite gradient in PNN layer " + std::to_string(l),
                             static_cast<std::ptrdiff_t>(l));
      }
    }
  }
  return grad;
}

LossGrad loss_and_grad(const PnnSpec& spec, std::span<const double> raw, double x) {
  GradTape tape(spec, raw, x);
  return {tape.loss(), tape.backward()};
}

std::vector<double> chain_to_phi(const WeightModel& model, const WeightModel::Tape& tape,
                                 std::span<const double> grad_theta) {
  std::vector<double> grad_phi(model.param_count(), 0.0);
  model.backward(tape, grad_theta, grad_phi);
  for (double g : grad_phi) {
    if (!std::isfinite(g)) throw NumericalError("non-finite weight-model gradient");
  }
  return grad_phi;
}

}  // namespace nits::grad
