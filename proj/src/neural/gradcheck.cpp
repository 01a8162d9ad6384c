#include "pathoscope/neural/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pathoscope::nn {
namespace {

using C = NetworkConfig;

// Finite differences are evaluated in difference form: each probe propagates
// f(theta + delta) - f(theta) forward from the perturbed layer instead of
// recomputing f(theta + delta) and subtracting. In exact arithmetic this is the
// same central difference; in floating point it avoids cancelling two nearly
// equal loss values, whose rounding would otherwise swamp gradients near the
// 1e-8 relative-error floor.

// Change of -log softmax(logits)[label] when the logit margin moves by dm,
// for two classes: softplus(m + dm) - softplus(m) = log1p(sigmoid(m) * expm1(dm)).
double loss_change(const std::vector<double>& logits, double d0, double d1, std::size_t label) {
  const double m = label == 0 ? logits[1] - logits[0] : logits[0] - logits[1];
  const double dm = label == 0 ? d1 - d0 : d0 - d1;
  const double sig = m >= 0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m));
  return std::log1p(sig * std::expm1(dm));
}

// ReLU change for a unit at pre-activation z moved by dz. Returns false when
// the move crosses the kink.
bool relu_change(double z, double dz, double& da) {
  const bool before = z > 0.0, after = z + dz > 0.0;
  if (before != after) return false;
  da = before ? dz : 0.0;
  return true;
}

class Checker {
 public:
  Checker(const Network<double>& net, std::span<const Example<double>> batch, double eps)
      : p_(net.parameters()), cfg_(net.config()), batch_(batch), eps_(eps), base_(batch.size()) {
    for (std::size_t s = 0; s < batch.size(); ++s) net.forward(batch[s].input.data(), base_[s]);
    // Column-major copy of the dense weights so sparse changes are contiguous.
    const std::size_t n = cfg_.flatten_size();
    dense_t_.resize(n * C::kHiddenUnits);
    for (std::size_t i = 0; i < C::kHiddenUnits; ++i)
      for (std::size_t j = 0; j < n; ++j) dense_t_[j * C::kHiddenUnits + i] = p_.dense_w[i * n + j];
  }

  // Numeric derivative, or NaN when a probe crosses a ReLU or pooling switch.
  double numeric(std::size_t tensor, std::size_t element) {
    double total = 0.0;
    for (std::size_t s = 0; s < batch_.size(); ++s) {
      double up = 0.0, down = 0.0;
      if (!probe(s, tensor, element, +eps_, up) || !probe(s, tensor, element, -eps_, down)) return std::nan("");
      total += up - down;
    }
    return total / (2.0 * eps_ * static_cast<double>(batch_.size()));
  }

 private:
  bool probe(std::size_t s, std::size_t tensor, std::size_t e, double delta, double& dloss) {
    const auto& b = base_[s];
    const std::size_t label = batch_[s].label;
    const std::size_t k1 = C::kConv1Size, k2 = C::kConv2Size;
    switch (tensor) {
      case 0: return from_conv1(s, e / (C::kChannels * k1 * k1), e, delta, dloss);
      case 1: return from_conv1(s, e, std::size_t(-1), delta, dloss);
      case 2: return from_conv2(s, e / (C::kConv1Filters * k2 * k2), e, delta, dloss);
      case 3: return from_conv2(s, e, std::size_t(-1), delta, dloss);
      case 4: {
        const std::size_t n = cfg_.flatten_size();
        return from_hidden(s, e / n, delta * b.a2[e % n], dloss);
      }
      case 5: return from_hidden(s, e, delta, dloss);
      case 6: {
        const std::size_t k = e / C::kHiddenUnits, i = e % C::kHiddenUnits;
        const double d = delta * b.a3[i];
        dloss = loss_change(b.logits, k == 0 ? d : 0.0, k == 1 ? d : 0.0, label);
        return true;
      }
      default:
        dloss = loss_change(b.logits, e == 0 ? delta : 0.0, e == 1 ? delta : 0.0, label);
        return true;
    }
  }

  // Hidden unit i's pre-activation moves by dz.
  bool from_hidden(std::size_t s, std::size_t i, double dz, double& dloss) {
    const auto& b = base_[s];
    double da = 0.0;
    if (!relu_change(b.z3[i], dz, da)) return false;
    dloss = loss_change(b.logits, p_.out_w[i] * da, p_.out_w[C::kHiddenUnits + i] * da, batch_[s].label);
    return true;
  }

  // A change in conv2 output flows through the dense and output layers.
  bool from_conv2_output(std::size_t s, const std::vector<double>& dz2, double& dloss) {
    const auto& b = base_[s];
    std::vector<double> da2(dz2.size());
    for (std::size_t j = 0; j < dz2.size(); ++j) {
      if (!relu_change(b.z2[j], dz2[j], da2[j])) return false;
    }
    std::vector<double> dz3(C::kHiddenUnits, 0.0);
    for (std::size_t j = 0; j < da2.size(); ++j) {
      if (da2[j] == 0.0) continue;
      const double* w = dense_t_.data() + j * C::kHiddenUnits;
      for (std::size_t i = 0; i < C::kHiddenUnits; ++i) dz3[i] += w[i] * da2[j];
    }
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < C::kHiddenUnits; ++i) {
      double da = 0.0;
      if (!relu_change(b.z3[i], dz3[i], da)) return false;
      d0 += p_.out_w[i] * da;
      d1 += p_.out_w[C::kHiddenUnits + i] * da;
    }
    dloss = loss_change(b.logits, d0, d1, batch_[s].label);
    return true;
  }

  // Filter f of conv2 moves: weight element `e` (or its bias when e == -1).
  bool from_conv2(std::size_t s, std::size_t f, std::size_t e, double delta, double& dloss) {
    const auto& b = base_[s];
    const std::size_t hp = cfg_.pool_out(), h2 = cfg_.conv2_out(), k = C::kConv2Size;
    std::vector<double> dz2(cfg_.flatten_size(), 0.0);
    double* out = dz2.data() + f * h2 * h2;
    if (e == std::size_t(-1)) {
      for (std::size_t j = 0; j < h2 * h2; ++j) out[j] = delta;
    } else {
      const std::size_t c = (e / (k * k)) % C::kConv1Filters, a = (e / k) % k, bb = e % k;
      const double* src = b.pooled.data() + c * hp * hp;
      for (std::size_t i = 0; i < h2; ++i)
        for (std::size_t j = 0; j < h2; ++j) out[i * h2 + j] = delta * src[(i + a) * hp + j + bb];
    }
    return from_conv2_output(s, dz2, dloss);
  }

  // Filter f of conv1 moves: weight element `e` (or its bias when e == -1).
  bool from_conv1(std::size_t s, std::size_t f, std::size_t e, double delta, double& dloss) {
    const auto& b = base_[s];
    const std::size_t p = cfg_.patch_size, h1 = cfg_.conv1_out(), hp = cfg_.pool_out(), k = C::kConv1Size;
    const double* x = batch_[s].input.raw();
    std::vector<double> da1(h1 * h1);
    for (std::size_t i = 0; i < h1; ++i) {
      for (std::size_t j = 0; j < h1; ++j) {
        double dz = delta;
        if (e != std::size_t(-1)) {
          const std::size_t c = (e / (k * k)) % C::kChannels, a = (e / k) % k, bb = e % k;
          dz = delta * x[(c * p + i + a) * p + j + bb];
        }
        if (!relu_change(b.z1[(f * h1 + i) * h1 + j], dz, da1[i * h1 + j])) return false;
      }
    }
    // Pool channel f: the winning position must not change.
    std::vector<double> dpooled(C::kConv1Filters * hp * hp, 0.0);
    for (std::size_t i = 0; i < hp; ++i) {
      for (std::size_t j = 0; j < hp; ++j) {
        std::size_t best = 0;
        double best_value = 0.0;
        bool first = true;
        for (std::size_t a = 0; a < C::kPoolFactor; ++a) {
          for (std::size_t bb = 0; bb < C::kPoolFactor; ++bb) {
            const std::size_t local = (2 * i + a) * h1 + 2 * j + bb;
            const double v = b.a1[f * h1 * h1 + local] + da1[local];
            if (first || v > best_value) {
              best_value = v;
              best = f * h1 * h1 + local;
              first = false;
            }
          }
        }
        const std::size_t o = (f * hp + i) * hp + j;
        if (best != b.argmax[o]) return false;
        dpooled[o] = da1[best - f * h1 * h1];
      }
    }
    std::vector<double> dz2(cfg_.flatten_size());
    const std::vector<double> zero_bias(C::kConv2Filters, 0.0);
    kernels::conv2d_forward(dpooled.data(), C::kConv1Filters, hp, hp, p_.conv2_w.raw(), C::kConv2Filters,
                            C::kConv2Size, zero_bias.data(), dz2.data());
    return from_conv2_output(s, dz2, dloss);
  }

  const Parameters<double>& p_;
  NetworkConfig cfg_;
  std::span<const Example<double>> batch_;
  double eps_;
  std::vector<Trace<double>> base_;
  std::vector<double> dense_t_;
};

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

Parameters<double> batch_gradient(const Network<double>& net, std::span<const Example<double>> batch) {
  auto grads = Parameters<double>::zeros(net.config());
  Trace<double> t;
  for (const auto& ex : batch) net.accumulate_gradient(ex.input.data(), ex.label, grads, t);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (auto* g : grads.tensors()) {
    for (auto& v : g->data()) v *= scale;
  }
  return grads;
}

GradCheckReport gradient_check(const Network<double>& net, std::span<const Example<double>> batch, double epsilon,
                               const AnalyticGradient& analytic) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "gradient_check needs a non-empty batch");
  const Parameters<double> grads = analytic ? analytic(net, batch) : batch_gradient(net, batch);
  Checker checker(net, batch, epsilon);

  GradCheckReport report;
  report.per_layer_errors.assign(4, 0.0);
  std::size_t flat_offset = 0;
  const auto tensors = grads.tensors();
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    const auto& g = *tensors[ti];
    for (std::size_t e = 0; e < g.size(); ++e) {
      const double n = checker.numeric(ti, e);
      if (std::isnan(n)) {
        ++report.skipped_at_kinks;
        continue;
      }
      const double err = relative_error(g[e], n);
      ++report.checked;
      auto& layer_err = report.per_layer_errors[ti / 2];
      layer_err = std::max(layer_err, err);
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter_index = flat_offset + e;
      }
    }
    flat_offset += g.size();
  }
  return report;
}

}  // namespace pathoscope::nn
