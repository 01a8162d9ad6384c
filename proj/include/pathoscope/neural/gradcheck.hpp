#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "pathoscope/neural/network.hpp"

namespace pathoscope::nn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  /// Flat index into the concatenated parameter order of kParameterNames.
  std::size_t worst_parameter_index = 0;
  /// Max relative error per layer: conv1, conv2, dense, output.
  std::vector<double> per_layer_errors;
  std::size_t checked = 0;
  /// Parameters whose +/- epsilon probes landed on different sides of a ReLU
  /// or pooling switch. The loss is not differentiable there, so they are not
  /// compared.
  std::size_t skipped_at_kinks = 0;
};

/// Mean-loss gradient over a batch, accumulated into a zeroed Parameters.
using AnalyticGradient =
    std::function<Parameters<double>(const Network<double>&, std::span<const Example<double>>)>;

Parameters<double> batch_gradient(const Network<double>& net, std::span<const Example<double>> batch);

/// Compares the analytic gradient of the mean batch loss against central
/// differences for every parameter. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8).
///
/// Probing a parameter re-evaluates only the part of the network it feeds,
/// which keeps the full check over ~10^6 dense weights affordable.
GradCheckReport gradient_check(const Network<double>& net, std::span<const Example<double>> batch,
                               double epsilon = 1e-5, const AnalyticGradient& analytic = {});

double relative_error(double analytic, double numeric);

}  // namespace pathoscope::nn
