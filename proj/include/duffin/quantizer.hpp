#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "duffin/autograd.hpp"

namespace duffin {

// Uniform codeword quantizer. The range is global over the codeword
// distribution observed after pre-training; reconstruction uses level
// midpoints.
struct QuantizerCalibration {
  float qmin = 0.0f;
  float qmax = 0.0f;
  int bits = 0;

  int levels() const { return 1 << bits; }
  float width() const { return (qmax - qmin) / static_cast<float>(levels()); }

  void validate() const {
    if (bits < 1 || bits > 8) throw config_error("quantizer: bits must be in 1..8");
    if (!(qmin < qmax)) throw config_error("quantizer: empty range (qmin >= qmax)");
  }

  int quantize(float x) const {
    const float w = width();
    const float clipped = std::clamp(x, qmin, qmax);
    const int idx = static_cast<int>(std::floor((clipped - qmin) / w));
    return std::clamp(idx, 0, levels() - 1);
  }

  float dequantize(int index) const {
    return qmin + (static_cast<float>(index) + 0.5f) * width();
  }

  float roundtrip(float x) const { return dequantize(quantize(x)); }
};

inline QuantizerCalibration calibrate(const std::vector<float>& sample, int bits) {
  if (bits < 1 || bits > 8) throw config_error("quantizer: bits must be in 1..8");
  if (sample.empty()) throw config_error("quantizer: empty calibration sample");
  const auto [lo, hi] = std::minmax_element(sample.begin(), sample.end());
  QuantizerCalibration cal{*lo, *hi, bits};
  if (!(cal.qmin < cal.qmax)) throw config_error("quantizer: degenerate calibration range");
  return cal;
}

inline std::vector<int> quantize(const std::vector<float>& values,
                                 const QuantizerCalibration& cal) {
  cal.validate();
  std::vector<int> out(values.size());
  for (size_t i = 0; i < values.size(); ++i) out[i] = cal.quantize(values[i]);
  return out;
}

inline std::vector<float> dequantize(const std::vector<int>& indices,
                                     const QuantizerCalibration& cal) {
  cal.validate();
  std::vector<float> out(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) out[i] = cal.dequantize(indices[i]);
  return out;
}

// Straight-through gate: quantize-dequantize on the forward pass, unit
// gradient on the backward pass (also across the clipped region).
template <typename T>
Var<T> ste_gate(const Var<T>& x, const QuantizerCalibration& cal) {
  cal.validate();
  Tensor<T> y(x.shape());
  for (size_t i = 0; i < y.numel(); ++i)
    y[i] = static_cast<T>(cal.roundtrip(static_cast<float>(x.value()[i])));
  auto xn = x.ptr();
  Var<T> out(std::move(y));
  out.node().parents = {xn};
  out.node().requires_grad = xn->requires_grad;
  if (out.node().requires_grad)
    out.node().backward_fn = [xn](Node<T>& self) {
      for (size_t i = 0; i < self.grad.numel(); ++i) xn->grad[i] += self.grad[i];
    };
  return out;
}

}  // namespace duffin
