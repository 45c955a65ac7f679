#include <cmath>
#include <numbers>

#include "cgf/graphdata.hpp"

namespace cgf {

namespace {

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

// Keeps u strictly inside (0, 1) where the logistic saturates in double precision.
double open_unit(double u) {
  if (u <= 0.0) return std::nextafter(0.0, 1.0);
  if (u >= 1.0) return std::nextafter(1.0, 0.0);
  return u;
}

}  // namespace

DequantSample dequantize(const Tensor& binary, const DequantConfig& cfg, Rng& rng) {
  DequantSample out;
  out.values = binary;
  if (cfg.mode == DequantMode::kUniform) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (double& v : out.values.data()) {
      double u = 0.0;
      while (u == 0.0) u = unif(rng);
      v += u;
    }
    return out;
  }
  const double std_dev = std::exp(cfg.log_std);
  const double log_norm = -cfg.log_std - 0.5 * std::log(2.0 * std::numbers::pi);
  out.noise.resize(binary.size());
  for (std::size_t i = 0; i < binary.size(); ++i) {
    const double eta = standard_normal(rng);
    const double s = cfg.mean + std_dev * eta;
    out.noise[i] = eta;
    out.values[i] += open_unit(sigmoid(s));
    // log q(u) = log N(s; mean, std) - log sigmoid'(s)
    out.correction += log_norm - 0.5 * eta * eta + softplus(s) + softplus(-s);
  }
  return out;
}

DequantGrad dequantize_backward(const DequantSample& sample, const DequantConfig& cfg,
                                const Tensor& cot_values, double cot_correction) {
  DequantGrad g;
  if (cfg.mode == DequantMode::kUniform) return g;
  const double std_dev = std::exp(cfg.log_std);
  for (std::size_t i = 0; i < sample.noise.size(); ++i) {
    const double eta = sample.noise[i];
    const double s = cfg.mean + std_dev * eta;
    const double sig = sigmoid(s);
    const double ds = cot_values[i] * sig * (1.0 - sig) + cot_correction * (2.0 * sig - 1.0);
    g.d_mean += ds;
    g.d_log_std += ds * std_dev * eta - cot_correction;
  }
  return g;
}

}  // namespace cgf
