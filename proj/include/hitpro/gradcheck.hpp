#pragma once

#include <random>
#include <string>
#include <vector>

#include "hitpro/encoder.hpp"

namespace hitpro {

// Central finite-difference gradient of a scalar objective over every encoder
// parameter. Parameters are perturbed in double precision.
template <typename Objective>
EncoderParams numeric_gradient(const EncoderParams& params, Objective&& objective, double step = 1e-4) {
  EncoderParams probe = params;
  EncoderParams grad = params.zeros_like();
  std::vector<Mat*> probe_tensors, grad_tensors;
  probe.for_each([&](const std::string&, Mat& m) { probe_tensors.push_back(&m); });
  grad.for_each([&](const std::string&, Mat& m) { grad_tensors.push_back(&m); });
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    Mat& w = *probe_tensors[t];
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      w.data()[i] = orig + step;
      const double up = objective(static_cast<const EncoderParams&>(probe));
      w.data()[i] = orig - step;
      const double down = objective(static_cast<const EncoderParams&>(probe));
      w.data()[i] = orig;
      grad_tensors[t]->data()[i] = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

// ||a - b|| / max(||a||, ||b||, 1e-6). The floor keeps gradients that are
// exactly zero on an instance from turning round-off into a relative error of
// 1: the AFM hidden bias gets none when every frame shares one ReLU pattern,
// because the frame-softmax Jacobian rows sum to zero.
inline double relative_error(const Mat& analytic, const Mat& numeric) {
  const double denom = std::max({analytic.norm(), numeric.norm(), 1e-6});
  return (analytic - numeric).norm() / denom;
}

struct TensorGradCheck {
  std::string name;
  double rel_error = 0.0;
  double grad_norm = 0.0;
};

struct GradCheckReport {
  EncoderShape shape;
  std::vector<TensorGradCheck> tensors;
  double max_rel_error = 0.0;
};

inline GradCheckReport compare_gradients(const EncoderParams& analytic, const EncoderParams& numeric) {
  GradCheckReport r;
  r.shape = analytic.shape;
  std::vector<const Mat*> num;
  numeric.for_each([&](const std::string&, const Mat& m) { num.push_back(&m); });
  std::size_t i = 0;
  analytic.for_each([&](const std::string& name, const Mat& m) {
    const double e = relative_error(m, *num[i++]);
    r.tensors.push_back({name, e, m.norm()});
    r.max_rel_error = std::max(r.max_rel_error, e);
  });
  return r;
}

// Random parameters with every tensor (including position vectors, norm gains
// and biases) moved away from its structured initial value.
inline EncoderParams random_encoder_params(const EncoderShape& shape, std::uint64_t seed) {
  EncoderParams p = encoder_init(shape, seed);
  std::mt19937_64 rng(mix_seed(seed, 0x9AD));
  std::normal_distribution<double> n(0.0, 0.3);
  p.for_each([&](const std::string&, Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += n(rng);
  });
  return p;
}

// Checks encode_backward against central differences of g . encode(x) on a
// random instance.
inline GradCheckReport encoder_gradcheck(const EncoderShape& shape, std::uint64_t seed, double step = 1e-4) {
  const EncoderParams params = random_encoder_params(shape, seed);
  std::mt19937_64 rng(mix_seed(seed, 0xF00D));
  std::normal_distribution<double> n(0.0, 1.0);
  Mat x(shape.seq_len, shape.d_in);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  Vec g(shape.d);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = n(rng);

  const Encoding enc = encode(params, x);
  const EncoderParams analytic = encode_backward(params, enc.cache, g);
  const EncoderParams numeric =
      numeric_gradient(params, [&](const EncoderParams& p) { return g.dot(encode(p, x).embedding); }, step);
  return compare_gradients(analytic, numeric);
}

}  // namespace hitpro
