#include "batchrl/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace batchrl {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  // ln(exp(y) - 1), stable for small y.
  return y + std::log(-std::expm1(-y));
}

GaussianHead make_head(std::span<const double> raw_output) {
  require(raw_output.size() % 2 == 0, "make_head: raw output length must be even");
  const int dim = static_cast<int>(raw_output.size()) / 2;
  GaussianHead head;
  head.mean.assign(raw_output.begin(), raw_output.begin() + dim);
  head.std.resize(dim);
  for (int d = 0; d < dim; ++d)
    head.std[d] = std::max(softplus(raw_output[dim + d]), kMinStd);
  return head;
}

std::vector<double> sample_reparam(const GaussianHead& head,
                                   std::span<const double> noise) {
  require(noise.size() == head.mean.size(), "sample_reparam: noise length mismatch");
  std::vector<double> action(head.dim());
  for (int d = 0; d < head.dim(); ++d)
    action[d] = head.mean[d] + head.std[d] * noise[d];
  return action;
}

double log_prob(const GaussianHead& head, std::span<const double> action) {
  require(action.size() == head.mean.size(), "log_prob: action length mismatch");
  double lp = 0.0;
  for (int d = 0; d < head.dim(); ++d) {
    const double z = (action[d] - head.mean[d]) / head.std[d];
    lp += -kHalfLog2Pi - std::log(head.std[d]) - 0.5 * z * z;
  }
  return lp;
}

double kl(const GaussianHead& p, const GaussianHead& q) {
  require(p.mean.size() == q.mean.size(), "kl: dimension mismatch");
  double acc = 0.0;
  for (int d = 0; d < p.dim(); ++d) {
    const double dm = p.mean[d] - q.mean[d];
    const double qs2 = q.std[d] * q.std[d];
    acc += std::log(q.std[d] / p.std[d]) +
           (p.std[d] * p.std[d] + dm * dm) / (2.0 * qs2) - 0.5;
  }
  return acc;
}

double kl_mean_part(const GaussianHead& p, const GaussianHead& q) {
  require(p.mean.size() == q.mean.size(), "kl_mean_part: dimension mismatch");
  double acc = 0.0;
  for (int d = 0; d < p.dim(); ++d) {
    const double dm = p.mean[d] - q.mean[d];
    acc += dm * dm / (2.0 * q.std[d] * q.std[d]);
  }
  return acc;
}

double kl_sigma_part(const GaussianHead& p, const GaussianHead& q) {
  require(p.mean.size() == q.mean.size(), "kl_sigma_part: dimension mismatch");
  double acc = 0.0;
  for (int d = 0; d < p.dim(); ++d) {
    const double r2 = (p.std[d] * p.std[d]) / (q.std[d] * q.std[d]);
    acc += std::log(q.std[d] / p.std[d]) + 0.5 * r2 - 0.5;
  }
  return acc;
}

HeadGrad log_prob_grad(const GaussianHead& head, std::span<const double> action) {
  require(action.size() == head.mean.size(), "log_prob_grad: action length mismatch");
  HeadGrad g;
  g.d_mean.resize(head.dim());
  g.d_std.resize(head.dim());
  for (int d = 0; d < head.dim(); ++d) {
    const double s = head.std[d];
    const double diff = action[d] - head.mean[d];
    g.d_mean[d] = diff / (s * s);
    g.d_std[d] = (diff * diff / (s * s) - 1.0) / s;
  }
  return g;
}

HeadGrad kl_grad_p(const GaussianHead& p, const GaussianHead& q) {
  HeadGrad g;
  g.d_mean.resize(p.dim());
  g.d_std.resize(p.dim());
  for (int d = 0; d < p.dim(); ++d) {
    const double qs2 = q.std[d] * q.std[d];
    g.d_mean[d] = (p.mean[d] - q.mean[d]) / qs2;
    g.d_std[d] = -1.0 / p.std[d] + p.std[d] / qs2;
  }
  return g;
}

HeadGrad kl_grad_q(const GaussianHead& p, const GaussianHead& q) {
  HeadGrad g;
  g.d_mean.resize(p.dim());
  g.d_std.resize(p.dim());
  for (int d = 0; d < p.dim(); ++d) {
    const double dm = p.mean[d] - q.mean[d];
    const double qs = q.std[d];
    g.d_mean[d] = -dm / (qs * qs);
    g.d_std[d] = 1.0 / qs - (p.std[d] * p.std[d] + dm * dm) / (qs * qs * qs);
  }
  return g;
}

HeadGrad kl_mean_part_grad_q(const GaussianHead& p, const GaussianHead& q) {
  HeadGrad g;
  g.d_mean.resize(p.dim());
  g.d_std.resize(p.dim());
  for (int d = 0; d < p.dim(); ++d) {
    const double dm = p.mean[d] - q.mean[d];
    const double qs = q.std[d];
    g.d_mean[d] = -dm / (qs * qs);
    g.d_std[d] = -dm * dm / (qs * qs * qs);
  }
  return g;
}

HeadGrad kl_sigma_part_grad_q(const GaussianHead& p, const GaussianHead& q) {
  HeadGrad g;
  g.d_mean.assign(p.dim(), 0.0);
  g.d_std.resize(p.dim());
  for (int d = 0; d < p.dim(); ++d) {
    const double qs = q.std[d];
    g.d_std[d] = 1.0 / qs - (p.std[d] * p.std[d]) / (qs * qs * qs);
  }
  return g;
}

void head_grad_to_raw(std::span<const double> raw_output, const HeadGrad& grad,
                      std::span<double> raw_grad) {
  const int dim = static_cast<int>(raw_output.size()) / 2;
  require(static_cast<int>(grad.d_mean.size()) == dim &&
              raw_grad.size() == raw_output.size(),
          "head_grad_to_raw: size mismatch");
  for (int d = 0; d < dim; ++d) {
    raw_grad[d] += grad.d_mean[d];
    const double h = raw_output[dim + d];
    if (softplus(h) > kMinStd) raw_grad[dim + d] += grad.d_std[d] * sigmoid(h);
  }
}

}  // namespace batchrl
