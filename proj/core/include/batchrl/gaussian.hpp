#pragma once

#include <span>
#include <vector>

namespace batchrl {

// Variance floor 0.01, i.e. std >= 0.1, applied when a head is built.
inline constexpr double kMinStd = 0.1;

// Diagonal Gaussian action distribution.
struct GaussianHead {
  std::vector<double> mean;
  std::vector<double> std;

  int dim() const { return static_cast<int>(mean.size()); }
};

double softplus(double x);
double softplus_inverse(double y);

// raw_output packs [mean..., pre-std h...]; std = max(softplus(h), kMinStd).
GaussianHead make_head(std::span<const double> raw_output);

// mean + std * noise; differentiable in (mean, std) by construction.
std::vector<double> sample_reparam(const GaussianHead& head,
                                   std::span<const double> noise);

double log_prob(const GaussianHead& head, std::span<const double> action);

// KL(p || q) for diagonal Gaussians, in closed form, plus its split into the
// mean-difference term and the variance terms (used by the decoupled trust
// region).
double kl(const GaussianHead& p, const GaussianHead& q);
double kl_mean_part(const GaussianHead& p, const GaussianHead& q);
double kl_sigma_part(const GaussianHead& p, const GaussianHead& q);

struct HeadGrad {
  std::vector<double> d_mean;
  std::vector<double> d_std;
};

HeadGrad log_prob_grad(const GaussianHead& head, std::span<const double> action);
HeadGrad kl_grad_p(const GaussianHead& p, const GaussianHead& q);
HeadGrad kl_grad_q(const GaussianHead& p, const GaussianHead& q);
HeadGrad kl_mean_part_grad_q(const GaussianHead& p, const GaussianHead& q);
HeadGrad kl_sigma_part_grad_q(const GaussianHead& p, const GaussianHead& q);

// Chains a gradient w.r.t. (mean, std) back to the raw network output that
// produced the head, accumulating into raw_grad. Accounts for the softplus
// and the std clamp (zero slope below the floor).
void head_grad_to_raw(std::span<const double> raw_output, const HeadGrad& grad,
                      std::span<double> raw_grad);

}  // namespace batchrl
