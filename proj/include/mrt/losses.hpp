#pragma once

#include "mrt/autodiff.hpp"
#include "mrt/skeleton.hpp"
#include "mrt/tensor.hpp"

namespace mrt {

struct LossWeights {
  double lambda_r = 10.0;
  double lambda_c = 1.0;
  double lambda_a = 0.1;
  double lambda_j = 1.0;
  double lambda_p = 1.0;
  double lambda_s = 0.1;
};

/// Interpenetration weight schedule: ramps start -> peak over the first
/// `ramp_epochs` fine-tune epochs, then returns to the configured base.
struct PenRamp {
  double start = 1.0;
  double peak = 10.0;
  int ramp_epochs = 5;
};

/// Effective interpenetration weight for a 1-based epoch index.
double pen_ramp_weight(int epoch, const PenRamp& ramp, double base_lambda_p);

/// Generator-side adversarial convention: `saturating` minimizes
/// sum_t log(1 - p_t), `nonsaturating` maximizes log p_t.
enum class AdvConvention { saturating, nonsaturating };

namespace losses {

/// sum_t |Q_hat_t - Q_t|^2 over all joint channels.
ad::Var rec_loss(const ad::Var& q_hat, const ad::Var& q);
double rec_loss(const Tensor& q_hat, const Tensor& q);

/// Same functional form as rec_loss; the cycle input comes from the
/// A -> B -> A double pass with gradients flowing through both.
ad::Var cyc_loss(const ad::Var& q_cyc, const ad::Var& q);
double cyc_loss(const Tensor& q_cyc, const Tensor& q);

/// sum_t log(1 - p_t).
ad::Var adv_loss_generator(const ad::Var& probs);
double adv_loss_generator(const Tensor& probs);

/// Non-saturating generator alternative: -sum_t log(p_t).
ad::Var adv_loss_generator_nonsat(const ad::Var& probs);

/// Standard binary cross-entropy: -sum log(real) - sum log(1 - fake).
ad::Var adv_loss_discriminator(const ad::Var& real_probs, const ad::Var& fake_probs);
double adv_loss_discriminator(const Tensor& real_probs, const Tensor& fake_probs);

/// sum_t |eta(D_A,t) - eta(D_B,t)|_F^2 over row-normalized distance matrices.
ad::Var jdm_loss(const ad::Var& positions_a, const ad::Var& positions_b);
double jdm_loss(const Tensor& positions_a, const Tensor& positions_b);

/// sum over sampled frames of squared embedding distance.
ad::Var sem_loss(const ad::Var& emb_a, const ad::Var& emb_b);
double sem_loss(const Tensor& emb_a, const Tensor& emb_b);

/// sum_t sum_v ReLU(-phi(v)) over pre-queried limb SDF values (T,L).
ad::Var pen_loss(const ad::Var& sdf_values);
double pen_loss(const Tensor& sdf_values);

struct PretrainParts {
  ad::Var rec, cyc, adv, jdm;
};
ad::Var total_pretrain_loss(const PretrainParts& parts, const LossWeights& w);
double total_pretrain_loss(double rec, double cyc, double adv, double jdm, const LossWeights& w);

struct FinetuneParts {
  ad::Var sem, pen;
};
ad::Var total_finetune_loss(const FinetuneParts& parts, const LossWeights& w,
                            double effective_lambda_p);
double total_finetune_loss(double sem, double pen, const LossWeights& w,
                           double effective_lambda_p);

}  // namespace losses
}  // namespace mrt
