#include "mrt/losses.hpp"

namespace mrt {

double pen_ramp_weight(int epoch, const PenRamp& ramp, double base_lambda_p) {
  if (epoch > ramp.ramp_epochs) return base_lambda_p;
  if (ramp.ramp_epochs <= 1) return ramp.peak;
  const double t = static_cast<double>(epoch - 1) / (ramp.ramp_epochs - 1);
  return ramp.start + (ramp.peak - ramp.start) * t;
}

namespace losses {

namespace {
ad::Var one_minus(const ad::Var& p) {
  return ad::sub(ad::Var::leaf(Tensor::full(p.value().shape(), 1.0)), p);
}
}  // namespace

ad::Var rec_loss(const ad::Var& q_hat, const ad::Var& q) {
  check_same_shape(q_hat.value(), q.value(), "rec_loss");
  return ad::sq_diff_sum(q_hat, q);
}
double rec_loss(const Tensor& q_hat, const Tensor& q) {
  return rec_loss(ad::Var::leaf(q_hat), ad::Var::leaf(q)).value()[0];
}

ad::Var cyc_loss(const ad::Var& q_cyc, const ad::Var& q) {
  check_same_shape(q_cyc.value(), q.value(), "cyc_loss");
  return ad::sq_diff_sum(q_cyc, q);
}
double cyc_loss(const Tensor& q_cyc, const Tensor& q) {
  return cyc_loss(ad::Var::leaf(q_cyc), ad::Var::leaf(q)).value()[0];
}

ad::Var adv_loss_generator(const ad::Var& probs) { return ad::sum(ad::log(one_minus(probs))); }
double adv_loss_generator(const Tensor& probs) {
  return adv_loss_generator(ad::Var::leaf(probs)).value()[0];
}

ad::Var adv_loss_generator_nonsat(const ad::Var& probs) {
  return ad::neg(ad::sum(ad::log(probs)));
}

ad::Var adv_loss_discriminator(const ad::Var& real_probs, const ad::Var& fake_probs) {
  return ad::neg(ad::add(ad::sum(ad::log(real_probs)), ad::sum(ad::log(one_minus(fake_probs)))));
}
double adv_loss_discriminator(const Tensor& real_probs, const Tensor& fake_probs) {
  return adv_loss_discriminator(ad::Var::leaf(real_probs), ad::Var::leaf(fake_probs)).value()[0];
}

ad::Var jdm_loss(const ad::Var& positions_a, const ad::Var& positions_b) {
  const Tensor& a = positions_a.value();
  const Tensor& b = positions_b.value();
  if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(0) != b.dim(0))
    throw ShapeMismatch("jdm_loss: positions must be (T,N,3) with equal T and N");
  return ad::sq_diff_sum(jdm_normalized(positions_a), jdm_normalized(positions_b));
}
double jdm_loss(const Tensor& positions_a, const Tensor& positions_b) {
  return jdm_loss(ad::Var::leaf(positions_a), ad::Var::leaf(positions_b)).value()[0];
}

ad::Var sem_loss(const ad::Var& emb_a, const ad::Var& emb_b) {
  check_same_shape(emb_a.value(), emb_b.value(), "sem_loss");
  return ad::sq_diff_sum(emb_a, emb_b);
}
double sem_loss(const Tensor& emb_a, const Tensor& emb_b) {
  return sem_loss(ad::Var::leaf(emb_a), ad::Var::leaf(emb_b)).value()[0];
}

ad::Var pen_loss(const ad::Var& sdf_values) { return ad::sum(ad::relu(ad::neg(sdf_values))); }
double pen_loss(const Tensor& sdf_values) {
  return pen_loss(ad::Var::leaf(sdf_values)).value()[0];
}

ad::Var total_pretrain_loss(const PretrainParts& parts, const LossWeights& w) {
  ad::Var total = ad::scale(parts.rec, w.lambda_r);
  total = ad::add(total, ad::scale(parts.cyc, w.lambda_c));
  total = ad::add(total, ad::scale(parts.adv, w.lambda_a));
  total = ad::add(total, ad::scale(parts.jdm, w.lambda_j));
  return total;
}
double total_pretrain_loss(double rec, double cyc, double adv, double jdm, const LossWeights& w) {
  return w.lambda_r * rec + w.lambda_c * cyc + w.lambda_a * adv + w.lambda_j * jdm;
}

ad::Var total_finetune_loss(const FinetuneParts& parts, const LossWeights& w,
                            double effective_lambda_p) {
  return ad::add(ad::scale(parts.sem, w.lambda_s), ad::scale(parts.pen, effective_lambda_p));
}
double total_finetune_loss(double sem, double pen, const LossWeights& w,
                           double effective_lambda_p) {
  return w.lambda_s * sem + effective_lambda_p * pen;
}

}  // namespace losses
}  // namespace mrt
