#pragma once

#include "kdseq/ctc.hpp"
#include "kdseq/tensor.hpp"

namespace kdseq {

enum class Strategy {
  frame_jlf1,
  frame_mtl,
  frame_jlf3,
  seq_klctc,
  seq_cosctc,
  baseline_ce,
  baseline_ctc,
};

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);
bool strategy_needs_teacher(Strategy s);

struct DistillConfig {
  double temperature = 1.0;
  double alpha = 0.5;       // weight on the distillation term in frame-JLF1
  double balance_coef = 1.0;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  Strategy strategy = Strategy::baseline_ce;

  void validate() const;
};

// Scalar loss nodes per term. Terms not used by a strategy stay undefined.
// The trainer fills the grad norms by running a separate backward pass per
// term at logging steps.
struct LossBreakdown {
  Tensor total;
  Tensor kl, ce, ctc, cos;
  double grad_norm_kl = 0.0, grad_norm_ce = 0.0, grad_norm_ctc = 0.0, grad_norm_cos = 0.0;
  bool has_grad_norms = false;
  size_t cosine_zero_rows = 0;  // frames where a zero-norm logit row forced cosine to 0
};

// One-hot rows over {blank} + phonemes from per-frame label ids.
Mat one_hot(const std::vector<int>& frame_labels, size_t classes);

// Row-wise exp(z/T) / sum, max-subtracted. T <= 0 is a config_error.
Tensor tempered_softmax(const Tensor& logits, double temperature);

// Mean over frames of -log q[target class]; probabilities are clamped at
// 1e-12 before the log. target rows must be one-hot.
Tensor cross_entropy(const Mat& target, const Tensor& dist);

// Mean over frames of sum_i p_i log(p_i / q_i), 0 log 0 = 0, q clamped at
// 1e-12. p is the reference (teacher) side and must not require grad.
Tensor kl_divergence(const Tensor& p, const Tensor& q);

// alpha * KL(P_T, Q_T) * T^2 + (1 - alpha) * CE(Y, Q_1). Teacher logits are
// constants; gradients reach only the student side.
LossBreakdown jlf1(const Tensor& teacher_logits, const Tensor& student_logits, const Mat& y_onehot,
                   double temperature, double alpha);

// exp(-2 rho1) * kl + exp(-2 rho2) * ce + rho1 + rho2, with sigma = exp(rho).
// Equivalent to KL/sigma1^2 + CE/sigma2^2 + log sigma1 + log sigma2.
Tensor mtl_loss(const Tensor& kl, const Tensor& ce, const Tensor& rho1, const Tensor& rho2);

// a = sigma2^2 / sigma1^2, exact; callers round for reporting.
double balance_coefficient(double sigma1, double sigma2);

// Reporting convention: one significant figure (10.52 -> 10, 2.99 -> 3).
// Positive inputs never round to zero, so the result stays usable as a
// retraining weight.
double round_balance(double a);

// (a * KL(P_1, Q_1) + CE(Y, Q_1)) / 2, both distributions at temperature 1.
LossBreakdown jlf3(const Tensor& teacher_logits, const Tensor& student_logits, const Mat& y_onehot,
                   double a);

// (1 - cos(S_s, S_t) + CTC(y, log softmax S_s)) / 2; cosine is the mean of
// per-frame cosines between logit rows.
LossBreakdown sequence_kd_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                               const LabelSequence& y);

// (KL(P_1, Q_1) + CTC(y, log softmax S_s)) / 2.
LossBreakdown kl_ctc_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                          const LabelSequence& y);

}  // namespace kdseq
