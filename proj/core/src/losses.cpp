#include "kdseq/losses.hpp"

#include <cmath>

namespace kdseq {

namespace {

constexpr double kProbFloor = 1e-12;

void check_aligned(const char* op, const Tensor& t, const Tensor& s) {
  if (t.rows() != s.rows() || t.cols() != s.cols())
    throw alignment_error(std::string(op) + ": teacher (" + std::to_string(t.rows()) + "," +
                          std::to_string(t.cols()) + ") vs student (" + std::to_string(s.rows()) +
                          "," + std::to_string(s.cols()) + ")");
}

void check_one_hot(const Mat& target) {
  for (size_t r = 0; r < target.rows; r++) {
    size_t ones = 0;
    for (size_t c = 0; c < target.cols; c++) {
      double v = target(r, c);
      if (v == 1.0)
        ones++;
      else if (v != 0.0)
        throw contract_error("cross_entropy: target row " + std::to_string(r) + " is not one-hot");
    }
    if (ones != 1)
      throw contract_error("cross_entropy: target row " + std::to_string(r) + " is not one-hot");
  }
}

}  // namespace

Strategy strategy_from_string(const std::string& s) {
  if (s == "frame-JLF1") return Strategy::frame_jlf1;
  if (s == "frame-MTL") return Strategy::frame_mtl;
  if (s == "frame-JLF3") return Strategy::frame_jlf3;
  if (s == "seq-KLCTC") return Strategy::seq_klctc;
  if (s == "seq-COSCTC") return Strategy::seq_cosctc;
  if (s == "baseline-CE") return Strategy::baseline_ce;
  if (s == "baseline-CTC") return Strategy::baseline_ctc;
  throw config_error("unknown strategy '" + s +
                     "' (expected frame-JLF1|frame-MTL|frame-JLF3|seq-KLCTC|seq-COSCTC|"
                     "baseline-CE|baseline-CTC)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::frame_jlf1: return "frame-JLF1";
    case Strategy::frame_mtl: return "frame-MTL";
    case Strategy::frame_jlf3: return "frame-JLF3";
    case Strategy::seq_klctc: return "seq-KLCTC";
    case Strategy::seq_cosctc: return "seq-COSCTC";
    case Strategy::baseline_ce: return "baseline-CE";
    case Strategy::baseline_ctc: return "baseline-CTC";
  }
  return "?";
}

bool strategy_needs_teacher(Strategy s) {
  return s != Strategy::baseline_ce && s != Strategy::baseline_ctc;
}

void DistillConfig::validate() const {
  if (temperature <= 0.0) throw config_error("temperature must be > 0");
  if (alpha < 0.0 || alpha > 1.0) throw config_error("alpha must be in [0,1]");
  if (balance_coef <= 0.0) throw config_error("balance coefficient must be > 0");
  if (sigma1 <= 0.0 || sigma2 <= 0.0) throw config_error("sigmas must be > 0");
}

Mat one_hot(const std::vector<int>& frame_labels, size_t classes) {
  Mat m(frame_labels.size(), classes);
  for (size_t r = 0; r < frame_labels.size(); r++) {
    int id = frame_labels[r];
    if (id < 0 || static_cast<size_t>(id) >= classes)
      throw contract_error("one_hot: label " + std::to_string(id) + " outside 0.." +
                           std::to_string(classes - 1));
    m(r, static_cast<size_t>(id)) = 1.0;
  }
  return m;
}

Tensor tempered_softmax(const Tensor& logits, double temperature) {
  if (temperature <= 0.0)
    throw config_error("tempered_softmax: temperature " + format_double(temperature) +
                       " must be > 0");
  return softmax_rows(scale(logits, 1.0 / temperature));
}

Tensor cross_entropy(const Mat& target, const Tensor& dist) {
  if (target.rows != dist.rows() || target.cols != dist.cols())
    throw contract_error("cross_entropy: target (" + std::to_string(target.rows) + "," +
                         std::to_string(target.cols) + ") vs dist (" + std::to_string(dist.rows()) +
                         "," + std::to_string(dist.cols()) + ")");
  check_one_hot(target);
  Tensor tgt = Tensor::from_mat(target);
  Tensor logq = log_t(clamp_min(dist, kProbFloor));
  return scale(sum_all(mul(logq, tgt)), -1.0 / static_cast<double>(target.rows));
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols())
    throw contract_error("kl_divergence: shapes (" + std::to_string(p.rows()) + "," +
                         std::to_string(p.cols()) + ") vs (" + std::to_string(q.rows()) + "," +
                         std::to_string(q.cols()) + ")");
  if (p.requires_grad())
    throw contract_error("kl_divergence: reference distribution must be detached");
  double frames = static_cast<double>(p.rows());
  // Entropy side is a constant; 0 log 0 contributes nothing.
  double p_logp = 0.0;
  for (double v : p.values())
    if (v > 0.0) p_logp += v * std::log(v);
  Tensor cross = scale(sum_all(mul(log_t(clamp_min(q, kProbFloor)), p)), -1.0 / frames);
  return add_const(cross, p_logp / frames);
}

LossBreakdown jlf1(const Tensor& teacher_logits, const Tensor& student_logits, const Mat& y_onehot,
                   double temperature, double alpha) {
  check_aligned("jlf1", teacher_logits, student_logits);
  if (alpha < 0.0 || alpha > 1.0) throw config_error("jlf1: alpha must be in [0,1]");
  Tensor t_const = detach(teacher_logits);
  LossBreakdown out;
  out.kl = kl_divergence(tempered_softmax(t_const, temperature),
                         tempered_softmax(student_logits, temperature));
  out.ce = cross_entropy(y_onehot, tempered_softmax(student_logits, 1.0));
  out.total = add(scale(out.kl, alpha * temperature * temperature), scale(out.ce, 1.0 - alpha));
  return out;
}

Tensor mtl_loss(const Tensor& kl, const Tensor& ce, const Tensor& rho1, const Tensor& rho2) {
  Tensor w1 = exp_t(scale(rho1, -2.0));
  Tensor w2 = exp_t(scale(rho2, -2.0));
  return add(add(mul(w1, kl), mul(w2, ce)), add(rho1, rho2));
}

double balance_coefficient(double sigma1, double sigma2) {
  if (sigma1 <= 0.0)
    throw numeric_domain_error("balance_coefficient: sigma1 " + format_double(sigma1) +
                               " must be > 0");
  return (sigma2 * sigma2) / (sigma1 * sigma1);
}

double round_balance(double a) {
  if (a <= 0.0 || !std::isfinite(a)) throw numeric_domain_error("round_balance: need a finite positive coefficient");
  double mag = std::pow(10.0, std::floor(std::log10(a)));
  return std::round(a / mag) * mag;
}

LossBreakdown jlf3(const Tensor& teacher_logits, const Tensor& student_logits, const Mat& y_onehot,
                   double a) {
  check_aligned("jlf3", teacher_logits, student_logits);
  if (a <= 0.0) throw config_error("jlf3: balance coefficient must be > 0");
  Tensor t_const = detach(teacher_logits);
  LossBreakdown out;
  Tensor q1 = tempered_softmax(student_logits, 1.0);
  out.kl = kl_divergence(tempered_softmax(t_const, 1.0), q1);
  out.ce = cross_entropy(y_onehot, q1);
  out.total = scale(add(scale(out.kl, a), out.ce), 0.5);
  return out;
}

LossBreakdown sequence_kd_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                               const LabelSequence& y) {
  check_aligned("sequence_kd_loss", teacher_logits, student_logits);
  LossBreakdown out;
  out.cos = row_cosine_mean(student_logits, detach(teacher_logits), &out.cosine_zero_rows);
  out.ctc = ctc_loss(log_softmax_rows(student_logits), y);
  // (1 - cos + ctc) / 2
  out.total = scale(add(add_const(scale(out.cos, -1.0), 1.0), out.ctc), 0.5);
  return out;
}

LossBreakdown kl_ctc_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                          const LabelSequence& y) {
  check_aligned("kl_ctc_loss", teacher_logits, student_logits);
  LossBreakdown out;
  out.kl = kl_divergence(tempered_softmax(detach(teacher_logits), 1.0),
                         tempered_softmax(student_logits, 1.0));
  out.ctc = ctc_loss(log_softmax_rows(student_logits), y);
  out.total = scale(add(out.kl, out.ctc), 0.5);
  return out;
}

}  // namespace kdseq
