#include "kdseq/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kdseq {

namespace {

double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b <= kLogZero) return a;  // adding exact zero probability
  return a + std::log1p(std::exp(b - a));
}

void check_labels(const LabelSequence& y, size_t classes) {
  if (y.empty()) throw contract_error("ctc: empty label sequence");
  for (int id : y)
    if (id <= kBlank || static_cast<size_t>(id) >= classes)
      throw contract_error("ctc: label id " + std::to_string(id) + " outside 1.." +
                           std::to_string(classes - 1));
}

void check_logprob_rows(const Mat& logp) {
  for (size_t r = 0; r < logp.rows; r++) {
    double m = logp(r, 0);
    for (size_t c = 1; c < logp.cols; c++) m = std::max(m, logp(r, c));
    double s = 0.0;
    for (size_t c = 0; c < logp.cols; c++) s += std::exp(logp(r, c) - m);
    double lse = m + std::log(s);
    if (std::abs(lse) > 1e-6)
      throw contract_error("ctc: row " + std::to_string(r) +
                           " is not a log-distribution (logsumexp = " + format_double(lse) + ")");
  }
}

struct Lattice {
  std::vector<int> ext;          // blank-augmented label: _ y1 _ y2 ... _
  std::vector<double> alpha;     // (T x S) log forward
  std::vector<double> beta;      // (T x S) log backward
  double log_p = kLogZero;
};

// Standard forward-backward over the extended label; alpha and beta both
// include the emission at their own frame.
Lattice run_lattice(const Mat& logp, const LabelSequence& y, bool need_beta) {
  size_t T = logp.rows, S = 2 * y.size() + 1;
  Lattice lat;
  lat.ext.resize(S, kBlank);
  for (size_t i = 0; i < y.size(); i++) lat.ext[2 * i + 1] = y[i];
  const auto& ext = lat.ext;

  lat.alpha.assign(T * S, kLogZero);
  auto a = [&](size_t t, size_t s) -> double& { return lat.alpha[t * S + s]; };
  a(0, 0) = logp(0, ext[0]);
  if (S > 1) a(0, 1) = logp(0, ext[1]);
  for (size_t t = 1; t < T; t++)
    for (size_t s = 0; s < S; s++) {
      double acc = a(t - 1, s);
      if (s >= 1) acc = log_add(acc, a(t - 1, s - 1));
      if (s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]) acc = log_add(acc, a(t - 1, s - 2));
      if (acc <= kLogZero) continue;
      a(t, s) = acc + logp(t, ext[s]);
    }
  lat.log_p = a(T - 1, S - 1);
  if (S > 1) lat.log_p = log_add(lat.log_p, a(T - 1, S - 2));

  if (need_beta) {
    lat.beta.assign(T * S, kLogZero);
    auto b = [&](size_t t, size_t s) -> double& { return lat.beta[t * S + s]; };
    b(T - 1, S - 1) = logp(T - 1, ext[S - 1]);
    if (S > 1) b(T - 1, S - 2) = logp(T - 1, ext[S - 2]);
    for (size_t t = T - 1; t-- > 0;)
      for (size_t s = 0; s < S; s++) {
        double acc = b(t + 1, s);
        if (s + 1 < S) acc = log_add(acc, b(t + 1, s + 1));
        if (s + 2 < S && ext[s + 2] != kBlank && ext[s + 2] != ext[s])
          acc = log_add(acc, b(t + 1, s + 2));
        if (acc <= kLogZero) continue;
        b(t, s) = acc + logp(t, ext[s]);
      }
  }
  return lat;
}

}  // namespace

size_t ctc_min_frames(const LabelSequence& y) {
  size_t n = y.size();
  for (size_t i = 1; i < y.size(); i++)
    if (y[i] == y[i - 1]) n++;
  return n;
}

double ctc_loss_value(const Mat& logp, const LabelSequence& y) {
  check_labels(y, logp.cols);
  check_logprob_rows(logp);
  if (logp.rows < ctc_min_frames(y)) return std::numeric_limits<double>::infinity();
  Lattice lat = run_lattice(logp, y, false);
  if (lat.log_p <= kLogZero) return std::numeric_limits<double>::infinity();
  return -lat.log_p;
}

Tensor ctc_loss(const Tensor& logp, const LabelSequence& y) {
  Mat m = logp.to_mat();
  check_labels(y, m.cols);
  check_logprob_rows(m);
  if (m.rows < ctc_min_frames(y))
    throw infeasible_alignment_error("ctc: " + std::to_string(y.size()) + " labels (min " +
                                     std::to_string(ctc_min_frames(y)) + " frames) cannot align to " +
                                     std::to_string(m.rows) + " frames");
  Lattice lat = run_lattice(m, y, true);
  if (lat.log_p <= kLogZero)
    throw infeasible_alignment_error("ctc: no alignment carries probability mass");

  // dL/dlogp(t,k) = -sum over states s with label k of the alignment
  // posterior exp(alpha + beta - logp(t, label_s)) / P.
  size_t T = m.rows, C = m.cols, S = lat.ext.size();
  std::vector<double> neg_grad(T * C, 0.0);
  for (size_t t = 0; t < T; t++)
    for (size_t s = 0; s < S; s++) {
      double la = lat.alpha[t * S + s], lb = lat.beta[t * S + s];
      if (la <= kLogZero || lb <= kLogZero) continue;
      neg_grad[t * C + lat.ext[s]] += std::exp(la + lb - m(t, lat.ext[s]) - lat.log_p);
    }
  double loss = -lat.log_p;
  return make_op("ctc_nll", 1, 1, {loss}, {logp}, [neg_grad](Node& self) {
    Node* in = self.inputs[0].get();
    if (!in->requires_grad) return;
    in->ensure_grad();
    double g0 = self.grad[0];
    for (size_t i = 0; i < neg_grad.size(); i++) in->grad[i] -= g0 * neg_grad[i];
  });
}

double ctc_loss_bruteforce(const Mat& logp, const LabelSequence& y) {
  if (logp.rows > 8 || logp.cols > 5)
    throw size_guard_error("ctc brute force: " + std::to_string(logp.rows) + " frames x " +
                           std::to_string(logp.cols) + " classes exceeds the 8x5 guard");
  check_labels(y, logp.cols);
  check_logprob_rows(logp);
  size_t T = logp.rows, C = logp.cols;
  double total = 0.0;
  std::vector<int> path(T, 0);
  // Odometer enumeration of all C^T paths.
  while (true) {
    if (collapse_path(path) == y) {
      double lp = 0.0;
      for (size_t t = 0; t < T; t++) lp += logp(t, path[t]);
      total += std::exp(lp);
    }
    size_t t = 0;
    while (t < T && ++path[t] == static_cast<int>(C)) path[t++] = 0;
    if (t == T) break;
  }
  if (total == 0.0) return std::numeric_limits<double>::infinity();
  return -std::log(total);
}

LabelSequence greedy_decode(const Mat& logp) {
  std::vector<int> arg(logp.rows);
  for (size_t r = 0; r < logp.rows; r++) {
    size_t best = 0;
    for (size_t c = 1; c < logp.cols; c++)
      if (logp(r, c) > logp(r, best)) best = c;
    arg[r] = static_cast<int>(best);
  }
  return collapse_path(arg);
}

LabelSequence collapse_path(const std::vector<int>& frame_labels) {
  LabelSequence out;
  int prev = -1;
  for (int id : frame_labels) {
    if (id != prev && id != kBlank) out.push_back(id);
    prev = id;
  }
  return out;
}

}  // namespace kdseq
