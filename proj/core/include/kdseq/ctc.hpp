#pragma once

#include "kdseq/tensor.hpp"

namespace kdseq {

// CTC over the blank-augmented class set. Blank id is 0 repo-wide; label ids
// are 1..classes-1. Log-space arithmetic throughout; log(0) is the sentinel
// -1e30, which never enters a differentiated tensor.

constexpr int kBlank = 0;
constexpr double kLogZero = -1e30;

using LabelSequence = std::vector<int>;

// Fewest frames that can emit y: |y| plus one separating blank per
// consecutive repeat.
size_t ctc_min_frames(const LabelSequence& y);

// Negative log-likelihood of y under per-frame log-probabilities, summed over
// all consistent alignments (forward recursion over the extended label).
// Infeasible instances return +inf.
double ctc_loss_value(const Mat& logp, const LabelSequence& y);

// Differentiable variant for training: gradient w.r.t. logp comes from the
// closed-form alignment posterior. Infeasible instances throw
// infeasible_alignment_error instead of producing a non-finite loss node.
Tensor ctc_loss(const Tensor& logp, const LabelSequence& y);

// Exhaustive path-enumeration oracle. Guarded to frames <= 8, classes <= 5.
double ctc_loss_bruteforce(const Mat& logp, const LabelSequence& y);

// Per-frame argmax, collapse consecutive repeats, drop blanks.
LabelSequence greedy_decode(const Mat& logp);

// Same collapse rule applied to an explicit frame-label path.
LabelSequence collapse_path(const std::vector<int>& frame_labels);

}  // namespace kdseq
