#pragma once

#include <array>

#include "kdseq/tensor.hpp"

namespace kdseq {

// Teacher: BiLSTM stack over modality-A features, linear head.
struct TeacherConfig {
  size_t input_dim = 16;
  size_t lstm_layers = 2;
  size_t hidden = 32;
  size_t classes = 0;  // |vocab| including blank

  void validate() const;
};

// Student: three feature streams concatenated, BiLSTM stack, two FC layers
// (tanh between them) sharing one output head for CE and CTC training.
struct StudentConfig {
  std::array<size_t, 3> stream_dims{8, 8, 4};
  size_t lstm_layers = 2;
  size_t hidden = 32;
  size_t classes = 0;

  void validate() const;
};

// Uniform init in [-s, s], s = 1/sqrt(fan_in). fan_in of a weight is its row
// count; a bias inherits the fan_in of the weight it accompanies. Parameter
// draw order is fixed, so one seed fully determines the set.
ParameterSet init_teacher_params(const TeacherConfig& cfg, uint64_t seed);
ParameterSet init_student_params(const StudentConfig& cfg, uint64_t seed);

// One LSTM direction over the frame sequence; returns (frames, hidden).
// The backward direction of a BiLSTM layer is this scan on the row-reversed
// input, reversed back, so reversal consistency holds by construction.
Tensor lstm_scan(const Tensor& x, const Tensor& w, const Tensor& u, const Tensor& b,
                 size_t hidden);

// (frames, input_dim) -> (frames, classes) logits.
Tensor teacher_forward(const ParameterSet& params, const TeacherConfig& cfg, const Mat& x_t);

// Three (frames, dim_i) streams -> (frames, classes) logits.
Tensor student_forward(const ParameterSet& params, const StudentConfig& cfg,
                       const std::array<Mat, 3>& x_s);

}  // namespace kdseq
