#include "kdseq/models.hpp"

#include <cmath>

namespace kdseq {

namespace {

void check_dims(const char* who, size_t v, const char* what) {
  if (v < 1) throw config_error(std::string(who) + ": " + what + " must be >= 1");
}

Tensor uniform_tensor(Rng& rng, size_t rows, size_t cols, double s) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-s, s);
  return Tensor(rows, cols, std::move(v), true);
}

// One BiLSTM layer's parameters: fused gate weights [i f g o] per direction.
void add_lstm_layer(ParameterSet& ps, Rng& rng, const std::string& prefix, size_t in_dim,
                    size_t hidden) {
  double s_in = 1.0 / std::sqrt(static_cast<double>(in_dim));
  double s_h = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (const char* dir : {"fw", "bw"}) {
    std::string p = prefix + "/" + dir + "/";
    ps.add(p + "w", uniform_tensor(rng, in_dim, 4 * hidden, s_in));
    ps.add(p + "u", uniform_tensor(rng, hidden, 4 * hidden, s_h));
    ps.add(p + "b", uniform_tensor(rng, 1, 4 * hidden, s_in));
  }
}

void add_linear(ParameterSet& ps, Rng& rng, const std::string& prefix, size_t in_dim,
                size_t out_dim) {
  double s = 1.0 / std::sqrt(static_cast<double>(in_dim));
  ps.add(prefix + "/w", uniform_tensor(rng, in_dim, out_dim, s));
  ps.add(prefix + "/b", uniform_tensor(rng, 1, out_dim, s));
}

Tensor bilstm_layer(const ParameterSet& ps, const std::string& prefix, const Tensor& x,
                    size_t hidden) {
  Tensor fwd = lstm_scan(x, ps.at(prefix + "/fw/w"), ps.at(prefix + "/fw/u"),
                         ps.at(prefix + "/fw/b"), hidden);
  Tensor rev = reverse_rows(x);
  Tensor bwd = reverse_rows(lstm_scan(rev, ps.at(prefix + "/bw/w"), ps.at(prefix + "/bw/u"),
                                      ps.at(prefix + "/bw/b"), hidden));
  return concat_cols({fwd, bwd});
}

Tensor linear(const ParameterSet& ps, const std::string& prefix, const Tensor& x) {
  return add(matmul(x, ps.at(prefix + "/w")), ps.at(prefix + "/b"));
}

}  // namespace

void TeacherConfig::validate() const {
  check_dims("teacher", input_dim, "input_dim");
  check_dims("teacher", lstm_layers, "lstm_layers");
  check_dims("teacher", hidden, "hidden");
  if (classes < 2) throw config_error("teacher: classes must be >= 2 (blank plus phonemes)");
}

void StudentConfig::validate() const {
  for (size_t d : stream_dims) check_dims("student", d, "stream dim");
  check_dims("student", lstm_layers, "lstm_layers");
  check_dims("student", hidden, "hidden");
  if (classes < 2) throw config_error("student: classes must be >= 2 (blank plus phonemes)");
}

ParameterSet init_teacher_params(const TeacherConfig& cfg, uint64_t seed) {
  cfg.validate();
  ParameterSet ps;
  Rng rng(seed);
  size_t in = cfg.input_dim;
  for (size_t l = 0; l < cfg.lstm_layers; l++) {
    add_lstm_layer(ps, rng, "lstm" + std::to_string(l), in, cfg.hidden);
    in = 2 * cfg.hidden;
  }
  add_linear(ps, rng, "head", in, cfg.classes);
  return ps;
}

ParameterSet init_student_params(const StudentConfig& cfg, uint64_t seed) {
  cfg.validate();
  ParameterSet ps;
  Rng rng(seed);
  size_t in = cfg.stream_dims[0] + cfg.stream_dims[1] + cfg.stream_dims[2];
  for (size_t l = 0; l < cfg.lstm_layers; l++) {
    add_lstm_layer(ps, rng, "lstm" + std::to_string(l), in, cfg.hidden);
    in = 2 * cfg.hidden;
  }
  add_linear(ps, rng, "fc1", in, cfg.hidden);
  add_linear(ps, rng, "fc2", cfg.hidden, cfg.classes);
  return ps;
}

Tensor lstm_scan(const Tensor& x, const Tensor& w, const Tensor& u, const Tensor& b,
                 size_t hidden) {
  if (x.cols() != w.rows())
    throw shape_error("lstm_scan: input (" + std::to_string(x.rows()) + "," +
                      std::to_string(x.cols()) + ") vs weight (" + std::to_string(w.rows()) + "," +
                      std::to_string(w.cols()) + ")");
  size_t frames = x.rows(), h = hidden;
  Tensor hs(1, h, 0.0);
  Tensor cs(1, h, 0.0);
  std::vector<Tensor> outs;
  outs.reserve(frames);
  for (size_t t = 0; t < frames; t++) {
    Tensor xt = slice_rows(x, t, t + 1);
    Tensor gates = add(add(matmul(xt, w), matmul(hs, u)), b);
    Tensor gi = sigmoid(slice_cols(gates, 0, h));
    Tensor gf = sigmoid(slice_cols(gates, h, 2 * h));
    Tensor gg = tanh_t(slice_cols(gates, 2 * h, 3 * h));
    Tensor go = sigmoid(slice_cols(gates, 3 * h, 4 * h));
    cs = add(mul(gf, cs), mul(gi, gg));
    hs = mul(go, tanh_t(cs));
    outs.push_back(hs);
  }
  return concat_rows(outs);
}

Tensor teacher_forward(const ParameterSet& params, const TeacherConfig& cfg, const Mat& x_t) {
  if (x_t.cols != cfg.input_dim)
    throw contract_error("teacher_forward: input dim " + std::to_string(x_t.cols) + ", expected " +
                         std::to_string(cfg.input_dim));
  if (x_t.rows == 0) throw contract_error("teacher_forward: empty input");
  Tensor h = Tensor::from_mat(x_t);
  for (size_t l = 0; l < cfg.lstm_layers; l++)
    h = bilstm_layer(params, "lstm" + std::to_string(l), h, cfg.hidden);
  return linear(params, "head", h);
}

Tensor student_forward(const ParameterSet& params, const StudentConfig& cfg,
                       const std::array<Mat, 3>& x_s) {
  size_t frames = x_s[0].rows;
  for (size_t k = 0; k < 3; k++) {
    if (x_s[k].rows != frames)
      throw alignment_error("student_forward: stream " + std::to_string(k) + " has " +
                            std::to_string(x_s[k].rows) + " frames, stream 0 has " +
                            std::to_string(frames));
    if (x_s[k].cols != cfg.stream_dims[k])
      throw contract_error("student_forward: stream " + std::to_string(k) + " dim " +
                           std::to_string(x_s[k].cols) + ", expected " +
                           std::to_string(cfg.stream_dims[k]));
  }
  if (frames == 0) throw contract_error("student_forward: empty input");
  Tensor h = concat_cols(
      {Tensor::from_mat(x_s[0]), Tensor::from_mat(x_s[1]), Tensor::from_mat(x_s[2])});
  for (size_t l = 0; l < cfg.lstm_layers; l++)
    h = bilstm_layer(params, "lstm" + std::to_string(l), h, cfg.hidden);
  return linear(params, "fc2", tanh_t(linear(params, "fc1", h)));
}

}  // namespace kdseq
