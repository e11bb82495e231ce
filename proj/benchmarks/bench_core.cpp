// Microbenchmarks for the training hot path: forward passes, the CTC
// recursion, softmax plus loss kernels, and the evaluation metric.

#include <benchmark/benchmark.h>

#include "kdseq/metrics.hpp"
#include "kdseq/trainer.hpp"

using namespace kdseq;

namespace {

Mat random_mat(Rng& rng, size_t r, size_t c) {
  Mat m(r, c);
  for (auto& v : m.v) v = rng.normal();
  return m;
}

LabelSequence random_seq(Rng& rng, size_t len, size_t classes) {
  LabelSequence y(len);
  for (auto& l : y) l = (int)rng.uniform_int(1, (long)classes - 1);
  return y;
}

}  // namespace

static void BM_CtcForward(benchmark::State& state) {
  Rng rng(1);
  size_t frames = (size_t)state.range(0), classes = 9;
  Mat z = random_mat(rng, frames, classes);
  Mat logp(frames, classes);
  for (size_t t = 0; t < frames; ++t) {
    double mx = z(t, 0);
    for (size_t c = 1; c < classes; ++c) mx = std::max(mx, z(t, c));
    double sum = 0;
    for (size_t c = 0; c < classes; ++c) sum += std::exp(z(t, c) - mx);
    for (size_t c = 0; c < classes; ++c) logp(t, c) = z(t, c) - mx - std::log(sum);
  }
  LabelSequence y = random_seq(rng, frames / 4, classes);
  for (auto _ : state) benchmark::DoNotOptimize(ctc_loss_value(logp, y));
}
BENCHMARK(BM_CtcForward)->Arg(20)->Arg(50);

static void BM_CtcLossWithGradient(benchmark::State& state) {
  Rng rng(2);
  size_t frames = 40, classes = 9;
  Mat z0 = random_mat(rng, frames, classes);
  LabelSequence y = random_seq(rng, 8, classes);
  for (auto _ : state) {
    ParameterSet ps;
    ps.add("z", Tensor::from_mat(z0, true));
    Tensor loss = ctc_loss(log_softmax_rows(ps.at("z")), y);
    backward(loss, ps);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_CtcLossWithGradient);

static void BM_TeacherForward(benchmark::State& state) {
  TeacherConfig cfg;
  cfg.classes = 9;
  ParameterSet params = init_teacher_params(cfg, 1);
  Rng rng(3);
  Mat x = random_mat(rng, 40, cfg.input_dim);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(teacher_forward(params, cfg, x).values());
}
BENCHMARK(BM_TeacherForward);

static void BM_StudentForward(benchmark::State& state) {
  StudentConfig cfg;
  cfg.classes = 9;
  ParameterSet params = init_student_params(cfg, 1);
  Rng rng(4);
  std::array<Mat, 3> xs = {random_mat(rng, 40, cfg.stream_dims[0]),
                           random_mat(rng, 40, cfg.stream_dims[1]),
                           random_mat(rng, 40, cfg.stream_dims[2])};
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(student_forward(params, cfg, xs).values());
}
BENCHMARK(BM_StudentForward);

static void BM_TemperedSoftmaxKL(benchmark::State& state) {
  Rng rng(5);
  Mat a = random_mat(rng, 40, 9), b = random_mat(rng, 40, 9);
  Tensor ta = Tensor::from_mat(a), tb = Tensor::from_mat(b);
  NoGradGuard guard;
  for (auto _ : state) {
    Tensor kl = kl_divergence(tempered_softmax(ta, 5.0), tempered_softmax(tb, 5.0));
    benchmark::DoNotOptimize(kl.item());
  }
}
BENCHMARK(BM_TemperedSoftmaxKL);

static void BM_EditDistance(benchmark::State& state) {
  Rng rng(6);
  LabelSequence ref = random_seq(rng, (size_t)state.range(0), 9);
  LabelSequence hyp = random_seq(rng, (size_t)state.range(0), 9);
  for (auto _ : state) benchmark::DoNotOptimize(edit_distance(ref, hyp).distance);
}
BENCHMARK(BM_EditDistance)->Arg(8)->Arg(64);

BENCHMARK_MAIN();
