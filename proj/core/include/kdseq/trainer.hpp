#pragma once

#include <limits>
#include <string>
#include <vector>

#include "kdseq/data.hpp"
#include "kdseq/losses.hpp"
#include "kdseq/metrics.hpp"
#include "kdseq/models.hpp"

namespace kdseq {

// One logged training step. Terms a strategy does not use stay NaN and are
// written as empty CSV fields.
struct CurveRecord {
  long step = 0;
  double kl = std::numeric_limits<double>::quiet_NaN();
  double ce = std::numeric_limits<double>::quiet_NaN();
  double ctc = std::numeric_limits<double>::quiet_NaN();
  double cos = std::numeric_limits<double>::quiet_NaN();
  double grad_kl = std::numeric_limits<double>::quiet_NaN();
  double grad_ce = std::numeric_limits<double>::quiet_NaN();
  double grad_ctc = std::numeric_limits<double>::quiet_NaN();
  double grad_cos = std::numeric_limits<double>::quiet_NaN();
  double total = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentConfig {
  GenConfig gen;
  DistillConfig distill;

  std::string optimizer = "adam";
  double lr = 1e-3;          // student steps
  double teacher_lr = 1e-3;  // teacher pretraining steps
  double rho_lr = 0.02;      // uncertainty weights get their own optimizer

  int epochs = 25;           // students train the full budget, best val restored
  int teacher_epochs = 60;   // cap; early stopping usually ends sooner
  int sigma_epochs = 25;     // joint sigma-learning phase length
  int batch_size = 10;
  int patience = 5;          // epochs without val PER improvement before stopping
  int min_epochs = 10;       // early stopping is not armed before this epoch
  int curve_interval = 1;    // log every k-th optimizer step

  size_t hidden = 32;
  size_t lstm_layers = 2;

  uint64_t seed = 1;

  void validate() const;
  TeacherConfig teacher_config() const;
  StudentConfig student_config() const;
};

struct TrainResult {
  ParameterSet params;  // best-val weights
  EvalReport report;    // test split
  std::vector<CurveRecord> curves;
  double best_val_per = 0.0;
  int epochs_run = 0;
};

// Outcome of the joint sigma-learning phase. a is recomputed from the stored
// sigmas, so a_exact == sigma2^2 / sigma1^2 holds by construction; a_rounded
// keeps one significant figure, the reporting convention of round_balance.
struct SigmaPhaseResult {
  double sigma1 = 1.0, sigma2 = 1.0;
  double a_exact = 1.0;
  double a_rounded = 1.0;
  double final_kl = 0.0, final_ce = 0.0;
};

// Logits of a stored model on one sample, graph-free. Used by evaluation and
// by the teacher-side caching in the distillation loop.
Mat teacher_logits_mat(const ParameterSet& params, const TeacherConfig& cfg, const Sample& s);
Mat student_logits_mat(const ParameterSet& params, const StudentConfig& cfg, const Sample& s);

// Frame-trained students decode by frame argmax; CTC-trained ones get the
// blank-aware sequence decode.
DecodeMode decode_mode_for(Strategy s);

// CTC training on modality-A features with early stopping on val PER
// (patience epochs, armed after min_epochs); returns the best-val weights.
// Divergence (non-finite loss) aborts with the tail of the curve log in the
// error message.
TrainResult pretrain_teacher(const ExperimentConfig& cfg, const Dataset& train,
                             const Dataset& val, const Dataset& test);

// Trains a student with cfg.distill.strategy. teacher may be null only for
// the baselines; it is read once to cache per-sample logits, so no gradient
// can reach it. frame-MTL is rejected here: sigma learning has its own entry
// point below. At logging steps each term's gradient norm over all student
// parameters comes from a separate backward pass.
TrainResult train_student(const ExperimentConfig& cfg, const Dataset& train, const Dataset& val,
                          const Dataset& test, const ParameterSet* teacher);

// Phase 1 of the two-phase uncertainty protocol: trains a throwaway student
// and (rho1, rho2) jointly under the uncertainty objective, then reports
// sigma1, sigma2 and the balance coefficient for the phase-2 retrain.
// sigma < 1e-4 aborts as degenerate task balance.
SigmaPhaseResult learn_uncertainty_weights(const ExperimentConfig& cfg, const Dataset& train,
                                           const ParameterSet& teacher);

// Stationarity probe with both losses frozen at constants: sigma_i^2 must
// converge to 2k and 2c. Plain gradient descent on the rhos alone.
SigmaPhaseResult sigma_stationarity_harness(double k, double c, long steps, double lr);

// curves.csv: fixed header, one row per record, empty fields for NaN terms.
// Doubles use shortest round-trip form, so load(export(x)) is bit-exact.
void export_curves(const std::vector<CurveRecord>& records, const std::string& path);
std::vector<CurveRecord> load_curves(const std::string& path);
std::string curves_header();

}  // namespace kdseq
