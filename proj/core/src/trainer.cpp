#include "kdseq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kdseq/optim.hpp"

namespace kdseq {

namespace {

constexpr uint64_t kInitTag = 0x696e697400000000ull;
constexpr uint64_t kShuffleTag = 0x7368756600000000ull;
constexpr uint64_t kSigmaTag = 0x7369676d00000000ull;

using Snapshot = std::map<std::string, std::vector<double>>;

Snapshot take_snapshot(const ParameterSet& p) {
  Snapshot s;
  for (const auto& [name, t] : p) s[name] = t.values();
  return s;
}

void restore_snapshot(ParameterSet& p, const Snapshot& s) {
  for (auto& [name, t] : p) t.values_mut() = s.at(name);
}

std::vector<size_t> shuffled_indices(size_t n, Rng& rng) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (size_t i = n; i > 1; --i) {
    size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<long>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

Tensor mean_of(const std::vector<Tensor>& terms) {
  Tensor acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return scale(acc, 1.0 / static_cast<double>(terms.size()));
}

std::string curve_tail(const std::vector<CurveRecord>& curves, size_t n = 5) {
  std::ostringstream os;
  size_t start = curves.size() > n ? curves.size() - n : 0;
  for (size_t i = start; i < curves.size(); ++i) {
    const CurveRecord& r = curves[i];
    os << " step=" << r.step << " total=" << r.total;
  }
  return os.str();
}

void check_finite(double total, const std::vector<CurveRecord>& curves, const char* what) {
  if (std::isfinite(total)) return;
  throw training_diverged_error(std::string(what) + " loss became non-finite; last records:" +
                                curve_tail(curves));
}

void append_field(std::string& line, double v) {
  if (!std::isnan(v)) line += format_double(v);
}

double parse_field(const std::string& f, const std::string& path) {
  if (f.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    return parse_double(f);
  } catch (const parse_error&) {
    throw parse_error(path + ": bad numeric field '" + f + "'");
  }
}

}  // namespace

DecodeMode decode_mode_for(Strategy s) {
  switch (s) {
    case Strategy::baseline_ce:
    case Strategy::frame_jlf1:
    case Strategy::frame_mtl:
    case Strategy::frame_jlf3:
      return DecodeMode::frame;
    default:
      return DecodeMode::sequence;
  }
}

void ExperimentConfig::validate() const {
  gen.validate();
  distill.validate();
  if (lr <= 0 || teacher_lr <= 0 || rho_lr <= 0) throw config_error("learning rates must be > 0");
  if (epochs <= 0 || teacher_epochs <= 0 || sigma_epochs <= 0)
    throw config_error("epoch counts must be > 0");
  if (batch_size <= 0) throw config_error("batch_size must be > 0");
  if (patience <= 0) throw config_error("patience must be > 0");
  if (min_epochs < 0) throw config_error("min_epochs must be >= 0");
  if (curve_interval <= 0) throw config_error("curve_interval must be > 0");
  if (hidden == 0 || lstm_layers == 0) throw config_error("model dims must be > 0");
}

TeacherConfig ExperimentConfig::teacher_config() const {
  TeacherConfig t;
  t.input_dim = gen.teacher_dim;
  t.lstm_layers = lstm_layers;
  t.hidden = hidden;
  t.classes = gen.vocab_size + 1;
  return t;
}

StudentConfig ExperimentConfig::student_config() const {
  StudentConfig s;
  s.stream_dims = gen.student_dims;
  s.lstm_layers = lstm_layers;
  s.hidden = hidden;
  s.classes = gen.vocab_size + 1;
  return s;
}

Mat teacher_logits_mat(const ParameterSet& params, const TeacherConfig& cfg, const Sample& s) {
  NoGradGuard g;
  return teacher_forward(params, cfg, s.x_t).to_mat();
}

Mat student_logits_mat(const ParameterSet& params, const StudentConfig& cfg, const Sample& s) {
  NoGradGuard g;
  return student_forward(params, cfg, s.x_s).to_mat();
}

TrainResult pretrain_teacher(const ExperimentConfig& cfg, const Dataset& train, const Dataset& val,
                             const Dataset& test) {
  cfg.validate();
  if (train.empty() || val.empty() || test.empty())
    throw contract_error("pretrain_teacher: empty split");
  TeacherConfig tcfg = cfg.teacher_config();
  tcfg.validate();

  ParameterSet params = init_teacher_params(tcfg, splitmix64(cfg.seed ^ kInitTag));
  auto opt = make_optimizer(cfg.optimizer, cfg.teacher_lr);
  Rng shuffle_rng(splitmix64(cfg.seed ^ kShuffleTag));

  auto eval_fn = [&](const Sample& s) { return teacher_logits_mat(params, tcfg, s); };

  TrainResult out;
  double best_per = std::numeric_limits<double>::infinity();
  Snapshot best = take_snapshot(params);
  int since_best = 0;
  long step = 0;

  for (int epoch = 1; epoch <= cfg.teacher_epochs; ++epoch) {
    auto idx = shuffled_indices(train.size(), shuffle_rng);
    for (size_t b0 = 0; b0 < idx.size(); b0 += static_cast<size_t>(cfg.batch_size)) {
      size_t b1 = std::min(idx.size(), b0 + static_cast<size_t>(cfg.batch_size));
      std::vector<Tensor> terms;
      terms.reserve(b1 - b0);
      for (size_t j = b0; j < b1; ++j) {
        const Sample& s = train[idx[j]];
        Tensor logits = teacher_forward(params, tcfg, s.x_t);
        terms.push_back(ctc_loss(log_softmax_rows(logits), s.y));
      }
      Tensor total = mean_of(terms);
      double tv = total.item();
      check_finite(tv, out.curves, "teacher");
      ++step;
      params.zero_grad();
      backward(total, params);
      if (step % cfg.curve_interval == 0) {
        CurveRecord rec;
        rec.step = step;
        rec.ctc = tv;
        rec.grad_ctc = params.grad_l2_norm();
        rec.total = tv;
        out.curves.push_back(rec);
      }
      opt->step(params);
    }
    out.epochs_run = epoch;
    double per = evaluate(eval_fn, val, DecodeMode::sequence).per;
    if (per < best_per) {
      best_per = per;
      best = take_snapshot(params);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (epoch >= cfg.min_epochs && since_best >= cfg.patience) break;
  }

  restore_snapshot(params, best);
  out.params = params;
  out.best_val_per = best_per;
  out.report = evaluate(eval_fn, test, DecodeMode::sequence);
  return out;
}

TrainResult train_student(const ExperimentConfig& cfg, const Dataset& train, const Dataset& val,
                          const Dataset& test, const ParameterSet* teacher) {
  cfg.validate();
  if (train.empty() || val.empty() || test.empty())
    throw contract_error("train_student: empty split");
  const Strategy strat = cfg.distill.strategy;
  if (strat == Strategy::frame_mtl)
    throw config_error(
        "frame-MTL is the sigma-learning phase; use learn_uncertainty_weights, then retrain with "
        "frame-JLF3");
  if (strategy_needs_teacher(strat) && teacher == nullptr)
    throw config_error("strategy " + to_string(strat) + " needs a teacher checkpoint");

  StudentConfig scfg = cfg.student_config();
  scfg.validate();
  const size_t classes = scfg.classes;
  const double T = cfg.distill.temperature;
  const double alpha = cfg.distill.alpha;
  const double a = cfg.distill.balance_coef;

  // The teacher is read once here, never written and never on the tape.
  std::vector<Mat> tlogits;
  if (strategy_needs_teacher(strat)) {
    TeacherConfig tcfg = cfg.teacher_config();
    tlogits.reserve(train.size());
    for (const Sample& s : train) tlogits.push_back(teacher_logits_mat(*teacher, tcfg, s));
  }

  const bool uses_ce = strat == Strategy::baseline_ce || strat == Strategy::frame_jlf1 ||
                       strat == Strategy::frame_jlf3;
  std::vector<Mat> onehots;
  if (uses_ce) {
    onehots.reserve(train.size());
    for (const Sample& s : train) onehots.push_back(one_hot(s.frame_labels, classes));
  }

  ParameterSet params = init_student_params(scfg, splitmix64(cfg.seed ^ kInitTag));
  auto opt = make_optimizer(cfg.optimizer, cfg.lr);
  Rng shuffle_rng(splitmix64(cfg.seed ^ kShuffleTag));

  const DecodeMode mode = decode_mode_for(strat);
  auto eval_fn = [&](const Sample& s) { return student_logits_mat(params, scfg, s); };

  TrainResult out;
  double best_per = std::numeric_limits<double>::infinity();
  Snapshot best = take_snapshot(params);
  long step = 0;

  auto term_grad_norm = [&](const Tensor& t) {
    params.zero_grad();
    backward(t, params);
    return params.grad_l2_norm();
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto idx = shuffled_indices(train.size(), shuffle_rng);
    for (size_t b0 = 0; b0 < idx.size(); b0 += static_cast<size_t>(cfg.batch_size)) {
      size_t b1 = std::min(idx.size(), b0 + static_cast<size_t>(cfg.batch_size));
      std::vector<Tensor> v_kl, v_ce, v_ctc, v_cos;
      for (size_t j = b0; j < b1; ++j) {
        const size_t si = idx[j];
        const Sample& s = train[si];
        Tensor slog = student_forward(params, scfg, s.x_s);
        switch (strat) {
          case Strategy::baseline_ce:
            v_ce.push_back(cross_entropy(onehots[si], tempered_softmax(slog, 1.0)));
            break;
          case Strategy::baseline_ctc:
            v_ctc.push_back(ctc_loss(log_softmax_rows(slog), s.y));
            break;
          case Strategy::frame_jlf1: {
            LossBreakdown lb = jlf1(Tensor::from_mat(tlogits[si]), slog, onehots[si], T, alpha);
            v_kl.push_back(lb.kl);
            v_ce.push_back(lb.ce);
            break;
          }
          case Strategy::frame_jlf3: {
            LossBreakdown lb = jlf3(Tensor::from_mat(tlogits[si]), slog, onehots[si], a);
            v_kl.push_back(lb.kl);
            v_ce.push_back(lb.ce);
            break;
          }
          case Strategy::seq_klctc: {
            LossBreakdown lb = kl_ctc_loss(slog, Tensor::from_mat(tlogits[si]), s.y);
            v_kl.push_back(lb.kl);
            v_ctc.push_back(lb.ctc);
            break;
          }
          case Strategy::seq_cosctc: {
            LossBreakdown lb = sequence_kd_loss(slog, Tensor::from_mat(tlogits[si]), s.y);
            v_cos.push_back(lb.cos);
            v_ctc.push_back(lb.ctc);
            break;
          }
          case Strategy::frame_mtl:
            break;  // rejected above
        }
      }

      // Batch terms are means of the per-sample terms; the total is rebuilt
      // from them so every logged record satisfies the strategy formula.
      Tensor kl, ce, ctc, cos, total;
      if (!v_kl.empty()) kl = mean_of(v_kl);
      if (!v_ce.empty()) ce = mean_of(v_ce);
      if (!v_ctc.empty()) ctc = mean_of(v_ctc);
      if (!v_cos.empty()) cos = mean_of(v_cos);
      switch (strat) {
        case Strategy::baseline_ce:
          total = ce;
          break;
        case Strategy::baseline_ctc:
          total = ctc;
          break;
        case Strategy::frame_jlf1:
          total = add(scale(kl, alpha * T * T), scale(ce, 1.0 - alpha));
          break;
        case Strategy::frame_jlf3:
          total = scale(add(scale(kl, a), ce), 0.5);
          break;
        case Strategy::seq_klctc:
          total = scale(add(kl, ctc), 0.5);
          break;
        case Strategy::seq_cosctc:
          total = scale(add(add_const(scale(cos, -1.0), 1.0), ctc), 0.5);
          break;
        case Strategy::frame_mtl:
          break;
      }

      double tv = total.item();
      check_finite(tv, out.curves, "student");
      ++step;
      bool log_step = (step % cfg.curve_interval) == 0;
      CurveRecord rec;
      rec.step = step;
      rec.total = tv;
      if (kl.defined()) rec.kl = kl.item();
      if (ce.defined()) rec.ce = ce.item();
      if (ctc.defined()) rec.ctc = ctc.item();
      if (cos.defined()) rec.cos = cos.item();
      if (log_step) {
        // Terms that alias the total get their norm from the total's pass.
        if (kl.defined() && kl.node() != total.node()) rec.grad_kl = term_grad_norm(kl);
        if (ce.defined() && ce.node() != total.node()) rec.grad_ce = term_grad_norm(ce);
        if (ctc.defined() && ctc.node() != total.node()) rec.grad_ctc = term_grad_norm(ctc);
        if (cos.defined() && cos.node() != total.node()) rec.grad_cos = term_grad_norm(cos);
      }
      params.zero_grad();
      backward(total, params);
      if (log_step) {
        double tn = params.grad_l2_norm();
        if (kl.defined() && kl.node() == total.node()) rec.grad_kl = tn;
        if (ce.defined() && ce.node() == total.node()) rec.grad_ce = tn;
        if (ctc.defined() && ctc.node() == total.node()) rec.grad_ctc = tn;
        if (cos.defined() && cos.node() == total.node()) rec.grad_cos = tn;
        out.curves.push_back(rec);
      }
      opt->step(params);
    }
    out.epochs_run = epoch;
    double per = evaluate(eval_fn, val, mode).per;
    if (per < best_per) {
      best_per = per;
      best = take_snapshot(params);
    }
  }

  restore_snapshot(params, best);
  out.params = params;
  out.best_val_per = best_per;
  out.report = evaluate(eval_fn, test, mode);
  return out;
}

SigmaPhaseResult learn_uncertainty_weights(const ExperimentConfig& cfg, const Dataset& train,
                                           const ParameterSet& teacher) {
  cfg.validate();
  if (train.empty()) throw contract_error("learn_uncertainty_weights: empty train split");
  StudentConfig scfg = cfg.student_config();
  scfg.validate();
  TeacherConfig tcfg = cfg.teacher_config();

  std::vector<Mat> tlogits;
  tlogits.reserve(train.size());
  for (const Sample& s : train) tlogits.push_back(teacher_logits_mat(teacher, tcfg, s));
  std::vector<Mat> onehots;
  onehots.reserve(train.size());
  for (const Sample& s : train) onehots.push_back(one_hot(s.frame_labels, scfg.classes));

  ParameterSet weights = init_student_params(scfg, splitmix64(cfg.seed ^ kSigmaTag));
  ParameterSet rhos;
  Tensor rho1 = rhos.add("rho/1", Tensor::scalar(0.0, true));
  Tensor rho2 = rhos.add("rho/2", Tensor::scalar(0.0, true));
  ParameterSet all;
  for (const auto& [name, t] : weights) all.add(name, t);
  all.add("rho/1", rho1);
  all.add("rho/2", rho2);

  auto opt_w = make_optimizer(cfg.optimizer, cfg.lr);
  auto opt_rho = make_optimizer("adam", cfg.rho_lr);
  Rng shuffle_rng(splitmix64(cfg.seed ^ kShuffleTag));

  std::vector<CurveRecord> curves;
  double last_kl = 0.0, last_ce = 0.0;
  long last_batches = 0;

  for (int epoch = 1; epoch <= cfg.sigma_epochs; ++epoch) {
    auto idx = shuffled_indices(train.size(), shuffle_rng);
    bool final_epoch = epoch == cfg.sigma_epochs;
    for (size_t b0 = 0; b0 < idx.size(); b0 += static_cast<size_t>(cfg.batch_size)) {
      size_t b1 = std::min(idx.size(), b0 + static_cast<size_t>(cfg.batch_size));
      std::vector<Tensor> v_kl, v_ce;
      for (size_t j = b0; j < b1; ++j) {
        const size_t si = idx[j];
        Tensor slog = student_forward(weights, scfg, train[si].x_s);
        LossBreakdown lb = jlf3(Tensor::from_mat(tlogits[si]), slog, onehots[si], 1.0);
        v_kl.push_back(lb.kl);
        v_ce.push_back(lb.ce);
      }
      Tensor kl = mean_of(v_kl);
      Tensor ce = mean_of(v_ce);
      Tensor total = mtl_loss(kl, ce, rho1, rho2);
      double tv = total.item();
      check_finite(tv, curves, "sigma phase");
      CurveRecord rec;
      rec.step = static_cast<long>(curves.size()) + 1;
      rec.kl = kl.item();
      rec.ce = ce.item();
      rec.total = tv;
      curves.push_back(rec);
      all.zero_grad();
      backward(total, all);
      opt_w->step(weights);
      opt_rho->step(rhos);
      double s1 = std::exp(rho1.item());
      double s2 = std::exp(rho2.item());
      if (s1 < 1e-4 || s2 < 1e-4)
        throw sigma_collapse_error("sigma collapsed below 1e-4; task balance is degenerate");
      if (final_epoch) {
        last_kl += rec.kl;
        last_ce += rec.ce;
        ++last_batches;
      }
    }
  }

  SigmaPhaseResult r;
  r.sigma1 = std::exp(rho1.item());
  r.sigma2 = std::exp(rho2.item());
  r.a_exact = balance_coefficient(r.sigma1, r.sigma2);
  r.a_rounded = round_balance(r.a_exact);
  r.final_kl = last_kl / static_cast<double>(last_batches);
  r.final_ce = last_ce / static_cast<double>(last_batches);
  return r;
}

SigmaPhaseResult sigma_stationarity_harness(double k, double c, long steps, double lr) {
  if (k <= 0 || c <= 0) throw config_error("harness losses must be > 0");
  if (steps <= 0 || lr <= 0) throw config_error("harness steps and lr must be > 0");
  ParameterSet rhos;
  Tensor rho1 = rhos.add("rho/1", Tensor::scalar(0.0, true));
  Tensor rho2 = rhos.add("rho/2", Tensor::scalar(0.0, true));
  Tensor kl = Tensor::scalar(k);
  Tensor ce = Tensor::scalar(c);
  Sgd opt(lr);
  for (long i = 0; i < steps; ++i) {
    rhos.zero_grad();
    Tensor total = mtl_loss(kl, ce, rho1, rho2);
    backward(total, rhos);
    opt.step(rhos);
  }
  SigmaPhaseResult r;
  r.sigma1 = std::exp(rho1.item());
  r.sigma2 = std::exp(rho2.item());
  r.a_exact = balance_coefficient(r.sigma1, r.sigma2);
  r.a_rounded = round_balance(r.a_exact);
  r.final_kl = k;
  r.final_ce = c;
  return r;
}

std::string curves_header() {
  return "step,kl,ce,ctc,cos,grad_kl,grad_ce,grad_ctc,grad_cos,total";
}

void export_curves(const std::vector<CurveRecord>& records, const std::string& path) {
  if (records.empty()) throw contract_error("export_curves: no records");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f << curves_header() << "\n";
  for (const CurveRecord& r : records) {
    std::string line = std::to_string(r.step);
    for (double v : {r.kl, r.ce, r.ctc, r.cos, r.grad_kl, r.grad_ce, r.grad_ctc, r.grad_cos}) {
      line += ',';
      append_field(line, v);
    }
    line += ',';
    append_field(line, r.total);
    f << line << "\n";
  }
  if (!f) throw io_error("write failed for " + path);
}

std::vector<CurveRecord> load_curves(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw parse_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != curves_header()) throw parse_error(path + ": unexpected header '" + line + "'");
  std::vector<CurveRecord> out;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 10)
      throw parse_error(path + ": expected 10 fields, got " + std::to_string(fields.size()));
    CurveRecord r;
    try {
      r.step = std::stol(fields[0]);
    } catch (const std::exception&) {
      throw parse_error(path + ": bad step field '" + fields[0] + "'");
    }
    r.kl = parse_field(fields[1], path);
    r.ce = parse_field(fields[2], path);
    r.ctc = parse_field(fields[3], path);
    r.cos = parse_field(fields[4], path);
    r.grad_kl = parse_field(fields[5], path);
    r.grad_ce = parse_field(fields[6], path);
    r.grad_ctc = parse_field(fields[7], path);
    r.grad_cos = parse_field(fields[8], path);
    r.total = parse_field(fields[9], path);
    out.push_back(r);
  }
  return out;
}

}  // namespace kdseq
