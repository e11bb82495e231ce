// Command-line front end: dataset generation, teacher pretraining, student
// training under every loss strategy, uncertainty-weight learning, offline
// evaluation, and curve re-export. All outputs are deterministic functions
// of (config, seed).

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "kdseq/checkpoint.hpp"
#include "kdseq/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kdseq;

namespace {

template <typename T>
T get_as(const json& v, const std::string& ctx, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw config_error(ctx + ": bad value for '" + key + "': " + e.what());
  }
}

void apply_range(const json& v, const std::string& ctx, const std::string& key, int& lo, int& hi) {
  if (!v.is_array() || v.size() != 2) throw config_error(ctx + ": '" + key + "' wants [lo, hi]");
  lo = get_as<int>(v[0], ctx, key);
  hi = get_as<int>(v[1], ctx, key);
}

void apply_gen_json(const json& j, GenConfig& g, const std::string& ctx) {
  if (!j.is_object()) throw config_error(ctx + ": 'gen' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "vocab_size") g.vocab_size = get_as<size_t>(v, ctx, k);
    else if (k == "sent_len") apply_range(v, ctx, k, g.sent_len_min, g.sent_len_max);
    else if (k == "dur") apply_range(v, ctx, k, g.dur_min, g.dur_max);
    else if (k == "gap") apply_range(v, ctx, k, g.gap_min, g.gap_max);
    else if (k == "teacher_dim") g.teacher_dim = get_as<size_t>(v, ctx, k);
    else if (k == "sigma_a") g.sigma_a = get_as<double>(v, ctx, k);
    else if (k == "student_dims") {
      if (!v.is_array() || v.size() != 3) throw config_error(ctx + ": 'student_dims' wants 3 dims");
      for (size_t i = 0; i < 3; ++i) g.student_dims[i] = get_as<size_t>(v[i], ctx, k);
    } else if (k == "sigma_s") g.sigma_s = get_as<double>(v, ctx, k);
    else if (k == "proto_seed") g.proto_seed = get_as<uint64_t>(v, ctx, k);
    else if (k == "n_teacher") g.n_teacher = get_as<size_t>(v, ctx, k);
    else if (k == "n_student") g.n_student = get_as<size_t>(v, ctx, k);
    else if (k == "n_val") g.n_val = get_as<size_t>(v, ctx, k);
    else if (k == "n_test") g.n_test = get_as<size_t>(v, ctx, k);
    else throw config_error(ctx + ": unknown gen key '" + k + "'");
  }
}

void apply_config_json(const json& j, ExperimentConfig& cfg, const std::string& ctx) {
  if (!j.is_object()) throw config_error(ctx + ": config root must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "gen") apply_gen_json(v, cfg.gen, ctx);
    else if (k == "optimizer") cfg.optimizer = get_as<std::string>(v, ctx, k);
    else if (k == "lr") cfg.lr = get_as<double>(v, ctx, k);
    else if (k == "teacher_lr") cfg.teacher_lr = get_as<double>(v, ctx, k);
    else if (k == "rho_lr") cfg.rho_lr = get_as<double>(v, ctx, k);
    else if (k == "epochs") cfg.epochs = get_as<int>(v, ctx, k);
    else if (k == "teacher_epochs") cfg.teacher_epochs = get_as<int>(v, ctx, k);
    else if (k == "sigma_epochs") cfg.sigma_epochs = get_as<int>(v, ctx, k);
    else if (k == "batch_size") cfg.batch_size = get_as<int>(v, ctx, k);
    else if (k == "patience") cfg.patience = get_as<int>(v, ctx, k);
    else if (k == "min_epochs") cfg.min_epochs = get_as<int>(v, ctx, k);
    else if (k == "curve_interval") cfg.curve_interval = get_as<int>(v, ctx, k);
    else if (k == "hidden") cfg.hidden = get_as<size_t>(v, ctx, k);
    else if (k == "lstm_layers") cfg.lstm_layers = get_as<size_t>(v, ctx, k);
    else if (k == "seed") cfg.seed = get_as<uint64_t>(v, ctx, k);
    else if (k == "strategy") cfg.distill.strategy = strategy_from_string(get_as<std::string>(v, ctx, k));
    else if (k == "temperature") cfg.distill.temperature = get_as<double>(v, ctx, k);
    else if (k == "alpha") cfg.distill.alpha = get_as<double>(v, ctx, k);
    else if (k == "balance_coef") cfg.distill.balance_coef = get_as<double>(v, ctx, k);
    else throw config_error(ctx + ": unknown config key '" + k + "'");
  }
}

ExperimentConfig load_config_file(const std::string& path) {
  ExperimentConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream f(path);
  if (!f) throw io_error("cannot open config " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw parse_error(path + ": " + e.what());
  }
  apply_config_json(j, cfg, path);
  return cfg;
}

std::string split_file(const std::string& data_dir, Split s) {
  return (fs::path(data_dir) / (std::string(split_name(s)) + ".jsonl")).string();
}

Dataset load_split(const std::string& data_dir, const GenConfig& g, Split s) {
  return load_dataset(split_file(data_dir, s), PhonemeVocab::make(g.vocab_size));
}

const char* mode_name(DecodeMode m) { return m == DecodeMode::frame ? "frame" : "sequence"; }

std::string teacher_header(const ExperimentConfig& cfg) {
  json h;
  h["format"] = "kdseq-ckpt-1";
  h["kind"] = "teacher";
  h["input_dim"] = cfg.gen.teacher_dim;
  h["hidden"] = cfg.hidden;
  h["lstm_layers"] = cfg.lstm_layers;
  h["classes"] = cfg.gen.vocab_size + 1;
  h["vocab_hash"] = hash_hex(PhonemeVocab::make(cfg.gen.vocab_size).hash());
  h["decode_mode"] = "sequence";
  return h.dump();
}

std::string student_header(const ExperimentConfig& cfg) {
  json h;
  h["format"] = "kdseq-ckpt-1";
  h["kind"] = "student";
  h["stream_dims"] = cfg.gen.student_dims;
  h["hidden"] = cfg.hidden;
  h["lstm_layers"] = cfg.lstm_layers;
  h["classes"] = cfg.gen.vocab_size + 1;
  h["vocab_hash"] = hash_hex(PhonemeVocab::make(cfg.gen.vocab_size).hash());
  h["strategy"] = to_string(cfg.distill.strategy);
  h["decode_mode"] = mode_name(decode_mode_for(cfg.distill.strategy));
  return h.dump();
}

json parse_header(const Checkpoint& ckpt, const std::string& path) {
  json h;
  try {
    h = json::parse(ckpt.header);
  } catch (const json::exception& e) {
    throw parse_error(path + ": bad checkpoint header: " + e.what());
  }
  if (!h.is_object() || h.value("format", "") != "kdseq-ckpt-1")
    throw incompatibility_error(path + ": not a kdseq-ckpt-1 checkpoint");
  return h;
}

Checkpoint load_teacher_ckpt(const std::string& path, const ExperimentConfig& cfg) {
  Checkpoint ckpt = load_checkpoint(path);
  json h = parse_header(ckpt, path);
  if (h.value("kind", "") != "teacher")
    throw incompatibility_error(path + ": expected a teacher checkpoint");
  if (h.value("classes", size_t{0}) != cfg.gen.vocab_size + 1 ||
      h.value("input_dim", size_t{0}) != cfg.gen.teacher_dim ||
      h.value("hidden", size_t{0}) != cfg.hidden ||
      h.value("lstm_layers", size_t{0}) != cfg.lstm_layers)
    throw incompatibility_error(path + ": teacher dims do not match the experiment config");
  return ckpt;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw io_error("write failed for " + path);
}

void set_field(json& o, const char* key, double v) {
  if (std::isnan(v)) o[key] = nullptr;
  else o[key] = v;
}

double field_of(const json& o, const char* key, const std::string& path) {
  if (!o.contains(key)) throw parse_error(path + ": curve record missing '" + key + "'");
  const json& v = o.at(key);
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number()) throw parse_error(path + ": curve field '" + key + "' is not numeric");
  return v.get<double>();
}

void write_curves_jsonl(const std::vector<CurveRecord>& recs, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path + " for writing");
  for (const CurveRecord& r : recs) {
    json o;
    o["step"] = r.step;
    set_field(o, "kl", r.kl);
    set_field(o, "ce", r.ce);
    set_field(o, "ctc", r.ctc);
    set_field(o, "cos", r.cos);
    set_field(o, "grad_kl", r.grad_kl);
    set_field(o, "grad_ce", r.grad_ce);
    set_field(o, "grad_ctc", r.grad_ctc);
    set_field(o, "grad_cos", r.grad_cos);
    set_field(o, "total", r.total);
    f << o.dump() << "\n";
  }
  if (!f) throw io_error("write failed for " + path);
}

std::vector<CurveRecord> read_curves_jsonl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path);
  std::vector<CurveRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json o;
    try {
      o = json::parse(line);
    } catch (const json::exception& e) {
      throw parse_error(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    CurveRecord r;
    if (!o.contains("step") || !o.at("step").is_number_integer())
      throw parse_error(path + " line " + std::to_string(lineno) + ": bad 'step'");
    r.step = o.at("step").get<long>();
    r.kl = field_of(o, "kl", path);
    r.ce = field_of(o, "ce", path);
    r.ctc = field_of(o, "ctc", path);
    r.cos = field_of(o, "cos", path);
    r.grad_kl = field_of(o, "grad_kl", path);
    r.grad_ce = field_of(o, "grad_ce", path);
    r.grad_ctc = field_of(o, "grad_ctc", path);
    r.grad_cos = field_of(o, "grad_cos", path);
    r.total = field_of(o, "total", path);
    out.push_back(r);
  }
  return out;
}

std::string sigma_text(const SigmaPhaseResult& r) {
  std::string s;
  s += "sigma1=" + format_double(r.sigma1) + "\n";
  s += "sigma2=" + format_double(r.sigma2) + "\n";
  s += "a_exact=" + format_double(r.a_exact) + "\n";
  s += "a_rounded=" + format_double(r.a_rounded) + "\n";
  s += "final_kl=" + format_double(r.final_kl) + "\n";
  s += "final_ce=" + format_double(r.final_ce) + "\n";
  return s;
}

struct CommonOpts {
  std::string config;
  std::string out = ".";
  uint64_t seed = 1;
  bool seed_set = false;
};

void add_common(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config, "JSON config file; flags override its values");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--seed", o.seed, "run seed");
}

ExperimentConfig make_config(const CLI::App* sub, const CommonOpts& o) {
  ExperimentConfig cfg = load_config_file(o.config);
  if (sub->count("--seed")) cfg.seed = o.seed;
  return cfg;
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw io_error("cannot create output directory " + out + ": " + ec.message());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"teacher-student distillation toolkit for paired-modality sequence recognition"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the four dataset splits as JSONL");
  CommonOpts gen_o;
  add_common(gen, gen_o);

  // pretrain-teacher
  auto* pre = app.add_subcommand("pretrain-teacher", "CTC-train the teacher on modality-A data");
  CommonOpts pre_o;
  std::string pre_data;
  int pre_epochs = 0;
  add_common(pre, pre_o);
  pre->add_option("--data", pre_data, "directory with generated splits")->required();
  pre->add_option("--epochs", pre_epochs, "teacher epoch cap");

  // train
  auto* tr = app.add_subcommand("train", "train a student with one loss strategy");
  CommonOpts tr_o;
  std::string tr_data, tr_strategy, tr_teacher;
  double tr_temp = 0, tr_alpha = 0, tr_bal = 0;
  int tr_epochs = 0;
  add_common(tr, tr_o);
  tr->add_option("--data", tr_data, "directory with generated splits")->required();
  tr->add_option("--strategy", tr_strategy,
                 "frame-JLF1 | frame-JLF3 | seq-KLCTC | seq-COSCTC | baseline-CE | baseline-CTC");
  tr->add_option("--temperature", tr_temp, "softmax temperature (frame-JLF1)");
  tr->add_option("--alpha", tr_alpha, "distillation weight (frame-JLF1)");
  tr->add_option("--balance-coef", tr_bal, "balance coefficient a (frame-JLF3)");
  tr->add_option("--epochs", tr_epochs, "student epochs");
  tr->add_option("--teacher", tr_teacher, "teacher checkpoint (required for KD strategies)");

  // learn-sigmas
  auto* ls = app.add_subcommand("learn-sigmas",
                                "learn uncertainty weights jointly, report sigmas and a");
  CommonOpts ls_o;
  std::string ls_data, ls_teacher;
  add_common(ls, ls_o);
  ls->add_option("--data", ls_data, "directory with generated splits")->required();
  ls->add_option("--teacher", ls_teacher, "teacher checkpoint")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  CommonOpts ev_o;
  std::string ev_data, ev_ckpt, ev_split = "test", ev_mode, ev_out_file;
  add_common(ev, ev_o);
  ev->add_option("--data", ev_data, "directory with generated splits")->required();
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--split", ev_split, "teacher_train | student_train | val | test");
  ev->add_option("--mode", ev_mode, "frame | sequence (default: checkpoint's own)");
  ev->add_option("--report", ev_out_file, "also write the report to this file");

  // export-curves
  auto* ex = app.add_subcommand("export-curves", "convert a curves JSONL log to CSV");
  std::string ex_in, ex_out;
  ex->add_option("--in", ex_in, "curves.jsonl written by a training run")->required();
  ex->add_option("--csv", ex_out, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = make_config(gen, gen_o);
      cfg.gen.validate();
      ensure_out_dir(gen_o.out);
      PhonemeVocab vocab = PhonemeVocab::make(cfg.gen.vocab_size);
      for (Split s : {Split::teacher_train, Split::student_train, Split::val, Split::test}) {
        Dataset d = generate_split(cfg.gen, cfg.seed, s);
        std::string path = split_file(gen_o.out, s);
        save_dataset(d, vocab, path);
        std::cout << split_name(s) << ": " << d.size() << " samples -> " << path << "\n";
      }
    } else if (pre->parsed()) {
      ExperimentConfig cfg = make_config(pre, pre_o);
      if (pre->count("--epochs")) cfg.teacher_epochs = pre_epochs;
      cfg.validate();
      ensure_out_dir(pre_o.out);
      Dataset train = load_split(pre_data, cfg.gen, Split::teacher_train);
      Dataset val = load_split(pre_data, cfg.gen, Split::val);
      Dataset test = load_split(pre_data, cfg.gen, Split::test);
      TrainResult r = pretrain_teacher(cfg, train, val, test);
      fs::path out(pre_o.out);
      save_checkpoint((out / "teacher.ckpt").string(), teacher_header(cfg), r.params);
      write_text((out / "teacher_eval.txt").string(), r.report.to_kv_text());
      export_curves(r.curves, (out / "teacher_curves.csv").string());
      write_curves_jsonl(r.curves, (out / "teacher_curves.jsonl").string());
      std::cout << "teacher: epochs_run=" << r.epochs_run
                << " val_per=" << format_double(r.best_val_per)
                << " test_acc=" << format_double(r.report.acc) << "\n";
    } else if (tr->parsed()) {
      ExperimentConfig cfg = make_config(tr, tr_o);
      if (tr->count("--strategy")) cfg.distill.strategy = strategy_from_string(tr_strategy);
      if (tr->count("--temperature")) cfg.distill.temperature = tr_temp;
      if (tr->count("--alpha")) cfg.distill.alpha = tr_alpha;
      if (tr->count("--balance-coef")) cfg.distill.balance_coef = tr_bal;
      if (tr->count("--epochs")) cfg.epochs = tr_epochs;
      cfg.validate();
      ensure_out_dir(tr_o.out);
      Dataset train = load_split(tr_data, cfg.gen, Split::student_train);
      Dataset val = load_split(tr_data, cfg.gen, Split::val);
      Dataset test = load_split(tr_data, cfg.gen, Split::test);
      Checkpoint teacher;
      const ParameterSet* tp = nullptr;
      if (!tr_teacher.empty()) {
        teacher = load_teacher_ckpt(tr_teacher, cfg);
        tp = &teacher.params;
      }
      TrainResult r = train_student(cfg, train, val, test, tp);
      fs::path out(tr_o.out);
      save_checkpoint((out / "student.ckpt").string(), student_header(cfg), r.params);
      write_text((out / "eval.txt").string(), r.report.to_kv_text());
      export_curves(r.curves, (out / "curves.csv").string());
      write_curves_jsonl(r.curves, (out / "curves.jsonl").string());
      std::cout << to_string(cfg.distill.strategy) << ": epochs_run=" << r.epochs_run
                << " val_per=" << format_double(r.best_val_per)
                << " test_acc=" << format_double(r.report.acc) << "\n";
    } else if (ls->parsed()) {
      ExperimentConfig cfg = make_config(ls, ls_o);
      cfg.validate();
      ensure_out_dir(ls_o.out);
      Dataset train = load_split(ls_data, cfg.gen, Split::student_train);
      Checkpoint teacher = load_teacher_ckpt(ls_teacher, cfg);
      SigmaPhaseResult r = learn_uncertainty_weights(cfg, train, teacher.params);
      std::string text = sigma_text(r);
      write_text((fs::path(ls_o.out) / "sigmas.txt").string(), text);
      std::cout << text;
    } else if (ev->parsed()) {
      ExperimentConfig cfg = make_config(ev, ev_o);
      Checkpoint ckpt = load_checkpoint(ev_ckpt);
      json h = parse_header(ckpt, ev_ckpt);
      size_t classes = h.value("classes", size_t{0});
      if (classes < 2) throw incompatibility_error(ev_ckpt + ": bad classes in header");
      cfg.gen.vocab_size = classes - 1;
      cfg.hidden = h.value("hidden", size_t{0});
      cfg.lstm_layers = h.value("lstm_layers", size_t{0});
      Dataset ds;
      bool found = false;
      for (Split s : {Split::teacher_train, Split::student_train, Split::val, Split::test}) {
        if (ev_split == split_name(s)) {
          ds = load_split(ev_data, cfg.gen, s);
          found = true;
        }
      }
      if (!found) throw config_error("unknown split '" + ev_split + "'");
      std::string mode_str = ev_mode.empty() ? h.value("decode_mode", "sequence") : ev_mode;
      DecodeMode mode = decode_mode_from_string(mode_str);
      EvalReport rep;
      if (h.value("kind", "") == "teacher") {
        cfg.gen.teacher_dim = h.value("input_dim", size_t{0});
        TeacherConfig tcfg = cfg.teacher_config();
        rep = evaluate([&](const Sample& s) { return teacher_logits_mat(ckpt.params, tcfg, s); },
                       ds, mode);
      } else if (h.value("kind", "") == "student") {
        if (h.contains("stream_dims")) {
          auto dims = h.at("stream_dims");
          for (size_t i = 0; i < 3 && i < dims.size(); ++i)
            cfg.gen.student_dims[i] = dims[i].get<size_t>();
        }
        StudentConfig scfg = cfg.student_config();
        rep = evaluate([&](const Sample& s) { return student_logits_mat(ckpt.params, scfg, s); },
                       ds, mode);
      } else {
        throw incompatibility_error(ev_ckpt + ": unknown checkpoint kind");
      }
      std::cout << rep.to_kv_text();
      if (!ev_out_file.empty()) write_text(ev_out_file, rep.to_kv_text());
    } else if (ex->parsed()) {
      export_curves(read_curves_jsonl(ex_in), ex_out);
      std::cout << "wrote " << ex_out << "\n";
    }
  } catch (const kdseq::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
