#include "kdseq/metrics.hpp"

#include <cmath>
#include <sstream>

namespace kdseq {

EditCounts edit_distance(const LabelSequence& ref, const LabelSequence& hyp) {
  size_t n = ref.size(), m = hyp.size();
  std::vector<size_t> dp((n + 1) * (m + 1));
  auto at = [&](size_t i, size_t j) -> size_t& { return dp[i * (m + 1) + j]; };
  for (size_t i = 0; i <= n; i++) at(i, 0) = i;
  for (size_t j = 0; j <= m; j++) at(0, j) = j;
  for (size_t i = 1; i <= n; i++)
    for (size_t j = 1; j <= m; j++) {
      size_t sub = at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1] ? 1 : 0);
      size_t del = at(i - 1, j) + 1;
      size_t ins = at(i, j - 1) + 1;
      at(i, j) = std::min({sub, del, ins});
    }

  EditCounts out;
  out.distance = at(n, m);
  // One optimal backtrace; tie-break order substitution > deletion > insertion.
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        at(i, j) == at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1] ? 1 : 0)) {
      if (ref[i - 1] != hyp[j - 1]) out.subs++;
      i--, j--;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      out.dels++;
      i--;
    } else {
      out.ins++;
      j--;
    }
  }
  return out;
}

std::string EvalReport::to_kv_text() const {
  std::string s;
  s += "per=" + format_double(per) + "\n";
  s += "acc=" + format_double(acc) + "\n";
  if (has_frame_acc) s += "frame_acc=" + format_double(frame_acc) + "\n";
  s += "subs=" + std::to_string(subs) + "\n";
  s += "ins=" + std::to_string(ins) + "\n";
  s += "dels=" + std::to_string(dels) + "\n";
  s += "ref_len=" + std::to_string(ref_len) + "\n";
  return s;
}

EvalReport parse_eval_report(const std::string& kv_text) {
  EvalReport r;
  std::istringstream in(kv_text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw parse_error("eval report line " + std::to_string(lineno) + ": no '='");
    std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "per") r.per = parse_double(v);
    else if (k == "acc") r.acc = parse_double(v);
    else if (k == "frame_acc") { r.frame_acc = parse_double(v); r.has_frame_acc = true; }
    else if (k == "subs") r.subs = static_cast<size_t>(std::stoull(v));
    else if (k == "ins") r.ins = static_cast<size_t>(std::stoull(v));
    else if (k == "dels") r.dels = static_cast<size_t>(std::stoull(v));
    else if (k == "ref_len") r.ref_len = static_cast<size_t>(std::stoull(v));
    else throw parse_error("eval report line " + std::to_string(lineno) + ": unknown key " + k);
  }
  return r;
}

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "frame") return DecodeMode::frame;
  if (s == "sequence") return DecodeMode::sequence;
  throw config_error("decode mode '" + s + "' (expected frame|sequence)");
}

EvalReport evaluate(const std::function<Mat(const Sample&)>& logits_fn, const Dataset& ds,
                    DecodeMode mode) {
  if (ds.empty()) throw contract_error("evaluate: empty dataset");
  EvalReport r;
  size_t frames_ok = 0, frames_total = 0;
  size_t dist = 0;
  for (const auto& s : ds) {
    Mat logits = logits_fn(s);
    LabelSequence hyp;
    if (mode == DecodeMode::frame) {
      std::vector<int> arg(logits.rows);
      for (size_t t = 0; t < logits.rows; t++) {
        size_t best = 0;
        for (size_t c = 1; c < logits.cols; c++)
          if (logits(t, c) > logits(t, best)) best = c;
        arg[t] = static_cast<int>(best);
      }
      hyp = collapse_path(arg);
      for (size_t t = 0; t < arg.size() && t < s.frame_labels.size(); t++)
        if (arg[t] == s.frame_labels[t]) frames_ok++;
      frames_total += s.frame_labels.size();
    } else {
      // log-probabilities for the CTC best-path rule
      Mat logp(logits.rows, logits.cols);
      for (size_t t = 0; t < logits.rows; t++) {
        double mx = logits(t, 0);
        for (size_t c = 1; c < logits.cols; c++) mx = std::max(mx, logits(t, c));
        double sum = 0.0;
        for (size_t c = 0; c < logits.cols; c++) sum += std::exp(logits(t, c) - mx);
        double ls = mx + std::log(sum);
        for (size_t c = 0; c < logits.cols; c++) logp(t, c) = logits(t, c) - ls;
      }
      hyp = greedy_decode(logp);
    }
    EditCounts ec = edit_distance(s.y, hyp);
    dist += ec.distance;
    r.subs += ec.subs;
    r.ins += ec.ins;
    r.dels += ec.dels;
    r.ref_len += s.y.size();
  }
  if (r.ref_len == 0) throw contract_error("evaluate: empty reference corpus");
  r.per = static_cast<double>(dist) / static_cast<double>(r.ref_len);
  r.acc = 1.0 - r.per;
  if (mode == DecodeMode::frame) {
    r.has_frame_acc = true;
    r.frame_acc = static_cast<double>(frames_ok) / static_cast<double>(frames_total);
  }
  return r;
}

}  // namespace kdseq
