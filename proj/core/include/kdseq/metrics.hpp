#pragma once

#include <functional>

#include "kdseq/data.hpp"

namespace kdseq {

struct EditCounts {
  size_t distance = 0;
  size_t subs = 0, ins = 0, dels = 0;
};

// Unit-cost Levenshtein with operation counts from one optimal backtrace;
// ties break substitution > deletion > insertion.
EditCounts edit_distance(const LabelSequence& ref, const LabelSequence& hyp);

struct EvalReport {
  double per = 0.0;
  double acc = 0.0;  // 1 - per, deliberately not clamped at 0
  bool has_frame_acc = false;
  double frame_acc = 0.0;
  size_t subs = 0, ins = 0, dels = 0, ref_len = 0;

  std::string to_kv_text() const;  // flat key=value lines
};

EvalReport parse_eval_report(const std::string& kv_text);

enum class DecodeMode { frame, sequence };
DecodeMode decode_mode_from_string(const std::string& s);

// Corpus PER = total edit distance / total reference length over the whole
// dataset; logits_fn maps a sample to its (frames, classes) logits. Frame
// mode also reports per-frame accuracy against the frame labels.
EvalReport evaluate(const std::function<Mat(const Sample&)>& logits_fn, const Dataset& ds,
                    DecodeMode mode);

}  // namespace kdseq
