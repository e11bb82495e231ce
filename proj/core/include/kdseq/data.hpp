#pragma once

#include <array>

#include "kdseq/ctc.hpp"

namespace kdseq {

// 16-digit lowercase hex of a 64-bit hash, as stored in dataset and
// checkpoint headers.
std::string hash_hex(uint64_t h);

// blank "_" at index 0, then zero-padded phoneme symbols p01, p02, ...
struct PhonemeVocab {
  std::vector<std::string> symbols;

  static PhonemeVocab make(size_t n_phonemes);
  size_t classes() const { return symbols.size(); }
  uint64_t hash() const;
};

struct GenConfig {
  size_t vocab_size = 8;  // phonemes, excluding blank
  int sent_len_min = 3, sent_len_max = 8;
  int dur_min = 2, dur_max = 5;  // frames per phoneme
  int gap_min = 0, gap_max = 2;  // blank frames between phonemes
  size_t teacher_dim = 16;
  double sigma_a = 0.1;
  std::array<size_t, 3> student_dims{8, 8, 4};
  double sigma_s = 0.5;
  uint64_t proto_seed = 17;
  // scarce-student regime: big teacher corpus, small student corpus
  size_t n_teacher = 2000, n_student = 150, n_val = 100, n_test = 200;

  void validate() const;
};

// One paired item: both modality views share a single frame timeline, so
// teacher and student are frame-aligned by construction.
struct Sample {
  uint64_t id = 0;
  Mat x_t;                        // (frames, teacher_dim)
  std::array<Mat, 3> x_s;        // (frames, student_dims[k]) each
  std::vector<int> frame_labels;  // ids over {blank} + phonemes
  LabelSequence y;                // frame_labels collapsed, blanks removed
};

using Dataset = std::vector<Sample>;

// Unit-norm per-class emission prototypes (blank included: its prototype is
// the silence signature). Depends only on proto_seed and the dims.
struct Prototypes {
  Mat teacher;
  std::array<Mat, 3> student;
};

Prototypes make_prototypes(const GenConfig& cfg);

enum class Split { teacher_train, student_train, val, test };
const char* split_name(Split s);
size_t split_size(const GenConfig& cfg, Split s);

// Per-sample seeds are derived with splitmix64 from a per-split stream, so
// splits are disjoint by construction and each sample is independently
// reproducible.
Dataset generate_split(const GenConfig& cfg, uint64_t seed, Split which);
Sample generate_sample(const GenConfig& cfg, const Prototypes& protos, uint64_t sample_seed,
                       uint64_t id);

// Line-delimited JSON, one sample per line. Doubles are serialized in
// shortest round-trip form; load(save(x)) is bit-exact.
void save_dataset(const Dataset& ds, const PhonemeVocab& vocab, const std::string& path);
Dataset load_dataset(const std::string& path, const PhonemeVocab& expected_vocab);

}  // namespace kdseq
