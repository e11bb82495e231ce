#include "kdseq/data.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace kdseq {

using nlohmann::json;

PhonemeVocab PhonemeVocab::make(size_t n_phonemes) {
  if (n_phonemes < 2) throw config_error("vocab: need at least 2 phonemes");
  PhonemeVocab v;
  v.symbols.push_back("_");
  for (size_t i = 1; i <= n_phonemes; i++) {
    std::string s = std::to_string(i);
    if (s.size() < 2) s = "0" + s;
    v.symbols.push_back("p" + s);
  }
  return v;
}

uint64_t PhonemeVocab::hash() const {
  uint64_t h = 1469598103934665603ull;
  for (const auto& s : symbols) {
    h = fnv1a64(s.data(), s.size(), h);
    h = fnv1a64("\x1f", 1, h);
  }
  return h;
}

void GenConfig::validate() const {
  if (vocab_size < 2) throw config_error("gen: vocab_size must be >= 2");
  if (sent_len_min < 1 || sent_len_max < sent_len_min) throw config_error("gen: bad sentence length range");
  if (dur_min < 1 || dur_max < dur_min) throw config_error("gen: bad duration range");
  if (gap_min < 0 || gap_max < gap_min) throw config_error("gen: bad gap range");
  if (teacher_dim < 1) throw config_error("gen: teacher_dim must be >= 1");
  for (size_t d : student_dims)
    if (d < 1) throw config_error("gen: student stream dims must be >= 1");
  if (sigma_a < 0.0 || sigma_s < 0.0) throw config_error("gen: noise must be >= 0");
}

namespace {

constexpr double kTeacherPhonemeScale = 0.25;
constexpr double kStudentPhonemeScale = 0.5;

Mat unit_prototypes(Rng& rng, size_t classes, size_t dim) {
  Mat m(classes, dim);
  for (size_t k = 0; k < classes; k++) {
    double n2 = 0.0;
    for (size_t d = 0; d < dim; d++) {
      m(k, d) = rng.normal();
      n2 += m(k, d) * m(k, d);
    }
    if (n2 == 0.0) {
      m(k, 0) = 1.0;
      continue;
    }
    double inv = 1.0 / std::sqrt(n2);
    for (size_t d = 0; d < dim; d++) m(k, d) *= inv;
  }
  return m;
}

Mat emit(Rng& rng, const Mat& protos, const std::vector<int>& labels, double sigma) {
  Mat m(labels.size(), protos.cols);
  for (size_t t = 0; t < labels.size(); t++)
    for (size_t d = 0; d < protos.cols; d++)
      m(t, d) = protos(static_cast<size_t>(labels[t]), d) + sigma * rng.normal();
  return m;
}

constexpr uint64_t kSplitTag[4] = {0x7465616368657200ull,   // "teacher"
                                   0x73747564656e7400ull,   // "student"
                                   0x76616c0000000000ull,   // "val"
                                   0x7465737400000000ull};  // "test"

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (size_t r = 0; r < m.rows; r++) {
    json row = json::array();
    for (size_t c = 0; c < m.cols; c++) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& j, size_t expect_rows) {
  if (!j.is_array() || j.empty()) throw std::runtime_error("matrix is not a non-empty array");
  size_t rows = j.size(), cols = j[0].size();
  if (rows != expect_rows) throw std::runtime_error("matrix row count mismatch");
  Mat m(rows, cols);
  for (size_t r = 0; r < rows; r++) {
    if (!j[r].is_array() || j[r].size() != cols) throw std::runtime_error("ragged matrix");
    for (size_t c = 0; c < cols; c++) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

char hex_digit(uint64_t v) { return "0123456789abcdef"[v & 0xf]; }

}  // namespace

std::string hash_hex(uint64_t h) {
  std::string s(16, '0');
  for (int i = 15; i >= 0; i--) {
    s[static_cast<size_t>(i)] = hex_digit(h);
    h >>= 4;
  }
  return s;
}

Prototypes make_prototypes(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.proto_seed);
  Prototypes p;
  size_t classes = cfg.vocab_size + 1;
  p.teacher = unit_prototypes(rng, classes, cfg.teacher_dim);
  // Frame evidence on the teacher view is weak relative to sigma_a, so
  // identity and segment boundaries are ambiguous per frame and only the
  // segment as a whole is decodable, as in real speech.
  for (size_t k = 0; k < classes; k++)
    for (size_t d = 0; d < cfg.teacher_dim; d++) p.teacher(k, d) *= kTeacherPhonemeScale;
  // The student streams are harder still: weaker prototypes under larger
  // noise leave per-frame identity mostly unresolved, so label supervision
  // alone underdetermines the frame classifier on a scarce training set.
  for (size_t k = 0; k < 3; k++) {
    p.student[k] = unit_prototypes(rng, classes, cfg.student_dims[k]);
    for (size_t c = 0; c < classes; c++)
      for (size_t d = 0; d < cfg.student_dims[k]; d++) p.student[k](c, d) *= kStudentPhonemeScale;
  }
  return p;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::teacher_train: return "teacher_train";
    case Split::student_train: return "student_train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

size_t split_size(const GenConfig& cfg, Split s) {
  switch (s) {
    case Split::teacher_train: return cfg.n_teacher;
    case Split::student_train: return cfg.n_student;
    case Split::val: return cfg.n_val;
    case Split::test: return cfg.n_test;
  }
  return 0;
}

Sample generate_sample(const GenConfig& cfg, const Prototypes& protos, uint64_t sample_seed,
                       uint64_t id) {
  Rng rng(sample_seed);
  int len = static_cast<int>(rng.uniform_int(cfg.sent_len_min, cfg.sent_len_max));
  std::vector<int> frame_labels;
  for (int i = 0; i < len; i++) {
    if (i > 0) {
      int gap = static_cast<int>(rng.uniform_int(cfg.gap_min, cfg.gap_max));
      frame_labels.insert(frame_labels.end(), static_cast<size_t>(gap), kBlank);
    }
    int ph = static_cast<int>(rng.uniform_int(1, static_cast<int64_t>(cfg.vocab_size)));
    int dur = static_cast<int>(rng.uniform_int(cfg.dur_min, cfg.dur_max));
    frame_labels.insert(frame_labels.end(), static_cast<size_t>(dur), ph);
  }
  Sample s;
  s.id = id;
  s.frame_labels = frame_labels;
  s.y = collapse_path(frame_labels);  // constructive: the invariant holds by definition
  s.x_t = emit(rng, protos.teacher, frame_labels, cfg.sigma_a);
  for (size_t k = 0; k < 3; k++) s.x_s[k] = emit(rng, protos.student[k], frame_labels, cfg.sigma_s);
  return s;
}

Dataset generate_split(const GenConfig& cfg, uint64_t seed, Split which) {
  cfg.validate();
  Prototypes protos = make_prototypes(cfg);
  uint64_t stream = splitmix64(seed ^ kSplitTag[static_cast<size_t>(which)]);
  size_t n = split_size(cfg, which);
  // ids carry the split in the high bits so a merged corpus keeps them unique
  uint64_t id_base = static_cast<uint64_t>(which) << 32;
  Dataset ds;
  ds.reserve(n);
  for (size_t i = 0; i < n; i++)
    ds.push_back(generate_sample(cfg, protos, splitmix64(stream + i), id_base + i));
  return ds;
}

void save_dataset(const Dataset& ds, const PhonemeVocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path);
  std::string vh = hash_hex(vocab.hash());
  for (const auto& s : ds) {
    json j;
    j["id"] = s.id;
    j["vocab"] = vh;
    j["frames"] = s.x_t.rows;
    j["x_t"] = mat_to_json(s.x_t);
    json xs = json::array();
    for (const auto& m : s.x_s) xs.push_back(mat_to_json(m));
    j["x_s"] = std::move(xs);
    j["frame_labels"] = s.frame_labels;
    j["y"] = s.y;
    out << j.dump() << "\n";
  }
  if (!out) throw io_error("write failed: " + path);
}

Dataset load_dataset(const std::string& path, const PhonemeVocab& expected_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read " + path);
  std::string expect_hash = hash_hex(expected_vocab.hash());
  Dataset ds;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      std::string vh = j.at("vocab").get<std::string>();
      if (vh != expect_hash)
        throw incompatibility_error("dataset line " + std::to_string(lineno) +
                                    ": built for vocab " + vh + ", expected " + expect_hash);
      Sample s;
      s.id = j.at("id").get<uint64_t>();
      size_t frames = j.at("frames").get<size_t>();
      s.x_t = mat_from_json(j.at("x_t"), frames);
      const json& xs = j.at("x_s");
      if (!xs.is_array() || xs.size() != 3) throw std::runtime_error("x_s must hold 3 streams");
      for (size_t k = 0; k < 3; k++) s.x_s[k] = mat_from_json(xs[k], frames);
      s.frame_labels = j.at("frame_labels").get<std::vector<int>>();
      if (s.frame_labels.size() != frames) throw std::runtime_error("frame_labels length mismatch");
      s.y = j.at("y").get<LabelSequence>();
      for (int id : s.frame_labels)
        if (id < 0 || static_cast<size_t>(id) >= expected_vocab.classes())
          throw std::runtime_error("frame label outside the vocabulary");
      ds.push_back(std::move(s));
    } catch (const incompatibility_error&) {
      throw;
    } catch (const std::exception& e) {
      throw parse_error(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

}  // namespace kdseq
