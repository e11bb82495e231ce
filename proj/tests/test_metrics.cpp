#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "kdseq/common.hpp"
#include "kdseq/data.hpp"
#include "kdseq/metrics.hpp"

using namespace kdseq;

namespace {

LabelSequence random_seq(Rng& rng, size_t max_len, int max_id = 5) {
  LabelSequence s(rng.uniform_int(0, static_cast<int64_t>(max_len)));
  for (auto& x : s) x = 1 + static_cast<int>(rng.uniform_int(0, max_id - 1));
  return s;
}

}  // namespace

TEST_CASE("edit distance fixtures") {
  CHECK(edit_distance({1, 2, 3}, {1, 2, 3}).distance == 0);

  EditCounts del = edit_distance({1, 1, 2}, {1, 2});
  CHECK(del.distance == 1);
  CHECK(del.dels == 1);
  CHECK(del.subs == 0);
  CHECK(del.ins == 0);

  EditCounts ins = edit_distance({}, {1, 2});
  CHECK(ins.distance == 2);
  CHECK(ins.ins == 2);

  EditCounts sub = edit_distance({1, 2}, {1, 3});
  CHECK(sub.distance == 1);
  CHECK(sub.subs == 1);
}

TEST_CASE("counts always sum to the distance and match the definition") {
  Rng rng(3);
  for (int i = 0; i < 200; i++) {
    LabelSequence a = random_seq(rng, 8), b = random_seq(rng, 8);
    EditCounts e = edit_distance(a, b);
    CHECK(e.subs + e.ins + e.dels == e.distance);
    // length bookkeeping: ref + insertions - deletions reaches hyp length
    CHECK(a.size() + e.ins - e.dels == b.size());
  }
}

TEST_CASE("edit distance is a metric") {
  Rng rng(7);
  for (int i = 0; i < 200; i++) {
    LabelSequence a = random_seq(rng, 6), b = random_seq(rng, 6), c = random_seq(rng, 6);
    CHECK(edit_distance(a, a).distance == 0);
    CHECK(edit_distance(a, b).distance == edit_distance(b, a).distance);
    CHECK(edit_distance(a, c).distance <=
          edit_distance(a, b).distance + edit_distance(b, c).distance);
  }
}

TEST_CASE("eval report identities and serialization") {
  EvalReport r;
  r.per = 0.25;
  r.acc = 0.75;
  r.subs = 2;
  r.ins = 1;
  r.dels = 2;
  r.ref_len = 20;
  r.has_frame_acc = true;
  r.frame_acc = 0.9;
  EvalReport back = parse_eval_report(r.to_kv_text());
  CHECK(back.per == r.per);
  CHECK(back.acc == r.acc);
  CHECK(back.subs == r.subs);
  CHECK(back.ins == r.ins);
  CHECK(back.dels == r.dels);
  CHECK(back.ref_len == r.ref_len);
  CHECK(back.has_frame_acc);
  CHECK(back.frame_acc == r.frame_acc);
}

TEST_CASE("corpus scoring on a hand-checked pair") {
  // one sentence [a,a,b] decoded as [a,b]: one deletion over three phonemes
  GenConfig cfg;
  cfg.vocab_size = 3;
  Dataset ds(1);
  ds[0].frame_labels = {1, 1, 0, 2};  // timeline for the frame-mode path
  ds[0].y = {1, 1, 2};
  ds[0].x_t = Mat(4, 1);

  auto logits_fn = [](const Sample&) {
    Mat m(4, 4, -20.0);
    m(0, 1) = 0.0;  // a
    m(1, 1) = 0.0;  // a (collapses with the previous frame)
    m(2, 0) = 0.0;  // blank
    m(3, 2) = 0.0;  // b
    return m;
  };
  EvalReport r = evaluate(logits_fn, ds, DecodeMode::sequence);
  CHECK(r.per == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(r.acc == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(r.acc == doctest::Approx(1.0 - r.per).epsilon(1e-15));
  CHECK(r.dels == 1);
  CHECK(r.ref_len == 3);

  EvalReport f = evaluate(logits_fn, ds, DecodeMode::frame);
  CHECK(f.has_frame_acc);
  CHECK(f.frame_acc == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("insertion-heavy decoding drives accuracy negative") {
  Dataset ds(1);
  ds[0].frame_labels = {1};
  ds[0].y = {1};
  ds[0].x_t = Mat(5, 1);
  auto logits_fn = [](const Sample&) {
    Mat m(5, 4, -20.0);
    m(0, 1) = 0.0;
    m(1, 2) = 0.0;
    m(2, 3) = 0.0;
    m(3, 2) = 0.0;
    m(4, 3) = 0.0;  // decodes to five phonemes against one reference
    return m;
  };
  EvalReport r = evaluate(logits_fn, ds, DecodeMode::sequence);
  CHECK(r.per > 1.0);
  CHECK(r.acc < 0.0);
  CHECK(r.acc == doctest::Approx(1.0 - r.per).epsilon(1e-15));
}

TEST_CASE("empty dataset is a contract error") {
  Dataset empty;
  CHECK_THROWS_AS(evaluate([](const Sample&) { return Mat(1, 2); }, empty, DecodeMode::frame),
                  contract_error);
}

TEST_CASE("corpus PER is the length-weighted mean of sentence PERs") {
  Rng rng(11);
  for (int corpus = 0; corpus < 100; corpus++) {
    size_t n = 1 + static_cast<size_t>(rng.uniform_int(0, 5));
    double dist_total = 0, len_total = 0, weighted = 0;
    std::vector<std::pair<LabelSequence, LabelSequence>> pairs;
    for (size_t i = 0; i < n; i++) {
      LabelSequence ref = random_seq(rng, 6);
      if (ref.empty()) ref.push_back(1);
      LabelSequence hyp = random_seq(rng, 6);
      pairs.emplace_back(ref, hyp);
      double d = static_cast<double>(edit_distance(ref, hyp).distance);
      dist_total += d;
      len_total += static_cast<double>(ref.size());
    }
    for (auto& [ref, hyp] : pairs) {
      double sent_per = static_cast<double>(edit_distance(ref, hyp).distance) /
                        static_cast<double>(ref.size());
      weighted += sent_per * (static_cast<double>(ref.size()) / len_total);
    }
    CHECK(std::abs(dist_total / len_total - weighted) <= 1e-12);
  }
}

TEST_CASE("decode mode names parse") {
  CHECK(decode_mode_from_string("frame") == DecodeMode::frame);
  CHECK(decode_mode_from_string("sequence") == DecodeMode::sequence);
  CHECK_THROWS_AS(decode_mode_from_string("beam"), config_error);
}
