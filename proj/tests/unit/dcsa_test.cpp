#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "dfx/core/error.hpp"
#include "dfx/core/languages.hpp"
#include "dfx/dcsa/dcsa.hpp"
#include "dfx/nn/grad_check.hpp"

using namespace dfx;

namespace {

const Alphabet kBinary("01");
constexpr DcsaKind kKinds[] = {DcsaKind::Rnn, DcsaKind::Gru, DcsaKind::Lstm};

TransformerModel small_teacher(std::uint64_t seed = 1) { return build_transformer({}, kBinary, seed); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> row_times(const std::vector<double>& x, const nn::Tensor& w, std::size_t col0, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < x.size(); ++i) out[j] += x[i] * w.at(i, col0 + j);
  return out;
}

}  // namespace

TEST_CASE("kind names") {
  CHECK(parse_dcsa_kind("GRU") == DcsaKind::Gru);
  CHECK(dcsa_kind_name(DcsaKind::Lstm) == "lstm");
  CHECK_THROWS_AS(parse_dcsa_kind("transformer"), ConfigError);
}

TEST_CASE("construction copies embedding and classifier") {
  const auto t = small_teacher();
  for (auto kind : kKinds) {
    const auto d = build_dcsa(kind, t, 3);
    CHECK(d.state_dim == 32);
    CHECK(d.params.at("embed.token") == t.params.at("embed.token"));
    CHECK(d.params.at("classifier.weight") == t.params.at("classifier.weight"));
    CHECK(d.params.at("classifier.bias") == t.params.at("classifier.bias"));
    CHECK(d.params.at("init_state") == nn::Tensor({1, 32}));
    CHECK(d.source_transformer_hash == t.params.fingerprint());
    for (double v : d.params.at("cell.wh").values()) CHECK(std::fabs(v) <= 1.0 / std::sqrt(32.0));
  }
}

TEST_CASE("rnn with zero weights maps to the zero state") {
  auto d = build_dcsa(DcsaKind::Rnn, small_teacher(), 1);
  for (const char* name : {"cell.wx", "cell.wh", "cell.b"}) d.params.at(name).fill(0.0);
  d.params.at("init_state").fill(0.3);
  const auto s = dcsa_step(d, dcsa_initial(d), 2);
  for (double v : s.h) CHECK(v == 0.0);
}

TEST_CASE("steps follow the cell equations") {
  const auto t = small_teacher();
  for (auto kind : kKinds) {
    INFO(dcsa_kind_name(kind));
    auto d = build_dcsa(kind, t, 5);
    nn::Rng rng(9);
    for (auto& v : d.params.at("init_state").values()) v = rng.normal(0, 0.5);
    const auto s0 = dcsa_initial(d);
    const int token = 3;
    const auto& emb = d.params.at("embed.token");
    const std::vector<double> x(emb.data() + token * 32, emb.data() + token * 32 + 32);
    const auto& wx = d.params.at("cell.wx");
    const auto& wh = d.params.at("cell.wh");
    const auto& b = d.params.at("cell.b");
    auto gate = [&](std::size_t k, bool recurrent) {
      auto a = row_times(x, wx, k * 32, 32);
      if (recurrent) {
        const auto r = row_times(s0.h, wh, k * 32, 32);
        for (std::size_t j = 0; j < 32; ++j) a[j] += r[j];
      }
      for (std::size_t j = 0; j < 32; ++j) a[j] += b[k * 32 + j];
      return a;
    };
    std::vector<double> expected(32);
    if (kind == DcsaKind::Rnn) {
      const auto a = gate(0, true);
      for (std::size_t j = 0; j < 32; ++j) expected[j] = std::tanh(a[j]);
    } else if (kind == DcsaKind::Gru) {
      const auto z = gate(0, true), r = gate(1, true);
      std::vector<double> rh(32);
      for (std::size_t j = 0; j < 32; ++j) rh[j] = sigmoid(r[j]) * s0.h[j];
      auto n = gate(2, false);
      const auto u = row_times(rh, d.params.at("cell.un"), 0, 32);
      for (std::size_t j = 0; j < 32; ++j) {
        const double zj = sigmoid(z[j]);
        expected[j] = (1.0 - zj) * s0.h[j] + zj * std::tanh(n[j] + u[j]);
      }
    } else {
      const auto i = gate(0, true), f = gate(1, true), g = gate(2, true), o = gate(3, true);
      for (std::size_t j = 0; j < 32; ++j) {
        const double c = sigmoid(f[j]) * 0.0 + sigmoid(i[j]) * std::tanh(g[j]);
        expected[j] = sigmoid(o[j]) * std::tanh(c);
      }
    }
    const auto s1 = dcsa_step(d, s0, token);
    for (std::size_t j = 0; j < 32; ++j) CHECK(s1.h[j] == doctest::Approx(expected[j]).epsilon(1e-12));
    CHECK(dcsa_step(d, s0, token) == s1);
  }
}

TEST_CASE("gru with a saturated update gate returns the candidate") {
  auto d = build_dcsa(DcsaKind::Gru, small_teacher(), 2);
  for (std::size_t j = 0; j < 32; ++j) d.params.at("cell.b")[j] = 1e3;
  nn::Rng rng(1);
  auto s0 = dcsa_initial(d);
  for (auto& v : s0.h) v = rng.normal(0, 0.5);
  const auto s1 = dcsa_step(d, s0, 2);
  // Candidate computed independently with z = 1.
  const auto& emb = d.params.at("embed.token");
  const std::vector<double> x(emb.data() + 2 * 32, emb.data() + 3 * 32);
  std::vector<double> r(32), rh(32);
  const auto rx = row_times(x, d.params.at("cell.wx"), 32, 32);
  const auto rr = row_times(s0.h, d.params.at("cell.wh"), 32, 32);
  for (std::size_t j = 0; j < 32; ++j) rh[j] = sigmoid(rx[j] + rr[j] + d.params.at("cell.b")[32 + j]) * s0.h[j];
  const auto nx = row_times(x, d.params.at("cell.wx"), 64, 32);
  const auto nu = row_times(rh, d.params.at("cell.un"), 0, 32);
  for (std::size_t j = 0; j < 32; ++j)
    CHECK(s1.h[j] == doctest::Approx(std::tanh(nx[j] + nu[j] + d.params.at("cell.b")[64 + j])).epsilon(1e-9));
}

TEST_CASE("run is a left fold from the initial state") {
  const auto t = small_teacher();
  for (auto kind : kKinds) {
    INFO(dcsa_kind_name(kind));
    const auto d = build_dcsa(kind, t, 4);
    CHECK(dcsa_run_word(d, "") == dcsa_initial(d));
    for (const auto& w : words_up_to(kBinary, 6)) {
      for (char a : std::string("01")) {
        const auto lhs = dcsa_run_word(d, w + a);
        const auto rhs = dcsa_step(d, dcsa_run_word(d, w), kFirstSymbolToken + (a - '0'));
        CHECK(lhs == rhs);
      }
    }
    // Tape and plain evaluation agree.
    for (const char* w : {"", "1", "0110101"}) {
      nn::Tape tape;
      const auto ids = encode_symbols(w, kBinary);
      const auto v = dcsa_state_on_tape(tape, d, d.params, ids, false).value();
      const auto s = dcsa_run(d, ids);
      for (std::size_t j = 0; j < 32; ++j) CHECK(v[j] == doctest::Approx(s.h[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("special tokens and unknown symbols are rejected") {
  const auto d = build_dcsa(DcsaKind::Rnn, small_teacher(), 1);
  CHECK_THROWS_AS(dcsa_step(d, dcsa_initial(d), kClsToken), ConfigError);
  CHECK_THROWS_AS(dcsa_step(d, dcsa_initial(d), kSepToken), ConfigError);
  CHECK_THROWS_AS(dcsa_step(d, dcsa_initial(d), 4), ConfigError);
  CHECK_THROWS_AS(dcsa_run_word(d, "012"), ConfigError);
}

TEST_CASE("classification uses the copied classifier") {
  const auto t = small_teacher();
  const auto d = build_dcsa(DcsaKind::Lstm, t, 1);
  for (const char* w : {"", "0", "1101"}) {
    const auto c = dcsa_classify_word(d, w);
    CHECK(std::fabs(c.confidence[0] + c.confidence[1] - 1.0) <= 1e-12);
    const auto s = dcsa_run_word(d, w);
    const auto& cw = t.params.at("classifier.weight");
    double l0 = t.params.at("classifier.bias")[0], l1 = t.params.at("classifier.bias")[1];
    for (std::size_t j = 0; j < 32; ++j) l0 += s.h[j] * cw.at(j, 0), l1 += s.h[j] * cw.at(j, 1);
    CHECK(c.logits[0] == doctest::Approx(l0).epsilon(1e-12));
    CHECK(c.logits[1] == doctest::Approx(l1).epsilon(1e-12));
  }
}

TEST_CASE("gradient checks for every cell kind") {
  const auto t = small_teacher();
  for (auto kind : kKinds) {
    INFO(dcsa_kind_name(kind));
    auto d = build_dcsa(kind, t, 6);
    nn::Rng rng(7);
    for (auto& v : d.params.at("init_state").values()) v = rng.normal(0, 0.3);
    const auto ids = encode_symbols("0110100", kBinary);
    std::vector<double> target(32);
    for (auto& v : target) v = rng.normal(0, 1);
    const nn::Tensor rep({1, 32}, target);
    const nn::LossFn loss = [&](nn::Tape& tape, const nn::ParamStore& p) {
      const auto s = dcsa_state_on_tape(tape, d, p, ids, true);
      const auto logits = nn::linear(s, tape.parameter(p, "classifier.weight"), tape.parameter(p, "classifier.bias"));
      // Squared distance: finite differences straddling the |.| kink would
      // measure the kink, not the cell.
      const auto diff = nn::sub(s, tape.constant(rep));
      return nn::add(nn::cross_entropy(logits, 1), nn::sum(nn::multiply(diff, diff)));
    };
    // The loss is O(10), so central differences carry ~1e-10 of roundoff;
    // a 1e-5 floor keeps that from dominating near-zero coordinates.
    CHECK(nn::grad_check(loss, d.params, {.probes = 300, .seed = 3, .floor = 1e-5}) <= 1e-4);
  }
}

TEST_CASE("distillation keeps the classifier frozen and is deterministic") {
  DatasetConfig dc;
  dc.size = 40;
  dc.max_len = 8;
  dc.seed = 1;
  const auto ds = generate_dataset(builtin_language("tomita4"), dc);
  const auto t = small_teacher(2);
  DistillConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 5;
  for (auto kind : kKinds) {
    INFO(dcsa_kind_name(kind));
    auto a = build_dcsa(kind, t, 1), b = build_dcsa(kind, t, 1);
    const auto ra = distill(a, t, ds, cfg);
    distill(b, t, ds, cfg);
    CHECK(a.params == b.params);
    CHECK(a.params.at("classifier.weight") == t.params.at("classifier.weight"));
    CHECK(a.params.at("classifier.bias") == t.params.at("classifier.bias"));
    CHECK_FALSE(a.params.at("cell.wx") == build_dcsa(kind, t, 1).params.at("cell.wx"));
    CHECK(ra.label_loss.size() == 2);
    CHECK(ra.rep_loss.size() == 2);
    CHECK(ra.updates == 2 * 2 * ds.subset(Split::Train).size());
  }
  auto c = build_dcsa(DcsaKind::Rnn, t, 1);
  cfg.alpha = 0.0;
  const auto rc = distill(c, t, ds, cfg);
  CHECK(rc.rep_loss.empty());
  CHECK(rc.updates == 2 * ds.subset(Split::Train).size());
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(distill(c, t, ds, cfg), ConfigError);
}

TEST_CASE("per-epoch alternation runs both passes") {
  DatasetConfig dc;
  dc.size = 20;
  dc.max_len = 6;
  const auto ds = generate_dataset(builtin_language("mod2"), dc);
  const auto t = small_teacher(3);
  DistillConfig cfg;
  cfg.epochs = 1;
  cfg.alternation = Alternation::PerEpoch;
  auto a = build_dcsa(DcsaKind::Gru, t, 1);
  const auto r = distill(a, t, ds, cfg);
  CHECK(r.updates == 2 * ds.subset(Split::Train).size());
  auto b = build_dcsa(DcsaKind::Gru, t, 1);
  cfg.alternation = Alternation::PerExample;
  distill(b, t, ds, cfg);
  CHECK_FALSE(a.params == b.params);
}

TEST_CASE("alignment reduces the representation gap") {
  DatasetConfig dc;
  dc.size = 60;
  dc.max_len = 10;
  dc.seed = 3;
  const auto ds = generate_dataset(builtin_language("tomita7"), dc);
  const auto t = small_teacher(4);
  const auto targets = teacher_targets(t, ds.subset(Split::Train));
  DistillConfig cfg;
  cfg.epochs = 15;
  auto aligned = build_dcsa(DcsaKind::Rnn, t, 1), plain = build_dcsa(DcsaKind::Rnn, t, 1);
  distill(aligned, targets, cfg);
  cfg.alpha = 0.0;
  distill(plain, targets, cfg);
  const double a1 = rep_state_diff(aligned, targets, 1), p1 = rep_state_diff(plain, targets, 1);
  const double a2 = rep_state_diff(aligned, targets, 2), p2 = rep_state_diff(plain, targets, 2);
  CHECK(a1 < p1);
  CHECK(a2 < p2);
  CHECK(a2 <= a1);
  CHECK(p2 <= p1);
}

TEST_CASE("Diff_p is zero for a DCSA whose states echo the representation") {
  const auto t = small_teacher();
  const auto d = build_dcsa(DcsaKind::Rnn, t, 1);
  TeacherTargets targets;
  for (const char* w : {"", "01", "111"}) {
    targets.words.push_back(w);
    targets.symbols.push_back(encode_symbols(w, kBinary));
    targets.labels.push_back(0);
    targets.reps.push_back(dcsa_run_word(d, w).h);
  }
  CHECK(rep_state_diff(d, targets, 1) == 0.0);
  CHECK(rep_state_diff(d, targets, 2) == 0.0);
  CHECK_THROWS_AS(rep_state_diff(d, targets, 3), ConfigError);
  targets.reps[1][0] += 0.5;
  CHECK(rep_state_diff(d, targets, 1) == doctest::Approx(0.5 / 3));
}

TEST_CASE("model file round trip") {
  const auto t = small_teacher();
  for (auto kind : kKinds) {
    const auto d = build_dcsa(kind, t, 8);
    const auto path = std::filesystem::temp_directory_path() / "dfx_dcsa_test.json";
    save_dcsa(d, path);
    const auto back = load_dcsa(path);
    CHECK(back.kind == kind);
    CHECK(back.params == d.params);
    CHECK(back.source_transformer_hash == d.source_transformer_hash);
    std::filesystem::remove(path);
  }
  auto j = dcsa_to_json(build_dcsa(DcsaKind::Gru, t, 1));
  j["cell_kind"] = "rnn";
  CHECK_THROWS_AS(dcsa_from_json(j), FormatError);
}
