#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "sl/corpus.hpp"

using namespace sl;
using corpus::Segment;
using corpus::Window;
using corpus::WindowSpec;

namespace {

Segment seg(const std::string& src, int64_t a, int64_t b, Expression e,
            std::optional<Intensity> i = std::nullopt) {
  Segment s;
  s.source_id = src;
  s.start_ms = a;
  s.end_ms = b;
  s.expression = e;
  s.intensity = i;
  return s;
}

}  // namespace

TEST_CASE("annotation lines map to segments") {
  std::string text =
      "source\tlabel\tstart_ms\tend_ms\tintensity\n"
      "fileA\tlaugh\t1000\t3500\thigh\n"
      "fileA\tsmile\t0\t900\tsubtle\n";
  auto segs = corpus::parse_annotations(text);
  REQUIRE(segs.size() == 2);
  // sorted by (source, start)
  CHECK(segs[0].start_ms == 0);
  CHECK(segs[0].expression == Expression::Smile);
  CHECK(segs[0].intensity == Intensity::Subtle);
  CHECK(segs[1].source_id == "fileA");
  CHECK(segs[1].start_ms == 1000);
  CHECK(segs[1].end_ms == 3500);
  CHECK(segs[1].expression == Expression::Laugh);
  CHECK(segs[1].intensity == Intensity::High);
}

TEST_CASE("annotation parse failures carry their code") {
  auto code_of = [](const std::string& body) {
    try {
      corpus::parse_annotations("source\tlabel\tstart_ms\tend_ms\tintensity\n" + body + "\n");
      return std::string("none");
    } catch (const Error& e) {
      return e.code();
    }
  };
  CHECK(code_of("fileA\tlaugh\t5000\t4000\tlow") == "InvertedSpan");
  CHECK(code_of("fileA\tlaugh\t5000\t5000\tlow") == "InvertedSpan");
  CHECK(code_of("fileA\tgrin\t0\t100\tlow") == "UnknownLabel");
  CHECK(code_of("fileA\tlaugh\t0\t100\tsubtle") == "IllegalIntensity");
  CHECK(code_of("fileA\tlaugh\t0\t100") == "MalformedLine");
  CHECK(code_of("fileA\tlaugh\tzero\t100\tlow") == "MalformedLine");
  CHECK(code_of("fileA\tlaugh\t0\t100\tlow\textra") == "MalformedLine");
  CHECK(code_of("fileA\tlaugh\t0\t100\t") == "IllegalIntensity");  // laugh needs an intensity
  CHECK_THROWS_AS(corpus::parse_annotations("bad header\nx"), Error);
}

TEST_CASE("parse then serialize round-trips") {
  std::vector<Segment> in = {
      seg("a", 0, 900, Expression::Smile, Intensity::Subtle),
      seg("a", 1000, 3500, Expression::Laugh, Intensity::High),
      seg("b", 50, 150, Expression::Smile, Intensity::Low),
  };
  auto text = corpus::serialize_annotations(in);
  auto out = corpus::parse_annotations(text);
  REQUIRE(out.size() == in.size());
  for (size_t i = 0; i < in.size(); ++i) {
    CHECK(out[i].source_id == in[i].source_id);
    CHECK(out[i].start_ms == in[i].start_ms);
    CHECK(out[i].end_ms == in[i].end_ms);
    CHECK(out[i].expression == in[i].expression);
    CHECK(out[i].intensity == in[i].intensity);
  }
}

TEST_CASE("gaps become None segments") {
  SECTION("complement of one interval") {
    auto nones = corpus::derive_none_segments(
        {seg("a", 1000, 2000, Expression::Laugh, Intensity::Low)}, 3000);
    REQUIRE(nones.size() == 2);
    CHECK(nones[0].start_ms == 0);
    CHECK(nones[0].end_ms == 1000);
    CHECK(nones[1].start_ms == 2000);
    CHECK(nones[1].end_ms == 3000);
    CHECK(nones[0].expression == Expression::None);
    CHECK_FALSE(nones[0].intensity.has_value());
  }
  SECTION("no annotations -> one full-length None") {
    auto nones = corpus::derive_none_segments({}, 5000);
    REQUIRE(nones.size() == 1);
    CHECK(nones[0].start_ms == 0);
    CHECK(nones[0].end_ms == 5000);
  }
  SECTION("perfect tiling -> empty") {
    auto nones = corpus::derive_none_segments(
        {seg("a", 0, 2000, Expression::Laugh, Intensity::Low),
         seg("a", 2000, 5000, Expression::Smile, Intensity::High)},
        5000);
    CHECK(nones.empty());
  }
  SECTION("overlap and foreign sources rejected") {
    CHECK_THROWS_AS(
        corpus::derive_none_segments({seg("a", 0, 2000, Expression::Laugh, Intensity::Low),
                                      seg("a", 1500, 3000, Expression::Smile, Intensity::Low)},
                                     5000),
        Error);
    CHECK_THROWS_AS(
        corpus::derive_none_segments({seg("a", 0, 2000, Expression::Laugh, Intensity::Low),
                                      seg("b", 3000, 4000, Expression::Smile, Intensity::Low)},
                                     5000),
        Error);
    CHECK_THROWS_AS(
        corpus::derive_none_segments({seg("a", 0, 6000, Expression::Laugh, Intensity::Low)}, 5000),
        Error);
  }
}

TEST_CASE("window extraction counts and offsets") {
  WindowSpec spec;
  REQUIRE(spec.duration_ms == 1220);
  REQUIRE(spec.overlap_ms == 400);
  REQUIRE(spec.hop_ms() == 820);

  SECTION("2860 ms -> windows at 0, 820, 1640") {
    auto w = corpus::extract_windows({seg("a", 0, 2860, Expression::Smile, Intensity::Low)}, spec);
    REQUIRE(w.size() == 3);
    CHECK(w[0].start_ms == 0);
    CHECK(w[1].start_ms == 820);
    CHECK(w[2].start_ms == 1640);
    for (const auto& win : w) {
      CHECK(win.span_ms == 1220);
      CHECK(win.label == Expression::Smile);
      CHECK(win.intensity == Intensity::Low);
      CHECK_FALSE(win.padded(spec));
    }
  }
  SECTION("exactly one duration -> one window") {
    auto w = corpus::extract_windows({seg("a", 500, 1720, Expression::Laugh, Intensity::High)}, spec);
    REQUIRE(w.size() == 1);
    CHECK(w[0].start_ms == 500);
    CHECK(w[0].span_ms == 1220);
  }
  SECTION("short segment -> one padded window") {
    auto w = corpus::extract_windows({seg("a", 100, 700, Expression::Laugh, Intensity::Low)}, spec);
    REQUIRE(w.size() == 1);
    CHECK(w[0].span_ms == 600);
    CHECK(w[0].padded(spec));
  }
  SECTION("count formula over random lengths") {
    Rng rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
      int64_t len = rng.randint(1, 30000);
      auto w = corpus::extract_windows({seg("a", 0, len, Expression::None)}, spec);
      int64_t expect = len >= 1220 ? (len - 1220) / 820 + 1 : 1;
      REQUIRE(static_cast<int64_t>(w.size()) == expect);
      for (size_t k = 0; k < w.size(); ++k) {
        CHECK(w[k].start_ms == static_cast<int64_t>(k) * 820);
        CHECK(w[k].start_ms + w[k].span_ms <= len);
      }
    }
  }
  SECTION("invalid specs rejected") {
    WindowSpec bad;
    bad.overlap_ms = 1220;
    CHECK_THROWS_AS(corpus::extract_windows({}, bad), Error);
    bad.overlap_ms = -1;
    CHECK_THROWS_AS(corpus::extract_windows({}, bad), Error);
  }
}

TEST_CASE("stratified split follows floor-then-remainder") {
  auto make = [](int n, Expression e) {
    std::vector<Window> w;
    for (int i = 0; i < n; ++i) {
      Window win;
      win.source_id = "s";
      win.start_ms = i * 1000;
      win.label = e;
      if (e == Expression::Laugh) win.intensity = Intensity::Low;
      if (e == Expression::Smile) win.intensity = Intensity::High;
      w.push_back(win);
    }
    return w;
  };

  SECTION("100 windows per class -> 70/15/15") {
    auto w = make(100, Expression::Laugh);
    auto sm = make(100, Expression::Smile);
    auto no = make(100, Expression::None);
    w.insert(w.end(), sm.begin(), sm.end());
    w.insert(w.end(), no.begin(), no.end());
    corpus::split_dataset(w, {0.70, 0.15, 0.15}, 9);
    std::map<corpus::Split, int> by_split;
    for (const auto& win : w)
      if (win.label == Expression::Laugh) ++by_split[win.split];
    CHECK(by_split[corpus::Split::Train] == 70);
    CHECK(by_split[corpus::Split::Val] == 15);
    CHECK(by_split[corpus::Split::Test] == 15);
  }
  SECTION("7 windows -> 4 train, 1 val, 2 test") {
    auto w = make(7, Expression::Laugh);
    auto sm = make(7, Expression::Smile);
    auto no = make(7, Expression::None);
    w.insert(w.end(), sm.begin(), sm.end());
    w.insert(w.end(), no.begin(), no.end());
    corpus::split_dataset(w, {0.70, 0.15, 0.15}, 9);
    std::map<corpus::Split, int> by_split;
    for (const auto& win : w)
      if (win.label == Expression::Smile) ++by_split[win.split];
    CHECK(by_split[corpus::Split::Train] == 4);
    CHECK(by_split[corpus::Split::Val] == 1);
    CHECK(by_split[corpus::Split::Test] == 2);
  }
  SECTION("deterministic and seed-sensitive") {
    auto w1 = make(40, Expression::Laugh);
    auto extra = make(40, Expression::Smile);
    auto no = make(40, Expression::None);
    w1.insert(w1.end(), extra.begin(), extra.end());
    w1.insert(w1.end(), no.begin(), no.end());
    auto w2 = w1;
    auto w3 = w1;
    corpus::split_dataset(w1, {0.70, 0.15, 0.15}, 5);
    corpus::split_dataset(w2, {0.70, 0.15, 0.15}, 5);
    corpus::split_dataset(w3, {0.70, 0.15, 0.15}, 6);
    bool same12 = true, same13 = true;
    for (size_t i = 0; i < w1.size(); ++i) {
      same12 = same12 && w1[i].split == w2[i].split;
      same13 = same13 && w1[i].split == w3[i].split;
    }
    CHECK(same12);
    CHECK_FALSE(same13);
  }
  SECTION("empty class and bad ratios rejected") {
    auto w = make(10, Expression::Laugh);
    CHECK_THROWS_AS(corpus::split_dataset(w, {0.70, 0.15, 0.15}, 1), Error);  // no smile/none
    auto full = make(5, Expression::Laugh);
    auto sm = make(5, Expression::Smile);
    auto no = make(5, Expression::None);
    full.insert(full.end(), sm.begin(), sm.end());
    full.insert(full.end(), no.begin(), no.end());
    CHECK_THROWS_AS(corpus::split_dataset(full, {0.5, 0.2, 0.2}, 1), Error);
  }
}

TEST_CASE("sampler weights invert class frequency") {
  SECTION("symmetric counts, equal weights") {
    corpus::ClassCounts c;
    c.laughs = c.smiles = c.none = 10;
    auto w = corpus::sampler_weights(c);
    CHECK(w[0] == Catch::Approx(1.0 / 3));
    CHECK(w[1] == Catch::Approx(1.0 / 3));
    CHECK(w[2] == Catch::Approx(1.0 / 3));
  }
  SECTION("published class counts give ~10.893:1 laugh:smile ratio") {
    corpus::ClassCounts c;
    c.laughs = 446;
    c.smiles = 4858;
    c.none = 3048;
    auto w = corpus::sampler_weights(c);
    CHECK(w[0] / w[1] == Catch::Approx(4858.0 / 446.0).epsilon(1e-12));
    CHECK(w[0] + w[1] + w[2] == Catch::Approx(1.0).epsilon(1e-12));
  }
  SECTION("zero count rejected") {
    corpus::ClassCounts c;
    c.laughs = 0;
    c.smiles = 5;
    c.none = 5;
    CHECK_THROWS_AS(corpus::sampler_weights(c), Error);
  }
}

TEST_CASE("weighted draws balance the classes") {
  corpus::ClassCounts counts;
  counts.laughs = 446;
  counts.smiles = 4858;
  counts.none = 3048;
  auto class_w = corpus::sampler_weights(counts);

  std::vector<Expression> label;
  std::vector<double> weights;
  auto add = [&](Expression e, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
      label.push_back(e);
      weights.push_back(class_w[static_cast<size_t>(e)]);
    }
  };
  add(Expression::Laugh, counts.laughs);
  add(Expression::Smile, counts.smiles);
  add(Expression::None, counts.none);

  Rng rng(2024);
  std::array<int64_t, 3> hits{};
  const int64_t draws = 30000;
  for (int64_t at = 0; at < draws; at += 16) {
    for (size_t idx : corpus::sample_batch(rng, weights, 16))
      ++hits[static_cast<size_t>(label[idx])];
  }
  double chi2 = 0.0;
  for (int c = 0; c < 3; ++c) {
    double freq = static_cast<double>(hits[static_cast<size_t>(c)]) / static_cast<double>(draws);
    CHECK(std::abs(freq - 1.0 / 3) < 0.03);
    double expect = static_cast<double>(draws) / 3.0;
    double diff = static_cast<double>(hits[static_cast<size_t>(c)]) - expect;
    chi2 += diff * diff / expect;
  }
  CHECK(chi2 < 9.21);  // chi-square df=2 critical value at alpha = 0.01
}

TEST_CASE("degenerate sampling pools") {
  Rng rng(1);
  SECTION("single window repeats") {
    auto idx = corpus::sample_batch(rng, {1.0}, 16);
    REQUIRE(idx.size() == 16);
    for (size_t i : idx) CHECK(i == 0);
  }
  SECTION("zero-mass entries never drawn") {
    auto idx = corpus::sample_batch(rng, {1.0, 0.0, 0.0}, 2000);
    for (size_t i : idx) CHECK(i == 0);
  }
  SECTION("identical seed, identical sequence") {
    Rng a(42), b(42);
    auto ia = corpus::sample_batch(a, {0.2, 0.5, 0.3}, 64);
    auto ib = corpus::sample_batch(b, {0.2, 0.5, 0.3}, 64);
    CHECK(ia == ib);
  }
}

TEST_CASE("manifest round-trips windows") {
  std::vector<Window> w;
  Window a;
  a.source_id = "src0";
  a.start_ms = 820;
  a.span_ms = 1220;
  a.label = Expression::Laugh;
  a.intensity = Intensity::Medium;
  a.split = corpus::Split::Train;
  Window b;
  b.source_id = "src1";
  b.start_ms = 0;
  b.span_ms = 600;
  b.label = Expression::None;
  b.split = corpus::Split::Test;
  w = {a, b};
  auto text = corpus::serialize_manifest(w);
  auto rows = corpus::parse_manifest(text);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].window_id == "src0:820");
  CHECK(rows[0].label == Expression::Laugh);
  CHECK(rows[0].intensity == Intensity::Medium);
  CHECK(rows[0].split == corpus::Split::Train);
  CHECK(rows[1].window_id == "src1:0");
  CHECK_FALSE(rows[1].intensity.has_value());
  CHECK(rows[1].split == corpus::Split::Test);
  CHECK_THROWS_AS(corpus::parse_manifest("wrong\nrows"), Error);
}

TEST_CASE("intensity legality is enforced at the type level") {
  CHECK_THROWS_AS(check_intensity_legal(Expression::Laugh, Intensity::Subtle, "t"), Error);
  CHECK_THROWS_AS(check_intensity_legal(Expression::None, Intensity::Low, "t"), Error);
  CHECK_THROWS_AS(check_intensity_legal(Expression::Smile, std::nullopt, "t"), Error);
  CHECK_NOTHROW(check_intensity_legal(Expression::Smile, Intensity::Subtle, "t"));
  CHECK_NOTHROW(check_intensity_legal(Expression::None, std::nullopt, "t"));
}
