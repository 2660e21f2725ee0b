#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "sl/embed.hpp"
#include "sl/rng.hpp"

using namespace sl;

namespace {

// three well-separated 10-d gaussian blobs, 20 points each
embed::EmbeddingSet three_clusters(uint64_t seed) {
  Rng rng(seed);
  embed::EmbeddingSet set;
  const double centers[3][2] = {{0, 0}, {40, 0}, {0, 40}};
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 20; ++k) {
      std::vector<double> v(10);
      for (size_t d = 0; d < v.size(); ++d) {
        double base = d < 2 ? centers[c][d] : 0.0;
        v[d] = base + rng.normal();
      }
      set.vectors.push_back(std::move(v));
      set.labels.push_back(static_cast<Expression>(c));
      set.intensities.push_back(c == 2 ? std::nullopt
                                       : std::optional<Intensity>(Intensity::Medium));
      set.ids.push_back("p" + std::to_string(set.ids.size()));
    }
  return set;
}

double entropy_bits(const double* row, size_t n) {
  double h = 0.0;
  for (size_t j = 0; j < n; ++j)
    if (row[j] > 0) h -= row[j] * std::log2(row[j]);
  return h;
}

// fraction of points whose nearest 2-d neighbor shares their label
double neighbor_purity(const embed::Projection& proj, const embed::EmbeddingSet& set) {
  const size_t n = proj.points.size();
  size_t pure = 0;
  for (size_t i = 0; i < n; ++i) {
    double best = 1e300;
    size_t arg = i;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double dx = proj.points[i][0] - proj.points[j][0];
      double dy = proj.points[i][1] - proj.points[j][1];
      double d = dx * dx + dy * dy;
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    if (set.labels[arg] == set.labels[i]) ++pure;
  }
  return static_cast<double>(pure) / static_cast<double>(n);
}

double silhouette(const embed::Projection& proj, const embed::EmbeddingSet& set) {
  const size_t n = proj.points.size();
  auto dist = [&](size_t i, size_t j) {
    double dx = proj.points[i][0] - proj.points[j][0];
    double dy = proj.points[i][1] - proj.points[j][1];
    return std::sqrt(dx * dx + dy * dy);
  };
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double sum_own = 0.0;
    long n_own = 0;
    double sum_other[3] = {0, 0, 0};
    long n_other[3] = {0, 0, 0};
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      int c = static_cast<int>(set.labels[j]);
      if (set.labels[j] == set.labels[i]) {
        sum_own += dist(i, j);
        ++n_own;
      } else {
        sum_other[c] += dist(i, j);
        ++n_other[c];
      }
    }
    double a = sum_own / static_cast<double>(n_own);
    double b = 1e300;
    for (int c = 0; c < 3; ++c)
      if (n_other[c] > 0) b = std::min(b, sum_other[c] / static_cast<double>(n_other[c]));
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("kl divergence closed form") {
  CHECK(embed::kl_divergence({1.0, 0.0}, {0.5, 0.5}) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(embed::kl_divergence({0.5, 0.5}, {0.5, 0.5}) == Catch::Approx(0.0).margin(1e-15));
  // q floored at 1e-12 instead of dividing by zero
  CHECK(embed::kl_divergence({1.0}, {0.0}) == Catch::Approx(std::log(1e12)).epsilon(1e-9));
  CHECK_THROWS_AS(embed::kl_divergence({1.0}, {0.5, 0.5}), Error);
}

TEST_CASE("conditional affinities hit the entropy target") {
  auto set = three_clusters(21);
  const double perplexity = 12.0;
  auto cond = embed::conditional_affinities(set.vectors, perplexity);
  const size_t n = set.size();
  const double target = std::log2(perplexity);
  for (size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (size_t j = 0; j < n; ++j) row_sum += cond[i * n + j];
    CHECK(row_sum == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(cond[i * n + i] == 0.0);
    CHECK(std::abs(entropy_bits(&cond[i * n], n) - target) < 1e-5);
  }
}

TEST_CASE("pairwise affinities are symmetric and normalized") {
  auto set = three_clusters(22);
  auto p = embed::pairwise_affinities(set.vectors, 10.0);
  const size_t n = set.size();
  double total = 0.0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      total += p[i * n + j];
      CHECK(p[i * n + j] == Catch::Approx(p[j * n + i]).margin(1e-15));
    }
  CHECK(total == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("degenerate distances are rejected") {
  std::vector<std::vector<double>> same(5, std::vector<double>(3, 1.0));
  CHECK_THROWS_AS(embed::conditional_affinities(same, 2.0), Error);
}

TEST_CASE("tsne recovers three clusters") {
  auto set = three_clusters(7);
  embed::TsneConfig cfg;
  cfg.perplexity = 15.0;
  cfg.seed = 3;
  auto proj = embed::tsne(set, cfg);
  REQUIRE(proj.points.size() == set.size());
  CHECK(neighbor_purity(proj, set) >= 0.90);
  CHECK(silhouette(proj, set) > 0.5);
  CHECK(proj.kl_final <= proj.kl_initial);
}

TEST_CASE("tsne separates two points") {
  embed::EmbeddingSet set;
  set.vectors = {{0.0, 0.0}, {1.0, 0.0}};
  set.labels = {Expression::Laugh, Expression::Smile};
  set.intensities = {Intensity::High, Intensity::Low};
  set.ids = {"a", "b"};
  embed::TsneConfig cfg;
  cfg.perplexity = 1.5;
  cfg.seed = 5;
  auto proj = embed::tsne(set, cfg);
  double dx = proj.points[0][0] - proj.points[1][0];
  double dy = proj.points[0][1] - proj.points[1][1];
  double d = std::sqrt(dx * dx + dy * dy);
  CHECK(d > 1e-3);
  CHECK(std::isfinite(d));
  CHECK(proj.kl_final <= proj.kl_initial);
}

TEST_CASE("tsne is deterministic in the seed") {
  auto set = three_clusters(9);
  embed::TsneConfig cfg;
  cfg.perplexity = 10.0;
  cfg.iterations = 300;
  cfg.seed = 11;
  auto a = embed::tsne(set, cfg);
  auto b = embed::tsne(set, cfg);
  REQUIRE(a.points.size() == b.points.size());
  for (size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i][0] == b.points[i][0]);
    CHECK(a.points[i][1] == b.points[i][1]);
  }
  cfg.seed = 12;
  auto c = embed::tsne(set, cfg);
  bool same = true;
  for (size_t i = 0; i < a.points.size(); ++i)
    same = same && a.points[i][0] == c.points[i][0] && a.points[i][1] == c.points[i][1];
  CHECK_FALSE(same);
}

TEST_CASE("marker colors code label and intensity") {
  std::set<std::string> seen;
  seen.insert(embed::marker_color(Expression::Laugh, Intensity::High));
  seen.insert(embed::marker_color(Expression::Laugh, Intensity::Medium));
  seen.insert(embed::marker_color(Expression::Laugh, Intensity::Low));
  seen.insert(embed::marker_color(Expression::Smile, Intensity::High));
  seen.insert(embed::marker_color(Expression::Smile, Intensity::Medium));
  seen.insert(embed::marker_color(Expression::Smile, Intensity::Low));
  seen.insert(embed::marker_color(Expression::Smile, Intensity::Subtle));
  seen.insert(embed::marker_color(Expression::None, std::nullopt));
  CHECK(seen.size() == 8);
  for (const auto& c : seen) {
    REQUIRE(c.size() == 7);
    CHECK(c[0] == '#');
  }
}

TEST_CASE("projection and embedding exports") {
  auto set = three_clusters(13);
  embed::TsneConfig cfg;
  cfg.perplexity = 8.0;
  cfg.iterations = 250;
  cfg.seed = 2;
  auto proj = embed::tsne(set, cfg);

  auto csv = embed::projection_csv(proj, set);
  auto lines = split_on(csv, '\n');
  REQUIRE(lines[0] == "x,y,label,intensity");
  CHECK(lines.size() >= set.size() + 1);

  auto svg = embed::projection_svg(proj, set);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("circle") != std::string::npos);
  CHECK(svg.find(embed::marker_color(Expression::None, std::nullopt)) != std::string::npos);

  auto ecsv = embed::embeddings_csv(set);
  auto header = split_on(split_on(ecsv, '\n')[0], ',');
  REQUIRE(header.size() == 3 + set.vectors[0].size());
  CHECK(header[0] == "id");
  CHECK(header[3] == "d0");
}

TEST_CASE("embedding set validation") {
  embed::EmbeddingSet set;
  set.vectors = {{1.0}};
  CHECK_THROWS_AS(set.validate(), Error);
  set.vectors = {{1.0}, {std::nan("")}};
  CHECK_THROWS_AS(set.validate(), Error);
}
