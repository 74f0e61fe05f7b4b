#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mixda/metrics_eval.hpp"
#include "mixda/rng.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace mixda;
using testutil::code_of;

namespace {

WeightedConfusion from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  WeightedConfusion cm(rows.size());
  std::size_t g = 0;
  for (const auto& row : rows) {
    std::size_t p = 0;
    for (double v : row) cm.add(g, p++, v);
    ++g;
  }
  return cm;
}

struct Labels {
  std::vector<ClassIndex> gt, pred;
  std::vector<double> w;
};

Labels random_labels(rng::Stream& s, std::size_t n, std::size_t K) {
  Labels l;
  for (std::size_t i = 0; i < n; ++i) {
    l.gt.push_back(s.below(K));
    l.pred.push_back(s.uniform() < 0.6 ? l.gt.back() : s.below(K));
    l.w.push_back(s.uniform(0.1, 2.0));
  }
  return l;
}

}  // namespace

TEST_CASE("scores of a small matrix") {
  const WeightedConfusion cm = from_rows({{1, 1}, {0, 2}});
  CHECK(accuracy(cm) == 0.75);
  CHECK(balanced_accuracy(cm) == 0.75);
  CHECK(std::abs(mean_iou(cm) - 7.0 / 12.0) <= 1e-15);
  CHECK(std::abs(balanced_mean_iou(cm) - 7.0 / 12.0) <= 1e-15);

  const WeightedConfusion diag = from_rows({{3, 0, 0}, {0, 1, 0}, {0, 0, 0}});
  const Scores s = score_all(diag);
  CHECK(s.accuracy == 1.0);
  CHECK(s.balanced_accuracy == 1.0);
  CHECK(s.mean_iou == 1.0);
  CHECK(s.balanced_mean_iou == 1.0);

  // Class imbalance separates the plain and balanced scores.
  const WeightedConfusion skew = from_rows({{90, 0}, {10, 0}});
  CHECK(accuracy(skew) == 0.9);
  CHECK(balanced_accuracy(skew) == 0.5);
}

TEST_CASE("weighted confusion matches enumeration") {
  rng::Stream s(21);
  for (int t = 0; t < 50; ++t) {
    const std::size_t K = 2 + s.below(5);
    const Labels l = random_labels(s, 200, K);
    const WeightedConfusion cm = weighted_confusion(l.gt, l.pred, l.w, K);
    const auto want = oracle::confusion(l.gt, l.pred, l.w, K);
    for (std::size_t g = 0; g < K; ++g)
      for (std::size_t p = 0; p < K; ++p) CHECK(std::abs(cm.at(g, p) - want[g][p]) <= 1e-12);
  }
}

TEST_CASE("property: confusion is linear in the weights") {
  rng::Stream s(22);
  for (int t = 0; t < 50; ++t) {
    const std::size_t K = 2 + s.below(4);
    Labels l = random_labels(s, 100, K);
    std::vector<double> w2;
    for (std::size_t i = 0; i < l.w.size(); ++i) w2.push_back(s.uniform(0.0, 1.0));
    std::vector<double> sum(l.w.size());
    const double a = s.uniform(0.1, 3.0), b = s.uniform(0.1, 3.0);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = a * l.w[i] + b * w2[i];
    WeightedConfusion combo = weighted_confusion(l.gt, l.pred, l.w, K).scaled(a);
    combo += weighted_confusion(l.gt, l.pred, w2, K).scaled(b);
    const WeightedConfusion direct = weighted_confusion(l.gt, l.pred, sum, K);
    for (std::size_t i = 0; i < K * K; ++i) CHECK(std::abs(combo.counts()[i] - direct.counts()[i]) <= 1e-9);
  }
}

TEST_CASE("property: scores are invariant under uniform reweighting") {
  rng::Stream s(23);
  for (int t = 0; t < 100; ++t) {
    const std::size_t K = 2 + s.below(5);
    const Labels l = random_labels(s, 150, K);
    const WeightedConfusion cm = weighted_confusion(l.gt, l.pred, l.w, K);
    const Scores a = score_all(cm), b = score_all(cm.scaled(std::exp(s.uniform(-10, 10))));
    CHECK(std::abs(a.accuracy - b.accuracy) <= 1e-12);
    CHECK(std::abs(a.balanced_accuracy - b.balanced_accuracy) <= 1e-12);
    CHECK(std::abs(a.mean_iou - b.mean_iou) <= 1e-12);
    CHECK(std::abs(a.balanced_mean_iou - b.balanced_mean_iou) <= 1e-12);
  }
}

TEST_CASE("property: balanced accuracy is accuracy of the row-normalized matrix") {
  rng::Stream s(24);
  for (int t = 0; t < 100; ++t) {
    const std::size_t K = 2 + s.below(5);
    const Labels l = random_labels(s, 150, K);
    const WeightedConfusion cm = weighted_confusion(l.gt, l.pred, l.w, K);
    CHECK(std::abs(balanced_accuracy(cm) - accuracy(cm.row_normalized())) <= 1e-12);
    for (double v : cm.counts()) CHECK(v >= 0.0);
    const Scores sc = score_all(cm);
    for (double v : {sc.accuracy, sc.balanced_accuracy, sc.mean_iou, sc.balanced_mean_iou}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("confusion errors") {
  const std::vector<ClassIndex> a{0, 1}, b{1};
  const std::vector<double> w2{1, 1}, zero{0, 0};
  CHECK(code_of([&] { weighted_confusion(a, b, w2, 2); }) == Errc::LengthMismatch);
  CHECK(code_of([&] { weighted_confusion(a, a, zero, 2); }) == Errc::AllZeroWeights);
  CHECK(code_of([&] { weighted_confusion(a, a, w2, 1); }) == Errc::InvalidParam);
  CHECK(code_of([&] { weighted_confusion(a, a, std::vector<double>{1, -1}, 2); }) == Errc::InvalidParam);
  CHECK(code_of([] { accuracy(WeightedConfusion(3)); }) == Errc::EmptyMatrix);
  CHECK(code_of([] { mean_iou(WeightedConfusion(3)); }) == Errc::EmptyMatrix);
  WeightedConfusion two(2);
  CHECK(code_of([&] { two += WeightedConfusion(3); }) == Errc::DimensionMismatch);
}

TEST_CASE("report serialization") {
  EvaluationReport r;
  r.config = {{"seed", 3}};
  r.rows.push_back({"ours", {0.25, 0.75}, Scores{0.5, 0.25, 0.125, 1.0}});
  r.rows.push_back({"linear_combination", {1.0, 0.0}, Scores{1.0, 1.0, 1.0, 1.0}});

  const nlohmann::json j = r.to_json();
  CHECK(j["schema_version"] == 1);
  CHECK(j["config"]["seed"] == 3);
  REQUIRE(j["rows"].size() == 2);
  CHECK(j["rows"][0]["method"] == "ours");
  CHECK(j["rows"][0]["lambda"] == nlohmann::json::array({0.25, 0.75}));
  CHECK(j["rows"][0]["balanced_mean_iou"] == 1.0);
  for (const char* key : {"accuracy", "balanced_accuracy", "mean_iou", "balanced_mean_iou"})
    CHECK(j["rows"][1].contains(key));

  std::istringstream csv(r.to_csv());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "method,lambda,accuracy,balanced_accuracy,mean_iou,balanced_mean_iou");
  std::getline(csv, line);
  CHECK(line == "ours,0.25;0.75,0.5,0.25,0.125,1");
  std::getline(csv, line);
  CHECK(line == "linear_combination,1;0,1,1,1,1");
}

TEST_CASE("reliability bins") {
  SUBCASE("constant posterior fills a single bin") {
    const std::vector<ProbVec> ps(10, ProbVec{1.0, 0.0});
    const std::vector<ClassIndex> gt(10, 0);
    const CalibrationCurve c = reliability_bins(ps, gt, 0, 10);
    std::size_t occupied = 0;
    for (const auto& b : c.bins) occupied += b.count > 0;
    CHECK(occupied == 1);
    CHECK(c.bins[9].count == 10);
    CHECK(c.bins[9].mean_predicted == 1.0);
    CHECK(c.bins[9].frequency == 1.0);
    CHECK(check_reliability(c).pass);
  }
  SUBCASE("frequency and mean per bin") {
    const std::vector<ProbVec> ps{ProbVec{0.3, 0.7}, ProbVec{0.3, 0.7}, ProbVec{0.34, 0.66}, ProbVec{0.9, 0.1}};
    const std::vector<ClassIndex> gt{0, 1, 0, 0};
    const CalibrationCurve c = reliability_bins(ps, gt, 0, 5);
    CHECK(c.bins[1].count == 3);
    CHECK(std::abs(c.bins[1].mean_predicted - (0.3 + 0.3 + 0.34) / 3) <= 1e-15);
    CHECK(std::abs(c.bins[1].frequency - 2.0 / 3.0) <= 1e-15);
    CHECK(c.bins[4].count == 1);
    CHECK(c.bins[1].lower == 0.2);
    CHECK(c.bins[4].upper == 1.0);
  }
  SUBCASE("weighted samples") {
    const std::vector<ProbVec> ps{ProbVec{0.5, 0.5}, ProbVec{0.5, 0.5}};
    const std::vector<ClassIndex> gt{0, 1};
    const std::vector<double> w{3, 1};
    const CalibrationCurve c = reliability_bins(ps, gt, 0, 2, w);
    CHECK(c.bins[1].frequency == 0.75);
    CHECK(c.bins[1].weight == 4.0);
  }
  SUBCASE("calibrated samples pass, overconfident ones fail") {
    rng::Stream s(25);
    std::vector<ProbVec> ps;
    std::vector<ClassIndex> gt, overconfident_gt;
    for (int i = 0; i < 20000; ++i) {
      const double p = s.uniform();
      ps.push_back(normalize(std::vector<double>{p, 1 - p}));
      gt.push_back(s.uniform() < p ? 0 : 1);
      overconfident_gt.push_back(s.uniform() < 0.5 + 0.5 * (p - 0.5) ? 0 : 1);
    }
    CHECK(check_reliability(reliability_bins(ps, gt, 0, 10), simultaneous_z(10)).pass);
    CHECK_FALSE(check_reliability(reliability_bins(ps, overconfident_gt, 0, 10), simultaneous_z(10)).pass);
  }
  const std::vector<ProbVec> one{ProbVec{1.0}};
  const std::vector<ClassIndex> gt{0};
  CHECK(code_of([&] { reliability_bins(one, gt, 0, 1); }) == Errc::InvalidParam);
  CHECK(code_of([&] { reliability_bins({}, {}, 0, 10); }) == Errc::EmptyStream);
  CHECK(code_of([&] { reliability_bins(one, std::vector<ClassIndex>{0, 0}, 0, 10); }) == Errc::LengthMismatch);
  CHECK(code_of([&] { reliability_bins(one, gt, 1, 10); }) == Errc::InvalidParam);
}

TEST_CASE("simultaneous z") {
  CHECK(std::abs(simultaneous_z(1) - kZ99) <= 1e-9);
  CHECK(std::abs(simultaneous_z(1, 0.95) - 1.959963984540054) <= 1e-9);
  CHECK(simultaneous_z(30) > simultaneous_z(10));
  // Bonferroni over 10 tests at 99% is the 99.9% two-sided quantile.
  CHECK(std::abs(simultaneous_z(10) - 3.2905267314919255) <= 1e-9);
  CHECK(code_of([] { simultaneous_z(0); }) == Errc::InvalidParam);
  CHECK(code_of([] { simultaneous_z(3, 1.0); }) == Errc::InvalidParam);
}

TEST_CASE("prior consistency") {
  const std::vector<ProbVec> ps{ProbVec{0.2, 0.8}, ProbVec{0.4, 0.6}};
  const PriorConsistency pc = posterior_prior_consistency(ps, ProbVec{0.5, 0.5});
  CHECK(pc.count == 2);
  CHECK(std::abs(pc.mean_posterior[0] - 0.3) <= 1e-15);
  CHECK(std::abs(pc.deltas[0] + 0.2) <= 1e-15);
  CHECK(std::abs(pc.max_abs_delta - 0.2) <= 1e-15);
  CHECK_FALSE(within_multinomial_tolerance(pc, ProbVec{0.5, 0.5}, 0.5));
  CHECK(within_multinomial_tolerance(posterior_prior_consistency(ps, ProbVec{0.3, 0.7}), ProbVec{0.3, 0.7}, 4));
  CHECK(code_of([] { posterior_prior_consistency({}, ProbVec{1.0}); }) == Errc::EmptyStream);
  CHECK(code_of([&] { posterior_prior_consistency(ps, ProbVec::uniform(3)); }) == Errc::DimensionMismatch);
}
