#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "intrinsic/metrics.hpp"
#include "intrinsic/verify.hpp"

using namespace intrinsic;
using testutil::TempDir;
using testutil::random_image;

TEST_CASE("scaled_mse absorbs a global brightness factor") {
  const Image gt = random_image(6, 6, 3, 31, 0.1f, 1.0f);
  Image pred = gt;
  for (float& v : pred.data) v *= 2.0f;
  REQUIRE(scaled_mse(pred, gt) == Catch::Approx(0.0).margin(1e-12));

  Image scaled = pred;
  for (float& v : scaled.data) v *= 7.5f;
  REQUIRE(scaled_mse(scaled, gt) == Catch::Approx(scaled_mse(pred, gt)).margin(1e-10));
}

TEST_CASE("scaled_mse of the zero predictor is the ground-truth energy") {
  const Image gt = random_image(5, 5, 3, 32, 0.0f, 1.0f);
  const Image zero(5, 5, 3, 0.0f);
  double energy = 0;
  for (float v : gt.data) energy += static_cast<double>(v) * v;
  energy /= static_cast<double>(gt.data.size());
  REQUIRE(scaled_mse(zero, gt) == Catch::Approx(energy).margin(1e-12));
}

TEST_CASE("scaled_mse on a hand-checked instance") {
  // pred=[1,2], gt=[2,2]: alpha = 6/5, error = ((1.2-2)^2 + (2.4-2)^2)/2 = 0.4.
  Image pred(1, 2, 1), gt(1, 2, 1);
  pred.at(0, 0, 0) = 1;
  pred.at(0, 1, 0) = 2;
  gt.at(0, 0, 0) = 2;
  gt.at(0, 1, 0) = 2;
  REQUIRE(scaled_mse(pred, gt) == Catch::Approx(0.4).margin(1e-9));
  REQUIRE(detail::scaled_mse_grid_oracle(pred, gt) == Catch::Approx(0.4).margin(1e-6));
}

TEST_CASE("scaled_mse agrees with the dense alpha-grid oracle") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Image pred = random_image(4, 5, 3, 100 + seed, 0.0f, 1.0f);
    const Image gt = random_image(4, 5, 3, 200 + seed, 0.0f, 1.0f);
    REQUIRE(scaled_mse(pred, gt) ==
            Catch::Approx(detail::scaled_mse_grid_oracle(pred, gt)).margin(1e-6));
  }
}

TEST_CASE("scaled_mse is zero only for positive multiples") {
  const Image gt = random_image(4, 4, 3, 33, 0.1f, 1.0f);
  Image near = gt;
  near.data[0] += 0.05f;
  REQUIRE(scaled_mse(near, gt) > 0.0);
  REQUIRE_THROWS_AS(scaled_mse(Image(3, 3, 3), Image(3, 4, 3)), DimensionError);
}

TEST_CASE("window anchors tile with a flush final window") {
  const auto rows = window_anchors(120, 20);
  REQUIRE(rows.size() == 11);
  REQUIRE(rows.front() == 0);
  REQUIRE(rows.back() == 100);
  const auto cols = window_anchors(160, 20);
  REQUIRE(cols.size() == 15);
  REQUIRE(lmse_window_count(120, 160, 20) == 165);

  // Non-divisible extent: a flush anchor covers the tail.
  const auto odd = window_anchors(32, 20);
  REQUIRE(odd == std::vector<int>{0, 10, 12});
}

TEST_CASE("every pixel is covered by at least one LMSE window") {
  for (int extent : {20, 27, 32, 45}) {
    std::vector<int> covered(extent, 0);
    for (int a : window_anchors(extent, 20))
      for (int i = a; i < a + 20; ++i) covered[static_cast<std::size_t>(i)] = 1;
    for (int c : covered) REQUIRE(c == 1);
  }
}

TEST_CASE("lmse is zero for perfect predictions and one for the zero predictor") {
  const Image gt = random_image(24, 28, 3, 34, 0.1f, 1.0f);
  const WindowSpec w{10};
  REQUIRE(lmse(gt, gt, w) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(lmse(Image(24, 28, 3, 0.0f), gt, w) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("lmse stays within [0,1]") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Image pred = random_image(22, 24, 3, 300 + seed, 0.0f, 2.0f);
    const Image gt = random_image(22, 24, 3, 400 + seed, 0.0f, 1.0f);
    const double v = lmse(pred, gt, WindowSpec{10});
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0 + 1e-12);
  }
}

TEST_CASE("lmse input validation") {
  REQUIRE_THROWS_AS(lmse(Image(8, 8, 3), Image(8, 8, 3), WindowSpec{3}), DomainError);
  REQUIRE_THROWS_AS(lmse(Image(8, 8, 3), Image(8, 8, 3), WindowSpec{10}), DomainError);
  REQUIRE_THROWS_AS(lmse(Image(32, 32, 3), Image(32, 32, 1), WindowSpec{20}),
                    DimensionError);
}

TEST_CASE("ssim of identical and constant images") {
  const Image x = random_image(16, 16, 3, 35);
  REQUIRE(ssim(x, x) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(ssim(Image(12, 12, 1, 0.6f), Image(12, 12, 1, 0.6f)) ==
          Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("ssim of an inverted binary image is low") {
  Image gt(16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) gt.at(y, x, 0) = (x < 8) ? 0.0f : 1.0f;
  Image pred(16, 16, 1);
  for (std::size_t i = 0; i < gt.data.size(); ++i) pred.data[i] = 1.0f - gt.data[i];
  REQUIRE(ssim(pred, gt) < 0.5);
}

TEST_CASE("dssim is the affine map of ssim") {
  const Image a = random_image(14, 14, 3, 36);
  const Image b = random_image(14, 14, 3, 37);
  REQUIRE(dssim(a, b) == Catch::Approx((1.0 - ssim(a, b)) / 2.0).margin(1e-12));
  REQUIRE(dssim(a, a) == 0.0);
  const double d = dssim(a, b);
  REQUIRE(d >= 0.0);
  REQUIRE(d <= 1.0);
}

TEST_CASE("dssim is symmetric") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image a = random_image(13, 15, 3, 500 + seed, 0.0f, 1.0f);
    const Image b = random_image(13, 15, 3, 600 + seed, 0.0f, 2.0f);
    REQUIRE(dssim(a, b) == Catch::Approx(dssim(b, a)).margin(1e-12));
  }
}

TEST_CASE("evaluate_set aggregates per-image metrics") {
  const WindowSpec w{10};
  std::vector<IntrinsicSet> gts;
  for (std::uint64_t i = 0; i < 2; ++i) {
    IntrinsicSet s;
    s.reflectance = random_image(24, 24, 3, 700 + i, 0.1f, 1.0f);
    s.shading = random_image(24, 24, 3, 800 + i, 0.1f, 2.0f);
    gts.push_back(std::move(s));
  }

  SECTION("perfect predictions score zero") {
    const MetricReport rep = evaluate_set(gts, gts, w);
    REQUIRE(rep.mse_albedo == 0.0);
    REQUIRE(rep.lmse_mean == 0.0);
    REQUIRE(rep.dssim_shading == 0.0);
    REQUIRE(rep.image_count == 2);
  }

  SECTION("single pair report equals the individual metric calls") {
    std::vector<IntrinsicSet> pred{gts[1]}, gt{gts[0]};
    const MetricReport rep = evaluate_set(pred, gt, w);
    REQUIRE(rep.mse_albedo ==
            Catch::Approx(scaled_mse(gts[1].reflectance, gts[0].reflectance)));
    REQUIRE(rep.lmse_shading ==
            Catch::Approx(lmse(gts[1].shading, gts[0].shading, w)));
    REQUIRE(rep.dssim_albedo ==
            Catch::Approx(dssim(gts[1].reflectance, gts[0].reflectance)));
  }

  SECTION("two-image report is the arithmetic mean of individual scores") {
    std::vector<IntrinsicSet> preds;
    for (std::uint64_t i = 0; i < 2; ++i) {
      IntrinsicSet s;
      s.reflectance = random_image(24, 24, 3, 900 + i, 0.1f, 1.0f);
      s.shading = random_image(24, 24, 3, 950 + i, 0.1f, 2.0f);
      preds.push_back(std::move(s));
    }
    const double m0 = scaled_mse(preds[0].reflectance, gts[0].reflectance);
    const double m1 = scaled_mse(preds[1].reflectance, gts[1].reflectance);
    const MetricReport rep = evaluate_set(preds, gts, w);
    REQUIRE(rep.mse_albedo == Catch::Approx((m0 + m1) / 2.0));
    REQUIRE(rep.lmse_mean ==
            Catch::Approx((rep.lmse_albedo + rep.lmse_shading) / 2.0));
  }

  SECTION("length mismatch is a usage error") {
    std::vector<IntrinsicSet> one{gts[0]};
    REQUIRE_THROWS_AS(evaluate_set(one, gts, w), UsageError);
  }
}

TEST_CASE("CSV report carries one row per image plus MEAN") {
  TempDir tmp("csv");
  std::vector<IntrinsicSet> gts(1);
  gts[0].reflectance = random_image(24, 24, 3, 41, 0.1f, 1.0f);
  gts[0].shading = random_image(24, 24, 3, 42, 0.1f, 1.0f);
  const MetricReport rep = evaluate_set(gts, gts, WindowSpec{10}, false, {"probe"});
  write_metric_csv(tmp.path() / "m.csv", rep);

  std::ifstream f(tmp.path() / "m.csv");
  std::string header, row, mean;
  std::getline(f, header);
  std::getline(f, row);
  std::getline(f, mean);
  REQUIRE(header == "image,mse_r,mse_s,lmse_r,lmse_s,dssim_r,dssim_s");
  REQUIRE(row.substr(0, 6) == "probe,");
  REQUIRE(mean.substr(0, 5) == "MEAN,");
}
