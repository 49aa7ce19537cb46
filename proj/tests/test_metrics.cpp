// Copyright 2026 The dodloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dodloc/error.hpp"
#include "dodloc/metrics.hpp"
#include "dodloc/rng.hpp"

namespace dodloc {
namespace {

namespace fs = std::filesystem;

std::vector<double> one_hot(int n, int bin, double v = 1.0) {
  std::vector<double> h(static_cast<std::size_t>(n), 0.0);
  h[static_cast<std::size_t>(bin)] = v;
  return h;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(PerImage, Examples) {
  const auto gt = one_hot(50, 5);
  const auto same = per_image_errors(gt, gt);
  for (double e : same.e) EXPECT_EQ(e, 0.0);
  EXPECT_EQ(same.T, 0.0);

  const auto shifted = per_image_errors(one_hot(50, 6), gt);
  EXPECT_EQ(shifted.e[5], -1.0);
  EXPECT_EQ(shifted.e[6], 1.0);
  EXPECT_EQ(shifted.T, 0.0);

  const auto missed = per_image_errors(std::vector<double>(50, 0.0), gt);
  EXPECT_EQ(missed.T, 1.0);
  EXPECT_THROW(per_image_errors(gt, std::vector<double>(50, 0.0)), DataError);
  EXPECT_THROW(per_image_errors(one_hot(40, 1), gt), DataError);
}

TEST(PerImage, ClampsNegativePredictionsAndSumsCells) {
  LabelGrid pred({2, 1}, 4), gt({2, 1}, 4);
  pred.cell(0)[1] = -0.5;
  pred.cell(1)[1] = 1.0;
  pred.cell(1)[2] = 0.25;
  gt.cell(0)[1] = 1.0;
  gt.cell(1)[3] = 1.0;
  const auto r = per_image_errors(pred, gt);
  EXPECT_EQ(r.e, (std::vector<double>{0.0, 0.0, 0.25, -1.0}));
  EXPECT_EQ(r.gt, (std::vector<double>{0.0, 1.0, 0.0, 1.0}));
  EXPECT_DOUBLE_EQ(r.T, 0.75 / 2.0);
}

TEST(Aggregate, PerfectPredictions) {
  std::vector<ImageErrors> imgs;
  for (int b = 0; b < 20; ++b) imgs.push_back(per_image_errors(one_hot(50, b), one_hot(50, b)));
  const auto r = aggregate(imgs);
  EXPECT_EQ(r.T_bar, 0.0);
  EXPECT_EQ(r.E_bar, 0.0);
  EXPECT_EQ(r.E_bar_prime, 0.0);
  EXPECT_EQ(r.n_images, 20);
}

TEST(Aggregate, WindowArithmetic) {
  // One image with 10 targets per bin and error 1 per bin in [2, 11] gives e_bar = 0.1 there.
  std::vector<double> gt(50, 0.0), pred(50, 0.0);
  for (int d = 2; d <= 11; ++d) {
    gt[d] = 10.0;
    pred[d] = (d % 2 == 0) ? 11.0 : 9.0;
  }
  const std::vector<ImageErrors> imgs{per_image_errors(pred, gt)};
  const auto r = aggregate(imgs);
  for (int d = 2; d <= 11; ++d) EXPECT_DOUBLE_EQ(r.e_bar[d], 0.1);
  EXPECT_NEAR(r.E_bar_prime, 1.0, 1e-12);
  EXPECT_NEAR(r.E_bar, 1.0, 1e-12);
  const auto narrow = aggregate(imgs, 1.0, BinWindow{2, 3});
  EXPECT_NEAR(narrow.E_bar_prime, 0.2, 1e-12);
}

TEST(Aggregate, MeanOfIdenticalImages) {
  std::vector<double> gt(50, 0.0), pred(50, 0.0);
  gt[4] = 3;
  gt[9] = 1;
  pred[4] = 2;
  const auto one = per_image_errors(pred, gt);
  const std::vector<ImageErrors> imgs(7, one);
  EXPECT_DOUBLE_EQ(aggregate(imgs).T_bar, one.T);
  EXPECT_DOUBLE_EQ(one.T, 0.5);
}

TEST(Aggregate, SentinelForBinsWithoutMass) {
  std::vector<double> gt = one_hot(50, 3), pred = one_hot(50, 30);
  const std::vector<ImageErrors> imgs{per_image_errors(pred, gt)};
  const auto r = aggregate(imgs);
  EXPECT_TRUE(std::isnan(r.e_bar[30]));
  EXPECT_EQ(r.e_bar[3], 1.0);
  EXPECT_EQ(r.e_bar[10], 0.0);
  EXPECT_EQ(r.E_bar, 1.0);
  EXPECT_THROW(aggregate(std::vector<ImageErrors>{}), DataError);
}

std::vector<ImageErrors> random_images(Rng& rng, int n) {
  std::vector<ImageErrors> out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> gt(50, 0.0), pred(50, 0.0);
    const int k = 1 + static_cast<int>(rng.uniform_int(0, 6));
    for (int t = 0; t < k; ++t) gt[rng.uniform_int(0, 20)] += 1.0;
    for (double& p : pred) p = rng.bernoulli(0.3) ? rng.uniform(-0.2, 1.5) : 0.0;
    out.push_back(per_image_errors(pred, gt));
  }
  return out;
}

TEST(Aggregate, DuplicationInvariance) {
  Rng rng(12);
  const auto imgs = random_images(rng, 40);
  auto twice = imgs;
  twice.insert(twice.end(), imgs.begin(), imgs.end());
  const auto a = aggregate(imgs), b = aggregate(twice);
  for (int d = 0; d < 50; ++d) {
    if (std::isnan(a.e_bar[d])) {
      EXPECT_TRUE(std::isnan(b.e_bar[d]));
    } else {
      EXPECT_NEAR(a.e_bar[d], b.e_bar[d], 1e-12);
    }
  }
  EXPECT_NEAR(a.T_bar, b.T_bar, 1e-12);
  EXPECT_NEAR(a.E_bar, b.E_bar, 1e-12);
  EXPECT_NEAR(a.E_bar_prime, b.E_bar_prime, 1e-12);
}

TEST(Aggregate, IntegralBoundedByAbsoluteErrors) {
  Rng rng(13);
  for (int t = 0; t < 50; ++t) {
    const auto imgs = random_images(rng, 10);
    double bound = 0;
    for (const auto& im : imgs) {
      double abs_e = 0, mass = 0;
      for (int d = 0; d < 50; ++d) {
        abs_e += std::abs(im.e[d]);
        mass += im.gt[d];
      }
      bound += abs_e / mass;
    }
    EXPECT_LE(aggregate(imgs).T_bar, bound / 10 + 1e-12);
  }
}

TEST(Aggregate, ShiftedAndDroppedTargets) {
  Rng rng(14);
  std::vector<ImageErrors> shift, drop;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> gt(50, 0.0), moved(50, 0.0), kept(50, 0.0);
    for (int t = 0; t < 10; ++t) {
      const int b = static_cast<int>(rng.uniform_int(0, 48));
      gt[b] += 1;
      moved[b + 1] += 1;
      if (t >= 2) kept[b] += 1;
    }
    shift.push_back(per_image_errors(moved, gt));
    drop.push_back(per_image_errors(kept, gt));
  }
  const auto s = aggregate(shift), d = aggregate(drop);
  EXPECT_EQ(s.T_bar, 0.0);
  EXPECT_GT(s.E_bar, 0.0);
  EXPECT_NEAR(d.T_bar, 0.2, 1e-12);
}

TEST(Evaluate, CellBreakdownAndShapes) {
  LabelGrid pred({2, 2}, 5), gt({2, 2}, 5);
  gt.cell(3)[2] = 1.0;
  pred.cell(0)[2] = 1.0;
  const std::vector<LabelGrid> p{pred}, g{gt};
  const auto ev = evaluate(p, g, 1.0, BinWindow{0, 4});
  EXPECT_EQ(ev.report.T_bar, 0.0);
  EXPECT_EQ(ev.report.E_bar, 0.0);  // summed cells agree
  ASSERT_EQ(ev.cell_e_bar.size(), 4u);
  EXPECT_EQ(ev.cell_e_bar[3][2], 1.0);
  EXPECT_TRUE(std::isnan(ev.cell_e_bar[0][2]));
  const std::vector<LabelGrid> none;
  EXPECT_THROW(evaluate(none, none, 1.0, BinWindow{0, 4}), DataError);
  EXPECT_THROW(evaluate(p, g), DataError);  // window past n_bin
  const std::vector<LabelGrid> two{pred, pred};
  EXPECT_THROW(evaluate(two, g, 1.0, BinWindow{0, 4}), DataError);
}

TEST(Report, RoundTripAndStableBytes) {
  Rng rng(15);
  auto r = aggregate(random_images(rng, 30));
  r.params = 66712;
  const auto dir = fs::temp_directory_path() / "dodloc_metrics_report";
  fs::remove_all(dir);
  fs::create_directories(dir);
  report_export(r, dir / "a.csv");
  report_export(r, dir / "b.csv");
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  const auto back = report_import(dir / "a.csv");
  ASSERT_EQ(back.n_bin(), 50);
  for (int d = 0; d < 50; ++d) {
    if (std::isnan(r.e_bar[d])) {
      EXPECT_TRUE(std::isnan(back.e_bar[d]));
    } else {
      EXPECT_NEAR(back.e_bar[d], r.e_bar[d], 1e-8 * std::max(1.0, r.e_bar[d]));
    }
    EXPECT_EQ(back.gt_mass[d], r.gt_mass[d]);
  }
  EXPECT_NEAR(back.E_bar, r.E_bar, 1e-8 * r.E_bar);
  EXPECT_EQ(back.n_images, 30);
  EXPECT_EQ(back.params, 66712);
  EXPECT_EQ(back.window.lo, 2);
  EXPECT_EQ(back.window.hi, 11);
  report_export(back, dir / "c.csv");
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "c.csv"));

  // The summary E_bar is the sum of the per-bin column as written.
  std::ifstream in(dir / "a.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "bin_index,bin_lo_m,bin_hi_m,e_bar,gt_mass");
  double col = 0;
  for (int d = 0; d < 50; ++d) {
    std::getline(in, line);
    std::stringstream ss(line);
    std::string f;
    for (int i = 0; i < 4; ++i) std::getline(ss, f, ',');
    if (f != "nan") col += std::stod(f);
  }
  EXPECT_NEAR(col, back.E_bar, 1e-7 * back.E_bar);

  std::ofstream(dir / "bad.csv") << slurp(dir / "a.csv") << "mystery,1\n";
  EXPECT_THROW(report_import(dir / "bad.csv"), DataError);
}

TEST(Quantile, TypeSeven) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile({7}, 0.75), 7.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 1.0), 5.0);
}

}  // namespace
}  // namespace dodloc
