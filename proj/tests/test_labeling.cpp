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
#include <vector>

#include <gtest/gtest.h>

#include "dodloc/error.hpp"
#include "dodloc/labeling.hpp"
#include "dodloc/rng.hpp"

namespace dodloc {
namespace {

const CameraIntrinsics kCam{300, 300, 150, 150, 300, 300};

UavPose at(const Vec3& p) {
  UavPose u;
  u.position = p;
  return u;
}

UavPose on_axis(double norm) { return at(Vec3(0, 0, norm)); }

LabelGrid one_cell(std::vector<double> values) {
  LabelGrid g(GridSpec{1, 1}, static_cast<int>(values.size()));
  std::copy(values.begin(), values.end(), g.values().begin());
  return g;
}

TEST(Spec, BinOf) {
  const LabelSpec s;
  EXPECT_EQ(s.d_max(), 49.0);
  EXPECT_EQ(s.bin_of(0.0), 0);
  EXPECT_EQ(s.bin_of(0.999), 0);
  EXPECT_EQ(s.bin_of(1.0), 1);
  EXPECT_EQ(s.bin_of(49.5), 49);
  EXPECT_EQ(s.bin_of(1e6), 49);
  LabelSpec coarse;
  coarse.delta_d = 2.5;
  coarse.n_bin = 4;
  EXPECT_EQ(coarse.bin_of(7.49), 2);
  EXPECT_EQ(coarse.bin_of(7.5), 3);
  EXPECT_EQ(coarse.bin_of(100), 3);
}

TEST(Spec, Validation) {
  LabelSpec s;
  s.k = 51;
  EXPECT_THROW(s.validate(), DataError);
  s = {};
  s.sigma = -1;
  EXPECT_THROW(s.validate(), DataError);
  s = {};
  s.delta_d = 0;
  EXPECT_THROW(s.validate(), DataError);
  s = {};
  s.n_bin = 0;
  EXPECT_THROW(s.validate(), DataError);
}

TEST(Mode, ParseRoundTrip) {
  for (auto m : {SmoothingMode::raw, SmoothingMode::partial, SmoothingMode::full})
    EXPECT_EQ(parse_smoothing_mode(to_string(m)), m);
  EXPECT_THROW(parse_smoothing_mode("smooth"), DataError);
}

TEST(Raw, EmptySceneIsZero) {
  const auto g = raw_histogram(Scene{}, kCam, GridSpec{3, 3}, LabelSpec{});
  EXPECT_EQ(g.size(), 450u);
  EXPECT_EQ(g.total(), 0.0);
}

TEST(Raw, FirstBinCoversZeroToOneMeter) {
  Scene s;
  s.uavs.push_back(on_axis(0.5));
  const auto g = raw_histogram(s, kCam, GridSpec{3, 3}, LabelSpec{});
  EXPECT_EQ(g.cell(1, 1)[0], 1.0);
  EXPECT_EQ(g.total(), 1.0);
}

TEST(Raw, ClampsFarTargetsIntoLastBin) {
  Scene s;
  for (double d : {1.2, 1.9, 55.0}) s.uavs.push_back(on_axis(d));
  const auto h_grid = raw_histogram(s, kCam, GridSpec{1, 1}, LabelSpec{});
  const auto h = h_grid.cell(0);
  EXPECT_EQ(h[1], 2.0);
  EXPECT_EQ(h[49], 1.0);
  EXPECT_EQ(h[0] + h[2] + h[48], 0.0);
}

TEST(Raw, DistanceIsNormNotDepth) {
  Scene s;
  s.uavs.push_back(at(Vec3(3.0, 0.0, 4.0)));  // depth 4, norm 5; u = 375 is outside
  s.uavs.push_back(at(Vec3(2.0, 0.0, 7.9)));     // depth 7.9, norm 8.15
  const auto h_grid = raw_histogram(s, kCam, GridSpec{1, 1}, LabelSpec{});
  const auto h = h_grid.cell(0);
  EXPECT_EQ(h[4] + h[5] + h[7], 0.0);
  EXPECT_EQ(h[8], 1.0);
}

TEST(Raw, ExcludesTargetsOutsideOrBehind) {
  Scene s;
  s.uavs.push_back(on_axis(-3));
  s.uavs.push_back(at(Vec3(10, 0, 5)));
  EXPECT_EQ(raw_histogram(s, kCam, GridSpec{3, 3}, LabelSpec{}).total(), 0.0);
}

// Independent binning: project by hand, cell by integer division, bin by floor of the norm.
LabelGrid brute_force(const Scene& s, const CameraIntrinsics& cam, int cols, int rows, const LabelSpec& spec) {
  LabelGrid g(GridSpec{cols, rows}, spec.n_bin);
  for (const auto& u : s.uavs) {
    const Vec3& p = u.position;
    if (p.z() <= 0) continue;
    const double px = cam.fx * p.x() / p.z() + cam.cx;
    const double py = cam.fy * p.y() / p.z() + cam.cy;
    if (px < 0 || py < 0 || px >= cam.width || py >= cam.height) continue;
    const int cw = cam.width / cols, ch = cam.height / rows;
    int col = static_cast<int>(px) / cw, row = static_cast<int>(py) / ch;
    if (col >= cols) col = cols - 1;
    if (row >= rows) row = rows - 1;
    const double r = std::sqrt(p.x() * p.x() + p.y() * p.y() + p.z() * p.z());
    int bin = static_cast<int>(r / spec.delta_d);
    if (bin > spec.n_bin - 1) bin = spec.n_bin - 1;
    g.values()[static_cast<std::size_t>((row * cols + col) * spec.n_bin + bin)] += 1.0;
  }
  return g;
}

TEST(Raw, AgreesWithBruteForceOnRandomScenes) {
  Rng rng(2024);
  const CameraIntrinsics cam{64, 64, 32, 32, 64, 64};
  for (int i = 0; i < 300; ++i) {
    Scene s;
    const int n = rng.uniform_int(0, 40);
    for (int j = 0; j < n; ++j) s.uavs.push_back(at(Vec3(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-5, 60))));
    for (auto [cols, rows] : {std::pair{1, 1}, std::pair{3, 3}, std::pair{2, 5}}) {
      EXPECT_EQ(raw_histogram(s, cam, GridSpec{cols, rows}, LabelSpec{}), brute_force(s, cam, cols, rows, LabelSpec{}));
    }
  }
}

TEST(Kernel, FrozenValues) {
  const auto k = gaussian_kernel(1.0);
  ASSERT_EQ(k.size(), 9u);
  const double expected[] = {0.00013383062461474175, 0.0044318616200312655, 0.05399112742070441,
                             0.24197144565660073,   0.39894346935609776,   0.24197144565660073,
                             0.05399112742070441,   0.0044318616200312655, 0.00013383062461474175};
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(k[i], expected[i], 1e-15);
  EXPECT_TRUE(gaussian_kernel(0.0).empty());
  EXPECT_EQ(gaussian_kernel(0.3).size(), 5u);
}

TEST(Smooth, SingleCountAtBinTen) {
  LabelSpec spec;
  spec.k = 3;
  std::vector<double> raw(50, 0.0);
  raw[10] = 1.0;
  const auto out_grid = smooth_labels(one_cell(raw), spec, SmoothingMode::partial);
  const auto out = out_grid.cell(0);
  // Discrete convolution with the kernel computed directly.
  double norm = 0.0;
  for (int j = -4; j <= 4; ++j) norm += std::exp(-0.5 * j * j);
  for (int b = 0; b < 50; ++b) {
    const int j = b - 10;
    const double want = std::abs(j) <= 4 ? std::exp(-0.5 * j * j) / norm : 0.0;
    EXPECT_NEAR(out[b], want, 1e-15) << b;
  }
  EXPECT_NEAR(out[10], 0.39894346935609776, 1e-15);
}

TEST(Smooth, BoundaryRenormalizesPerSource) {
  LabelSpec spec;
  std::vector<double> raw(50, 0.0);
  raw[1] = 2.0;
  const auto out_grid = smooth_labels(one_cell(raw), spec, SmoothingMode::full);
  const auto out = out_grid.cell(0);
  const double expected[] = {0.25702182639486376, 0.42375735221140753, 0.25702182639486376,
                             0.05734932128512788, 0.004707518958771252, 0.00014215475496584905};
  for (int b = 0; b < 6; ++b) EXPECT_NEAR(out[b], 2.0 * expected[b], 1e-15);
  EXPECT_EQ(out[6], 0.0);
}

TEST(Smooth, PartialKeepsClosestBins) {
  std::vector<double> raw(50, 0.0);
  raw[0] = 1.0;
  raw[4] = 2.0;
  const auto g = one_cell(raw);
  EXPECT_EQ(smooth_labels(g, LabelSpec{}, SmoothingMode::partial), g);
  EXPECT_NE(smooth_labels(g, LabelSpec{}, SmoothingMode::full), g);
}

TEST(Smooth, MassFromBinKMaySpillBelowK) {
  std::vector<double> raw(50, 0.0);
  raw[5] = 1.0;
  const auto out_grid = smooth_labels(one_cell(raw), LabelSpec{}, SmoothingMode::partial);
  const auto out = out_grid.cell(0);
  EXPECT_GT(out[4], 0.2);
  EXPECT_GT(out[1], 0.0);
}

TEST(Smooth, KEqualNBinIsIdentity) {
  Rng rng(1);
  std::vector<double> raw(50);
  for (double& v : raw) v = rng.uniform_int(0, 3);
  LabelSpec spec;
  spec.k = 50;
  EXPECT_EQ(smooth_labels(one_cell(raw), spec, SmoothingMode::partial), one_cell(raw));
}

TEST(Smooth, ZeroSigmaIsIdentity) {
  std::vector<double> raw(50, 0.0);
  raw[20] = 3.0;
  LabelSpec spec;
  spec.sigma = 0.0;
  EXPECT_EQ(smooth_labels(one_cell(raw), spec, SmoothingMode::full), one_cell(raw));
}

TEST(Smooth, RejectsNegativeInput) {
  std::vector<double> raw(50, 0.0);
  raw[3] = -1.0;
  EXPECT_THROW(smooth_labels(one_cell(raw), LabelSpec{}, SmoothingMode::full), DataError);
}

TEST(Smooth, ConservesMassPerCell) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    LabelSpec spec;
    spec.n_bin = rng.uniform_int(1, 60);
    spec.k = rng.uniform_int(0, spec.n_bin);
    spec.sigma = rng.uniform(0.0, 4.0);
    LabelGrid g(GridSpec{3, 2}, spec.n_bin);
    for (double& v : g.values()) v = rng.bernoulli(0.3) ? rng.uniform_int(1, 5) : 0.0;
    for (auto mode : {SmoothingMode::raw, SmoothingMode::partial, SmoothingMode::full}) {
      const auto out = smooth_labels(g, spec, mode);
      for (int c = 0; c < 6; ++c) {
        double a = 0, b = 0;
        for (double v : g.cell(c)) a += v;
        for (double v : out.cell(c)) {
          b += v;
          EXPECT_GE(v, 0.0);
        }
        EXPECT_NEAR(a, b, 1e-9);
      }
    }
  }
}

TEST(Smooth, UnimodalAroundSource) {
  LabelSpec spec;
  for (double sigma : {0.5, 1.0, 2.0, 3.0}) {
    spec.sigma = sigma;
    for (int src = 15; src < 35; ++src) {
      std::vector<double> raw(50, 0.0);
      raw[src] = 1.0;
      const auto out_grid = smooth_labels(one_cell(raw), spec, SmoothingMode::partial);
      const auto out = out_grid.cell(0);
      for (int b = 0; b < 50; ++b) {
        if (b < src) {
          EXPECT_LE(out[b], out[b + 1]);
        } else if (b > src) {
          EXPECT_LE(out[b], out[b - 1]);
        }
      }
    }
  }
}

TEST(Smooth, LinearAboveK) {
  Rng rng(8);
  const LabelSpec spec;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(50, 0.0), b(50, 0.0), ab(50, 0.0);
    for (int i = spec.k; i < 50; ++i) {
      a[i] = rng.uniform(0, 3);
      b[i] = rng.uniform(0, 3);
      ab[i] = a[i] + b[i];
    }
    const auto sa = smooth_labels(one_cell(a), spec, SmoothingMode::partial);
    const auto sb = smooth_labels(one_cell(b), spec, SmoothingMode::partial);
    const auto sab = smooth_labels(one_cell(ab), spec, SmoothingMode::partial);
    for (int i = 0; i < 50; ++i) EXPECT_NEAR(sab.cell(0)[i], sa.cell(0)[i] + sb.cell(0)[i], 1e-12);
  }
}

TEST(Stack, LayoutAndRoundTrip) {
  LabelGrid g(GridSpec{3, 3}, 50);
  for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] = static_cast<double>(i);
  const auto meta = stack_cells(g);
  ASSERT_EQ(meta.size(), 450u);
  EXPECT_EQ(meta[50 * (1 * 3 + 2) + 7], g.cell(2, 1)[7]);
  EXPECT_EQ(unstack_cells(meta, GridSpec{3, 3}, 50), g);
  EXPECT_THROW(unstack_cells(meta, GridSpec{2, 2}, 50), DataError);

  LabelGrid single(GridSpec{1, 1}, 50);
  single.cell(0)[3] = 2.0;
  const auto m1 = stack_cells(single);
  EXPECT_EQ(std::vector<double>(single.cell(0).begin(), single.cell(0).end()), m1);
}

TEST(Grid, CollapsedSumsCells) {
  LabelGrid g(GridSpec{2, 2}, 3);
  g.cell(0, 0)[1] = 1;
  g.cell(1, 1)[1] = 2;
  g.cell(1, 0)[2] = 0.5;
  EXPECT_EQ(g.collapsed().values, (std::vector<double>{0, 3, 0.5}));
  EXPECT_EQ(g.total(), 3.5);
}

}  // namespace
}  // namespace dodloc
