#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ecpenet/data.h"
#include "test_support.h"

using namespace ecpenet;
using ecpenet::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

// Catmull-Rom evaluated straight from its definition at source coordinate
// u = 2i + 0.5, taps at floor(u)-1 .. floor(u)+2, borders clamped.
double catmull_rom(double d) {
  d = std::abs(d);
  if (d < 1) return 1.5 * d * d * d - 2.5 * d * d + 1;
  if (d < 2) return -0.5 * d * d * d + 2.5 * d * d - 4 * d + 2;
  return 0;
}

double oracle_sample(const Image& img, std::int64_t i, std::int64_t j) {
  const Shape s = img.shape();
  const double u = 2.0 * static_cast<double>(i) + 0.5;
  const double v = 2.0 * static_cast<double>(j) + 0.5;
  double acc = 0;
  for (std::int64_t y = static_cast<std::int64_t>(std::floor(u)) - 1; y <= static_cast<std::int64_t>(std::floor(u)) + 2; ++y) {
    for (std::int64_t x = static_cast<std::int64_t>(std::floor(v)) - 1; x <= static_cast<std::int64_t>(std::floor(v)) + 2; ++x) {
      const double wy = catmull_rom(u - static_cast<double>(y));
      const double wx = catmull_rom(v - static_cast<double>(x));
      acc += wy * wx * img.at(0, 0, std::clamp<std::int64_t>(y, 0, s.h - 1), std::clamp<std::int64_t>(x, 0, s.w - 1));
    }
  }
  return acc;
}

BlurPair sample_pair(Rng& rng, std::int64_t size, double sigma) {
  const Image sharp = random_tensor({1, 3, size + 4, size + 4}, rng, 0, 1);
  const BlurPair p = make_blur_pair(sharp, synth_kernel(rng, 5), sigma, rng);
  return crop_patches(p, size, 1, rng).front();
}

}  // namespace

class KernelTest : public ::testing::Test {
 protected:
  Rng rng{21};
};

TEST_F(KernelTest, HorizontalSegmentGivesUniformRow) {
  std::vector<Point2> frames;
  for (int i = 0; i < 5; ++i) frames.push_back({static_cast<double>(i), 0.0});
  const Kernel k = rasterize_trajectory(frames);
  ASSERT_EQ(k.height, 1);
  ASSERT_EQ(k.width, 5);
  for (double v : k.taps) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST_F(KernelTest, ZeroLengthTrajectoryIsDelta) {
  const std::vector<Point2> frames{{2.0, 3.0}, {2.0, 3.0}};
  const Kernel k = rasterize_trajectory(frames);
  EXPECT_EQ(k.height, 1);
  EXPECT_EQ(k.width, 1);
  EXPECT_DOUBLE_EQ(k.taps[0], 1.0);
}

TEST_F(KernelTest, SynthesizedKernelsAreNormalizedAndFit) {
  for (int trial = 0; trial < 500; ++trial) {
    const int support = 3 + 2 * static_cast<int>(uniform_index(rng, 6));
    const Kernel k = synth_kernel(rng, support);
    EXPECT_NEAR(k.sum(), 1.0, 1e-12);
    EXPECT_LE(k.height, support);
    EXPECT_LE(k.width, support);
    for (double v : k.taps) EXPECT_GE(v, 0.0);
  }
}

TEST_F(KernelTest, RejectsEvenSupport) { EXPECT_THROW(synth_kernel(rng, 4), ContractViolation); }

class BlurTest : public ::testing::Test {
 protected:
  Rng rng{22};
};

TEST_F(BlurTest, DeltaKernelWithoutNoiseIsIdentity) {
  const Image sharp = random_tensor({1, 3, 6, 7}, rng, 0, 1);
  const BlurPair p = make_blur_pair(sharp, Kernel::delta(), 0.0, rng);
  EXPECT_EQ(p.blurred, sharp);
  EXPECT_EQ(p.sharp, sharp);
}

TEST_F(BlurTest, ImpulseSpreadsIntoLine) {
  Image sharp({1, 1, 1, 9});
  sharp.at(0, 0, 0, 4) = 1.0;
  Kernel k;
  k.height = 1;
  k.width = 5;
  k.taps.assign(5, 0.2);
  const BlurPair p = make_blur_pair(sharp, k, 0.0, rng);
  ASSERT_EQ(p.blurred.shape(), (Shape{1, 1, 1, 5}));
  for (std::int64_t x = 0; x < 5; ++x) EXPECT_NEAR(p.blurred.at(0, 0, 0, x), 0.2, 1e-15);
  // The sharp crop is aligned with the kernel centre.
  EXPECT_EQ(p.sharp.at(0, 0, 0, 2), 1.0);
}

TEST_F(BlurTest, ConstantImageStaysConstant) {
  const Image sharp({1, 3, 12, 12}, 0.37);
  const BlurPair p = make_blur_pair(sharp, synth_kernel(rng, 7), 0.0, rng);
  for (double v : p.blurred.data()) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST_F(BlurTest, NoiseStaysInUnitRange) {
  const BlurPair p = make_blur_pair(Image({1, 3, 8, 8}, 0.999), Kernel::delta(), 0.5, rng);
  for (double v : p.blurred.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_NE(p.blurred, p.blurred_clean);
}

TEST_F(BlurTest, RejectsOversizedKernel) {
  Kernel k;
  k.height = 1;
  k.width = 9;
  k.taps.assign(9, 1.0 / 9);
  EXPECT_THROW(make_blur_pair(Image({1, 3, 4, 4}), k, 0.0, rng), ContractViolation);
}

class PyramidTest : public ::testing::Test {
 protected:
  Rng rng{23};
};

TEST_F(PyramidTest, CubicWeightsPartitionUnity) {
  for (double t : {0.0, 0.25, 0.5, 0.9}) {
    EXPECT_NEAR(cubic_weight(t + 1) + cubic_weight(t) + cubic_weight(1 - t) + cubic_weight(2 - t), 1.0, 1e-15);
  }
}

TEST_F(PyramidTest, MatchesDirectEvaluationOracle) {
  Image ramp({1, 1, 8, 8});
  for (std::int64_t y = 0; y < 8; ++y)
    for (std::int64_t x = 0; x < 8; ++x) ramp.at(0, 0, y, x) = 0.05 * y + 0.1 * x;
  const Image half = downsample_half(ramp);
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j) EXPECT_NEAR(half.at(0, 0, i, j), oracle_sample(ramp, i, j), 1e-10);
  // Away from the clamped border a linear ramp is reproduced exactly.
  EXPECT_NEAR(half.at(0, 0, 1, 1), 0.05 * 2.5 + 0.1 * 2.5, 1e-12);

  const Image noise = random_tensor({1, 1, 10, 6}, rng, 0, 1);
  const Image h2 = downsample_half(noise);
  for (std::int64_t i = 0; i < 5; ++i)
    for (std::int64_t j = 0; j < 3; ++j) EXPECT_NEAR(h2.at(0, 0, i, j), oracle_sample(noise, i, j), 1e-10);
}

TEST_F(PyramidTest, ConstantImageStaysConstant) {
  const auto p = build_pyramid(Image({1, 3, 16, 16}, 0.6), 3);
  for (const Image& level : p.levels)
    for (double v : level.data()) EXPECT_NEAR(v, 0.6, 1e-15);
}

TEST_F(PyramidTest, LevelShapesHalve) {
  const auto p = build_pyramid(random_tensor({1, 3, 64, 64}, rng), 3);
  ASSERT_EQ(p.levels.size(), 3u);
  EXPECT_EQ(p.levels[0].shape(), (Shape{1, 3, 64, 64}));
  EXPECT_EQ(p.levels[1].shape(), (Shape{1, 3, 32, 32}));
  EXPECT_EQ(p.levels[2].shape(), (Shape{1, 3, 16, 16}));
}

TEST_F(PyramidTest, CropsToMultipleOfScaleFactor) {
  const Image img = random_tensor({1, 3, 19, 22}, rng);
  const auto p = build_pyramid(img, 3);
  EXPECT_EQ(p.levels[0].shape(), (Shape{1, 3, 16, 20}));
  EXPECT_EQ(p.levels[0], crop(img, 0, 0, 16, 20));
  EXPECT_THROW(build_pyramid(random_tensor({1, 3, 3, 8}, rng), 3), ContractViolation);
}

class AugmentTest : public ::testing::Test {
 protected:
  Rng rng{24};
};

TEST_F(AugmentTest, FlipsAreInvolutions) {
  const Image img = random_tensor({1, 3, 5, 5}, rng);
  for (int t : {1, 2, 3, 4}) EXPECT_EQ(apply_dihedral(apply_dihedral(img, t), t), img) << t;
  EXPECT_EQ(apply_dihedral(img, 0), img);
}

TEST_F(AugmentTest, TransformsPermutePixels) {
  const Image img = random_tensor({1, 2, 4, 4}, rng);
  std::vector<double> want(img.values());
  std::sort(want.begin(), want.end());
  for (int t = 0; t < 8; ++t) {
    std::vector<double> got(apply_dihedral(img, t).values());
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, want);
  }
}

TEST_F(AugmentTest, TransposeNeedsSquareImage) {
  EXPECT_THROW(apply_dihedral(random_tensor({1, 3, 4, 6}, rng), 4), ContractViolation);
  EXPECT_NO_THROW(apply_dihedral(random_tensor({1, 3, 4, 6}, rng), 3));
}

TEST_F(AugmentTest, NonSquareImagesOnlyFlip) {
  BlurPair p;
  p.sharp = p.blurred = p.blurred_clean = random_tensor({1, 3, 4, 6}, rng);
  for (int i = 0; i < 32; ++i) EXPECT_EQ(augment(p, rng).sharp.shape(), p.sharp.shape());
}

TEST_F(AugmentTest, SameSeedSameResult) {
  const BlurPair p = sample_pair(rng, 8, 0.05);
  Rng a(5), b(5);
  const BlurPair x = augment(p, a);
  const BlurPair y = augment(p, b);
  EXPECT_EQ(x.sharp, y.sharp);
  EXPECT_EQ(x.blurred, y.blurred);
}

TEST_F(AugmentTest, WithoutNoiseBlurredMatchesTransformedClean) {
  const BlurPair p = sample_pair(rng, 8, 0.0);
  for (int i = 0; i < 16; ++i) {
    const BlurPair q = augment(p, rng);
    EXPECT_EQ(q.blurred, q.blurred_clean);
    bool found = false;
    for (int t = 0; t < 8; ++t) {
      found = found || (apply_dihedral(p.sharp, t) == q.sharp && apply_dihedral(p.blurred, t) == q.blurred);
    }
    EXPECT_TRUE(found);
  }
}

TEST_F(AugmentTest, CropsStayInBoundsAndAligned) {
  const BlurPair p = sample_pair(rng, 12, 0.01);
  const auto full = crop_patches(p, 12, 1, rng);
  EXPECT_EQ(full[0].sharp, p.sharp);
  const auto crops = crop_patches(p, 5, 1000, rng);
  ASSERT_EQ(crops.size(), 1000u);
  for (const BlurPair& c : crops) {
    ASSERT_EQ(c.sharp.shape(), (Shape{1, 3, 5, 5}));
    // Locate the crop origin from the sharp patch and check the blurred one matches.
    bool located = false;
    for (std::int64_t y = 0; y <= 7 && !located; ++y)
      for (std::int64_t x = 0; x <= 7 && !located; ++x)
        if (crop(p.sharp, y, x, 5, 5) == c.sharp) located = crop(p.blurred, y, x, 5, 5) == c.blurred;
    EXPECT_TRUE(located);
  }
  EXPECT_THROW(crop_patches(p, 13, 1, rng), ContractViolation);
}

class DatasetTest : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / "ecpenet_dataset_test";
  void SetUp() override { fs::remove_all(dir); }
  void TearDown() override { fs::remove_all(dir); }
};

TEST_F(DatasetTest, SynthIsDeterministicAndSized) {
  SynthOptions o;
  o.count = 4;
  o.image_size = 24;
  const auto a = synth_dataset(o, 7);
  const auto b = synth_dataset(o, 7);
  const auto c = synth_dataset(o, 8);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].sharp.shape(), (Shape{1, 3, 24, 24}));
    EXPECT_EQ(a[i].blurred, b[i].blurred);
    EXPECT_NEAR(a[i].kernel.sum(), 1.0, 1e-12);
  }
  EXPECT_NE(a[0].sharp, c[0].sharp);
}

TEST_F(DatasetTest, DeltaModeWithoutNoiseCopiesSharp) {
  SynthOptions o;
  o.count = 2;
  o.image_size = 16;
  o.delta_kernel = true;
  o.noise_sigma = 0;
  for (const BlurPair& p : synth_dataset(o, 1)) EXPECT_EQ(p.blurred, p.sharp);
}

TEST_F(DatasetTest, ImagesRoundTripThroughPngAndPpm) {
  Rng rng(3);
  Image img = random_tensor({1, 3, 5, 7}, rng, 0, 1);
  for (double& v : img.data()) v = quantize(v) / 255.0;
  fs::create_directories(dir);
  write_png(dir / "a.png", img);
  write_ppm(dir / "a.ppm", img);
  EXPECT_EQ(read_image(dir / "a.png"), img);
  EXPECT_EQ(read_image(dir / "a.ppm"), img);
}

TEST_F(DatasetTest, QuantizeRoundsHalfUp) {
  EXPECT_EQ(quantize(0.5 / 255.0), 1);
  EXPECT_EQ(quantize(0.49 / 255.0), 0);
  EXPECT_EQ(quantize(-0.1), 0);
  EXPECT_EQ(quantize(1.2), 255);
}

TEST_F(DatasetTest, LoadPairsByName) {
  Rng rng(4);
  fs::create_directories(dir / "sharp");
  fs::create_directories(dir / "blur");
  for (const char* name : {"0001.png", "0000.png"}) {
    write_png(dir / "sharp" / name, Image({1, 3, 4, 4}, 0.2));
    write_png(dir / "blur" / name, Image({1, 3, 4, 4}, 0.4));
  }
  const auto pairs = load_dataset(dir);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_NEAR(pairs[0].blurred[0], quantize(0.4) / 255.0, 1e-15);

  fs::remove(dir / "blur" / "0001.png");
  EXPECT_THROW(load_dataset(dir), DataError);
  EXPECT_THROW(load_dataset(dir / "missing"), DataError);
}

TEST_F(DatasetTest, UnreadableImageIsDataError) {
  fs::create_directories(dir);
  std::ofstream(dir / "junk.png") << "not an image";
  EXPECT_THROW(read_image(dir / "junk.png"), DataError);
  EXPECT_THROW(read_image(dir / "absent.png"), DataError);
}
