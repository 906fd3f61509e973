#include <gtest/gtest.h>

#include "ecpenet/gradcheck.h"

using namespace ecpenet;

namespace {

// Faulty routing: overwrites instead of accumulating, so an input element
// selected by several output pixels keeps only the last contribution.
Tensor<double> assigning_backward(const Tensor<double>& upstream, const ExtremeChannelMasks& masks) {
  const Shape s = masks.input_shape;
  const std::int64_t hw = s.plane();
  Tensor<double> grad(s);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t p = 0; p < hw; ++p) grad[n * s.c * hw + masks.index[static_cast<std::size_t>(n * hw + p)]] = upstream[n * hw + p];
  return grad;
}

// Faulty routing: sends every gradient to the first element of the image.
Tensor<double> misrouted_backward(const Tensor<double>& upstream, const ExtremeChannelMasks& masks) {
  Tensor<double> grad(masks.input_shape);
  for (std::int64_t i = 0; i < upstream.numel(); ++i) grad[0] += upstream[i];
  return grad;
}

}  // namespace

TEST(GradcheckTest, SuitePassesAtDefaultSeed) {
  const GradcheckReport r = gradcheck_suite(0);
  EXPECT_TRUE(r.passed()) << r.render();
  bool groups[4] = {};
  for (const GradcheckCase& c : r.cases) {
    groups[0] |= c.group == "primitive";
    groups[1] |= c.group == "extractor";
    groups[2] |= c.group == "ecpel";
    groups[3] |= c.group == "network";
    EXPECT_LE(c.tolerance, c.group == "network" ? kNetworkTolerance : kPrimitiveTolerance);
  }
  for (bool g : groups) EXPECT_TRUE(g);
}

TEST(GradcheckTest, AssigningBackwardIsCaught) {
  GradcheckOptions o;
  o.only = "extractor";
  o.extract_backward = &assigning_backward;
  const GradcheckReport r = gradcheck_suite(0, o);
  ASSERT_FALSE(r.cases.empty());
  for (const GradcheckCase& c : r.cases) EXPECT_FALSE(c.passed) << c.name;
}

TEST(GradcheckTest, MisroutedBackwardIsCaughtEndToEnd) {
  for (const char* group : {"extractor", "ecpel", "network"}) {
    GradcheckOptions o;
    o.only = group;
    o.extract_backward = &misrouted_backward;
    EXPECT_FALSE(gradcheck_suite(0, o).passed()) << group;
  }
}

TEST(GradcheckTest, FilterSelectsGroupOrName) {
  GradcheckOptions o;
  o.only = "extractor";
  for (const GradcheckCase& c : gradcheck_suite(1, o).cases) EXPECT_EQ(c.group, "extractor");
  o.only = "conv2d";
  const auto r = gradcheck_suite(1, o);
  ASSERT_EQ(r.cases.size(), 1u);
  EXPECT_EQ(r.cases[0].name, "conv2d");
}

TEST(GradcheckTest, DeterministicPerSeed) {
  GradcheckOptions o;
  o.only = "primitive";
  const auto a = gradcheck_suite(3, o);
  const auto b = gradcheck_suite(3, o);
  EXPECT_EQ(a.render(), b.render());
  EXPECT_NE(a.render().find("gradcheck seed=3:"), std::string::npos);
}
