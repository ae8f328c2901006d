#include <gtest/gtest.h>

#include <cmath>

#include "homsync/rng.hpp"

using homsync::Rng;

TEST(Rng, SameSeedSameSequence) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(Rng, SubstreamsAreIndependentOfEachOther) {
  EXPECT_EQ(Rng::derive_seed(7, "plant.pairs"), Rng::derive_seed(7, "plant.pairs"));
  EXPECT_NE(Rng::derive_seed(7, "plant.pairs"), Rng::derive_seed(7, "plant.dark"));
  EXPECT_NE(Rng::derive_seed(7, "plant.pairs"), Rng::derive_seed(8, "plant.pairs"));

  // Drawing from one stream leaves another untouched.
  Rng x = Rng::substream(1, "x");
  Rng y1 = Rng::substream(1, "y");
  for (int i = 0; i < 100; ++i) x.uniform();
  Rng y2 = Rng::substream(1, "y");
  EXPECT_EQ(y1.uniform(), y2.uniform());
}

TEST(Rng, PoissonMeanAndVariance) {
  for (const double mean : {0.3, 4.0, 250.0, 3000.0}) {
    Rng r(99);
    const int n = 20000;
    double s = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<double>(r.poisson(mean));
      s += k;
      s2 += k * k;
    }
    const double m = s / n;
    const double var = s2 / n - m * m;
    EXPECT_NEAR(m, mean, 5.0 * std::sqrt(mean / n)) << mean;
    EXPECT_NEAR(var / mean, 1.0, 0.05) << mean;
  }
  Rng r(1);
  EXPECT_EQ(r.poisson(0.0), 0u);
}
