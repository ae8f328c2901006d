#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "homsync/error.hpp"
#include "homsync/plant.hpp"

using namespace homsync;
using namespace homsync::literals;
using namespace homsync::plant;

namespace {

TemperatureConfig still() { return {296.15, 0.0, 10800.0, 0.0, 200000.0}; }

// Noiseless geometry: constant delays, no jitter, no background.
PlantConfig quiet_config() {
  PlantConfig c;
  c.temperature_a = still();
  c.temperature_b = still();
  c.source.singles_rate_a = c.source.pair_rate;
  c.source.singles_rate_b = c.source.pair_rate;
  c.source.hom_fraction = 0.5;
  for (DetectorConfig* d : {&c.detector_a, &c.detector_b}) {
    d->efficiency = 1.0;
    d->jitter_sigma = 0_fs;
    d->dark_rate = 0.0;
    d->dead_time = 0_fs;
  }
  return c;
}

Ticks slot_time(Ticks k, Ticks hz) { return (2 * k * kFsPerSecond + hz) / (2 * hz); }

}  // namespace

TEST(Temperature, DiurnalOnlyIsExactSine) {
  TemperatureProcess p({296.15, 1.0, 10800.0, 0.0, 200000.0}, 1);
  EXPECT_DOUBLE_EQ(p.at(TimeTag::epoch()), 296.15);
  EXPECT_NEAR(p.at(TimeTag::epoch() + 2700_s), 297.15, 1e-12);
  EXPECT_NEAR(p.at(TimeTag::epoch() + 8100_s), 295.15, 1e-12);
  EXPECT_NEAR(p.at(TimeTag::epoch() + 10800_s), 296.15, 1e-9);
}

TEST(Temperature, OuStationaryStddev) {
  // tau = 20 s on 1 s nodes: 10^5 samples hold ~2500 independent blocks.
  TemperatureProcess p({0.0, 0.0, 10800.0, 0.1, 20.0}, 77);
  const int n = 100000;
  double s = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = p.at(TimeTag::epoch() + Duration::seconds(i));
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  EXPECT_NEAR(std::sqrt(s2 / n - mean * mean), 0.1, 0.005);
}

TEST(Temperature, QueryOrderDoesNotMatter) {
  const TemperatureConfig cfg{296.15, 1.0, 10800.0, 2.0, 200000.0};
  TemperatureProcess forward(cfg, 5);
  TemperatureProcess backward(cfg, 5);
  std::vector<TimeTag> times;
  for (int i = 0; i < 40; ++i) times.push_back(TimeTag::epoch() + Duration::from_seconds(i * 3517.25));
  std::vector<double> f;
  for (const TimeTag t : times) f.push_back(forward.at(t));
  for (int i = 39; i >= 0; --i) EXPECT_EQ(backward.at(times[static_cast<std::size_t>(i)]), f[static_cast<std::size_t>(i)]);
}

TEST(Temperature, InterpolatesLinearlyBetweenNodes) {
  TemperatureProcess p({296.15, 0.0, 10800.0, 1.0, 1000.0}, 9);
  const double a = p.at(TimeTag::epoch() + 100_s);
  const double b = p.at(TimeTag::epoch() + 101_s);
  EXPECT_NEAR(p.at(TimeTag::epoch() + Duration::ms(100250)), a + 0.25 * (b - a), 1e-12);
}

TEST(FiberChannel, ThermalAndRampTerms) {
  FiberChannel c({kSpoolDelay, kSpoolThermalCoefficient, 0.0, Duration{}}, {296.15, 1.0, 10800.0, 0.0, 1.0}, 1);
  EXPECT_EQ(c.delay_at(TimeTag::epoch()), kSpoolDelay);
  EXPECT_EQ(c.delay_at(TimeTag::epoch() + 2700_s), kSpoolDelay + 10_ps);

  FiberChannel r({1_ns, 0.0, 25.0, Duration{}}, still(), 1);
  EXPECT_EQ(channel_delay(r, TimeTag::epoch() + 100_s), 1_ns + 2500_fs);

  FiberChannel late({1_ns, 0.0, 25.0, Duration{}, 50_s}, still(), 1);
  EXPECT_EQ(late.delay_at(TimeTag::epoch() + 40_s), 1_ns);
  EXPECT_EQ(late.delay_at(TimeTag::epoch() + 150_s), 1_ns + 2500_fs);
}

TEST(DelayLine, MotorizedQuantizesAndClamps) {
  Plant p(PlantConfig{}, 1);
  EXPECT_EQ(p.set_mdl(600_ps), 560_ps);
  EXPECT_EQ(p.set_mdl(-5_ps), 0_fs);
  EXPECT_EQ(p.set_mdl_fs(123456.7L), Duration::fs(123457));
  EXPECT_EQ(p.mdl().setting(), Duration::fs(123457));

  DelayLine coarse = DelayLine::motorized(0_fs, 1_ns, 1_ps, 0_fs);
  EXPECT_EQ(coarse.set(Duration::fs(2500)), 2_ps);  // tie toward zero
  EXPECT_THROW(DelayLine::fixed(100_ps).set(1_ps), UsageError);
}

TEST(Plant, BalanceAtNominalSetting) {
  Plant p(quiet_config(), 1);
  EXPECT_EQ(p.balance_setting_at(TimeTag::epoch()), 250_ps);
  EXPECT_EQ(p.imbalance_at(TimeTag::epoch()), 0_fs);
  EXPECT_EQ(p.imbalance_at(TimeTag::epoch(), 200_ps), 50_ps);
}

TEST(Plant, NoiselessTagDifferenceIsExact) {
  PlantConfig c = quiet_config();
  c.channel_b.tap_leg = Duration::from_ps(59.4);
  Plant p(c, 3);
  const EventBatch b = p.advance(1_s);
  ASSERT_GT(b.tags_a.size(), 1000u);
  ASSERT_EQ(b.tags_a.size(), b.tags_b.size());
  for (std::size_t i = 0; i < b.tags_a.size(); ++i)
    ASSERT_EQ(b.tags_a.tags[i] - b.tags_b.tags[i], Duration::from_ps(868.1 - 59.4)) << i;
}

TEST(Plant, PairedTagsSitAtGateCentre) {
  Plant p(quiet_config(), 4);
  const Duration gate_delay = kSpoolDelay + 150_ps + 100_ps + Duration::from_ps(868.1);
  const EventBatch b = p.advance(200_ms);
  ASSERT_FALSE(b.tags_a.empty());
  for (const TimeTag t : b.tags_a.tags) {
    const Ticks rel = (t - gate_delay).ticks();
    const Ticks k = rel * 75'000'000 / kFsPerSecond;
    Ticks best = slot_time(k, 75'000'000);
    for (Ticks j = k - 1; j <= k + 1; ++j) {
      const Ticks s = slot_time(j, 75'000'000);
      if ((s > rel ? s - rel : rel - s) < (best > rel ? best - rel : rel - best)) best = s;
    }
    ASSERT_EQ(rel, best);
  }
}

TEST(Plant, TagsStayInsideGates) {
  PlantConfig c;  // jitter, singles and dark counts on
  c.detector_a.dead_time = 0_fs;
  Plant p(c, 6);
  const Duration gate_delay = kSpoolDelay + 150_ps + 100_ps + Duration::from_ps(868.1);
  const EventBatch b = p.advance(1_s);
  ASSERT_GT(b.tags_a.size(), 1000u);
  const Ticks half = c.detector_a.gate_width.ticks() / 2;
  for (const TimeTag t : b.tags_a.tags) {
    const Ticks rel = (t - gate_delay).ticks();
    const Ticks k = rel * 75'000'000 / kFsPerSecond;
    Ticks dist = half + 1;
    for (Ticks j = k - 1; j <= k + 2; ++j) {
      const Ticks d = rel - slot_time(j, 75'000'000);
      dist = std::min(dist, d < 0 ? -d : d);
    }
    ASSERT_LE(dist, half);
  }
}

TEST(Plant, DeadTimeSeparatesTagsAcrossBatches) {
  PlantConfig c;
  c.source.singles_rate_a = 2e6;
  c.source.hom_fraction = 0.5;
  c.detector_a.efficiency = 1.0;
  Plant p(c, 7);
  std::vector<TimeTag> all;
  for (int i = 0; i < 20; ++i) {
    const EventBatch b = p.advance(10_ms);
    all.insert(all.end(), b.tags_a.tags.begin(), b.tags_a.tags.end());
  }
  ASSERT_GT(all.size(), 1000u);
  for (std::size_t i = 1; i < all.size(); ++i) ASSERT_GE(all[i] - all[i - 1], c.detector_a.dead_time);
  // 10^6 / s offered against 10 us dead time: at most 10^5 / s survive.
  EXPECT_LE(all.size(), 20000u);
  EXPECT_GT(all.size(), 15000u);
}

TEST(Plant, HomCountsArePoissonFarFromDip) {
  PlantConfig c = quiet_config();
  c.source.hom_fraction = 0.9;
  c.mdl_setting = 0_fs;  // 250 ps imbalance
  Plant p(c, 11);
  p.set_tap_output(false);
  const int n = 300;
  double s = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const EventBatch b = p.advance(1_s);
    EXPECT_NEAR(b.hom_expected, 3000.0, 1e-9);
    s += b.hom_counts;
    s2 += b.hom_counts * b.hom_counts;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, 3000.0, 5.0 * std::sqrt(3000.0 / n));
  EXPECT_NEAR(var / mean, 1.0, 0.25);
}

TEST(Plant, DipDepthAtBalance) {
  PlantConfig c = quiet_config();
  c.source.hom_fraction = 0.9;
  Plant p(c, 12);
  p.set_tap_output(false);
  double total = 0.0;
  for (int i = 0; i < 100; ++i) {
    const EventBatch b = p.advance(1_s);
    EXPECT_NEAR(b.hom_expected, 960.0, 1e-6);
    total += b.hom_counts;
  }
  EXPECT_NEAR(total / 100.0 / 3000.0, 0.32, 0.01);
}

TEST(Plant, CountingNoiseOffReturnsExpectation) {
  PlantConfig c = quiet_config();
  c.counting_noise = false;
  Plant p(c, 13);
  const EventBatch b = p.advance(1_s);
  EXPECT_EQ(b.hom_counts, b.hom_expected);
}

TEST(Plant, SameSeedSameTags) {
  const PlantConfig c;
  Plant a(c, 21);
  Plant b(c, 21);
  Plant other(c, 22);
  for (int i = 0; i < 3; ++i) {
    const EventBatch x = a.advance(100_ms);
    const EventBatch y = b.advance(100_ms);
    const EventBatch z = other.advance(100_ms);
    EXPECT_EQ(x.tags_a.tags, y.tags_a.tags);
    EXPECT_EQ(x.tags_b.tags, y.tags_b.tags);
    EXPECT_EQ(x.hom_counts, y.hom_counts);
    EXPECT_NE(x.tags_a.tags, z.tags_a.tags);
  }
}

TEST(Plant, RejectsBadConfig) {
  PlantConfig c;
  c.detector_b.efficiency = 1.5;
  EXPECT_THROW(Plant(c, 1), UsageError);
  Plant p(PlantConfig{}, 1);
  EXPECT_THROW(p.advance(0_fs), UsageError);
}

TEST(SlotGrid, ReturnsNearestSlot) {
  for (const Ticks hz : {Ticks{75'000'000}, Ticks{1'000}, Ticks{123'456'789}}) {
    detail::SlotGrid g(hz);
    Rng r(static_cast<std::uint64_t>(hz));
    for (int i = 0; i < 5000; ++i) {
      const auto t = static_cast<Ticks>(r.uniform() * 5e15);
      const Ticks v = g.nearest(t);
      const Ticks k0 = t * hz / kFsPerSecond;
      Ticks best = 0;
      Ticks best_d = -1;
      for (Ticks k = k0 - 1; k <= k0 + 2; ++k) {
        if (k < 0) continue;
        const Ticks s = slot_time(k, hz);
        const Ticks d = s > t ? s - t : t - s;
        if (best_d < 0 || d < best_d) {
          best_d = d;
          best = s;
        }
      }
      const Ticks dv = v > t ? v - t : t - v;
      ASSERT_EQ(dv, best_d) << static_cast<long long>(t);
      if (2 * best_d != kFsPerSecond / hz) ASSERT_EQ(v, best);
    }
  }
}

TEST(Tcspc, NoiselessQuantizesToBins) {
  TcspcModel m;
  m.drift_step = 0.0;
  Tcspc t(m, 1);
  EXPECT_EQ(t.measure(Duration::fs(868100)), 868_ps);
  EXPECT_EQ(t.measure(1500_fs), 1_ps);
  EXPECT_EQ(t.measure(1501_fs), 2_ps);
}

TEST(Tcspc, MeanRevertingWalkHasStationarySpread) {
  TcspcModel m;
  Tcspc t(m, 2);
  const int n = 1'000'000;
  double s2 = 0.0;
  for (int i = 0; i < 1000; ++i) t.step();
  for (int i = 0; i < n; ++i) {
    t.step();
    s2 += t.systematic_fs() * t.systematic_fs();
  }
  const double a = std::exp(-1.0 / m.reversion_samples);
  EXPECT_NEAR(std::sqrt(s2 / n), m.drift_step / std::sqrt(1.0 - a * a), 0.05 * m.drift_step / std::sqrt(1.0 - a * a));
}
