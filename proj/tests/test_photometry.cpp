#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "capbias/photometry.hpp"

using namespace capbias;

namespace {

ExifRecord record(std::optional<double> f, std::optional<double> t, std::optional<std::uint32_t> iso) {
  ExifRecord r;
  r.image_id = "r";
  r.f_number = f;
  r.exposure_time_s = t;
  r.iso = iso;
  return r;
}

}  // namespace

TEST(ComputeEv, IdentityCases) {
  EXPECT_EQ(compute_ev(1, 1, 100, EvMode::Photometric), 0.0);
  EXPECT_EQ(compute_ev(1, 1, 100, EvMode::PaperVerbatim), 1.0);
}

TEST(ComputeEv, F56At60thIso100) {
  // log2(5.6^2 * 60) = log2(1881.6); reference from an arbitrary-precision tool.
  EXPECT_NEAR(compute_ev(5.6, 1.0 / 60.0, 100, EvMode::Photometric), 10.877744249949, 1e-9);
  EXPECT_NEAR(compute_ev(5.6, 1.0 / 60.0, 100, EvMode::PaperVerbatim), 10.878510784711, 1e-9);
}

TEST(ComputeEv, RejectsNonPositiveInputs) {
  for (auto [f, t, iso] : {std::tuple{0.0, 1.0, 100.0}, {1.0, 0.0, 100.0}, {1.0, 1.0, 0.0}, {-1.0, 1.0, 100.0},
                           {NAN, 1.0, 100.0}, {1.0, INFINITY, 100.0}}) {
    try {
      compute_ev(f, t, iso, EvMode::Photometric);
      ADD_FAILURE() << f << " " << t << " " << iso;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NonPositiveInput);
    }
  }
}

TEST(ComputeEv, OverflowWhenApertureTermUnrepresentable) {
  try {
    compute_ev(1e200, 1e-200, 100, EvMode::Photometric);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Overflow);
  }
}

TEST(ComputeEv, PhotometricMonotonicity) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> f(1.0, 22.0), t(1e-4, 2.0), iso(50, 12800);
  for (int i = 0; i < 1000; ++i) {
    const double f0 = f(rng), t0 = t(rng), i0 = iso(rng);
    const double ev = compute_ev(f0, t0, i0, EvMode::Photometric);
    EXPECT_LT(ev, compute_ev(f0 * 1.01, t0, i0, EvMode::Photometric));
    EXPECT_GT(ev, compute_ev(f0, t0 * 1.01, i0, EvMode::Photometric));
    EXPECT_GT(ev, compute_ev(f0, t0, i0 * 1.01, EvMode::Photometric));
  }
}

TEST(ComputeEv, PhotometricIsoScalingLaw) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> f(1.0, 22.0), t(1e-4, 2.0), iso(50, 3200), k(0.01, 100);
  for (int i = 0; i < 1000; ++i) {
    const double f0 = f(rng), t0 = t(rng), i0 = iso(rng), k0 = k(rng);
    EXPECT_NEAR(compute_ev(f0, t0, k0 * i0, EvMode::Photometric),
                compute_ev(f0, t0, i0, EvMode::Photometric) - std::log2(k0), 1e-12);
  }
}

TEST(ComputeEv, ModesAgreeAtIso100) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> f(1.0, 32.0), t(1e-5, 30.0);
  int checked = 0;
  for (int i = 0; i < 5000; ++i) {
    const double f0 = f(rng), t0 = t(rng);
    if (f0 * f0 / t0 < 100) continue;
    ++checked;
    EXPECT_LE(std::abs(compute_ev(f0, t0, 100, EvMode::PaperVerbatim) - compute_ev(f0, t0, 100, EvMode::Photometric)),
              std::log2(1.01) + 1e-15);
  }
  EXPECT_GT(checked, 500);
}

TEST(EvToLux, AnchorsExact) {
  EXPECT_EQ(ev_to_lux(7), 320.0);
  EXPECT_EQ(ev_to_lux(8), 640.0);
  EXPECT_EQ(ev_to_lux(10), 2560.0);
  EXPECT_EQ(ev_to_lux(11), 5120.0);
}

TEST(ClassifyIllumination, DocumentedPoints) {
  EXPECT_EQ(classify_illumination(5), Illumination::Low);
  EXPECT_EQ(classify_illumination(9), Illumination::Mid);
  EXPECT_EQ(classify_illumination(7.6), Illumination::Mid);
  EXPECT_EQ(classify_illumination(-10), Illumination::Low);
  EXPECT_EQ(classify_illumination(15), Illumination::High);
}

TEST(ClassifyIllumination, BoundariesAreHalfOpen) {
  EXPECT_EQ(classify_illumination(std::nextafter(7.5, 0.0)), Illumination::Low);
  EXPECT_EQ(classify_illumination(7.5), Illumination::Mid);
  EXPECT_EQ(classify_illumination(std::nextafter(10.5, 0.0)), Illumination::Mid);
  EXPECT_EQ(classify_illumination(10.5), Illumination::High);
}

TEST(ClassifyIllumination, MonotoneStepFunction) {
  int prev = 0;
  for (double ev = -20; ev <= 30; ev += 0.01) {
    const int level = static_cast<int>(classify_illumination(ev));
    EXPECT_GE(level, prev);
    prev = level;
  }
}

TEST(ClassifyIllumination, ConfigurableBoundaries) {
  const ClassBoundaries b{8.0, 11.0};
  EXPECT_EQ(classify_illumination(7.6, b), Illumination::Low);
  EXPECT_EQ(classify_illumination(10.7, b), Illumination::Mid);
}

TEST(Profile, DocumentedExamples) {
  Warnings w;
  auto p = profile(record(5.6, 1.0 / 60.0, 100), EvMode::Photometric, w);
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->ev, 10.8778, 1e-4);
  EXPECT_NEAR(p->lux, 2.5 * 1881.6, 1e-6);
  EXPECT_EQ(p->illumination, Illumination::High);

  EXPECT_FALSE(profile(record(std::nullopt, 1.0 / 60.0, 100), EvMode::Photometric, w));

  auto unit = profile(record(1, 1, 100), EvMode::Photometric, w);
  ASSERT_TRUE(unit);
  EXPECT_EQ(unit->ev, 0.0);
  EXPECT_EQ(unit->lux, 2.5);
  EXPECT_EQ(unit->illumination, Illumination::Low);
  EXPECT_TRUE(w.empty());
}

TEST(Profile, LuxConsistentWithEv) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> f(1.0, 22.0), t(1e-4, 2.0);
  std::uniform_int_distribution<std::uint32_t> iso(50, 12800);
  Warnings w;
  for (int i = 0; i < 500; ++i) {
    auto p = profile(record(f(rng), t(rng), iso(rng)), EvMode::Photometric, w);
    ASSERT_TRUE(p);
    EXPECT_EQ(p->lux, ev_to_lux(p->ev));
    EXPECT_EQ(p->illumination, classify_illumination(p->ev));
  }
}

TEST(Profile, ArithmeticFailureBecomesWarning) {
  Warnings w;
  EXPECT_FALSE(profile(record(1e200, 1e-200, 100), EvMode::Photometric, w));
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].field, "EV");
  EXPECT_EQ(w[0].reason.rfind("Overflow", 0), 0u);
}

TEST(EvMode, ParsesCliNames) {
  EXPECT_EQ(parse_ev_mode("photometric"), EvMode::Photometric);
  EXPECT_EQ(parse_ev_mode("paper"), EvMode::PaperVerbatim);
  EXPECT_FALSE(parse_ev_mode("apex"));
}
