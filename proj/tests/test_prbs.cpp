#include <gtest/gtest.h>

#include <numbers>

#include "fixtures.hpp"
#include "vvl/prbs.hpp"

using namespace vvl;
using fx::cplx;

namespace {

double rel_err(cplx est, cplx ref) { return std::abs(est - ref) / std::abs(ref); }
double angle_err_deg(cplx est, cplx ref) { return std::abs(std::arg(est / ref)) * 180.0 / std::numbers::pi; }

cplx z_at(const TheveninCircuit& c) { return {c.r_ohm, 2.0 * std::numbers::pi * c.f_hz * c.l_h}; }

}  // namespace

TEST(PrbsSequence, MaximalLengthAndBalance) {
  for (int order = 7; order <= 16; ++order) {
    const auto s = prbs_sequence(order);
    const std::size_t n = (std::size_t{1} << order) - 1;
    ASSERT_EQ(s.size(), n);
    const auto ones = std::count(s.begin(), s.end(), 1);
    EXPECT_EQ(static_cast<std::size_t>(ones), (n + 1) / 2) << "order " << order;
    EXPECT_EQ(std::count(s.begin(), s.end(), -1), static_cast<long>(n - ones));
  }
}

// An m-sequence has a two-valued circular autocorrelation: n at lag 0 and -1 elsewhere.
TEST(PrbsSequence, TwoValuedAutocorrelation) {
  for (int order = 7; order <= 10; ++order) {
    const auto s = prbs_sequence(order);
    const std::size_t n = s.size();
    for (std::size_t lag = 1; lag < n; ++lag) {
      long acc = 0;
      for (std::size_t t = 0; t < n; ++t) acc += s[t] * s[(t + lag) % n];
      ASSERT_EQ(acc, -1) << "order " << order << " lag " << lag;
    }
  }
}

TEST(PrbsSequence, OtherSeedsAreRotations) {
  const auto base = prbs_sequence(7);
  fx::Gen g(1);
  for (int k = 0; k < 20; ++k) {
    const auto seed = static_cast<std::uint32_t>(g.integer(1, 127));
    const auto s = prbs_sequence(7, seed);
    bool found = false;
    for (std::size_t sh = 0; sh < base.size() && !found; ++sh) {
      found = true;
      for (std::size_t t = 0; t < s.size() && found; ++t) found = s[t] == base[(t + sh) % base.size()];
    }
    EXPECT_TRUE(found) << "seed " << seed;
  }
}

TEST(PrbsSequence, BadArguments) {
  EXPECT_THROW(prbs_sequence(6), DomainError);
  EXPECT_THROW(prbs_sequence(17), DomainError);
  EXPECT_THROW(prbs_sequence(9, 0), DomainError);
  EXPECT_THROW(prbs_sequence(7, 128), DomainError);  // masked to zero
}

TEST(PrbsEstimate, PureResistance) {
  TheveninCircuit c{0.5, 0.0, 230.0, 50.0};
  const auto e = estimate_impedance_prbs(c, PRBSConfig{});
  EXPECT_NEAR(e.r_ohm, 0.5, 0.005);
  EXPECT_NEAR(e.l_h, 0.0, 1e-7);
  EXPECT_LT(rel_err(e.z_fundamental, {0.5, 0.0}), 0.01);
}

TEST(PrbsEstimate, ResistiveInductiveNoiseless) {
  TheveninCircuit c{0.5, 1e-3, 230.0, 50.0};
  const auto e = estimate_impedance_prbs(c, PRBSConfig{});
  EXPECT_LT(rel_err(e.z_fundamental, z_at(c)), 0.05);
  EXPECT_LT(angle_err_deg(e.z_fundamental, z_at(c)), 3.0);
  EXPECT_LT(rel_err(e.z_fundamental, z_at(c)), 1e-6);
  ASSERT_FALSE(e.f_hz.empty());
  EXPECT_LE(e.f_hz.back(), 2000.0);
  for (std::size_t k = 0; k < e.f_hz.size(); ++k)
    EXPECT_LT(std::abs(e.z_bins[k] - cplx(0.5, 2.0 * std::numbers::pi * e.f_hz[k] * 1e-3)), 1e-6);
}

TEST(PrbsEstimate, OnePercentNoise) {
  TheveninCircuit c{0.5, 1e-3, 230.0, 50.0};
  PRBSConfig cfg;
  cfg.noise_fraction = 0.01;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    cfg.seed = seed;
    const auto e = estimate_impedance_prbs(c, cfg);
    EXPECT_LT(rel_err(e.z_fundamental, z_at(c)), 0.10) << "seed " << seed;
  }
}

// Spread of the resistance estimate against the white-noise floor of the cross-spectral average:
// each bin carries noise of std sigma / (amp sqrt(P)) per quadrature, and R averages B bins.
TEST(PrbsEstimate, NoiseFloorMatchesTheory) {
  TheveninCircuit c{0.5, 1e-3, 230.0, 50.0};
  PRBSConfig cfg;
  cfg.noise_fraction = 0.01;
  std::vector<double> r;
  std::size_t bins = 0;
  for (std::uint64_t seed = 100; seed < 160; ++seed) {
    cfg.seed = seed;
    const auto e = estimate_impedance_prbs(c, cfg);
    r.push_back(e.r_ohm);
    bins = e.f_hz.size();
  }
  double mean = 0.0, var = 0.0;
  for (double x : r) mean += x / static_cast<double>(r.size());
  for (double x : r) var += (x - mean) * (x - mean) / static_cast<double>(r.size() - 1);
  const double n = 1023.0, sigma = 0.01 * 230.0;
  const double theory = sigma / cfg.amp_a * std::sqrt(n / (n + 1.0)) / std::sqrt(2.0 * cfg.periods * bins);
  EXPECT_GT(std::sqrt(var), 0.7 * theory);
  EXPECT_LT(std::sqrt(var), 1.3 * theory);
  EXPECT_NEAR(mean, 0.5, 4.0 * theory / std::sqrt(static_cast<double>(r.size())));
}

TEST(PrbsEstimate, HandBuiltResistiveRecord) {
  // v = e + R i sampled directly, independent of the spectral simulator
  const auto chips = prbs_sequence(8);
  PRBSRecord rec;
  rec.fs_hz = 12750.0;  // 255 chips per 50 Hz cycle
  rec.period = chips.size();
  for (int p = 0; p < 8; ++p)
    for (std::size_t t = 0; t < chips.size(); ++t) {
      const double time = static_cast<double>(p * chips.size() + t) / rec.fs_hz;
      const double i = 3.0 * chips[t];
      rec.i.push_back(i);
      rec.v.push_back(325.0 * std::sin(2.0 * std::numbers::pi * 50.0 * time + 0.3) + 0.8 * i);
    }
  const auto e = estimate_impedance(rec, 50.0);
  EXPECT_NEAR(e.r_ohm, 0.8, 1e-9);
  EXPECT_NEAR(e.l_h, 0.0, 1e-12);
}

TEST(PrbsEstimateProperty, RandomCircuitsNoiseless) {
  fx::Gen g(8);
  for (int k = 0; k < 20; ++k) {
    TheveninCircuit c{g.real(0.05, 2.0), g.real(0.0, 5e-3), g.real(200.0, 250.0), 50.0};
    PRBSConfig cfg;
    cfg.periods = g.integer(1, 4);
    const auto e = estimate_impedance_prbs(c, cfg);
    EXPECT_LT(rel_err(e.z_fundamental, z_at(c)), 1e-6);
  }
}

TEST(PrbsEstimate, ShortOrMalformedRecordRejected) {
  TheveninCircuit c;
  PRBSConfig cfg;
  cfg.samples = 500;  // less than one 1023-chip period
  EXPECT_THROW(estimate_impedance_prbs(c, cfg), DomainError);
  cfg.samples = 0;
  cfg.periods = 0;
  EXPECT_THROW(estimate_impedance_prbs(c, cfg), DomainError);

  PRBSRecord rec;
  rec.fs_hz = 51150.0;
  rec.period = 1023;
  rec.i.assign(100, 1.0);
  rec.v.assign(100, 1.0);
  EXPECT_THROW(estimate_impedance(rec, 50.0), DomainError);
  rec.v.pop_back();
  EXPECT_THROW(estimate_impedance(rec, 50.0), DomainError);
  EXPECT_THROW(estimate_impedance(PRBSRecord{}, 50.0), DomainError);
}

TEST(PrbsEstimate, BadRig) {
  EXPECT_THROW(simulate_prbs({-0.1, 1e-3, 230.0, 50.0}, PRBSConfig{}), DomainError);
  PRBSConfig slow;
  slow.fs_hz = 400.0;
  EXPECT_THROW(simulate_prbs(TheveninCircuit{}, slow), DomainError);
}
