#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "vvl/powerflow.hpp"

using namespace vvl;
using fx::cplx;
using fx::json;

namespace {

NetworkModel feeder() { return load_network(fx::data_path("feeder12.json")); }

std::array<cplx, 3> phasors(double ma, double da, double mb, double db, double mc, double dc) {
  return {std::polar(ma, deg2rad(da)), std::polar(mb, deg2rad(db)), std::polar(mc, deg2rad(dc))};
}

// Fortescue oracle with explicit rotation operators.
double vuf_oracle(const std::array<cplx, 3>& v) {
  const cplx a{-0.5, std::sqrt(3.0) / 2.0};
  const cplx v1 = (v[0] + a * v[1] + a * a * v[2]) / 3.0;
  const cplx v2 = (v[0] + a * a * v[1] + a * v[2]) / 3.0;
  return 100.0 * std::abs(v2) / std::abs(v1);
}

ScenarioPoint random_scenario(const NetworkModel& m, fx::Gen& g, double scale) {
  auto s = nominal_scenario(m);
  for (auto& ld : s.loads) {
    ld.p_kw *= g.real(0.0, scale);
    ld.q_kvar *= g.real(0.0, scale);
  }
  for (auto& [id, p] : s.pg_kw) p = g.coin(0.3) ? -2.3 : 0.0;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// zip_demand

TEST(ZipDemand, ConstantPowerIgnoresVoltage) {
  ZipLoad z{3.0, 1.0, {0, 0, 1}, {0, 0, 1}, 1.0};
  for (double v : {0.8, 0.95, 1.0, 1.07}) {
    const auto [p, q] = zip_demand(z, v);
    EXPECT_DOUBLE_EQ(p, 3.0);
    EXPECT_DOUBLE_EQ(q, 1.0);
  }
}

TEST(ZipDemand, NominalVoltageGivesNominalPower) {
  ZipLoad z{2.5, 0.7, {0.3, 0.3, 0.4}, {0.8, 0.1, 0.1}, 1.02};
  const auto [p, q] = zip_demand(z, 1.02);
  EXPECT_NEAR(p, 2.5, 1e-15);
  EXPECT_NEAR(q, 0.7, 1e-15);
}

TEST(ZipDemand, ConstantImpedanceScalesWithSquare) {
  ZipLoad z{1.0, 0.0, {1, 0, 0}, {1, 0, 0}, 1.0};
  EXPECT_NEAR(zip_demand(z, 0.95).first, 0.9025, 1e-15);
}

TEST(ZipDemand, NonPositiveVoltageRejected) {
  ZipLoad z;
  EXPECT_THROW(zip_demand(z, 0.0), DomainError);
  EXPECT_THROW(zip_demand(z, -1.0), DomainError);
}

// ---------------------------------------------------------------------------------------------
// solve_power_flow against the loop oracle

TEST(PowerFlow, ZeroLoadsGiveSourceVoltage) {
  auto m = feeder();
  auto s = nominal_scenario(m);
  for (auto& ld : s.loads) ld.p_kw = ld.q_kvar = 0.0;
  for (auto& [id, p] : s.pg_kw) p = 0.0;
  const auto sol = solve_power_flow(m, s);
  for (std::size_t b = 0; b < m.buses.size(); ++b)
    for (Phase p : kPhases) {
      const cplx expect = std::polar(m.source.v_pu, deg2rad(m.source.angle_deg) - 2.0 * std::numbers::pi / 3.0 * idx(p));
      EXPECT_NEAR(std::abs(sol.vpn(b, p) - expect), 0.0, 1e-12);
    }
  EXPECT_NEAR(line_losses(sol, m).total_kw, 0.0, 1e-15);
}

TEST(PowerFlow, TwoBusConstantPowerMatchesOracle) {
  const fx::TwoBus tb;
  const auto m = tb.model();
  const auto sol = solve_power_flow(m, nominal_scenario(m));
  const auto o = fx::solve_loop(230.0, tb.z_phase, fx::zip_minus_gen(1.0, 0.0, {0, 0, 1}));
  EXPECT_NEAR(std::abs(o.v), 229.57, 1e-2);
  EXPECT_NEAR(std::abs(sol.vpn(1, Phase::A) - o.v / 230.0), 0.0, 1e-6);
  EXPECT_NEAR(sol.vmag(1, Phase::A) * 230.0, std::abs(o.v), 1e-6);
  // unloaded phases stay at the source voltage
  EXPECT_NEAR(sol.vmag(1, Phase::B), 1.0, 1e-12);
  EXPECT_NEAR(sol.vmag(1, Phase::C), 1.0, 1e-12);
}

TEST(PowerFlow, TwoBusZipMixesMatchOracle) {
  const std::vector<std::array<double, 3>> mixes{{1, 0, 0}, {0, 1, 0}, {0.8, 0.1, 0.1}, {0.3, 0.4, 0.3}};
  for (const auto& zip : mixes)
    for (double p : {0.5, 4.0, 12.0}) {
      fx::TwoBus tb;
      tb.zip = zip;
      tb.p_kw = p;
      tb.q_kvar = 0.3 * p;
      const auto m = tb.model();
      const auto sol = solve_power_flow(m, nominal_scenario(m));
      const auto o = fx::solve_loop(230.0, tb.z_phase, fx::zip_minus_gen(p, 0.3 * p, zip));
      EXPECT_NEAR(std::abs(sol.vpn(1, Phase::A) - o.v / 230.0), 0.0, 1e-6) << "p=" << p << " z=" << zip[0];
      EXPECT_LE(std::abs(sol.balance_residual_kw()), 10.0 * 1e-9 * m.bases.s_base_kva);
    }
}

TEST(PowerFlow, NeutralReturnMatchesOracle) {
  fx::TwoBus tb;
  tb.z_neutral = tb.z_phase;
  tb.p_kw = 5.0;
  tb.q_kvar = 1.0;
  const auto m = tb.model();
  const auto sol = solve_power_flow(m, nominal_scenario(m));
  const auto o = fx::solve_loop(230.0, tb.z_phase + tb.z_neutral, fx::zip_minus_gen(5.0, 1.0, {0, 0, 1}));
  EXPECT_NEAR(std::abs(sol.vpn(1, Phase::A) - o.v / 230.0), 0.0, 1e-6);
  EXPECT_NEAR(std::abs(sol.i_line[0][0] - o.i), 0.0, 1e-6);
  EXPECT_NEAR(std::abs(sol.i_line[0][3] + o.i), 0.0, 1e-6);
}

TEST(PowerFlow, InverterInjectionMatchesOracle) {
  fx::TwoBus tb;
  tb.inverter = true;
  tb.p_kw = 3.0;
  tb.inv_p_kw = -2.0;  // V2G charging
  const auto m = tb.model();
  auto s = nominal_scenario(m);
  const auto sol = solve_power_flow(m, s, {{1, 1.5}});
  const auto o = fx::solve_loop(230.0, tb.z_phase, fx::zip_minus_gen(3.0, 0.0, {0, 0, 1}, -2.0, 1.5));
  EXPECT_NEAR(std::abs(sol.vpn(1, Phase::A) - o.v / 230.0), 0.0, 1e-6);
}

TEST(PowerFlow, BeyondLoadabilityDoesNotConverge) {
  const fx::TwoBus base;
  const double r = base.z_phase.real(), zabs = std::abs(base.z_phase);
  const double p_max_kw = 230.0 * 230.0 / (2.0 * (zabs + r)) / 1000.0;  // unity-pf nose point
  // bisect the solver's convergence boundary
  double lo = 0.1 * p_max_kw, hi = 3.0 * p_max_kw;
  auto converges = [&](double p) {
    fx::TwoBus tb;
    tb.p_kw = p;
    const auto m = tb.model();
    try {
      solve_power_flow(m, nominal_scenario(m));
      return true;
    } catch (const ConvergenceError&) {
      return false;
    }
  };
  ASSERT_TRUE(converges(lo));
  ASSERT_FALSE(converges(hi));
  for (int k = 0; k < 30; ++k) (converges(0.5 * (lo + hi)) ? lo : hi) = 0.5 * (lo + hi);
  EXPECT_LE(lo, p_max_kw * (1.0 + 1e-6));
  EXPECT_GE(lo, 0.5 * p_max_kw);
  fx::TwoBus far;
  far.p_kw = 10.0 * p_max_kw;
  const auto m = far.model();
  EXPECT_THROW(solve_power_flow(m, nominal_scenario(m)), NumericalError);
}

TEST(PowerFlow, UnknownSetpointKeyRejected) {
  const auto m = fx::TwoBus{}.model();
  EXPECT_THROW(solve_power_flow(m, nominal_scenario(m), {{42, 1.0}}), DomainError);
}

// ---------------------------------------------------------------------------------------------
// Properties on the bundled feeder

TEST(PowerFlowProperty, BalanceKvlAndNeutralIdentity) {
  const auto m = feeder();
  fx::Gen g(11);
  for (int n = 0; n < 40; ++n) {
    const auto s = random_scenario(m, g, 2.0);
    QSetpoints q;
    for (int id : m.inverter_ids()) q[id] = g.real(-3.0, 3.0);
    const auto sol = solve_power_flow(m, s, q);
    EXPECT_LE(std::abs(sol.balance_residual_kw()), 10.0 * 1e-9 * m.bases.s_base_kva);
    for (std::size_t l = 0; l < m.lines.size(); ++l) {
      const auto& ln = m.lines[l];
      const auto drop = mul(ln.z_ohm, sol.i_line[l]);
      for (int c = 0; c < 4; ++c) {
        const cplx res = sol.v[ln.from][c] - sol.v[ln.to][c] - drop[c];
        EXPECT_LE(std::abs(res) / sol.v_base, 1e-9);
      }
      const cplx sum = sol.i_line[l][0] + sol.i_line[l][1] + sol.i_line[l][2];
      EXPECT_LE(std::abs(sol.i_line[l][3] + sum), 1e-9 * (1.0 + std::abs(sol.i_line[l][0])));
    }
    const auto loss = line_losses(sol, m);
    EXPECT_GE(loss.total_kw, 0.0);
    for (double p : loss.per_line_kw) EXPECT_GE(p, -1e-15);
  }
}

TEST(PowerFlowProperty, HalvingToleranceStaysWithinOldTolerance) {
  const auto m = feeder();
  fx::Gen g(5);
  for (int n = 0; n < 10; ++n) {
    const auto s = random_scenario(m, g, 1.5);
    PowerFlowOptions a, b;
    a.tol_pu = 1e-6;
    b.tol_pu = 0.5e-6;
    const auto sa = solve_power_flow(m, s, {}, a), sb = solve_power_flow(m, s, {}, b);
    for (std::size_t k = 0; k < m.buses.size(); ++k)
      for (Phase p : kPhases) EXPECT_LE(std::abs(sa.vpn(k, p) - sb.vpn(k, p)), a.tol_pu);
  }
}

// ---------------------------------------------------------------------------------------------
// check_limits

TEST(CheckLimits, FlatNoLoadIsClean) {
  fx::TwoBus tb;
  tb.p_kw = 0.0;
  const auto m = tb.model();
  EXPECT_TRUE(check_limits(solve_power_flow(m, nominal_scenario(m)), m).empty());
}

TEST(CheckLimits, UpperLimitBelowSourceFlagsEveryBus) {
  auto m = feeder();
  for (auto& b : m.buses) b.v_max_pu = 0.5 * m.source.v_pu;
  auto s = nominal_scenario(m);
  const auto v = check_limits(solve_power_flow(m, s), m);
  std::set<std::string> buses;
  for (const auto& x : v)
    if (x.kind == Violation::Kind::Voltage) buses.insert(x.element);
  EXPECT_EQ(buses.size(), m.buses.size());
}

TEST(CheckLimits, TinyAmpacityFlagsLine) {
  fx::TwoBus tb;
  tb.ampacity = 0.001;
  const auto m = tb.model();
  const auto v = check_limits(solve_power_flow(m, nominal_scenario(m)), m);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].kind, Violation::Kind::Current);
  EXPECT_EQ(v[0].element, "l1");
}

// ---------------------------------------------------------------------------------------------
// line_losses

TEST(LineLosses, BalancedTenAmps) {
  fx::TwoBus tb;
  tb.z_phase = {0.1, 0.0};
  tb.z_neutral = {0.1, 0.0};
  const auto m = tb.model();
  PowerFlowSolution sol;
  sol.i_line = {Vec4{std::polar(10.0, 0.0), std::polar(10.0, deg2rad(-120.0)), std::polar(10.0, deg2rad(120.0)), 0.0}};
  sol.i_line[0][3] = -(sol.i_line[0][0] + sol.i_line[0][1] + sol.i_line[0][2]);
  EXPECT_NEAR(line_losses(sol, m).total_kw, 0.030, 1e-12);
}

TEST(LineLosses, ZeroCurrentZeroLoss) {
  const auto m = fx::TwoBus{}.model();
  PowerFlowSolution sol;
  sol.i_line = {Vec4{}};
  EXPECT_EQ(line_losses(sol, m).total_kw, 0.0);
}

TEST(LineLosses, TwoBusMatchesOracleI2R) {
  for (cplx zn : {cplx{0, 0}, cplx{0.1, 0.1}}) {
    fx::TwoBus tb;
    tb.z_neutral = zn;
    const auto m = tb.model();
    PowerFlowOptions tight;
    tight.tol_pu = 1e-13;
    const auto sol = solve_power_flow(m, nominal_scenario(m), {}, tight);
    const auto o = fx::solve_loop(230.0, tb.z_phase + zn, fx::zip_minus_gen(1.0, 0.0, {0, 0, 1}));
    const double expect_kw = (tb.z_phase.real() + zn.real()) * std::norm(o.i) / 1000.0;
    EXPECT_NEAR(line_losses(sol, m).total_kw, expect_kw, 1e-9 * expect_kw + 1e-15);
  }
}

// ---------------------------------------------------------------------------------------------
// vuf

TEST(Vuf, BalancedIsZero) { EXPECT_NEAR(vuf(phasors(1, 0, 1, -120, 1, 120)), 0.0, 1e-12); }

TEST(Vuf, OnePhaseLowMatchesFortescue) {
  const auto v = phasors(1, 0, 1, -120, 0.9, 120);
  EXPECT_NEAR(vuf(v), vuf_oracle(v), 1e-12);
  EXPECT_NEAR(vuf(v), 3.448, 5e-4);
}

TEST(Vuf, PureNegativeSequenceRejected) { EXPECT_THROW(vuf(phasors(1, 0, 1, 120, 1, -120)), DomainError); }

TEST(VufProperty, RotationAndScaleInvariant) {
  fx::Gen g(3);
  for (int n = 0; n < 5000; ++n) {
    const auto v = phasors(g.real(0.8, 1.2), g.real(-10, 10), g.real(0.8, 1.2), g.real(-130, -110), g.real(0.8, 1.2),
                           g.real(110, 130));
    const double base = vuf(v);
    EXPECT_NEAR(base, vuf_oracle(v), 1e-10);
    const cplx k = std::polar(g.real(0.1, 10.0), g.real(-3.14, 3.14));
    EXPECT_NEAR(vuf({v[0] * k, v[1] * k, v[2] * k}), base, 1e-10 * (1.0 + base));
  }
}

// ---------------------------------------------------------------------------------------------
// Thevenin driving-point impedance

TEST(Thevenin, SeriesPath) {
  fx::TwoBus tb;
  tb.z_phase = {0.1, 0.2};
  tb.p_kw = 0.0;
  const auto m = tb.model();
  const cplx z = thevenin_impedance(m, nominal_scenario(m), {}, 1, Phase::A);
  EXPECT_NEAR(std::abs(z - cplx{0.1, 0.2}), 0.0, 1e-6);
}

TEST(Thevenin, CascadedLinesAdd) {
  const cplx z1{0.05, 0.08}, z2{0.12, 0.03};
  json j;
  j["source"] = {{"bus", "S"}};
  j["buses"] = json::array({{{"id", "S"}}, {{"id", "A"}}, {{"id", "B"}}});
  j["lines"] = json::array({fx::line_json("l1", "S", "A", z1, 0.0), fx::line_json("l2", "A", "B", z2, 0.0)});
  const auto m = parse_network(j);
  for (Phase p : kPhases) {
    const cplx z = thevenin_impedance(m, nominal_scenario(m), {}, 2, p);
    EXPECT_NEAR(std::abs(z - (z1 + z2)), 0.0, 1e-6);
  }
}

TEST(Thevenin, ShuntLoadsMatchAdmittanceReduction) {
  const cplx z1{0.05, 0.08}, z2{0.12, 0.03};
  json j;
  j["source"] = {{"bus", "S"}};
  j["buses"] = json::array({{{"id", "S"}}, {{"id", "A"}}, {{"id", "B"}}});
  j["lines"] = json::array({fx::line_json("l1", "S", "A", z1, 0.0), fx::line_json("l2", "A", "B", z2, 0.0)});
  j["loads"] = json::array({{{"bus", "A"}, {"phase", "a"}, {"p_kw", 8.0}, {"q_kvar", 2.0}, {"zip_p", {0.8, 0.1, 0.1}}},
                            {{"bus", "B"}, {"phase", "a"}, {"p_kw", 5.0}, {"q_kvar", 1.0}, {"zip_p", {0, 0, 1}}}});
  const auto m = parse_network(j);
  const auto s = nominal_scenario(m);
  const auto sol = solve_power_flow(m, s);
  // constant-admittance linearization of each load at its solved voltage
  auto y_load = [&](std::size_t load, std::size_t bus) {
    const double vm = sol.vmag(bus, Phase::A);
    const auto [p, q] = zip_demand(m.loads[load].zip, vm);
    return std::conj(cplx{p, q} * 1000.0) / std::norm(sol.vpn(bus, Phase::A) * 230.0);
  };
  const cplx ya = y_load(0, 1), yb = y_load(1, 2);
  // nodal admittance on phase a with the source node grounded; neutral impedance is zero
  const cplx y11 = 1.0 / z1 + 1.0 / z2 + ya, y12 = -1.0 / z2, y22 = 1.0 / z2 + yb;
  const cplx det = y11 * y22 - y12 * y12;
  const cplx z_oracle = y11 / det;
  const cplx z = thevenin_impedance(m, s, {}, 2, Phase::A);
  EXPECT_LE(std::abs(z - z_oracle) / std::abs(z_oracle), 0.01);
}

TEST(Thevenin, InsensitiveToPerturbationSize) {
  const auto m = feeder();
  const auto s = nominal_scenario(m);
  TheveninOptions a, b;
  b.delta_i_amp = 0.05;
  for (const auto& inv : m.inverters) {
    const cplx za = thevenin_impedance(m, s, {}, inv.bus, inv.phase, a);
    const cplx zb = thevenin_impedance(m, s, {}, inv.bus, inv.phase, b);
    EXPECT_LE(std::abs(za - zb) / std::abs(za), 1e-3);
  }
}

TEST(SolutionCsv, OneRowPerBusPhaseAndConductor) {
  const auto m = fx::TwoBus{}.model();
  std::ostringstream os;
  write_solution_csv(os, solve_power_flow(m, nominal_scenario(m)), m);
  const std::string text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 2 * 3 + 4);
  EXPECT_EQ(text.rfind("kind,element,conductor,magnitude,angle_deg,loss_kw", 0), 0u);
}
