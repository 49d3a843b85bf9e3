#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "vvl/network_io.hpp"

using namespace vvl;
using fx::json;

TEST(LoadNetwork, BundledFeederShape) {
  const auto m = load_network(fx::data_path("feeder12.json"));
  EXPECT_EQ(m.buses.size(), 12u);
  EXPECT_EQ(m.lines.size(), 11u);
  EXPECT_EQ(m.inverters.size(), 9u);
  EXPECT_TRUE(m.topo.radial);
  EXPECT_TRUE(validate_network(m).ok());
  int a = 0, b = 0, c = 0;
  for (const auto& inv : m.inverters) {
    a += inv.phase == Phase::A;
    b += inv.phase == Phase::B;
    c += inv.phase == Phase::C;
  }
  EXPECT_EQ(a, 4);
  EXPECT_EQ(b, 3);
  EXPECT_EQ(c, 2);
}

TEST(LoadNetwork, BundledFeederChecksumPinned) {
  // Any edit to the fixture must be deliberate: regenerate with tools/make_feeder.py and update.
  EXPECT_EQ(fx::fnv1a64(read_text_file(fx::data_path("feeder12.json"))), 0xfbbe20993f16dcf7ULL);
}

TEST(LoadNetwork, MinimalTwoBus) {
  const auto m = fx::TwoBus{}.model();
  EXPECT_EQ(m.lines.size(), 1u);
  EXPECT_TRUE(m.topo.radial);
  EXPECT_EQ(m.lines.size(), m.buses.size() - 1);
}

TEST(LoadNetwork, DanglingBusIsReferenceError) {
  auto j = fx::TwoBus{}.to_json();
  j["lines"][0]["from"] = "nowhere";
  EXPECT_THROW(parse_network(j), ReferenceError);
}

TEST(LoadNetwork, MalformedTextIsParseError) {
  EXPECT_THROW(parse_network_text("{\"buses\": [ "), ParseError);
  EXPECT_THROW(load_network("/nonexistent/feeder.json"), ParseError);
}

TEST(LoadNetwork, MissingFieldIsSchemaError) {
  auto j = fx::TwoBus{}.to_json();
  j["lines"][0].erase("ampacity_a");
  EXPECT_THROW(parse_network(j), SchemaError);
  auto k = fx::TwoBus{}.to_json();
  k.erase("source");
  EXPECT_THROW(parse_network(k), SchemaError);
}

TEST(LoadNetwork, ZipCoefficientsNormalized) {
  fx::TwoBus tb;
  tb.zip = {2.0, 1.0, 1.0};
  const auto m = tb.model();
  ASSERT_EQ(m.loads.size(), 1u);
  EXPECT_NEAR(m.loads[0].zip.p_coeffs.z, 0.5, 1e-15);
  EXPECT_NEAR(m.loads[0].zip.p_coeffs.sum(), 1.0, 1e-15);
}

TEST(LoadNetwork, InvalidModelRejected) {
  auto j = fx::TwoBus{}.to_json();
  j["lines"][0]["z_ohm"]["x"][0][1] = 0.3;  // asymmetric
  EXPECT_THROW(parse_network(j), SchemaError);
}

TEST(ValidateNetwork, ValidTwoBusIsClean) { EXPECT_TRUE(validate_network(fx::TwoBus{}.model()).ok()); }

TEST(ValidateNetwork, AsymmetricImpedanceNamesLine) {
  auto m = fx::TwoBus{}.model();
  m.lines[0].z_ohm[0][1] = {0.0, 0.3};
  const auto r = validate_network(m);
  ASSERT_EQ(r.findings.size(), 1u);
  EXPECT_EQ(r.findings[0].code, "asymmetric_impedance");
  EXPECT_EQ(r.findings[0].subject, "l1");
}

TEST(ValidateNetwork, DisconnectedBus) {
  auto m = fx::TwoBus{}.model();
  m.buses.push_back(Bus{"island"});
  m.reindex();
  const auto r = validate_network(m);
  EXPECT_TRUE(r.has("disconnected") || r.has("not_radial"));
  EXPECT_TRUE(r.has("disconnected"));
}

TEST(ValidateNetwork, FlagsEachInvariant) {
  {
    auto m = fx::TwoBus{}.model();
    m.buses[1].v_min_pu = 1.2;
    EXPECT_TRUE(validate_network(m).has("voltage_limits"));
  }
  {
    auto m = fx::TwoBus{}.model();
    m.lines[0].z_ohm[1][1] = {-0.1, 0.1};
    EXPECT_TRUE(validate_network(m).has("negative_resistance"));
  }
  {
    auto m = fx::TwoBus{}.model();
    m.lines[0].ampacity_a = 0.0;
    EXPECT_TRUE(validate_network(m).has("ampacity"));
  }
  {
    auto m = fx::TwoBus{}.model();
    m.lines.push_back(m.lines[0]);
    m.lines.back().id = "l2";
    m.reindex();
    EXPECT_TRUE(validate_network(m).has("not_radial"));
  }
  {
    fx::TwoBus tb;
    tb.inverter = true;
    auto m = tb.model();
    m.inverters[0].caps.s_kva = 0.0;
    EXPECT_TRUE(validate_network(m).has("capability"));
  }
  {
    fx::TwoBus tb;
    tb.inverter = true;
    auto m = tb.model();
    m.inverters.push_back(m.inverters[0]);
    m.reindex();
    EXPECT_TRUE(validate_network(m).has("duplicate_id"));
  }
  {
    auto m = fx::TwoBus{}.model();
    m.buses[1].phases = {true, false, false, true};
    m.loads[0].phase = Phase::B;
    EXPECT_TRUE(validate_network(m).has("phase_not_at_bus"));
  }
  {
    auto m = fx::TwoBus{}.model();
    m.loads[0].zip.p_kw = -1.0;
    EXPECT_TRUE(validate_network(m).has("negative_load"));
  }
  {
    auto m = fx::TwoBus{}.model();
    m.loads[0].zip.p_coeffs = {0.5, 0.5, 0.5};
    EXPECT_TRUE(validate_network(m).has("zip_not_normalized"));
  }
}

TEST(ApplyContingency, IntactIsIdentity) {
  const auto m = load_network(fx::data_path("feeder12.json"));
  const auto r = apply_contingency(m, ContingencyId::intact());
  EXPECT_EQ(network_to_json(r), network_to_json(m));
  EXPECT_TRUE(r.failed_inverters.empty());
}

TEST(ApplyContingency, RemovesOneInverter) {
  const auto m = load_network(fx::data_path("feeder12.json"));
  const auto r = apply_contingency(m, ContingencyId::inverter_out(3));
  EXPECT_EQ(r.inverters.size(), 8u);
  EXPECT_FALSE(r.find_inverter(3).has_value());
  EXPECT_EQ(r.failed_inverters, std::vector<int>{3});
  EXPECT_EQ(r.loads.size(), m.loads.size());
  EXPECT_EQ(r.lines.size(), m.lines.size());
  for (const auto& inv : r.inverters) {
    const auto k = m.find_inverter(inv.id);
    ASSERT_TRUE(k.has_value());
    EXPECT_EQ(m.inverters[*k].bus, inv.bus);
  }
}

TEST(ApplyContingency, UnknownInverterThrows) {
  const auto m = load_network(fx::data_path("feeder12.json"));
  EXPECT_THROW(apply_contingency(m, ContingencyId::inverter_out(99)), DomainError);
}

TEST(ApplyContingency, Idempotent) {
  const auto m = load_network(fx::data_path("feeder12.json"));
  for (int id : m.inverter_ids()) {
    const auto c = ContingencyId::inverter_out(id);
    const auto once = apply_contingency(m, c);
    const auto twice = apply_contingency(once, c);
    EXPECT_EQ(network_to_json(once), network_to_json(twice));
    EXPECT_EQ(once.failed_inverters, twice.failed_inverters);
  }
}

TEST(ContingencyIdTest, StringRoundTripAndOrder) {
  for (const auto& c : {ContingencyId::intact(), ContingencyId::inverter_out(1), ContingencyId::inverter_out(12)})
    EXPECT_EQ(ContingencyId::parse(c.str()), c);
  EXPECT_LT(ContingencyId::intact(), ContingencyId::inverter_out(1));
  EXPECT_LT(ContingencyId::inverter_out(2), ContingencyId::inverter_out(10));
  EXPECT_THROW(ContingencyId::parse("inverter_out:x"), SchemaError);
  EXPECT_THROW(ContingencyId::parse("broken"), SchemaError);
}

TEST(Serialize, LoadSerializeIsIdentity) {
  const auto m = load_network(fx::data_path("feeder12.json"));
  const auto j = network_to_json(m);
  const auto back = parse_network(j);
  EXPECT_EQ(network_to_json(back), j);
  ASSERT_EQ(back.lines.size(), m.lines.size());
  for (std::size_t l = 0; l < m.lines.size(); ++l)
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 4; ++k) EXPECT_EQ(back.lines[l].z_ohm[i][k], m.lines[l].z_ohm[i][k]);
  for (std::size_t k = 0; k < m.inverters.size(); ++k) {
    EXPECT_EQ(back.inverters[k].caps, m.inverters[k].caps);
    EXPECT_EQ(back.inverters[k].z_out_ohm, m.inverters[k].z_out_ohm);
  }
  for (std::size_t k = 0; k < m.loads.size(); ++k) EXPECT_EQ(back.loads[k].zip, m.loads[k].zip);
}

TEST(PerUnit, RoundTripProperty) {
  fx::Gen g(7);
  for (int n = 0; n < 2000; ++n) {
    Bases b{g.real(100.0, 20000.0), g.real(1.0, 5000.0)};
    const cplx z{g.real(-10.0, 10.0), g.real(-10.0, 10.0)};
    const cplx back = b.pu_to_ohm(b.ohm_to_pu(z));
    EXPECT_LE(std::abs(back - z), 1e-12 * std::abs(z));
  }
}
