#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nvmag/cli.hpp>

namespace fs = std::filesystem;
using namespace nvmag::cli;

namespace {

struct Outcome {
  int code;
  std::string output;
};

Outcome run_cli(const std::string& args) {
  const std::string cmd = std::string(NVMAG_CLI_BINARY) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

std::vector<std::vector<double>> csv_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> r;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) r.push_back(std::stod(cell));
    rows.push_back(r);
  }
  return rows;
}

class CliDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("nvmag_cli_" + std::to_string(getpid()) + "_" +
                                       ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

}  // namespace

// ── Configuration ──

TEST(CliConfig, DefaultsRoundTrip) {
  for (const auto& c : {ScenarioConfig{}, waveguide_defaults()}) {
    const std::string text = emit_config(c);
    const auto back = parse_config(text);
    EXPECT_EQ(back, c);
    EXPECT_EQ(emit_config(back), text);
  }
}

TEST(CliConfig, DefaultBarScenario) {
  const ScenarioConfig c;
  EXPECT_EQ(c.d_nm, 5);
  EXPECT_EQ(c.w_nm, 30);
  EXPECT_EQ(c.l_nm, 3000);
  EXPECT_EQ(c.geometry, Geometry::bar);
}

TEST(CliConfig, UnknownKeyReportsLocation) {
  std::string text = emit_config(ScenarioConfig{});
  text += "\n[extra]\nfoo = 1\n";
  try {
    parse_config(text);
    FAIL() << "accepted an unknown key";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("extra"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  }
  std::string nested = emit_config(ScenarioConfig{});
  const auto pos = nested.find("points = 400 }");
  nested.replace(pos, 14, "points = 400, step = 2 }");
  EXPECT_THROW(parse_config(nested), ConfigError);
}

TEST(CliConfig, TypeAndValueErrors) {
  EXPECT_THROW(parse_config("[geometry]\nd_nm = \"five\"\n"), ConfigError);
  EXPECT_THROW(parse_config("[numerics]\nn_trunc = 4.5\n"), ConfigError);
  EXPECT_THROW(parse_config("[protocol]\ntemperatures_mk = []\n"), ConfigError);
  EXPECT_THROW(parse_config("[nv]\npositions_nm = [[2, 10, 100]]\n"), ConfigError);
  EXPECT_THROW(parse_config("[geometry]\nkind = \"waveguide\"\n[field]\nkind = \"resonance\"\nvalue = 5\n"),
               ConfigError);
  EXPECT_THROW(parse_config("[field]\nkind = \"sideways\"\n"), ConfigError);
  EXPECT_THROW(parse_config("[sweep]\nk_per_um = { start = 1, stop = inf, points = 3 }\n"), ConfigError);
  EXPECT_THROW(parse_config("this is not toml"), ConfigError);
}

TEST(CliConfig, PartialFileKeepsDefaults) {
  const auto c = parse_config("[protocol]\ntemperatures_mk = [70]\n");
  EXPECT_EQ(c.temperatures_mk, std::vector<double>{70});
  EXPECT_EQ(c.n_trunc, ScenarioConfig{}.n_trunc);
}

TEST(CliConfig, OverridesApply) {
  Overrides o;
  o.quad_rtol = 1e-6;
  o.n_trunc = 20;
  o.fock_cutoff = 14;
  o.out = "elsewhere";
  const auto c = apply(ScenarioConfig{}, o);
  EXPECT_EQ(c.quad_rtol, 1e-6);
  EXPECT_EQ(c.n_trunc, 20);
  EXPECT_EQ(c.fock_cutoff, 14);
  EXPECT_EQ(c.out_dir, "elsewhere");
  o.n_trunc = 2;  // below the mode of interest
  EXPECT_THROW(apply(ScenarioConfig{}, o), ConfigError);
}

TEST(CliConfig, Ranges) {
  const Range lin{0, 1, 5}, lg{1e-3, 1e1, 5};
  EXPECT_EQ(lin.linear(), (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
  const auto v = lg.logarithmic();
  EXPECT_NEAR(v[1], 1e-2, 1e-15);
  EXPECT_NEAR(v.back(), 10, 1e-12);
  EXPECT_EQ((Range{3, 9, 1}).linear(), std::vector<double>{3});
}

// ── Tables ──

TEST(CliTable, HeaderAndUnitRows) {
  Table t({{"t_us", "us"}, {"fidelity", "1"}});
  t.add({1.5, 0.25});
  EXPECT_EQ(t.str(), "t_us,fidelity\nus,1\n1.5,0.25\n");
  EXPECT_THROW(t.add({1.0}), std::logic_error);
}

TEST(CliTable, SchemaRejectsUnitlessOrMislabelled) {
  EXPECT_THROW(Table(std::vector<Column>{{"f", "GHz"}}), std::logic_error);
  EXPECT_THROW(Table(std::vector<Column>{{"f_ghz", ""}}), std::logic_error);
  EXPECT_THROW(Table({{"a_ghz", "GHz"}, {"a_ghz", "GHz"}}), std::logic_error);
  EXPECT_NO_THROW(Table({{"rate_per_s", "1/s"}, {"k_rad_per_um", "rad/um"}, {"h_mt", "mT"}}));
}

TEST(CliTable, FixedPrecisionIsStable) {
  EXPECT_EQ(fixed_precision(0.1 + 0.2), "0.3");
  EXPECT_EQ(fixed_precision(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(fnv1a64(""), "cbf29ce484222325");
}

TEST(CliParallel, SlotsAndErrors) {
  std::vector<int> out(50);
  parallel_for(50, 4, [&](int i) { out[i] = i * i; });
  for (int i = 0; i < 50; ++i) EXPECT_EQ(out[i], i * i);
  EXPECT_THROW(parallel_for(10, 3,
                            [](int i) {
                              if (i == 7) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

// ── Binary ──

TEST_F(CliDir, ConfigInitParsesBack) {
  auto r = run_cli("config-init --out " + (dir / "a").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(load_config(dir / "a" / "config.toml"), ScenarioConfig{});
  r = run_cli("config-init --geometry waveguide --out " + (dir / "b").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(load_config(dir / "b" / "config.toml"), waveguide_defaults());
}

TEST_F(CliDir, DispersionHasInteriorMinimumAndIsDeterministic) {
  auto c = waveguide_defaults();
  c.k_per_um = {0.05, 30, 120};
  spit(dir / "wg.toml", emit_config(c));
  auto r1 = run_cli("dispersion --config " + (dir / "wg.toml").string() + " --out " + (dir / "o1").string());
  ASSERT_EQ(r1.code, 0) << r1.output;
  auto r2 = run_cli("dispersion --jobs 3 --config " + (dir / "wg.toml").string() + " --out " + (dir / "o2").string());
  ASSERT_EQ(r2.code, 0) << r2.output;
  EXPECT_EQ(slurp(dir / "o1" / "dispersion.csv"), slurp(dir / "o2" / "dispersion.csv"));
  const auto m1 = json::parse(slurp(dir / "o1" / "manifest_dispersion.json"));
  const auto m2 = json::parse(slurp(dir / "o2" / "manifest_dispersion.json"));
  EXPECT_EQ(m1["config_hash"], m2["config_hash"]);
  EXPECT_EQ(m1["status"], "ok");
  const auto rows = csv_rows(dir / "o1" / "dispersion.csv");
  std::size_t imin = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i][1] < rows[imin][1]) imin = i;
  EXPECT_GT(imin, 0u);
  EXPECT_LT(imin, rows.size() - 1);
  EXPECT_GT(rows[imin][0], 0.0);
}

TEST_F(CliDir, ConfigErrorsExitTwo) {
  spit(dir / "bad.toml", "[geometry]\nkind = \"bar\"\nwidth = 3\n");
  auto r = run_cli("bar-modes --config " + (dir / "bad.toml").string() + " --out " + dir.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("line 3"), std::string::npos) << r.output;
  spit(dir / "empty.toml", "[protocol]\ntemperatures_mk = []\n");
  EXPECT_EQ(run_cli("simulate --config " + (dir / "empty.toml").string()).code, 2);
  spit(dir / "bar.toml", emit_config(ScenarioConfig{}));
  EXPECT_EQ(run_cli("dispersion --config " + (dir / "bar.toml").string() + " --out " + dir.string()).code, 2);
  EXPECT_EQ(run_cli("simulate --config " + (dir / "bar.toml").string() + " --jobs 0").code, 2);
  EXPECT_EQ(run_cli("no-such-command").code, 2);
}

TEST_F(CliDir, PhysicsErrorsExitThreeWithPoint) {
  ScenarioConfig c;
  c.field_kind = FieldKind::resonance;
  c.field_value = 40;  // this mode never crosses the NV branch
  spit(dir / "c.toml", emit_config(c));
  auto r = run_cli("bar-modes --config " + (dir / "c.toml").string() + " --out " + (dir / "o").string());
  EXPECT_EQ(r.code, 3) << r.output;
  const auto m = json::parse(slurp(dir / "o" / "manifest_bar-modes.json"));
  EXPECT_EQ(m["status"], "physics_error");
  EXPECT_EQ(m["error"]["point"]["field_value"], 40.0);
}

TEST_F(CliDir, SimulateVirtualExchangeAt70mK) {
  ScenarioConfig c;
  c.temperatures_mk = {70};
  c.g_khz = 517;
  c.samples = 300;
  spit(dir / "s.toml", emit_config(c));
  auto r = run_cli("simulate --config " + (dir / "s.toml").string() + " --out " + (dir / "o").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = csv_rows(dir / "o" / "simulate_summary.csv");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0][1], 0.95, 0.02);
  const auto trace = slurp(dir / "o" / "trace_virtual_70mK.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "t_us,p1e,p2e,n_mean,negativity_norm,chsh,fidelity,fidelity_phase_max");
  for (const auto& row : csv_rows(dir / "o" / "trace_virtual_70mK.csv"))
    if (row[5] > 0) EXPECT_GT(row[4], 0.0);
}

TEST(CliTable, HashMatchesReferenceVectors) {
  EXPECT_EQ(fnv1a64("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a64("foobar"), "85944171f73967e8");
}
