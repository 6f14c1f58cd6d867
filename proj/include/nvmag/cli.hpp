#pragma once
// Scenario configuration, CSV/JSON output and the subcommand runners.

#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "bar.hpp"
#include "constants.hpp"
#include "lindblad.hpp"
#include "numerics.hpp"
#include "paraunitary.hpp"
#include "waveguide.hpp"

namespace nvmag::cli {

using json = nlohmann::ordered_json;
using numerics::cd;

inline constexpr const char* version = "1.0.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PhysicsError : public std::runtime_error {
 public:
  PhysicsError(const std::string& what, json point) : std::runtime_error(what), point_(std::move(point)) {}
  const json& point() const { return point_; }

 private:
  json point_;
};

enum ExitCode { exit_ok = 0, exit_config = 2, exit_physics = 3 };

// ── Configuration ──

enum class Geometry { waveguide, bar };
enum class FieldKind { fixed, detuning, resonance };
enum class Protocol { transduction, virtual_exchange };

struct Range {
  double start = 0, stop = 0;
  int points = 1;
  bool operator==(const Range&) const = default;

  std::vector<double> linear() const {
    std::vector<double> v;
    for (int i = 0; i < points; ++i) v.push_back(points == 1 ? start : start + (stop - start) * i / (points - 1));
    return v;
  }
  std::vector<double> logarithmic() const {
    std::vector<double> v;
    for (int i = 0; i < points; ++i)
      v.push_back(points == 1 ? start : start * std::pow(stop / start, double(i) / (points - 1)));
    return v;
  }
};

struct ScenarioConfig {
  // constants and material
  double gamma_ghz_per_t = 28.0;
  double d_nv_ghz = 2.877;
  double mu0_ms_t = 0.2458;
  double d_ex_gamma_mt_um2 = 5.39e-2;
  double alpha = 1e-5;
  // geometry
  Geometry geometry = Geometry::bar;
  double d_nm = 5, w_nm = 30, l_nm = 3000;
  int mode_index = 5;
  // field
  FieldKind field_kind = FieldKind::resonance;
  double field_value = 5;
  // NV centres
  std::vector<std::array<double, 3>> nv_nm{{10, 30, 400}, {10, 30, 2600}};
  double t2_star_ms = 1.0;
  // protocol
  Protocol protocol = Protocol::virtual_exchange;
  double delta_f_mhz = 3.0;
  double delta_idle_mhz = 5.0;
  std::vector<double> temperatures_mk{30, 70, 150};
  double duration_us = 12.0;
  int samples = 600;
  double tau_max_us = 4.0;
  std::optional<double> g_khz;
  double mode_ghz = 2.78;
  // numerics
  double quad_rtol = 1e-8;
  int n_trunc = 40;
  int fock_cutoff = 12;
  // sweeps
  Range k_per_um{0.05, 40, 400};
  Range map_x_nm{6, 40, 18}, map_y_nm{30, 30, 1}, map_z_nm{0, 3000, 61};
  Range dz_nm{0, 2500, 26};
  Range field_mt{0, 6, 61};
  int sweep_modes = 12;
  Range phase_alpha{1e-9, 1e-5, 17};
  std::vector<double> phase_gamma2_per_s{0, 100, 1000};
  // output
  std::string out_dir = "out";

  bool operator==(const ScenarioConfig&) const = default;

  PhysicalConstants constants() const {
    PhysicalConstants c;
    c.gamma = two_pi * gamma_ghz_per_t * 1e9;
    c.d_nv = units::ghz(d_nv_ghz);
    return c;
  }
  MaterialParams material() const {
    MaterialParams m;
    m.mu0_ms = mu0_ms_t;
    m.d_ex = d_ex_gamma_mt_um2 * (two_pi * gamma_ghz_per_t * 1e6) * 1e-12;
    m.alpha = alpha;
    return m;
  }
  numerics::Vec3 nv(std::size_t i) const {
    const auto& p = nv_nm.at(i);
    return numerics::Vec3(p[0] * 1e-9, p[1] * 1e-9, p[2] * 1e-9);
  }
};

// Defaults for the thin-film waveguide scenario.
inline ScenarioConfig waveguide_defaults() {
  ScenarioConfig c;
  c.geometry = Geometry::waveguide;
  c.d_nm = 20;
  c.w_nm = 120;
  c.l_nm = 1000;
  c.field_kind = FieldKind::detuning;
  c.field_value = 3;
  c.nv_nm = {{45, 120, 0}};
  c.map_x_nm = {21, 120, 34};
  c.map_y_nm = {-40, 160, 41};
  c.map_z_nm = {0, 0, 1};
  c.quad_rtol = 1e-9;
  return c;
}

inline const char* to_string(Geometry g) { return g == Geometry::bar ? "bar" : "waveguide"; }
inline const char* to_string(FieldKind f) {
  return f == FieldKind::fixed ? "fixed" : f == FieldKind::detuning ? "detuning" : "resonance";
}
inline const char* to_string(Protocol p) { return p == Protocol::transduction ? "transduction" : "virtual"; }

// ── Number formatting ──

inline std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string fixed_precision(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// ── TOML reader with unknown-key detection ──

class Reader {
 public:
  explicit Reader(const toml::table& root) : root_(root) {}

  const toml::node* find(const std::string& path) {
    const toml::node* cur = &root_;
    std::string prefix;
    std::size_t pos = 0;
    while (pos <= path.size()) {
      const std::size_t dot = path.find('.', pos);
      const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
      const auto* tbl = cur->as_table();
      if (!tbl) return nullptr;
      cur = tbl->get(key);
      if (!cur) return nullptr;
      prefix += (prefix.empty() ? "" : ".") + key;
      used_.insert(prefix);
      if (dot == std::string::npos) break;
      pos = dot + 1;
    }
    return cur;
  }

  void number(const std::string& path, double& out) {
    if (const auto* n = find(path)) {
      auto v = n->value<double>();
      if (!v || n->is_boolean()) fail(path, *n, "expected a number");
      out = *v;
    }
  }
  void integer(const std::string& path, int& out) {
    if (const auto* n = find(path)) {
      auto v = n->value<int64_t>();
      if (!n->is_integer() || !v) fail(path, *n, "expected an integer");
      out = static_cast<int>(*v);
    }
  }
  void text(const std::string& path, std::string& out) {
    if (const auto* n = find(path)) {
      auto v = n->value<std::string>();
      if (!v) fail(path, *n, "expected a string");
      out = *v;
    }
  }
  void numbers(const std::string& path, std::vector<double>& out) {
    if (const auto* n = find(path)) {
      const auto* arr = n->as_array();
      if (!arr) fail(path, *n, "expected an array of numbers");
      out.clear();
      for (auto&& e : *arr) {
        auto v = e.value<double>();
        if (!v || e.is_boolean()) fail(path, e, "expected an array of numbers");
        out.push_back(*v);
      }
    }
  }
  void triples(const std::string& path, std::vector<std::array<double, 3>>& out) {
    if (const auto* n = find(path)) {
      const auto* arr = n->as_array();
      if (!arr) fail(path, *n, "expected an array of [x, y, z] arrays");
      out.clear();
      for (auto&& e : *arr) {
        const auto* inner = e.as_array();
        if (!inner || inner->size() != 3) fail(path, e, "expected [x, y, z]");
        std::array<double, 3> p{};
        for (int i = 0; i < 3; ++i) {
          auto v = (*inner)[i].value<double>();
          if (!v) fail(path, e, "expected [x, y, z]");
          p[i] = *v;
        }
        out.push_back(p);
      }
    }
  }
  void range(const std::string& path, Range& out) {
    if (const auto* n = find(path)) {
      if (!n->as_table()) fail(path, *n, "expected {start, stop, points}");
      number(path + ".start", out.start);
      number(path + ".stop", out.stop);
      integer(path + ".points", out.points);
    }
  }

  // Every key present must have been read.
  void reject_unknown() const { walk(root_, ""); }

  [[noreturn]] static void fail(const std::string& path, const toml::node& n, const std::string& what) {
    throw ConfigError("config: key '" + path + "' (line " + std::to_string(n.source().begin.line) + "): " + what);
  }

 private:
  void walk(const toml::table& t, const std::string& prefix) const {
    for (auto&& [k, v] : t) {
      const std::string path = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
      if (!used_.count(path))
        throw ConfigError("config: unknown key '" + path + "' (line " + std::to_string(k.source().begin.line) + ")");
      if (const auto* sub = v.as_table()) walk(*sub, path);
    }
  }

  const toml::table& root_;
  std::set<std::string> used_;
};

inline void validate(const ScenarioConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  auto finite_range = [&](const Range& r, const std::string& name) {
    need(std::isfinite(r.start) && std::isfinite(r.stop), name + " must be finite");
    need(r.points >= 1 && r.points <= 100000, name + ".points must be in [1, 100000]");
  };
  need(c.gamma_ghz_per_t > 0 && c.d_nv_ghz > 0, "constants must be positive");
  need(c.mu0_ms_t > 0 && c.d_ex_gamma_mt_um2 > 0, "material parameters must be positive");
  need(c.alpha >= 0 && c.alpha < 1, "material.alpha must be in [0, 1)");
  need(c.d_nm > 0 && c.w_nm > 0 && c.l_nm > 0, "geometry dimensions must be positive");
  need(c.mode_index >= 0 && c.mode_index <= c.n_trunc, "geometry.mode_index must be in [0, n_trunc]");
  need(std::isfinite(c.field_value), "field.value must be finite");
  if (c.field_kind == FieldKind::resonance) {
    need(c.geometry == Geometry::bar, "field kind 'resonance' applies to the bar geometry");
    need(c.field_value == std::floor(c.field_value) && c.field_value >= 0 && c.field_value <= c.n_trunc,
         "field.value must be a mode index for kind 'resonance'");
  }
  if (c.field_kind == FieldKind::fixed) need(c.field_value >= 0, "field.value (mT) must be nonnegative");
  if (c.field_kind == FieldKind::detuning) need(c.field_value > 0, "field.value (MHz) must be positive");
  need(!c.nv_nm.empty(), "nv.positions_nm must not be empty");
  for (std::size_t i = 0; i < c.nv_nm.size(); ++i) {
    const auto& p = c.nv_nm[i];
    need(std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]), "nv position must be finite");
    const bool inside_xy = p[0] >= 0 && p[0] <= c.d_nm && p[1] >= 0 && p[1] <= c.w_nm;
    const bool inside = c.geometry == Geometry::waveguide ? inside_xy : inside_xy && p[2] >= 0 && p[2] <= c.l_nm;
    need(!inside, "nv position " + std::to_string(i) + " lies inside the magnet");
  }
  need(c.t2_star_ms > 0, "nv.t2_star_ms must be positive");
  need(c.delta_f_mhz > 0 && std::isfinite(c.delta_f_mhz), "protocol.delta_f_mhz must be positive");
  need(std::isfinite(c.delta_idle_mhz), "protocol.delta_idle_mhz must be finite");
  need(!c.temperatures_mk.empty(), "protocol.temperatures_mk must not be empty");
  for (double t : c.temperatures_mk) need(t >= 0 && std::isfinite(t), "temperatures must be finite and nonnegative");
  need(c.duration_us > 0 && c.tau_max_us > 0, "protocol durations must be positive");
  need(c.samples >= 2, "protocol.samples must be at least 2");
  if (c.g_khz) need(*c.g_khz > 0 && c.mode_ghz > 0, "protocol.g_khz and protocol.mode_ghz must be positive");
  need(c.quad_rtol > 0 && c.quad_rtol < 1e-2, "numerics.quad_rtol must be in (0, 1e-2)");
  need(c.n_trunc >= 1, "numerics.n_trunc must be positive");
  need(c.fock_cutoff >= 1, "numerics.fock_cutoff must be positive");
  finite_range(c.k_per_um, "sweep.k_per_um");
  need(c.k_per_um.start > 0, "sweep.k_per_um.start must be positive");
  finite_range(c.map_x_nm, "sweep.map_x_nm");
  finite_range(c.map_y_nm, "sweep.map_y_nm");
  finite_range(c.map_z_nm, "sweep.map_z_nm");
  finite_range(c.dz_nm, "sweep.dz_nm");
  finite_range(c.field_mt, "sweep.field_mt");
  need(c.field_mt.start >= 0, "sweep.field_mt must be nonnegative");
  need(c.sweep_modes >= 1, "sweep.modes must be positive");
  finite_range(c.phase_alpha, "sweep.phase_alpha");
  need(c.phase_alpha.start > 0 && c.phase_alpha.stop > 0, "sweep.phase_alpha must be positive");
  need(!c.phase_gamma2_per_s.empty(), "sweep.phase_gamma2_per_s must not be empty");
  for (double g : c.phase_gamma2_per_s) need(g >= 0 && std::isfinite(g), "sweep.phase_gamma2_per_s must be finite");
  need(!c.out_dir.empty(), "output.dir must not be empty");
}

inline ScenarioConfig parse_config(const std::string& text, const std::string& source = "config") {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    throw ConfigError("config: " + std::string(e.description()) + " (line " +
                      std::to_string(e.source().begin.line) + ")");
  }
  Reader r(root);
  ScenarioConfig c;
  std::string kind = to_string(c.geometry);
  r.text("geometry.kind", kind);
  if (kind == "waveguide") c = waveguide_defaults();
  else if (kind != "bar") throw ConfigError("config: geometry.kind must be 'bar' or 'waveguide'");

  r.number("constants.gamma_ghz_per_t", c.gamma_ghz_per_t);
  r.number("constants.d_nv_ghz", c.d_nv_ghz);
  r.number("material.mu0_ms_t", c.mu0_ms_t);
  r.number("material.d_ex_gamma_mt_um2", c.d_ex_gamma_mt_um2);
  r.number("material.alpha", c.alpha);
  r.number("geometry.d_nm", c.d_nm);
  r.number("geometry.w_nm", c.w_nm);
  r.number("geometry.l_nm", c.l_nm);
  r.integer("geometry.mode_index", c.mode_index);

  std::string fk = to_string(c.field_kind);
  r.text("field.kind", fk);
  if (fk == "fixed") c.field_kind = FieldKind::fixed;
  else if (fk == "detuning") c.field_kind = FieldKind::detuning;
  else if (fk == "resonance") c.field_kind = FieldKind::resonance;
  else throw ConfigError("config: field.kind must be 'fixed', 'detuning' or 'resonance'");
  r.number("field.value", c.field_value);

  r.triples("nv.positions_nm", c.nv_nm);
  r.number("nv.t2_star_ms", c.t2_star_ms);

  std::string pt = to_string(c.protocol);
  r.text("protocol.type", pt);
  if (pt == "transduction") c.protocol = Protocol::transduction;
  else if (pt == "virtual") c.protocol = Protocol::virtual_exchange;
  else throw ConfigError("config: protocol.type must be 'transduction' or 'virtual'");
  r.number("protocol.delta_f_mhz", c.delta_f_mhz);
  r.number("protocol.delta_idle_mhz", c.delta_idle_mhz);
  r.numbers("protocol.temperatures_mk", c.temperatures_mk);
  r.number("protocol.duration_us", c.duration_us);
  r.integer("protocol.samples", c.samples);
  r.number("protocol.tau_max_us", c.tau_max_us);
  double g = -1;
  r.number("protocol.g_khz", g);
  if (g != -1) c.g_khz = g;
  r.number("protocol.mode_ghz", c.mode_ghz);

  r.number("numerics.quad_rtol", c.quad_rtol);
  r.integer("numerics.n_trunc", c.n_trunc);
  r.integer("numerics.fock_cutoff", c.fock_cutoff);

  r.range("sweep.k_per_um", c.k_per_um);
  r.range("sweep.map_x_nm", c.map_x_nm);
  r.range("sweep.map_y_nm", c.map_y_nm);
  r.range("sweep.map_z_nm", c.map_z_nm);
  r.range("sweep.dz_nm", c.dz_nm);
  r.range("sweep.field_mt", c.field_mt);
  r.integer("sweep.modes", c.sweep_modes);
  r.range("sweep.phase_alpha", c.phase_alpha);
  r.numbers("sweep.phase_gamma2_per_s", c.phase_gamma2_per_s);

  r.text("output.dir", c.out_dir);
  r.reject_unknown();
  validate(c);
  return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("config: cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), p.string());
}

inline std::string emit_config(const ScenarioConfig& c) {
  std::ostringstream o;
  auto num = [](double v) { return shortest(v); };
  auto range = [&](const Range& r) {
    return "{ start = " + num(r.start) + ", stop = " + num(r.stop) + ", points = " + std::to_string(r.points) + " }";
  };
  auto list = [&](const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
    return s + "]";
  };
  o << "# nvmag scenario\n\n";
  o << "[constants]\n";
  o << "gamma_ghz_per_t = " << num(c.gamma_ghz_per_t) << "   # gyromagnetic ratio / 2pi\n";
  o << "d_nv_ghz = " << num(c.d_nv_ghz) << "          # NV zero-field splitting\n\n";
  o << "[material]\n";
  o << "mu0_ms_t = " << num(c.mu0_ms_t) << "\n";
  o << "d_ex_gamma_mt_um2 = " << num(c.d_ex_gamma_mt_um2) << "   # exchange stiffness in gamma mT um^2\n";
  o << "alpha = " << num(c.alpha) << "   # Gilbert damping\n\n";
  o << "[geometry]\n";
  o << "kind = \"" << to_string(c.geometry) << "\"   # bar | waveguide\n";
  o << "d_nm = " << num(c.d_nm) << "\n";
  o << "w_nm = " << num(c.w_nm) << "\n";
  o << "l_nm = " << num(c.l_nm) << "   # bar length; waveguide section length for C_eq\n";
  o << "mode_index = " << c.mode_index << "   # bar mode of interest\n\n";
  o << "[field]\n";
  o << "kind = \"" << to_string(c.field_kind) << "\"   # fixed (mT) | detuning (MHz) | resonance (mode index)\n";
  o << "value = " << num(c.field_value) << "\n\n";
  o << "[nv]\n";
  o << "positions_nm = [";
  for (std::size_t i = 0; i < c.nv_nm.size(); ++i)
    o << (i ? ", " : "") << "[" << num(c.nv_nm[i][0]) << ", " << num(c.nv_nm[i][1]) << ", " << num(c.nv_nm[i][2])
      << "]";
  o << "]\n";
  o << "t2_star_ms = " << num(c.t2_star_ms) << "\n\n";
  o << "[protocol]\n";
  o << "type = \"" << to_string(c.protocol) << "\"   # transduction | virtual\n";
  o << "delta_f_mhz = " << num(c.delta_f_mhz) << "     # mode-NV detuning of the virtual exchange\n";
  o << "delta_idle_mhz = " << num(c.delta_idle_mhz) << "  # NV detuning while idle in transduction\n";
  o << "temperatures_mk = " << list(c.temperatures_mk) << "\n";
  o << "duration_us = " << num(c.duration_us) << "\n";
  o << "samples = " << c.samples << "\n";
  o << "tau_max_us = " << num(c.tau_max_us) << "   # longest variable wait in transduction\n";
  if (c.g_khz) o << "g_khz = " << num(*c.g_khz) << "\n";
  else o << "# g_khz = 517   # set to bypass the geometry and use g1 = g, g2 = -g\n";
  o << "mode_ghz = " << num(c.mode_ghz) << "   # mode frequency used with g_khz\n\n";
  o << "[numerics]\n";
  o << "quad_rtol = " << num(c.quad_rtol) << "\n";
  o << "n_trunc = " << c.n_trunc << "\n";
  o << "fock_cutoff = " << c.fock_cutoff << "\n\n";
  o << "[sweep]\n";
  o << "k_per_um = " << range(c.k_per_um) << "\n";
  o << "map_x_nm = " << range(c.map_x_nm) << "\n";
  o << "map_y_nm = " << range(c.map_y_nm) << "\n";
  o << "map_z_nm = " << range(c.map_z_nm) << "\n";
  o << "dz_nm = " << range(c.dz_nm) << "\n";
  o << "field_mt = " << range(c.field_mt) << "\n";
  o << "modes = " << c.sweep_modes << "\n";
  o << "phase_alpha = " << range(c.phase_alpha) << "   # logarithmic grid\n";
  o << "phase_gamma2_per_s = " << list(c.phase_gamma2_per_s) << "\n\n";
  o << "[output]\n";
  o << "dir = \"" << c.out_dir << "\"\n";
  return o.str();
}

// ── Output tables ──

struct Column {
  std::string name, unit;
};

inline std::string unit_suffix(std::string unit) {
  for (auto& ch : unit) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (unit.rfind("1/", 0) == 0) unit = "per_" + unit.substr(2);
  std::string out;
  for (char ch : unit) out += ch == '/' ? std::string("_per_") : std::string(1, ch);
  return out;
}

// Every column has a unit; dimensional columns end in the unit suffix.
inline void check_schema(const std::vector<Column>& cols) {
  std::set<std::string> seen;
  for (const auto& c : cols) {
    if (c.name.empty() || c.unit.empty()) throw std::logic_error("csv schema: column without name or unit");
    if (!seen.insert(c.name).second) throw std::logic_error("csv schema: duplicate column " + c.name);
    if (c.unit == "1") continue;
    const std::string suf = "_" + unit_suffix(c.unit);
    if (c.name.size() <= suf.size() || c.name.compare(c.name.size() - suf.size(), suf.size(), suf) != 0)
      throw std::logic_error("csv schema: column " + c.name + " lacks unit suffix " + suf);
  }
}

struct Table {
  std::vector<Column> columns;
  std::vector<std::vector<double>> rows;

  explicit Table(std::vector<Column> cols) : columns(std::move(cols)) { check_schema(columns); }
  void add(std::vector<double> row) {
    if (row.size() != columns.size()) throw std::logic_error("csv row width mismatch");
    rows.push_back(std::move(row));
  }
  std::string str() const {
    std::string s;
    for (std::size_t i = 0; i < columns.size(); ++i) s += (i ? "," : "") + columns[i].name;
    s += "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) s += (i ? "," : "") + columns[i].unit;
    s += "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + fixed_precision(r[i]);
      s += "\n";
    }
    return s;
  }
};

inline std::string fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ── Run context ──

struct RunContext {
  ScenarioConfig config;
  std::filesystem::path out;
  int jobs = 1;
  json results = json::object();
  json outputs = json::array();
  std::mutex mu;

  void write(const std::string& name, const Table& t) {
    const std::string text = t.str();
    {
      std::ofstream f(out / name, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + (out / name).string());
      f << text;
    }
    std::lock_guard<std::mutex> lock(mu);
    outputs.push_back({{"file", name}, {"rows", t.rows.size()}, {"fnv1a64", fnv1a64(text)}});
  }
};

// Independent work items on up to `jobs` threads; results land in fixed
// slots, so output order never depends on scheduling.
template <class F>
void parallel_for(int n, int jobs, F&& f) {
  std::vector<std::exception_ptr> errs(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  const int nt = std::max(1, std::min(jobs, n));
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

// Re-raise numerical failures as physics errors tagged with the point.
template <class F>
auto at_point(const json& point, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const PhysicsError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const std::domain_error*>(&e) || dynamic_cast<const std::out_of_range*>(&e))
      throw PhysicsError(e.what(), point);
    throw;
  } catch (const std::runtime_error& e) {
    throw PhysicsError(e.what(), point);
  }
}

// ── Model construction ──

inline void require_geometry(const ScenarioConfig& c, Geometry g, const std::string& cmd) {
  if (c.geometry != g)
    throw ConfigError(cmd + ": needs geometry.kind = \"" + to_string(g) + "\", got \"" + to_string(c.geometry) + "\"");
}

inline waveguide::WaveguideModel make_waveguide(const ScenarioConfig& c) {
  waveguide::WaveguideModel m;
  m.d = c.d_nm * 1e-9;
  m.w = c.w_nm * 1e-9;
  m.material = c.material();
  m.constants = c.constants();
  m.quad.rel_tol = c.quad_rtol;
  if (c.field_kind == FieldKind::fixed) m.h_ext = units::mt(c.field_value);
  else
    m.h_ext = at_point({{"field_detuning_mhz", c.field_value}},
                       [&] { return waveguide::find_field_for_detuning(m, units::mhz(c.field_value)); });
  return m;
}

struct BarSetup {
  bar::BarModel model;
  bar::BarGeometry geometry;
  bar::BarSpectrum spectrum;
};

inline BarSetup make_bar(const ScenarioConfig& c) {
  BarSetup s;
  auto& m = s.model;
  m.d = c.d_nm * 1e-9;
  m.w = c.w_nm * 1e-9;
  m.l = c.l_nm * 1e-9;
  m.material = c.material();
  m.constants = c.constants();
  m.n_trunc = c.n_trunc;
  m.quad.rel_tol = c.quad_rtol;
  s.geometry = at_point({{"stage", "assembly"}}, [&] { return bar::assemble_geometry(m); });
  at_point({{"field_kind", to_string(c.field_kind)}, {"field_value", c.field_value}}, [&] {
    switch (c.field_kind) {
      case FieldKind::fixed: m.h_ext = units::mt(c.field_value); break;
      case FieldKind::resonance:
        m.h_ext = bar::find_resonant_field(m, s.geometry, static_cast<int>(c.field_value));
        break;
      case FieldKind::detuning:
        m.h_ext = bar::find_resonant_field(m, s.geometry, c.mode_index, two_pi * 1e4, units::mhz(c.field_value));
        break;
    }
    s.spectrum = bar::bar_spectrum(m, s.geometry);
    return 0;
  });
  return s;
}

// Coupling constants and mode frequency feeding the dynamics.
struct DynamicsInputs {
  cd g1, g2;
  double omega = 0;
};

inline DynamicsInputs dynamics_inputs(const ScenarioConfig& c) {
  if (c.g_khz) return {units::khz(*c.g_khz), -units::khz(*c.g_khz), units::ghz(c.mode_ghz)};
  require_geometry(c, Geometry::bar, "dynamics");
  if (c.nv_nm.size() < 2) throw ConfigError("dynamics: nv.positions_nm needs two positions");
  const auto s = make_bar(c);
  const int p = c.mode_index;
  DynamicsInputs d;
  d.g1 = bar::bar_coupling(s.model, s.spectrum, c.nv(0)).g_lower[p];
  d.g2 = bar::bar_coupling(s.model, s.spectrum, c.nv(1)).g_lower[p];
  d.omega = s.spectrum.omega(p);
  return d;
}

inline lindblad::OpenSystemModel open_model(const ScenarioConfig& c, const DynamicsInputs& d, double t_mk) {
  auto m = lindblad::make_model(std::abs(d.g1), d.omega, c.alpha, c.t2_star_ms * 1e-3, t_mk * 1e-3, c.fock_cutoff,
                                c.constants());
  m.g1 = d.g1;
  m.g2 = d.g2;
  return m;
}

inline std::string temperature_tag(double t_mk) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%gmK", t_mk);
  return buf;
}

// ── Subcommands ──

inline void run_dispersion(RunContext& ctx) {
  const auto& c = ctx.config;
  require_geometry(c, Geometry::waveguide, "dispersion");
  const auto m = make_waveguide(c);
  const auto ks = c.k_per_um.linear();
  const auto nv = c.nv(0);
  Table t({{"k_rad_per_um", "rad/um"}, {"f_ghz", "GHz"}, {"a_ghz", "GHz"}, {"b_abs_ghz", "GHz"}, {"g_abs", "1"}});
  std::vector<std::vector<double>> rows(ks.size());
  parallel_for(static_cast<int>(ks.size()), ctx.jobs, [&](int i) {
    const double k = ks[i] * 1e6;
    at_point({{"k_rad_per_um", ks[i]}}, [&] {
      const auto me = waveguide::matrix_elements_00(m, k);
      const double f = waveguide::band_frequency(m, k);
      const double g = std::abs(waveguide::coupling_g(m, nv[0], nv[1], k));
      rows[i] = {ks[i], units::to_ghz(f), units::to_ghz(me.a_k), units::to_ghz(std::abs(me.b_k)), g};
      return 0;
    });
  });
  for (auto& r : rows) t.add(r);
  ctx.write("dispersion.csv", t);
  const auto bm = at_point({{"stage", "band minimum"}}, [&] { return waveguide::band_minimum(m); });
  ctx.results["field_mt"] = units::to_mt(m.h_ext);
  ctx.results["k_min_rad_per_um"] = bm.k_min * 1e-6;
  ctx.results["f_min_ghz"] = units::to_ghz(bm.omega_min);
  ctx.results["f_nv_ghz"] = units::to_ghz(m.omega_nv());
}

inline void run_coupling_map(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto xs = c.map_x_nm.linear(), ys = c.map_y_nm.linear(), zs = c.map_z_nm.linear();
  if (c.geometry == Geometry::waveguide) {
    const auto m = make_waveguide(c);
    const auto bm = waveguide::band_minimum(m);
    Table t({{"x_nm", "nm"}, {"y_nm", "nm"}, {"g_abs", "1"}});
    std::vector<std::vector<double>> rows(xs.size() * ys.size());
    parallel_for(static_cast<int>(rows.size()), ctx.jobs, [&](int i) {
      const double x = xs[i / ys.size()], y = ys[i % ys.size()];
      if (waveguide::inside_cross_section(m, x * 1e-9, y * 1e-9)) return;
      at_point({{"x_nm", x}, {"y_nm", y}}, [&] {
        rows[i] = {x, y, std::abs(waveguide::coupling_g(m, x * 1e-9, y * 1e-9, bm.k_min))};
        return 0;
      });
    });
    for (auto& r : rows)
      if (!r.empty()) t.add(r);
    ctx.write("coupling_map.csv", t);
    ctx.results["k_min_rad_per_um"] = bm.k_min * 1e-6;
    return;
  }
  const auto s = make_bar(c);
  const int p = c.mode_index;
  Table t({{"x_nm", "nm"}, {"y_nm", "nm"}, {"z_nm", "nm"}, {"g_lower_khz", "kHz"}, {"g_upper_khz", "kHz"}});
  const std::size_t n = xs.size() * ys.size() * zs.size();
  std::vector<std::vector<double>> rows(n);
  parallel_for(static_cast<int>(n), ctx.jobs, [&](int i) {
    const double x = xs[i / (ys.size() * zs.size())], y = ys[(i / zs.size()) % ys.size()], z = zs[i % zs.size()];
    const numerics::Vec3 r(x * 1e-9, y * 1e-9, z * 1e-9);
    if (bar::inside_bar(s.model, r)) return;
    at_point({{"x_nm", x}, {"y_nm", y}, {"z_nm", z}}, [&] {
      const auto cs = bar::bar_coupling(s.model, s.spectrum, r);
      rows[i] = {x, y, z, units::to_khz(std::abs(cs.g_lower[p])), units::to_khz(std::abs(cs.g_upper[p]))};
      return 0;
    });
  });
  for (auto& r : rows)
    if (!r.empty()) t.add(r);
  ctx.write("coupling_map.csv", t);
  ctx.results["field_mt"] = units::to_mt(s.model.h_ext);
  ctx.results["mode_index"] = p;
}

inline void run_geff_sweep(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto dzs = c.dz_nm.linear();
  const double t2 = c.t2_star_ms * 1e-3;
  const auto nv = c.nv(0);
  if (c.geometry == Geometry::waveguide) {
    const auto m = make_waveguide(c);
    waveguide::KGridSpec gs;
    for (double dz : dzs) gs.delta_z_max = std::max(gs.delta_z_max, std::abs(dz) * 1e-9);
    const auto prof = at_point({{"stage", "coupling profile"}}, [&] { return waveguide::coupling_profile(m, nv[0], nv[1], gs); });
    const double gk = std::abs(waveguide::coupling_g(m, nv[0], nv[1], prof.k_min));
    const double dw = prof.omega_min - prof.omega_nv;
    Table t({{"dz_nm", "nm"}, {"geff_khz", "kHz"}, {"analytic_khz", "kHz"}, {"validity", "1"}, {"gdr", "1"}});
    for (double dz : dzs) {
      const auto e = waveguide::effective_coupling(prof, dz * 1e-9);
      const double an = waveguide::analytic_geff(gk, prof.k_min, dz * 1e-9, dw, m);
      t.add({dz, units::to_khz(e.g_eff), units::to_khz(an), e.validity, waveguide::er_gdr(e.g_eff, t2).gdr});
    }
    ctx.write("geff_sweep.csv", t);
    const auto ce = waveguide::equivalent_cooperativity(m, gk, prof.omega_min, c.l_nm * 1e-9, c.alpha, t2);
    ctx.results["field_mt"] = units::to_mt(m.h_ext);
    ctx.results["g_kmin"] = gk;
    ctx.results["g_bar_khz"] = units::to_khz(ce.g_bar);
    ctx.results["c_eq"] = ce.c_eq;
    ctx.results["validity"] = waveguide::perturbation_validity(prof);
    return;
  }
  const auto s = make_bar(c);
  const int p = c.mode_index;
  const cd g1 = bar::bar_coupling(s.model, s.spectrum, nv).g_lower[p];
  Table t({{"dz_nm", "nm"}, {"geff_khz", "kHz"}, {"gdr", "1"}});
  std::vector<std::vector<double>> rows(dzs.size());
  parallel_for(static_cast<int>(dzs.size()), ctx.jobs, [&](int i) {
    numerics::Vec3 r2 = nv;
    r2[2] += dzs[i] * 1e-9;
    if (bar::inside_bar(s.model, r2)) return;
    at_point({{"dz_nm", dzs[i]}}, [&] {
      const cd g2 = bar::bar_coupling(s.model, s.spectrum, r2).g_lower[p];
      const double ge = std::abs(bar::bar_geff(g1, g2, units::mhz(c.delta_f_mhz)).g_eff);
      rows[i] = {dzs[i], units::to_khz(ge), waveguide::er_gdr(ge, t2).gdr};
      return 0;
    });
  });
  for (auto& r : rows)
    if (!r.empty()) t.add(r);
  ctx.write("geff_sweep.csv", t);
  ctx.results["field_mt"] = units::to_mt(s.model.h_ext);
  ctx.results["g1_khz"] = units::to_khz(std::abs(g1));
}

inline void run_bar_modes(RunContext& ctx) {
  const auto& c = ctx.config;
  require_geometry(c, Geometry::bar, "bar-modes");
  const auto s = make_bar(c);
  const int nshow = std::min(c.sweep_modes, s.spectrum.modes());
  const auto hs = c.field_mt.linear();
  Table sweep({{"field_mt", "mT"}, {"p", "1"}, {"f_ghz", "GHz"}, {"f_nv_lower_ghz", "GHz"}});
  std::vector<std::vector<std::vector<double>>> rows(hs.size());
  parallel_for(static_cast<int>(hs.size()), ctx.jobs, [&](int i) {
    at_point({{"field_mt", hs[i]}}, [&] {
      auto m = s.model;
      m.h_ext = units::mt(hs[i]);
      const auto sp = bar::bar_spectrum(m, s.geometry);
      const double fnv = units::to_ghz(nv_transition_frequencies(m.h_ext, m.constants).first);
      for (int p = 0; p < nshow; ++p) rows[i].push_back({hs[i], double(p), units::to_ghz(sp.omega(p)), fnv});
      return 0;
    });
  });
  for (auto& block : rows)
    for (auto& r : block) sweep.add(r);
  ctx.write("bar_modes.csv", sweep);
  Table cp({{"p", "1"}, {"f_ghz", "GHz"}, {"g_lower_khz", "kHz"}, {"g_upper_khz", "kHz"}});
  const auto cs = bar::bar_coupling(s.model, s.spectrum, c.nv(0));
  for (int p = 0; p < s.spectrum.modes(); ++p)
    cp.add({double(p), units::to_ghz(s.spectrum.omega(p)), units::to_khz(std::abs(cs.g_lower[p])),
            units::to_khz(std::abs(cs.g_upper[p]))});
  ctx.write("bar_couplings.csv", cp);
  ctx.results["field_mt"] = units::to_mt(s.model.h_ext);
  ctx.results["f_mode_ghz"] = units::to_ghz(s.spectrum.omega(c.mode_index));
  ctx.results["f_nv_ghz"] = units::to_ghz(nv_transition_frequencies(s.model.h_ext, s.model.constants).first);
  ctx.results["g_lower_khz"] = units::to_khz(std::abs(cs.g_lower[c.mode_index]));
  ctx.results["paraunitary_residual"] = s.spectrum.decomposition.residual;
}

inline Table trace_table(const lindblad::SimulationTrace& tr) {
  Table t({{"t_us", "us"},
           {"p1e", "1"},
           {"p2e", "1"},
           {"n_mean", "1"},
           {"negativity_norm", "1"},
           {"chsh", "1"},
           {"fidelity", "1"},
           {"fidelity_phase_max", "1"}});
  for (std::size_t i = 0; i < tr.size(); ++i)
    t.add({tr.times[i] * 1e6, tr.p1e[i], tr.p2e[i], tr.n_mean[i], tr.negativity_norm[i], tr.chsh[i], tr.fidelity[i],
           tr.fidelity_phase_max[i]});
  return t;
}

inline void run_simulate(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto d = dynamics_inputs(c);
  const auto& ts = c.temperatures_mk;
  std::vector<std::vector<double>> rows(ts.size());
  parallel_for(static_cast<int>(ts.size()), ctx.jobs, [&](int i) {
    at_point({{"temperature_mk", ts[i]}}, [&] {
      const auto m = open_model(c, d, ts[i]);
      lindblad::Peak pk, pm;
      lindblad::SimulationTrace tr;
      if (c.protocol == Protocol::transduction) {
        std::vector<double> grid;
        for (int k = 0; k <= c.samples; ++k) grid.push_back(c.tau_max_us * 1e-6 * k / c.samples);
        auto sw = lindblad::run_transduction(m, grid, units::mhz(c.delta_idle_mhz));
        tr = std::move(sw.trace);
        pk = sw.peak;
        pm = sw.peak_phase_max;
      } else {
        auto vr = lindblad::run_virtual_exchange(m, units::mhz(c.delta_f_mhz), c.duration_us * 1e-6, c.samples);
        tr = std::move(vr.trace);
        pk = vr.peak;
        pm = vr.peak_phase_max;
      }
      ctx.write("trace_" + std::string(to_string(c.protocol)) + "_" + temperature_tag(ts[i]) + ".csv",
                trace_table(tr));
      rows[i] = {ts[i], pk.value, pk.time * 1e6, pm.value, pm.time * 1e6, double(m.n_max), m.n_th};
      return 0;
    });
  });
  Table t({{"temperature_mk", "mK"},
           {"peak_fidelity", "1"},
           {"peak_time_us", "us"},
           {"peak_fidelity_phase_max", "1"},
           {"peak_phase_max_time_us", "us"},
           {"n_max", "1"},
           {"n_thermal", "1"}});
  for (auto& r : rows) t.add(r);
  ctx.write("simulate_summary.csv", t);
  ctx.results["protocol"] = to_string(c.protocol);
  ctx.results["frame"] = c.protocol == Protocol::transduction ? "mode" : "nv";
  ctx.results["g1_khz"] = units::to_khz(std::abs(d.g1));
  ctx.results["g2_khz"] = units::to_khz(std::abs(d.g2));
  ctx.results["f_mode_ghz"] = units::to_ghz(d.omega);
}

inline void run_gate_fidelity(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto d = dynamics_inputs(c);
  const auto& ts = c.temperatures_mk;
  std::vector<std::vector<double>> rows(ts.size());
  parallel_for(static_cast<int>(ts.size()), ctx.jobs, [&](int i) {
    at_point({{"temperature_mk", ts[i]}}, [&] {
      const auto m = open_model(c, d, ts[i]);
      const auto curve = lindblad::average_gate_fidelity(m, units::mhz(c.delta_f_mhz), -1, c.samples);
      Table t({{"t_us", "us"}, {"average_fidelity", "1"}});
      for (std::size_t k = 0; k < curve.times.size(); ++k) t.add({curve.times[k] * 1e6, curve.average_fidelity[k]});
      ctx.write("gate_" + temperature_tag(ts[i]) + ".csv", t);
      rows[i] = {ts[i], curve.gate_time * 1e6, curve.at_gate_time, curve.peak.value, curve.peak.time * 1e6};
      return 0;
    });
  });
  Table t({{"temperature_mk", "mK"},
           {"gate_time_us", "us"},
           {"fidelity_at_gate", "1"},
           {"peak_fidelity", "1"},
           {"peak_time_us", "us"}});
  for (auto& r : rows) t.add(r);
  ctx.write("gate_summary.csv", t);
  ctx.results["g1_khz"] = units::to_khz(std::abs(d.g1));
  ctx.results["delta_f_mhz"] = c.delta_f_mhz;
}

inline void run_phase_diagram(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto d = dynamics_inputs(c);
  const lindblad::PhaseInputs in{std::abs(d.g1), d.omega, units::mhz(c.delta_f_mhz)};
  const auto alphas = c.phase_alpha.logarithmic();
  const auto& g2s = c.phase_gamma2_per_s;
  std::vector<lindblad::PhaseCell> cells(alphas.size() * g2s.size());
  parallel_for(static_cast<int>(cells.size()), ctx.jobs, [&](int i) {
    const double a = alphas[i / g2s.size()], g2 = g2s[i % g2s.size()];
    at_point({{"alpha", a}, {"gamma2_per_s", g2}}, [&] {
      cells[i] = lindblad::protocol_phase_map(in, {a}, {g2}).front();
      return 0;
    });
  });
  Table t({{"alpha", "1"}, {"gamma2_per_s", "1/s"}, {"fid_onres", "1"}, {"fid_offres", "1"}, {"winner", "1"}});
  for (const auto& cell : cells) t.add({cell.alpha, cell.gamma2, cell.fid_onres, cell.fid_offres, double(cell.winner)});
  ctx.write("phase_diagram.csv", t);
  std::vector<double> cross(g2s.size(), std::nan(""));
  parallel_for(static_cast<int>(g2s.size()), ctx.jobs, [&](int i) {
    try {
      cross[i] = lindblad::crossover_alpha_numeric(in, g2s[i]);
    } catch (const std::domain_error&) {
      // no crossover inside the bracket; left as NaN
    }
  });
  Table b({{"gamma2_per_s", "1/s"}, {"alpha_crossover", "1"}, {"alpha_omega_over_g", "1"}});
  for (std::size_t i = 0; i < g2s.size(); ++i) b.add({g2s[i], cross[i], cross[i] * in.omega / in.g});
  ctx.write("phase_boundary.csv", b);
  ctx.results["g_khz"] = units::to_khz(in.g);
  ctx.results["delta_over_g"] = in.delta_omega / in.g;
}

inline void run_decoherence(RunContext& ctx) {
  const auto& c = ctx.config;
  require_geometry(c, Geometry::bar, "decoherence");
  const auto s = make_bar(c);
  const auto nv = c.nv(0);
  const int p = c.mode_index;
  const auto cs = bar::bar_coupling(s.model, s.spectrum, nv);
  const double wnv = nv_transition_frequencies(s.model.h_ext, s.model.constants).first;
  const auto& ts = c.temperatures_mk;
  Table t({{"temperature_mk", "mK"},
           {"tau2_higher_order_us", "us"},
           {"t2star_higher_order_us", "us"},
           {"tau2_stark_us", "us"},
           {"t2star_stark_us", "us"},
           {"t2star_us", "us"},
           {"gamma_lower_minus_per_s", "1/s"},
           {"gamma_lower_plus_per_s", "1/s"},
           {"gamma_upper_minus_per_s", "1/s"},
           {"gamma_upper_plus_per_s", "1/s"},
           {"modes_extrapolated", "1"}});
  std::vector<std::vector<double>> rows(ts.size());
  parallel_for(static_cast<int>(ts.size()), ctx.jobs, [&](int i) {
    at_point({{"temperature_mk", ts[i]}}, [&] {
      const double tk = ts[i] * 1e-3;
      const auto ho = bar::dephasing_higher_order(s.model, s.spectrum, nv, tk, c.alpha);
      const auto st = bar::dephasing_stark(cs, s.spectrum, wnv, tk, c.alpha, p, s.model.constants);
      const auto lo =
          bar::t1_decay_rates(cs, s.spectrum, bar::Transition::lower, s.model.h_ext, tk, c.alpha, p, s.model.constants);
      const auto up =
          bar::t1_decay_rates(cs, s.spectrum, bar::Transition::upper, s.model.h_ext, tk, c.alpha, p, s.model.constants);
      const double rl = ho.rate_lorentzian + st.rate_lorentzian;
      rows[i] = {ts[i],          ho.tau2 * 1e6,    ho.t2_star * 1e6, st.tau2 * 1e6,
                 st.t2_star * 1e6, rl > 0 ? 1e6 / rl : std::numeric_limits<double>::infinity(),
                 lo.gamma_minus, lo.gamma_plus,    up.gamma_minus,   up.gamma_plus,
                 double(ho.modes_extrapolated)};
      return 0;
    });
  });
  for (auto& r : rows) t.add(r);
  ctx.write("decoherence.csv", t);
  ctx.results["field_mt"] = units::to_mt(s.model.h_ext);
  ctx.results["g_lower_khz"] = units::to_khz(std::abs(cs.g_lower[p]));
}

inline const std::map<std::string, std::function<void(RunContext&)>>& subcommands() {
  static const std::map<std::string, std::function<void(RunContext&)>> table{
      {"dispersion", run_dispersion},       {"coupling-map", run_coupling_map}, {"geff-sweep", run_geff_sweep},
      {"bar-modes", run_bar_modes},         {"simulate", run_simulate},         {"gate-fidelity", run_gate_fidelity},
      {"phase-diagram", run_phase_diagram}, {"decoherence", run_decoherence}};
  return table;
}

// ── Driver ──

struct Overrides {
  std::optional<std::string> out;
  std::optional<double> quad_rtol;
  std::optional<int> n_trunc, fock_cutoff;
  int jobs = 1;
};

inline ScenarioConfig apply(ScenarioConfig c, const Overrides& o) {
  if (o.out) c.out_dir = *o.out;
  if (o.quad_rtol) c.quad_rtol = *o.quad_rtol;
  if (o.n_trunc) c.n_trunc = *o.n_trunc;
  if (o.fock_cutoff) c.fock_cutoff = *o.fock_cutoff;
  validate(c);
  return c;
}

inline json manifest_base(const std::string& sub, const ScenarioConfig& c, int jobs) {
  const std::string text = emit_config(c);
  ScenarioConfig hashed = c;
  hashed.out_dir = ".";
  const auto k = c.constants();
  const auto mat = c.material();
  json m;
  m["tool"] = "nvmag-cli";
  m["version"] = version;
  m["subcommand"] = sub;
  m["config_hash"] = fnv1a64(emit_config(hashed) + "\n" + version + "\n" + sub);
  m["constants"] = {{"gamma_rad_per_s_t", k.gamma},
                    {"d_nv_rad_per_s", k.d_nv},
                    {"boltzmann_over_hbar", k.boltzmann_over_hbar},
                    {"mu0_ms_t", mat.mu0_ms},
                    {"d_ex_rad_m2_per_s", mat.d_ex},
                    {"alpha", mat.alpha}};
  m["quadrature"] = {{"rel_tol", c.quad_rtol}};
  m["mode_truncation"] = c.n_trunc;
  m["fock_cutoff"] = c.fock_cutoff;
  m["jobs"] = jobs;
  m["config"] = text;
  return m;
}

// Runs one subcommand and writes its manifest; returns the exit code.
inline int run(const std::string& sub, const ScenarioConfig& cfg, int jobs, std::ostream& err) {
  const auto& table = subcommands();
  auto it = table.find(sub);
  if (it == table.end()) {
    err << "unknown subcommand: " << sub << "\n";
    return exit_config;
  }
  RunContext ctx;
  ctx.config = cfg;
  ctx.out = cfg.out_dir;
  ctx.jobs = std::max(1, jobs);
  json m = manifest_base(sub, cfg, ctx.jobs);
  m["started_utc"] = utc_now();
  int code = exit_ok;
  try {
    std::filesystem::create_directories(ctx.out);
    it->second(ctx);
    m["status"] = "ok";
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    m["status"] = "config_error";
    m["error"] = {{"message", e.what()}};
    code = exit_config;
  } catch (const PhysicsError& e) {
    err << "physics error at " << e.point().dump() << ": " << e.what() << "\n";
    m["status"] = "physics_error";
    m["error"] = {{"message", e.what()}, {"point", e.point()}};
    code = exit_physics;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    m["status"] = "physics_error";
    m["error"] = {{"message", e.what()}};
    code = exit_physics;
  }
  m["finished_utc"] = utc_now();
  m["results"] = ctx.results;
  m["outputs"] = ctx.outputs;
  std::error_code ec;
  std::filesystem::create_directories(ctx.out, ec);
  std::ofstream f(ctx.out / ("manifest_" + sub + ".json"));
  if (f) f << m.dump(2) << "\n";
  return code;
}

}  // namespace nvmag::cli
