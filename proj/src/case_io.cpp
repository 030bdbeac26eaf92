#include "tacoord/case_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "tacoord/errors.hpp"

namespace tacoord {

using nlohmann::json;

namespace {

BusType parse_bus_type(const std::string& s) {
  if (s == "slack") return BusType::Slack;
  if (s == "PV" || s == "pv") return BusType::PV;
  if (s == "PQ" || s == "pq") return BusType::PQ;
  throw InputError("unknown bus type '" + s + "'");
}

std::string bus_type_name(BusType t) {
  switch (t) {
    case BusType::Slack: return "slack";
    case BusType::PV: return "PV";
    case BusType::PQ: return "PQ";
  }
  return "PQ";
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

SystemCase case_from_json(const json& j) {
  SystemCase c;
  try {
    c.name = get_or<std::string>(j, "name", "case");
    for (const auto& b : j.at("buses")) {
      c.buses.push_back({b.at("id").get<int>(), parse_bus_type(b.at("type").get<std::string>()),
                         get_or(b, "v", 1.0)});
    }
    for (const auto& l : j.at("lines")) {
      c.lines.push_back({l.at("id").get<int>(), l.at("from").get<int>(), l.at("to").get<int>(),
                         get_or(l, "r", 0.0), l.at("x").get<double>(), get_or(l, "b", 0.0)});
    }
    for (const auto& g : j.at("generators")) {
      c.generators.push_back({g.at("bus").get<int>(), g.at("h").get<double>(), get_or(g, "d", 0.0),
                              g.at("xd_prime").get<double>(), get_or(g, "pm", 0.0), get_or(g, "emf", 1.0)});
    }
    for (const auto& ld : j.at("loads")) {
      c.loads.push_back({ld.at("bus").get<int>(), get_or(ld, "p", 0.0), get_or(ld, "q", 0.0)});
    }
    for (const auto& i : j.at("ibrs")) {
      Ibr ibr;
      ibr.bus = i.at("bus").get<int>();
      ibr.p_ref = get_or(i, "p_ref", 0.0);
      const auto& d = i.at("dc");
      ibr.dc.gain = d.at("gain").get<double>();
      ibr.dc.tw = d.at("tw").get<double>();
      ibr.dc.t1 = get_or(d, "t1", 0.0);
      ibr.dc.t2 = d.at("t2").get<double>();
      ibr.dc.input_generator = d.at("input_generator").get<int>();
      ibr.dc.p_max = d.at("p_max").get<double>();
      c.ibrs.push_back(ibr);
    }
    c.feature_lines = j.at("feature_lines").get<std::vector<int>>();
    c.reference_generator = j.at("reference_generator").get<int>();
    c.base_mva = get_or(j, "base_mva", 100.0);
    c.nominal_hz = get_or(j, "nominal_hz", 60.0);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed case: ") + e.what());
  }
  c.validate();
  return c;
}

json case_to_json(const SystemCase& c) {
  json j;
  j["name"] = c.name;
  j["base_mva"] = c.base_mva;
  j["nominal_hz"] = c.nominal_hz;
  j["reference_generator"] = c.reference_generator;
  j["feature_lines"] = c.feature_lines;
  j["buses"] = json::array();
  for (const auto& b : c.buses) j["buses"].push_back({{"id", b.id}, {"type", bus_type_name(b.type)}, {"v", b.v_set}});
  j["lines"] = json::array();
  for (const auto& l : c.lines) {
    j["lines"].push_back({{"id", l.id}, {"from", l.from}, {"to", l.to}, {"r", l.r}, {"x", l.x}, {"b", l.b}});
  }
  j["generators"] = json::array();
  for (const auto& g : c.generators) {
    j["generators"].push_back(
        {{"bus", g.bus}, {"h", g.h}, {"d", g.d}, {"xd_prime", g.xd_prime}, {"pm", g.pm}, {"emf", g.emf}});
  }
  j["loads"] = json::array();
  for (const auto& ld : c.loads) j["loads"].push_back({{"bus", ld.bus}, {"p", ld.p}, {"q", ld.q}});
  j["ibrs"] = json::array();
  for (const auto& i : c.ibrs) {
    j["ibrs"].push_back({{"bus", i.bus},
                         {"p_ref", i.p_ref},
                         {"dc",
                          {{"gain", i.dc.gain},
                           {"tw", i.dc.tw},
                           {"t1", i.dc.t1},
                           {"t2", i.dc.t2},
                           {"input_generator", i.dc.input_generator},
                           {"p_max", i.dc.p_max}}}});
  }
  return j;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(fmt::format("{}: invalid JSON ({})", path.string(), e.what()));
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write file: " + path.string());
  out << text;
}

SystemCase load_case(const std::filesystem::path& path) {
  try {
    return case_from_json(read_json_file(path));
  } catch (const InputError& e) {
    const std::string msg = e.what();
    if (msg.find(path.string()) != std::string::npos) throw;
    throw InputError(path.string() + ": " + msg);
  }
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string case_hash(const SystemCase& c) { return fnv1a_hex(case_to_json(c).dump()); }

}  // namespace tacoord
