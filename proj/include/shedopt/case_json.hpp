#pragma once

#include <string>

#include <json.hpp>

#include "shedopt/case.hpp"
#include "shedopt/errors.hpp"

namespace shedopt {

namespace detail {

template <typename T>
T json_get(const nlohmann::json& j, const char* field) {
  if (!j.contains(field))
    throw SchemaError(std::string("missing field: ") + field);
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(std::string("field has wrong type: ") + field);
  }
}

template <typename T>
T json_get_or(const nlohmann::json& j, const char* field, T fallback) {
  if (!j.contains(field)) return fallback;
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(std::string("field has wrong type: ") + field);
  }
}

}  // namespace detail

inline nlohmann::json to_json(const NetworkCase& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["base_mva"] = c.base_mva;
  j["buses"] = nlohmann::json::array();
  for (const auto& b : c.buses) {
    j["buses"].push_back({{"id", b.id},
                          {"p_demand", b.p_demand},
                          {"q_demand", b.q_demand},
                          {"v_min", b.v_min},
                          {"v_max", b.v_max},
                          {"shunt_g", b.shunt_g},
                          {"shunt_b", b.shunt_b},
                          {"is_reference", b.is_reference}});
  }
  j["generators"] = nlohmann::json::array();
  for (const auto& g : c.generators) {
    j["generators"].push_back({{"at_bus", g.at_bus},
                               {"p_min", g.p_min},
                               {"p_max", g.p_max},
                               {"q_min", g.q_min},
                               {"q_max", g.q_max},
                               {"cost_coeffs", g.cost_coeffs},
                               {"in_service", g.in_service}});
  }
  j["branches"] = nlohmann::json::array();
  for (const auto& br : c.branches) {
    j["branches"].push_back({{"from_bus", br.from_bus},
                             {"to_bus", br.to_bus},
                             {"r", br.r},
                             {"x", br.x},
                             {"b_charging", br.b_charging},
                             {"tap", br.tap},
                             {"shift", br.shift},
                             {"rate", br.rate},
                             {"in_service", br.in_service}});
  }
  return j;
}

/// Serializes a case to the native JSON format (SI units: MW, MVAr, pu).
inline std::string serialize_json(const NetworkCase& c) {
  return to_json(c).dump(2) + "\n";
}

/// Parses the native JSON case format and validates the result.
inline NetworkCase parse_json_case(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  using detail::json_get;
  using detail::json_get_or;

  NetworkCase c;
  c.name = json_get_or<std::string>(j, "name", "");
  c.base_mva = json_get<double>(j, "base_mva");
  if (!j.contains("buses")) throw SchemaError("missing field: buses");
  if (!j.contains("generators")) throw SchemaError("missing field: generators");
  if (!j.contains("branches")) throw SchemaError("missing field: branches");

  for (const auto& jb : j.at("buses")) {
    Bus b;
    b.id = json_get<int>(jb, "id");
    b.p_demand = json_get<double>(jb, "p_demand");
    b.q_demand = json_get<double>(jb, "q_demand");
    b.v_min = json_get<double>(jb, "v_min");
    b.v_max = json_get<double>(jb, "v_max");
    b.shunt_g = json_get_or<double>(jb, "shunt_g", 0.0);
    b.shunt_b = json_get_or<double>(jb, "shunt_b", 0.0);
    b.is_reference = json_get_or<bool>(jb, "is_reference", false);
    c.buses.push_back(b);
  }
  for (const auto& jg : j.at("generators")) {
    Generator g;
    g.at_bus = json_get<int>(jg, "at_bus");
    g.p_min = json_get<double>(jg, "p_min");
    g.p_max = json_get<double>(jg, "p_max");
    g.q_min = json_get<double>(jg, "q_min");
    g.q_max = json_get<double>(jg, "q_max");
    g.cost_coeffs = json_get<std::vector<double>>(jg, "cost_coeffs");
    g.in_service = json_get_or<bool>(jg, "in_service", true);
    c.generators.push_back(g);
  }
  for (const auto& jb : j.at("branches")) {
    Branch br;
    br.from_bus = json_get<int>(jb, "from_bus");
    br.to_bus = json_get<int>(jb, "to_bus");
    br.r = json_get<double>(jb, "r");
    br.x = json_get<double>(jb, "x");
    br.b_charging = json_get_or<double>(jb, "b_charging", 0.0);
    br.tap = json_get_or<double>(jb, "tap", 1.0);
    br.shift = json_get_or<double>(jb, "shift", 0.0);
    br.rate = json_get_or<double>(jb, "rate", 0.0);
    br.in_service = json_get_or<bool>(jb, "in_service", true);
    c.branches.push_back(br);
  }

  validate(c);
  return c;
}

}  // namespace shedopt
