#pragma once

// Machine-readable result of one CLI command, with JSON and long-format CSV
// serializations. CSV numbers are written with 17 significant digits.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "linkrate/markov_link.hpp"

namespace linkrate {

inline constexpr int kSchemaVersion = 1;

#ifndef LINKRATE_VERSION
#define LINKRATE_VERSION "0.0.0"
#endif

struct RecordParams {
  double u;
  double d;
  EntropyBase base;

  bool operator==(const RecordParams&) const = default;
};

struct Provenance {
  std::string version = LINKRATE_VERSION;
  std::string timestamp;

  bool operator==(const Provenance&) const = default;
};

struct RunRecord {
  int schema_version = kSchemaVersion;
  std::string command;
  std::optional<RecordParams> params;  // absent for multi-point commands
  nlohmann::json settings = nlohmann::json::object();
  // Named scalars or equal-length numeric series.
  nlohmann::json outputs = nlohmann::json::object();
  Provenance provenance;

  bool operator==(const RunRecord&) const = default;
};

// UTC ISO-8601; SOURCE_DATE_EPOCH pins it for reproducible output.
inline std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      now = static_cast<std::time_t>(std::stoll(epoch));
    } catch (const std::exception&) {
    }
  }
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline RunRecord make_record(std::string command, std::optional<RecordParams> params = std::nullopt) {
  RunRecord r;
  r.command = std::move(command);
  r.params = params;
  r.provenance.timestamp = utc_timestamp();
  return r;
}

inline RecordParams record_params(const LinkParams& p) { return {p.u(), p.d(), p.base()}; }

inline void to_json(nlohmann::json& j, const RunRecord& r) {
  j = nlohmann::json{{"schema_version", r.schema_version},
                     {"command", r.command},
                     {"settings", r.settings},
                     {"outputs", r.outputs},
                     {"provenance", {{"version", r.provenance.version}, {"timestamp", r.provenance.timestamp}}}};
  if (r.params) {
    j["params"] = {{"u", r.params->u}, {"d", r.params->d}, {"base", to_string(r.params->base)}};
  } else {
    j["params"] = nullptr;
  }
}

inline void from_json(const nlohmann::json& j, RunRecord& r) {
  r.schema_version = j.at("schema_version").get<int>();
  r.command = j.at("command").get<std::string>();
  r.settings = j.at("settings");
  r.outputs = j.at("outputs");
  r.provenance.version = j.at("provenance").at("version").get<std::string>();
  r.provenance.timestamp = j.at("provenance").at("timestamp").get<std::string>();
  const auto& p = j.at("params");
  if (p.is_null()) {
    r.params.reset();
  } else {
    r.params = RecordParams{p.at("u").get<double>(), p.at("d").get<double>(),
                            parse_entropy_base(p.at("base").get<std::string>())};
  }
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void flatten(const std::string& name, const nlohmann::json& value,
                    std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  if (value.is_object()) {
    for (const auto& [key, inner] : value.items()) flatten(name.empty() ? key : name + "." + key, inner, rows);
  } else if (value.is_array()) {
    std::vector<double> numbers;
    for (const auto& v : value) {
      if (v.is_number()) numbers.push_back(v.get<double>());
      else if (v.is_boolean()) numbers.push_back(v.get<bool>() ? 1.0 : 0.0);
    }
    rows.emplace_back(name, std::move(numbers));
  } else if (value.is_number()) {
    rows.emplace_back(name, std::vector<double>{value.get<double>()});
  } else if (value.is_boolean()) {
    rows.emplace_back(name, std::vector<double>{value.get<bool>() ? 1.0 : 0.0});
  }
}

}  // namespace detail

inline constexpr const char* kRecordCsvHeader = "command,u,d,base,series,index,value";

// Long format: one row per numeric output element; scalars have index 0,
// booleans are written as 0/1 and strings are skipped.
inline void write_record_csv(std::ostream& out, const RunRecord& r) {
  out << kRecordCsvHeader << '\n';
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  detail::flatten("", r.outputs, rows);
  const std::string u = r.params ? format_double(r.params->u) : "";
  const std::string d = r.params ? format_double(r.params->d) : "";
  const std::string base = r.params ? std::string(to_string(r.params->base)) : std::string();
  for (const auto& [series, values] : rows) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      out << r.command << ',' << u << ',' << d << ',' << base << ',' << series << ',' << i << ','
          << format_double(values[i]) << '\n';
    }
  }
}

inline void write_record_json(std::ostream& out, const RunRecord& r) {
  out << nlohmann::json(r).dump(2) << '\n';
}

}  // namespace linkrate
