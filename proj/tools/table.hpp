#pragma once

// Tabular output: every command builds a Table and writes it as CSV or JSON.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace cli {

using Json = nlohmann::ordered_json;

/// One cell. monostate means "absent" (empty CSV field, JSON null).
/// Lists go to JSON as arrays and to CSV joined with ';'.
using Cell = std::variant<std::monostate, bool, std::int64_t, std::uint64_t, double, std::string,
                          std::vector<double>>;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string csv_field(const Cell& c) {
  struct V {
    std::string operator()(std::monostate) const { return ""; }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(std::uint64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const { return format_double(d); }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(const std::vector<double>& v) const {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + format_double(v[i]);
      return s;
    }
  };
  return std::visit(V{}, c);
}

/// RFC 4180: quote when the field holds a comma, quote, CR or LF; double inner quotes.
inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline Json json_value(const Cell& c) {
  struct V {
    Json operator()(std::monostate) const { return nullptr; }
    Json operator()(bool b) const { return b; }
    Json operator()(std::int64_t i) const { return i; }
    Json operator()(std::uint64_t i) const { return i; }
    Json operator()(double d) const {
      if (!std::isfinite(d)) return format_double(d);  // JSON has no inf/nan
      return d;
    }
    Json operator()(const std::string& s) const { return s; }
    Json operator()(const std::vector<double>& v) const {
      Json a = Json::array();
      for (double d : v) a.push_back((*this)(d));
      return a;
    }
  };
  return std::visit(V{}, c);
}

class Table {
 public:
  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const { return rows_; }

  void add(std::vector<Cell> row) {
    if (row.size() != columns_.size()) throw std::logic_error("Table: row width mismatch");
    rows_.push_back(std::move(row));
  }

  void write_csv(std::ostream& os) const {
    for (std::size_t k = 0; k < columns_.size(); ++k) os << (k ? "," : "") << csv_escape(columns_[k]);
    os << "\r\n";
    for (const auto& r : rows_) {
      for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << csv_escape(csv_field(r[k]));
      os << "\r\n";
    }
  }

  Json to_json() const {
    Json arr = Json::array();
    for (const auto& r : rows_) {
      Json obj = Json::object();
      for (std::size_t k = 0; k < r.size(); ++k) obj[columns_[k]] = json_value(r[k]);
      arr.push_back(std::move(obj));
    }
    return arr;
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

/// {"config": ..., "results": [...], "timing_ms": ..., "seed": ...}
inline void write_json(std::ostream& os, const Json& config, const Table& t,
                       std::optional<double> timing_ms, std::uint64_t seed) {
  Json doc = Json::object();
  doc["config"] = config;
  doc["results"] = t.to_json();
  doc["timing_ms"] = timing_ms ? Json(*timing_ms) : Json(nullptr);
  doc["seed"] = seed;
  os << doc.dump(2) << "\n";
}

}  // namespace cli
