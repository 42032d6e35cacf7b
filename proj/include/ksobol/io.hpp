#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ksobol/domain.hpp"
#include "ksobol/error.hpp"
#include "ksobol/estimator.hpp"
#include "ksobol/inputs.hpp"
#include "ksobol/kernel.hpp"

namespace ksobol {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

}  // namespace detail

/// Reads "v1,...,vp,y" followed by one numeric row per line.
inline FullSample parse_sample_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  std::string header_line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header_line = line;
      break;
    }
  }
  if (header_line.empty()) throw Error(ErrorCode::schema_error, source + ": empty file, expected header v1,...,vp,y");
  header = detail::split_commas(header_line);
  const std::size_t p = header.size() - 1;
  bool ok = header.size() >= 2 && header.back() == "y";
  for (std::size_t i = 0; ok && i < p; ++i) ok = header[i] == "v" + std::to_string(i + 1);
  if (!ok) {
    throw Error(ErrorCode::schema_error,
                source + ":" + std::to_string(line_no) + ": header must read v1,...,vp,y, got '" +
                    std::string(detail::trim(header_line)) + "'");
  }

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != p + 1) {
      throw Error(ErrorCode::parse_error, source + ":" + std::to_string(line_no) + ": expected " +
                                              std::to_string(p + 1) + " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      const auto cell = cells[c];
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw Error(ErrorCode::parse_error, source + ":" + std::to_string(line_no) + ": cannot parse '" +
                                                std::string(cell) + "' in column " + std::string(header[c]));
      }
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::invalid_data, source + ":" + std::to_string(line_no) + ": non-finite value '" +
                                                 std::string(cell) + "' in column " + std::string(header[c]));
      }
      values.push_back(v);
    }
    ++rows;
  }
  FullSample s;
  s.V.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
  s.Y.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < p; ++c)
      s.V(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * (p + 1) + c];
    s.Y(static_cast<Eigen::Index>(r)) = values[r * (p + 1) + p];
  }
  return s;
}

inline FullSample load_sample_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open '" + path + "'", "input");
  return parse_sample_csv(in, path);
}

inline void write_sample_csv(std::ostream& out, const FullSample& s) {
  for (Eigen::Index i = 0; i < s.V.cols(); ++i) out << 'v' << (i + 1) << ',';
  out << "y\n";
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < s.V.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.V.cols(); ++c) out << s.V(r, c) << ',';
    out << s.Y(r) << '\n';
  }
}

inline json to_json(const Domain& d) {
  return json{{"lower", std::vector<double>(d.lower().begin(), d.lower().end())},
              {"upper", std::vector<double>(d.upper().begin(), d.upper().end())}};
}

inline Domain domain_from_json(const json& j) {
  try {
    return Domain(j.at("lower").get<std::vector<double>>(), j.at("upper").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema_error, std::string("domain: ") + e.what(), "domain");
  }
}

inline json to_json(const KernelSpec& k) {
  json j{{"order", k.order}, {"dim", k.dim}};
  if (k.custom_polynomial.empty()) {
    j["base"] = "uniform_half";
  } else {
    json custom{{"polynomial", k.custom_polynomial},
                {"support", std::vector<double>{k.custom_support.lo, k.custom_support.hi}}};
    j["base"] = json{{"custom", custom}};
  }
  return j;
}

inline KernelSpec kernel_spec_from_json(const json& j) {
  KernelSpec k;
  try {
    k.order = j.value("order", 2);
    k.dim = j.value("dim", std::size_t{1});
    if (j.contains("base")) {
      const auto& b = j.at("base");
      if (b.is_string()) {
        if (b.get<std::string>() != "uniform_half") {
          throw Error(ErrorCode::schema_error, "kernel.base: unknown base '" + b.get<std::string>() + "'",
                      "kernel.base");
        }
      } else {
        const auto& c = b.at("custom");
        k.custom_polynomial = c.at("polynomial").get<std::vector<double>>();
        const auto sup = c.at("support").get<std::vector<double>>();
        if (sup.size() != 2) throw Error(ErrorCode::schema_error, "kernel.base.custom.support needs two values", "kernel.base");
        k.custom_support = {sup[0], sup[1]};
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema_error, std::string("kernel: ") + e.what(), "kernel");
  }
  return k;
}

inline json to_json(const InputModel& m) {
  json arr = json::array();
  for (const auto& mg : m.marginals()) {
    if (const auto* u = std::get_if<Uniform>(&mg.kind())) {
      arr.push_back(json{{"uniform", std::vector<double>{u->a, u->b}}});
    } else if (const auto* b = std::get_if<Beta>(&mg.kind())) {
      arr.push_back(json{{"beta", std::vector<double>{b->a, b->b}}});
    } else {
      throw Error(ErrorCode::schema_error, "custom marginals cannot be serialized", "marginals");
    }
  }
  return json{{"marginals", arr}};
}

inline InputModel input_model_from_json(const json& j) {
  try {
    std::vector<Marginal> ms;
    for (const auto& e : j.at("marginals")) {
      if (e.contains("uniform")) {
        const auto v = e.at("uniform").get<std::vector<double>>();
        if (v.size() != 2) throw Error(ErrorCode::schema_error, "uniform marginal needs [a, b]", "marginals");
        ms.emplace_back(Uniform{v[0], v[1]});
      } else if (e.contains("beta")) {
        const auto v = e.at("beta").get<std::vector<double>>();
        if (v.size() != 2) throw Error(ErrorCode::schema_error, "beta marginal needs [a, b]", "marginals");
        ms.emplace_back(Beta{v[0], v[1]});
      } else {
        throw Error(ErrorCode::schema_error, "marginal must be {\"uniform\": [a,b]} or {\"beta\": [a,b]}",
                    "marginals");
      }
    }
    return InputModel(std::move(ms));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema_error, std::string("marginals: ") + e.what(), "marginals");
  }
}

inline json to_json(const EstimateResult& r) {
  return json{{"t_hat", r.t_hat},     {"sobol", r.sobol},         {"var_t", r.var_t},
              {"var_sobol", r.var_sobol}, {"ci", {r.ci_lo, r.ci_hi}}, {"ci_level", r.ci_level},
              {"n", r.n_used},        {"h", r.h_used},            {"mean_y", r.mean_y},
              {"var_y", r.var_y}};
}

inline json error_json(const Error& e) {
  return json{{"error", json{{"code", to_string(e.code())}, {"message", e.what()}, {"field", e.field()}}}};
}

}  // namespace ksobol
