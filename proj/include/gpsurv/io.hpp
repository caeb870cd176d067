#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gpsurv/gp_paths.hpp"
#include "gpsurv/hazard_model.hpp"

namespace gpsurv {

using json = nlohmann::json;

namespace io_detail {
inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path);
  out << std::setprecision(17);
  return out;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DomainError(where + ": not a number '" + s + "'");
  }
  while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
  if (used != s.size()) throw DomainError(where + ": not a number '" + s + "'");
  return v;
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}
}  // namespace io_detail

inline json law_to_json(const CovariateLaw& law) {
  json j{{"kind", law.describe()}, {"d", law.d}};
  if (law.kind == CovariateLaw::Kind::product_beta) {
    j["alpha"] = law.alpha;
    j["beta"] = law.beta;
  }
  if (law.kind == CovariateLaw::Kind::finite_table) {
    j["atoms"] = law.atoms;
    j["weights"] = law.atom_weights;
  }
  return j;
}

inline CovariateLaw law_from_json(const json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "uniform") return CovariateLaw::uniform(j.at("d").get<int>());
  if (kind == "product-beta")
    return CovariateLaw::product_beta(j.at("alpha").get<std::vector<double>>(), j.at("beta").get<std::vector<double>>());
  if (kind == "finite-table")
    return CovariateLaw::finite_table(j.at("atoms").get<std::vector<Covariate>>(),
                                      j.at("weights").get<std::vector<double>>());
  throw DomainError("unknown covariate law '" + kind + "'");
}

// Dataset CSV plus `<path>.meta.json` holding design, law and horizon.
inline void write_dataset(const SurvivalDataset& ds, const std::string& path) {
  auto out = io_detail::open_out(path);
  out << "t";
  for (int j = 1; j <= ds.d; ++j) out << ",x" << j;
  out << "\n";
  for (const auto& r : ds.records) {
    out << r.t;
    for (double v : r.x) out << "," << v;
    out << "\n";
  }
  json meta{{"design", to_string(ds.design)}, {"d", ds.d}, {"horizon", ds.horizon}, {"n", ds.n()}};
  if (ds.design == Design::RD) meta["law"] = law_to_json(ds.law);
  std::ofstream m(path + ".meta.json");
  if (!m) throw DomainError("cannot write " + path + ".meta.json");
  m << meta.dump(2) << "\n";
}

inline SurvivalDataset ingest_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DomainError(path + ": empty file");
  auto header = io_detail::split_csv(io_detail::strip_cr(line));
  if (header.empty() || header[0] != "t") throw DomainError(path + ": header must start with 't'");
  const int d = static_cast<int>(header.size()) - 1;
  for (int j = 1; j <= d; ++j)
    if (header[j] != "x" + std::to_string(j))
      throw DomainError(path + ": header column " + std::to_string(j + 1) + " must be x" + std::to_string(j));

  SurvivalDataset ds;
  ds.d = d;
  ds.design = Design::NRD;
  std::size_t row = 1;  // header is row 1
  double tmax = 0;
  while (std::getline(in, line)) {
    ++row;
    line = io_detail::strip_cr(line);
    if (line.empty()) continue;
    std::string where = path + ": row " + std::to_string(row);
    auto cells = io_detail::split_csv(line);
    if (static_cast<int>(cells.size()) != d + 1) throw DomainError(where + ": expected " + std::to_string(d + 1) + " columns");
    Record r;
    r.t = io_detail::parse_double(cells[0], where);
    if (!(r.t > 0) || !std::isfinite(r.t)) throw DomainError(where + ": time must be positive");
    for (int j = 1; j <= d; ++j) {
      double v = io_detail::parse_double(cells[j], where);
      if (!(v >= 0 && v <= 1)) throw DomainError(where + ": covariate x" + std::to_string(j) + " outside [0,1]");
      r.x.push_back(v);
    }
    tmax = std::max(tmax, r.t);
    ds.records.push_back(std::move(r));
  }
  ds.horizon = tmax;
  std::ifstream m(path + ".meta.json");
  if (m) {
    json meta;
    try {
      meta = json::parse(m);
    } catch (const json::exception& e) {
      throw DomainError(path + ".meta.json: " + e.what());
    }
    if (meta.contains("design")) ds.design = design_from_string(meta["design"].get<std::string>());
    if (meta.contains("horizon")) ds.horizon = std::max(tmax, meta["horizon"].get<double>());
    if (meta.contains("law")) ds.law = law_from_json(meta["law"]);
  }
  if (ds.design == Design::RD && ds.law.d != d) ds.law = CovariateLaw::uniform(d);
  if (ds.design == Design::NRD)
    for (const auto& r : ds.records) ds.fixed.push_back(r.x);
  return ds;
}

inline void write_path_csv(const GpPath& p, const std::string& path) {
  auto out = io_detail::open_out(path);
  out << "t,value\n";
  for (std::size_t k = 0; k < p.values.size(); ++k) out << p.grid.t(k) << "," << p.values[k] << "\n";
}

// theta.csv holds the grid values (t, eta0..etad); theta.json holds omega and the grid.
inline void write_theta(const Theta& th, const std::string& stem) {
  th.validate();
  auto out = io_detail::open_out(stem + ".csv");
  out << "t";
  for (int j = 0; j <= th.d(); ++j) out << ",eta" << j;
  out << "\n";
  const auto& g = th.grid();
  for (std::size_t k = 0; k < g.size(); ++k) {
    out << g.t(k);
    for (const auto& p : th.paths) out << "," << p.values[k];
    out << "\n";
  }
  json j{{"omega", th.omega}, {"d", th.d()}, {"horizon", g.tau}, {"level", g.level}, {"values", stem + ".csv"}};
  std::ofstream m(stem + ".json");
  if (!m) throw DomainError("cannot write " + stem + ".json");
  m << std::setprecision(17) << j.dump(2) << "\n";
}

inline Theta read_theta(const std::string& json_path) {
  std::ifstream m(json_path);
  if (!m) throw DomainError("cannot open theta record: " + json_path);
  json j;
  try {
    j = json::parse(m);
  } catch (const json::exception& e) {
    throw DomainError(json_path + ": " + e.what());
  }
  int d = j.at("d").get<int>();
  DyadicGrid g(j.at("horizon").get<double>(), j.at("level").get<int>());
  std::filesystem::path csv = j.at("values").get<std::string>();
  if (csv.is_relative() && !std::filesystem::exists(csv))
    csv = std::filesystem::path(json_path).parent_path() / csv.filename();
  std::ifstream in(csv);
  if (!in) throw DomainError("cannot open theta values: " + csv.string());
  Theta th{j.at("omega").get<double>(), {}};
  for (int p = 0; p <= d; ++p) th.paths.push_back(GpPath{g, {}, p, Interpolation::linear});
  std::string line;
  std::getline(in, line);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = io_detail::strip_cr(line);
    if (line.empty()) continue;
    auto cells = io_detail::split_csv(line);
    std::string where = csv.string() + ": row " + std::to_string(row);
    if (static_cast<int>(cells.size()) != d + 2) throw DomainError(where + ": wrong column count");
    for (int p = 0; p <= d; ++p) th.paths[p].values.push_back(io_detail::parse_double(cells[p + 1], where));
  }
  for (auto& p : th.paths) p.validate();
  th.validate();
  return th;
}

// One flat record per file; values are numbers, bools or strings.
using FlatValue = std::variant<double, long long, bool, std::string>;
using FlatRecord = std::vector<std::pair<std::string, FlatValue>>;

inline json flat_to_json(const FlatRecord& r) {
  json j = json::object();
  for (const auto& [k, v] : r) std::visit([&](const auto& x) { j[k] = x; }, v);
  return j;
}

inline void write_records_csv(const std::vector<FlatRecord>& rows, const std::string& path) {
  auto out = io_detail::open_out(path);
  if (rows.empty()) return;
  for (std::size_t i = 0; i < rows[0].size(); ++i) out << (i ? "," : "") << rows[0][i].first;
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      out << (i ? "," : "");
      std::visit(
          [&](const auto& x) {
            using X = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<X, bool>) out << (x ? "true" : "false");
            else if constexpr (std::is_same_v<X, std::string>) out << '"' << x << '"';
            else out << x;
          },
          r[i].second);
    }
    out << "\n";
  }
}

}  // namespace gpsurv
