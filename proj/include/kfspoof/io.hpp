#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kfspoof/model.hpp"

namespace kfspoof::io {

using nlohmann::json;

/// 17 significant digits: enough to round-trip any double.
inline std::string format_number(double v) {
  char buf[40];
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string axis_name(Eigen::Index j) {
  static const char* names[] = {"x", "y", "z"};
  return j < 3 ? names[j] : std::to_string(j + 1);
}

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::known_init: return "known-init";
    case Mode::unknown_init: return "unknown-init";
    case Mode::online: return "online";
  }
  return "known-init";
}

inline const char* to_string(OnlineFeedback f) { return f == OnlineFeedback::observed ? "observed" : "expected"; }

namespace detail {

struct Reader {
  const json& doc;
  Eigen::Index n = 0;
  std::vector<std::string>* notes;

  [[noreturn]] static void fail(const std::string& msg) { throw ConfigError(msg); }

  static double number(const json& v, const std::string& where) {
    if (!v.is_number()) fail(where + ": expected a number");
    return v.get<double>();
  }

  Matrix matrix(const json& v, const std::string& where) const {
    if (v.is_number()) return number(v, where) * Matrix::Identity(n, n);
    if (!v.is_array() || v.size() != static_cast<std::size_t>(n))
      fail(where + ": expected " + std::to_string(n) + " rows");
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = v[static_cast<std::size_t>(i)];
      if (!row.is_array() || row.size() != static_cast<std::size_t>(n))
        fail(where + ": row " + std::to_string(i) + " must have " + std::to_string(n) + " entries");
      for (Eigen::Index j = 0; j < n; ++j)
        m(i, j) = number(row[static_cast<std::size_t>(j)], where + "[" + std::to_string(i) + "]");
    }
    return m;
  }

  Vector vector(const json& v, const std::string& where) const {
    if (v.is_number()) return Vector::Constant(n, number(v, where));
    if (!v.is_array() || v.size() != static_cast<std::size_t>(n))
      fail(where + ": expected a vector of length " + std::to_string(n));
    Vector out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = number(v[static_cast<std::size_t>(i)], where);
    return out;
  }

  bool has(const char* key) const { return doc.contains(key); }
  const json& at(const char* key) const {
    if (!doc.contains(key)) fail(std::string("missing required field \"") + key + "\"");
    return doc.at(key);
  }
  void note(std::string msg) const {
    if (notes) notes->push_back(std::move(msg));
  }
};

}  // namespace detail

/// Builds a ScenarioConfig from the JSON schema (row-major nested arrays for matrices).
/// Defaults: B = H = I, m0_tilde = m0, Sigma0_tilde = Sigma0, M0 = m0 - m0_tilde, p = 1,
/// gamma = 1, mode known-init. Does not validate.
inline ScenarioConfig config_from_json(const json& doc, std::vector<std::string>* notes = nullptr) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  static const std::set<std::string> known = {
      "n",  "F",     "B",     "H",    "R",         "Q",      "u",    "m0",    "Sigma0",          "m0_tilde",
      "Sigma0_tilde", "M0", "p", "T",   "constraints", "gamma", "mode", "H_online", "trials", "seed",
      "m0_distribution", "online_feedback", "noise_scale", "description"};
  for (const auto& [key, _] : doc.items())
    if (!known.count(key)) throw ConfigError("unknown field \"" + key + "\"");

  detail::Reader rd{doc, 0, notes};
  if (rd.has("n")) {
    if (!doc["n"].is_number_integer() || doc["n"].get<long>() < 1) throw ConfigError("n: expected integer >= 1");
    rd.n = doc["n"].get<long>();
  } else {
    const auto& F = rd.at("F");
    if (!F.is_array() || F.empty()) throw ConfigError("F: expected a non-empty nested array (or give n)");
    rd.n = static_cast<Eigen::Index>(F.size());
  }
  const auto n = rd.n;

  ScenarioConfig c;
  c.system.F = rd.matrix(rd.at("F"), "F");
  if (rd.has("B")) {
    c.system.B = rd.matrix(doc["B"], "B");
  } else {
    c.system.B = Matrix::Identity(n, n);
    rd.note("B missing; defaulting to identity");
  }
  if (rd.has("H")) {
    c.system.H = rd.matrix(doc["H"], "H");
  } else {
    c.system.H = Matrix::Identity(n, n);
    rd.note("system.H missing; defaulting to identity");
  }
  c.system.R = rd.matrix(rd.at("R"), "R");
  c.system.Q = rd.matrix(rd.at("Q"), "Q");

  const auto& u = rd.at("u");
  if (u.is_array() && !u.empty() && u.front().is_array()) {
    for (std::size_t k = 0; k < u.size(); ++k) c.controls.values.push_back(rd.vector(u[k], "u[" + std::to_string(k) + "]"));
  } else {
    c.controls.values.push_back(rd.vector(u, "u"));
  }

  c.init_observer.mean = rd.vector(rd.at("m0"), "m0");
  c.init_observer.cov = rd.matrix(rd.at("Sigma0"), "Sigma0");
  c.init_attacker.mean = rd.has("m0_tilde") ? rd.vector(doc["m0_tilde"], "m0_tilde") : c.init_observer.mean;
  c.init_attacker.cov = rd.has("Sigma0_tilde") ? rd.matrix(doc["Sigma0_tilde"], "Sigma0_tilde") : c.init_observer.cov;
  c.M0 = rd.has("M0") ? rd.vector(doc["M0"], "M0") : Vector(c.init_observer.mean - c.init_attacker.mean);

  if (rd.has("mode")) {
    const auto& m = doc["mode"];
    if (m == "known-init")
      c.mode = Mode::known_init;
    else if (m == "unknown-init")
      c.mode = Mode::unknown_init;
    else if (m == "online")
      c.mode = Mode::online;
    else
      throw ConfigError("mode: expected known-init, unknown-init or online");
  }

  if (rd.has("p")) {
    const auto& p = doc["p"];
    if (p == 1)
      c.spec.p = Norm::L1;
    else if (p == 2)
      c.spec.p = Norm::L2;
    else
      throw ConfigError("p: expected 1 or 2");
  }
  const auto& T = rd.at("T");
  if (!T.is_number_integer()) throw ConfigError("T: expected an integer");
  c.spec.horizon = T.get<int>();

  if (rd.has("constraints")) {
    const auto& cons = doc["constraints"];
    if (!cons.is_array()) throw ConfigError("constraints: expected an array of {t, d}");
    for (const auto& e : cons) {
      if (!e.is_object() || !e.contains("t") || !e.contains("d") || !e["t"].is_number_integer())
        throw ConfigError("constraints: each entry needs integer t and number d");
      const int t = e["t"].get<int>();
      if (!c.spec.constraints.emplace(t, detail::Reader::number(e["d"], "constraints.d")).second)
        throw ConfigError("constraints: duplicate step " + std::to_string(t));
    }
  }

  if (rd.has("gamma")) {
    const auto& g = doc["gamma"];
    if (g.is_number()) {
      const double v = g.get<double>();
      if (v != 1.0)
        for (int t = 1; t <= c.spec.horizon; ++t) c.spec.gamma[t] = v;
    } else if (g.is_array()) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        const auto& e = g[k];
        if (e.is_number()) {
          c.spec.gamma[static_cast<int>(k) + 1] = e.get<double>();
        } else if (e.is_object() && e.contains("t") && e.contains("gamma") && e["t"].is_number_integer()) {
          c.spec.gamma[e["t"].get<int>()] = detail::Reader::number(e["gamma"], "gamma");
        } else {
          throw ConfigError("gamma: entries must be numbers or {t, gamma}");
        }
      }
    } else {
      throw ConfigError("gamma: expected a number or an array");
    }
  }

  auto integer = [&](const char* key, auto& dst) {
    if (!rd.has(key)) return;
    if (!doc[key].is_number_integer()) throw ConfigError(std::string(key) + ": expected an integer");
    dst = doc[key].get<std::remove_reference_t<decltype(dst)>>();
  };
  integer("H_online", c.horizon_online);
  integer("trials", c.trials);
  if (rd.has("seed")) {
    if (!doc["seed"].is_number_unsigned() && !(doc["seed"].is_number_integer() && doc["seed"].get<long long>() >= 0))
      throw ConfigError("seed: expected a non-negative integer");
    c.seed = doc["seed"].get<std::uint64_t>();
  }

  if (rd.has("m0_distribution")) {
    const auto& d = doc["m0_distribution"];
    if (d.is_number())
      c.m0_cov = d.get<double>() * Matrix::Identity(n, n);
    else if (d.is_object() && d.contains("cov"))
      c.m0_cov = rd.matrix(d["cov"], "m0_distribution.cov");
    else if (d.is_object() && d.contains("variance"))
      c.m0_cov = detail::Reader::number(d["variance"], "m0_distribution.variance") * Matrix::Identity(n, n);
    else
      throw ConfigError("m0_distribution: expected a variance, {\"variance\": v} or {\"cov\": matrix}");
  }
  if (rd.has("online_feedback")) {
    const auto& f = doc["online_feedback"];
    if (f == "observed")
      c.feedback = OnlineFeedback::observed;
    else if (f == "expected")
      c.feedback = OnlineFeedback::expected;
    else
      throw ConfigError("online_feedback: expected observed or expected");
  }
  if (rd.has("noise_scale")) c.noise_scale = detail::Reader::number(doc["noise_scale"], "noise_scale");
  return c;
}

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json config_to_json(const ScenarioConfig& c) {
  json doc;
  doc["n"] = c.system.dim();
  doc["F"] = to_json(c.system.F);
  doc["B"] = to_json(c.system.B);
  doc["H"] = to_json(c.system.H);
  doc["R"] = to_json(c.system.R);
  doc["Q"] = to_json(c.system.Q);
  if (c.controls.values.size() == 1) {
    doc["u"] = to_json(c.controls.values.front());
  } else {
    json us = json::array();
    for (const auto& u : c.controls.values) us.push_back(to_json(u));
    doc["u"] = std::move(us);
  }
  doc["m0"] = to_json(c.init_observer.mean);
  doc["Sigma0"] = to_json(c.init_observer.cov);
  doc["m0_tilde"] = to_json(c.init_attacker.mean);
  doc["Sigma0_tilde"] = to_json(c.init_attacker.cov);
  doc["M0"] = to_json(c.M0);
  doc["p"] = static_cast<int>(c.spec.p);
  doc["T"] = c.spec.horizon;
  json cons = json::array();
  for (const auto& [t, d] : c.spec.constraints) cons.push_back({{"t", t}, {"d", d}});
  doc["constraints"] = std::move(cons);
  if (!c.spec.gamma.empty()) {
    json g = json::array();
    for (const auto& [t, v] : c.spec.gamma) g.push_back({{"t", t}, {"gamma", v}});
    doc["gamma"] = std::move(g);
  }
  doc["mode"] = to_string(c.mode);
  doc["H_online"] = c.horizon_online;
  doc["trials"] = c.trials;
  doc["seed"] = c.seed;
  if (c.m0_cov.size() != 0) doc["m0_distribution"] = {{"cov", to_json(c.m0_cov)}};
  doc["online_feedback"] = to_string(c.feedback);
  doc["noise_scale"] = c.noise_scale;
  return doc;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Parses, applies defaults, validates. Parse errors carry line:column.
inline ScenarioConfig parse_config(const std::string& text, std::vector<std::string>* notes = nullptr,
                                   const std::string& origin = "<config>") {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": JSON parse error: " +
                      e.what());
  }
  auto config = config_from_json(doc, notes);
  auto report = validate(config);
  if (!report.ok()) throw ConfigError(origin + ": invalid configuration: " + report.joined());
  return config;
}

inline ScenarioConfig load_config(const std::filesystem::path& path, std::vector<std::string>* notes = nullptr) {
  return parse_config(read_file(path), notes, path.string());
}

inline void write_config(const ScenarioConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << config_to_json(c).dump(2) << '\n';
}

/// Minimal CSV emitter: header first, numbers at 17 significant digits.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw ConfigError("cannot write " + path.string());
  }
  void header(const std::vector<std::string>& cols) { line(cols); }
  void row(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_number(v));
    line(cells);
  }
  void line(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

inline void write_plan_csv(const std::filesystem::path& path, const SpoofPlan& plan, Eigen::Index n) {
  CsvWriter csv(path);
  std::vector<std::string> cols{"t"};
  for (Eigen::Index j = 0; j < n; ++j) cols.push_back("eps_" + axis_name(j));
  csv.header(cols);
  for (int t = 1; t <= plan.horizon(); ++t) {
    std::vector<double> row{static_cast<double>(t)};
    for (Eigen::Index j = 0; j < n; ++j) row.push_back(plan.epsilons[static_cast<std::size_t>(t - 1)](j));
    csv.row(row);
  }
}

/// Reads a plan CSV back; rows must be t = 1, 2, ... in order.
inline std::vector<Vector> read_plan_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty plan file");
  const auto n = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
  if (n < 1) throw ConfigError(path.string() + ": plan header needs t and at least one eps column");
  std::vector<Vector> eps;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        cells.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad number \"" + cell + "\"");
      }
    }
    if (static_cast<Eigen::Index>(cells.size()) != n + 1)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    if (static_cast<int>(cells[0]) != static_cast<int>(eps.size()) + 1)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": steps must be consecutive from 1");
    Vector v(n);
    for (Eigen::Index j = 0; j < n; ++j) v(j) = cells[static_cast<std::size_t>(j) + 1];
    eps.push_back(std::move(v));
  }
  return eps;
}

}  // namespace kfspoof::io
