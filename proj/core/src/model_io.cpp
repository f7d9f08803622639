#include "mfeq/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mfeq {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ModelError(where + ": " + what);
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

/// Accepts a scalar (1x1 only), a flat row-major array of length r*c, or a
/// nested array of r rows with c entries each.
Eigen::MatrixXd parse_matrix(const json& j, Eigen::Index r, Eigen::Index c,
                             const std::string& where) {
  Eigen::MatrixXd out(r, c);
  if (j.is_number()) {
    if (r != 1 || c != 1) {
      std::ostringstream os;
      os << "scalar given where a " << r << "x" << c << " matrix is required";
      fail(where, os.str());
    }
    out(0, 0) = j.get<double>();
    return out;
  }
  if (!j.is_array()) fail(where, "expected a number or array");
  if (!j.empty() && j.front().is_array()) {
    if (static_cast<Eigen::Index>(j.size()) != r) {
      fail(where, "wrong row count " + std::to_string(j.size()));
    }
    for (Eigen::Index i = 0; i < r; ++i) {
      const json& row = j[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) {
        fail(where, "row " + std::to_string(i) + " has wrong length");
      }
      for (Eigen::Index jj = 0; jj < c; ++jj) {
        out(i, jj) = as_number(row[static_cast<std::size_t>(jj)], where);
      }
    }
    return out;
  }
  if (static_cast<Eigen::Index>(j.size()) != r * c) {
    std::ostringstream os;
    os << "flat array of length " << j.size() << " cannot fill " << r << "x" << c;
    fail(where, os.str());
  }
  for (Eigen::Index i = 0; i < r * c; ++i) {
    out(i / c, i % c) = as_number(j[static_cast<std::size_t>(i)], where);
  }
  return out;
}

DiscountFn parse_discount(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "discount entry must be an object");
  const std::string kind = j.value("kind", "");
  if (kind == "one") return DiscountFn::one();
  if (kind == "exponential") {
    if (!j.contains("rate")) fail(where, "exponential discount needs \"rate\"");
    return DiscountFn::exponential(as_number(j["rate"], where));
  }
  if (kind == "hyperbolic") {
    if (!j.contains("a") || !j.contains("b")) fail(where, "hyperbolic discount needs \"a\", \"b\"");
    return DiscountFn::hyperbolic(as_number(j["a"], where), as_number(j["b"], where));
  }
  if (kind == "power") {
    if (!j.contains("exponent")) fail(where, "power discount needs \"exponent\"");
    return DiscountFn::power(as_number(j["exponent"], where));
  }
  if (kind == "tabulated") {
    if (!j.contains("s") || !j.contains("v")) fail(where, "tabulated discount needs \"s\", \"v\"");
    std::vector<double> s, v;
    for (const auto& x : j["s"]) s.push_back(as_number(x, where));
    for (const auto& x : j["v"]) v.push_back(as_number(x, where));
    try {
      return DiscountFn::tabulated(std::move(s), std::move(v));
    } catch (const ModelError& e) {
      fail(where, e.what());
    }
  }
  fail(where, "unknown discount kind \"" + kind + "\"");
}

TimeFn parse_time_fn(const json& j, Eigen::Index r, Eigen::Index c, double T,
                     const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object with a \"kind\"");
  const std::string kind = j.value("kind", "");
  if (kind == "constant") {
    if (!j.contains("value")) fail(where, "constant entry needs \"value\"");
    return TimeFn::constant(parse_matrix(j["value"], r, c, where));
  }
  if (kind == "poly") {
    if (!j.contains("segments") || !j["segments"].is_array() || j["segments"].empty()) {
      fail(where, "poly entry needs a non-empty \"segments\" array");
    }
    std::vector<double> breaks;
    std::vector<std::vector<Eigen::MatrixXd>> coeffs;
    double cursor = 0.0;
    for (const auto& seg : j["segments"]) {
      if (!seg.contains("interval") || !seg.contains("coeffs")) {
        fail(where, "each segment needs \"interval\" and \"coeffs\"");
      }
      const double a = as_number(seg["interval"][0], where);
      const double b = as_number(seg["interval"][1], where);
      if (std::abs(a - cursor) > 1e-12) {
        std::ostringstream os;
        os << "gap at t=" << cursor << " (next segment starts at " << a << ")";
        fail(where, os.str());
      }
      if (!(b > a)) fail(where, "segment interval must have positive length");
      std::vector<Eigen::MatrixXd> seg_coeffs;
      for (const auto& cj : seg["coeffs"]) {
        seg_coeffs.push_back(parse_matrix(cj, r, c, where));
      }
      if (seg_coeffs.empty() || seg_coeffs.size() > 4) {
        fail(where, "segments take 1 to 4 coefficients (degree <= 3)");
      }
      breaks.push_back(a);
      coeffs.push_back(std::move(seg_coeffs));
      cursor = b;
    }
    if (std::abs(cursor - T) > 1e-12) {
      std::ostringstream os;
      os << "segments end at t=" << cursor << ", horizon is " << T;
      fail(where, os.str());
    }
    breaks.push_back(T);
    try {
      TimeFn f = TimeFn::piecewise_poly(std::move(breaks), std::move(coeffs));
      f.validate_continuity();
      return f;
    } catch (const ModelError& e) {
      fail(where, e.what());
    }
  }
  fail(where, "unknown time-function kind \"" + kind + "\" (expected constant or poly)");
}

TimeFn parse_dynamics_entry(const json& parent, const char* key, Eigen::Index r,
                            Eigen::Index c, double T, const std::string& section) {
  if (!parent.contains(key)) return TimeFn::zero(r, c);
  return parse_time_fn(parent[key], r, c, T, section + "." + key);
}

TwoTimeFn parse_cost_entry(const json& parent, const char* key, Eigen::Index r,
                           Eigen::Index c, double T, const DiscountFn& default_lambda,
                           const std::string& section) {
  if (!parent.contains(key)) return TwoTimeFn::zero(r, c);
  const std::string where = section + "." + key;
  const json& j = parent[key];
  if (!j.is_object()) fail(where, "expected an object with a \"kind\"");
  const std::string kind = j.value("kind", "");
  if (kind == "separable") {
    if (!j.contains("base")) fail(where, "separable entry needs \"base\"");
    DiscountFn lam = default_lambda;
    if (j.contains("lambda") && !(j["lambda"].is_string() && j["lambda"] == "default")) {
      lam = parse_discount(j["lambda"], where + ".lambda");
    }
    return TwoTimeFn::discounted_separable(lam,
                                           parse_time_fn(j["base"], r, c, T, where + ".base"));
  }
  return TwoTimeFn::tau_independent(parse_time_fn(j, r, c, T, where));
}

OneTimeFn parse_terminal_entry(const json& parent, const char* key, Eigen::Index r,
                               Eigen::Index c, double T, const DiscountFn& default_lambda,
                               const std::string& section) {
  if (!parent.contains(key)) return OneTimeFn::zero(r, c);
  const std::string where = section + "." + key;
  const json& j = parent[key];
  if (!j.is_object()) fail(where, "expected an object with a \"kind\"");
  const std::string kind = j.value("kind", "");
  if (kind == "separable") {
    if (!j.contains("base")) fail(where, "separable entry needs \"base\"");
    DiscountFn lam = default_lambda;
    if (j.contains("lambda") && !(j["lambda"].is_string() && j["lambda"] == "default")) {
      lam = parse_discount(j["lambda"], where + ".lambda");
    }
    return OneTimeFn::discounted_separable(
        lam, parse_time_fn(j["base"], r, c, T, where + ".base"), T);
  }
  return OneTimeFn::plain(parse_time_fn(j, r, c, T, where));
}

LQModel parse_lq(const json& root) {
  LQModel mo;
  mo.name = root.value("name", "");
  if (!root.contains("dims") || !root["dims"].is_object()) fail("dims", "missing object");
  const json& dims = root["dims"];
  mo.dims.d = dims.value("d", 0);
  mo.dims.m = dims.value("m", 0);
  mo.dims.n = dims.value("n", 1);
  mo.dims.k = dims.value("k", 1);
  if (!root.contains("horizon")) fail("horizon", "missing");
  mo.T = as_number(root["horizon"], "horizon");
  if (root.contains("discount")) {
    mo.discount = parse_discount(root["discount"], "discount");
  }

  const Eigen::Index d = mo.dims.d;
  const Eigen::Index m = mo.dims.m;
  if (d < 1 || m < 1) fail("dims", "d and m must be >= 1");

  const json dyn = root.value("dynamics", json::object());
  mo.b0 = parse_dynamics_entry(dyn, "b0", d, 1, mo.T, "dynamics");
  mo.B = parse_dynamics_entry(dyn, "B", d, d, mo.T, "dynamics");
  mo.Bbar = parse_dynamics_entry(dyn, "Bbar", d, d, mo.T, "dynamics");
  mo.C = parse_dynamics_entry(dyn, "C", d, m, mo.T, "dynamics");
  mo.Cbar = parse_dynamics_entry(dyn, "Cbar", d, m, mo.T, "dynamics");
  mo.theta = parse_dynamics_entry(dyn, "theta", d, 1, mo.T, "dynamics");
  mo.D = parse_dynamics_entry(dyn, "D", d, d, mo.T, "dynamics");
  mo.Dbar = parse_dynamics_entry(dyn, "Dbar", d, d, mo.T, "dynamics");
  mo.F = parse_dynamics_entry(dyn, "F", d, m, mo.T, "dynamics");
  mo.Fbar = parse_dynamics_entry(dyn, "Fbar", d, m, mo.T, "dynamics");
  mo.theta0 = parse_dynamics_entry(dyn, "theta0", d, 1, mo.T, "dynamics");
  mo.D0 = parse_dynamics_entry(dyn, "D0", d, d, mo.T, "dynamics");
  mo.D0bar = parse_dynamics_entry(dyn, "D0bar", d, d, mo.T, "dynamics");
  mo.F0 = parse_dynamics_entry(dyn, "F0", d, m, mo.T, "dynamics");
  mo.F0bar = parse_dynamics_entry(dyn, "F0bar", d, m, mo.T, "dynamics");

  const json costs = root.value("costs", json::object());
  mo.Q = parse_cost_entry(costs, "Q", d, d, mo.T, mo.discount, "costs");
  mo.Qbar = parse_cost_entry(costs, "Qbar", d, d, mo.T, mo.discount, "costs");
  mo.R = parse_cost_entry(costs, "R", m, m, mo.T, mo.discount, "costs");
  mo.Rbar = parse_cost_entry(costs, "Rbar", m, m, mo.T, mo.discount, "costs");
  mo.M = parse_cost_entry(costs, "M", d, m, mo.T, mo.discount, "costs");
  mo.Mbar = parse_cost_entry(costs, "Mbar", d, m, mo.T, mo.discount, "costs");
  mo.q = parse_cost_entry(costs, "q", d, 1, mo.T, mo.discount, "costs");
  mo.qbar = parse_cost_entry(costs, "qbar", d, 1, mo.T, mo.discount, "costs");
  mo.r = parse_cost_entry(costs, "r", m, 1, mo.T, mo.discount, "costs");
  mo.rbar = parse_cost_entry(costs, "rbar", m, 1, mo.T, mo.discount, "costs");
  mo.P = parse_terminal_entry(costs, "P", d, d, mo.T, mo.discount, "costs");
  mo.Pbar = parse_terminal_entry(costs, "Pbar", d, d, mo.T, mo.discount, "costs");
  mo.p = parse_terminal_entry(costs, "p", d, 1, mo.T, mo.discount, "costs");
  mo.pbar = parse_terminal_entry(costs, "pbar", d, 1, mo.T, mo.discount, "costs");

  mo.validate();
  return mo;
}

NonLQModel parse_nonlq(const json& root) {
  NonLQModel mo;
  mo.name = root.value("name", "");
  if (!root.contains("horizon")) fail("horizon", "missing");
  mo.T = as_number(root["horizon"], "horizon");
  if (root.contains("discount")) {
    mo.lambda = parse_discount(root["discount"], "discount");
  }
  if (!root.contains("params") || !root["params"].is_object()) fail("params", "missing object");
  const json& p = root["params"];
  if (!p.contains("mu") || !p.contains("sigma") || !p.contains("sigma0")) {
    fail("params", "needs mu, sigma, sigma0 entries");
  }
  mo.mu = parse_time_fn(p["mu"], 1, 1, mo.T, "params.mu");
  mo.sigma = parse_time_fn(p["sigma"], 1, 1, mo.T, "params.sigma");
  mo.sigma0 = parse_time_fn(p["sigma0"], 1, 1, mo.T, "params.sigma0");
  mo.theta = p.value("theta", 0.0);
  mo.delta = p.value("delta", 1.0);
  mo.validate();
  return mo;
}

AnyModel parse_any(const json& root) {
  const std::string type = root.value("type", "lq");
  if (type == "lq") return parse_lq(root);
  if (type == "nonlq") return parse_nonlq(root);
  fail("type", "unknown model type \"" + type + "\"");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ModelError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ModelError(path + ": top-level JSON must be an object");
  return j;
}

}  // namespace

void NonLQModel::validate() const {
  if (!(T > 0.0)) throw ModelError("horizon must be positive");
  if (theta < 0.0 || theta > 1.0) throw ModelError("params.theta must lie in [0, 1]");
  if (!(delta > 0.0)) throw ModelError("params.delta must be positive");
  for (const TimeFn* f : {&mu, &sigma, &sigma0}) f->validate_continuity();
  // sigma must stay bounded away from zero for the optimal fraction to exist.
  const int probes = 64;
  for (int i = 0; i <= probes; ++i) {
    const double t = T * static_cast<double>(i) / probes;
    if (sigma(t)(0, 0) <= 0.0) throw ModelError("params.sigma must be positive on [0, T]");
    if (sigma0(t)(0, 0) < 0.0) throw ModelError("params.sigma0 must be nonnegative");
  }
}

LQModel load_model(const std::string& path) {
  const json j = read_json(path);
  const std::string type = j.value("type", "lq");
  if (type != "lq") throw ModelError(path + ": expected an LQ model, found type \"" + type + "\"");
  return parse_lq(j);
}

AnyModel load_any_model(const std::string& path) { return parse_any(read_json(path)); }

LQModel parse_model(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("json: ") + e.what());
  }
  return parse_lq(j);
}

AnyModel parse_any_model(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("json: ") + e.what());
  }
  return parse_any(j);
}

}  // namespace mfeq
