#include "subrisk/serialize.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "subrisk/error.hpp"

namespace subrisk {

using nlohmann::json;

namespace {

// JSON has no infinities; they are written as strings so reports still
// round-trip (an unbounded kl term gives an infinite raw bound).
json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double get_num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw Error(ErrorCode::ParseError, "expected a number in report JSON");
}

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

bool same(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace

void to_json(json& j, const BoundReport& r) {
  json comps = json::object();
  for (const auto& [k, v] : r.components) comps[k] = num(v);
  j = json{{"kind", std::string(to_string(r.kind))},
           {"empirical_risk", num(r.empirical_risk)},
           {"complexity", num(r.complexity)},
           {"bound", num(r.bound)},
           {"certificate", num(r.certificate)},
           {"vacuous", r.vacuous},
           {"estimate", r.estimate},
           {"components", comps},
           {"d_empirical", num(r.d_empirical)},
           {"d_kl", num(r.d_kl)}};
}

void from_json(const json& j, BoundReport& r) {
  r.kind = parse_bound_kind(j.at("kind").get<std::string>());
  r.empirical_risk = get_num(j.at("empirical_risk"));
  r.complexity = get_num(j.at("complexity"));
  r.bound = get_num(j.at("bound"));
  r.certificate = get_num(j.at("certificate"));
  r.vacuous = j.at("vacuous").get<bool>();
  r.estimate = j.at("estimate").get<bool>();
  r.components.clear();
  for (const auto& [k, v] : j.at("components").items()) r.components[k] = get_num(v);
  r.d_empirical = get_num(j.at("d_empirical"));
  r.d_kl = get_num(j.at("d_kl"));
}

void to_json(json& j, const TraceRecord& r) {
  j = json{{"step", r.step},
           {"epoch", r.epoch},
           {"batch_size", r.batch_size},
           {"batch_risk", num(r.batch_risk)},
           {"kl_disintegrated", num(r.kl_disintegrated)},
           {"kl_classical", num(r.kl_classical)},
           {"report", r.report}};
}

void to_json(json& j, const Summary& s) { j = json{{"mean", num(s.mean)}, {"std", num(s.std)}}; }

void from_json(const json& j, Summary& s) {
  s.mean = get_num(j.at("mean"));
  s.std = get_num(j.at("std"));
}

void to_json(json& j, const RunEntry& e) {
  json errs = json::array();
  for (double v : e.class_errors) errs.push_back(num(v));
  j = json{{"bound", std::string(to_string(e.bound))},
           {"alpha", num(e.alpha)},
           {"repetition", e.repetition},
           {"report", e.report},
           {"n_priors", e.n_priors},
           {"train_size", e.train_size},
           {"test_risk", num(e.test_risk)},
           {"f_score", num(e.f_score)},
           {"test_error", num(e.test_error)},
           {"class_errors", errs}};
}

void from_json(const json& j, RunEntry& e) {
  e.bound = parse_bound_kind(j.at("bound").get<std::string>());
  e.alpha = get_num(j.at("alpha"));
  e.repetition = j.at("repetition").get<std::size_t>();
  e.report = j.at("report").get<BoundReport>();
  e.n_priors = j.at("n_priors").get<std::size_t>();
  e.train_size = j.at("train_size").get<std::size_t>();
  e.test_risk = get_num(j.at("test_risk"));
  e.f_score = get_num(j.at("f_score"));
  e.test_error = get_num(j.at("test_error"));
  e.class_errors.clear();
  for (const auto& v : j.at("class_errors")) e.class_errors.push_back(get_num(v));
}

void to_json(json& j, const RunAggregate& a) {
  j = json{{"bound", std::string(to_string(a.bound))},
           {"alpha", num(a.alpha)},
           {"bound_value", a.bound_value},
           {"test_risk", a.test_risk},
           {"f_score", a.f_score},
           {"class_errors", a.class_errors}};
}

void from_json(const json& j, RunAggregate& a) {
  a.bound = parse_bound_kind(j.at("bound").get<std::string>());
  a.alpha = get_num(j.at("alpha"));
  a.bound_value = j.at("bound_value").get<Summary>();
  a.test_risk = j.at("test_risk").get<Summary>();
  a.f_score = j.at("f_score").get<Summary>();
  a.class_errors = j.at("class_errors").get<std::vector<Summary>>();
}

void to_json(json& j, const RunReport& r) {
  j = json{{"settings", r.settings},
           {"num_classes", r.num_classes},
           {"repetitions", r.repetitions},
           {"entries", r.entries},
           {"aggregates", r.aggregates}};
}

void from_json(const json& j, RunReport& r) {
  r.settings = j.at("settings").get<std::map<std::string, std::string>>();
  r.num_classes = j.at("num_classes").get<std::size_t>();
  r.repetitions = j.at("repetitions").get<std::size_t>();
  r.entries = j.at("entries").get<std::vector<RunEntry>>();
  r.aggregates = j.at("aggregates").get<std::vector<RunAggregate>>();
}

void write_trace_jsonl(std::span<const TraceRecord> trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& rec : trace) out << json(rec).dump() << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

bool operator==(const BoundReport& a, const BoundReport& b) {
  if (a.components.size() != b.components.size()) return false;
  for (auto ia = a.components.begin(), ib = b.components.begin(); ia != a.components.end();
       ++ia, ++ib) {
    if (ia->first != ib->first || !same(ia->second, ib->second)) return false;
  }
  return a.kind == b.kind && same(a.empirical_risk, b.empirical_risk) &&
         same(a.complexity, b.complexity) && same(a.bound, b.bound) &&
         same(a.certificate, b.certificate) && a.vacuous == b.vacuous &&
         a.estimate == b.estimate && same(a.d_empirical, b.d_empirical) && same(a.d_kl, b.d_kl);
}

bool operator==(const RunEntry& a, const RunEntry& b) {
  return a.bound == b.bound && same(a.alpha, b.alpha) && a.repetition == b.repetition &&
         a.report == b.report && a.n_priors == b.n_priors && a.train_size == b.train_size &&
         same(a.test_risk, b.test_risk) && same(a.f_score, b.f_score) &&
         same(a.test_error, b.test_error) && same(a.class_errors, b.class_errors);
}

bool operator==(const Summary& a, const Summary& b) {
  return same(a.mean, b.mean) && same(a.std, b.std);
}

bool operator==(const RunAggregate& a, const RunAggregate& b) {
  return a.bound == b.bound && same(a.alpha, b.alpha) && a.bound_value == b.bound_value &&
         a.test_risk == b.test_risk && a.f_score == b.f_score && a.class_errors == b.class_errors;
}

bool operator==(const RunReport& a, const RunReport& b) {
  return a.settings == b.settings && a.num_classes == b.num_classes &&
         a.repetitions == b.repetitions && a.entries == b.entries && a.aggregates == b.aggregates;
}

}  // namespace subrisk
