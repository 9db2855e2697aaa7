// Copyright 2026 The Tabular MOPO Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mopo/serialization.h"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>

namespace mopo {
namespace {

using ::Eigen::MatrixXd;
using ::Eigen::VectorXd;

const Json& Field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

template <typename T>
T Get(const Json& j, const char* key) {
  try {
    return Field(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad field '") + key + "': " + e.what());
  }
}

double Number(const Json& j) {
  if (!j.is_number()) throw FormatError("expected a number");
  return j.get<double>();
}

}  // namespace

std::string FormatDouble(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

Json VectorToJson(const VectorXd& v) {
  Json out = Json::array();
  for (int k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

VectorXd VectorFromJson(const Json& j) {
  if (!j.is_array()) throw FormatError("expected an array of numbers");
  VectorXd v(j.size());
  for (size_t k = 0; k < j.size(); ++k) v[k] = Number(j[k]);
  return v;
}

Json MatrixToJson(const MatrixXd& a) {
  Json out = Json::array();
  for (int r = 0; r < a.rows(); ++r) out.push_back(VectorToJson(a.row(r).transpose()));
  return out;
}

MatrixXd MatrixFromJson(const Json& j) {
  if (!j.is_array() || j.empty()) throw FormatError("expected a nested array");
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  MatrixXd a(j.size(), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    const VectorXd row = VectorFromJson(j[r]);
    if (static_cast<size_t>(row.size()) != cols) throw FormatError("ragged matrix");
    a.row(r) = row.transpose();
  }
  return a;
}

Json ToJson(const AggregationSpec& spec) {
  Json out;
  out["alpha"] = VectorToJson(spec.alpha);
  if (spec.is_min()) {
    out["p"] = "neg_inf";
  } else {
    out["p"] = spec.p;
  }
  out["c"] = spec.c;
  return out;
}

AggregationSpec AggregationSpecFromJson(const Json& j) {
  if (!j.is_object()) throw FormatError("aggregation spec must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "alpha" && key != "p" && key != "c") {
      throw FormatError("unknown aggregation spec field '" + key + "'");
    }
  }
  AggregationSpec spec;
  spec.alpha = VectorFromJson(Field(j, "alpha"));
  const Json& p = Field(j, "p");
  if (p.is_string()) {
    if (p.get<std::string>() != "neg_inf") throw FormatError("p must be a number or \"neg_inf\"");
    spec.p = kNegInf;
  } else {
    spec.p = Number(p);
  }
  spec.c = Number(Field(j, "c"));
  try {
    spec.Validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return spec;
}

Json ToJson(const MultiGroupSpec& mg) {
  Json out;
  out["groups"] = Json::array();
  for (const auto& g : mg.groups) out["groups"].push_back(ToJson(g));
  out["zeta"] = VectorToJson(mg.zeta);
  out["q"] = mg.q;
  return out;
}

MultiGroupSpec MultiGroupSpecFromJson(const Json& j) {
  if (!j.is_object()) throw FormatError("multi-group spec must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "groups" && key != "zeta" && key != "q") {
      throw FormatError("unknown multi-group field '" + key + "'");
    }
  }
  const Json& groups = Field(j, "groups");
  if (!groups.is_array() || groups.empty()) throw FormatError("groups must be a nonempty array");
  std::vector<AggregationSpec> specs;
  for (const Json& g : groups) specs.push_back(AggregationSpecFromJson(g));
  MultiGroupSpec mg = MultiGroupSpec::Uniform(std::move(specs));
  if (j.contains("zeta")) mg.zeta = VectorFromJson(j.at("zeta"));
  if (j.contains("q")) {
    if (!j.at("q").is_number_integer()) throw FormatError("q must be an integer");
    mg.q = j.at("q").get<int>();
  }
  try {
    mg.Validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return mg;
}

Json ToJson(const Policy& pi) { return MatrixToJson(pi.probs); }

Policy PolicyFromJson(const Json& j) {
  Policy pi{MatrixFromJson(j)};
  try {
    pi.Validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return pi;
}

Json ToJson(const TabularWorld& world) {
  Json out;
  out["format"] = kWorldFormat;
  out["prompts"] = world.num_prompts();
  out["responses"] = world.num_responses();
  out["objectives"] = world.num_objectives();
  out["feature_dim"] = world.feature_dim();
  out["beta"] = world.beta();
  out["reward_bound"] = world.reward_bound();
  out["rho"] = VectorToJson(world.rho());
  out["features"] = Json::array();
  for (int i = 0; i < world.num_objectives(); ++i) {
    out["features"].push_back(MatrixToJson(world.features(i)));
  }
  out["theta_star"] = Json::array();
  for (const auto& theta : world.theta_star()) out["theta_star"].push_back(VectorToJson(theta));
  out["pi_ref"] = ToJson(world.pi_ref());
  out["pi_base"] = ToJson(world.pi_base());
  out["baselines"] = VectorToJson(world.baselines());
  out["hash"] = HashToHex(WorldHash(world));
  return out;
}

TabularWorld WorldFromJson(const Json& j) {
  if (Get<std::string>(j, "format") != kWorldFormat) {
    throw FormatError("unsupported world format");
  }
  static const std::set<std::string> kWorldKeys = {
      "format", "prompts", "responses", "objectives", "feature_dim", "beta",
      "reward_bound", "rho", "features", "theta_star", "pi_ref", "pi_base",
      "baselines", "hash"};
  for (const auto& [key, value] : j.items()) {
    if (!kWorldKeys.contains(key)) throw FormatError("unknown world field '" + key + "'");
  }
  std::vector<MatrixXd> features;
  for (const Json& f : Field(j, "features")) features.push_back(MatrixFromJson(f));
  Parameters theta;
  for (const Json& t : Field(j, "theta_star")) theta.push_back(VectorFromJson(t));
  try {
    TabularWorld world(VectorFromJson(Field(j, "rho")), std::move(features),
                       std::move(theta), Get<double>(j, "beta"),
                       PolicyFromJson(Field(j, "pi_ref")),
                       PolicyFromJson(Field(j, "pi_base")),
                       Get<double>(j, "reward_bound"));
    if (world.num_prompts() != Get<int>(j, "prompts") ||
        world.num_responses() != Get<int>(j, "responses") ||
        world.num_objectives() != Get<int>(j, "objectives")) {
      throw FormatError("world shape fields disagree with the tables");
    }
    return world;
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid world: ") + e.what());
  }
}

Json ToJson(const RewardFit& fit) {
  Json out;
  out["mode"] = FitModeName(fit.mode);
  out["eta"] = fit.eta;
  out["residual"] = fit.residual;
  out["iterations"] = fit.iterations;
  out["theta"] = Json::array();
  for (const auto& t : fit.theta) out["theta"].push_back(VectorToJson(t));
  out["objective_trace"] = fit.objective_trace;
  return out;
}

RewardFit RewardFitFromJson(const Json& j) {
  RewardFit fit;
  try {
    fit.mode = ParseFitMode(Get<std::string>(j, "mode"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  fit.eta = Get<double>(j, "eta");
  fit.residual = Get<double>(j, "residual");
  fit.iterations = Get<int>(j, "iterations");
  for (const Json& t : Field(j, "theta")) fit.theta.push_back(VectorFromJson(t));
  fit.objective_trace = Get<std::vector<double>>(j, "objective_trace");
  return fit;
}

Json ToJson(const WeightEstimate& estimate) {
  Json out;
  out["alpha_hat"] = VectorToJson(estimate.alpha_hat);
  out["loglik"] = estimate.loglik;
  out["running_mean"] = VectorToJson(estimate.running_mean);
  out["residual"] = estimate.residual;
  out["iterations"] = estimate.iterations;
  return out;
}

WeightEstimate WeightEstimateFromJson(const Json& j) {
  WeightEstimate out;
  out.alpha_hat = VectorFromJson(Field(j, "alpha_hat"));
  out.loglik = Get<double>(j, "loglik");
  out.running_mean = VectorFromJson(Field(j, "running_mean"));
  out.residual = Get<double>(j, "residual");
  out.iterations = Get<int>(j, "iterations");
  return out;
}

Json ToJson(const OracleResult& result) {
  Json out;
  out["format"] = kOracleFormat;
  out["value"] = result.value;
  out["method"] = OracleMethodName(result.method);
  out["pi_star"] = ToJson(result.pi_star);
  Json cert;
  cert["best"] = result.certificate.best;
  cert["spread"] = result.certificate.spread;
  cert["restart_values"] = result.certificate.restart_values;
  if (result.certificate.grid_value.has_value()) {
    cert["grid_value"] = *result.certificate.grid_value;
  } else {
    cert["grid_value"] = nullptr;
  }
  out["certificate"] = cert;
  out["budget_exhausted"] = result.budget_exhausted;
  out["multimodal"] = result.multimodal;
  out["world_hash"] = HashToHex(result.world_hash);
  return out;
}

OracleResult OracleResultFromJson(const Json& j) {
  if (Get<std::string>(j, "format") != kOracleFormat) {
    throw FormatError("unsupported oracle format");
  }
  OracleResult out;
  out.value = Get<double>(j, "value");
  const std::string method = Get<std::string>(j, "method");
  if (method == "dense-grid") {
    out.method = OracleMethod::kDenseGrid;
  } else if (method == "multistart-gd") {
    out.method = OracleMethod::kMultistartGd;
  } else {
    throw FormatError("unknown oracle method '" + method + "'");
  }
  out.pi_star = PolicyFromJson(Field(j, "pi_star"));
  const Json& cert = Field(j, "certificate");
  out.certificate.best = Get<double>(cert, "best");
  out.certificate.spread = Get<double>(cert, "spread");
  out.certificate.restart_values = Get<std::vector<double>>(cert, "restart_values");
  if (!Field(cert, "grid_value").is_null()) {
    out.certificate.grid_value = Get<double>(cert, "grid_value");
  }
  out.budget_exhausted = Get<bool>(j, "budget_exhausted");
  out.multimodal = Get<bool>(j, "multimodal");
  out.world_hash = HashFromHex(Get<std::string>(j, "world_hash"));
  return out;
}

Json ToJson(const PreferenceDatum& datum) {
  Json out;
  out["x"] = datum.x;
  out["y_w"] = datum.y_w;
  out["y_l"] = datum.y_l;
  out["group"] = datum.group;
  out["index"] = datum.index;
  return out;
}

PreferenceDatum PreferenceDatumFromJson(const Json& j) {
  PreferenceDatum d{Get<int>(j, "x"), Get<int>(j, "y_w"), Get<int>(j, "y_l"),
                    Get<int>(j, "group"), Get<int>(j, "index")};
  if (d.y_w == d.y_l) throw FormatError("winner equals loser");
  return d;
}

void WriteJsonLines(std::ostream& out, std::span<const PreferenceDatum> data) {
  for (const auto& d : data) out << ToJson(d).dump() << '\n';
}

std::vector<PreferenceDatum> ReadJsonLines(std::istream& in) {
  std::vector<PreferenceDatum> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(PreferenceDatumFromJson(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string HashToHex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::uint64_t HashFromHex(const std::string& hex) {
  std::uint64_t value = 0;
  const auto result = std::from_chars(hex.data(), hex.data() + hex.size(), value, 16);
  if (result.ec != std::errc() || result.ptr != hex.data() + hex.size()) {
    throw FormatError("bad hash '" + hex + "'");
  }
  return value;
}

std::vector<std::string> TraceCsvColumns(int groups, int objectives) {
  std::vector<std::string> cols = {"t", "dist_mean_to_W"};
  for (int n = 0; n < groups; ++n) cols.push_back("dist_group_" + std::to_string(n));
  for (int n = 0; n < groups; ++n) cols.push_back("alpha_err_inf_" + std::to_string(n));
  for (int i = 0; i < objectives; ++i) cols.push_back("d_t_" + std::to_string(i));
  return cols;
}

void WriteTraceCsvHeader(std::ostream& out, int groups, int objectives) {
  const auto cols = TraceCsvColumns(groups, objectives);
  for (size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << '\n';
}

void WriteTraceCsvRow(std::ostream& out, const IterationRecord& record,
                      int groups, int objectives) {
  out << record.t << ',' << FormatDouble(record.distance);
  for (int n = 0; n < groups; ++n) out << ',' << FormatDouble(record.group_distances[n]);
  for (int n = 0; n < groups; ++n) {
    out << ',';
    if (record.alpha_error.size() == groups) out << FormatDouble(record.alpha_error[n]);
  }
  for (int i = 0; i < objectives; ++i) out << ',' << FormatDouble(record.d_bar[i]);
  out << '\n';
}

void WriteTraceCsv(std::ostream& out, const RunTrace& trace) {
  const int groups = trace.target.groups.num_groups();
  const int objectives = trace.target.groups.dim();
  WriteTraceCsvHeader(out, groups, objectives);
  for (const auto& r : trace.records) WriteTraceCsvRow(out, r, groups, objectives);
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json ReadJsonFile(const std::string& path) {
  try {
    return Json::parse(ReadFile(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

void WriteFile(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << contents;
}

}  // namespace mopo
