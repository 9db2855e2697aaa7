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


// File formats. JSON documents carry a "format" tag with a version; traces
// are CSV with a fixed column order per (groups, objectives) shape.

#ifndef MOPO_SERIALIZATION_H_
#define MOPO_SERIALIZATION_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mopo/driver.h"
#include "mopo/geometry.h"
#include "mopo/learning.h"
#include "mopo/oracle.h"
#include "mopo/world.h"

namespace mopo {

using Json = nlohmann::ordered_json;

inline constexpr char kWorldFormat[] = "mopo-world/1";
inline constexpr char kTraceCsvFormat[] = "mopo-trace-csv/1";
inline constexpr char kSummaryFormat[] = "mopo-summary/1";
inline constexpr char kOracleFormat[] = "mopo-oracle/1";

// Raised for malformed documents. The CLI maps it to exit code 2.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json VectorToJson(const Eigen::VectorXd& v);
Eigen::VectorXd VectorFromJson(const Json& j);
Json MatrixToJson(const Eigen::MatrixXd& a);
Eigen::MatrixXd MatrixFromJson(const Json& j);

// {"alpha": [...], "p": number | "neg_inf", "c": number}
Json ToJson(const AggregationSpec& spec);
AggregationSpec AggregationSpecFromJson(const Json& j);
// {"groups": [...], "zeta": [...], "q": int}; zeta defaults to uniform and q
// to 1 when absent.
Json ToJson(const MultiGroupSpec& mg);
MultiGroupSpec MultiGroupSpecFromJson(const Json& j);

Json ToJson(const Policy& pi);
Policy PolicyFromJson(const Json& j);

Json ToJson(const TabularWorld& world);
TabularWorld WorldFromJson(const Json& j);

Json ToJson(const RewardFit& fit);
RewardFit RewardFitFromJson(const Json& j);

Json ToJson(const WeightEstimate& estimate);
WeightEstimate WeightEstimateFromJson(const Json& j);

Json ToJson(const OracleResult& result);
OracleResult OracleResultFromJson(const Json& j);

Json ToJson(const PreferenceDatum& datum);
PreferenceDatum PreferenceDatumFromJson(const Json& j);
void WriteJsonLines(std::ostream& out, std::span<const PreferenceDatum> data);
std::vector<PreferenceDatum> ReadJsonLines(std::istream& in);

std::string HashToHex(std::uint64_t hash);
std::uint64_t HashFromHex(const std::string& hex);

// Trace CSV: t, dist_mean_to_W, dist_group_<n>, alpha_err_inf_<n>,
// d_t_<i>. Alpha errors are left empty outside online runs.
std::vector<std::string> TraceCsvColumns(int groups, int objectives);
void WriteTraceCsvHeader(std::ostream& out, int groups, int objectives);
void WriteTraceCsvRow(std::ostream& out, const IterationRecord& record,
                      int groups, int objectives);
void WriteTraceCsv(std::ostream& out, const RunTrace& trace);

// Shortest decimal text that parses back to the same double.
std::string FormatDouble(double value);

std::string ReadFile(const std::string& path);
Json ReadJsonFile(const std::string& path);
void WriteFile(const std::string& path, const std::string& contents);

}  // namespace mopo

#endif  // MOPO_SERIALIZATION_H_
