#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ymflow/config.hpp"

namespace ymflow {

struct CriterionInfo {
  int id = 0;
  std::string key;    // accepted on the command line
  std::string title;
};

const std::vector<CriterionInfo>& criteria_table();
// Numeric id or key; throws config_error.
int criterion_id(const std::string& name);

struct CriterionResult {
  int id = 0;
  std::string key, title;
  bool pass = false;
  std::vector<std::string> failed;  // names of the failed checks
  std::string error;                // exception text when the criterion could not run
  nlohmann::json metrics = nlohmann::json::object();
};

struct VerifyReport {
  std::string tier;
  std::vector<CriterionResult> results;  // ordered by id
  bool pass() const;
};

// Runs the selected criteria (all when c.criteria is empty). Independent groups run on
// `threads` workers; the report does not depend on the thread count.
VerifyReport run_verify(const RunConfig& c, int threads = 1);

nlohmann::json to_json(const VerifyReport& r);

}  // namespace ymflow
