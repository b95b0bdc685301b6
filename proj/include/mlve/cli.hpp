#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace mlve {

constexpr const char* kReportSchema = "mlve-report/1";

// command, config snapshot, typed results, timing and audit flags
struct RunReport {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json results = nlohmann::json::object();
  nlohmann::json audit = nlohmann::json::object();
  double seconds = 0;
  bool ok = true;
  nlohmann::json to_json() const;
};

// exit code: 0 success, 1 invariant violation, 2 usage error
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlve
