#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ymflow/config.hpp"

namespace ymflow {

// Header block carried by every artifact.
struct ArtifactHeader {
  std::string config_hash;
  std::string version;
  std::string grid;
};

ArtifactHeader make_header(const RunConfig& c, const std::string& grid_descriptor);

// All writes of one command go through this; paths that leave the root are rejected.
class OutputRoot {
 public:
  // `out` names a directory, or a file whose parent becomes the root.
  // default_name is used for the primary file when `out` is a directory.
  OutputRoot(const std::string& out, const std::string& default_name);

  const std::filesystem::path& root() const { return root_; }
  const std::filesystem::path& primary() const { return primary_; }
  // Primary path with its extension replaced.
  std::filesystem::path sibling(const std::string& ext) const;
  // Relative names resolve against the root; anything outside it is a config_error.
  std::filesystem::path resolve(const std::string& name) const;

 private:
  std::filesystem::path root_, primary_;
};

struct Column {
  std::string name;
  std::vector<double> values;
};

// '#'-prefixed header lines, a column-name line, then rows with 17 significant digits.
void write_csv(const std::filesystem::path& path, const ArtifactHeader& h, const std::vector<Column>& cols);
// {"header": {...}, ...body}
void write_json(const std::filesystem::path& path, const ArtifactHeader& h, const nlohmann::json& body);

// 17 significant digits; non-finite values as nan / inf / -inf.
std::string format_double(double v);

}  // namespace ymflow
