#include "ymflow/output.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "ymflow/error.hpp"

namespace ymflow {

namespace fs = std::filesystem;

ArtifactHeader make_header(const RunConfig& c, const std::string& grid_descriptor) {
  return {config_hash(c), version(), grid_descriptor};
}

OutputRoot::OutputRoot(const std::string& out, const std::string& default_name) {
  if (out.empty()) throw config_error("missing output path");
  const fs::path p(out);
  const bool is_file = p.has_extension() && !fs::is_directory(p);
  if (is_file) {
    root_ = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    primary_ = p;
  } else {
    root_ = p;
    primary_ = p / default_name;
  }
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec || !fs::is_directory(root_)) throw config_error("cannot create output directory '" + root_.string() + "'");
  root_ = fs::weakly_canonical(root_);
  primary_ = resolve(primary_.string());
}

fs::path OutputRoot::sibling(const std::string& ext) const {
  auto p = primary_;
  p.replace_extension(ext);
  return p;
}

fs::path OutputRoot::resolve(const std::string& name) const {
  fs::path p(name);
  // A relative name that already starts with the root as given is taken literally.
  if (p.is_relative()) {
    const auto lit = fs::weakly_canonical(p);
    const auto rel = lit.lexically_relative(root_);
    p = (!rel.empty() && *rel.begin() != "..") ? lit : fs::weakly_canonical(root_ / p);
  } else {
    p = fs::weakly_canonical(p);
  }
  const auto rel = p.lexically_relative(root_);
  if (rel.empty() || *rel.begin() == ".." || rel == ".")
    throw config_error("output '" + name + "' lies outside the output directory '" + root_.string() + "'");
  return p;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

namespace {

void check_stream(const std::ofstream& os, const fs::path& path) {
  if (!os) throw numerical_error("failed writing '" + path.string() + "'");
}

}  // namespace

void write_csv(const fs::path& path, const ArtifactHeader& h, const std::vector<Column>& cols) {
  std::size_t rows = cols.empty() ? 0 : cols.front().values.size();
  for (const auto& c : cols)
    if (c.values.size() != rows) throw config_error("CSV columns of unequal length in '" + path.string() + "'");
  std::ofstream os(path, std::ios::binary);
  check_stream(os, path);
  os << "# config_hash: " << h.config_hash << "\n# version: " << h.version << "\n# grid: " << h.grid << "\n";
  for (std::size_t j = 0; j < cols.size(); ++j) os << (j ? "," : "") << cols[j].name;
  os << "\n";
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) os << (j ? "," : "") << format_double(cols[j].values[i]);
    os << "\n";
  }
  check_stream(os, path);
}

void write_json(const fs::path& path, const ArtifactHeader& h, const nlohmann::json& body) {
  nlohmann::json j = body;
  j["header"] = {{"config_hash", h.config_hash}, {"version", h.version}, {"grid", h.grid}};
  std::ofstream os(path, std::ios::binary);
  check_stream(os, path);
  os << j.dump(2) << "\n";
  check_stream(os, path);
}

}  // namespace ymflow
