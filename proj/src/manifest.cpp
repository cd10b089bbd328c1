#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mambamil/data.hpp"
#include "mambamil/errors.hpp"

namespace mambamil {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

[[noreturn]] void manifest_error(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw FormatError(FormatError::Kind::kManifest, path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

bool valid_bag_id(const std::string& id) {
  if (id.empty()) return false;
  for (unsigned char c : id) {
    if (!(std::isalnum(c) || c == '_' || c == '-')) return false;
  }
  return true;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) manifest_error(path, 1, "empty manifest");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line == "id,path,label") {
    m.task = Task::kSubtype;
  } else if (line == "id,path,time,event") {
    m.task = Task::kSurvival;
  } else {
    manifest_error(path, 1, "header must be 'id,path,label' or 'id,path,time,event', got '" + line + "'");
  }
  const std::size_t columns = m.task == Task::kSubtype ? 3 : 4;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != columns) {
      manifest_error(path, line_no, "expected " + std::to_string(columns) + " fields, got " + std::to_string(f.size()));
    }
    ManifestRecord r;
    r.id = f[0];
    r.path = f[1];
    if (!valid_bag_id(r.id)) manifest_error(path, line_no, "invalid id '" + r.id + "'");
    if (!seen.insert(r.id).second) manifest_error(path, line_no, "duplicate id '" + r.id + "'");
    if (m.task == Task::kSubtype) {
      std::size_t label = 0;
      auto [p, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), label);
      if (ec != std::errc() || p != f[2].data() + f[2].size()) manifest_error(path, line_no, "bad label '" + f[2] + "'");
      r.label = label;
    } else {
      double time = 0.0;
      try {
        std::size_t used = 0;
        time = std::stod(f[2], &used);
        if (used != f[2].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        manifest_error(path, line_no, "bad time '" + f[2] + "'");
      }
      if (!(time > 0.0) || !std::isfinite(time)) manifest_error(path, line_no, "time must be positive");
      if (f[3] != "0" && f[3] != "1") manifest_error(path, line_no, "event must be 0 or 1, got '" + f[3] + "'");
      r.survival = SurvivalTarget{time, f[3] == "1"};
    }
    const std::filesystem::path file = m.base_dir / r.path;
    if (!std::filesystem::exists(file)) manifest_error(path, line_no, "missing feature file " + file.string());
    m.records.push_back(std::move(r));
  }
  if (m.records.empty()) manifest_error(path, line_no, "manifest lists no bags");
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string() + " for writing");
  out << (manifest.task == Task::kSubtype ? "id,path,label\n" : "id,path,time,event\n");
  out.precision(17);
  for (const auto& r : manifest.records) {
    out << r.id << ',' << r.path << ',';
    if (manifest.task == Task::kSubtype) {
      out << r.label.value() << '\n';
    } else {
      out << r.survival->time << ',' << (r.survival->event ? 1 : 0) << '\n';
    }
  }
  if (!out) throw FormatError(FormatError::Kind::kIo, "write failed for " + path.string());
}

std::vector<Bag> load_bags(const Manifest& manifest) {
  std::vector<Bag> bags;
  bags.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    Bag b;
    b.id = r.id;
    b.features = read_feature_file(manifest.base_dir / r.path);
    if (b.features.dim(0) == 0) throw FormatError(FormatError::Kind::kManifest, "bag " + r.id + " has no instances");
    b.label = r.label;
    b.survival = r.survival;
    bags.push_back(std::move(b));
  }
  return bags;
}

}  // namespace mambamil
