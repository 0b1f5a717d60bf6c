#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "termstat/corpus.hpp"
#include "termstat/schema.hpp"

namespace fixtures {

inline std::filesystem::path path(const std::string& name) {
  return std::filesystem::path(TERMSTAT_FIXTURES) / name;
}

inline std::string read(const std::string& name) {
  std::ifstream in(path(name), std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline const termstat::Schema& chunyu() {
  static const termstat::Schema schema = termstat::load_schema_file(path("chunyu_like_schema.yaml"));
  return schema;
}

inline termstat::Dialogue table1() {
  return termstat::ingest_dialogues_file(path("table1_dialogue.jsonl"), chunyu()).at(0);
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("termstat_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
