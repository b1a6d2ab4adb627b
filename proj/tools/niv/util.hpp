#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "niv/scene_io.hpp"

namespace niv::cli {

using nlohmann::json;

// Where a command's manifest goes: next to its primary output.
std::filesystem::path manifest_path(const std::filesystem::path& output);

struct Manifest {
  std::string command;
  std::vector<std::string> argv;  // everything after the program name
  json config = json::object();
  json scene;                     // {path, sha256} when a scene was read
  json outputs = json::array();
  json timings = json::object();
  json report;                    // command-specific results, optional
};

void write_manifest(const Manifest& m, const std::filesystem::path& path);
// Argument vector recorded in a manifest.
std::vector<std::string> read_manifest_argv(const std::filesystem::path& path);

std::vector<double> parse_list(const std::string& s);

// "mesh.obj@(t=(0,0.2,0),s=0.5,ry=30,albedo=(0.8,0.8,0.8),mirror)" or
// "sphere:0.1@(...)": a dynamic instance appended to the description.
void add_dynamic(SceneDesc& desc, const std::string& spec);

std::string hex_digest(const Digest& d);

}  // namespace niv::cli
