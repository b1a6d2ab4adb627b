#include "util.hpp"

#include <fstream>
#include <sstream>

#include "niv/error.hpp"

#ifndef NIV_VERSION
#define NIV_VERSION "dev"
#endif

namespace niv::cli {

std::filesystem::path manifest_path(const std::filesystem::path& output) {
  return output.string() + ".manifest.json";
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  json j;
  j["tool"] = "niv";
  j["version"] = NIV_VERSION;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["config"] = m.config;
  if (!m.scene.is_null()) j["scene"] = m.scene;
  j["outputs"] = m.outputs;
  j["timings"] = m.timings;
  if (!m.report.is_null()) j["report"] = m.report;
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

std::vector<std::string> read_manifest_argv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  if (!j.contains("argv") || !j["argv"].is_array()) throw InputError(path.string() + ": manifest has no argv");
  return j["argv"].get<std::vector<std::string>>();
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError("not a number: '" + item + "' in list '" + s + "'");
    }
  }
  return out;
}

namespace {

// Splits on commas that are not inside parentheses.
std::vector<std::string> split_top(const std::string& s) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string strip_parens(std::string s) {
  if (s.size() >= 2 && s.front() == '(' && s.back() == ')') s = s.substr(1, s.size() - 2);
  return s;
}

Vec3 parse_vec3(const std::string& s, const std::string& spec) {
  const auto v = parse_list(strip_parens(s));
  if (v.size() != 3) throw InputError("dynamic '" + spec + "': expected three numbers in '" + s + "'");
  return {v[0], v[1], v[2]};
}

}  // namespace

void add_dynamic(SceneDesc& desc, const std::string& spec) {
  const size_t at = spec.find('@');
  const std::string what = spec.substr(0, at);
  Mesh mesh;
  if (what.rfind("sphere:", 0) == 0) {
    const auto r = parse_list(what.substr(7));
    if (r.size() != 1 || !(r[0] > 0)) throw InputError("dynamic '" + spec + "': bad sphere radius");
    mesh = make_sphere({0, 0, 0}, r[0], 32);
  } else {
    mesh = load_obj(what);
  }
  mesh.id = "dynamic_" + std::to_string(desc.meshes.size());

  Material mat;
  mat.id = mesh.id;
  mat.albedo = Rgb::splat(0.8);
  Instance inst;
  inst.dynamic = true;
  if (at != std::string::npos) {
    for (const std::string& kv : split_top(strip_parens(spec.substr(at + 1)))) {
      const size_t eq = kv.find('=');
      const std::string key = kv.substr(0, eq), val = eq == std::string::npos ? "" : kv.substr(eq + 1);
      if (key == "t") {
        inst.transform.translate = parse_vec3(val, spec);
      } else if (key == "s") {
        const auto v = parse_list(val);
        if (v.size() != 1 || !(v[0] > 0)) throw InputError("dynamic '" + spec + "': bad scale");
        inst.transform.scale = v[0];
      } else if (key == "ry") {
        const auto v = parse_list(val);
        if (v.size() != 1) throw InputError("dynamic '" + spec + "': bad rotation");
        inst.transform.rotation_degrees = v[0];
      } else if (key == "albedo") {
        const Vec3 a = parse_vec3(val, spec);
        if (a.x < 0 || a.x > 1 || a.y < 0 || a.y > 1 || a.z < 0 || a.z > 1)
          throw InputError("dynamic '" + spec + "': albedo must be in [0,1]");
        mat.albedo = {a.x, a.y, a.z};
      } else if (key == "mirror") {
        mat.kind = MaterialKind::mirror;
      } else {
        throw InputError("dynamic '" + spec + "': unknown key '" + key + "'");
      }
    }
  }
  desc.meshes.push_back(std::move(mesh));
  desc.materials.push_back(mat);
  inst.mesh = desc.meshes.size() - 1;
  inst.material = desc.materials.size() - 1;
  desc.instances.push_back(inst);
}

std::string hex_digest(const Digest& d) { return to_hex(d); }

}  // namespace niv::cli
