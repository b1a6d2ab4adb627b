#include "niv/scene_io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "niv/error.hpp"

namespace niv {

using nlohmann::json;

Digest sha256(std::string_view bytes) {
  Digest d{};
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), d.data(), &len, EVP_sha256(), nullptr);
  return d;
}

std::string to_hex(const Digest& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (uint8_t b : d) {
    s += kHex[b >> 4];
    s += kHex[b & 15];
  }
  return s;
}

Mesh make_quad(const std::array<Vec3, 4>& c) {
  Mesh m;
  m.id = "quad";
  m.positions.assign(c.begin(), c.end());
  m.indices = {0, 1, 2, 0, 2, 3};
  return m;
}

Mesh make_box(const Vec3& lo, const Vec3& hi, bool inward, bool open_bottom) {
  Mesh m;
  m.id = "box";
  for (int i = 0; i < 8; ++i)
    m.positions.push_back({i & 1 ? hi.x : lo.x, i & 2 ? hi.y : lo.y, i & 4 ? hi.z : lo.z});
  // Outward-facing, counter-clockwise seen from outside.
  const uint32_t faces[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                                {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  for (int k = 0; k < 6; ++k) {
    const auto& f = faces[k];
    if (open_bottom && k == 2) continue;  // -y face, e.g. resting on a floor
    if (inward) {
      m.indices.insert(m.indices.end(), {f[0], f[2], f[1], f[0], f[3], f[2]});
    } else {
      m.indices.insert(m.indices.end(), {f[0], f[1], f[2], f[0], f[2], f[3]});
    }
  }
  return m;
}

Mesh make_sphere(const Vec3& center, double radius, int segments) {
  Mesh m;
  m.id = "sphere";
  const int rings = std::max(segments / 2, 2);
  const int sectors = std::max(segments, 3);
  for (int r = 0; r <= rings; ++r) {
    const double theta = kPi * r / rings;
    for (int s = 0; s <= sectors; ++s) {
      const double phi = 2 * kPi * s / sectors;
      const Vec3 n{std::sin(theta) * std::cos(phi), std::cos(theta), std::sin(theta) * std::sin(phi)};
      m.positions.push_back(center + n * radius);
      m.normals.push_back(n);
    }
  }
  const auto row = static_cast<uint32_t>(sectors + 1);
  for (uint32_t r = 0; r < static_cast<uint32_t>(rings); ++r) {
    for (uint32_t s = 0; s < static_cast<uint32_t>(sectors); ++s) {
      const uint32_t a = r * row + s, b = a + row;
      if (r != 0) m.indices.insert(m.indices.end(), {a, a + 1, b});
      if (r + 1 != static_cast<uint32_t>(rings)) m.indices.insert(m.indices.end(), {a + 1, b + 1, b});
    }
  }
  return m;
}

Mesh parse_obj(std::string_view text, const std::string& id) {
  Mesh mesh;
  mesh.id = id;
  std::vector<Vec3> v, vn;
  std::map<std::pair<long, long>, uint32_t> remap;
  bool any_normals = false;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw InputError(id + ":" + std::to_string(line_no) + ": " + msg);
  };
  struct Corner {
    long v, n;
  };
  std::vector<std::vector<Corner>> faces;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v" || tag == "vn") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z)) fail("malformed '" + tag + "' record");
      if (!is_finite(p)) fail("non-finite vertex");
      (tag == "v" ? v : vn).push_back(p);
    } else if (tag == "f") {
      std::vector<Corner> face;
      std::string tok;
      while (ls >> tok) {
        Corner c{0, 0};
        const auto s1 = tok.find('/');
        auto parse_index = [&](std::string_view sv, size_t count) -> long {
          long idx = 0;
          auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), idx);
          if (ec != std::errc() || idx == 0) fail("bad face index '" + std::string(tok) + "'");
          if (idx < 0) idx += static_cast<long>(count) + 1;
          if (idx < 1 || idx > static_cast<long>(count)) fail("face index out of range");
          return idx;
        };
        c.v = parse_index(std::string_view(tok).substr(0, s1), v.size());
        if (s1 != std::string::npos) {
          const auto s2 = tok.find('/', s1 + 1);
          if (s2 != std::string::npos && s2 + 1 < tok.size()) {
            c.n = parse_index(std::string_view(tok).substr(s2 + 1), vn.size());
            any_normals = true;
          }
        }
        face.push_back(c);
      }
      if (face.size() < 3) fail("face with fewer than 3 vertices");
      faces.push_back(std::move(face));
    }
  }
  if (faces.empty()) throw InputError(id + ": empty mesh");
  for (const auto& face : faces) {
    std::vector<uint32_t> ids;
    for (const Corner& c : face) {
      const auto key = std::make_pair(c.v, any_normals ? c.n : 0L);
      auto [it, inserted] = remap.try_emplace(key, static_cast<uint32_t>(mesh.positions.size()));
      if (inserted) {
        mesh.positions.push_back(v[c.v - 1]);
        if (any_normals) mesh.normals.push_back(c.n > 0 ? normalize(vn[c.n - 1]) : Vec3{});
      }
      ids.push_back(it->second);
    }
    for (size_t k = 1; k + 1 < ids.size(); ++k)
      mesh.indices.insert(mesh.indices.end(), {ids[0], ids[k], ids[k + 1]});
  }
  return mesh;
}

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open mesh file: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_obj(ss.str(), path.string());
}

namespace {

// Field-path aware accessors so errors read like "materials[2].albedo: ...".
struct Reader {
  const json& j;
  std::string path;

  Reader at(const std::string& key) const {
    if (!j.is_object() || !j.contains(key)) throw InputError(path + ": missing field '" + key + "'");
    return {j.at(key), path + "." + key};
  }
  bool has(const std::string& key) const { return j.is_object() && j.contains(key); }
  Reader operator[](size_t i) const { return {j.at(i), path + "[" + std::to_string(i) + "]"}; }

  [[noreturn]] void fail(const std::string& msg) const { throw InputError(path + ": " + msg); }

  double number() const {
    if (!j.is_number()) fail("expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail("non-finite value");
    return v;
  }
  std::string string() const {
    if (!j.is_string()) fail("expected a string");
    return j.get<std::string>();
  }
  bool boolean() const {
    if (!j.is_boolean()) fail("expected a boolean");
    return j.get<bool>();
  }
  Vec3 vec3() const {
    if (!j.is_array() || j.size() != 3) fail("expected [x, y, z]");
    return {(*this)[0].number(), (*this)[1].number(), (*this)[2].number()};
  }
  Rgb rgb() const {
    if (!j.is_array() || j.size() != 3) fail("expected [r, g, b]");
    return {(*this)[0].number(), (*this)[1].number(), (*this)[2].number()};
  }
  size_t size() const {
    if (!j.is_array()) fail("expected an array");
    return j.size();
  }
};

Mesh parse_primitive(const Reader& r) {
  const std::string type = r.at("type").string();
  const Reader params = r.has("params") ? r.at("params") : Reader{json::object(), r.path + ".params"};
  if (type == "quad") {
    if (params.has("corners")) {
      const Reader c = params.at("corners");
      if (c.size() != 4) c.fail("quad needs 4 corners");
      return make_quad({c[0].vec3(), c[1].vec3(), c[2].vec3(), c[3].vec3()});
    }
    double w = 1, h = 1;
    if (params.has("size")) {
      const Reader s = params.at("size");
      if (s.size() != 2) s.fail("expected [width, height]");
      w = s[0].number();
      h = s[1].number();
    }
    return make_quad({Vec3{-w / 2, -h / 2, 0}, Vec3{w / 2, -h / 2, 0}, Vec3{w / 2, h / 2, 0},
                      Vec3{-w / 2, h / 2, 0}});
  }
  if (type == "box") {
    const Vec3 lo = params.has("min") ? params.at("min").vec3() : Vec3{-0.5, -0.5, -0.5};
    const Vec3 hi = params.has("max") ? params.at("max").vec3() : Vec3{0.5, 0.5, 0.5};
    if (!(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z)) params.fail("box min must be < max");
    const bool inward = params.has("inward") && params.at("inward").boolean();
    const bool open_bottom = params.has("open_bottom") && params.at("open_bottom").boolean();
    return make_box(lo, hi, inward, open_bottom);
  }
  if (type == "sphere") {
    const Vec3 c = params.has("center") ? params.at("center").vec3() : Vec3{};
    const double radius = params.has("radius") ? params.at("radius").number() : 1.0;
    if (!(radius > 0)) params.fail("sphere radius must be > 0");
    const int seg = params.has("segments") ? static_cast<int>(params.at("segments").number()) : 24;
    return make_sphere(c, radius, seg);
  }
  r.at("type").fail("unknown primitive type '" + type + "'");
}

}  // namespace

SceneDesc parse_scene(const json& root, const std::filesystem::path& base_dir) {
  const Reader r{root, "scene"};
  if (!root.is_object()) r.fail("expected a JSON object");
  SceneDesc d;
  std::map<std::string, size_t> mesh_ids, material_ids;

  if (r.has("meshes")) {
    const Reader meshes = r.at("meshes");
    for (size_t i = 0; i < meshes.size(); ++i) {
      const Reader m = meshes[i];
      const std::string id = m.at("id").string();
      Mesh mesh;
      if (m.has("obj_path")) {
        std::filesystem::path p = m.at("obj_path").string();
        if (p.is_relative()) p = base_dir / p;
        if (!std::filesystem::exists(p)) m.at("obj_path").fail("missing mesh file " + p.string());
        mesh = load_obj(p);
      } else if (m.has("primitive")) {
        mesh = parse_primitive(m.at("primitive"));
      } else {
        m.fail("mesh needs 'obj_path' or 'primitive'");
      }
      mesh.id = id;
      for (const auto& p : mesh.positions)
        if (!is_finite(p)) m.fail("non-finite vertex");
      if (!mesh_ids.emplace(id, d.meshes.size()).second) m.fail("duplicate mesh id '" + id + "'");
      d.meshes.push_back(std::move(mesh));
    }
  }
  if (r.has("materials")) {
    const Reader mats = r.at("materials");
    for (size_t i = 0; i < mats.size(); ++i) {
      const Reader m = mats[i];
      Material mat;
      mat.id = m.at("id").string();
      if (m.has("albedo")) mat.albedo = m.at("albedo").rgb();
      if (m.has("emission")) mat.emission = m.at("emission").rgb();
      if (m.has("kind")) {
        const std::string k = m.at("kind").string();
        if (k == "diffuse") mat.kind = MaterialKind::diffuse;
        else if (k == "mirror") mat.kind = MaterialKind::mirror;
        else m.at("kind").fail("unknown material kind '" + k + "'");
      }
      for (int c = 0; c < 3; ++c) {
        if (mat.albedo[c] < 0 || mat.albedo[c] > 1) m.at("albedo").fail("albedo out of [0,1]");
        if (mat.emission[c] < 0) m.at("emission").fail("emission must be >= 0");
      }
      if (!material_ids.emplace(mat.id, d.materials.size()).second)
        m.fail("duplicate material id '" + mat.id + "'");
      d.materials.push_back(std::move(mat));
    }
  }
  if (r.has("instances")) {
    const Reader insts = r.at("instances");
    for (size_t i = 0; i < insts.size(); ++i) {
      const Reader in = insts[i];
      Instance inst;
      const std::string mesh = in.at("mesh").string();
      const std::string mat = in.at("material").string();
      if (!mesh_ids.contains(mesh)) in.at("mesh").fail("unknown mesh '" + mesh + "'");
      if (!material_ids.contains(mat)) in.at("material").fail("unknown material '" + mat + "'");
      inst.mesh = mesh_ids[mesh];
      inst.material = material_ids[mat];
      if (in.has("transform")) {
        const Reader t = in.at("transform");
        if (t.has("translate")) inst.transform.translate = t.at("translate").vec3();
        if (t.has("rotate_axis_angle")) {
          const Reader ra = t.at("rotate_axis_angle");
          if (ra.size() != 4) ra.fail("expected [ax, ay, az, degrees]");
          inst.transform.rotation_axis = {ra[0].number(), ra[1].number(), ra[2].number()};
          inst.transform.rotation_degrees = ra[3].number();
          if (!(length(inst.transform.rotation_axis) > 0)) ra.fail("zero rotation axis");
        }
        if (t.has("scale")) {
          inst.transform.scale = t.at("scale").number();
          if (!(inst.transform.scale > 0)) t.at("scale").fail("scale must be > 0");
        }
      }
      if (in.has("dynamic")) inst.dynamic = in.at("dynamic").boolean();
      d.instances.push_back(inst);
    }
  }
  if (r.has("emitters")) {
    const Reader ems = r.at("emitters");
    for (size_t i = 0; i < ems.size(); ++i) {
      const Reader e = ems[i];
      Emitter em;
      const std::string type = e.at("type").string();
      if (type == "directional") {
        em.type = Emitter::Type::directional;
        em.direction = e.at("direction").vec3();
        if (!(length(em.direction) > 0)) e.at("direction").fail("zero direction");
        em.direction = normalize(em.direction);
      } else if (type == "env") {
        em.type = Emitter::Type::environment;
      } else {
        e.at("type").fail("unknown emitter type '" + type + "'");
      }
      em.radiance = e.at("radiance").rgb();
      for (int c = 0; c < 3; ++c)
        if (em.radiance[c] < 0) e.at("radiance").fail("radiance must be >= 0");
      d.emitters.push_back(em);
    }
  }
  if (r.has("camera")) {
    const Reader c = r.at("camera");
    Camera cam;
    cam.origin = c.at("origin").vec3();
    cam.look_at = c.at("look_at").vec3();
    if (c.has("up")) cam.up = c.at("up").vec3();
    if (c.has("fov_y_degrees")) cam.fov_y_degrees = c.at("fov_y_degrees").number();
    d.camera = cam;
  }
  if (r.has("variable_params")) {
    const Reader vps = r.at("variable_params");
    for (size_t i = 0; i < vps.size(); ++i) {
      const Reader v = vps[i];
      VariableParam p;
      p.name = v.at("name").string();
      p.min = v.at("min").number();
      p.max = v.at("max").number();
      if (v.has("emitter")) p.emitter = static_cast<int>(v.at("emitter").number());
      if (v.has("axis")) p.axis = v.at("axis").vec3();
      if (p.emitter >= static_cast<int>(d.emitters.size()))
        v.at("emitter").fail("unknown emitter index");
      d.variable_params.push_back(p);
    }
  }
  return d;
}

LoadedScene load_scene_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open scene file: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number.
    const size_t offset = std::min<size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n');
    throw InputError(path.string() + ":" + std::to_string(line) + ": JSON parse error: " + e.what());
  }
  try {
    return {parse_scene(j, path.parent_path()), sha256(text)};
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

Scene load_scene(const std::filesystem::path& path) { return Scene(load_scene_file(path).desc); }

}  // namespace niv
