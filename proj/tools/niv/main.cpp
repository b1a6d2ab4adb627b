#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <malloc.h>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "niv/error.hpp"
#include "niv/eval.hpp"
#include "niv/fixtures.hpp"
#include "niv/image_io.hpp"
#include "niv/parallel.hpp"
#include "niv/render.hpp"
#include "niv/scene_io.hpp"
#include "niv/train.hpp"
#include "util.hpp"

using namespace niv;
using namespace niv::cli;
namespace fs = std::filesystem;

namespace {

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void progress_line(const std::string& what, size_t done, size_t total) {
  if (done == total || done % std::max<size_t>(1, total / 20) == 0)
    std::fprintf(stderr, "\r%s %zu/%zu", what.c_str(), done, total);
  if (done == total) std::fprintf(stderr, "\n");
}

struct LoadedSceneInfo {
  SceneDesc desc;
  json info;
};

LoadedSceneInfo read_scene(const std::string& path) {
  LoadedScene ls = load_scene_file(path);
  return {std::move(ls.desc), json{{"path", path}, {"sha256", to_hex(ls.hash)}}};
}

Digest scene_digest(const std::string& path) { return load_scene_file(path).hash; }

// ---------------------------------------------------------------- fixture

struct FixtureArgs {
  std::string name, out;
  bool list = false;
};

int run_fixture(const FixtureArgs& a) {
  if (a.list) {
    for (const auto& n : fixtures::names()) std::cout << n << '\n';
    return 0;
  }
  if (a.name.empty() || a.out.empty()) throw InputError("fixture: need a name and -o");
  std::ofstream f(a.out);
  if (!f) throw IoError("cannot write " + a.out);
  f << fixtures::scene_json(a.name).dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- bake

struct BakeArgs {
  std::string scene, out;
  size_t n = 65536;
  double surface_fraction = 0.2;
  uint32_t spp = 64;
  uint64_t seed = 0;
  bool no_cull = false;
  bool incident = false;
  std::string anchors;
  int max_depth = 16;
};

int run_bake(const BakeArgs& a, Manifest& m) {
  auto sc = read_scene(a.scene);
  const Scene scene(sc.desc);
  BakeConfig cfg;
  cfg.n_samples = a.n;
  cfg.surface_fraction = a.surface_fraction;
  cfg.tracer.spp = a.spp;
  cfg.tracer.max_depth = a.max_depth;
  cfg.seed = a.seed;
  cfg.cull = !a.no_cull;
  cfg.quantity = a.incident ? TargetQuantity::incident_radiance : TargetQuantity::irradiance;
  cfg.scene_hash = scene_digest(a.scene);
  if (scene.param_count()) {
    ParamSampler ps;
    ps.count = static_cast<uint32_t>(scene.param_count());
    if (!a.anchors.empty()) ps.anchors = parse_list(a.anchors);
    cfg.params = ps;
  } else if (!a.anchors.empty()) {
    throw InputError("--param-anchors given but the scene has no variable parameters");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const SampleSet set = bake_dataset(scene, cfg, [](size_t d, size_t t) { progress_line("bake", d, t); });
  save_samples(set, a.out);
  m.scene = sc.info;
  m.config = {{"n", a.n},           {"surface_fraction", a.surface_fraction},
              {"spp", a.spp},       {"max_depth", a.max_depth},
              {"seed", a.seed},     {"cull", cfg.cull},
              {"quantity", a.incident ? "incident_radiance" : "irradiance"},
              {"param_anchors", cfg.params ? json(cfg.params->anchors) : json::array()}};
  m.outputs.push_back(a.out);
  m.timings["bake_s"] = since(t0);
  m.report = {{"samples", set.samples.size()}, {"surface_samples", set.surface_count()}};
  std::cout << "wrote " << a.out << ": " << set.samples.size() << " samples (" << set.surface_count()
            << " on surfaces)\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string dataset, out;
  int width = 64;
  int levels = 2;
  std::optional<int> freq;
  int table_log2 = 17;
  int features = 4;
  int base_res = 16;
  int direction_bands = 0;
  std::string activation = "softplus";
  size_t iterations = 50000;
  size_t batch = size_t{1} << 16;
  double lr = 1e-2, lr_final = 1e-4;
  std::optional<size_t> warm;
  std::string loss = "per-channel";
  uint64_t seed = 0;
  std::string precision = "f16";
  std::optional<uint32_t> variable_params;
};

OutputActivation parse_activation(const std::string& s) {
  if (s == "softplus") return OutputActivation::softplus;
  if (s == "relu") return OutputActivation::relu;
  if (s == "identity") return OutputActivation::identity;
  throw InputError("unknown activation '" + s + "' (softplus, relu, identity)");
}

int run_train(const TrainArgs& a, Manifest& m) {
  const SampleSet set = load_samples(a.dataset);
  if (a.variable_params && *a.variable_params != set.n_extra_params)
    throw InputError("--variable-params " + std::to_string(*a.variable_params) + " but dataset " + a.dataset +
                     " carries " + std::to_string(set.n_extra_params));
  ModelConfig mc;
  mc.width = a.width;
  mc.direction_bands = a.direction_bands;
  mc.n_params = set.n_extra_params;
  mc.quantity = set.quantity;
  mc.activation = parse_activation(a.activation);
  if (a.freq) {
    mc.encoding = PositionEncoding::frequency;
    mc.freq_bands = *a.freq;
  } else {
    mc.hash.levels = a.levels;
    mc.hash.log2_table = a.table_log2;
    mc.hash.features = a.features;
    mc.hash.base_resolution = a.base_res;
  }
  TrainConfig tc = TrainConfig::scaled(a.iterations, a.batch, a.seed);
  tc.lr_initial = a.lr;
  tc.lr_final = a.lr_final;
  if (a.warm) tc.warm_iterations = *a.warm;
  if (a.loss == "per-channel") tc.loss = LossNormalization::per_channel;
  else if (a.loss == "per-sample") tc.loss = LossNormalization::per_sample;
  else throw InputError("unknown loss normalization '" + a.loss + "' (per-channel, per-sample)");
  Precision prec;
  if (a.precision == "f16") prec = Precision::f16;
  else if (a.precision == "f32") prec = Precision::f32;
  else throw InputError("unknown precision '" + a.precision + "' (f16, f32)");

  NeuralField model(mc, set.bbox);
  model.initialize(a.seed);
  model.train_seed = a.seed;
  model.dataset_seed = set.seed;
  TrainCallbacks cb;
  cb.on_trace = [&](const LossTracePoint& p) {
    std::fprintf(stderr, "\rtrain %zu/%zu loss %.5g lr %.3g", p.iteration, tc.iterations, p.loss, p.lr);
  };
  const TrainResult r = train(model, set, tc, cb);
  std::fprintf(stderr, "\n");
  save_model(model, a.out, prec);
  const fs::path trace = fs::path(a.out).replace_extension(".loss.csv");
  write_loss_trace(r.trace, trace);

  m.config = {{"dataset", a.dataset},
              {"encoding", a.freq ? "frequency" : "hash_grid"},
              {"width", mc.width},
              {"levels", mc.hash.levels},
              {"freq_bands", mc.freq_bands},
              {"table_size_log2", mc.hash.log2_table},
              {"features", mc.hash.features},
              {"base_resolution", mc.hash.base_resolution},
              {"direction_bands", mc.direction_bands},
              {"n_params", mc.n_params},
              {"activation", a.activation},
              {"iterations", tc.iterations},
              {"batch", tc.batch_size},
              {"lr", tc.lr_initial},
              {"lr_final", tc.lr_final},
              {"warm", tc.warm_iterations},
              {"loss", a.loss},
              {"seed", a.seed},
              {"precision", a.precision}};
  m.outputs = {a.out, trace.string()};
  m.timings["train_s"] = r.seconds;
  m.report = {{"params", model.param_count()},
              {"memory_bytes", model.memory_bytes(prec)},
              {"final_loss", r.trace.empty() ? 0.0 : r.trace.back().loss}};
  std::cout << "wrote " << a.out << ": " << model.param_count() << " parameters, "
            << model.memory_bytes(prec) / 1e6 << " MB\n";
  return 0;
}

// ---------------------------------------------------------------- bake-probes

struct ProbeArgs {
  std::string scene, out;
  std::vector<int> dims;
  std::optional<size_t> budget;
  uint32_t directions = 1024;
  uint64_t seed = 0;
  bool rt = false, no_falloff = false, project_irradiance = false;
  double falloff_exponent = 1.0;
  uint32_t irradiance_spp = 64;
  int max_depth = 16;
};

int run_bake_probes(const ProbeArgs& a, Manifest& m) {
  auto sc = read_scene(a.scene);
  const Scene scene(sc.desc);
  std::array<int, 3> dims{};
  if (a.budget && !a.dims.empty()) throw InputError("give either --dims or --budget, not both");
  if (a.budget) {
    const int n = cubic_dims_for_budget(*a.budget);
    dims = {n, n, n};
  } else if (a.dims.size() == 3) {
    dims = {a.dims[0], a.dims[1], a.dims[2]};
  } else {
    throw InputError("bake-probes needs --dims X Y Z or --budget BYTES");
  }
  ProbeBakeConfig cfg;
  cfg.directions = a.directions;
  cfg.seed = a.seed;
  cfg.project_irradiance = a.project_irradiance;
  cfg.irradiance_spp = a.irradiance_spp;
  cfg.tracer.max_depth = a.max_depth;
  const auto t0 = std::chrono::steady_clock::now();
  ProbeGrid grid = bake_grid(scene, dims, cfg, [](size_t d, size_t t) { progress_line("probes", d, t); });
  grid.heuristics.rt_visibility = a.rt;
  grid.heuristics.cosine_falloff = !a.no_falloff;
  grid.heuristics.falloff_exponent = a.falloff_exponent;
  save_grid(grid, a.out);

  m.scene = sc.info;
  m.config = {{"dims", dims},
              {"directions", a.directions},
              {"seed", a.seed},
              {"rt_visibility", a.rt},
              {"cosine_falloff", !a.no_falloff},
              {"falloff_exponent", a.falloff_exponent},
              {"project_irradiance", a.project_irradiance},
              {"irradiance_spp", a.irradiance_spp},
              {"max_depth", a.max_depth}};
  if (a.budget) m.config["budget"] = *a.budget;
  const fs::path report = a.out + ".report.json";
  json rep = {{"probes", grid.probe_count()},
              {"memory_bytes", grid.memory_bytes()},
              {"inside_geometry", grid.flagged.size()},
              {"flagged", grid.flagged}};
  std::ofstream(report) << rep.dump(2) << '\n';
  m.outputs = {a.out, report.string()};
  m.timings["bake_s"] = since(t0);
  m.report = rep;
  std::cout << "wrote " << a.out << ": " << dims[0] << "x" << dims[1] << "x" << dims[2] << " probes, "
            << grid.memory_bytes() << " bytes, " << grid.flagged.size() << " inside geometry\n";
  return 0;
}

// ---------------------------------------------------------------- render

struct RenderArgs {
  std::string scene, out, png;
  std::string provider;
  std::optional<uint32_t> oracle_spp, reference_spp;
  std::string sampled_model;
  int sampled_spp = 64;
  int width = 256, height = 256;
  std::vector<double> cam_origin, cam_look_at;
  std::optional<double> fov;
  bool half_res = false, ao = false, specular_defer = false, aovs = false;
  int ao_rays = 32;
  double ao_distance = 0.1;
  std::vector<std::string> params, dynamics;
  int env_rays = 16, light_samples = 16;
  uint64_t seed = 0;
};

// Orders --param name=value pairs like the scene's variable parameters.
std::vector<double> resolve_params(const Scene& scene, const std::vector<std::string>& given, uint32_t wanted) {
  std::vector<std::optional<double>> vals(scene.param_count());
  for (const std::string& kv : given) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("--param expects name=value, got '" + kv + "'");
    const std::string name = kv.substr(0, eq);
    size_t k = 0;
    while (k < scene.param_count() && scene.variable_params()[k].name != name) ++k;
    if (k == scene.param_count()) throw InputError("scene has no variable parameter '" + name + "'");
    const auto v = parse_list(kv.substr(eq + 1));
    if (v.size() != 1 || v[0] < 0 || v[0] > 1) throw InputError("--param " + name + ": value must be in [0,1]");
    vals[k] = v[0];
  }
  if (!given.empty() && wanted == 0)
    throw InputError("the provider takes no extra parameters, but --param was given");
  std::vector<double> out;
  for (size_t k = 0; k < vals.size() && k < wanted; ++k) {
    if (!vals[k]) throw InputError("provider expects parameter '" + scene.variable_params()[k].name + "' (--param " +
                                   scene.variable_params()[k].name + "=...)");
    out.push_back(*vals[k]);
  }
  if (wanted > vals.size())
    throw InputError("provider expects " + std::to_string(wanted) + " extra parameter(s), scene defines " +
                     std::to_string(vals.size()));
  return out;
}

int run_render(const RenderArgs& a, Manifest& m) {
  auto sc = read_scene(a.scene);
  for (const std::string& d : a.dynamics) add_dynamic(sc.desc, d);
  Scene scene(sc.desc);

  Camera cam;
  if (scene.camera()) cam = *scene.camera();
  else if (a.cam_origin.empty()) throw InputError("scene has no camera; pass --camera-origin and --look-at");
  if (a.cam_origin.size() == 3) cam.origin = {a.cam_origin[0], a.cam_origin[1], a.cam_origin[2]};
  if (a.cam_look_at.size() == 3) cam.look_at = {a.cam_look_at[0], a.cam_look_at[1], a.cam_look_at[2]};
  if (a.fov) cam.fov_y_degrees = *a.fov;

  const int modes = !a.provider.empty() + bool(a.oracle_spp) + bool(a.reference_spp) + !a.sampled_model.empty();
  if (modes != 1) throw InputError("render needs exactly one of --provider, --oracle-spp, --sampled-model, --reference-spp");

  const auto t0 = std::chrono::steady_clock::now();
  FrameHDR img;
  std::vector<double> params;
  std::unique_ptr<IrradianceProvider> provider;
  std::string kind;
  ShadeAovs aovs;
  if (a.reference_spp) {
    // Reference images are noisy estimates of the full light transport.
    params = resolve_params(scene, a.params, static_cast<uint32_t>(scene.param_count()));
    const Scene s = params.empty() ? scene : scene.configured(params);
    ReferenceOptions ro;
    ro.tracer.spp = *a.reference_spp;
    ro.seed = a.seed;
    img = reference_render(s, cam, a.width, a.height, ro);
    kind = "reference";
  } else {
    if (!a.provider.empty()) {
      provider = load_provider(a.provider, &scene);
    } else if (a.oracle_spp) {
      TracerConfig tc;
      tc.spp = *a.oracle_spp;
      provider = std::make_unique<OracleProvider>(scene, tc, a.seed);
    }
    uint32_t wanted = 0;
    std::optional<NeuralField> sampled;
    if (provider) {
      wanted = provider->param_count();
      kind = provider->kind();
    } else {
      sampled = load_model(a.sampled_model);
      wanted = sampled->config().n_params;
      kind = "sampled_incident";
    }
    params = resolve_params(scene, a.params, wanted);
    const Scene shaded = params.empty() || scene.param_count() == 0 ? scene : scene.configured(params);
    const GBuffer gb = rasterize_gbuffer(shaded, cam, a.width, a.height);
    ShadeOptions o;
    o.provider = provider.get();
    o.params = params;
    o.half_resolution = a.half_res;
    o.ao.enabled = a.ao;
    o.ao.rays = a.ao_rays;
    o.ao.max_distance_fraction = a.ao_distance;
    o.specular_defer = a.specular_defer;
    o.env_rays = a.env_rays;
    o.light_samples = a.light_samples;
    o.seed = a.seed;
    if (sampled) img = shade_sampled_incident(gb, shaded, *sampled, a.sampled_spp, o, a.aovs ? &aovs : nullptr);
    else img = shade_deferred(gb, shaded, o, a.aovs ? &aovs : nullptr);
  }
  const fs::path png = a.png.empty() ? fs::path(a.out).replace_extension(".png") : fs::path(a.png);
  tonemap_write(img, a.out, png);
  m.outputs = {a.out, png.string()};
  if (a.aovs && !a.reference_spp) {
    const fs::path base = fs::path(a.out).replace_extension("");
    for (auto [name, frame] : {std::pair{"irradiance", &aovs.irradiance}, std::pair{"direct", &aovs.direct},
                               std::pair{"ao", &aovs.ao}}) {
      const std::string p = base.string() + "." + name + ".pfm";
      write_pfm(*frame, p);
      m.outputs.push_back(p);
    }
  }
  m.scene = sc.info;
  m.config = {{"mode", kind},
              {"provider", a.provider},
              {"width", a.width},
              {"height", a.height},
              {"camera", {{"origin", {cam.origin.x, cam.origin.y, cam.origin.z}},
                          {"look_at", {cam.look_at.x, cam.look_at.y, cam.look_at.z}},
                          {"fov_y", cam.fov_y_degrees}}},
              {"half_res", a.half_res},
              {"ao", a.ao},
              {"ao_rays", a.ao_rays},
              {"ao_distance", a.ao_distance},
              {"specular_defer", a.specular_defer},
              {"params", params},
              {"dynamic", a.dynamics},
              {"env_rays", a.env_rays},
              {"light_samples", a.light_samples},
              {"seed", a.seed}};
  if (a.oracle_spp) m.config["oracle_spp"] = *a.oracle_spp;
  if (a.reference_spp) m.config["reference_spp"] = *a.reference_spp;
  if (!a.sampled_model.empty()) m.config["sampled_model"] = a.sampled_model, m.config["sampled_spp"] = a.sampled_spp;
  m.timings["render_s"] = since(t0);
  std::cout << "wrote " << a.out << " and " << png.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string provider, evalset, scene, out, image, reference;
  std::optional<uint32_t> oracle_spp;
  std::vector<uint64_t> train_seeds;
  size_t throughput = 0;
  uint64_t seed = 0;
};

int run_eval(const EvalArgs& a, Manifest& m) {
  std::optional<Scene> scene;
  if (!a.scene.empty()) {
    auto sc = read_scene(a.scene);
    scene.emplace(sc.desc);
    m.scene = sc.info;
  }
  json rep;
  std::vector<uint64_t> seeds = a.train_seeds;
  std::unique_ptr<IrradianceProvider> provider;
  if (!a.provider.empty()) {
    std::ifstream probe(a.provider, std::ios::binary);
    char magic[4] = {};
    probe.read(magic, 4);
    if (std::string(magic, 4) == "NIVM") {
      const NeuralField model = load_model(a.provider);
      seeds.push_back(model.dataset_seed);
      seeds.push_back(model.train_seed);
    }
    provider = load_provider(a.provider, scene ? &*scene : nullptr);
  } else if (a.oracle_spp) {
    if (!scene) throw InputError("--oracle-spp needs --scene");
    TracerConfig tc;
    tc.spp = *a.oracle_spp;
    provider = std::make_unique<OracleProvider>(*scene, tc, a.seed);
  }
  if (provider) {
    if (a.evalset.empty()) throw InputError("eval needs --evalset with a provider");
    const SampleSet eval = load_samples(a.evalset);
    const auto t0 = std::chrono::steady_clock::now();
    const VolumetricMse v = volumetric_mse(*provider, eval, seeds);
    rep["provider"] = provider->kind();
    rep["memory_bytes"] = provider->memory_bytes();
    rep["volume_mse"] = v.volume;
    rep["surface_mse"] = v.surface;
    rep["mse"] = v.all;
    rep["n_volume"] = v.n_volume;
    rep["n_surface"] = v.n_surface;
    rep["eval_seed"] = eval.seed;
    rep["constant_mean_mse"] = constant_mean_mse(eval);
    m.timings["eval_s"] = since(t0);
    const auto rate = throughput_report(*provider, eval.bbox, a.throughput, a.seed);
    rep["throughput_qps"] = rate ? json(*rate) : json("n/a");
    std::cout << provider->kind() << ": volume MSE " << v.volume << ", surface MSE " << v.surface << " ("
              << v.n_volume << " + " << v.n_surface << " samples), " << provider->memory_bytes() << " bytes\n";
    if (rate) std::cout << "throughput " << *rate << " queries/s\n";
  }
  if (!a.image.empty() || !a.reference.empty()) {
    if (a.image.empty() || a.reference.empty()) throw InputError("--image and --reference go together");
    const ImageMetrics im = image_metrics(read_pfm(a.image), read_pfm(a.reference));
    rep["image_mse"] = im.mse;
    rep["image_rel_mse"] = im.rel_mse;
    std::cout << "image MSE " << im.mse << ", relMSE " << im.rel_mse << "\n";
  }
  if (rep.is_null()) throw InputError("eval: nothing to evaluate (give --provider/--oracle-spp or --image)");
  m.config = {{"provider", a.provider}, {"evalset", a.evalset}, {"train_seeds", a.train_seeds},
              {"throughput", a.throughput}, {"seed", a.seed}};
  if (a.oracle_spp) m.config["oracle_spp"] = *a.oracle_spp;
  m.report = rep;
  if (!a.out.empty()) {
    std::ofstream(a.out) << rep.dump(2) << '\n';
    m.outputs.push_back(a.out);
  }
  return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string kind, scene, out;
  std::string budgets = "0.01,0.05,0.2";
  std::string tables = "10,12,14,17";
  int levels = 8, width = 64;
  size_t train_n = 65536, eval_n = 65536;
  uint32_t train_spp = 64;
  std::optional<uint32_t> eval_spp;
  uint64_t data_seed = 1, eval_seed = 1000;
  std::string seeds = "1";
  size_t iterations = 2000, batch = 4096;
  uint32_t directions = 1024;
  bool timing = false;
};

int run_sweep(const SweepArgs& a, Manifest& m) {
  auto sc = read_scene(a.scene);
  const Scene scene(sc.desc);
  std::vector<uint64_t> seeds;
  for (double s : parse_list(a.seeds)) seeds.push_back(static_cast<uint64_t>(s));
  if (seeds.empty()) throw InputError("--seeds is empty");
  const uint32_t eval_spp = a.eval_spp.value_or(4 * a.train_spp);
  if (a.data_seed == a.eval_seed) throw InputError("--data-seed and --eval-seed must differ");
  if (std::find(seeds.begin(), seeds.end(), a.eval_seed) != seeds.end())
    throw InputError("--eval-seed " + std::to_string(a.eval_seed) + " is also a training seed");

  const auto t0 = std::chrono::steady_clock::now();
  BakeConfig bc;
  bc.scene_hash = scene_digest(a.scene);
  if (scene.param_count()) bc.params = ParamSampler{static_cast<uint32_t>(scene.param_count()), {}};
  bc.n_samples = a.train_n;
  bc.tracer.spp = a.train_spp;
  bc.seed = a.data_seed;
  const SampleSet train_set = bake_dataset(scene, bc, [](size_t d, size_t t) { progress_line("train set", d, t); });
  bc.n_samples = a.eval_n;
  bc.tracer.spp = eval_spp;
  bc.seed = a.eval_seed;
  const SampleSet eval_set = bake_dataset(scene, bc, [](size_t d, size_t t) { progress_line("eval set", d, t); });
  m.timings["datasets_s"] = since(t0);

  const TrainConfig tc = TrainConfig::scaled(a.iterations, a.batch, 0);
  const auto log = [](const std::string& s) { std::fprintf(stderr, "sweep: %s\n", s.c_str()); };
  std::vector<SweepRow> rows;
  const auto t1 = std::chrono::steady_clock::now();
  m.config = {{"kind", a.kind},         {"train_n", a.train_n},       {"train_spp", a.train_spp},
              {"eval_n", a.eval_n},     {"eval_spp", eval_spp},       {"data_seed", a.data_seed},
              {"eval_seed", a.eval_seed}, {"seeds", seeds},           {"iterations", a.iterations},
              {"batch", a.batch},       {"warm", tc.warm_iterations}};
  if (a.kind == "memory") {
    std::vector<size_t> budgets;
    for (double mb : parse_list(a.budgets)) {
      if (!(mb > 0)) throw InputError("budgets must be positive");
      budgets.push_back(static_cast<size_t>(std::llround(mb * 1e6)));
    }
    MemorySweepConfig cfg;
    cfg.train = tc;
    cfg.seeds = seeds;
    cfg.probes.directions = a.directions;
    rows = sweep_memory_error(scene, train_set, eval_set, budgets, cfg, log);
    write_sweep_csv(rows, a.out, a.timing);
    m.config["budgets_bytes"] = budgets;
    m.config["probe_directions"] = a.directions;
  } else if (a.kind == "hash") {
    std::vector<int> tables;
    for (double t : parse_list(a.tables)) tables.push_back(static_cast<int>(t));
    HashSweepConfig cfg;
    cfg.model.hash.levels = a.levels;
    cfg.model.width = a.width;
    cfg.train = tc;
    cfg.seeds = seeds;
    rows = sweep_hash_table(train_set, eval_set, tables, cfg, log);
    write_sweep_csv(rows, a.out, a.timing, "table_log2");
    m.config["tables_log2"] = tables;
    m.config["levels"] = a.levels;
    m.config["width"] = a.width;
  } else {
    throw InputError("unknown sweep '" + a.kind + "' (memory, hash)");
  }
  m.scene = sc.info;
  m.outputs.push_back(a.out);
  m.timings["sweep_s"] = since(t1);
  json per_row = json::array();
  for (const auto& r : rows) per_row.push_back({{"provider", r.provider}, {"budget", r.budget_bytes}, {"seed", r.seed},
                                                {"wall_s", r.wall_s}});
  m.timings["rows"] = per_row;
  std::cout << "wrote " << a.out << ": " << rows.size() << " rows\n";
  return 0;
}

// ---------------------------------------------------------------- wiring

struct Args {
  FixtureArgs fixture;
  BakeArgs bake;
  TrainArgs train;
  ProbeArgs probes;
  RenderArgs render;
  EvalArgs eval;
  SweepArgs sweep;
};

void build(CLI::App& app, Args& a) {
  app.require_subcommand(1);

  auto* fx = app.add_subcommand("fixture", "Write a built-in fixture scene as JSON");
  fx->add_option("name", a.fixture.name, "Fixture name");
  fx->add_option("-o,--out", a.fixture.out, "Output scene file");
  fx->add_flag("--list", a.fixture.list, "List fixture names");

  auto* bk = app.add_subcommand("bake", "Bake a training/eval dataset of irradiance samples");
  bk->add_option("scene", a.bake.scene, "Scene file")->required();
  bk->add_option("-o,--out", a.bake.out, "Output .nivd file")->required();
  bk->add_option("--n", a.bake.n, "Number of samples")->capture_default_str();
  bk->add_option("--surface-fraction", a.bake.surface_fraction, "Fraction of samples on surfaces")
      ->capture_default_str();
  bk->add_option("--spp", a.bake.spp, "Paths per sample")->capture_default_str();
  bk->add_option("--max-depth", a.bake.max_depth, "Maximum path depth")->capture_default_str();
  bk->add_option("--seed", a.bake.seed, "Seed")->capture_default_str();
  bk->add_flag("--no-cull", a.bake.no_cull, "Keep volume samples that mostly see back faces");
  bk->add_flag("--incident", a.bake.incident, "Targets are incident radiance instead of irradiance");
  bk->add_option("--param-anchors", a.bake.anchors, "Comma list of fixed values for variable parameters");

  auto* tr = app.add_subcommand("train", "Train a neural irradiance volume");
  tr->add_option("dataset", a.train.dataset, "Dataset .nivd")->required();
  tr->add_option("-o,--out", a.train.out, "Output .nivm file")->required();
  tr->add_option("--width", a.train.width, "MLP width")->capture_default_str();
  auto* lv = tr->add_option("--levels", a.train.levels, "Hash-grid levels")->capture_default_str();
  tr->add_option("--freq", a.train.freq, "Frequency encoding with this many bands instead of a hash grid")
      ->excludes(lv);
  tr->add_option("--table-size-log2", a.train.table_log2, "log2 of the hash table size")->capture_default_str();
  tr->add_option("--features", a.train.features, "Features per level")->capture_default_str();
  tr->add_option("--base-res", a.train.base_res, "Coarsest grid resolution")->capture_default_str();
  tr->add_option("--direction-bands", a.train.direction_bands, "Frequency bands for the direction")
      ->capture_default_str();
  tr->add_option("--activation", a.train.activation, "softplus, relu or identity")->capture_default_str();
  tr->add_option("--iterations", a.train.iterations, "Optimizer steps")->capture_default_str();
  tr->add_option("--batch", a.train.batch, "Batch size")->capture_default_str();
  tr->add_option("--lr", a.train.lr, "Initial learning rate")->capture_default_str();
  tr->add_option("--lr-final", a.train.lr_final, "Final learning rate")->capture_default_str();
  tr->add_option("--warm", a.train.warm, "Warm-up iterations at the initial rate (default: iterations/5)");
  tr->add_option("--loss", a.train.loss, "per-channel or per-sample normalization")->capture_default_str();
  tr->add_option("--seed", a.train.seed, "Seed")->capture_default_str();
  tr->add_option("--precision", a.train.precision, "Stored parameter precision, f16 or f32")->capture_default_str();
  tr->add_option("--variable-params", a.train.variable_params, "Expected number of extra input parameters");

  auto* pb = app.add_subcommand("bake-probes", "Bake an SH irradiance probe grid");
  pb->add_option("scene", a.probes.scene, "Scene file")->required();
  pb->add_option("-o,--out", a.probes.out, "Output .nivp file")->required();
  pb->add_option("--dims", a.probes.dims, "Grid dimensions X Y Z")->expected(3);
  pb->add_option("--budget", a.probes.budget, "Byte budget; picks the largest n^3 grid that fits");
  pb->add_option("--directions", a.probes.directions, "Radiance samples per probe")->capture_default_str();
  pb->add_option("--seed", a.probes.seed, "Seed")->capture_default_str();
  pb->add_flag("--rt-visibility", a.probes.rt, "Ray-traced probe visibility at query time");
  pb->add_flag("--no-cosine-falloff", a.probes.no_falloff, "Disable the normal-based weight falloff");
  pb->add_option("--falloff-exponent", a.probes.falloff_exponent, "Cosine falloff exponent")->capture_default_str();
  pb->add_flag("--project-irradiance", a.probes.project_irradiance, "Project sampled irradiance directly");
  pb->add_option("--irradiance-spp", a.probes.irradiance_spp, "Paths per direction with --project-irradiance")
      ->capture_default_str();
  pb->add_option("--max-depth", a.probes.max_depth, "Maximum path depth")->capture_default_str();

  auto* rd = app.add_subcommand("render", "Render a frame with deferred shading");
  rd->add_option("scene", a.render.scene, "Scene file")->required();
  rd->add_option("-o,--out", a.render.out, "Output .pfm file")->required();
  rd->add_option("--png", a.render.png, "Tone-mapped PNG path (default: next to the PFM)");
  rd->add_option("--provider", a.render.provider, "Irradiance provider file (.nivm or .nivp)");
  rd->add_option("--oracle-spp", a.render.oracle_spp, "Path-traced irradiance per pixel at this many paths");
  rd->add_option("--reference-spp", a.render.reference_spp, "Full path-traced reference at this many samples/pixel");
  rd->add_option("--sampled-model", a.render.sampled_model, "Incident-radiance model, sampled per pixel");
  rd->add_option("--sampled-spp", a.render.sampled_spp, "Samples per pixel for --sampled-model")
      ->capture_default_str();
  rd->add_option("--width", a.render.width, "Frame width")->capture_default_str();
  rd->add_option("--height", a.render.height, "Frame height")->capture_default_str();
  rd->add_option("--camera-origin", a.render.cam_origin, "Camera position")->expected(3);
  rd->add_option("--look-at", a.render.cam_look_at, "Camera target")->expected(3);
  rd->add_option("--fov", a.render.fov, "Vertical field of view in degrees");
  rd->add_flag("--half-res", a.render.half_res, "Query the provider at half resolution");
  rd->add_flag("--ao", a.render.ao, "Dynamic ambient occlusion on the indirect term");
  rd->add_option("--ao-rays", a.render.ao_rays, "AO rays per pixel")->capture_default_str();
  rd->add_option("--ao-distance", a.render.ao_distance, "AO distance as a fraction of the scene diagonal")
      ->capture_default_str();
  rd->add_flag("--specular-defer", a.render.specular_defer, "Trace mirror reflections to a diffuse surface");
  rd->add_option("--param", a.render.params, "Variable parameter value, name=value");
  rd->add_option("--dynamic", a.render.dynamics, "Dynamic object: mesh.obj@(t=(x,y,z),s=..,ry=..,albedo=(..),mirror)");
  rd->add_option("--env-rays", a.render.env_rays, "Direct term: environment shadow rays")->capture_default_str();
  rd->add_option("--light-samples", a.render.light_samples, "Direct term: area light samples")
      ->capture_default_str();
  rd->add_option("--seed", a.render.seed, "Seed")->capture_default_str();
  rd->add_flag("--aovs", a.render.aovs, "Also write irradiance, direct and AO buffers as PFM");

  auto* ev = app.add_subcommand("eval", "Score a provider on a held-out sample set, or compare images");
  ev->add_option("--provider", a.eval.provider, "Provider file (.nivm or .nivp)");
  ev->add_option("--oracle-spp", a.eval.oracle_spp, "Score the path tracer itself at this many paths");
  ev->add_option("--evalset", a.eval.evalset, "Held-out .nivd set");
  ev->add_option("--scene", a.eval.scene, "Scene (needed for ray-traced probe visibility and the oracle)");
  ev->add_option("--train-seed", a.eval.train_seeds, "Extra seeds the eval set must not share");
  ev->add_option("--throughput", a.eval.throughput, "Also time this many batched queries")->capture_default_str();
  ev->add_option("--image", a.eval.image, "Rendered PFM");
  ev->add_option("--reference", a.eval.reference, "Reference PFM");
  ev->add_option("--seed", a.eval.seed, "Seed")->capture_default_str();
  ev->add_option("-o,--out", a.eval.out, "Report JSON");

  auto* sw = app.add_subcommand("sweep", "Memory/error or hash-table sweep, written as CSV");
  sw->add_option("kind", a.sweep.kind, "memory or hash")->required();
  sw->add_option("scene", a.sweep.scene, "Scene file")->required();
  sw->add_option("-o,--out", a.sweep.out, "Output CSV")->required();
  sw->add_option("--budgets", a.sweep.budgets, "Memory budgets in MB, comma separated")->capture_default_str();
  sw->add_option("--tables", a.sweep.tables, "log2 hash table sizes, comma separated")->capture_default_str();
  sw->add_option("--levels", a.sweep.levels, "Hash levels for the table sweep")->capture_default_str();
  sw->add_option("--width", a.sweep.width, "MLP width for the table sweep")->capture_default_str();
  sw->add_option("--train-n", a.sweep.train_n, "Training samples")->capture_default_str();
  sw->add_option("--train-spp", a.sweep.train_spp, "Training paths per sample")->capture_default_str();
  sw->add_option("--eval-n", a.sweep.eval_n, "Eval samples")->capture_default_str();
  sw->add_option("--eval-spp", a.sweep.eval_spp, "Eval paths per sample (default 4x training)");
  sw->add_option("--data-seed", a.sweep.data_seed, "Training set seed")->capture_default_str();
  sw->add_option("--eval-seed", a.sweep.eval_seed, "Eval set seed")->capture_default_str();
  sw->add_option("--seeds", a.sweep.seeds, "Training seeds, comma separated")->capture_default_str();
  sw->add_option("--iterations", a.sweep.iterations, "Training iterations per point")->capture_default_str();
  sw->add_option("--batch", a.sweep.batch, "Batch size")->capture_default_str();
  sw->add_option("--directions", a.sweep.directions, "Probe directions")->capture_default_str();
  sw->add_flag("--timing", a.sweep.timing, "Fill the wall_s column (makes the CSV run-dependent)");
}

int dispatch(CLI::App& app, Args& a, const std::vector<std::string>& argv) {
  Manifest m;
  m.argv = argv;
  int rc = 0;
  fs::path primary;
  if (app.got_subcommand("fixture")) return run_fixture(a.fixture);
  if (app.got_subcommand("bake")) {
    m.command = "bake";
    rc = run_bake(a.bake, m);
    primary = a.bake.out;
  } else if (app.got_subcommand("train")) {
    m.command = "train";
    rc = run_train(a.train, m);
    primary = a.train.out;
  } else if (app.got_subcommand("bake-probes")) {
    m.command = "bake-probes";
    rc = run_bake_probes(a.probes, m);
    primary = a.probes.out;
  } else if (app.got_subcommand("render")) {
    m.command = "render";
    rc = run_render(a.render, m);
    primary = a.render.out;
  } else if (app.got_subcommand("eval")) {
    m.command = "eval";
    rc = run_eval(a.eval, m);
    primary = a.eval.out;
  } else if (app.got_subcommand("sweep")) {
    m.command = "sweep";
    rc = run_sweep(a.sweep, m);
    primary = a.sweep.out;
  }
  if (!primary.empty()) write_manifest(m, manifest_path(primary));
  return rc;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);

  // Global options are peeled off before the subcommand parser sees them.
  size_t threads = 0;
  std::string manifest;
  for (size_t i = 0; i < args.size();) {
    if ((args[i] == "--threads" || args[i] == "--manifest") && i + 1 < args.size()) {
      if (args[i] == "--threads") {
        try {
          threads = std::stoul(args[i + 1]);
        } catch (const std::exception&) {
          throw InputError("--threads expects a number");
        }
      } else {
        manifest = args[i + 1];
      }
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
    } else {
      ++i;
    }
  }
  if (!manifest.empty()) {
    if (!args.empty()) throw InputError("--manifest replays a whole command; give no other arguments");
    args = read_manifest_argv(manifest);
  }
  ThreadLimit limit(threads);

  CLI::App app{"Neural irradiance volumes: bake, train, probe, render and evaluate"};
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  app.footer("Global options: --threads N (cap worker threads; default from NIV_THREADS), --manifest FILE (replay)");
  Args a;
  build(app, a);
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return dispatch(app, a, args);
}

}  // namespace

int main(int argc, char** argv) {
  // Training churns through multi-MB temporaries; keep them off mmap.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  try {
    return run(argc, argv);
  } catch (const NumericalError& e) {
    std::cerr << "niv: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const InputError& e) {
    std::cerr << "niv: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "niv: " << e.what() << '\n';
    return 1;
  }
}
