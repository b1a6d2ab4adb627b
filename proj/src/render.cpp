#include "niv/render.hpp"

#include "niv/error.hpp"
#include "niv/parallel.hpp"
#include "niv/sampling.hpp"

namespace niv {

namespace {

constexpr uint64_t kDirectTag = 0x646972;
constexpr uint64_t kAoTag = 0x616f;
constexpr uint64_t kIncidentTag = 0x696e63;

struct Facing {
  Vec3 ng, ns;
};
Facing facing(const SurfaceHit& h) {
  return h.is_backface ? Facing{-h.geometric_normal, -h.shading_normal}
                       : Facing{h.geometric_normal, h.shading_normal};
}

// Where a pixel's diffuse shading happens: the primary hit, or the first
// diffuse surface seen through a mirror chain.
struct ShadePoint {
  bool valid = false;
  bool primary = true;  // false once a mirror was followed
  Vec3 x, n;
  Rgb albedo;
  Rgb throughput = Rgb::splat(1.0);
  Rgb base;  // emission and environment collected on the way, already weighted
};

ShadePoint resolve(const GBuffer& gb, const Scene& scene, const ShadeOptions& opt, size_t p) {
  ShadePoint sp;
  if (!gb.coverage[p]) {
    sp.base = environment_radiance(scene);
    return sp;
  }
  sp.base = gb.emission[p];
  if (gb.kind[p] != MaterialKind::mirror || !opt.specular_defer) {
    sp.valid = true;
    sp.x = gb.position[p];
    sp.n = gb.normal[p];
    sp.albedo = gb.albedo[p];
    return sp;
  }
  const double eps = scene.ray_epsilon();
  sp.primary = false;
  sp.throughput = gb.albedo[p];
  Ray ray{gb.position[p], normalize(reflect(gb.view[p], gb.normal[p]))};
  for (int depth = 1; depth <= opt.specular_depth; ++depth) {
    const auto hit = scene.intersect(GeometrySet::both, ray);
    if (!hit) {
      sp.base += sp.throughput * environment_radiance(scene);
      return sp;
    }
    const Material& mat = scene.material(hit->material);
    if (!hit->is_backface) sp.base += sp.throughput * mat.emission;
    const Facing f = facing(*hit);
    if (mat.kind == MaterialKind::mirror) {
      sp.throughput *= mat.albedo;
      ray = {hit->position + f.ng * eps, normalize(reflect(ray.dir, f.ns))};
      continue;
    }
    sp.valid = true;
    sp.x = hit->position + f.ng * eps;
    sp.n = f.ns;
    sp.albedo = mat.albedo;
    return sp;
  }
  return sp;  // chain too deep: black beyond what was collected
}

ProviderQuery make_query(const ShadePoint& sp, const ShadeOptions& opt) {
  ProviderQuery q{sp.x, sp.n, {}};
  for (size_t k = 0; k < opt.params.size() && k < kMaxExtraParams; ++k) q.params[k] = opt.params[k];
  return q;
}

std::vector<ShadePoint> resolve_all(const GBuffer& gb, const Scene& scene, const ShadeOptions& opt) {
  std::vector<ShadePoint> pts(gb.size());
  parallel_for(gb.size(), [&](size_t p) { pts[p] = resolve(gb, scene, opt, p); }, 64);
  return pts;
}

// Final composition given indirect irradiance per shading point.
FrameHDR compose(const GBuffer& gb, const Scene& scene, const ShadeOptions& opt,
                 const std::vector<ShadePoint>& pts, const std::vector<Rgb>& E, ShadeAovs* aovs) {
  FrameHDR img(gb.width, gb.height);
  if (aovs) *aovs = {FrameHDR(gb.width, gb.height), FrameHDR(gb.width, gb.height), FrameHDR(gb.width, gb.height)};
  const double ao_dist = opt.ao.max_distance_fraction * scene.bbox().diagonal();
  const DirectOptions direct{GeometrySet::both, opt.env_rays, opt.light_samples};
  parallel_for(gb.size(), [&](size_t p) {
    const ShadePoint& sp = pts[p];
    Rgb L = sp.base;
    if (sp.valid) {
      Rng rng = Rng::keyed(stream_key(opt.seed, p, kDirectTag));
      const Rgb D = direct_irradiance(scene, sp.x, sp.n, rng, direct);
      double ao = 1.0;
      if (opt.ao.enabled) {
        Rng ao_rng = Rng::keyed(stream_key(opt.seed, p, kAoTag));
        ao = dynamic_ao(scene, sp.x, sp.n, opt.ao.rays, ao_dist, ao_rng);
      }
      L += sp.throughput * sp.albedo * kInvPi * (E[p] * ao + D);
      if (aovs) {
        aovs->irradiance.pixels[p] = E[p];
        aovs->direct.pixels[p] = D;
        aovs->ao.pixels[p] = Rgb::splat(ao);
      }
    }
    img.pixels[p] = L;
  }, 16);
  return img;
}

void check_options(const ShadeOptions& opt, const GBuffer& gb) {
  if (opt.params.size() > kMaxExtraParams) throw InputError("shade: at most 2 extra parameters");
  if (opt.half_resolution && (gb.width % 2 || gb.height % 2))
    throw InputError("half-resolution shading needs even width and height, got " + std::to_string(gb.width) + "x" +
                     std::to_string(gb.height));
  if (opt.specular_depth < 1) throw InputError("shade: specular depth must be >= 1");
}

}  // namespace

GBuffer::GBuffer(int w, int h)
    : width(w), height(h), position(size()), normal(size()), view(size()), albedo(size()), emission(size()),
      kind(size(), MaterialKind::diffuse), dynamic(size(), 0), coverage(size(), 0) {}

GBuffer rasterize_gbuffer(const Scene& scene, const Camera& cam, int width, int height) {
  if (width < 1 || height < 1) throw InputError("frame size must be positive");
  GBuffer gb(width, height);
  const double eps = scene.ray_epsilon();
  parallel_for(gb.size(), [&](size_t p) {
    const int px = static_cast<int>(p % width), py = static_cast<int>(p / width);
    const Ray ray = camera_ray(cam, width, height, px, py);
    gb.view[p] = ray.dir;
    const auto hit = scene.intersect(GeometrySet::both, ray);
    if (!hit) return;
    const Material& mat = scene.material(hit->material);
    const Facing f = facing(*hit);
    gb.coverage[p] = 1;
    gb.position[p] = hit->position + f.ng * eps;
    gb.normal[p] = f.ns;
    gb.albedo[p] = mat.albedo;
    gb.emission[p] = hit->is_backface ? Rgb() : mat.emission;
    gb.kind[p] = mat.kind;
    gb.dynamic[p] = hit->dynamic;
  }, 64);
  return gb;
}

double dynamic_ao(const Scene& scene, const Vec3& x, const Vec3& n, int rays, double max_distance, Rng& rng) {
  if (rays < 1 || scene.dynamic_triangles().empty() || !(max_distance > 0)) return 1.0;
  double occ = 0;
  for (int i = 0; i < rays; ++i) {
    const double u1 = rng.uniform(), u2 = rng.uniform();
    const auto hit = scene.intersect(GeometrySet::dynamic_only, {x, cosine_sample_hemisphere(n, u1, u2)}, max_distance);
    if (hit) occ += 1 - hit->t / max_distance;
  }
  return std::clamp(1 - occ / rays, 0.0, 1.0);
}

FrameHDR shade_deferred(const GBuffer& gb, const Scene& scene, const ShadeOptions& opt, ShadeAovs* aovs,
                        size_t* provider_queries) {
  if (!opt.provider) throw InputError("shade: no irradiance provider");
  opt.provider->check_params(opt.params.size());
  check_options(opt, gb);
  const std::vector<ShadePoint> pts = resolve_all(gb, scene, opt);
  std::vector<Rgb> E(gb.size());
  size_t queries = 0;

  // Which pixels get E straight from the provider.
  std::vector<size_t> direct_idx;
  if (!opt.half_resolution) {
    for (size_t p = 0; p < pts.size(); ++p)
      if (pts[p].valid) direct_idx.push_back(p);
  } else {
    // Half-res samples are the even/even pixels; sample (i, j) sits at full
    // pixel (2i, 2j), so full pixel px maps to half coordinate px / 2.
    const int hw = gb.width / 2, hh = gb.height / 2;
    std::vector<size_t> half_idx;
    std::vector<int> slot(static_cast<size_t>(hw) * hh, -1);
    for (int j = 0; j < hh; ++j)
      for (int i = 0; i < hw; ++i) {
        const size_t p = static_cast<size_t>(2 * j) * gb.width + 2 * i;
        if (pts[p].valid && pts[p].primary) {
          slot[static_cast<size_t>(j) * hw + i] = static_cast<int>(half_idx.size());
          half_idx.push_back(p);
        }
      }
    std::vector<ProviderQuery> q(half_idx.size());
    for (size_t k = 0; k < half_idx.size(); ++k) q[k] = make_query(pts[half_idx[k]], opt);
    std::vector<Rgb> Eh(q.size());
    opt.provider->query(q, Eh);
    queries += q.size();

    auto sample = [&](int i, int j) -> const Rgb* {
      const int s = slot[static_cast<size_t>(j) * hw + i];
      return s < 0 ? nullptr : &Eh[s];
    };
    // Lerp form keeps a constant field exact; missing neighbours are
    // substituted by their partner.
    auto lerp = [](const Rgb& a, const Rgb& b, double t) { return a + (b - a) * t; };
    auto row = [&](int i0, int i1, int j, double t, Rgb& out) {
      const Rgb *a = sample(i0, j), *b = sample(i1, j);
      if (!a && !b) return false;
      if (!a) a = b;
      if (!b) b = a;
      out = lerp(*a, *b, t);
      return true;
    };
    for (int py = 0; py < gb.height; ++py)
      for (int px = 0; px < gb.width; ++px) {
        const size_t p = static_cast<size_t>(py) * gb.width + px;
        if (!pts[p].valid) continue;
        if (!pts[p].primary) {
          direct_idx.push_back(p);
          continue;
        }
        const int i0 = px / 2, j0 = py / 2;
        const int i1 = std::min(i0 + (px & 1), hw - 1), j1 = std::min(j0 + (py & 1), hh - 1);
        const double tx = (px & 1) && i1 != i0 ? 0.5 : 0.0, ty = (py & 1) && j1 != j0 ? 0.5 : 0.0;
        Rgb r0, r1;
        const bool ok0 = row(i0, i1, j0, tx, r0), ok1 = row(i0, i1, j1, tx, r1);
        if (!ok0 && !ok1) {
          direct_idx.push_back(p);
          continue;
        }
        E[p] = lerp(ok0 ? r0 : r1, ok1 ? r1 : r0, ty);
      }
  }

  if (!direct_idx.empty()) {
    std::vector<ProviderQuery> q(direct_idx.size());
    for (size_t k = 0; k < direct_idx.size(); ++k) q[k] = make_query(pts[direct_idx[k]], opt);
    std::vector<Rgb> out(q.size());
    opt.provider->query(q, out);
    queries += q.size();
    for (size_t k = 0; k < direct_idx.size(); ++k) E[direct_idx[k]] = out[k];
  }
  if (provider_queries) *provider_queries = queries;
  return compose(gb, scene, opt, pts, E, aovs);
}

FrameHDR shade_sampled_incident(const GBuffer& gb, const Scene& scene, const NeuralField& model, int spp,
                                const ShadeOptions& opt, ShadeAovs* aovs) {
  if (model.config().quantity != TargetQuantity::incident_radiance)
    throw InputError("sampled shading needs an incident-radiance model");
  if (spp < 1) throw InputError("sampled shading: spp must be >= 1");
  if (opt.params.size() != model.config().n_params)
    throw InputError("model expects " + std::to_string(model.config().n_params) + " extra parameter(s), got " +
                     std::to_string(opt.params.size()));
  ShadeOptions o = opt;
  o.half_resolution = false;
  check_options(o, gb);
  const std::vector<ShadePoint> pts = resolve_all(gb, scene, o);
  std::vector<size_t> idx;
  for (size_t p = 0; p < pts.size(); ++p)
    if (pts[p].valid) idx.push_back(p);
  const auto s = static_cast<size_t>(spp);
  std::vector<FieldInput> in(idx.size() * s);
  parallel_for(idx.size(), [&](size_t k) {
    const ShadePoint& sp = pts[idx[k]];
    Rng rng = Rng::keyed(stream_key(opt.seed, idx[k], kIncidentTag));
    for (size_t j = 0; j < s; ++j) {
      const double u1 = rng.uniform(), u2 = rng.uniform();
      in[k * s + j] = model.make_input(sp.x, cosine_sample_hemisphere(sp.n, u1, u2), opt.params);
    }
  }, 64);
  std::vector<Rgb32> L(in.size());
  model.infer(in, L);
  std::vector<Rgb> E(gb.size());
  for (size_t k = 0; k < idx.size(); ++k) {
    Rgb sum;
    for (size_t j = 0; j < s; ++j) sum += Rgb(L[k * s + j][0], L[k * s + j][1], L[k * s + j][2]);
    E[idx[k]] = sum * (kPi / double(s));
  }
  return compose(gb, scene, o, pts, E, aovs);
}

}  // namespace niv
