#include "rwpatch/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "rwpatch/io.hpp"
#include "rwpatch/rng.hpp"

namespace rwpatch {

using nlohmann::json;

const char* class_name(std::size_t c) {
  static const char* names[] = {"sky", "road", "building", "obstacle", "billboard"};
  return c < kNumClasses ? names[c] : "?";
}

// ---------------------------------------------------------------------------
// Layouts

namespace {

constexpr double kBillboardX = 4.8;
constexpr double kBillboardZ = 40.0;
constexpr double kBillboardCenterY = 2.8;

using Rgb = std::array<float, 3>;

const Rgb kBuildingPalette[] = {{0.76f, 0.70f, 0.58f}, {0.62f, 0.33f, 0.27f}, {0.55f, 0.55f, 0.60f},
                                {0.85f, 0.80f, 0.65f}, {0.66f, 0.56f, 0.42f}, {0.45f, 0.50f, 0.56f}};
const Rgb kCarPalette[] = {{0.80f, 0.12f, 0.12f}, {0.15f, 0.30f, 0.80f}, {0.90f, 0.78f, 0.10f},
                           {0.20f, 0.60f, 0.25f}, {0.55f, 0.15f, 0.60f}};
const Rgb kPoleColor{0.85f, 0.55f, 0.10f};

Box box(Vec3 lo, Vec3 hi, Class cls, Rgb color, bool windows = false) {
  return Box{lo, hi, cls, color, windows};
}

void add_street_side(std::vector<Box>& boxes, RngStream& rng, double sign) {
  double z = -40.0;
  while (z < 110.0) {
    const double len = rng.uniform(10.f, 20.f);
    const double depth = rng.uniform(6.f, 12.f);
    const double h = rng.uniform(6.f, 16.f);
    const Rgb col = kBuildingPalette[rng.integer(0, std::size(kBuildingPalette) - 1)];
    const double x0 = 9.0, x1 = 9.0 + depth;
    if (sign > 0) {
      boxes.push_back(box({x0, 0, z}, {x1, h, z + len}, kBuilding, col, true));
    } else {
      boxes.push_back(box({-x1, 0, z}, {-x0, h, z + len}, kBuilding, col, true));
    }
    z += len + rng.uniform(1.5f, 4.f);
  }
}

}  // namespace

std::vector<std::string> canonical_scene_ids() { return {"A", "B", "C"}; }

SceneLayout canonical_scene(const std::string& id) {
  double angle_deg;
  if (id == "A") {
    angle_deg = 90;
  } else if (id == "B") {
    angle_deg = 40;
  } else if (id == "C") {
    angle_deg = 65;
  } else {
    throw ConfigError("unknown scene id '" + id + "' (expected A, B or C)");
  }
  SceneLayout L;
  L.id = id;
  RngStream rng(fnv1a("scene-layout/" + id), "layout");

  const double th = angle_deg * std::numbers::pi / 180.0;
  L.billboard.center = {kBillboardX, kBillboardCenterY, kBillboardZ};
  L.billboard.normal = {-std::cos(th), 0, -std::sin(th)};
  L.billboard.up = {0, 1, 0};
  L.billboard.width = 4.0;
  L.billboard.height = 2.0;

  add_street_side(L.boxes, rng, +1);
  add_street_side(L.boxes, rng, -1);
  L.boxes.push_back(box({-30, 0, 118}, {30, 14, 126}, kBuilding, kBuildingPalette[rng.integer(0, 5)], true));

  // Parked cars on the left kerb.
  double z = kBillboardZ - 36.0 + rng.uniform(0.f, 4.f);
  while (z < kBillboardZ + 40.0) {
    const Rgb col = kCarPalette[rng.integer(0, std::size(kCarPalette) - 1)];
    L.boxes.push_back(box({-3.4, 0, z}, {-2.0, 1.5, z + 4.2}, kObstacle, col));
    z += 4.2 + rng.uniform(3.f, 9.f);
  }
  // Lead vehicle beyond the billboard.
  {
    const double lz = kBillboardZ + rng.uniform(12.f, 20.f);
    const double lx = rng.uniform(-1.f, 0.2f);
    L.boxes.push_back(box({lx - 0.9, 0, lz}, {lx + 0.9, 1.6, lz + 4.4}, kObstacle,
                          kCarPalette[rng.integer(0, std::size(kCarPalette) - 1)]));
  }
  // Bins on the right kerb, past the billboard.
  for (int k = 0; k < 3; ++k) {
    const double bz = kBillboardZ + 5.0 + 7.0 * k + rng.uniform(0.f, 3.f);
    L.boxes.push_back(box({4.0, 0, bz}, {4.6, 1.0, bz + 0.6}, kObstacle, {0.95f, 0.45f, 0.05f}));
  }
  // Billboard legs, slightly behind the face.
  const Vec3 r = L.billboard.right();
  const Vec3 back = L.billboard.normal * -0.12;
  const double bottom = kBillboardCenterY - L.billboard.height / 2;
  for (double off : {-1.4, 1.4}) {
    const Vec3 c = L.billboard.center + r * off + back;
    L.boxes.push_back(box({c.x - 0.08, 0, c.z - 0.08}, {c.x + 0.08, bottom, c.z + 0.08}, kObstacle, kPoleColor));
  }
  return L;
}

void validate_layout(const SceneLayout& layout) {
  bool building = false, obstacle = false;
  for (const Box& b : layout.boxes) {
    building = building || b.cls == kBuilding;
    obstacle = obstacle || b.cls == kObstacle;
    if (!(b.min.x < b.max.x && b.min.y < b.max.y && b.min.z < b.max.z)) throw ConfigError("layout: degenerate box");
  }
  if (!building) throw ConfigError("layout: needs at least one building");
  if (!obstacle) throw ConfigError("layout: needs at least one obstacle");
  try {
    layout.billboard.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("layout: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Class cls = kSky;
  Rgb color{0.55f, 0.72f, 0.92f};
};

double fract(double v) { return v - std::floor(v); }

Rgb ground_color(const Vec3& p, double road_half) {
  const double ax = std::abs(p.x);
  if (ax < road_half) {
    if (ax < 0.12 && fract(p.z / 8.0) < 0.5) return {0.90f, 0.90f, 0.85f};
    if (ax > road_half - 0.25 && ax < road_half - 0.1) return {0.88f, 0.88f, 0.88f};
    return {0.32f, 0.32f, 0.34f};
  }
  return {0.62f, 0.58f, 0.52f};
}

Rgb shade(Rgb c, float f) { return {c[0] * f, c[1] * f, c[2] * f}; }

bool inside(const Box& b, const Vec3& p) {
  return p.x > b.min.x && p.x < b.max.x && p.y > b.min.y && p.y < b.max.y && p.z > b.min.z && p.z < b.max.z;
}

// Slab test. Returns entry distance and the axis of the entry face.
bool intersect_box(const Box& b, const Vec3& o, const Vec3& d, double& t_hit, int& axis, double& dir_sign) {
  const double lo[3] = {b.min.x, b.min.y, b.min.z};
  const double hi[3] = {b.max.x, b.max.y, b.max.z};
  const double oo[3] = {o.x, o.y, o.z};
  const double dd[3] = {d.x, d.y, d.z};
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  int ax = -1;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(dd[i]) < 1e-15) {
      if (oo[i] < lo[i] || oo[i] > hi[i]) return false;
      continue;
    }
    double t1 = (lo[i] - oo[i]) / dd[i];
    double t2 = (hi[i] - oo[i]) / dd[i];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > tmin) {
      tmin = t1;
      ax = i;
    }
    tmax = std::min(tmax, t2);
  }
  if (tmax < tmin || tmin <= 1e-9 || ax < 0) return false;
  t_hit = tmin;
  axis = ax;
  dir_sign = dd[ax];
  return true;
}

Rgb box_color(const Box& b, const Vec3& p, int axis) {
  if (axis == 1) return shade(b.color, 1.0f);
  Rgb c = b.color;
  if (b.windows) {
    const double a = axis == 0 ? p.z : p.x;
    if (p.y > 1.5 && fract(a / 2.5) >= 0.3 && fract(a / 2.5) < 0.75 && fract(p.y / 3.0) >= 0.35 &&
        fract(p.y / 3.0) < 0.75) {
      c = {0.18f, 0.22f, 0.28f};
    }
  }
  return shade(c, axis == 0 ? 0.85f : 0.72f);
}

Tensor stock_ad(std::uint64_t texture_seed) {
  RngStream rng(texture_seed, "billboard-ad");
  Tensor t(Shape{3, 4, 8});
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 8; ++x)
      for (std::size_t c = 0; c < 3; ++c) t.at(c, y, x) = rng.uniform(0.05f, 0.95f);
  return t;
}

}  // namespace

SceneSample render_scene(const SceneLayout& layout, const CameraPose& camera, const RenderOptions& opts,
                         const PatchTexture& patch) {
  validate_layout(layout);
  camera.validate();
  const Vec3 origin = camera.center();
  for (const Box& b : layout.boxes) {
    if (inside(b, origin)) throw RenderError("camera inside scene geometry");
  }
  if (opts.height == 0 || opts.width == 0) throw DimensionError("render_scene: empty image");

  const Tensor ad = patch.patch ? Tensor{} : stock_ad(opts.texture_seed);
  const Tensor& tex = patch.patch ? *patch.patch : ad;
  if (tex.rank() != 3 || tex.dim(0) != 3) throw DimensionError("render_scene: patch must be [3,H,W]");
  const std::size_t th = tex.dim(1), tw = tex.dim(2);

  const Billboard& bb = layout.billboard;
  const Vec3 br = bb.right();
  const Vec3 tl = bb.center - br * (bb.width / 2) + bb.up * (bb.height / 2);
  const Mat3 rt = camera.rotation.transposed();

  SceneSample s;
  s.scene = layout.id;
  s.camera = camera;
  s.brightness = opts.brightness;
  s.texture_seed = opts.texture_seed;
  s.image = Tensor(Shape{3, opts.height, opts.width});
  s.labels = LabelMap(opts.height, opts.width);
  s.billboard_quad_world = bb.corners();
  {
    std::array<Vec2, 4> q{};
    bool ok = true;
    for (int k = 0; k < 4; ++k) {
      const Projection p = project_point(camera, s.billboard_quad_world[k]);
      ok = ok && p.in_front;
      q[k] = {p.u, p.v};
    }
    if (ok) s.billboard_quad_image = q;
  }

  for (std::size_t r = 0; r < opts.height; ++r) {
    for (std::size_t c = 0; c < opts.width; ++c) {
      const Vec3 dc{(static_cast<double>(c) + 0.5 - camera.cx) / camera.fx,
                    (static_cast<double>(r) + 0.5 - camera.cy) / camera.fy, 1.0};
      const Vec3 d = rt * dc;
      Hit hit;
      if (d.y < -1e-12) {
        const double t = -origin.y / d.y;
        if (t > 1e-9) {
          hit.t = t;
          hit.cls = kRoad;
          hit.color = ground_color(origin + d * t, layout.road_half_width);
        }
      }
      for (const Box& b : layout.boxes) {
        double t;
        int axis;
        double dsign;
        if (intersect_box(b, origin, d, t, axis, dsign) && t < hit.t) {
          hit.t = t;
          hit.cls = b.cls;
          hit.color = box_color(b, origin + d * t, axis);
        }
      }
      const double denom = bb.normal.dot(d);
      if (std::abs(denom) > 1e-12) {
        const double t = bb.normal.dot(bb.center - origin) / denom;
        if (t > 1e-9 && t < hit.t) {
          const Vec3 p = origin + d * t;
          const double su = (p - tl).dot(br) / bb.width;
          const double sv = (tl - p).dot(bb.up) / bb.height;
          if (su >= 0 && su < 1 && sv >= 0 && sv < 1) {
            hit.t = t;
            hit.cls = kBillboard;
            if (denom < 0) {
              const auto tx = std::min(static_cast<std::size_t>(su * static_cast<double>(tw)), tw - 1);
              const auto ty = std::min(static_cast<std::size_t>(sv * static_cast<double>(th)), th - 1);
              hit.color = {tex.at(0, ty, tx), tex.at(1, ty, tx), tex.at(2, ty, tx)};
            } else {
              hit.color = {0.45f, 0.45f, 0.45f};
            }
          }
        }
      }
      s.labels(r, c) = hit.cls;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        s.image.at(ch, r, c) = std::clamp(hit.color[ch] * opts.brightness, 0.f, 1.f);
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Dataset configuration

void DatasetConfig::validate() const {
  if (train + val + test == 0) throw ConfigError("dataset: no samples requested");
  if (height == 0 || width == 0 || height % 4 || width % 4) {
    throw ConfigError("dataset: image dims must be positive multiples of 4");
  }
  if (!(fx > 0) || !(fy > 0)) throw ConfigError("dataset: focal lengths must be positive");
  if (!(distance_min > 0) || distance_max < distance_min) throw ConfigError("dataset: bad distance range");
  if (cam_height_max < cam_height_min || !(cam_height_min > 0)) throw ConfigError("dataset: bad camera height range");
  if (yaw_jitter_deg < 0 || yaw_jitter_deg > 45) throw ConfigError("dataset: yaw jitter must be in [0, 45] degrees");
  if (brightness_jitter < 0 || brightness_jitter > 0.5f) throw ConfigError("dataset: brightness jitter in [0, 0.5]");
  if (scenes.empty()) throw ConfigError("dataset: no scenes");
  for (const auto& s : scenes) canonical_scene(s);
}

DatasetConfig parse_dataset_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("dataset config: expected a JSON object");
  DatasetConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "train") c.train = v.get<std::size_t>();
      else if (k == "val") c.val = v.get<std::size_t>();
      else if (k == "test") c.test = v.get<std::size_t>();
      else if (k == "height") c.height = v.get<std::size_t>();
      else if (k == "width") c.width = v.get<std::size_t>();
      else if (k == "fx") c.fx = v.get<double>();
      else if (k == "fy") c.fy = v.get<double>();
      else if (k == "distance_min") c.distance_min = v.get<double>();
      else if (k == "distance_max") c.distance_max = v.get<double>();
      else if (k == "yaw_jitter_deg") c.yaw_jitter_deg = v.get<double>();
      else if (k == "cam_height_min") c.cam_height_min = v.get<double>();
      else if (k == "cam_height_max") c.cam_height_max = v.get<double>();
      else if (k == "lane_half_width") c.lane_half_width = v.get<double>();
      else if (k == "brightness_jitter") c.brightness_jitter = v.get<float>();
      else if (k == "scenes") c.scenes = v.get<std::vector<std::string>>();
      else throw ConfigError("dataset config: unknown key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string dataset_config_to_json(const DatasetConfig& c) {
  json j = {{"train", c.train},
            {"val", c.val},
            {"test", c.test},
            {"height", c.height},
            {"width", c.width},
            {"fx", c.fx},
            {"fy", c.fy},
            {"distance_min", c.distance_min},
            {"distance_max", c.distance_max},
            {"yaw_jitter_deg", c.yaw_jitter_deg},
            {"cam_height_min", c.cam_height_min},
            {"cam_height_max", c.cam_height_max},
            {"lane_half_width", c.lane_half_width},
            {"brightness_jitter", c.brightness_jitter},
            {"scenes", c.scenes}};
  return j.dump(2);
}

CameraPose sample_camera(const DatasetConfig& cfg, const SceneLayout& layout, std::uint64_t seed,
                         const std::string& split, std::size_t index, float* brightness,
                         std::uint64_t* texture_seed) {
  RngStream rng(seed, "dataset/" + split, index);
  const double dist = rng.uniform(static_cast<float>(cfg.distance_min), static_cast<float>(cfg.distance_max));
  const double lane_x = rng.uniform(static_cast<float>(-cfg.lane_half_width), static_cast<float>(cfg.lane_half_width));
  const double h = rng.uniform(static_cast<float>(cfg.cam_height_min), static_cast<float>(cfg.cam_height_max));
  const double jitter = rng.uniform(static_cast<float>(-cfg.yaw_jitter_deg), static_cast<float>(cfg.yaw_jitter_deg)) *
                        std::numbers::pi / 180.0;
  const float b = 1.f + rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter);
  const std::uint64_t tex = rng.integer(0, std::numeric_limits<std::uint64_t>::max() >> 1);

  const Vec3 bc = layout.billboard.center;
  double dx = lane_x - bc.x;
  if (std::abs(dx) > 0.85 * dist) dx = std::copysign(0.85 * dist, dx);
  const double dz = -std::sqrt(dist * dist - dx * dx);
  const Vec3 pos{bc.x + dx, h, bc.z + dz};
  const double yaw = std::atan2(bc.x - pos.x, bc.z - pos.z) + jitter;
  if (brightness) *brightness = b;
  if (texture_seed) *texture_seed = tex;
  return CameraPose::looking(pos, yaw, 0.0, cfg.fx, cfg.fy, static_cast<double>(cfg.width) / 2.0,
                             static_cast<double>(cfg.height) / 2.0);
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

json camera_json(const CameraPose& c) {
  json R = json::array();
  for (int i = 0; i < 3; ++i) R.push_back({c.rotation(i, 0), c.rotation(i, 1), c.rotation(i, 2)});
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"R", R},
          {"t", {c.translation.x, c.translation.y, c.translation.z}}};
}

CameraPose camera_from_json(const json& j) {
  CameraPose c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.rotation(i, k) = j.at("R").at(i).at(k).get<double>();
  const auto& t = j.at("t");
  c.translation = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
  return c;
}

}  // namespace

std::string manifest_line(const ManifestEntry& e) {
  json qw = json::array();
  for (const Vec3& p : e.billboard_quad_world) qw.push_back({p.x, p.y, p.z});
  json qi = nullptr;
  if (e.billboard_quad_image) {
    qi = json::array();
    for (const Vec2& p : *e.billboard_quad_image) qi.push_back({p.x, p.y});
  }
  json j = {{"index", e.index},
            {"split", e.split},
            {"scene", e.scene},
            {"image_path", e.image_path},
            {"label_path", e.label_path},
            {"camera", camera_json(e.camera)},
            {"billboard_quad_world", qw},
            {"billboard_quad_image", qi},
            {"brightness", e.brightness},
            {"texture_seed", e.texture_seed}};
  return j.dump();
}

ManifestEntry parse_manifest_line(const std::string& line) {
  ManifestEntry e;
  try {
    const json j = json::parse(line);
    e.index = j.at("index").get<std::size_t>();
    e.split = j.at("split").get<std::string>();
    e.scene = j.at("scene").get<std::string>();
    e.image_path = j.at("image_path").get<std::string>();
    e.label_path = j.at("label_path").get<std::string>();
    e.camera = camera_from_json(j.at("camera"));
    for (int k = 0; k < 4; ++k) {
      const auto& p = j.at("billboard_quad_world").at(k);
      e.billboard_quad_world[k] = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
    }
    if (!j.at("billboard_quad_image").is_null()) {
      std::array<Vec2, 4> q{};
      for (int k = 0; k < 4; ++k) {
        const auto& p = j.at("billboard_quad_image").at(k);
        q[k] = {p.at(0).get<double>(), p.at(1).get<double>()};
      }
      e.billboard_quad_image = q;
    }
    e.brightness = j.value("brightness", 1.f);
    e.texture_seed = j.value("texture_seed", std::uint64_t{0});
  } catch (const json::exception& ex) {
    throw FormatError(std::string("manifest: ") + ex.what());
  }
  return e;
}

Dataset generate_dataset(const DatasetConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "labels", ec);
  if (!fs::is_directory(out_dir / "images") || !fs::is_directory(out_dir / "labels")) {
    throw IoError("cannot create dataset directories under '" + out_dir.string() + "'");
  }
  std::vector<SceneLayout> layouts;
  for (const auto& id : cfg.scenes) layouts.push_back(canonical_scene(id));

  Dataset ds;
  ds.root = out_dir;
  std::string manifest;
  const std::pair<const char*, std::size_t> splits[] = {{"train", cfg.train}, {"val", cfg.val}, {"test", cfg.test}};
  for (const auto& [split, count] : splits) {
    for (std::size_t i = 0; i < count; ++i) {
      const SceneLayout& layout = layouts[i % layouts.size()];
      ManifestEntry e;
      e.index = i;
      e.split = split;
      e.scene = layout.id;
      e.camera = sample_camera(cfg, layout, seed, split, i, &e.brightness, &e.texture_seed);
      RenderOptions ro;
      ro.height = cfg.height;
      ro.width = cfg.width;
      ro.brightness = e.brightness;
      ro.texture_seed = e.texture_seed;
      const SceneSample s = render_scene(layout, e.camera, ro);
      char name[64];
      std::snprintf(name, sizeof name, "%s_%04zu", split, i);
      e.image_path = std::string("images/") + name + ".ppm";
      e.label_path = std::string("labels/") + name + ".pgm";
      e.billboard_quad_world = s.billboard_quad_world;
      e.billboard_quad_image = s.billboard_quad_image;
      io::save_ppm(out_dir / e.image_path, s.image);
      io::save_pgm(out_dir / e.label_path, s.labels);
      manifest += manifest_line(e);
      manifest += '\n';
      ds.entries.push_back(std::move(e));
    }
  }
  io::write_file_atomic(out_dir / "manifest.jsonl", manifest);
  return ds;
}

Dataset load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw IoError("cannot open manifest '" + manifest_path.string() + "'");
  Dataset ds;
  ds.root = manifest_path.parent_path();
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ds.entries.push_back(parse_manifest_line(line));
  }
  if (ds.entries.empty()) throw DataError("manifest '" + manifest_path.string() + "' has no samples");
  return ds;
}

std::vector<SceneSample> load_samples(const Dataset& ds, const std::string& split, const std::string& scene) {
  std::vector<SceneSample> out;
  for (const ManifestEntry& e : ds.entries) {
    if (!split.empty() && e.split != split) continue;
    if (!scene.empty() && e.scene != scene) continue;
    SceneSample s;
    s.scene = e.scene;
    s.split = e.split;
    s.index = e.index;
    s.image = io::load_ppm(ds.root / e.image_path);
    s.labels = io::load_pgm(ds.root / e.label_path);
    if (s.labels.height != s.image.dim(1) || s.labels.width != s.image.dim(2)) {
      throw DataError("sample " + e.image_path + ": label and image dims differ");
    }
    s.camera = e.camera;
    s.billboard_quad_world = e.billboard_quad_world;
    s.billboard_quad_image = e.billboard_quad_image;
    s.brightness = e.brightness;
    s.texture_seed = e.texture_seed;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rwpatch
