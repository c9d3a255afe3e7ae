#include "umbra/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "umbra/mathutil.hpp"
#include "umbra/parallel.hpp"
#include "umbra/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace umbra {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(data.data(), std::streamsize(data.size()));
  if (!out) throw IoError("short write to " + path);
}

size_t skip_pgm_space(const std::string& s, size_t pos) {
  for (;;) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos < s.size() && s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else {
      return pos;
    }
  }
}

long parse_pgm_int(const std::string& s, size_t& pos) {
  pos = skip_pgm_space(s, pos);
  if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos])))
    throw ParseError("expected integer in PGM header", pos);
  long value = 0;
  int digits = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    if (++digits > 9) throw ParseError("oversized integer in PGM header", pos);
    value = value * 10 + (s[pos] - '0');
    ++pos;
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ============================ PGM ============================

void write_pgm(const std::string& path, const ShadowImage& img, bool threshold) {
  if (img.width <= 0 || img.height <= 0)
    throw std::invalid_argument("write_pgm: empty image");
  std::string out = "P5\n" + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.values.size());
  for (double v : img.values) {
    int g;
    if (threshold) {
      g = v > 0.5 ? 255 : 0;
    } else {
      g = int(std::lround(v * 255.0));
      g = std::clamp(g, 0, 255);
    }
    out.push_back(char(uint8_t(g)));
  }
  write_file(path, out);
}

void write_valid_pgm(const std::string& path, const ShadowImage& img) {
  ShadowImage mask(img.width, img.height);
  for (size_t k = 0; k < img.valid.size(); ++k) mask.values[k] = img.valid[k] ? 1.0 : 0.0;
  write_pgm(path, mask, true);
}

ShadowImage read_pgm(const std::string& path) {
  const std::string s = read_file(path);
  if (s.size() < 2 || s[0] != 'P' || s[1] != '5')
    throw ParseError(path + ": not a binary PGM (P5)", 0);
  size_t pos = 2;
  const long w = parse_pgm_int(s, pos);
  const long h = parse_pgm_int(s, pos);
  const size_t maxval_pos = skip_pgm_space(s, pos);
  pos = maxval_pos;
  const long maxval = parse_pgm_int(s, pos);
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16)
    throw ParseError(path + ": bad PGM size", 2);
  if (maxval != 255) throw ParseError(path + ": unsupported PGM maxval", maxval_pos);
  if (pos >= s.size() || !std::isspace(static_cast<unsigned char>(s[pos])))
    throw ParseError(path + ": expected whitespace before raster", pos);
  ++pos;
  const size_t need = size_t(w) * size_t(h);
  if (s.size() - pos < need)
    throw ParseError(path + ": truncated PGM raster", s.size());
  ShadowImage img{int(w), int(h)};
  for (size_t k = 0; k < need; ++k)
    img.values[k] = double(uint8_t(s[pos + k])) / 255.0;
  return img;
}

void read_valid_pgm(const std::string& path, ShadowImage& img) {
  const ShadowImage mask = read_pgm(path);
  if (mask.width != img.width || mask.height != img.height)
    throw ParseError(path + ": validity mask size differs from image", 0);
  for (size_t k = 0; k < img.valid.size(); ++k)
    img.valid[k] = mask.values[k] > 0.5 ? 1 : 0;
}

std::string valid_companion(const std::string& pgm_path) {
  const std::string suffix = ".pgm";
  if (pgm_path.size() > suffix.size() &&
      pgm_path.compare(pgm_path.size() - suffix.size(), suffix.size(), suffix) == 0)
    return pgm_path.substr(0, pgm_path.size() - suffix.size()) + ".valid.pgm";
  return pgm_path + ".valid.pgm";
}

void write_shadow_mask(const std::string& pgm_path, const ShadowImage& img,
                       bool threshold) {
  write_pgm(pgm_path, img, threshold);
  write_valid_pgm(valid_companion(pgm_path), img);
}

ShadowImage read_shadow_mask(const std::string& pgm_path) {
  ShadowImage img = read_pgm(pgm_path);
  const std::string companion = valid_companion(pgm_path);
  if (fs::exists(companion)) read_valid_pgm(companion, img);
  return img;
}

// ============================ OBJ ============================

void write_obj(const std::string& path, const Mesh& mesh) {
  std::string out;
  out.reserve(mesh.vertices.size() * 64 + mesh.faces.size() * 24);
  char buf[160];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    out += buf;
  }
  for (const auto& f : mesh.faces) {
    std::snprintf(buf, sizeof buf, "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
    out += buf;
  }
  write_file(path, out);
}

Mesh read_obj(const std::string& path) {
  const std::string s = read_file(path);
  Mesh mesh;
  size_t pos = 0;
  while (pos < s.size()) {
    size_t eol = s.find('\n', pos);
    if (eol == std::string::npos) eol = s.size();
    std::string line = s.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t line_start = pos;
    pos = eol + 1;
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == 'v' && line.size() > 1 && line[1] == ' ') {
      double x, y, z;
      int used = 0;
      if (std::sscanf(line.c_str(), "v %lf %lf %lf %n", &x, &y, &z, &used) != 3 ||
          line.find_first_not_of(" \t", size_t(used)) != std::string::npos)
        throw ParseError(path + ": malformed vertex record", line_start);
      mesh.vertices.push_back({x, y, z});
    } else if (line[0] == 'f' && line.size() > 1 && line[1] == ' ') {
      int a, b, c;
      int used = 0;
      if (std::sscanf(line.c_str(), "f %d %d %d %n", &a, &b, &c, &used) != 3 ||
          line.find_first_not_of(" \t", size_t(used)) != std::string::npos)
        throw ParseError(path + ": malformed face record", line_start);
      mesh.faces.push_back({a - 1, b - 1, c - 1});
    } else {
      throw ParseError(path + ": unexpected OBJ record", line_start);
    }
  }
  const int nv = int(mesh.vertices.size());
  for (const auto& f : mesh.faces)
    for (int k = 0; k < 3; ++k)
      if (f[k] < 0 || f[k] >= nv)
        throw ParseError(path + ": face index out of range", s.size());
  return mesh;
}

// ============================ CSV ============================

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    const size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               const std::string& header,
                                               size_t fields) {
  const std::string s = read_file(path);
  std::vector<std::vector<std::string>> rows;
  size_t pos = 0;
  bool saw_header = false;
  while (pos < s.size()) {
    size_t eol = s.find('\n', pos);
    if (eol == std::string::npos) eol = s.size();
    std::string line = s.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t line_start = pos;
    pos = eol + 1;
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != header)
        throw ParseError(path + ": expected header '" + header + "'", line_start);
      saw_header = true;
      continue;
    }
    auto cells = split_csv_line(line);
    if (cells.size() != fields)
      throw ParseError(path + ": wrong field count", line_start);
    rows.push_back(std::move(cells));
  }
  if (!saw_header) throw ParseError(path + ": empty CSV", 0);
  return rows;
}

double parse_csv_double(const std::string& cell, const std::string& path) {
  try {
    size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ": bad numeric field '" + cell + "'", 0);
  }
}

int parse_csv_int(const std::string& cell, const std::string& path) {
  try {
    size_t used = 0;
    const int v = std::stoi(cell, &used);
    if (used != cell.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ": bad integer field '" + cell + "'", 0);
  }
}

}  // namespace

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::string out = "method,category,scene,iou\n";
  for (const auto& r : rows)
    out += r.method + "," + r.category + "," + std::to_string(r.scene) + "," +
           format_double(r.iou) + "\n";
  write_file(path, out);
}

std::vector<EvalRow> read_eval_csv(const std::string& path) {
  std::vector<EvalRow> rows;
  for (const auto& cells : read_csv(path, "method,category,scene,iou", 4)) {
    EvalRow r;
    r.method = cells[0];
    r.category = cells[1];
    r.scene = parse_csv_int(cells[2], path);
    r.iou = parse_csv_double(cells[3], path);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows) {
  std::string out = "restart,step,loss\n";
  for (const auto& r : rows)
    out += std::to_string(r.restart) + "," + std::to_string(r.step) + "," +
           format_double(r.loss) + "\n";
  write_file(path, out);
}

std::vector<LossRow> read_loss_csv(const std::string& path) {
  std::vector<LossRow> rows;
  for (const auto& cells : read_csv(path, "restart,step,loss", 3)) {
    LossRow r;
    r.restart = parse_csv_int(cells[0], path);
    r.step = parse_csv_int(cells[1], path);
    r.loss = parse_csv_double(cells[2], path);
    rows.push_back(r);
  }
  return rows;
}

// ============================ scene descriptor ============================

namespace {

json jvec(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const json& a) {
  if (!a.is_array() || a.size() != 3)
    throw ParseError("expected a 3-vector", 0);
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

json shape_to_json(const ShapeSpec& s) {
  json prims = json::array();
  for (const auto& p : s.primitives) {
    json jp{{"kind", p.kind == Primitive::Kind::kBox ? "box" : "ellipsoid"},
            {"center", jvec(p.center)},
            {"half_extents", jvec(p.half_extents)}};
    if (p.kind == Primitive::Kind::kBox) jp["exponent"] = p.box_exponent;
    prims.push_back(std::move(jp));
  }
  return json{{"sharpness", s.sharpness}, {"primitives", std::move(prims)}};
}

ShapeSpec shape_from_json(const json& j) {
  ShapeSpec s;
  s.sharpness = j.at("sharpness").get<double>();
  for (const auto& jp : j.at("primitives")) {
    Primitive p;
    const std::string kind = jp.at("kind").get<std::string>();
    if (kind == "box")
      p.kind = Primitive::Kind::kBox;
    else if (kind == "ellipsoid")
      p.kind = Primitive::Kind::kEllipsoid;
    else
      throw ParseError("unknown primitive kind '" + kind + "'", 0);
    p.center = vec_from(jp.at("center"));
    p.half_extents = vec_from(jp.at("half_extents"));
    if (p.kind == Primitive::Kind::kBox) p.box_exponent = jp.at("exponent").get<double>();
    s.primitives.push_back(p);
  }
  return s;
}

}  // namespace

Scene to_scene(const SceneDescriptor& d) {
  Scene scene;
  CameraModel cam = CameraModel::look_at(d.camera_position, d.camera_target,
                                         d.camera_up, d.focal, d.width, d.height);
  if (d.cu != cam.cu || d.cv != cam.cv)
    cam = CameraModel(d.focal, d.cu, d.cv, cam.R, cam.t, d.width, d.height);
  scene.camera = cam;
  scene.plane = Plane(d.plane_normal, d.plane_point);
  scene.light = LightSource{d.light_position};
  scene.object_pose = d.object_pose;
  scene.ray_samples = d.ray_samples;
  return scene;
}

GeneratorSpec to_generator(const SceneDescriptor& d) {
  GeneratorSpec gen = make_generator(d.category, d.generator_seed);
  if (gen.latent_dim != d.latent_dim || gen.primitive_count != d.primitive_count)
    throw DimensionMismatch("stored generator dimensions disagree with category '" +
                            d.category + "'");
  return gen;
}

ShapeSpec ground_truth_shape(const SceneDescriptor& d) {
  ShapeSpec shape;
  if (d.gt_shape) {
    shape = *d.gt_shape;
  } else if (!d.gt_latent.empty()) {
    shape = decode(to_generator(d), d.gt_latent);
  } else {
    throw std::invalid_argument("scene descriptor stores no ground truth");
  }
  shape.pose = d.object_pose;
  return shape;
}

void write_scene_json(const std::string& path, const SceneDescriptor& d) {
  json j;
  j["schema_version"] = 1;
  j["camera"] = {{"position", jvec(d.camera_position)},
                 {"target", jvec(d.camera_target)},
                 {"up", jvec(d.camera_up)},
                 {"f", d.focal},
                 {"cu", d.cu},
                 {"cv", d.cv},
                 {"width", d.width},
                 {"height", d.height}};
  j["light"] = {{"position", jvec(d.light_position)}};
  j["plane"] = {{"normal", jvec(d.plane_normal)}, {"point", jvec(d.plane_point)}};
  j["object_pose"] = {{"translation", jvec(d.object_pose.translation)},
                      {"rotation",
                       {d.object_pose.rotation.x, d.object_pose.rotation.y,
                        d.object_pose.rotation.z, d.object_pose.rotation.w}}};
  j["ray_samples"] = d.ray_samples;
  j["generator"] = {{"category", d.category},
                    {"seed", d.generator_seed},
                    {"latent_dim", d.latent_dim},
                    {"primitive_count", d.primitive_count}};
  if (!d.gt_latent.empty()) j["gt_latent"] = d.gt_latent;
  if (d.gt_shape) j["gt_shape"] = shape_to_json(*d.gt_shape);
  j["files"] = {{"shadow", d.shadow_file}, {"seg", d.seg_file}, {"mesh", d.mesh_file}};
  write_file(path, j.dump(2) + "\n");
}

SceneDescriptor read_scene_json(const std::string& path, bool check_files) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), e.byte);
  }
  if (!j.is_object() || !j.contains("schema_version") ||
      !j["schema_version"].is_number_integer())
    throw ParseError(path + ": missing schema_version", 0);
  const int sv = j["schema_version"].get<int>();
  if (sv != 1) throw SchemaVersionMismatch(sv);

  SceneDescriptor d;
  try {
    const json& cam = j.at("camera");
    d.camera_position = vec_from(cam.at("position"));
    d.camera_target = vec_from(cam.at("target"));
    d.camera_up = vec_from(cam.at("up"));
    d.focal = cam.at("f").get<double>();
    d.cu = cam.at("cu").get<double>();
    d.cv = cam.at("cv").get<double>();
    d.width = cam.at("width").get<int>();
    d.height = cam.at("height").get<int>();
    d.light_position = vec_from(j.at("light").at("position"));
    d.plane_normal = vec_from(j.at("plane").at("normal"));
    d.plane_point = vec_from(j.at("plane").at("point"));
    const json& pose = j.at("object_pose");
    const json& q = pose.at("rotation");
    if (!q.is_array() || q.size() != 4)
      throw ParseError(path + ": rotation must be a quaternion [x,y,z,w]", 0);
    d.object_pose = PoseSE3(vec_from(pose.at("translation")),
                            Quat{q[0].get<double>(), q[1].get<double>(),
                                 q[2].get<double>(), q[3].get<double>()});
    d.ray_samples = j.at("ray_samples").get<int>();
    const json& gen = j.at("generator");
    d.category = gen.at("category").get<std::string>();
    d.generator_seed = gen.at("seed").get<uint64_t>();
    d.latent_dim = gen.at("latent_dim").get<int>();
    d.primitive_count = gen.at("primitive_count").get<int>();
    if (j.contains("gt_latent")) d.gt_latent = j["gt_latent"].get<std::vector<double>>();
    if (j.contains("gt_shape")) d.gt_shape = shape_from_json(j["gt_shape"]);
    const json& files = j.at("files");
    d.shadow_file = files.at("shadow").get<std::string>();
    d.seg_file = files.at("seg").get<std::string>();
    d.mesh_file = files.at("mesh").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  if (d.width <= 0 || d.height <= 0 || d.focal <= 0.0)
    throw ParseError(path + ": bad camera geometry", 0);
  if (d.ray_samples < 1) throw ParseError(path + ": ray_samples must be >= 1", 0);

  if (check_files) {
    const fs::path dir = fs::path(path).parent_path();
    for (const std::string& name : {d.shadow_file, d.seg_file, d.mesh_file}) {
      if (!fs::exists(dir / name))
        throw IoError(path + ": referenced file missing: " + name);
    }
  }
  return d;
}

// ============================ dataset ============================

namespace {

constexpr double kLightRadius = 3.0;
constexpr double kCameraRadius = 2.0;
constexpr double kDatasetFocal = 76.8;
constexpr int kImageSize = 128;
// camera elevation floor ~25deg keeps ground sample spacing bounded
constexpr double kCameraMinZ = 0.845;
constexpr double kMinShadowFrac = 0.005;
constexpr double kMaxShadowFrac = 0.60;
constexpr int kMaxAttempts = 10;

uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Primitive make_box(const Vec3& center, const Vec3& half, double exponent = 6.0) {
  Primitive p;
  p.kind = Primitive::Kind::kBox;
  p.center = center;
  p.half_extents = half;
  p.box_exponent = exponent;
  return p;
}

// Hand-built furniture-like ground truths, already resting on z = 0.
ShapeSpec composite_truth(int variant) {
  ShapeSpec s;
  s.sharpness = 20.0;
  switch (variant % 3) {
    case 0:  // table: top slab on four legs
      s.primitives = {make_box({0.0, 0.0, 0.30}, {0.42, 0.30, 0.03}),
                      make_box({0.36, 0.24, 0.135}, {0.035, 0.035, 0.135}),
                      make_box({-0.36, 0.24, 0.135}, {0.035, 0.035, 0.135}),
                      make_box({0.36, -0.24, 0.135}, {0.035, 0.035, 0.135}),
                      make_box({-0.36, -0.24, 0.135}, {0.035, 0.035, 0.135})};
      break;
    case 1:  // chair: seat, back, two side slabs
      s.primitives = {make_box({0.0, 0.0, 0.22}, {0.22, 0.20, 0.03}),
                      make_box({0.20, 0.0, 0.42}, {0.03, 0.20, 0.20}),
                      make_box({0.0, 0.17, 0.095}, {0.20, 0.025, 0.095}),
                      make_box({0.0, -0.17, 0.095}, {0.20, 0.025, 0.095})};
      break;
    default:  // bench: long seat on two end slabs
      s.primitives = {make_box({0.0, 0.0, 0.18}, {0.45, 0.15, 0.03}),
                      make_box({0.38, 0.0, 0.075}, {0.04, 0.14, 0.075}),
                      make_box({-0.38, 0.0, 0.075}, {0.04, 0.14, 0.075})};
      break;
  }
  return s;
}

double top_height(const ShapeSpec& unposed) {
  double top = 0.0;
  for (const auto& p : unposed.primitives)
    top = std::max(top, p.center.z + p.half_extents.z);
  return top;
}

struct BuiltScene {
  SceneDescriptor desc;
  ShadowImage shadow;
  ShadowImage seg;
  Mesh mesh;
};

bool shadow_usable(const ShadowImage& img) {
  long area = 0;
  for (size_t k = 0; k < img.values.size(); ++k)
    if (img.valid[k] && img.values[k] > 0.5) ++area;
  const double frac = double(area) / double(img.values.size());
  if (frac < kMinShadowFrac || frac > kMaxShadowFrac) return false;
  for (int u = 0; u < img.width; ++u)
    if (img.value_at(u, 0) > 0.5 || img.value_at(u, img.height - 1) > 0.5) return false;
  for (int v = 0; v < img.height; ++v)
    if (img.value_at(0, v) > 0.5 || img.value_at(img.width - 1, v) > 0.5) return false;
  return true;
}

BuiltScene build_scene(const GeneratorSpec& gen, const std::string& category,
                       uint64_t dataset_seed, int index) {
  Rng rng = Rng(dataset_seed).fork(uint64_t(index));
  SceneDescriptor d;
  d.category = category;
  d.generator_seed = dataset_seed;
  d.latent_dim = gen.latent_dim;
  d.primitive_count = gen.primitive_count;
  d.width = d.height = kImageSize;
  d.cu = d.cv = (kImageSize - 1) / 2.0;
  d.focal = kDatasetFocal;
  d.camera_target = {0.0, 0.0, 0.0};
  d.camera_up = {0.0, 0.0, 1.0};

  ShapeSpec base;
  if (category == "composite") {
    base = composite_truth(index);
    d.gt_shape = base;
  } else {
    d.gt_latent = sample_latent(rng, gen.latent_dim);
    base = decode(gen, d.gt_latent);
  }
  const double rest = rest_height(base);
  const double light_floor = std::max(1.5, rest + top_height(base) + 0.2);

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const double yaw = rng.uniform(0.0, 2.0 * kPi);
    Vec3 light;
    int guard = 0;
    do {
      light = hemisphere_sample(rng, kLightRadius);
    } while (light.z < light_floor && ++guard < 256);
    Vec3 campos;
    guard = 0;
    do {
      campos = hemisphere_sample(rng, kCameraRadius);
    } while (campos.z < kCameraMinZ && ++guard < 256);
    if (light.z < light_floor || campos.z < kCameraMinZ) continue;

    d.camera_position = campos;
    d.light_position = light;
    d.object_pose = PoseSE3({0.0, 0.0, rest}, Quat::yaw(yaw));

    const Scene scene = to_scene(d);
    ShapeSpec posed = base;
    posed.pose = d.object_pose;
    ShadowImage img = render_shadow(scene, posed);
    if (!shadow_usable(img)) continue;

    BuiltScene out;
    for (double& v : img.values) v = v > 0.5 ? 1.0 : 0.0;
    out.shadow = std::move(img);
    out.seg = render_segmentation(scene, posed);
    out.mesh = extract_mesh(posed, 64);
    out.desc = std::move(d);
    return out;
  }
  throw DegenerateScene("scene " + std::to_string(index) +
                        " still degenerate after " + std::to_string(kMaxAttempts) +
                        " attempts");
}

}  // namespace

void write_manifest(const std::string& path, const DatasetManifest& m) {
  json j;
  j["schema_version"] = 1;
  j["category"] = m.category;
  j["seed"] = m.seed;
  j["count"] = m.count;
  j["scenes"] = m.scene_dirs;
  j["train"] = m.train;
  j["test"] = m.test;
  write_file(path, j.dump(2) + "\n");
}

DatasetManifest read_manifest(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), e.byte);
  }
  if (!j.is_object() || !j.contains("schema_version") ||
      !j["schema_version"].is_number_integer())
    throw ParseError(path + ": missing schema_version", 0);
  const int sv = j["schema_version"].get<int>();
  if (sv != 1) throw SchemaVersionMismatch(sv);
  DatasetManifest m;
  try {
    m.category = j.at("category").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.count = j.at("count").get<int>();
    m.scene_dirs = j.at("scenes").get<std::vector<std::string>>();
    m.train = j.at("train").get<std::vector<int>>();
    m.test = j.at("test").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  if (int(m.scene_dirs.size()) != m.count)
    throw ParseError(path + ": scene list disagrees with count", 0);
  return m;
}

DatasetManifest generate_dataset(const std::string& out_dir, int n,
                                 const std::string& category, uint64_t seed,
                                 int threads) {
  if (n <= 0) throw std::invalid_argument("generate_dataset: n must be positive");
  const GeneratorSpec gen = make_generator(category, seed);
  fs::create_directories(out_dir);

  DatasetManifest m;
  m.category = category;
  m.seed = seed;
  m.count = n;
  m.scene_dirs.resize(size_t(n));

  parallel_for(n, threads, [&](int64_t i) {
    const BuiltScene b = build_scene(gen, category, seed, int(i));
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04d", int(i));
    const std::string dir = out_dir + "/" + name;
    fs::create_directories(dir);
    write_scene_json(dir + "/scene.json", b.desc);
    write_shadow_mask(dir + "/" + b.desc.shadow_file, b.shadow, true);
    write_pgm(dir + "/" + b.desc.seg_file, b.seg, true);
    write_obj(dir + "/" + b.desc.mesh_file, b.mesh);
    m.scene_dirs[size_t(i)] = name;
  });

  std::vector<std::pair<uint64_t, int>> keyed(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    keyed[size_t(i)] = {mix64(seed ^ (uint64_t(i) * 0x9E3779B97F4A7C15ULL)), i};
  std::sort(keyed.begin(), keyed.end());
  const int n_test = n / 5;
  for (int k = 0; k < n; ++k) {
    if (k < n - n_test)
      m.train.push_back(keyed[size_t(k)].second);
    else
      m.test.push_back(keyed[size_t(k)].second);
  }
  std::sort(m.train.begin(), m.train.end());
  std::sort(m.test.begin(), m.test.end());

  write_manifest(out_dir + "/manifest.json", m);
  return m;
}

LoadedScene load_scene_dir(const std::string& dir) {
  LoadedScene out;
  out.desc = read_scene_json(dir + "/scene.json");
  out.scene = to_scene(out.desc);
  out.shadow = read_shadow_mask(dir + "/" + out.desc.shadow_file);
  out.gt = ground_truth_shape(out.desc);
  return out;
}

}  // namespace umbra
