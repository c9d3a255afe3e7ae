#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "umbra/generator.hpp"
#include "umbra/occfield.hpp"
#include "umbra/shadow.hpp"

namespace umbra {

struct ParseError : std::runtime_error {
  size_t offset = 0;
  ParseError(const std::string& what, size_t offset_)
      : std::runtime_error(what + " at byte " + std::to_string(offset_)),
        offset(offset_) {}
};

struct SchemaVersionMismatch : std::runtime_error {
  int found = 0;
  explicit SchemaVersionMismatch(int found_)
      : std::runtime_error("unsupported schema_version " + std::to_string(found_)),
        found(found_) {}
};

struct DegenerateScene : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ============================ PGM (P5) ============================

// threshold=true stores v > 0.5 as 255 else 0 (bit-exact for binary masks);
// otherwise grey = round(255 * v).
void write_pgm(const std::string& path, const ShadowImage& img, bool threshold = false);
void write_valid_pgm(const std::string& path, const ShadowImage& img);

// Values come back as grey/255 with every pixel valid.
ShadowImage read_pgm(const std::string& path);
void read_valid_pgm(const std::string& path, ShadowImage& img);

// "x.pgm" -> "x.valid.pgm"
std::string valid_companion(const std::string& pgm_path);

// Mask plus validity companion in one call. Reading tolerates a missing
// companion (all pixels valid).
void write_shadow_mask(const std::string& pgm_path, const ShadowImage& img,
                       bool threshold = true);
ShadowImage read_shadow_mask(const std::string& pgm_path);

// ============================ OBJ ============================

void write_obj(const std::string& path, const Mesh& mesh);
Mesh read_obj(const std::string& path);

// ============================ CSV ============================

struct EvalRow {
  std::string method;
  std::string category;
  int scene = 0;
  double iou = 0.0;
};
void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);
std::vector<EvalRow> read_eval_csv(const std::string& path);

struct LossRow {
  int restart = 0;
  int step = 0;
  double loss = 0.0;
};
void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows);
std::vector<LossRow> read_loss_csv(const std::string& path);

// ============================ scene descriptor ============================

struct SceneDescriptor {
  Vec3 camera_position;
  Vec3 camera_target;
  Vec3 camera_up{0.0, 0.0, 1.0};
  double focal = 1.0;
  double cu = 0.0, cv = 0.0;
  int width = 0, height = 0;
  Vec3 light_position{0.0, 0.0, 3.0};
  Vec3 plane_normal{0.0, 0.0, 1.0};
  Vec3 plane_point;
  PoseSE3 object_pose = PoseSE3::identity();
  int ray_samples = 128;
  std::string category = "blobs";
  uint64_t generator_seed = 0;
  int latent_dim = 16;
  int primitive_count = 2;
  std::vector<double> gt_latent;        // empty when gt_shape is stored instead
  std::optional<ShapeSpec> gt_shape;    // unposed; object_pose places it
  std::string shadow_file = "shadow.pgm";
  std::string seg_file = "seg.pgm";
  std::string mesh_file = "gt.obj";
};

Scene to_scene(const SceneDescriptor& desc);
GeneratorSpec to_generator(const SceneDescriptor& desc);
ShapeSpec ground_truth_shape(const SceneDescriptor& desc);  // posed

void write_scene_json(const std::string& path, const SceneDescriptor& desc);
// check_files verifies the referenced mask/seg/mesh files exist next to the
// descriptor.
SceneDescriptor read_scene_json(const std::string& path, bool check_files = true);

// ============================ dataset ============================

struct DatasetManifest {
  std::string category = "blobs";
  uint64_t seed = 0;
  int count = 0;
  std::vector<std::string> scene_dirs;  // relative to the manifest
  std::vector<int> train, test;         // 80/20 by seeded index hash
};

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

// Writes out_dir/scene_%04d/{scene.json, shadow.pgm, shadow.valid.pgm,
// seg.pgm, gt.obj} and out_dir/manifest.json. Scene i draws from an
// independent stream fork(i), so results do not depend on thread count.
// Throws DegenerateScene when a scene fails the usability checks (shadow
// area within [0.5%, 60%] of the image, not touching the border) ten times.
DatasetManifest generate_dataset(const std::string& out_dir, int n,
                                 const std::string& category, uint64_t seed,
                                 int threads = 1);

struct LoadedScene {
  SceneDescriptor desc;
  Scene scene;
  ShadowImage shadow;  // binary, with validity
  ShapeSpec gt;        // posed
};
LoadedScene load_scene_dir(const std::string& dir);

}  // namespace umbra
