#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tgcfa/common.hpp"
#include "tgcfa/tensor_io.hpp"

namespace tgcfa::synthdom {

using tensor_io::ImageF;

enum class ShapeKind { kEllipse, kRoundedRect, kBlob };

std::string to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& s);

struct Shape {
  int label = 0;
  ShapeKind kind = ShapeKind::kEllipse;
  double center_y = 0, center_x = 0;  // pixels
  double axis_y = 0, axis_x = 0;      // half-extents, pixels
  double rotation = 0;                // radians
  std::vector<double> harmonics;      // blob radius modulation: (amplitude, phase) pairs, k=2..

  bool contains(double y, double x) const;
  // Radius of the bounding circle around the center.
  double extent() const;
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  int num_labels = 5;
  std::vector<Shape> shapes;  // painted in order; later shapes occlude earlier ones
  std::uint64_t seed = 0;

  // Label map and, optionally, the index of the shape owning each pixel (-1
  // for background).
  LabelMap rasterize(LabelMap* owner = nullptr) const;
};

// Placement prior for one label. Ranges are fractions of the canvas.
struct ShapePrior {
  int label = 1;
  ShapeKind kind = ShapeKind::kEllipse;
  double center_y_min = 0.3, center_y_max = 0.7;
  double center_x_min = 0.3, center_x_max = 0.7;
  double axis_y_min = 0.05, axis_y_max = 0.1;
  double axis_x_min = 0.05, axis_x_max = 0.1;
  double max_rotation = 0.5;  // radians, symmetric
  int min_count = 1;
  int max_count = 1;
};

struct SceneConfig {
  int height = 64;
  int width = 64;
  int num_labels = 5;
  std::vector<ShapePrior> priors;
  int max_retries = 64;

  // Abdomen-like layout: a large blob (label 1), two small ellipses (labels 2
  // and 3, mirrored) and a rounded rectangle (label 4).
  static SceneConfig abdominal();
  void validate() const;
};

SceneSpec generate_scene(const SceneConfig& config, std::uint64_t seed);

struct IntensityProfile {
  double mean = 0.5;
  double std = 0.0;  // per-object variability of the fill value
};

struct DomainStyle {
  std::string name;
  std::vector<IntensityProfile> intensity;  // one per label
  double noise_amplitude = 0.0;
  int smoothing_radius = 0;
  double confounder_density = 0.0;  // expected distractors per image
  IntensityProfile confounder_intensity{0.5, 0.0};
  double confounder_min_axis = 1.5;
  double confounder_max_axis = 4.0;
  double bias_field = 0.0;  // amplitude of the low-frequency multiplicative field

  void validate(int num_labels) const;

  // Bright organs on a dark background with dense organ-like distractors.
  static DomainStyle style_a();
  // Reordered organ intensities on a brighter background, heterogeneous
  // texture, strong bias field and few distractors.
  static DomainStyle style_b();
};

struct SampleRecord {
  ImageF image;  // H x W in [0, 1]
  LabelMap labels;
  std::string domain_name;
  std::uint64_t scene_seed = 0;
  int confounder_count = 0;
};

SampleRecord render(const SceneSpec& scene, const DomainStyle& style, std::uint64_t seed);

// Render seed used by build_dataset for (scene, style).
std::uint64_t render_seed(std::uint64_t scene_seed, const std::string& style_name);

struct DatasetConfig {
  int n_train = 160;
  int n_val = 32;
  int n_test_per_domain = 48;
  SceneConfig scene = SceneConfig::abdominal();
  DomainStyle source = DomainStyle::style_a();
  std::vector<DomainStyle> targets = {DomainStyle::style_b()};
  std::uint64_t seed = 0;

  void validate() const;
};

DatasetConfig dataset_config_from_json(const std::string& json_text);
std::string dataset_config_to_json(const DatasetConfig& config);

struct ManifestRow {
  std::string split;  // train | val | test
  std::string domain;
  std::uint64_t scene_seed = 0;
  std::string image_path;  // relative to the dataset root
  std::string label_path;
};

// Writes <out>/dataset.json, <out>/manifest.tsv and the tensor files.
// Returns the manifest rows in file order.
std::vector<ManifestRow> build_dataset(const DatasetConfig& config, const std::string& out_dir);

std::vector<ManifestRow> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);

// Observer notified with every dataset file path a Dataset opens.
using AccessHook = std::function<void(const std::string& path, const ManifestRow& row)>;

// Read access to a generated dataset.
class Dataset {
 public:
  explicit Dataset(std::string root);

  const std::string& root() const { return root_; }
  const std::vector<ManifestRow>& rows() const { return rows_; }
  const DatasetConfig& config() const { return config_; }
  std::string source_domain() const { return config_.source.name; }
  std::vector<std::string> test_domains() const;

  // Throws ValidationError when the manifest breaks single-source hygiene:
  // train/val rows outside the source domain, train/val files outside their
  // split directories, or scene seeds shared between train/val and test.
  void check_hygiene() const;

  std::vector<const ManifestRow*> select(const std::string& split, const std::string& domain) const;
  SampleRecord load(const ManifestRow& row) const;

  void set_access_hook(AccessHook hook) { hook_ = std::move(hook); }

 private:
  std::string root_;
  std::vector<ManifestRow> rows_;
  DatasetConfig config_;
  AccessHook hook_;
};

// Training-side view that only serves train and val rows of the source
// domain; any other request is refused.
class TrainingSource {
 public:
  explicit TrainingSource(const Dataset& dataset);

  const std::vector<const ManifestRow*>& train() const { return train_; }
  const std::vector<const ManifestRow*>& val() const { return val_; }
  SampleRecord load(const ManifestRow& row) const;

 private:
  const Dataset& dataset_;
  std::vector<const ManifestRow*> train_;
  std::vector<const ManifestRow*> val_;
};

}  // namespace tgcfa::synthdom
