#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clothret/body.hpp"
#include "clothret/camera.hpp"
#include "clothret/cloth_solver.hpp"
#include "clothret/garment.hpp"
#include "clothret/random.hpp"

namespace clothret {

enum class Domain : int { Synthetic = 0, PseudoReal = 1 };

std::string_view domain_name(Domain d);
/// Accepts "synthetic" and "pseudo-real".
Domain parse_domain(std::string_view name);

/// A garment template with its contact map against the canonical body.
struct ClothTemplate {
  GarmentKind kind;
  const Mesh* mesh;
  const std::vector<int>* mirror;
  ContactMap contacts;

  int vertex_count() const { return mesh->vertex_count(); }
};
const ClothTemplate& cloth_template(GarmentKind kind);

/// What the generator knows about a sample. Evaluation code reads it; the
/// training paths only see it through SampleTuple for synthetic records.
struct GroundTruth {
  DeformationField deformation;
  Camera camera;
  BodyConfig body;
  /// Z-buffer visibility of every cloth vertex in the cloth + body scene.
  std::vector<std::uint8_t> cloth_visible;
  /// Body point map before detector noise (equal to s for synthetic data).
  BodyPointMap clean_points;
  double lambda_rigid = 0.0;
  double lambda_laplacian = 0.0;
};

/// One training tuple. Labels are present for synthetic records only.
struct SampleTuple {
  Domain domain = Domain::Synthetic;
  BodyPointMap s;
  Silhouette silhouette;  // may be empty
  std::optional<DeformationField> deformation;
  std::optional<Camera> camera;
  std::optional<BodyConfig> body;
};

struct DatasetRecord {
  BodyPointMap s;
  Silhouette silhouette;
  GroundTruth truth;
};

/// In-memory CRDS dataset. Records share one garment, domain and layout.
class Dataset {
 public:
  Dataset(GarmentKind garment, Domain domain, std::uint64_t seed);

  GarmentKind garment() const { return garment_; }
  Domain domain() const { return domain_; }
  std::uint64_t seed() const { return seed_; }
  int size() const { return static_cast<int>(records_.size()); }
  int cloth_vertices() const;
  int body_points() const { return kBodyVertexCount; }

  void add(DatasetRecord record);
  const DatasetRecord& record(int i) const { return records_.at(static_cast<std::size_t>(i)); }

  /// Training view of record i; pseudo-real labels stay sealed.
  SampleTuple sample(int i) const;
  /// Sealed ground truth of record i, for evaluation code only.
  const GroundTruth& ground_truth(int i) const { return record(i).truth; }

  /// Longest stored silhouette; sets the padded record width on disk.
  int max_silhouette() const;

  std::vector<std::uint8_t> serialize() const;
  static Dataset deserialize(std::vector<std::uint8_t> bytes, const std::string& name = "<memory>");
  void save(const std::filesystem::path& path) const;
  static Dataset load(const std::filesystem::path& path);

 private:
  GarmentKind garment_;
  Domain domain_;
  std::uint64_t seed_;
  std::vector<DatasetRecord> records_;
};

/// Camera sampling ranges: roll about the view axis, azimuth about the body's
/// vertical axis, tilt about the horizontal axis, weak-perspective scale.
struct CameraRanges {
  double roll = 0.2;
  double azimuth = 0.6;
  double tilt = 0.2;
  double k_min = 0.3;
  double k_max = 0.8;
  /// The cloth's projected bounding box may use at most this share of the crop.
  double fill = 0.85;
  /// Uniform jitter of the cloth's projected center around (0.5, 0.5).
  double center_jitter = 0.05;
};

struct GenerateOptions {
  GarmentKind garment = GarmentKind::TShirt;
  Domain domain = Domain::Synthetic;
  int count = 5000;
  std::uint64_t seed = 1;
  SolverSettings solver;
  CameraRanges camera;
  int resolution = kDefaultResolution;
  /// Store the cloth silhouette; defaults to the pseudo-real domain only.
  std::optional<bool> store_silhouette;
  /// Pseudo-real shift: material multipliers drawn log-uniformly in
  /// [material_min, material_max] and Gaussian jitter on visible s points.
  double material_min = 0.5;
  double material_max = 2.0;
  double jitter_sigma = 0.005;
  /// Failed samples above this fraction abort generation.
  double max_skip_rate = 0.01;
};

using LogSink = std::function<void(const std::string&)>;

/// Builds one record from a body configuration and camera.
DatasetRecord simulate_record(const GenerateOptions& opt, const BodyConfig& body, const Camera& cam,
                              double lambda_rigid, double lambda_laplacian, Rng& noise);

/// Camera that frames the posed cloth inside the crop (see CameraRanges).
Camera sample_camera(const Points3& cloth, const CameraRanges& ranges, Rng& rng);

Dataset generate(const GenerateOptions& opt, const LogSink& log = {});
Dataset generate_synthetic(int n, std::uint64_t seed, GarmentKind garment = GarmentKind::TShirt);
Dataset generate_pseudo_real(int n, std::uint64_t seed, GarmentKind garment = GarmentKind::TShirt);

/// Smooth motion: joint angles and shape interpolate between two sampled
/// poses with a smoothstep, the camera is fixed. Domain follows opt.domain.
Dataset generate_sequence(const GenerateOptions& opt, int frames, const LogSink& log = {});

/// Seed-partitioned split of [0, n): a seeded permutation whose first
/// round(n * test_fraction) entries form the test set. Both lists sorted.
struct Split {
  std::vector<int> train;
  std::vector<int> test;
};
Split split_indices(int n, double test_fraction, std::uint64_t seed);

/// Random augmentation: flip about x = 0.5, then rotation by theta and scale
/// about the crop center (0.5, 0.5), then translation.
struct AugmentConfig {
  bool enabled = true;
  double max_rotation = 0.2617993877991494;  // 15 degrees
  double max_translation = 0.05;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double flip_probability = 0.5;
};

struct Augmentation {
  bool flip = false;
  double theta = 0.0;
  double scale = 1.0;
  Vec2 shift = Vec2::Zero();

  bool identity() const { return !flip && theta == 0.0 && scale == 1.0 && shift.isZero(0.0); }
  Vec2 map_point(const Vec2& p) const;
};

Augmentation sample_augmentation(const AugmentConfig& cfg, Rng& rng);

/// Applies the transform to s, the silhouette and the labels. Points that
/// leave the crop become invisible (and zeroed); silhouette points outside
/// the crop are dropped.
SampleTuple augment(const SampleTuple& sample, const Augmentation& aug, const ClothTemplate& tmpl);
Camera augment_camera(const Camera& cam, const Augmentation& aug);

/// Ground-truth 2D cloth points for the reprojection metric.
Points2 truth_points(const GroundTruth& truth, const ClothTemplate& tmpl);

}  // namespace clothret
