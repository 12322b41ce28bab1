#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "clothret/camera.hpp"
#include "clothret/dataset.hpp"
#include "clothret/mesh.hpp"

namespace clothret {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kTrunkWidths[] = {512, 512, 256};
inline constexpr int kDeformHidden = 512;
inline constexpr int kCameraHidden = 64;
inline constexpr int kCameraOutputs = 6;
inline constexpr double kLayerNormEpsilon = 1e-5;

/// Parameter blocks that can be updated independently.
enum class ParamGroup { Trunk, DeformHead, CameraHead };

/// Dense layer y = W x + b with W stored row-major (out x in).
struct DenseSlot {
  int in;
  int out;
  std::size_t weight;  // offset of W in the flat vector
  std::size_t bias;
};

/// Layer normalization y = gamma * (x - mean) / sqrt(var + eps) + beta.
struct NormSlot {
  int width;
  std::size_t gain;
  std::size_t shift;
};

/// Layout of every parameter in one flat vector, in declaration order:
/// trunk (dense, norm) x 3, deformation head (dense x 2), camera head
/// (dense x 2). Each group occupies a contiguous range.
struct ModelLayout {
  int cloth_vertices = 0;
  int body_points = 0;
  std::vector<DenseSlot> dense;  // 0-2 trunk, 3-4 deformation, 5-6 camera
  std::vector<NormSlot> norm;    // 0-2 trunk
  std::size_t size = 0;

  ModelLayout(int cloth_vertices, int body_points);
  int input_size() const { return 3 * body_points; }
  int deform_size() const { return 3 * cloth_vertices; }
  std::pair<std::size_t, std::size_t> range(ParamGroup g) const;
  /// Human-readable name of the tensor holding flat index i, e.g. "trunk.dense1.W".
  std::string describe(std::size_t i) const;
};

struct ModelParams {
  ModelLayout layout;
  Eigen::VectorXd values;

  explicit ModelParams(const ModelLayout& l) : layout(l), values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(l.size))) {}

  Eigen::Map<const RowMatrix> weight(int dense) const;
  Eigen::Map<RowMatrix> weight(int dense);
  Eigen::Map<const Eigen::VectorXd> bias(int dense) const;
  Eigen::Map<Eigen::VectorXd> bias(int dense);
  Eigen::Map<const Eigen::VectorXd> gain(int norm) const;
  Eigen::Map<const Eigen::VectorXd> shift(int norm) const;

  /// Throws Error naming the first tensor with a non-finite entry.
  void check_finite(const std::string& what) const;

  bool operator==(const ModelParams& o) const { return values.size() == o.values.size() && values == o.values; }
};

/// Fan-in scaled uniform initialization: hidden layers draw from
/// U(-sqrt(6/fan_in), sqrt(6/fan_in)); output layers from a tenth of
/// U(-sqrt(3/fan_in), sqrt(3/fan_in)) so initial predictions stay small.
/// Norm gains are one; biases zero except the camera output, which starts
/// at t = (0.5, 0.5) and k = 0.5.
ModelParams initialize(int cloth_vertices, int body_points, std::uint64_t seed);

/// Input encoding: (x, y, visibility) per body point, zeros when invisible.
Eigen::VectorXd encode_input(const BodyPointMap& s);

double softplus(double z);
double softplus_inverse(double k);

/// Per-batch activations retained for the backward pass.
struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> normalized;  // trunk x-hat per layer
  std::vector<Eigen::VectorXd> inv_std;     // trunk 1/sigma per column, per layer
  std::vector<Eigen::MatrixXd> trunk_out;   // post-activation per trunk layer
  Eigen::MatrixXd deform_hidden;
  Eigen::MatrixXd camera_hidden;
  Eigen::MatrixXd camera_raw;
};

/// Batched outputs, one column per sample.
struct Prediction {
  Eigen::MatrixXd deformation;  // 3M x B, vertex-major (x, y, z)
  Eigen::MatrixXd camera;       // 6 x B: euler1..3, tx, ty, k (k > 0)
  ForwardCache cache;

  int batch() const { return static_cast<int>(deformation.cols()); }
  DeformationField deformation_field(int b) const;
  Camera camera_of(int b) const;
};

/// Forward pass on columns of encoded inputs.
Prediction forward(const ModelParams& params, const Eigen::MatrixXd& inputs);
/// Single-sample convenience form.
std::pair<DeformationField, Camera> forward(const ModelParams& params, const BodyPointMap& s);

/// Upstream gradients with respect to the outputs (same shapes as Prediction).
struct OutputGradient {
  Eigen::MatrixXd deformation;
  Eigen::MatrixXd camera;  // with respect to (euler, t, k) after the positivity map
};

/// Reverse pass. Returns the flat gradient; throws Error naming the layer if
/// any gradient entry is non-finite. With include_trunk = false the trunk
/// block of the result is left at zero (used when the trunk is frozen).
Eigen::VectorXd backward(const ModelParams& params, const Prediction& pred, const OutputGradient& grad,
                         bool include_trunk = true);

/// Relative weights of the two supervised residuals (both 1 by default).
struct SupervisedWeights {
  double deformation = 1.0;
  double camera = 1.0;
};

/// Value of L_s for the batch and its output gradient.
struct LossValue {
  double value = 0.0;
  OutputGradient grad;
};

/// Mean over the batch of |dM - dM*|^2 + |wrap(e - e*)|^2 + |t - t*|^2 + (k - k*)^2.
/// Throws Error if any sample lacks labels (pseudo-real labels are sealed).
LossValue supervised_loss(const Prediction& pred, const std::vector<const SampleTuple*>& batch,
                          const SupervisedWeights& w = {});
double loss_supervised(const ModelParams& params, const std::vector<SampleTuple>& batch,
                       const SupervisedWeights& w = {});

Eigen::MatrixXd encode_batch(const std::vector<const SampleTuple*>& batch);

struct TrainConfig {
  int epochs = 60;
  double learning_rate = 1e-3;
  int batch_size = 32;
  std::uint64_t seed = 1;
  AugmentConfig augment;
  SupervisedWeights weights;
  double divergence_threshold = 1e6;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_curve;  // one entry per SGD step
};

using ProgressSink = std::function<void(const std::string&)>;

/// Shuffled, augmented mini-batches over a subset of a dataset. A new
/// permutation is drawn whenever an epoch is exhausted. Shuffling and
/// augmentation use independent streams derived from the seed.
class BatchStream {
 public:
  BatchStream(const Dataset& data, std::vector<int> indices, int batch_size, const AugmentConfig& augment,
              std::uint64_t seed);

  std::vector<SampleTuple> next();
  /// Completed passes over the indices.
  int epoch() const { return epoch_; }
  int batches_per_epoch() const;

 private:
  const Dataset* data_;
  const ClothTemplate* tmpl_;
  std::vector<int> perm_;
  int batch_size_;
  AugmentConfig augment_;
  Rng order_;
  Rng aug_rng_;
  std::size_t cursor_ = 0;
  int epoch_ = -1;
};

std::vector<const SampleTuple*> pointers(const std::vector<SampleTuple>& batch);

/// One plain SGD step on L_s; returns the batch loss before the update.
/// Throws Error with diagnostics when the loss is non-finite or above
/// cfg.divergence_threshold.
double supervised_step(ModelParams& params, const std::vector<SampleTuple>& batch, const TrainConfig& cfg,
                       std::size_t step);

/// Plain SGD on L_s over the given records (all synthetic), shuffled each
/// epoch and augmented on the fly. Deterministic for a fixed seed.
TrainResult train_supervised(ModelParams params, const Dataset& data, const std::vector<int>& indices,
                             const TrainConfig& cfg, const ProgressSink& log = {});

/// CRWT weights file: magic, version, M, M_s, layer count, per-layer
/// (kind, rows, cols), then every tensor as row-major little-endian f64 in
/// declaration order. Garment id is stored so evaluation can refuse mismatches.
void save_weights(const ModelParams& params, GarmentKind garment, const std::filesystem::path& path);
std::pair<ModelParams, GarmentKind> load_weights(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_weights(const ModelParams& params, GarmentKind garment);
std::pair<ModelParams, GarmentKind> deserialize_weights(std::vector<std::uint8_t> bytes, const std::string& name);

}  // namespace clothret
